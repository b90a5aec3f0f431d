import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import seeds
from varexp_risk import (ComposedFamily, OceFamily, Utility, acceptance_sets, compose_recursive,
                         conditional_dual_check, conditional_oce, conditional_penalty_min, consistency_audit,
                         decompose_acceptance, dual_value, integrated_penalty, oce, pairing, penalty_minimal, rho_t,
                         tree_space)
from varexp_risk.dynamic import conditional_pairing, recursion_residual, uniform_sampler
from varexp_risk.errors import ContractViolation, InfeasibleDensity, LevelError, ValidationError
from varexp_risk.space import random_space

LEAVES = np.array([0.0, 1.0, 2.0, 3.0])
ENT = Utility.exponential(1.0)
CVAR = Utility.cvar(0.5)
PIECEWISE = Utility.piecewise(2.0, 0.5)


def families(space):
    return {
        "entropic": OceFamily(space, ENT),
        "cvar": OceFamily(space, CVAR),
        "piecewise": OceFamily(space, PIECEWISE),
        "composed-cvar": ComposedFamily(OceFamily(space, CVAR)),
        "composed-entropic": ComposedFamily(OceFamily(space, ENT)),
    }


# -- conditional OCE -------------------------------------------------------------

def test_conditional_entropic_tree(tree4):
    cv = conditional_oce(tree4, LEAVES, ENT, 1)
    expected = [-math.log(0.5 * (1 + math.exp(-1))), -math.log(0.5 * (math.exp(-2) + math.exp(-3)))]
    np.testing.assert_allclose(cv.atom_values, expected, atol=1e-10)
    np.testing.assert_allclose(cv.atom_values, [0.3798854930417225, 2.3798854930417224], atol=1e-10)
    np.testing.assert_allclose(cv.values, np.repeat(expected, 2), atol=1e-10)


@pytest.mark.parametrize("u", [ENT, CVAR, PIECEWISE])
def test_conditional_extremes(tree4, u):
    f = np.random.default_rng(0).normal(size=4)
    assert conditional_oce(tree4, f, u, 0).values == pytest.approx(oce(tree4, f, u).value, abs=1e-10)
    np.testing.assert_allclose(conditional_oce(tree4, f, u, 2).values, f, atol=1e-9)


def test_level_errors(tree4):
    with pytest.raises(LevelError):
        conditional_oce(tree4, LEAVES, ENT, 3)
    with pytest.raises(LevelError):
        consistency_audit(OceFamily(tree4, ENT), 1, 2, trials=10)


def test_family_needs_one_utility_per_level(tree4):
    with pytest.raises(ValidationError):
        OceFamily(tree4, [ENT, ENT])
    with pytest.raises(ValidationError):
        compose_recursive([ENT, None, ENT], tree4)


# -- conditional family axioms ------------------------------------------------------

@pytest.mark.parametrize("name", ["entropic", "cvar", "piecewise", "composed-cvar", "composed-entropic"])
@settings(max_examples=20)
@given(seed=seeds)
def test_conditional_axioms(name, seed):
    rng = np.random.default_rng(seed)
    sp = random_space(rng, 5, 3)
    fam = families(sp)[name]
    f, g = rng.uniform(-2, 2, size=(2, 5, 1))
    for t in range(sp.horizon + 1):
        ids = sp.atom_ids(t)
        k = ids.max() + 1
        r = lambda x: fam.rho_t(x, t)  # noqa: E731
        bump = rng.exponential(size=(5, 1)) * (rng.random((5, 1)) < 0.5)
        assert np.all(r(f + bump) <= r(f) + 1e-6)  # i. monotone
        m = rng.uniform(-3, 3, size=k)[ids]
        np.testing.assert_allclose(r(f + fam.cash(m)), r(f) - m, atol=1e-6)  # ii. cash invariance
        lam = rng.uniform(0, 1, size=k)[ids][:, None]
        assert np.all(r(lam * f + (1 - lam) * g) <= lam[:, 0] * r(f) + (1 - lam[:, 0]) * r(g) + 1e-6)  # iii.
        np.testing.assert_allclose(r(np.zeros((5, 1))), 0.0, atol=1e-12)  # iv. normalization
        assert sp.is_measurable(r(f), t, tol=1e-12)


def test_cvar_atom_constant_mix(tree4):
    rng = np.random.default_rng(3)
    fam = OceFamily(tree4, CVAR)
    f1, f2 = rng.normal(size=(2, 4))
    gap = 0.3 * fam.rho_t(f1, 1) + 0.7 * fam.rho_t(f2, 1) - fam.rho_t(0.3 * f1 + 0.7 * f2, 1)
    assert np.all(gap >= -1e-6)


@given(seeds, st.floats(0.05, 6.0))
def test_positive_homogeneity(seed, a):
    rng = np.random.default_rng(seed)
    sp = random_space(rng, 5, 2)
    f = rng.uniform(-2, 2, size=5)
    for t in range(sp.horizon + 1):
        for fam in (OceFamily(sp, CVAR), ComposedFamily(OceFamily(sp, CVAR))):
            np.testing.assert_allclose(fam.rho_t(a * f, t), a * fam.rho_t(f, t), atol=1e-9)


def test_entropic_is_not_homogeneous(tree4):
    fam = OceFamily(tree4, ENT)
    for t in (0, 1):
        assert np.max(np.abs(fam.rho_t(2 * LEAVES, t) - 2 * fam.rho_t(LEAVES, t))) > 0.1


# -- conditional pairing and penalties ---------------------------------------------------

def test_conditional_pairing_examples(tree4):
    h = np.ones((4, 1))
    np.testing.assert_allclose(conditional_pairing(tree4, h, LEAVES + 1, 1), [-1.5, -1.5, -3.5, -3.5])
    np.testing.assert_allclose(conditional_pairing(tree4, h, np.full(4, 2.0), 2), -2.0)
    rng = np.random.default_rng(1)
    f = rng.normal(size=4)
    np.testing.assert_allclose(conditional_pairing(tree4, h, f, 0), pairing(tree4, h, -f[:, None]), atol=1e-15)


@given(seeds)
def test_integration_identity(seed):
    rng = np.random.default_rng(seed)
    sp = random_space(rng, 6, 3)
    h = rng.exponential(size=(6, 2))
    f = rng.normal(size=(6, 2))
    for t in range(sp.horizon + 1):
        cp = conditional_pairing(sp, h, f, t)
        ids = sp.atom_ids(t)
        for A in range(ids.max() + 1):
            region = np.isin(ids, [0, A])
            lhs = sp.weights[region] @ cp[region]
            rhs = sp.weights[region] @ np.sum(h[region] * -f[region], axis=-1)
            assert abs(lhs - rhs) <= 1e-12


TILT = np.array([[1.6], [0.4], [1.2], [0.8]])


def test_conditional_penalty_examples(tree4):
    np.testing.assert_allclose(conditional_penalty_min(tree4, np.ones((4, 1)), ENT, 1), 0.0, atol=1e-15)
    h0 = np.array([[1.8], [0.6], [1.0], [0.6]])  # normalized only at level 0
    assert conditional_penalty_min(tree4, h0, ENT, 0)[0] == pytest.approx(penalty_minimal(tree4, h0, ENT).value,
                                                                         abs=1e-12)
    with pytest.raises(InfeasibleDensity):
        conditional_penalty_min(tree4, h0, ENT, 1)
    kl = 0.5 * (1.6 * math.log(1.6) + 0.4 * math.log(0.4)), 0.5 * (1.2 * math.log(1.2) + 0.8 * math.log(0.8))
    closed = conditional_penalty_min(tree4, TILT, ENT, 1)
    np.testing.assert_allclose(closed, np.repeat(kl, 2), atol=1e-14)
    numeric = conditional_penalty_min(tree4, TILT, ENT, 1, strategy="acceptance")
    np.testing.assert_allclose(numeric, closed, atol=1e-3)
    assert np.all(numeric <= closed + 1e-8)


@pytest.mark.parametrize("u", [ENT, CVAR])
def test_integrated_penalty_identity(tree4, u):
    for atoms in ([0], [1], [0, 1]):
        lhs, rhs = integrated_penalty(tree4, TILT, u, 1, atoms)
        assert rhs == pytest.approx(lhs, abs=1e-3)
        assert rhs <= lhs + 1e-6


# -- conditional dual representation ------------------------------------------------

@pytest.mark.parametrize("u", [ENT, CVAR])
def test_conditional_dual_tree(tree4, u):
    rng = np.random.default_rng(0)
    for f in rng.uniform(-2, 2, size=(10, 4)):
        rep = conditional_dual_check(tree4, f, u, 1)
        assert rep.gap <= 1e-3
        assert np.all(rep.dual <= rep.primal + 1e-9)
        # the assembled density is conditionally normalized and attains the dual value
        pen = conditional_penalty_min(tree4, rep.density, u, 1)
        np.testing.assert_allclose(conditional_pairing(tree4, rep.density, f, 1) - pen, rep.dual, atol=1e-9)


def test_conditional_dual_of_cash(tree4):
    rep = conditional_dual_check(tree4, np.full(4, 1.5), ENT, 1)
    np.testing.assert_allclose(rep.primal, -1.5, atol=1e-9)
    np.testing.assert_allclose(rep.dual, -1.5, atol=1e-9)


# -- static reduction at level 0 -------------------------------------------------------

@settings(max_examples=15)
@given(seeds)
def test_static_reduction(seed):
    rng = np.random.default_rng(seed)
    sp = random_space(rng, 4, 2)
    f = rng.normal(size=4)
    for u in (ENT, CVAR):
        assert conditional_oce(sp, f, u, 0).values == pytest.approx(oce(sp, f, u).value, abs=1e-10)
        rep = conditional_dual_check(sp, f, u, 0)
        assert rep.dual[0] == pytest.approx(dual_value(sp, f, u).value, abs=1e-10)
    pi = rng.dirichlet(np.ones(4))
    h = (pi / sp.weights)[:, None]
    assert conditional_penalty_min(sp, h, ENT, 0)[0] == pytest.approx(penalty_minimal(sp, h, ENT).value, abs=1e-10)


# -- acceptance sets ---------------------------------------------------------------------

@pytest.mark.parametrize("name", ["entropic", "cvar", "composed-cvar"])
def test_acceptance_set_properties(tree4, name):
    fam = families(tree4)[name]
    for t in (0, 1):
        rep = acceptance_sets(fam, t, 1, samples=2000, seed=1)
        assert rep.passed, rep.violations
        assert 0 < rep.in_level < rep.samples


def test_acceptance_examples(tree4):
    fam = OceFamily(tree4, ENT)
    for t in range(3):
        assert fam.accepted(np.zeros(4), t)
    f = LEAVES - 0.9  # rho_0(LEAVES) = -0.946
    assert fam.accepted(f, 0)
    assert fam.accepted(f + 1.0, 0)


# -- time consistency -------------------------------------------------------------------

def test_entropic_family_consistent(tree4):
    for t, s in ((0, 1), (0, 2), (1, 1)):
        rep = consistency_audit(OceFamily(tree4, ENT), t, s, trials=2000, seed=t)
        assert rep.consistent and rep.max_residual <= 1e-6 and rep.implication_violations == 0


def test_composed_family_consistent(tree4):
    for u in (CVAR, PIECEWISE):
        fam = compose_recursive([u, u, u], tree4)
        rep = consistency_audit(fam, 0, 1, trials=2000, seed=2)
        assert rep.verdict == "consistent" and rep.implication_violations == 0


def test_cvar_counterexample(tree4):
    rep = consistency_audit(OceFamily(tree4, CVAR), 0, 1, trials=5000, seed=7)
    assert rep.verdict == "inconsistent"
    assert rep.max_residual > 1e-2
    assert rep.witness is not None and rep.implication_witness is not None
    assert recursion_residual(OceFamily(tree4, CVAR), rep.witness, 0, 1) == pytest.approx(rep.max_residual)
    # the composed measure differs from the plain one on the witness
    plain = OceFamily(tree4, CVAR).rho_t(rep.witness, 0)
    composed = ComposedFamily(OceFamily(tree4, CVAR)).rho_t(rep.witness, 0)
    assert np.max(np.abs(plain - composed)) > 1e-2


def test_composition_basics(tree4):
    rng = np.random.default_rng(4)
    f = rng.normal(size=(30, 4, 1))
    ent, comp = OceFamily(tree4, ENT), compose_recursive(OceFamily(tree4, ENT))
    for t in range(3):
        np.testing.assert_allclose(comp.rho_t(f, t), ent.rho_t(f, t), atol=1e-6)
    one = tree_space([3])
    base = OceFamily(one, CVAR)
    g = rng.normal(size=(10, 3, 1))
    for t in (0, 1):
        np.testing.assert_allclose(ComposedFamily(base).rho_t(g, t), base.rho_t(g, t), atol=1e-12)
    np.testing.assert_allclose(rho_t(g, base, 1), -g[..., 0])


def test_decompose_examples(tree4):
    fam = OceFamily(tree4, ENT)
    dec = decompose_acceptance(np.zeros(4), fam, 0, 1)
    np.testing.assert_allclose(dec.f1, 0.0, atol=1e-12)
    np.testing.assert_allclose(dec.f2, 0.0, atol=1e-12)
    dec = decompose_acceptance(np.full(4, 2.5), fam, 0, 1)
    np.testing.assert_allclose(dec.f1, 2.5, atol=1e-9)
    np.testing.assert_allclose(dec.f2, 0.0, atol=1e-9)
    with pytest.raises(ValidationError):
        decompose_acceptance(np.full(4, -1.0), fam, 0, 1)


def test_decompose_accepted_batch(tree4):
    rng = np.random.default_rng(5)
    fam = ComposedFamily(OceFamily(tree4, ENT))
    F = rng.uniform(-2, 2, size=(200, 4, 1))
    F = F + fam.cash(fam.rho_t(F, 0))
    dec = decompose_acceptance(F, fam, 0, 1)
    np.testing.assert_allclose(dec.f1 + dec.f2, F, atol=1e-12)
    assert tree4.is_measurable(dec.f1, 1, axis=-2, tol=1e-12)
    assert np.max(np.abs(dec.rho_next_f2)) <= 1e-6 and np.max(dec.rho_t_f1) <= 1e-6


def test_decompose_fails_for_inconsistent_family(tree4):
    # the cvar counterexample fails the decomposition too: some accepted payoff cannot be split
    fam = OceFamily(tree4, CVAR)
    sampler = uniform_sampler(-2, 2, 1, 4)
    F = sampler(np.random.default_rng(7), 500)
    F = F + fam.cash(fam.rho_t(F, 0))
    failures = 0
    for f in F:
        try:
            decompose_acceptance(f, fam, 0, 1)
        except ContractViolation:
            failures += 1
    assert failures > 0
