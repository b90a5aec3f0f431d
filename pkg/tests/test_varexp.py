import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import seeds
from varexp_risk import FiniteMeasureSpace, dual_exponent, holder_gap, luxemburg_norm, modular
from varexp_risk.errors import ValidationError
from varexp_risk.varexp import ExponentFunction, luxemburg_from_magnitudes

HALF = FiniteMeasureSpace([0.5, 0.5])
P24 = ExponentFunction([2.0, 4.0])


def test_modular_examples():
    assert modular(HALF, [0.0, 0.0], P24) == 0.0
    assert modular(FiniteMeasureSpace([1.0]), [3.0], ExponentFunction([2.0])) == pytest.approx(9.0)
    assert modular(HALF, [2.0, 1.0], P24) == pytest.approx(2.5)


def test_modular_uses_euclidean_norm():
    assert modular(FiniteMeasureSpace([1.0]), [[3.0, 4.0]], ExponentFunction([2.0])) == pytest.approx(25.0)


def test_luxemburg_analytic_example():
    # 0.5 (2/l)^2 + 0.5 (1/l)^4 = 1  <=>  1/l^2 = sqrt(6) - 2
    oracle = 1.0 / math.sqrt(math.sqrt(6.0) - 2.0)
    assert luxemburg_norm(HALF, [2.0, 1.0], P24) == pytest.approx(oracle, abs=1e-9)
    assert oracle == pytest.approx(1.4915578672621423, abs=1e-15)


def test_luxemburg_zero_and_constant():
    assert luxemburg_norm(HALF, [0.0, 0.0], P24) == 0.0
    sp = FiniteMeasureSpace([0.2, 0.3, 0.5])
    p = ExponentFunction([1.5, 2.0, 4.0])
    assert luxemburg_norm(sp, [[3.0, 4.0]] * 3, p) == pytest.approx(5.0, abs=1e-9)
    assert luxemburg_norm(sp, [-2.5] * 3, p) == pytest.approx(2.5, abs=1e-9)


def test_luxemburg_rejects_bad_tol():
    with pytest.raises(ValidationError):
        luxemburg_norm(HALF, [1.0, 1.0], P24, tol=0.0)


@pytest.mark.parametrize("values", [[1.0, 2.0], [2.0, np.inf], [0.5]])
def test_exponent_range(values):
    with pytest.raises(ValidationError):
        ExponentFunction(values)


def test_dual_exponent_examples():
    np.testing.assert_allclose(dual_exponent(ExponentFunction([2.0, 2.0])).values, [2.0, 2.0])
    np.testing.assert_allclose(dual_exponent(ExponentFunction([4.0])).values, [4.0 / 3.0])
    q = dual_exponent(ExponentFunction([1.5, 3.0])).values
    np.testing.assert_allclose(q, [3.0, 1.5])
    np.testing.assert_allclose(1 / np.array([1.5, 3.0]) + 1 / q, 1.0)
    assert P24.p_minus == 2.0 and P24.p_plus == 4.0


def _instance(seed, n=4, d=2):
    rng = np.random.default_rng(seed)
    mu = rng.dirichlet(np.ones(n)) + 1e-3
    sp = FiniteMeasureSpace(mu / mu.sum())
    p = ExponentFunction(rng.uniform(1.2, 5.0, size=n))
    return rng, sp, p


@given(seeds, st.floats(-4, 4))
def test_norm_axioms(seed, c):
    rng, sp, p = _instance(seed)
    f, g = rng.normal(size=(2, 4, 2)) * rng.uniform(0.1, 3.0)
    nf = luxemburg_norm(sp, f, p)
    assert luxemburg_norm(sp, c * f, p) == pytest.approx(abs(c) * nf, abs=1e-8)
    assert luxemburg_norm(sp, f + g, p) <= nf + luxemburg_norm(sp, g, p) + 1e-9
    assert nf > 0
    assert modular(sp, f / nf, p) == pytest.approx(1.0, abs=1e-8)
    assert nf <= np.linalg.norm(f, axis=-1).max() + 1e-12


@given(seeds, st.floats(1.1, 6.0))
def test_constant_exponent_is_q_norm(seed, q):
    rng, sp, _ = _instance(seed)
    f = rng.normal(size=(4, 2))
    closed = (sp.weights @ np.linalg.norm(f, axis=-1) ** q) ** (1 / q)
    assert luxemburg_norm(sp, f, ExponentFunction.constant(q, 4)) == pytest.approx(closed, abs=1e-9)


@given(seeds)
def test_holder_bound(seed):
    rng, sp, p = _instance(seed)
    f, h = rng.normal(size=(2, 4, 2))
    assert holder_gap(sp, f, h, p) >= -1e-9


def test_holder_examples():
    p2 = ExponentFunction.constant(2.0, 2)
    f = np.array([1.0, -3.0])
    assert holder_gap(HALF, np.zeros(2), f, p2) == 0.0
    n2 = luxemburg_norm(HALF, f, p2) ** 2
    assert holder_gap(HALF, f, f, p2) == pytest.approx(n2, abs=1e-8)


def test_batched_norm_matches_scalar():
    rng, sp, p = _instance(11)
    F = rng.normal(size=(5, 4, 2))
    batch = luxemburg_norm(sp, F, p)
    np.testing.assert_allclose(batch, [luxemburg_norm(sp, f, p) for f in F], atol=1e-12)


def test_extreme_magnitudes_do_not_overflow():
    a = np.array([[1e-200, 1e200]])
    out = luxemburg_from_magnitudes(a, np.array([0.5, 0.5]), np.array([5.0, 5.0]), tol=1e-10)
    assert np.isfinite(out).all() and out[0] > 0
