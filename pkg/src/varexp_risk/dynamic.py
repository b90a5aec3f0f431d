"""Conditional risk measures on a filtration, their dual side and time consistency.

Every conditional quantity is returned as an array over outcomes that is
constant on the atoms of the relevant level (the finite stand-in for an
``F_t``-measurable random variable). Payoff arguments may carry leading batch
axes, ``(..., n, d)``.
"""

from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .dual import (DEFAULT_BOX, GRID_RESOLUTION, closed_form_penalty, density_coefficients, dual_search,
                   numerical_penalty)
from .errors import ContractViolation, InfeasibleDensity, LevelError, StrategyUnavailable, ValidationError
from .oce import SOLVER_TOL, OceResult, Utility, oce_scalar, scalarize
from .ordered import FEASIBILITY_TOL, OrderedSpace, as_payoff, pointwise_pairing
from .space import FiniteMeasureSpace

PROPERTY_TOL = 1e-6
GAP_TOL = 1e-3

Sampler = Callable[[np.random.Generator, int], np.ndarray]


def _check_step(T: int, t: int, s: int) -> None:
    if not (0 <= t < t + s <= T):
        raise LevelError(f"need 0 <= t < t+s <= T, got t={t}, s={s}, T={T}")


@dataclass(frozen=True)
class ConditionalValue:
    level: int
    atom_values: np.ndarray  # (..., atoms)
    values: np.ndarray  # (..., n), constant on atoms
    eta: np.ndarray | None = None
    method: str = ""


def conditional_oce(space: FiniteMeasureSpace, f, u: Utility, t: int, tol: float = SOLVER_TOL) -> ConditionalValue:
    """Conditional OCE at level ``t``, solved atom by atom.

    The objective ``eta + E[v(Y - eta) | F_t]`` separates across atoms, so the
    essential supremum over atom-constant ``eta`` is the atomwise maximum.
    """
    ids = space.atom_ids(t)
    Y = scalarize(f, u)
    if Y.shape[-1] != space.n:
        raise ValidationError(f"payoff has {Y.shape[-1]} outcomes, space has {space.n}")
    res: OceResult = oce_scalar(Y[..., None, :], space.conditional_weights(t), u, tol)
    vals = np.asarray(res.value)
    return ConditionalValue(t, vals, vals[..., ids], np.asarray(res.eta_star), res.method)


class DynamicFamily(ABC):
    """A sequence ``(rho_t)_{t=0..T}`` of conditional risk measures."""

    def __init__(self, space: FiniteMeasureSpace, ordered: OrderedSpace):
        self.space = space
        self.ordered = ordered

    @property
    def horizon(self) -> int:
        return self.space.horizon

    @property
    def z(self) -> np.ndarray:
        return self.ordered.z

    @abstractmethod
    def rho_t(self, f, t: int) -> np.ndarray:
        """Level-``t`` risk as an atom-constant array over outcomes."""

    def cash(self, m) -> np.ndarray:
        return self.ordered.cash(m, self.space.n)

    def accepted(self, f, t: int, tol: float = PROPERTY_TOL):
        out = np.all(self.rho_t(f, t) <= tol, axis=-1)
        return bool(out) if np.ndim(out) == 0 else out


class OceFamily(DynamicFamily):
    """Conditional OCE risk measures, one utility per level (or one shared)."""

    def __init__(self, space: FiniteMeasureSpace, utilities: Utility | Sequence[Utility],
                 ordered: OrderedSpace | None = None, tol: float = SOLVER_TOL):
        if isinstance(utilities, Utility):
            utilities = [utilities] * (space.horizon + 1)
        utilities = list(utilities)
        if len(utilities) != space.horizon + 1 or any(u is None for u in utilities):
            raise ValidationError(f"need one utility per level 0..{space.horizon}")
        if ordered is None:
            ordered = OrderedSpace(tuple(np.ones(len(utilities[0].weight)) / sum(utilities[0].weight)))
        for u in utilities:
            u.check_numeraire(ordered.z)
        super().__init__(space, ordered)
        self.utilities = tuple(utilities)
        self.tol = tol

    def conditional(self, f, t: int) -> ConditionalValue:
        return conditional_oce(self.space, f, self.utilities[self.space._level(t)], t, self.tol)

    def rho_t(self, f, t: int) -> np.ndarray:
        return -self.conditional(f, t).values


class ComposedFamily(DynamicFamily):
    """Backward recursion ``rho~_t(f) = rho_t(-rho~_{t+1}(f) z)`` from ``rho~_T = rho_T``."""

    def __init__(self, base: DynamicFamily):
        super().__init__(base.space, base.ordered)
        self.base = base

    def rho_t(self, f, t: int) -> np.ndarray:
        t = self.space._level(t)
        F = as_payoff(f)
        r = self.base.rho_t(F, self.horizon)
        for level in range(self.horizon - 1, t - 1, -1):
            r = self.base.rho_t(self.cash(-r), level)
        return r


def compose_recursive(one_step: DynamicFamily | Sequence[Utility], space: FiniteMeasureSpace | None = None,
                      ordered: OrderedSpace | None = None) -> ComposedFamily:
    """Build the time-consistent composition of one-step conditional measures.

    ``one_step`` is either a family whose level-``t`` measures serve as the
    one-step maps, or a list of utilities (one per level ``0..T``) together
    with the ``space``.
    """
    if isinstance(one_step, DynamicFamily):
        return ComposedFamily(one_step)
    if space is None:
        raise ValidationError("a utility list needs the measure space")
    steps = list(one_step)
    if len(steps) != space.horizon + 1 or any(u is None for u in steps):
        missing = [k for k in range(space.horizon + 1) if k >= len(steps) or steps[k] is None]
        raise ValidationError(f"missing one-step measure for level(s) {missing}")
    return ComposedFamily(OceFamily(space, steps, ordered))


def rho_t(f, family: DynamicFamily, t: int) -> np.ndarray:
    return family.rho_t(f, t)


# -- dual side ----------------------------------------------------------------

def conditional_pairing(space: FiniteMeasureSpace, h, f, t: int) -> np.ndarray:
    """``E[<h, -f> | F_t]`` as an atom-constant array."""
    return space.conditional_expectation(pointwise_pairing(h, -as_payoff(f)), t)


def _check_conditional_feasible(space: FiniteMeasureSpace, h, z, t: int) -> np.ndarray:
    H = as_payoff(h)
    if H.shape != (space.n, np.size(z)) or np.any(H < -FEASIBILITY_TOL):
        raise InfeasibleDensity("density must be nonnegative with one row per outcome")
    mass = space.conditional_expectation(H @ np.asarray(z, dtype=float), t)
    if np.any(np.abs(mass - 1.0) > FEASIBILITY_TOL):
        raise InfeasibleDensity(f"E[<h, z> | F_{t}] must equal 1 on every atom")
    return H


def conditional_penalty_min(space: FiniteMeasureSpace, h, u: Utility, t: int, z=None,
                            strategy: str = "closed-form", box: float = DEFAULT_BOX) -> np.ndarray:
    """Minimal conditional penalty on each atom of ``P_t``.

    ``closed-form`` gives ``E[phi(q) | F_t]`` (conditional relative entropy for
    the exponential core, the conditional density-bound indicator for
    piecewise-linear ones). ``acceptance`` and ``box`` solve the box-truncated
    suprema over ``A_t`` atom by atom and return lower bounds.
    """
    z = u.w / float(u.w @ u.w) if z is None else np.asarray(z, dtype=float)
    u.check_numeraire(z)
    H = _check_conditional_feasible(space, h, z, t)
    if strategy == "closed-form":
        q = density_coefficients(H, u)
        phi = np.where(np.isnan(q), np.inf, u.conjugate(np.nan_to_num(q, nan=1.0)))
        W = space.conditional_weights(t)
        with np.errstate(invalid="ignore"):
            per_atom = np.sum(np.where(W > 0, W * phi, 0.0), axis=-1)
        return per_atom[space.atom_ids(t)]
    if strategy in ("acceptance", "box"):
        masses = space.atom_masses(t)
        per_atom = np.array([numerical_penalty(space, H, u, strategy, level=t, select=[k], box=box) / masses[k]
                             for k in range(masses.size)])
        return per_atom[space.atom_ids(t)]
    raise StrategyUnavailable(f"unknown penalty strategy {strategy!r}")


def integrated_penalty(space: FiniteMeasureSpace, h, u: Utility, t: int, atoms: Sequence[int], z=None,
                       box: float = DEFAULT_BOX) -> tuple[float, float]:
    """Both sides of the integrated penalty identity over a union of atoms ``A``.

    Returns ``(int_A alpha_t^min dmu, sup_{f in A_t} <g, -f>_A)`` where the
    left side uses the closed form and the right side is a joint numerical
    maximization over the whole box (a lower bound).
    """
    alpha = conditional_penalty_min(space, h, u, t, z)
    region = np.isin(space.atom_ids(t), list(atoms))
    lhs = float(np.sum(space.weights[region] * alpha[region]))
    rhs = numerical_penalty(space, h, u, "acceptance", level=t, select=list(atoms), box=box)
    return lhs, rhs


@dataclass(frozen=True)
class ConditionalDualReport:
    level: int
    primal: np.ndarray  # rho_t(f), atom-constant
    dual: np.ndarray  # sup over conditionally normalized densities, atom-constant
    density: np.ndarray  # assembled maximizing density, (n, d)
    method: str
    evaluations: int

    @property
    def gap(self) -> float:
        return float(np.max(np.abs(self.primal - self.dual)))


def conditional_dual_check(space: FiniteMeasureSpace, f, u: Utility, t: int, z=None, method: str = "auto",
                           resolution: int = GRID_RESOLUTION, tol: float = SOLVER_TOL) -> ConditionalDualReport:
    """Compare ``rho_t(f)`` with its conditional robust representation atom by atom.

    The dual side ranges over densities with ``E[<h, z> | F_t] = 1``; the
    search decouples into one simplex problem per atom.
    """
    if z is not None:
        u.check_numeraire(z)
    F = as_payoff(f)
    Y = scalarize(F, u)
    if Y.shape != (space.n,):
        raise ValidationError(f"expected a single payoff on {space.n} outcomes")
    primal = -conditional_oce(space, F, u, t, tol).values
    ids = space.atom_ids(t)
    masses = space.atom_masses(t)
    dual_atom = np.empty(masses.size)
    q = np.empty(space.n)
    evals, used = 0, method
    for k in range(masses.size):
        members = np.flatnonzero(ids == k)
        cond = space.weights[members] / masses[k]
        val, pi, used, ev = dual_search(Y[members], cond, u, method, resolution)
        dual_atom[k] = val
        q[members] = pi / cond
        evals += ev
    return ConditionalDualReport(t, primal, dual_atom[ids], q[:, None] * u.w, used, evals)


# -- acceptance sets -------------------------------------------------------------

def uniform_sampler(low: float = -2.0, high: float = 2.0, d: int = 1, n: int | None = None) -> Sampler:
    def sample(rng: np.random.Generator, count: int) -> np.ndarray:
        return rng.uniform(low, high, size=(count, n, d))
    return sample


def _default_sampler(family: DynamicFamily) -> Sampler:
    return uniform_sampler(-2.0, 2.0, family.ordered.dim, family.space.n)


def _atom_constant(space: FiniteMeasureSpace, values_per_atom: np.ndarray, t: int) -> np.ndarray:
    return values_per_atom[..., space.atom_ids(t)]


@dataclass
class AcceptanceSetReport:
    level: int
    step: int
    samples: int
    in_level: int  # sampled payoffs in A_t
    stepped_candidates: int  # F_{t+s}-measurable samples
    in_stepped: int  # ... of which in A_{t,t+s}
    violations: dict = field(default_factory=dict)
    witnesses: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return not any(self.violations.values())


def acceptance_sets(family: DynamicFamily, t: int, s: int, samples: int = 1000, seed: int = 0,
                    sampler: Sampler | None = None, tol: float = PROPERTY_TOL) -> AcceptanceSetReport:
    """Classify sampled payoffs against ``A_t`` and ``A_{t,t+s}`` and test the acceptance-set axioms.

    Members are built by shifting samples onto or inside the acceptance
    boundary; then conditional convexity (level-``t`` measurable mixing
    weights), solidity (adding a nonnegative payoff) and normalization are
    checked. Any failure is counted with a witness.
    """
    sp = family.space
    _check_step(family.horizon, t, s)
    sampler = sampler or _default_sampler(family)
    rng = np.random.default_rng(seed)
    F = as_payoff(sampler(rng, samples))
    G = as_payoff(sampler(rng, samples))
    in_level = family.accepted(F, t, tol)

    stepped = sp.conditional_expectation(F, t + s, axis=-2)
    in_stepped = family.accepted(stepped, t, tol)

    k = sp.atom_masses(t).size
    slack1 = rng.exponential(0.3, size=(samples, k)) * (rng.random((samples, k)) < 0.5)
    slack2 = rng.exponential(0.3, size=(samples, k)) * (rng.random((samples, k)) < 0.5)
    F1 = F + family.cash(family.rho_t(F, t) + _atom_constant(sp, slack1, t))
    F2 = G + family.cash(family.rho_t(G, t) + _atom_constant(sp, slack2, t))
    lam = _atom_constant(sp, rng.uniform(0.0, 1.0, size=(samples, k)), t)[..., None]
    mix = lam * F1 + (1.0 - lam) * F2
    bump = rng.exponential(1.0, size=F1.shape) * (rng.random(F1.shape) < 0.5)

    report = AcceptanceSetReport(t, s, samples, int(np.sum(in_level)), samples, int(np.sum(in_stepped)))
    checks = {
        "shift_into_acceptance": (family.accepted(F1, t, tol) & family.accepted(F2, t, tol), F1),
        "conditional_convexity": (family.accepted(mix, t, tol), mix),
        "solidity": (family.accepted(F1 + bump, t, tol), F1 + bump),
    }
    for name, (ok, witness) in checks.items():
        bad = np.flatnonzero(~np.asarray(ok))
        report.violations[name] = int(bad.size)
        if bad.size:
            report.witnesses[name] = witness[bad[0]]
    zero = np.zeros((sp.n, family.ordered.dim))
    report.violations["normalization"] = int(not family.accepted(zero, t, tol))
    return report


# -- time consistency --------------------------------------------------------------

@dataclass
class ConsistencyReport:
    level: int
    step: int
    trials: int
    tol: float
    max_residual: float
    witness: np.ndarray | None
    implication_violations: int
    implication_witness: tuple[np.ndarray, np.ndarray] | None

    @property
    def consistent(self) -> bool:
        return self.max_residual <= self.tol

    @property
    def verdict(self) -> str:
        return "consistent" if self.consistent else "inconsistent"


def recursion_residual(family: DynamicFamily, f, t: int, s: int) -> np.ndarray:
    """``max |rho_t(-rho_{t+s}(f) z) - rho_t(f)|`` over outcomes (batched)."""
    _check_step(family.horizon, t, s)
    F = as_payoff(f)
    lhs = family.rho_t(family.cash(-family.rho_t(F, t + s)), t)
    return np.max(np.abs(lhs - family.rho_t(F, t)), axis=-1)


def consistency_audit(family: DynamicFamily, t: int, s: int, trials: int = 1000, tol: float = PROPERTY_TOL,
                      seed: int = 0, sampler: Sampler | None = None, batch: int = 2500) -> ConsistencyReport:
    """Falsification audit of time consistency between levels ``t`` and ``t+s``.

    Measures the recursion residual on sampled payoffs and tests the ordering
    implication on pairs built to satisfy ``rho_{t+s}(f1) <= rho_{t+s}(f2)``.
    The verdict is "consistent" iff the largest residual is within ``tol``.
    """
    _check_step(family.horizon, t, s)
    sampler = sampler or _default_sampler(family)
    rng = np.random.default_rng(seed)
    sp = family.space
    k_next = sp.atom_masses(t + s).size
    max_res, witness = 0.0, None
    bad_pairs, pair_witness = 0, None
    done = 0
    while done < trials:
        m = min(batch, trials - done)
        F = as_payoff(sampler(rng, m))
        res = recursion_residual(family, F, t, s)
        j = int(np.argmax(res))
        if res[j] > max_res:
            max_res, witness = float(res[j]), F[j].copy()

        G = as_payoff(sampler(rng, m))
        delta = rng.exponential(0.2, size=(m, k_next)) * (rng.random((m, k_next)) < 0.5)
        r1 = family.rho_t(F, t + s)
        F2 = G + family.cash(family.rho_t(G, t + s) - r1 - _atom_constant(sp, delta, t + s))
        premise = np.all(r1 <= family.rho_t(F2, t + s) + tol, axis=-1)
        broken = premise & np.any(family.rho_t(F, t) > family.rho_t(F2, t) + tol, axis=-1)
        bad_pairs += int(np.sum(broken))
        if pair_witness is None and np.any(broken):
            i = int(np.flatnonzero(broken)[0])
            pair_witness = (F[i].copy(), F2[i].copy())
        done += m
    if max_res <= tol:
        witness = None
    return ConsistencyReport(t, s, trials, tol, max_res, witness, bad_pairs, pair_witness)


@dataclass(frozen=True)
class Decomposition:
    f1: np.ndarray  # -rho_{t+s}(f) z, measurable at t+s, in A_{t,t+s}
    f2: np.ndarray  # f + rho_{t+s}(f) z, in A_{t+s}
    rho_next_f2: np.ndarray
    rho_t_f1: np.ndarray


def decompose_acceptance(f, family: DynamicFamily, t: int, s: int, tol: float = PROPERTY_TOL) -> Decomposition:
    """Split an accepted ``f`` as ``f1 + f2`` with ``f1`` in ``A_{t,t+s}`` and ``f2`` in ``A_{t+s}``.

    ``f`` may be a batch ``(..., n, d)``; every member must be accepted.
    Raises ``ValidationError`` if ``f`` is not in ``A_t`` and
    ``ContractViolation`` if either membership fails, which happens for
    families that are not time consistent.
    """
    _check_step(family.horizon, t, s)
    F = as_payoff(f)
    if not np.all(family.accepted(F, t, tol)):
        raise ValidationError(f"payoff is not in the level-{t} acceptance set")
    r = family.rho_t(F, t + s)
    f1 = family.cash(-r)
    f2 = F + family.cash(r)
    rho_f2 = family.rho_t(f2, t + s)
    rho_f1 = family.rho_t(f1, t)
    if not family.space.is_measurable(f1, t + s, axis=-2, tol=1e-12):
        raise ContractViolation("f1 is not measurable at level t+s")
    if np.max(np.abs(rho_f2)) > tol:
        raise ContractViolation(f"f2 not on the level-{t + s} acceptance boundary (max |rho| = {np.max(np.abs(rho_f2)):.3g})")
    if np.max(rho_f1) > tol:
        raise ContractViolation(f"f1 not accepted at level {t} (max rho = {np.max(rho_f1):.3g})")
    return Decomposition(f1, f2, rho_f2, rho_f1)
