"""Acceptance battery: ten seeded randomized checks, each against its own oracle.

Every criterion returns a :class:`CriterionResult` carrying a pass flag, the
worst observed deviation and the wall-clock time against its budget. ``scale``
multiplies the sample counts (1.0 is the full battery).
"""

from __future__ import annotations

import io
import itertools
import time
from contextlib import redirect_stdout
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.special import logsumexp

from .dual import (density_coefficients, closed_form_penalty, dual_objective, dual_objective_probabilities,
                   dual_value)
from .dynamic import (ComposedFamily, OceFamily, acceptance_sets, conditional_dual_check, conditional_pairing,
                      consistency_audit, decompose_acceptance, integrated_penalty)
from .oce import Utility, certainty_equivalent, oce, rho, ssd_compare, subhomogeneity_gap
from .ordered import pointwise_pairing
from .scenario import fixture_names, load_scenario, loads_scenario
from .space import FiniteMeasureSpace
from .varexp import luxemburg_from_magnitudes, modular_from_magnitudes

LUX_TOL = 1e-12
PROPERTY_TOL = 1e-6
GAP_TOL = 1e-3


@dataclass(frozen=True)
class CriterionResult:
    name: str
    title: str
    passed: bool
    detail: str
    seconds: float
    budget: float

    @property
    def within_budget(self) -> bool:
        return self.seconds < self.budget

    @property
    def ok(self) -> bool:
        return self.passed and self.within_budget

    def line(self) -> str:
        tag = "PASS" if self.ok else "FAIL"
        return f"[{tag}] {self.name} {self.title}: {self.detail} ({self.seconds:.2f} s of {self.budget:.0f} s)"


def _count(n: int, scale: float) -> int:
    return max(8, int(round(n * scale)))


def _weights(rng, n: int, size=None) -> np.ndarray:
    mu = rng.dirichlet(np.ones(n), size=size) + 1e-3
    return mu / mu.sum(axis=-1, keepdims=True)


def _tree4() -> tuple[FiniteMeasureSpace, dict[str, Utility]]:
    doc = load_scenario("tree4")
    return doc.space(), doc.utilities


# -- 1. norm axioms ----------------------------------------------------------------

def c1_norm_axioms(scale: float = 1.0, seed: int = 0) -> tuple[bool, str]:
    rng = np.random.default_rng(seed)
    combos = [(n, d) for n in range(1, 9) for d in range(1, 4)]
    per = -(-_count(10_000, scale) // len(combos))
    worst = dict.fromkeys(("homogeneity", "triangle", "zero", "unit_ball", "constant_exponent"), 0.0)
    smallest = np.inf
    for n, d in combos:
        mu = _weights(rng, n, per)
        p = rng.uniform(1.1, 6.0, size=(per, n))
        F = rng.normal(size=(per, n, d)) * rng.uniform(0.1, 5.0, size=(per, 1, 1))
        G = rng.normal(size=(per, n, d)) * rng.uniform(0.1, 5.0, size=(per, 1, 1))
        c = rng.uniform(-3.0, 3.0, size=per)

        def norm(X, pp=p):
            return luxemburg_from_magnitudes(np.linalg.norm(X, axis=-1), mu, pp, LUX_TOL)

        nf, ng = norm(F), norm(G)
        worst["homogeneity"] = max(worst["homogeneity"], np.max(np.abs(norm(c[:, None, None] * F) - np.abs(c) * nf)))
        worst["triangle"] = max(worst["triangle"], np.max(norm(F + G) - nf - ng))
        worst["zero"] = max(worst["zero"], np.max(norm(np.zeros_like(F))))
        smallest = min(smallest, float(nf.min()))
        a = np.linalg.norm(F, axis=-1)
        worst["unit_ball"] = max(worst["unit_ball"], np.max(np.abs(modular_from_magnitudes(a / nf[:, None], mu, p) - 1)))
        # constant exponent: closed-form weighted q-norm
        q = rng.uniform(1.1, 6.0, size=per)
        closed = np.sum(mu * a ** q[:, None], axis=-1) ** (1.0 / q)
        got = luxemburg_from_magnitudes(a, mu, q[:, None], LUX_TOL)
        worst["constant_exponent"] = max(worst["constant_exponent"], np.max(np.abs(got - closed)))
    ok = (worst["homogeneity"] <= 1e-8 and worst["triangle"] <= 1e-8 and worst["zero"] == 0.0 and smallest > 0
          and worst["unit_ball"] <= 1e-7 and worst["constant_exponent"] <= 1e-8)
    detail = ", ".join(f"{k}={v:.1e}" for k, v in worst.items()) + f", instances={per * len(combos)}"
    return ok, detail


# -- 2. Hölder bound ----------------------------------------------------------------

def c2_holder(scale: float = 1.0, seed: int = 0) -> tuple[bool, str]:
    rng = np.random.default_rng(seed)
    combos = [(n, d) for n in range(1, 9) for d in range(1, 4)]
    per = -(-_count(10_000, scale) // len(combos))
    slack = np.inf
    for n, d in combos:
        mu = _weights(rng, n, per)
        p = rng.uniform(1.1, 6.0, size=(per, n))
        F = rng.normal(size=(per, n, d)) * rng.uniform(0.1, 5.0, size=(per, 1, 1))
        H = rng.normal(size=(per, n, d)) * rng.uniform(0.1, 5.0, size=(per, 1, 1))
        nf = luxemburg_from_magnitudes(np.linalg.norm(F, axis=-1), mu, p, LUX_TOL)
        nh = luxemburg_from_magnitudes(np.linalg.norm(H, axis=-1), mu, p / (p - 1.0), LUX_TOL)
        pair = np.sum(mu * np.sum(F * H, axis=-1), axis=-1)
        slack = min(slack, float(np.min(2.0 * nf * nh - np.abs(pair))))
    return slack >= -1e-9, f"min slack={slack:.3e}, instances={per * len(combos)}"


# -- 3. OCE axioms -------------------------------------------------------------------

def _random_setting(rng, family: str):
    n = int(rng.integers(2, 7))
    d = int(rng.integers(1, 3))
    z = rng.uniform(0.5, 2.0, size=d)
    w = rng.uniform(0.1, 1.0, size=d)
    w = tuple(w / (w @ z))
    if family == "exponential":
        u = Utility.exponential(float(rng.uniform(0.2, 3.0)), w)
    elif family == "cvar":
        u = Utility.cvar(float(rng.uniform(0.05, 0.95)), w)
    else:
        u = Utility.piecewise(float(rng.uniform(1.0, 4.0)), float(rng.uniform(0.0, 1.0)), w)
    space = FiniteMeasureSpace(_weights(rng, n))
    return space, u, z, n, d


def c3_oce_axioms(scale: float = 1.0, seed: int = 0) -> tuple[bool, str]:
    rng = np.random.default_rng(seed)
    settings = 20
    per = -(-_count(10_000, scale) // settings)
    failures: dict[str, int] = {}
    closed_err = 0.0
    for family in ("exponential", "cvar", "piecewise"):
        for _ in range(settings):
            space, u, z, n, d = _random_setting(rng, family)

            def draw():
                return rng.normal(size=(per, n, d)) * rng.uniform(0.1, 3.0, size=(per, 1, 1))

            def S(X):
                return oce(space, X, u).value

            m = rng.uniform(-5.0, 5.0, size=per)
            lam = rng.uniform(0.0, 1.0, size=per)[:, None, None]
            F, G, bump = draw(), draw(), rng.exponential(1.0, size=(per, n, d)) * (rng.random((per, n, d)) < 0.5)
            checks = {
                "translation": np.abs(S(F + m[:, None, None] * z) - S(F) - m) <= PROPERTY_TOL,
                "monotonicity": S(F) <= S(F + bump) + PROPERTY_TOL,
                "concavity": S(lam * F + (1 - lam) * G) >= lam[:, 0, 0] * S(F) + (1 - lam[:, 0, 0]) * S(G) - PROPERTY_TOL,
            }
            F, G, bump = draw(), draw(), rng.exponential(1.0, size=(per, n, d)) * (rng.random((per, n, d)) < 0.5)
            m = rng.uniform(-5.0, 5.0, size=per)
            R = lambda X: rho(space, X, u)  # noqa: E731
            checks["A1_monotone"] = R(F + bump) <= R(F) + PROPERTY_TOL
            checks["A2_translation"] = np.abs(R(F + m[:, None, None] * z) - R(F) + m) <= PROPERTY_TOL
            checks["A3_convexity"] = R(lam * F + (1 - lam) * G) <= lam[:, 0, 0] * R(F) + (1 - lam[:, 0, 0]) * R(G) + PROPERTY_TOL
            for k, ok in checks.items():
                key = f"{family}.{k}"
                failures[key] = failures.get(key, 0) + int(np.sum(~ok))
            if family == "exponential":
                Y = F @ u.w
                oracle = -logsumexp(np.log(space.weights) - u.gamma * Y, axis=-1) / u.gamma
                closed_err = max(closed_err, float(np.max(np.abs(S(F) - oracle))))
    bad = sum(failures.values())
    ok = bad == 0 and closed_err <= 1e-8
    return ok, f"violations={bad} over {len(failures)} axiom/family pairs x {per * settings} trials, entropic closed-form err={closed_err:.1e}"


# -- 4. sub-homogeneity ----------------------------------------------------------------

def c4_subhomogeneity(scale: float = 1.0, seed: int = 0) -> tuple[bool, str]:
    rng = np.random.default_rng(seed)
    total = _count(1000, scale)
    worst = np.inf
    settings = 10
    per = -(-total // (3 * settings))
    for family in ("exponential", "cvar", "piecewise"):
        for _ in range(settings):
            space, u, _z, n, d = _random_setting(rng, family)
            F = rng.normal(size=(per, n, d)) * rng.uniform(0.1, 3.0, size=(per, 1, 1))
            a = rng.uniform(0.0, 5.0, size=per)
            worst = min(worst, float(np.min(subhomogeneity_gap(space, F, u, a))))
    return worst >= -PROPERTY_TOL, f"min gap={worst:.3e} over {3 * settings * per} (f, a)"


# -- 5. SSD equivalence -------------------------------------------------------------------

def c5_ssd(scale: float = 1.0, seed: int = 0) -> tuple[bool, str]:
    rng = np.random.default_rng(seed)
    u = Utility.exponential(1.0)
    spaces = 10
    per = -(-_count(10_000, scale) // spaces)
    disagree = decisive = 0
    for _ in range(spaces):
        space = FiniteMeasureSpace(_weights(rng, 4))
        F1 = rng.normal(size=(per, 4, 1)) * rng.uniform(0.1, 3.0, size=(per, 1, 1))
        F2 = rng.normal(size=(per, 4, 1)) * rng.uniform(0.1, 3.0, size=(per, 1, 1))
        ds = oce(space, F1, u).value - oce(space, F2, u).value
        dc = certainty_equivalent(space, F1, u) - certainty_equivalent(space, F2, u)
        both = (np.abs(ds) > PROPERTY_TOL) & (np.abs(dc) > PROPERTY_TOL)
        decisive += int(both.sum())
        disagree += int(np.sum(both & (np.sign(ds) != np.sign(dc))))
        for i in range(5):  # scalar entry point on a few pairs
            rep = ssd_compare(space, F1[i], F2[i], u)
            disagree += int(rep.decisive and not rep.agree)
    return disagree == 0, f"disagreements={disagree} among {decisive} decisive pairs of {spaces * per}"


# -- 6. static strong duality ------------------------------------------------------------

def _capped_greedy(Y: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> float:
    """``max -<pi, Y>`` over ``lo <= pi <= hi``, ``sum pi = 1`` by filling the smallest ``Y`` first."""
    pi = lo.copy()
    room = 1.0 - pi.sum()
    for i in np.argsort(Y, kind="stable"):
        add = min(hi[i] - pi[i], room)
        pi[i] += add
        room -= add
    return float(-(pi @ Y))


def c6_static_duality(scale: float = 1.0, seed: int = 0) -> tuple[bool, str]:
    rng = np.random.default_rng(seed)
    reps = max(1, int(round(5 * scale)))
    worst_gap = worst_weak = worst_oracle = 0.0
    count = 0
    for family in ("exponential", "cvar"):
        for n, d, _ in itertools.product(range(1, 5), range(1, 3), range(reps)):
            z = rng.uniform(0.5, 2.0, size=d)
            w = rng.uniform(0.1, 1.0, size=d)
            w = tuple(w / (w @ z))
            u = (Utility.exponential(float(rng.uniform(0.2, 3.0)), w) if family == "exponential"
                 else Utility.cvar(float(rng.uniform(0.05, 0.95)), w))
            space = FiniteMeasureSpace(_weights(rng, n))
            f = rng.normal(size=(n, d)) * rng.uniform(0.1, 3.0)
            primal = rho(space, f, u)
            res = dual_value(space, f, u, z, method="grid")
            worst_gap = max(worst_gap, abs(primal - res.value))
            Y = f @ u.w
            if family == "exponential":  # Gibbs density attains the sup
                oracle = logsumexp(np.log(space.weights) - u.gamma * Y) / u.gamma
            else:
                mu = space.weights
                oracle = _capped_greedy(Y, 0.0 * mu, mu / (1.0 - u.alpha))
            worst_oracle = max(worst_oracle, abs(oracle - primal))
            # weak duality over sampled feasible densities on and off the finite-penalty slice
            pis = rng.dirichlet(np.ones(n), size=200)
            mix = rng.uniform(0.0, 1.0, size=(200, 1))
            pis = mix * pis + (1 - mix) * space.weights
            with np.errstate(invalid="ignore"):
                vals = dual_objective_probabilities(Y, space.weights, pis, u)
            worst_weak = max(worst_weak, float(np.max(vals - primal, initial=-np.inf)))
            if d > 1:
                H = rng.dirichlet(np.ones(d), size=n) / z  # pointwise <h, z> = 1, generally not parallel to w
                if np.all(np.isfinite(density_coefficients(H, u))):
                    worst_weak = max(worst_weak, dual_objective(space, f, H, u) - primal)
                else:
                    pen = closed_form_penalty(space.weights, density_coefficients(H, u), u)
                    worst_weak = max(worst_weak, -np.inf if np.isinf(pen) else 1.0)
            count += 1
    ok = worst_gap <= GAP_TOL and worst_weak <= PROPERTY_TOL and worst_oracle <= 1e-8
    return ok, (f"max |primal-dual|={worst_gap:.1e}, max weak excess={worst_weak:.1e}, "
                f"primal vs analytic dual={worst_oracle:.1e}, instances={count}")


# -- 7. conditional duality on the 4-leaf tree ----------------------------------------------

def _conditional_density(rng, space: FiniteMeasureSpace, t: int, n: int) -> np.ndarray:
    q = rng.uniform(0.2, 1.8, size=n)
    return (q / space.conditional_expectation(q, t))[:, None]


def c7_conditional_duality(scale: float = 1.0, seed: int = 0) -> tuple[bool, str]:
    rng = np.random.default_rng(seed)
    space, utils = _tree4()
    t, n = 1, space.n
    payoffs = _count(50, scale)
    gap = 0.0
    for name in ("entropic", "cvar"):
        for _ in range(payoffs):
            f = rng.uniform(-2.0, 2.0, size=(n, 1))
            gap = max(gap, conditional_dual_check(space, f, utils[name], t).gap)
    ids = space.atom_ids(t)
    k = space.atom_masses(t).size
    unions = [c for r in range(1, k + 1) for c in itertools.combinations(range(k), r)]
    integration_err = 0.0
    for _ in range(_count(1000, scale)):
        h = _conditional_density(rng, space, t, n)
        f = rng.normal(size=(n, 1))
        cp = conditional_pairing(space, h, f, t)
        direct = pointwise_pairing(h, -f)
        for A in unions:
            region = np.isin(ids, A)
            integration_err = max(integration_err, abs(float(np.sum(space.weights[region] * (cp[region] - direct[region])))))
    penalty_err = 0.0
    dominated = True
    for name in ("entropic", "cvar"):
        for _ in range(max(2, int(round(4 * scale)))):
            h = _conditional_density(rng, space, t, n)
            for A in unions:
                lhs, rhs = integrated_penalty(space, h, utils[name], t, A)
                penalty_err = max(penalty_err, abs(lhs - rhs))
                dominated &= rhs <= lhs + PROPERTY_TOL
    ok = gap <= GAP_TOL and integration_err <= 1e-12 and penalty_err <= GAP_TOL and dominated
    return ok, f"atomwise gap={gap:.1e}, integration identity err={integration_err:.1e}, integrated penalty err={penalty_err:.1e}"


# -- 8. time consistency -------------------------------------------------------------------

def c8_time_consistency(scale: float = 1.0, seed: int = 0) -> tuple[bool, str]:
    space, utils = _tree4()
    trials = _count(10_000, scale)
    pairs = [(t, s) for t in range(space.horizon) for s in range(1, space.horizon - t + 1)]
    entropic = OceFamily(space, utils["entropic"])
    cvar = OceFamily(space, utils["cvar"])
    ent_res = max(consistency_audit(entropic, t, s, trials, seed=seed).max_residual for t, s in pairs)
    comp_res = max(consistency_audit(ComposedFamily(fam), t, s, trials, seed=seed).max_residual
                   for fam in (cvar, entropic) for t, s in pairs)
    audit = consistency_audit(cvar, 0, 1, trials=5000, seed=7)
    witness_ok = audit.witness is not None and audit.max_residual > 1e-2 and audit.verdict == "inconsistent"

    rng = np.random.default_rng(seed)
    composed = ComposedFamily(entropic)
    samples = _count(1000, scale)
    F = rng.uniform(-2.0, 2.0, size=(samples, space.n, 1))
    F = F + composed.cash(composed.rho_t(F, 0) + rng.exponential(0.3, size=(samples, 1)))
    dec = decompose_acceptance(F, composed, 0, 1)
    worst = max(float(np.max(np.abs(dec.rho_next_f2))), float(np.max(dec.rho_t_f1)),
                float(np.max(np.abs(dec.f1 + dec.f2 - F))))
    ok = ent_res <= PROPERTY_TOL and comp_res <= PROPERTY_TOL and witness_ok and worst <= PROPERTY_TOL
    return ok, (f"entropic residual={ent_res:.1e}, composed residual={comp_res:.1e}, "
                f"conditional cvar witness residual={audit.max_residual:.3f}, decomposition worst={worst:.1e}")


# -- 9. acceptance-set properties ----------------------------------------------------------

def c9_acceptance_sets(scale: float = 1.0, seed: int = 0) -> tuple[bool, str]:
    space, utils = _tree4()
    samples = _count(10_000, scale)
    families = {"entropic": OceFamily(space, utils["entropic"]), "cvar": OceFamily(space, utils["cvar"])}
    families["composed-cvar"] = ComposedFamily(families["cvar"])
    total: dict[str, int] = {}
    for name, fam in families.items():
        for t in range(space.horizon):
            rep = acceptance_sets(fam, t, 1, samples=samples, seed=seed)
            for k, v in rep.violations.items():
                total[k] = total.get(k, 0) + v
    ok = not any(total.values())
    return ok, ", ".join(f"{k}={v}" for k, v in total.items()) + f" ({samples} samples per family and level)"


# -- 10. determinism and round trip ---------------------------------------------------------

def c10_cli_determinism(scale: float = 1.0, seed: int = 0) -> tuple[bool, str]:
    from .cli import main

    names = fixture_names()
    roundtrip = all(loads_scenario(load_scenario(n).dumps()) == load_scenario(n) for n in names)
    commands = [
        ["consistency", "--scenario", "tree4", "--utility", "cvar", "--trials", "2000", "--seed", str(seed + 7)],
        ["dual-check", "--scenario", "two_point", "--utility", "entropic", "--payoff", "f"],
        ["conditional", "--scenario", "tree4", "--utility", "cvar", "--payoff", "g"],
    ]
    identical = True
    for cmd in commands:
        outs = []
        for _ in range(2):
            buf = io.StringIO()
            with redirect_stdout(buf):
                main(cmd + ["--format", "structured"])
            outs.append(buf.getvalue().encode())
        identical &= outs[0] == outs[1] and len(outs[0]) > 0
    return roundtrip and identical, f"round trip on {len(names)} fixtures={roundtrip}, byte-identical reports={identical}"


CRITERIA: list[tuple[str, str, Callable[..., tuple[bool, str]], float]] = [
    ("C1", "norm axioms and unit ball", c1_norm_axioms, 10.0),
    ("C2", "Hölder bound", c2_holder, 10.0),
    ("C3", "OCE axioms", c3_oce_axioms, 30.0),
    ("C4", "sub-homogeneity", c4_subhomogeneity, 5.0),
    ("C5", "SSD equivalence", c5_ssd, 10.0),
    ("C6", "static strong duality", c6_static_duality, 60.0),
    ("C7", "conditional dual representation", c7_conditional_duality, 60.0),
    ("C8", "time consistency", c8_time_consistency, 120.0),
    ("C9", "acceptance-set properties", c9_acceptance_sets, 20.0),
    ("C10", "CLI determinism and round trip", c10_cli_determinism, 5.0),
]


def run_criterion(name: str, scale: float = 1.0, seed: int = 0) -> CriterionResult:
    for key, title, fn, budget in CRITERIA:
        if key == name:
            start = time.perf_counter()
            passed, detail = fn(scale=scale, seed=seed)
            return CriterionResult(key, title, bool(passed), detail, time.perf_counter() - start, budget)
    raise KeyError(name)


def run_all(scale: float = 1.0, seed: int = 0) -> list[CriterionResult]:
    return [run_criterion(key, scale, seed) for key, *_ in CRITERIA]
