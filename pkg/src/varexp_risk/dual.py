"""Dual feasible densities, minimal penalties and the static robust representation.

For ``u = v(<w, .>)`` the minimal penalty of a density ``h`` is finite only
when every ``h_i`` is a nonnegative multiple ``q_i w`` of the utility weight;
then it equals ``sum_i mu_i phi(q_i)`` with ``phi`` the concave conjugate of
the core (relative entropy for the exponential core, the indicator of
``b <= q <= a`` for piecewise-linear cores). The dual search therefore runs
over probability vectors ``pi_i = mu_i q_i`` on the outcome simplex.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog, minimize

from .errors import InfeasibleDensity, StrategyUnavailable, ValidationError
from .oce import SOLVER_TOL, Utility, rho, scalarize
from .ordered import FEASIBILITY_TOL, as_payoff, in_dual_feasible, pairing
from .space import FiniteMeasureSpace

DEFAULT_BOX = 20.0
GRID_RESOLUTION = 1000
PARALLEL_TOL = 1e-10
# coarse-grid size per simplex dimension; zooming takes it past GRID_RESOLUTION
_COARSE = {1: 1, 2: 1000, 3: 200, 4: 60}
_ZOOM_HALF_WIDTH = 4


@dataclass(frozen=True)
class PenaltyValue:
    value: float
    method: str  # "closed-form" | "box" | "acceptance"
    exact: bool = True
    box: float | None = None


@dataclass(frozen=True)
class DualResult:
    value: float
    density: np.ndarray
    probabilities: np.ndarray
    method: str
    evaluations: int


def density_coefficients(h, u: Utility, tol: float = PARALLEL_TOL) -> np.ndarray:
    """``q`` with ``h_i = q_i w``; NaN where ``h_i`` is not parallel to ``w``."""
    H = as_payoff(h)
    w = u.w
    q = (H @ w) / float(w @ w)
    resid = np.linalg.norm(H - q[..., None] * w, axis=-1)
    scale = np.maximum(1.0, np.linalg.norm(H, axis=-1))
    return np.where(resid <= tol * scale, q, np.nan)


def density_from_probabilities(space: FiniteMeasureSpace, pi, u: Utility) -> np.ndarray:
    """``h_i = (pi_i / mu_i) w`` for a probability vector ``pi`` on outcomes."""
    q = np.asarray(pi, dtype=float) / space.weights
    return q[..., None] * u.w


def reference_density(space: FiniteMeasureSpace, u: Utility) -> np.ndarray:
    return density_from_probabilities(space, space.weights, u)


def closed_form_penalty(weights, q, u: Utility) -> np.ndarray:
    """``sum_i weights_i phi(q_i)`` over the last axis; ``inf`` for NaN ``q``."""
    q = np.asarray(q, dtype=float)
    phi = np.where(np.isnan(q), np.inf, u.conjugate(np.nan_to_num(q, nan=1.0)))
    with np.errstate(invalid="ignore"):
        terms = np.where(np.asarray(weights) > 0, np.asarray(weights) * phi, 0.0)
    return np.sum(terms, axis=-1)


# -- numerical penalties over a box ---------------------------------------

def _groups(space: FiniteMeasureSpace, level: int):
    ids = space.atom_ids(level)
    return ids, space.atom_masses(level)


def numerical_penalty(space: FiniteMeasureSpace, h, u: Utility, mode: str, level: int = 0,
                      select=None, box: float = DEFAULT_BOX) -> float:
    """Box-truncated penalty, a lower bound for the true supremum.

    ``mode="box"``: ``sup_f { <h, -f>_S - int_S rho_t(f) }``.
    ``mode="acceptance"``: ``sup { <h, -f>_S : rho_t(f) <= 0 on every atom }``.

    Both maximize over ``f`` in ``[-box, box]^{n x d}`` jointly with one cash
    level ``eta`` per atom of ``P_level``; ``select`` lists the atoms making up
    the region ``S`` (all atoms by default). The pairing is restricted to
    ``S`` but not normalized.
    """
    if mode not in ("box", "acceptance"):
        raise StrategyUnavailable(f"unknown numerical penalty mode {mode!r}")
    H = as_payoff(h)
    n, d = H.shape
    ids, masses = _groups(space, level)
    k = masses.size
    sel = np.zeros(k, dtype=bool)
    sel[list(range(k)) if select is None else list(select)] = True
    in_s = sel[ids]
    mu = space.weights
    cond = mu / masses[ids]
    if u.is_piecewise_linear:
        return _penalty_lp(H, u, mu, cond, ids, masses, sel, in_s, mode, box)
    return _penalty_smooth(H, u, mu, cond, ids, masses, sel, in_s, mode, box)


def _penalty_lp(H, u, mu, cond, ids, masses, sel, in_s, mode, box):
    n, d = H.shape
    k = masses.size
    a, b = u.slopes
    w = u.w
    nv = n * d + k + n
    fx = lambda i: slice(i * d, (i + 1) * d)
    eta = lambda g: n * d + g
    sv = lambda i: n * d + k + i

    rows, rhs = [], []
    for i in range(n):
        for slope in (a, b):
            r = np.zeros(nv)
            r[sv(i)] = 1.0
            r[fx(i)] = -slope * w
            r[eta(ids[i])] = slope
            rows.append(r)
            rhs.append(0.0)
    c = np.zeros(nv)
    for i in range(n):
        if in_s[i]:
            c[fx(i)] += -mu[i] * H[i]
    if mode == "acceptance":
        for g in range(k):
            r = np.zeros(nv)
            r[eta(g)] = -1.0
            for i in np.flatnonzero(ids == g):
                r[sv(i)] = -cond[i]
            rows.append(r)
            rhs.append(0.0)
    else:
        for g in np.flatnonzero(sel):
            c[eta(g)] += masses[g]
        for i in np.flatnonzero(in_s):
            c[sv(i)] += mu[i]
    bounds = [(-box, box)] * (n * d) + [(-box - 1.0, box + 1.0)] * k + [(None, None)] * n
    res = linprog(-c, A_ub=np.array(rows), b_ub=np.array(rhs), bounds=bounds, method="highs")
    if res.status != 0:
        raise StrategyUnavailable(f"penalty LP failed: {res.message}")
    return float(-res.fun)


def _penalty_smooth(H, u, mu, cond, ids, masses, sel, in_s, mode, box):
    n, d = H.shape
    k = masses.size
    g = u.gamma
    w = u.w
    lin = np.where(in_s[:, None], -mu[:, None] * H, 0.0).ravel()

    def split(x):
        return x[: n * d].reshape(n, d), x[n * d:]

    def expo(x):
        F, e = split(x)
        t = F @ w - e[ids]
        return F, e, t, np.exp(-g * t)

    bounds = [(-box, box)] * (n * d) + [(-box - 1.0, box + 1.0)] * k
    x0 = np.zeros(n * d + k)

    if mode == "box":
        ws = np.where(in_s, mu, 0.0)
        ms = np.where(sel, masses, 0.0)

        def negobj(x):
            F, e, t, ex = expo(x)
            val = lin @ x[: n * d] + ms @ e + ws @ (-np.expm1(-g * t) / g)
            gF = lin.reshape(n, d) + (ws * ex)[:, None] * w
            ge = ms - np.bincount(ids, weights=ws * ex, minlength=k)
            return -val, -np.concatenate([gF.ravel(), ge])

        res = minimize(negobj, x0, jac=True, method="L-BFGS-B", bounds=bounds,
                       options={"ftol": 1e-15, "gtol": 1e-12, "maxiter": 5000})
        return float(-res.fun)

    def negobj(x):
        return -(lin @ x[: n * d]), -np.concatenate([lin, np.zeros(k)])

    def cons(x):
        F, e, t, ex = expo(x)
        return e + np.bincount(ids, weights=cond * (-np.expm1(-g * t) / g), minlength=k)

    def cons_jac(x):
        F, e, t, ex = expo(x)
        J = np.zeros((k, n * d + k))
        for i in range(n):
            J[ids[i], i * d:(i + 1) * d] = cond[i] * ex[i] * w
        J[np.arange(k), n * d + np.arange(k)] = 1.0 - np.bincount(ids, weights=cond * ex, minlength=k)
        return J

    res = minimize(negobj, x0, jac=True, method="SLSQP", bounds=bounds,
                   constraints=[{"type": "ineq", "fun": cons, "jac": cons_jac}],
                   options={"ftol": 1e-14, "maxiter": 2000})
    if not res.success and np.min(cons(res.x)) < -1e-8:
        raise StrategyUnavailable(f"penalty SLSQP failed: {res.message}")
    return float(-res.fun)


def penalty_minimal(space: FiniteMeasureSpace, h, u: Utility, z=None, strategy: str = "closed-form",
                    box: float = DEFAULT_BOX) -> PenaltyValue:
    """Minimal penalty ``sup_f {<g, -f> - rho(f)}`` of a feasible density.

    Strategies: ``closed-form`` (exact), ``box`` (sup over ``f`` in a box) and
    ``acceptance`` (sup of ``<g, -f>`` over accepted ``f`` in a box). The two
    numerical strategies return lower bounds tagged with the box size.
    """
    z = u.w / float(u.w @ u.w) if z is None else np.asarray(z, dtype=float)
    u.check_numeraire(z)
    if not in_dual_feasible(space, h, z):
        raise InfeasibleDensity("density is not dual feasible (needs h >= 0 and E<h, z> = 1)")
    if strategy == "closed-form":
        q = density_coefficients(h, u)
        return PenaltyValue(float(closed_form_penalty(space.weights, q, u)), "closed-form")
    if strategy in ("box", "acceptance"):
        return PenaltyValue(numerical_penalty(space, h, u, strategy, box=box), strategy, exact=False, box=box)
    raise StrategyUnavailable(f"unknown penalty strategy {strategy!r}")


# -- dual search over the outcome simplex ----------------------------------

def dual_objective_probabilities(Y, weights, pi, u: Utility) -> np.ndarray:
    """``-<pi, Y> - sum_i weights_i phi(pi_i / weights_i)``, ``-inf`` off the penalty domain."""
    pi = np.asarray(pi, dtype=float)
    q = pi / weights
    pen = np.sum(weights * u.conjugate(q), axis=-1)
    return -(pi @ Y) - pen


def _simplex_grid(n: int, N: int) -> np.ndarray:
    if n == 1:
        return np.ones((1, 1))
    axes = np.meshgrid(*([np.arange(N + 1)] * (n - 1)), indexing="ij")
    head = np.stack([a.ravel() for a in axes], axis=-1)
    head = head[head.sum(axis=1) <= N]
    pts = np.concatenate([head, N - head.sum(axis=1, keepdims=True)], axis=1)
    return pts / N


def _grid_search(Y, weights, u: Utility, resolution: int):
    n = Y.size
    if n == 1:
        return float(dual_objective_probabilities(Y, weights, np.ones(1), u)), np.ones(1), 1
    N = min(resolution, _COARSE.get(n, 20))
    cand = np.vstack([_simplex_grid(n, N), weights[None, :]])
    vals = dual_objective_probabilities(Y, weights, cand, u)
    evals = len(cand)
    j = int(np.argmax(vals))
    best, best_val = cand[j], vals[j]
    offsets = np.array(list(itertools.product(range(-_ZOOM_HALF_WIDTH, _ZOOM_HALF_WIDTH + 1), repeat=n - 1)),
                       dtype=float)
    step = 1.0 / N
    for _ in range(400):
        if step < 1e-13:
            break
        head = best[:-1] + step * offsets
        pts = np.concatenate([head, 1.0 - head.sum(axis=1, keepdims=True)], axis=1)
        pts = pts[np.all(pts >= 0.0, axis=1)]
        vals = dual_objective_probabilities(Y, weights, pts, u)
        evals += len(pts)
        j = int(np.argmax(vals))
        if vals[j] > best_val:
            best, best_val = pts[j], vals[j]
        else:
            step *= 0.5
    return float(best_val), best, evals


def project_capped_simplex(y, lo, hi, iterations: int = 60) -> np.ndarray:
    """Euclidean projection onto ``{x : lo <= x <= hi, sum x = 1}`` by bisection on the shift."""
    y, lo, hi = (np.asarray(v, dtype=float) for v in (y, lo, hi))
    if lo.sum() > 1.0 + 1e-12 or hi.sum() < 1.0 - 1e-12:
        raise ValidationError("capped simplex is empty")
    a, b = float(np.min(y - hi)), float(np.max(y - lo))
    for _ in range(iterations):
        tau = 0.5 * (a + b)
        if np.clip(y - tau, lo, hi).sum() > 1.0:
            a = tau
        else:
            b = tau
    x = np.clip(y - 0.5 * (a + b), lo, hi)
    return x / x.sum()


def _ascent(Y, weights, u: Utility, iterations: int):
    """Best iterate of a first-order ascent on the simplex.

    Exponential cores use exponentiated-gradient (mirror) steps, which stay
    strictly inside the simplex where the entropy gradient is finite.
    Piecewise-linear cores use projected subgradient steps onto the capped
    simplex ``b mu <= pi <= a mu``.
    """
    if u.is_piecewise_linear:
        a, b = u.slopes
        lo, hi = b * weights, np.minimum(a * weights, 1.0)
        pi = project_capped_simplex(weights, lo, hi)
    else:
        pi = weights.copy()
    best, best_val = pi, float(dual_objective_probabilities(Y, weights, pi, u))
    scale = max(1.0, float(np.ptp(Y)))
    evals = 1
    for k in range(iterations):
        if u.is_piecewise_linear:
            grad = -Y - np.mean(-Y)
            norm = float(np.linalg.norm(grad))
            if norm == 0.0:
                break
            nxt = project_capped_simplex(pi + grad / (norm * math.sqrt(k + 1.0)), lo, hi)
            if np.max(np.abs(nxt - pi)) <= 1e-15:
                break
            pi = nxt
        else:
            grad = -Y - np.log(pi / weights) / u.gamma
            logits = np.log(pi) + 0.5 * u.gamma * (grad - grad.max())
            pi = np.exp(logits - logits.max())
            pi /= pi.sum()
        val = float(dual_objective_probabilities(Y, weights, pi, u))
        evals += 1
        if val > best_val:
            best, best_val = pi, val
        elif not u.is_piecewise_linear and abs(val - best_val) <= 1e-15 * scale:
            break
    return best_val, best, evals


def dual_search(Y, weights, u: Utility, method: str = "auto", resolution: int = GRID_RESOLUTION,
                iterations: int = 5000):
    """``sup_pi {-<pi, Y> - penalty(pi)}`` over the simplex; returns ``(value, pi, method, evals)``."""
    Y = np.asarray(Y, dtype=float)
    weights = np.asarray(weights, dtype=float)
    if method == "auto":
        method = "grid" if Y.size <= 4 else "ascent"
    if method == "grid":
        val, pi, ev = _grid_search(Y, weights, u, resolution)
    elif method == "ascent":
        val, pi, ev = _ascent(Y, weights, u, iterations)
    else:
        raise StrategyUnavailable(f"unknown dual search {method!r}")
    return val, pi, method, ev


def dual_value(space: FiniteMeasureSpace, f, u: Utility, z=None, method: str = "auto",
               resolution: int = GRID_RESOLUTION, iterations: int = 5000) -> DualResult:
    """Sup of ``<g, -f> - alpha_min(g)`` over the dual feasible set.

    ``grid`` (default up to four outcomes) zooms a uniform simplex grid;
    ``ascent`` runs projected subgradient ascent. Either way the result is a
    lower bound on the true supremum, hence never above ``rho(f)`` beyond
    rounding.
    """
    if z is not None:
        u.check_numeraire(z)
    Y = scalarize(f, u)
    if Y.shape != (space.n,):
        raise ValidationError(f"expected a single payoff on {space.n} outcomes")
    val, pi, method, ev = dual_search(Y, space.weights, u, method, resolution, iterations)
    return DualResult(val, density_from_probabilities(space, pi, u), pi, method, ev)


def dual_objective(space: FiniteMeasureSpace, f, h, u: Utility) -> float:
    """``<g, -f> - alpha_min(g)`` with the closed-form penalty (``-inf`` if infinite)."""
    pen = closed_form_penalty(space.weights, density_coefficients(h, u), u)
    return float(pairing(space, h, -as_payoff(f)) - pen)


def acceptance_test(space: FiniteMeasureSpace, f, u: Utility, tol: float = 1e-8):
    """Membership in the acceptance set: ``rho(f) <= tol``."""
    out = rho(space, f, u) <= tol
    return bool(out) if np.ndim(out) == 0 else out


def polar_cone_test(space: FiniteMeasureSpace, h, u: Utility, z=None, samples: int = 1000,
                    seed: int = 0, tol: float = 1e-7) -> bool:
    """Try to falsify ``<g, f> >= 0`` for all accepted ``f``.

    Negative coordinates of ``h`` are attacked directly with the accepted
    unit vectors ``e_ij >= 0``; then ``samples`` random payoffs are shifted
    onto the acceptance boundary (plus a random nonnegative cash slack).
    ``False`` means a counterexample was found.
    """
    H = as_payoff(h)
    z = u.w / float(u.w @ u.w) if z is None else np.asarray(z, dtype=float)
    n, d = H.shape
    for i, j in zip(*np.nonzero(H < -tol)):
        e = np.zeros((n, d))
        e[i, j] = 1.0
        if acceptance_test(space, e, u) and pairing(space, H, e) < -tol:
            return False
    rng = np.random.default_rng(seed)
    F = rng.normal(size=(samples, n, d)) * rng.uniform(0.1, 3.0, size=(samples, 1, 1))
    shift = rho(space, F, u, SOLVER_TOL) + rng.exponential(0.5, size=samples) * (rng.random(samples) < 0.5)
    F = F + shift[:, None, None] * z
    vals = np.sum(H * F, axis=-1) @ space.weights
    return bool(np.all(vals >= -tol))
