"""Utilities and the optimized certainty equivalent (OCE).

A utility on E is a scalar core ``v`` composed with a dual-cone weight ``w``,
``u(x) = v(<w, x>)``, so every OCE problem reduces to one dimension:

    S_u(f) = sup_eta { eta + sum_i mu_i v(Y_i - eta) },   Y_i = <w, f_i>.

The solvers here work on the scalarized payoff ``Y`` and broadcast over any
leading batch axes; the conditional (per-atom) problems in ``dynamic`` reuse
them with conditional weights.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InadmissibleUtility, NotInvertible, ValidationError
from .ordered import as_payoff
from .space import FiniteMeasureSpace

SOLVER_TOL = 1e-8
INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0
FAMILIES = ("exponential", "cvar", "piecewise")


@dataclass(frozen=True)
class Utility:
    """Admissible utility ``u(x) = v(<weight, x>)``.

    Cores:
      * ``exponential``: ``v(t) = (1 - exp(-gamma t)) / gamma``
      * ``cvar``: ``v(t) = min(t, 0) / (1 - alpha)``
      * ``piecewise``: ``v(t) = a t`` for ``t < 0`` and ``b t`` for ``t >= 0``,
        with ``a >= 1 >= b >= 0``

    Each core is concave, nondecreasing, ``v(0) = 0`` and has 1 in its
    superdifferential at 0, which is what makes ``S_u(0) = 0``.
    """

    family: str
    gamma: float | None = None
    alpha: float | None = None
    a: float | None = None
    b: float | None = None
    weight: tuple[float, ...] = (1.0,)

    def __post_init__(self):
        w = tuple(float(x) for x in np.asarray(self.weight, dtype=float).reshape(-1))
        object.__setattr__(self, "weight", w)
        if not w or not all(math.isfinite(x) and x >= 0.0 for x in w) or sum(w) == 0.0:
            raise InadmissibleUtility("weight must be a nonzero vector in the dual cone (all coordinates >= 0)")
        if self.family == "exponential":
            if self.gamma is None or not (math.isfinite(self.gamma) and self.gamma > 0):
                raise InadmissibleUtility("exponential core needs gamma > 0")
        elif self.family == "cvar":
            if self.alpha is None or not 0.0 < self.alpha < 1.0:
                raise InadmissibleUtility("cvar core needs 0 < alpha < 1")
        elif self.family == "piecewise":
            if self.a is None or self.b is None or not (math.isfinite(self.a) and self.a >= 1.0 >= self.b >= 0.0):
                raise InadmissibleUtility("piecewise core needs slopes a >= 1 >= b >= 0")
        else:
            raise InadmissibleUtility(f"unknown utility family {self.family!r}; expected one of {FAMILIES}")

    @classmethod
    def exponential(cls, gamma: float, weight=(1.0,)) -> "Utility":
        return cls("exponential", gamma=float(gamma), weight=weight)

    @classmethod
    def cvar(cls, alpha: float, weight=(1.0,)) -> "Utility":
        return cls("cvar", alpha=float(alpha), weight=weight)

    @classmethod
    def piecewise(cls, a: float, b: float, weight=(1.0,)) -> "Utility":
        return cls("piecewise", a=float(a), b=float(b), weight=weight)

    @property
    def w(self) -> np.ndarray:
        return np.asarray(self.weight)

    @property
    def is_piecewise_linear(self) -> bool:
        return self.family != "exponential"

    @property
    def slopes(self) -> tuple[float, float]:
        """``(a, b)``: left and right slopes at 0 of a piecewise-linear core."""
        if self.family == "cvar":
            return 1.0 / (1.0 - self.alpha), 0.0
        if self.family == "piecewise":
            return self.a, self.b
        raise ValidationError("exponential core is not piecewise linear")

    def check_numeraire(self, z, tol: float = 1e-10) -> None:
        z = np.asarray(z, dtype=float).reshape(-1)
        if z.size != len(self.weight):
            raise InadmissibleUtility(f"weight has dimension {len(self.weight)}, numeraire {z.size}")
        if abs(float(self.w @ z) - 1.0) > tol:
            raise InadmissibleUtility(f"<weight, numeraire> = {float(self.w @ z)!r}, must equal 1")

    def core(self, t):
        t = np.asarray(t, dtype=float)
        if self.family == "exponential":
            return -np.expm1(-self.gamma * t) / self.gamma
        a, b = self.slopes
        return np.where(t < 0.0, a * t, b * t)

    def __call__(self, x):
        """``u(x)`` for ``x`` with the coordinate axis last."""
        return self.core(np.asarray(x, dtype=float) @ self.w)

    def inverse(self, s):
        s = np.asarray(s, dtype=float)
        if self.family == "exponential":
            with np.errstate(invalid="ignore", divide="ignore"):
                out = -np.log1p(-self.gamma * s) / self.gamma
            if np.any(~np.isfinite(out)):
                raise NotInvertible("value outside the range of the exponential core")
            return out
        a, b = self.slopes
        if b == 0.0:
            raise NotInvertible(f"{self.family} core is flat on t >= 0 and has no inverse")
        return np.where(s < 0.0, s / a, s / b)

    def conjugate(self, q):
        """``phi(q) = sup_t { v(t) - q t }``; the per-outcome dual penalty density."""
        q = np.asarray(q, dtype=float)
        if self.family == "exponential":
            from scipy.special import xlogy
            with np.errstate(invalid="ignore"):
                out = (1.0 - q + xlogy(q, q)) / self.gamma
            return np.where(q >= 0.0, out, np.inf)
        a, b = self.slopes
        eps = 1e-12
        return np.where((q >= b - eps) & (q <= a + eps), 0.0, np.inf)

    def to_dict(self) -> dict:
        d: dict = {"family": self.family}
        for key in ("gamma", "alpha", "a", "b"):
            if getattr(self, key) is not None:
                d[key] = getattr(self, key)
        d["weight"] = list(self.weight)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Utility":
        known = {"family", "gamma", "alpha", "a", "b", "weight"}
        extra = set(d) - known
        if extra:
            raise InadmissibleUtility(f"unknown utility fields {sorted(extra)}")
        if "family" not in d:
            raise InadmissibleUtility("utility needs a 'family'")
        kw = {k: (float(v) if k != "weight" and k != "family" else v) for k, v in d.items()}
        if "weight" in kw:
            kw["weight"] = tuple(kw["weight"])
        return cls(**kw)


@dataclass(frozen=True)
class OceResult:
    value: np.ndarray | float
    eta_star: np.ndarray | float
    iterations: int
    method: str


def _as_batch(Y, weights):
    Y = np.asarray(Y, dtype=float)
    weights = np.asarray(weights, dtype=float)
    shape = np.broadcast_shapes(Y.shape, weights.shape)
    return np.broadcast_to(Y, shape), np.broadcast_to(weights, shape)


def objective_scalar(Y, weights, u: Utility, eta) -> np.ndarray:
    """``eta + sum_i weights_i v(Y_i - eta)``; ``eta`` may carry an extra trailing axis of candidates."""
    Y, weights = _as_batch(Y, weights)
    eta = np.asarray(eta, dtype=float)
    if eta.ndim == Y.ndim:
        vals = u.core(Y[..., None, :] - eta[..., :, None])
        return eta + np.sum(weights[..., None, :] * vals, axis=-1)
    return eta + np.sum(weights * u.core(Y - eta[..., None]), axis=-1)


def _bracket(Y, weights):
    member = weights > 0.0
    m = np.where(member, Y, np.inf).min(axis=-1)
    M = np.where(member, Y, -np.inf).max(axis=-1)
    return m - 1.0, M + 1.0


def _golden(Y, weights, u: Utility, tol: float):
    lo, hi = _bracket(Y, weights)
    width = float(np.max(hi - lo, initial=0.0))
    iters = max(1, math.ceil(math.log(tol / width) / math.log(INV_PHI))) if width > tol else 1
    c = hi - INV_PHI * (hi - lo)
    d = lo + INV_PHI * (hi - lo)
    fc = objective_scalar(Y, weights, u, c)
    fd = objective_scalar(Y, weights, u, d)
    for _ in range(iters):
        right = fc < fd  # maximum lies in [c, hi]
        lo = np.where(right, c, lo)
        hi = np.where(right, hi, d)
        new_c = np.where(right, d, hi - INV_PHI * (hi - lo))
        new_d = np.where(right, lo + INV_PHI * (hi - lo), c)
        fx = objective_scalar(Y, weights, u, np.where(right, new_d, new_c))
        fc, fd = np.where(right, fd, fx), np.where(right, fx, fc)
        c, d = new_c, new_d
    eta = np.where(fc >= fd, c, d)
    return np.maximum(fc, fd), eta, iters


def _enumerate(Y, weights, u: Utility):
    vals = objective_scalar(Y, weights, u, Y)
    k = np.argmax(vals, axis=-1)
    eta = np.take_along_axis(Y, k[..., None], axis=-1)[..., 0]
    return np.max(vals, axis=-1), eta, 1


def oce_scalar(Y, weights, u: Utility, tol: float = SOLVER_TOL) -> OceResult:
    """Maximize ``eta + sum_i weights_i v(Y_i - eta)`` over real ``eta``.

    ``Y`` and ``weights`` broadcast; the outcome axis is last and entries with
    zero weight are ignored when bracketing. Piecewise-linear cores are solved
    exactly by enumerating the kinks ``eta = Y_i``; the exponential core uses
    golden-section search on ``[min Y - 1, max Y + 1]`` down to a bracket of
    width ``tol``.
    """
    if not tol > 0:
        raise ValidationError("tol must be positive")
    Y, weights = _as_batch(Y, weights)
    if u.is_piecewise_linear:
        value, eta, iters = _enumerate(Y, weights, u)
        method = "breakpoint-enumeration"
    else:
        value, eta, iters = _golden(Y, weights, u, tol)
        method = "golden-section"
    if value.ndim == 0:
        value, eta = float(value), float(eta)
    return OceResult(value, eta, iters, method)


def scalarize(f, u: Utility) -> np.ndarray:
    F = as_payoff(f)
    if F.shape[-1] != len(u.weight):
        raise ValidationError(f"payoff dimension {F.shape[-1]} does not match utility weight {len(u.weight)}")
    return F @ u.w


def _checked(space: FiniteMeasureSpace, f, u: Utility) -> np.ndarray:
    Y = scalarize(f, u)
    if Y.shape[-1] != space.n:
        raise ValidationError(f"payoff has {Y.shape[-1]} outcomes, space has {space.n}")
    return Y


def oce(space: FiniteMeasureSpace, f, u: Utility, tol: float = SOLVER_TOL) -> OceResult:
    """Optimized certainty equivalent ``S_u(f)``; ``f`` may be a batch ``(..., n, d)``."""
    return oce_scalar(_checked(space, f, u), space.weights, u, tol)


def rho(space: FiniteMeasureSpace, f, u: Utility, tol: float = SOLVER_TOL):
    """The convex risk measure ``-S_u(f)``."""
    return -oce(space, f, u, tol).value


def objective(space: FiniteMeasureSpace, f, u: Utility, eta):
    return objective_scalar(_checked(space, f, u), space.weights, u, eta)


def certainty_equivalent(space: FiniteMeasureSpace, f, u: Utility):
    """``v^{-1}(E v(<w, f>))``; raises ``NotInvertible`` for flat cores."""
    Y = _checked(space, f, u)
    out = u.inverse(np.sum(space.weights * u.core(Y), axis=-1))
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class SsdReport:
    su_order: int
    cu_order: int
    su_diff: float
    cu_diff: float

    @property
    def decisive(self) -> bool:
        return self.su_order != 0 and self.cu_order != 0

    @property
    def agree(self) -> bool:
        return not self.decisive or self.su_order == self.cu_order


def _sign(x: float, tol: float) -> int:
    return 0 if abs(x) <= tol else (1 if x > 0 else -1)


def ssd_compare(space: FiniteMeasureSpace, f1, f2, u: Utility, tol: float = 1e-6) -> SsdReport:
    """Compare two payoffs by OCE and by certainty equivalent.

    An order is reported as 0 when the difference is within ``tol``.
    """
    s = oce(space, np.stack([as_payoff(f1), as_payoff(f2)]), u, min(tol, SOLVER_TOL)).value
    c = certainty_equivalent(space, np.stack([as_payoff(f1), as_payoff(f2)]), u)
    ds, dc = float(s[0] - s[1]), float(c[0] - c[1])
    return SsdReport(_sign(ds, tol), _sign(dc, tol), ds, dc)


def subhomogeneity_gap(space: FiniteMeasureSpace, f, u: Utility, a: float, tol: float = SOLVER_TOL):
    """Nonnegative (up to solver error) by sub-homogeneity of the OCE.

    ``a S(f) - S(a f)`` for ``a > 1`` and ``S(a f) - a S(f)`` for ``0 <= a <= 1``.
    """
    a = np.asarray(a, dtype=float)
    if np.any(a < 0):
        raise ValidationError("scaling factor must be nonnegative")
    F = as_payoff(f)
    s1 = oce(space, F, u, tol).value
    sa = oce(space, a[..., None, None] * F, u, tol).value
    out = np.where(a > 1.0, a * s1 - sa, sa - a * s1)
    return float(out) if np.ndim(out) == 0 else out
