"""Variable-exponent modular, Luxemburg norm and dual exponents."""

from __future__ import annotations

import math

import numpy as np

from .errors import ValidationError
from .ordered import as_payoff, pairing
from .space import FiniteMeasureSpace

DEFAULT_TOL = 1e-10
MAX_BISECTIONS = 200
HOLDER_CONSTANT = 2.0


class ExponentFunction:
    """Per-outcome exponent ``p(w)`` restricted to the open interval (1, inf)."""

    __slots__ = ("_p",)

    def __init__(self, values):
        p = np.asarray(values, dtype=float).reshape(-1)
        if p.size == 0:
            raise ValidationError("exponent needs at least one value")
        if not np.all(np.isfinite(p)) or np.any(p <= 1.0):
            raise ValidationError("exponents must satisfy 1 < p < inf")
        p.setflags(write=False)
        self._p = p

    @classmethod
    def constant(cls, q: float, n: int) -> "ExponentFunction":
        return cls(np.full(n, float(q)))

    @property
    def values(self) -> np.ndarray:
        return self._p

    @property
    def p_minus(self) -> float:
        return float(self._p.min())

    @property
    def p_plus(self) -> float:
        return float(self._p.max())

    def dual(self) -> "ExponentFunction":
        return ExponentFunction(self._p / (self._p - 1.0))

    def __len__(self):
        return self._p.size

    def __eq__(self, other):
        return isinstance(other, ExponentFunction) and np.array_equal(self._p, other._p)

    def __repr__(self):
        return f"ExponentFunction({self._p.tolist()})"


def dual_exponent(p: ExponentFunction) -> ExponentFunction:
    return p.dual()


def _magnitudes(f) -> np.ndarray:
    return np.linalg.norm(as_payoff(f), axis=-1)


def _check(space: FiniteMeasureSpace, p: ExponentFunction, a: np.ndarray) -> None:
    if len(p) != space.n or a.shape[-1] != space.n:
        raise ValidationError(f"exponent/payoff length does not match {space.n} outcomes")


def modular_from_magnitudes(a, weights, p) -> np.ndarray:
    """``sum_i mu_i a_i^{p_i}`` over the last axis, batched."""
    a = np.asarray(a, dtype=float)
    with np.errstate(divide="ignore", over="ignore"):
        terms = np.exp(np.asarray(p) * np.log(a))
    return np.sum(np.asarray(weights) * terms, axis=-1)


def modular(space: FiniteMeasureSpace, f, p: ExponentFunction):
    """``sum_i mu_i |f_i|^{p_i}`` with the Euclidean norm on each ``f_i``."""
    a = _magnitudes(f)
    _check(space, p, a)
    out = modular_from_magnitudes(a, space.weights, p.values)
    return float(out) if np.ndim(out) == 0 else out


def luxemburg_from_magnitudes(a, weights, p, tol: float = DEFAULT_TOL) -> np.ndarray:
    """Batched bisection for ``inf{lam > 0 : modular(a / lam) <= 1}``.

    ``a``, ``weights`` and ``p`` broadcast over leading axes; the outcome axis
    is last. The bracket starts at ``[0, max a]`` (valid for probability
    weights) and is halved until narrower than ``min(tol, tol * max a)``.
    """
    if not tol > 0:
        raise ValidationError("tol must be positive")
    a = np.asarray(a, dtype=float)
    shape = np.broadcast_shapes(a.shape, np.shape(weights), np.shape(p))
    a = np.broadcast_to(a, shape)
    logw = np.log(np.broadcast_to(np.asarray(weights, dtype=float), shape))
    p = np.broadcast_to(np.asarray(p, dtype=float), shape)
    with np.errstate(divide="ignore"):
        loga = np.log(a)

    hi = a.max(axis=-1)
    lo = np.zeros_like(hi)
    top = float(hi.max(initial=0.0))
    if top == 0.0:
        return hi
    target = tol * min(1.0, top)
    iters = min(MAX_BISECTIONS, max(1, math.ceil(math.log2(top / target))))
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
            logm = np.log(mid)[..., None]
            # log-sum-exp keeps huge ratios a/lam from overflowing
            val = np.sum(np.exp(logw + p * (loga - logm)), axis=-1)
        inside = val <= 1.0
        hi = np.where(inside, mid, hi)
        lo = np.where(inside, lo, mid)
    return 0.5 * (lo + hi)


def luxemburg_norm(space: FiniteMeasureSpace, f, p: ExponentFunction, tol: float = DEFAULT_TOL):
    a = _magnitudes(f)
    _check(space, p, a)
    out = luxemburg_from_magnitudes(a, space.weights, p.values, tol)
    return float(out) if np.ndim(out) == 0 else out


def holder_gap(space: FiniteMeasureSpace, f, h, p: ExponentFunction, tol: float = DEFAULT_TOL):
    """``2 |f|_p |h|_p' - |<h, f>|``; nonnegative by the variable-exponent Hölder bound."""
    nf = luxemburg_norm(space, f, p, tol)
    nh = luxemburg_norm(space, h, p.dual(), tol)
    return HOLDER_CONSTANT * nf * nh - np.abs(pairing(space, h, f))
