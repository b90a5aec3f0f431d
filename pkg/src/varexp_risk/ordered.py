"""The ordered value space E = R^d with the nonnegative orthant as cone.

Random vectors are plain arrays of shape ``(n, d)`` (or ``(..., n, d)`` for
batches); dual densities share that layout. One-dimensional input of shape
``(n,)`` is read as ``d = 1``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError
from .space import FiniteMeasureSpace

ORDER_TOL = 1e-12
FEASIBILITY_TOL = 1e-10


def as_payoff(values, d: int | None = None) -> np.ndarray:
    """Coerce to a float array with outcome and coordinate axes last."""
    f = np.asarray(values, dtype=float)
    if f.ndim == 0:
        raise ValidationError("a random vector needs an outcome axis")
    if f.ndim == 1:
        f = f[:, None]
    if d is not None and f.shape[-1] != d:
        raise ValidationError(f"expected dimension {d}, got {f.shape[-1]}")
    if not np.all(np.isfinite(f)):
        raise ValidationError("random vector entries must be finite")
    return f


@dataclass(frozen=True)
class OrderedSpace:
    """Orthant-ordered R^d with an interior numeraire ``z``."""

    numeraire: tuple[float, ...] = (1.0,)
    z: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        z = np.asarray(self.numeraire, dtype=float).reshape(-1)
        if z.size == 0 or not np.all(np.isfinite(z)):
            raise ValidationError("numeraire must be a finite nonempty vector")
        if np.min(z) <= 0.0:
            raise ValidationError("numeraire must lie in the interior of the orthant (all coordinates > 0)")
        z.setflags(write=False)
        object.__setattr__(self, "numeraire", tuple(float(c) for c in z))
        object.__setattr__(self, "z", z)

    @property
    def dim(self) -> int:
        return self.z.size

    def cash(self, m, n: int | None = None) -> np.ndarray:
        """``m * z`` per outcome; ``m`` is a scalar or an array over outcomes."""
        m = np.asarray(m, dtype=float)
        if m.ndim == 0:
            if n is None:
                raise ValidationError("scalar cash needs the number of outcomes")
            m = np.full(n, float(m))
        return m[..., None] * self.z

    def default_weight(self) -> np.ndarray:
        """The dual-cone vector ``z / |z|^2``, which pairs with ``z`` to one."""
        return self.z / float(self.z @ self.z)


def leq_k(f1, f2, tol: float = ORDER_TOL) -> bool:
    """``f1 <=_K f2``: every coordinate of ``f2 - f1`` is >= ``-tol``."""
    a, b = as_payoff(f1), as_payoff(f2)
    if a.shape != b.shape:
        raise ValidationError(f"shape mismatch {a.shape} vs {b.shape}")
    return bool(np.all(b - a >= -tol))


def pairing(space: FiniteMeasureSpace, h, f) -> np.ndarray | float:
    """``sum_i mu_i <h_i, f_i>``; broadcasts over leading batch axes."""
    H, F = as_payoff(h), as_payoff(f)
    if H.shape[-2:] != F.shape[-2:] or H.shape[-2] != space.n:
        raise ValidationError(f"shape mismatch {H.shape} vs {F.shape} on {space.n} outcomes")
    out = np.sum(H * F, axis=-1) @ space.weights
    return float(out) if np.ndim(out) == 0 else out


def pointwise_pairing(h, f) -> np.ndarray:
    H, F = as_payoff(h), as_payoff(f)
    if H.shape[-2:] != F.shape[-2:]:
        raise ValidationError(f"shape mismatch {H.shape} vs {F.shape}")
    return np.sum(H * F, axis=-1)


def in_dual_feasible(space: FiniteMeasureSpace, h, z, level: int = 0,
                     tol: float = FEASIBILITY_TOL) -> bool:
    """Membership of a density in the dual feasible set.

    Requires ``h >= 0`` coordinatewise and ``E[<h, z> | F_level] = 1``. At
    ``level = 0`` this is the integrated normalization; at ``level = T`` it is
    the pointwise one, ``<h(w), z> = 1`` for every outcome.
    """
    H = as_payoff(h)
    z = np.asarray(z, dtype=float)
    if H.shape != (space.n, z.size):
        return False
    if np.any(H < -tol):
        return False
    mass = space.conditional_expectation(H @ z, level)
    return bool(np.all(np.abs(mass - 1.0) <= tol))
