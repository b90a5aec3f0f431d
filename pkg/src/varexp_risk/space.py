"""Finite probability spaces with a filtration of refining partitions."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import LevelError, ValidationError

NORMALIZATION_SLACK = 1e-9


@dataclass(frozen=True)
class Atom:
    level: int
    members: tuple[int, ...]
    mass: float


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


class FiniteMeasureSpace:
    """Outcomes ``0..n-1`` with strictly positive weights and a filtration.

    ``levels`` is a sequence of partitions ``P_0 .. P_T``; each partition is a
    sequence of atoms and each atom a sequence of outcome indices. ``P_0`` must
    be the single atom of all outcomes, ``P_T`` the singletons, and every level
    must refine the previous one. When omitted the filtration is
    ``[{all}, singletons]`` (or just ``[{all}]`` for ``n == 1``).

    Weights whose total is within ``1e-9`` of one are renormalized; anything
    else is rejected. Instances are immutable.
    """

    def __init__(
        self,
        weights: Sequence[float],
        levels: Sequence[Sequence[Sequence[int]]] | None = None,
        labels: Sequence[str] | None = None,
    ):
        mu = np.asarray(weights, dtype=float).reshape(-1)
        n = mu.size
        if n == 0:
            raise ValidationError("space needs at least one outcome")
        if not np.all(np.isfinite(mu)) or np.any(mu <= 0.0):
            raise ValidationError("weights must be finite and strictly positive")
        total = float(mu.sum())
        if abs(total - 1.0) > NORMALIZATION_SLACK:
            raise ValidationError(f"weights sum to {total!r}, expected 1")
        mu = mu / total

        if labels is None:
            labels = [f"w{i}" for i in range(n)]
        labels = tuple(str(s) for s in labels)
        if len(labels) != n or len(set(labels)) != n:
            raise ValidationError("labels must be unique, one per outcome")

        if levels is None:
            levels = [[list(range(n))]] if n == 1 else [[list(range(n))], [[i] for i in range(n)]]
        partitions = [tuple(tuple(sorted(int(i) for i in atom)) for atom in level) for level in levels]
        ids = np.stack([self._atom_ids(p, n, t) for t, p in enumerate(partitions)])
        self._check_filtration(partitions, ids, n)

        self._mu = _frozen(mu)
        self._labels = labels
        self._partitions = tuple(partitions)
        self._ids = _frozen(ids)
        self._masses = tuple(_frozen(np.bincount(ids[t], weights=mu, minlength=len(p)))
                             for t, p in enumerate(partitions))
        self._projectors: dict[int, np.ndarray] = {}

    @staticmethod
    def _atom_ids(partition, n: int, t: int) -> np.ndarray:
        ids = np.full(n, -1, dtype=np.intp)
        for k, atom in enumerate(partition):
            if not atom:
                raise ValidationError(f"level {t}: empty atom")
            for i in atom:
                if not 0 <= i < n:
                    raise ValidationError(f"level {t}: outcome index {i} out of range")
                if ids[i] != -1:
                    raise ValidationError(f"level {t}: outcome {i} appears in two atoms")
                ids[i] = k
        if np.any(ids < 0):
            missing = int(np.flatnonzero(ids < 0)[0])
            raise ValidationError(f"level {t}: outcome {missing} is not covered")
        return ids

    @staticmethod
    def _check_filtration(partitions, ids: np.ndarray, n: int) -> None:
        if len(partitions[0]) != 1:
            raise ValidationError("level 0 must be a single atom containing every outcome")
        if len(partitions[-1]) != n:
            raise ValidationError("last level must partition the outcomes into singletons")
        for t in range(1, len(partitions)):
            for k, atom in enumerate(partitions[t]):
                parents = set(ids[t - 1, list(atom)].tolist())
                if len(parents) != 1:
                    raise ValidationError(
                        f"level {t} does not refine level {t - 1}: atom {k} straddles {sorted(parents)}")

    # -- basic accessors -------------------------------------------------

    @property
    def n(self) -> int:
        return self._mu.size

    @property
    def weights(self) -> np.ndarray:
        return self._mu

    @property
    def labels(self) -> tuple[str, ...]:
        return self._labels

    @property
    def horizon(self) -> int:
        return len(self._partitions) - 1

    @property
    def partitions(self) -> tuple[tuple[tuple[int, ...], ...], ...]:
        return self._partitions

    def _level(self, t: int) -> int:
        if not isinstance(t, (int, np.integer)) or not 0 <= t <= self.horizon:
            raise LevelError(f"level {t!r} outside 0..{self.horizon}")
        return int(t)

    def atom_ids(self, t: int) -> np.ndarray:
        """Index of the level-``t`` atom containing each outcome."""
        return self._ids[self._level(t)]

    def atom_masses(self, t: int) -> np.ndarray:
        return self._masses[self._level(t)]

    def atoms_at(self, t: int) -> list[Atom]:
        t = self._level(t)
        return [Atom(t, members, float(m)) for members, m in zip(self._partitions[t], self._masses[t])]

    def conditional_weights(self, t: int) -> np.ndarray:
        """``(atoms, n)`` matrix; row ``k`` is the conditional law on atom ``k``."""
        t = self._level(t)
        ids = self._ids[t]
        k = len(self._partitions[t])
        W = np.zeros((k, self.n))
        W[ids, np.arange(self.n)] = self._mu / self._masses[t][ids]
        return W

    def projector(self, t: int) -> np.ndarray:
        """``(n, n)`` matrix of the conditional expectation onto level ``t``."""
        t = self._level(t)
        P = self._projectors.get(t)
        if P is None:
            P = _frozen(self.conditional_weights(t)[self._ids[t]])
            self._projectors[t] = P
        return P

    # -- conditional expectation ------------------------------------------

    def conditional_expectation(self, x, t: int, axis: int = -1) -> np.ndarray:
        """E[x | F_t] as a function on outcomes.

        ``axis`` selects the outcome axis of ``x``; use ``axis=-2`` for
        vector-valued arrays of shape ``(..., n, d)``.
        """
        x = np.asarray(x, dtype=float)
        if x.shape[axis] != self.n:
            raise ValidationError(f"expected {self.n} outcomes along axis {axis}, got {x.shape[axis]}")
        P = self.projector(t)
        moved = np.moveaxis(x, axis, -1)
        return np.moveaxis(moved @ P.T, -1, axis)

    def expectation(self, x, axis: int = -1) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.tensordot(np.moveaxis(x, axis, -1), self._mu, axes=([-1], [0]))

    def tower_check(self, x, s: int, t: int, tol: float = 1e-10) -> bool:
        s, t = self._level(s), self._level(t)
        if s > t:
            raise LevelError(f"tower check needs s <= t, got s={s}, t={t}")
        lhs = self.conditional_expectation(self.conditional_expectation(x, t), s)
        rhs = self.conditional_expectation(x, s)
        return bool(np.max(np.abs(lhs - rhs), initial=0.0) <= tol)

    def is_measurable(self, x, t: int, axis: int = -1, tol: float = 0.0) -> bool:
        """True when ``x`` is constant on every atom of ``P_t``."""
        x = np.moveaxis(np.asarray(x, dtype=float), axis, -1)
        ids = self.atom_ids(t)
        _, first = np.unique(ids, return_index=True)
        return bool(np.all(np.abs(x - x[..., first[ids]]) <= tol))

    def __eq__(self, other):
        if not isinstance(other, FiniteMeasureSpace):
            return NotImplemented
        return (self._labels == other._labels and self._partitions == other._partitions
                and np.array_equal(self._mu, other._mu))

    def __hash__(self):
        return hash((self._labels, self._partitions, self._mu.tobytes()))

    def __repr__(self):
        return f"FiniteMeasureSpace(n={self.n}, T={self.horizon})"


def conditional_expectation(space: FiniteMeasureSpace, x, t: int, axis: int = -1) -> np.ndarray:
    return space.conditional_expectation(x, t, axis=axis)


def atoms_at(space: FiniteMeasureSpace, t: int) -> list[Atom]:
    return space.atoms_at(t)


def tower_check(space: FiniteMeasureSpace, x, s: int, t: int, tol: float = 1e-10) -> bool:
    return space.tower_check(x, s, t, tol)


def tree_space(branching: Sequence[int], weights: Sequence[float] | None = None,
               labels: Sequence[str] | None = None) -> FiniteMeasureSpace:
    """Space whose filtration is a uniform-depth tree.

    ``branching[k]`` children per node at depth ``k``; leaves are ordered
    lexicographically, so every atom is a contiguous block of indices.
    Uniform weights by default.
    """
    n = int(np.prod(branching)) if len(branching) else 1
    levels = []
    block = n
    levels.append([list(range(n))])
    for b in branching:
        block //= b
        levels.append([list(range(k, k + block)) for k in range(0, n, block)])
    if weights is None:
        weights = np.full(n, 1.0 / n)
    return FiniteMeasureSpace(weights, levels, labels)


def random_space(rng: np.random.Generator, n: int, horizon: int) -> FiniteMeasureSpace:
    """Random weights and a random refining filtration of depth ``horizon``.

    Intermediate levels are produced by randomly splitting atoms; the last
    level is always the singletons. Requires ``horizon >= 1`` unless ``n == 1``.
    """
    weights = rng.dirichlet(np.ones(n)) + 1e-3
    weights /= weights.sum()
    perm = rng.permutation(n).tolist()
    levels = [[perm]]
    for _ in range(1, horizon):
        nxt = []
        for atom in levels[-1]:
            if len(atom) > 1 and rng.random() < 0.7:
                cut = int(rng.integers(1, len(atom)))
                nxt.extend([atom[:cut], atom[cut:]])
            else:
                nxt.append(atom)
        levels.append(nxt)
    if n > 1 or horizon > 0:
        levels.append([[i] for i in range(n)])
    return FiniteMeasureSpace(weights, levels)
