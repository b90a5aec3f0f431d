"""Scenario documents: a versioned JSON description of one desk-scale model.

Layout::

    {
      "schema": 1,
      "dimension": 1,
      "numeraire": [1.0],
      "outcomes": [{"label": "u", "probability": 0.5}, ...],
      "filtration": [[["u", "d"]], [["u"], ["d"]]],
      "exponent": [2.0, 3.0],
      "payoffs": {"f": [[0.0], [1.0]]},
      "utilities": {"entropic": {"family": "exponential", "gamma": 1.0, "weight": [1.0]}},
      "densities": {"q": [[1.6], [0.4]]},
      "defaults": {"tol": 1e-8, "trials": 1000, "seed": 0}
    }

``filtration``, ``exponent``, ``densities`` and ``defaults`` are optional.
Every construction invariant is re-checked on load and the first failure is
reported with its location.
"""

from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from .errors import ValidationError
from .oce import Utility
from .ordered import OrderedSpace
from .space import FiniteMeasureSpace
from .varexp import ExponentFunction

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
SCENARIO_DIR_ENV = "VAREXP_RISK_SCENARIOS"
FIXTURE_DIR = Path(__file__).parent / "fixtures"

_TOP_LEVEL = ("schema", "dimension", "numeraire", "outcomes", "filtration", "exponent",
              "payoffs", "utilities", "densities", "defaults")
_DEFAULT_KEYS = ("tol", "trials", "seed", "box", "resolution", "level", "step")


class ScenarioError(ValidationError):
    def __init__(self, where: str, message: str):
        super().__init__(f"{where}: {message}")
        self.where = where


Matrix = tuple[tuple[float, ...], ...]


@dataclass(frozen=True)
class ScenarioDocument:
    dimension: int
    numeraire: tuple[float, ...]
    labels: tuple[str, ...]
    probabilities: tuple[float, ...]
    filtration: tuple[tuple[tuple[str, ...], ...], ...]
    exponent: tuple[float, ...] | None = None
    payoffs: dict[str, Matrix] = field(default_factory=dict)
    utilities: dict[str, Utility] = field(default_factory=dict)
    densities: dict[str, Matrix] = field(default_factory=dict)
    defaults: dict[str, Any] = field(default_factory=dict)
    schema: int = SCHEMA_VERSION

    # -- model objects ---------------------------------------------------------

    def space(self) -> FiniteMeasureSpace:
        index = {lab: i for i, lab in enumerate(self.labels)}
        levels = [[[index[lab] for lab in atom] for atom in level] for level in self.filtration]
        return FiniteMeasureSpace(self.probabilities, levels, self.labels)

    def ordered(self) -> OrderedSpace:
        return OrderedSpace(self.numeraire)

    def exponent_function(self) -> ExponentFunction:
        if self.exponent is None:
            return ExponentFunction.constant(2.0, len(self.labels))
        return ExponentFunction(self.exponent)

    def _named(self, table: dict, kind: str, name: str | None):
        if not table:
            raise ScenarioError(kind, "scenario defines none")
        if name is None:
            if len(table) == 1:
                return next(iter(table.values()))
            raise ScenarioError(kind, f"several defined, choose one of {sorted(table)}")
        if name not in table:
            raise ScenarioError(f"{kind}.{name}", f"not defined; available: {sorted(table)}")
        return table[name]

    def payoff(self, name: str | None = None) -> np.ndarray:
        return np.array(self._named(self.payoffs, "payoffs", name), dtype=float)

    def utility(self, name: str | None = None) -> Utility:
        return self._named(self.utilities, "utilities", name)

    def density(self, name: str | None = None) -> np.ndarray:
        return np.array(self._named(self.densities, "densities", name), dtype=float)

    # -- serialization ---------------------------------------------------------

    def to_dict(self) -> dict:
        doc: dict[str, Any] = {
            "schema": self.schema,
            "dimension": self.dimension,
            "numeraire": list(self.numeraire),
            "outcomes": [{"label": lab, "probability": p} for lab, p in zip(self.labels, self.probabilities)],
            "filtration": [[list(atom) for atom in level] for level in self.filtration],
        }
        if self.exponent is not None:
            doc["exponent"] = list(self.exponent)
        doc["payoffs"] = {k: [list(r) for r in v] for k, v in self.payoffs.items()}
        doc["utilities"] = {k: u.to_dict() for k, u in self.utilities.items()}
        if self.densities:
            doc["densities"] = {k: [list(r) for r in v] for k, v in self.densities.items()}
        if self.defaults:
            doc["defaults"] = dict(self.defaults)
        return doc

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"


def _matrix(value, where: str, n: int, d: int) -> Matrix:
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 1 and d == 1:
        arr = arr[:, None]
    if arr.shape != (n, d):
        raise ScenarioError(where, f"expected an {n} x {d} array, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ScenarioError(where, "entries must be finite")
    return tuple(tuple(float(x) for x in row) for row in arr)


def _reject_unknown(obj: dict, allowed, where: str, strict: bool) -> None:
    extra = sorted(set(obj) - set(allowed))
    if not extra:
        return
    if strict:
        raise ScenarioError(where, f"unknown field(s) {extra}")
    log.warning("%s: ignoring unknown field(s) %s", where, extra)


def parse_scenario(raw: Any, strict: bool = False) -> ScenarioDocument:
    if not isinstance(raw, dict):
        raise ScenarioError("<root>", "scenario must be a JSON object")
    _reject_unknown(raw, _TOP_LEVEL, "<root>", strict)
    schema = raw.get("schema", SCHEMA_VERSION)
    if schema != SCHEMA_VERSION:
        raise ScenarioError("schema", f"unsupported version {schema!r} (expected {SCHEMA_VERSION})")
    try:
        d = int(raw["dimension"])
    except (KeyError, TypeError, ValueError):
        raise ScenarioError("dimension", "required positive integer") from None
    if d < 1:
        raise ScenarioError("dimension", "must be >= 1")
    numeraire = tuple(float(x) for x in raw.get("numeraire", [1.0] * d))
    if len(numeraire) != d:
        raise ScenarioError("numeraire", f"expected {d} coordinates")
    try:
        OrderedSpace(numeraire)
    except ValidationError as exc:
        raise ScenarioError("numeraire", str(exc)) from None

    outcomes = raw.get("outcomes")
    if not isinstance(outcomes, list) or not outcomes:
        raise ScenarioError("outcomes", "required nonempty list")
    labels, probs = [], []
    for i, item in enumerate(outcomes):
        if not isinstance(item, dict) or "label" not in item or "probability" not in item:
            raise ScenarioError(f"outcomes[{i}]", "needs 'label' and 'probability'")
        _reject_unknown(item, ("label", "probability"), f"outcomes[{i}]", strict)
        labels.append(str(item["label"]))
        probs.append(float(item["probability"]))
    n = len(labels)
    if len(set(labels)) != n:
        raise ScenarioError("outcomes", "labels must be unique")
    total = sum(probs)
    if any(p <= 0 for p in probs):
        raise ScenarioError("outcomes", "probabilities must be strictly positive")
    if abs(total - 1.0) > 1e-9:
        raise ScenarioError("outcomes", f"weights sum to {total!r}, expected 1")
    probs = [p / total for p in probs]

    filtration = raw.get("filtration")
    if filtration is None:
        filtration = [[labels]] if n == 1 else [[labels], [[lab] for lab in labels]]
    known = set(labels)
    fil = []
    for t, level in enumerate(filtration):
        atoms = []
        for k, atom in enumerate(level):
            for lab in atom:
                if str(lab) not in known:
                    raise ScenarioError(f"filtration[{t}][{k}]", f"unknown outcome label {lab!r}")
            atoms.append(tuple(str(lab) for lab in atom))
        fil.append(tuple(atoms))
    fil = tuple(fil)

    exponent = raw.get("exponent")
    if exponent is not None:
        exponent = tuple(float(x) for x in exponent)
        if len(exponent) != n:
            raise ScenarioError("exponent", f"expected {n} values")
        try:
            ExponentFunction(exponent)
        except ValidationError as exc:
            raise ScenarioError("exponent", str(exc)) from None

    payoffs = {str(k): _matrix(v, f"payoffs.{k}", n, d) for k, v in raw.get("payoffs", {}).items()}
    densities = {str(k): _matrix(v, f"densities.{k}", n, d) for k, v in raw.get("densities", {}).items()}

    utilities = {}
    for name, spec in raw.get("utilities", {}).items():
        where = f"utilities.{name}"
        if not isinstance(spec, dict):
            raise ScenarioError(where, "must be an object")
        spec = dict(spec)
        spec.setdefault("weight", list(np.asarray(numeraire) / float(np.dot(numeraire, numeraire))))
        try:
            u = Utility.from_dict(spec)
            u.check_numeraire(numeraire)
        except (ValidationError, TypeError) as exc:
            raise ScenarioError(where, str(exc)) from None
        utilities[str(name)] = u

    defaults = raw.get("defaults", {})
    if not isinstance(defaults, dict):
        raise ScenarioError("defaults", "must be an object")
    _reject_unknown(defaults, _DEFAULT_KEYS, "defaults", strict)
    defaults = {k: defaults[k] for k in _DEFAULT_KEYS if k in defaults}

    doc = ScenarioDocument(d, numeraire, tuple(labels), tuple(probs), fil, exponent,
                           payoffs, utilities, densities, defaults, schema)
    try:
        doc.space()
    except ValidationError as exc:
        raise ScenarioError("filtration", str(exc)) from None
    return doc


def resolve_scenario(name: str | os.PathLike) -> Path:
    """Find a scenario by path, then in ``$VAREXP_RISK_SCENARIOS``, then among the shipped fixtures."""
    path = Path(name)
    if path.is_file():
        return path
    dirs = []
    if os.environ.get(SCENARIO_DIR_ENV):
        dirs.append(Path(os.environ[SCENARIO_DIR_ENV]))
    dirs.append(FIXTURE_DIR)
    for base in dirs:
        for cand in (base / path, base / f"{path}.json"):
            if cand.is_file():
                return cand
    raise ScenarioError(str(name), "scenario file not found")


def load_scenario(path: str | os.PathLike, strict: bool = False) -> ScenarioDocument:
    resolved = resolve_scenario(path)
    try:
        raw = json.loads(resolved.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ScenarioError(str(resolved), f"parse error at line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    return parse_scenario(raw, strict=strict)


def loads_scenario(text: str, strict: bool = False) -> ScenarioDocument:
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError("<string>", f"parse error at line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    return parse_scenario(raw, strict=strict)


def fixture_names() -> list[str]:
    return sorted(p.stem for p in FIXTURE_DIR.glob("*.json"))
