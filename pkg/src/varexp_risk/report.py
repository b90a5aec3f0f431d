"""Report documents: a results table plus witnesses, rendered as text or key=value lines."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np


def _fmt(value: Any) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return repr(float(value) + 0.0)  # folds -0.0 into 0.0
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, np.ndarray):
        if value.ndim <= 1:
            return ",".join(_fmt(x) for x in value.reshape(-1).tolist())
        return ";".join(_fmt(row) for row in value)
    if value is None:
        return "none"
    return str(value)


@dataclass(frozen=True)
class Row:
    quantity: str
    value: Any
    method: str
    tol: float | None  # None for exact (closed-form) values


@dataclass
class ReportDocument:
    command: str
    config: dict[str, Any] = field(default_factory=dict)
    rows: list[Row] = field(default_factory=list)
    witnesses: dict[str, Any] = field(default_factory=dict)
    verdict: str | None = None
    status: int = 0
    wall_clock: float | None = None

    def add(self, quantity: str, value, method: str, tol: float | None) -> None:
        self.rows.append(Row(quantity, value, method, tol))

    def value(self, quantity: str):
        for row in self.rows:
            if row.quantity == quantity:
                return row.value
        raise KeyError(quantity)

    def structured(self, timing: bool = False) -> str:
        """Line-oriented ``key=value`` with a fixed key order; timing only on request."""
        lines = [f"command={self.command}"]
        lines += [f"config.{k}={_fmt(v)}" for k, v in self.config.items()]
        for row in self.rows:
            key = f"result.{row.quantity}"
            lines += [f"{key}.value={_fmt(row.value)}", f"{key}.method={row.method}",
                      f"{key}.tol={_fmt(row.tol) if row.tol is not None else 'exact'}"]
        lines += [f"witness.{k}={_fmt(np.asarray(v) if not isinstance(v, str) else v)}"
                  for k, v in self.witnesses.items()]
        if self.verdict is not None:
            lines.append(f"verdict={self.verdict}")
        lines.append(f"status={self.status}")
        if timing and self.wall_clock is not None:
            lines.append(f"wall_clock={self.wall_clock:.3f}")
        return "\n".join(lines) + "\n"

    def text(self) -> str:
        out = [f"{self.command}: " + ", ".join(f"{k}={_fmt(v)}" for k, v in self.config.items())]
        if self.rows:
            table = [("quantity", "value", "method", "tol")]
            for r in self.rows:
                table.append((r.quantity, _fmt(r.value), r.method, "exact" if r.tol is None else f"{r.tol:g}"))
            widths = [max(len(row[i]) for row in table) for i in range(4)]
            out += ["  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip() for row in table]
        for k, v in self.witnesses.items():
            out.append(f"witness {k}: {_fmt(np.asarray(v) if not isinstance(v, str) else v)}")
        if self.verdict is not None:
            out.append(f"verdict: {self.verdict}")
        if self.wall_clock is not None:
            out.append(f"wall clock: {self.wall_clock:.3f} s")
        return "\n".join(out) + "\n"
