"""Command line front end: ``varexp-risk <command> --scenario NAME [flags]``.

Exit status: 0 on success, 1 when a contract violation is detected (for
example a duality gap above tolerance), 2 on input errors.
"""

from __future__ import annotations

import argparse
import sys
import time
from typing import Callable, Sequence

import numpy as np

from .dual import DEFAULT_BOX, GRID_RESOLUTION, dual_objective, dual_value, penalty_minimal, reference_density
from .dynamic import (GAP_TOL, PROPERTY_TOL, ComposedFamily, OceFamily, conditional_dual_check,
                      conditional_pairing, conditional_penalty_min, consistency_audit, decompose_acceptance)
from .errors import ContractViolation, NotInvertible, ValidationError
from .oce import SOLVER_TOL, certainty_equivalent, oce
from .report import ReportDocument
from .scenario import ScenarioDocument, load_scenario
from .varexp import DEFAULT_TOL, luxemburg_norm, modular

EXIT_OK, EXIT_CONTRACT, EXIT_INPUT = 0, 1, 2
WEAK_DUALITY_TOL = 1e-6

COMMANDS = ("norm", "oce", "risk", "dual-check", "conditional", "consistency", "decompose", "penalty", "selftest")


class Context:
    """Resolved flags: command line first, then scenario defaults, then built-ins."""

    def __init__(self, args: argparse.Namespace, doc: ScenarioDocument | None):
        self.args = args
        self.doc = doc
        self.defaults = doc.defaults if doc else {}

    def get(self, name: str, fallback):
        value = getattr(self.args, name, None)
        if value is not None:
            return value
        return self.defaults.get(name, fallback)

    def flag(self, name: str, fallback):
        """Command-line value only; scenario defaults do not apply."""
        value = getattr(self.args, name, None)
        return fallback if value is None else value

    def level(self, fallback: int) -> int:
        return int(self.get("level", fallback))


def _family(ctx: Context, name: str | None):
    doc = ctx.doc
    base = OceFamily(doc.space(), doc.utility(name), doc.ordered(), tol=SOLVER_TOL)
    return ComposedFamily(base) if ctx.args.family == "composed" else base


def _config(ctx: Context, **extra) -> dict:
    cfg = {"scenario": ctx.args.scenario}
    for key in ("payoff", "utility"):
        if getattr(ctx.args, key, None) is not None:
            cfg[key] = getattr(ctx.args, key)
    cfg.update(extra)
    return cfg


def cmd_norm(ctx: Context, rep: ReportDocument) -> None:
    doc = ctx.doc
    tol = float(ctx.get("tol", DEFAULT_TOL))
    rep.config = _config(ctx, tol=tol)
    space, p, f = doc.space(), doc.exponent_function(), doc.payoff(ctx.args.payoff)
    rep.add("luxemburg_norm", luxemburg_norm(space, f, p, tol), "bisection", tol)
    rep.add("modular", modular(space, f, p), "closed-form", None)
    rep.add("p_minus", p.p_minus, "closed-form", None)
    rep.add("p_plus", p.p_plus, "closed-form", None)


def _oce_rows(ctx: Context, rep: ReportDocument, sign: float) -> None:
    doc = ctx.doc
    tol = float(ctx.get("tol", SOLVER_TOL))
    rep.config = _config(ctx, tol=tol)
    u = doc.utility(ctx.args.utility)
    space, f = doc.space(), doc.payoff(ctx.args.payoff)
    res = oce(space, f, u, tol)
    exact = res.method == "breakpoint-enumeration"
    if sign > 0:
        rep.add("oce", res.value, res.method, None if exact else tol)
    else:
        rep.add("rho", -res.value, res.method, None if exact else tol)
    rep.add("eta_star", res.eta_star, res.method, None if exact else tol)
    if sign > 0:
        try:
            rep.add("certainty_equivalent", certainty_equivalent(space, f, u), "closed-form", None)
        except NotInvertible:
            rep.add("certainty_equivalent", "undefined", "not-invertible", None)


def cmd_oce(ctx: Context, rep: ReportDocument) -> None:
    _oce_rows(ctx, rep, +1.0)


def cmd_risk(ctx: Context, rep: ReportDocument) -> None:
    _oce_rows(ctx, rep, -1.0)


def cmd_dual_check(ctx: Context, rep: ReportDocument) -> None:
    doc = ctx.doc
    tol = float(ctx.flag("tol", GAP_TOL))  # gap tolerance, not the solver one
    resolution = int(ctx.get("resolution", GRID_RESOLUTION))
    rep.config = _config(ctx, tol=tol, method=ctx.args.method, resolution=resolution)
    u = doc.utility(ctx.args.utility)
    space, f, z = doc.space(), doc.payoff(ctx.args.payoff), doc.ordered().z
    primal = oce(space, f, u, SOLVER_TOL)
    dual = dual_value(space, f, u, z, method=ctx.args.method, resolution=resolution)
    gap = float(-primal.value - dual.value)
    rep.add("primal", -primal.value, primal.method, SOLVER_TOL)
    rep.add("dual", dual.value, f"{dual.method}-search", tol)
    rep.add("gap", gap, "difference", tol)
    rep.add("dual_evaluations", dual.evaluations, "count", None)
    rep.witnesses["argmax_density"] = dual.density
    rep.witnesses["argmax_probabilities"] = dual.probabilities
    if gap < -WEAK_DUALITY_TOL:
        rep.verdict = "weak duality violated"
        rep.status = EXIT_CONTRACT
    elif abs(gap) > tol:
        rep.verdict = "gap above tolerance"
        rep.status = EXIT_CONTRACT
    else:
        rep.verdict = "strong duality within tolerance"


def cmd_conditional(ctx: Context, rep: ReportDocument) -> None:
    doc = ctx.doc
    space = doc.space()
    t = ctx.level(min(1, space.horizon))
    tol = float(ctx.flag("tol", GAP_TOL))  # gap tolerance, not the solver one
    resolution = int(ctx.get("resolution", GRID_RESOLUTION))
    rep.config = _config(ctx, level=t, tol=tol, method=ctx.args.method, resolution=resolution)
    u = doc.utility(ctx.args.utility)
    f = doc.payoff(ctx.args.payoff)
    chk = conditional_dual_check(space, f, u, t, doc.ordered().z, ctx.args.method, resolution)
    ids = space.atom_ids(t)
    first = [int(np.flatnonzero(ids == k)[0]) for k in range(space.atom_masses(t).size)]
    method = "breakpoint-enumeration" if u.is_piecewise_linear else "golden-section"
    for k, i in enumerate(first):
        rep.add(f"rho_t.atom{k}", chk.primal[i], method, None if u.is_piecewise_linear else SOLVER_TOL)
    for k, i in enumerate(first):
        rep.add(f"dual_t.atom{k}", chk.dual[i], f"{chk.method}-search", tol)
    rep.add("gap", chk.gap, "difference", tol)
    rep.witnesses["argmax_density"] = chk.density
    if chk.gap > tol:
        rep.verdict = "conditional gap above tolerance"
        rep.status = EXIT_CONTRACT
    else:
        rep.verdict = "conditional duality within tolerance"


def cmd_consistency(ctx: Context, rep: ReportDocument) -> None:
    doc = ctx.doc
    family = _family(ctx, ctx.args.utility)
    t = ctx.level(0)
    s = int(ctx.get("step", 1))
    trials = int(ctx.get("trials", 1000))
    seed = int(ctx.get("seed", 0))
    tol = float(ctx.get("tol", PROPERTY_TOL))
    rep.config = _config(ctx, family=ctx.args.family, level=t, step=s, trials=trials, seed=seed, tol=tol)
    audit = consistency_audit(family, t, s, trials=trials, tol=tol, seed=seed)
    rep.add("max_residual", audit.max_residual, "sampled-search", tol)
    rep.add("implication_violations", audit.implication_violations, "sampled-search", tol)
    if audit.witness is not None:
        rep.witnesses["residual_payoff"] = audit.witness
    if audit.implication_witness is not None:
        rep.witnesses["implication_f1"], rep.witnesses["implication_f2"] = audit.implication_witness
    rep.verdict = audit.verdict


def cmd_decompose(ctx: Context, rep: ReportDocument) -> None:
    family = _family(ctx, ctx.args.utility)
    t = ctx.level(0)
    s = int(ctx.get("step", 1))
    tol = float(ctx.get("tol", PROPERTY_TOL))
    rep.config = _config(ctx, family=ctx.args.family, level=t, step=s, tol=tol)
    dec = decompose_acceptance(ctx.doc.payoff(ctx.args.payoff), family, t, s, tol)
    rep.add("max_abs_rho_next_f2", float(np.max(np.abs(dec.rho_next_f2))), "direct-evaluation", tol)
    rep.add("max_rho_t_f1", float(np.max(dec.rho_t_f1)), "direct-evaluation", tol)
    rep.witnesses["f1"] = dec.f1
    rep.witnesses["f2"] = dec.f2
    rep.verdict = "decomposed"


def cmd_penalty(ctx: Context, rep: ReportDocument) -> None:
    doc = ctx.doc
    u = doc.utility(ctx.args.utility)
    space, z = doc.space(), doc.ordered().z
    h = doc.density(ctx.args.density) if ctx.args.density else reference_density(space, u)
    t = ctx.level(0)
    box = float(ctx.get("box", DEFAULT_BOX))
    rep.config = _config(ctx, density=ctx.args.density or "reference", level=t, box=box)
    if t == 0:
        for strategy in ("closed-form", "box", "acceptance"):
            pv = penalty_minimal(space, h, u, z, strategy, box)
            rep.add(f"penalty.{strategy}", pv.value, strategy if pv.exact else f"{strategy}-lower-bound",
                    None if pv.exact else box)
        if ctx.args.payoff is not None:
            rep.add("dual_objective", dual_objective(space, doc.payoff(ctx.args.payoff), h, u), "closed-form", None)
        return
    ids = space.atom_ids(t)
    first = [int(np.flatnonzero(ids == k)[0]) for k in range(space.atom_masses(t).size)]
    for strategy in ("closed-form", "acceptance"):
        vals = conditional_penalty_min(space, h, u, t, z, strategy, box)
        exact = strategy == "closed-form"
        for k, i in enumerate(first):
            rep.add(f"penalty_t.{strategy}.atom{k}", vals[i], strategy if exact else f"{strategy}-lower-bound",
                    None if exact else box)
    if ctx.args.payoff is not None:
        pair = conditional_pairing(space, h, doc.payoff(ctx.args.payoff), t)
        for k, i in enumerate(first):
            rep.add(f"conditional_pairing.atom{k}", pair[i], "closed-form", None)


def cmd_selftest(ctx: Context, rep: ReportDocument) -> None:
    from .acceptance import run_all

    scale = float(ctx.args.scale)
    seed = int(ctx.args.seed if ctx.args.seed is not None else 0)
    rep.config = {"scale": scale, "seed": seed}
    results = run_all(scale=scale, seed=seed)
    for r in results:
        rep.add(r.name, "pass" if r.passed else "fail", "acceptance-battery", None)
    failed = [r.name for r in results if not r.passed]
    rep.verdict = "all criteria pass" if not failed else "failed: " + ",".join(failed)
    rep.status = EXIT_CONTRACT if failed else EXIT_OK


HANDLERS: dict[str, Callable[[Context, ReportDocument], None]] = {
    "norm": cmd_norm,
    "oce": cmd_oce,
    "risk": cmd_risk,
    "dual-check": cmd_dual_check,
    "conditional": cmd_conditional,
    "consistency": cmd_consistency,
    "decompose": cmd_decompose,
    "penalty": cmd_penalty,
    "selftest": cmd_selftest,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="varexp-risk", description=__doc__.splitlines()[0])
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--scenario", help="scenario path or fixture name")
    parser.add_argument("--payoff")
    parser.add_argument("--utility")
    parser.add_argument("--density", help="named density for the penalty command")
    parser.add_argument("--level", type=int)
    parser.add_argument("--step", type=int)
    parser.add_argument("--tol", type=float)
    parser.add_argument("--trials", type=int)
    parser.add_argument("--seed", type=int)
    parser.add_argument("--resolution", type=int, help="dual grid resolution")
    parser.add_argument("--box", type=float, help="box half-width for numerical penalties")
    parser.add_argument("--method", choices=("auto", "grid", "ascent"), default="auto")
    parser.add_argument("--family", choices=("conditional", "composed"), default="conditional")
    parser.add_argument("--scale", type=float, default=1.0, help="sample-count multiplier for selftest")
    parser.add_argument("--format", choices=("text", "structured"), default="text")
    parser.add_argument("--strict", action="store_true", help="reject unknown scenario fields")
    parser.add_argument("--timing", action="store_true", help="include wall-clock time in structured output")
    return parser


def run(argv: Sequence[str]) -> tuple[ReportDocument, argparse.Namespace]:
    """Parse flags, execute one command and return its report with the parsed flags.

    Input errors raise ``ValidationError``; argparse errors raise ``SystemExit(2)``.
    """
    args = build_parser().parse_args(list(argv))
    doc = None
    if args.command != "selftest":
        if not args.scenario:
            raise ValidationError("--scenario is required")
        doc = load_scenario(args.scenario, strict=args.strict)
    rep = ReportDocument(args.command)
    start = time.perf_counter()
    HANDLERS[args.command](Context(args, doc), rep)
    rep.wall_clock = time.perf_counter() - start
    return rep, args


def main(argv: Sequence[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        rep, args = run(argv)
    except ContractViolation as exc:
        print(f"contract violation: {exc}", file=sys.stderr)
        return EXIT_CONTRACT
    except (ValidationError, IndexError, KeyError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except SystemExit as exc:
        return EXIT_INPUT if exc.code not in (0, None) else EXIT_OK
    if args.format == "structured":
        sys.stdout.write(rep.structured(timing=args.timing))
    else:
        sys.stdout.write(rep.text())
    return rep.status
