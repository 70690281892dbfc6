"""Command-line entry point ``latent-layers``.

Every command builds a :class:`~latent_layers.pipelines.RunReport`; the exit
code is 0 exactly when every stage succeeded. ``--json`` prints the report
as JSON, otherwise a short text rendering is shown. ``--out`` writes the main
artifact of the command (scenario, witness, inequalities, CSV or report).
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import shlex
import sys
from pathlib import Path

from . import __version__
from .dist import (
    Box,
    FUNCTIONAL_IDS,
    compose_2layer,
    compose_2lt,
    named_box,
    named_functional,
    opt_copy_box,
    tetra_reduce,
)
from .errors import LatentLayersError, SolverDidNotConverge, UnknownId, UnsupportedScenario
from .graph import CausalScenario, exogenize, interrupt, is_isomorphic, validate
from .pipelines import PIPELINES, Config, RunReport, StageFailed, _timed, lp_check
from .scenarios import DESCRIPTIONS, INTERRUPTIONS, interrupted_ext_bell, load_scenario, registry_ids

__all__ = ["main", "build_parser", "parse_target"]

EXIT_OK = 0
EXIT_STAGE_FAILED = 1
EXIT_USAGE = 2


def parse_target(spec: str) -> Box:
    """Resolve a target description into an extended-Bell box.

    ``2layer:<box>`` (C copies B), ``2layer-a:<box>`` (C copies A),
    ``2lt:<box>`` (tetrahedron protocol reduced back), ``opt_copy``, or a
    path to a box JSON file. ``<box>`` is any named Bell box.
    """
    if spec == "opt_copy":
        return opt_copy_box()
    kind, sep, inner = spec.partition(":")
    if sep:
        if kind == "2layer":
            return compose_2layer(named_box(inner))
        if kind == "2layer-a":
            return compose_2layer(named_box(inner), copied="A")
        if kind == "2lt":
            return tetra_reduce(compose_2lt(named_box(inner)))
    path = Path(spec)
    if path.exists():
        return Box.from_json(path.read_text())
    raise UnknownId(f"unknown target {spec!r}; use 2layer:<box>, 2layer-a:<box>, 2lt:<box>, opt_copy or a box file")


def _config(args) -> Config:
    return Config(
        sdp_tol=getattr(args, "sdp_tol", 1e-8),
        sdp_max_iter=getattr(args, "sdp_max_iter", 200000),
        fm_cap=getattr(args, "fm_cap", 20000),
        jobs=getattr(args, "jobs", 1),
    )


def _scenario_arg(args, default: str | None = None) -> tuple[str, CausalScenario]:
    sid = getattr(args, "scenario", None) or default
    if sid is None:
        raise UnknownId("this command needs --scenario <id|path>")
    return sid, load_scenario(sid)


def _write(args, text: str) -> str | None:
    out = getattr(args, "out", None)
    if out:
        Path(out).write_text(text)
    return out


def _check_lp_scenario(sid: str, scenario: CausalScenario):
    # the exact LP is wired for the exogenized extended Bell scenario
    g = exogenize(scenario) if scenario.intermediate_latents else scenario
    if not is_isomorphic(g, load_scenario("ext_bell_exo")):
        raise UnsupportedScenario(f"lp-check needs the (exogenized) extended Bell scenario, got {sid!r}")


# ---------------------------------------------------------------------------
# commands


def cmd_validate(args, r: RunReport):
    sid, s = _scenario_arg(args)
    r.scenarios.append(sid)
    c = validate(s)
    r.stage("validate", "Valid", "graph", {"scenario": sid}, **c._asdict())
    r.verdict = "valid"


def cmd_exogenize(args, r: RunReport):
    sid, s = _scenario_arg(args)
    r.scenarios.append(sid)
    g = exogenize(s)
    path = _write(args, g.to_json(indent=2))
    r.stage("exogenize", "Scenario", "graph", {"scenario": sid}, scenario=g.to_dict(), written=path)
    r.verdict = f"{len(s.intermediate_latents)} intermediate latent(s) exogenized"


def cmd_interrupt(args, r: RunReport):
    sid, s = _scenario_arg(args)
    r.scenarios.append(sid)
    blocks = [set(b.split(",")) for b in args.split.split("|")]
    g = interrupt(s, args.setting, blocks)
    path = _write(args, g.to_json(indent=2))
    r.stage("interrupt", "Scenario", "graph", {"scenario": sid, "setting": args.setting, "split": args.split},
            scenario=g.to_dict(), written=path)
    r.verdict = f"{args.setting} split into {len(blocks)} copies"


def cmd_lp_check(args, r: RunReport):
    sid, s = _scenario_arg(args, "ext_bell_exo")
    _check_lp_scenario(sid, s)
    r.scenarios.append(sid)
    target = parse_target(args.target)
    # the no-signaling (OPT) reading and the quantum reading share one LP
    res, lp, w = lp_check(r, target, args.interruption, target_label=args.target)
    r.stages[-1]["inputs"]["theory"] = args.theory
    if w is not None:
        _write(args, json.dumps(w.to_dict(), indent=2))
    r.verdict = "Feasible" if res.feasible else "Infeasible"


def cmd_witness(args, r: RunReport):
    sid, s = _scenario_arg(args, "ext_bell_exo")
    _check_lp_scenario(sid, s)
    r.scenarios.append(sid)
    res, lp, w = lp_check(r, parse_target(args.target), args.interruption, target_label=args.target)
    r.require(w is not None, "witness", "target is feasible, no witness exists")
    doc = w.to_dict()
    path = _write(args, json.dumps(doc, indent=2))
    r.stage("witness", "Witness", "lp", {"target": args.target}, witness=doc, written=path)
    r.verdict = w.presentation


def cmd_sdp_bound(args, r: RunReport):
    from .npa import bound, bound_escalating

    sid, _ = _scenario_arg(args)
    r.scenarios.append(sid)
    cfg = _config(args)
    f = named_functional(args.functional)
    try:
        if args.level is None:
            res = bound_escalating(sid, f, agree=args.agree, tol=cfg.sdp_tol, max_iter=cfg.sdp_max_iter)
        else:
            res = bound(sid, f, args.level, tol=cfg.sdp_tol, max_iter=cfg.sdp_max_iter)
    except SolverDidNotConverge as e:
        sol = e.solution
        r.stage("sdp-bound", "NotConverged", "npa+sdp", {"scenario": sid, "functional": args.functional},
                value=sol.value if sol else None, residuals=sol.residuals() if sol else {})
        raise StageFailed("sdp-bound", str(e)) from None
    doc = res.to_dict()
    _write(args, json.dumps(doc, indent=2))
    r.stage("sdp-bound", "Bound", "npa+sdp", {"scenario": sid, "functional": args.functional, "level": args.level},
            **doc)
    line = f"{res.value:.6f} (level {res.level})"
    if args.compare is not None:
        rel = "<" if res.value < args.compare else ">="
        line += f"; {res.value:.4f} {rel} {args.compare:.4f}"
    r.verdict = line


def _structure_and_merge():
    from .entropy import build_structure

    g, merge = interrupted_ext_bell("c")
    return build_structure(g), merge


def _load_inequality(spec: str, s):
    from .entropy import EntropicInequality, bc_functional, entropic_monogamy

    if spec == "monogamy":
        return entropic_monogamy(s)
    if spec.startswith("monogamy:"):
        # monogamy:<partner><x><y>, e.g. monogamy:B01
        tag = spec.split(":", 1)[1]
        return entropic_monogamy(s, int(tag[1]), int(tag[2]), tag[0])
    if spec == "bc":
        return bc_functional(s)
    path = Path(spec)
    if path.exists():
        return EntropicInequality.from_dict(s, json.loads(path.read_text()))
    raise UnknownId(f"unknown inequality {spec!r}; use bc, monogamy, monogamy:<P><x><y> or a JSON file")


def cmd_entropy_derive(args, r: RunReport):
    from .entropy import derive_monogamy, entropic_monogamy, implied_by

    r.scenarios.append("ext_bell_exo")
    g, merge = interrupted_ext_bell("c")
    log: list = []
    s, projected = derive_monogamy(g, merge, cap=_config(args).fm_cap, log=log)
    checks = {}
    for partner in ("A", "B"):
        for x in (0, 1):
            for y in (0, 1):
                checks[f"{partner}{x}{y}"] = implied_by(projected, entropic_monogamy(s, x, y, partner))
    doc = [ineq.to_dict() for ineq in projected]
    path = _write(args, json.dumps(doc, indent=2))
    r.stage("entropy-derive", "Implied" if all(checks.values()) else "NotImplied", "entropy",
            {"coordinates": len(s), "fm_cap": _config(args).fm_cap},
            projected=len(projected), monogamy_variants=checks, steps=len(log), written=path)
    r.require(all(checks.values()), "entropy-derive", "a monogamy variant is not implied")
    r.verdict = f"{len(projected)} inequalities; all monogamy variants implied"


def cmd_entropy_eval(args, r: RunReport):
    from .entropy import evaluate_entropic

    s, merge = _structure_and_merge()
    f = _load_inequality(args.inequality, s)
    box = parse_target(args.target)
    val = evaluate_entropic(f, box.to_float() if box.exact else box, merge)
    r.stage("entropy-eval", "Value", "entropy", {"inequality": args.inequality, "target": args.target},
            inequality=str(f), value=val, violated=val < 0)
    r.verdict = f"{val:.6f}" + ("  (violated)" if val < 0 else "")


def cmd_scan_bc(args, r: RunReport):
    import numpy as np

    from .entropy import search_bc_violation

    cfg = _config(args)
    res = search_bc_violation(
        p_grid=np.linspace(0.0, 1.0, args.p_steps), angle_steps=args.angle_steps,
        refine=not args.no_refine, keep_rows=bool(getattr(args, "out", None)), jobs=cfg.jobs,
    )
    path = None
    if getattr(args, "out", None):
        buf = io.StringIO()
        w = csv.writer(buf)
        w.writerow(["alice0", "alice1", "bob0", "bob1", "min_bc_ab"])
        w.writerows(res.rows)
        path = _write(args, buf.getvalue())
    found = res.value < -args.threshold
    r.stage("scan-bc", "Violation" if found else "NoViolation", "entropy",
            {"angle_steps": args.angle_steps, "p_steps": args.p_steps}, **res.to_dict(), written=path)
    r.verdict = f"BC_AB = {res.value:.6f}"


def cmd_pipeline(args, r: RunReport):
    sub = PIPELINES[args.name](_config(args))
    r.scenarios = sub.scenarios
    r.stages = sub.stages
    r.verdict = sub.verdict
    if not sub.ok:
        raise StageFailed(sub.stages[-1]["stage"] if sub.stages else "pipeline", sub.error or "failed")
    _write(args, sub.to_json(indent=2))


def cmd_registry(args, r: RunReport):
    ids = registry_ids()
    r.stage("registry", "List", "cli", {}, scenarios={i: DESCRIPTIONS.get(i, "") for i in ids},
            pipelines=list(PIPELINES), functionals=list(FUNCTIONAL_IDS))
    r.verdict = f"{len(ids)} scenarios"


# ---------------------------------------------------------------------------
# parser


def _common() -> argparse.ArgumentParser:
    # SUPPRESS lets the same flag appear before or after the command name
    p = argparse.ArgumentParser(add_help=False)
    S = argparse.SUPPRESS
    p.add_argument("--json", action="store_true", default=S, help="print the report as JSON")
    p.add_argument("--scenario", default=S, help="registry id or scenario JSON path")
    p.add_argument("--out", default=S, help="write the command's artifact here")
    p.add_argument("--sdp-tol", type=float, default=S, help="ADMM residual tolerance (default 1e-8)")
    p.add_argument("--sdp-max-iter", type=int, default=S, help="ADMM iteration cap (default 200000)")
    p.add_argument("--fm-cap", type=int, default=S, help="row cap during elimination (default 20000)")
    p.add_argument("--jobs", type=int, default=S, help="worker processes for scan stages (default 1)")
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    p = argparse.ArgumentParser(prog="latent-layers", parents=[common],
                                description="Observational distinctness of intermediate-latent causal scenarios.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, fn, help_):
        sp = sub.add_parser(name, parents=[common], help=help_)
        sp.set_defaults(func=fn)
        return sp

    add("validate", cmd_validate, "check a scenario and list node roles")
    add("exogenize", cmd_exogenize, "replace intermediate latents by exogenous ones")
    sp = add("interrupt", cmd_interrupt, "split a setting among blocks of its children")
    sp.add_argument("--setting", required=True)
    sp.add_argument("--split", required=True, help='children blocks, e.g. "B|C" or "A,B|C"')

    for name, fn, help_ in (("lp-check", cmd_lp_check, "exact compatibility LP for a target box"),
                            ("witness", cmd_witness, "extract a linear witness for an infeasible target")):
        sp = add(name, fn, help_)
        sp.add_argument("--target", required=True, help="2layer:<box>, 2layer-a:<box>, 2lt:<box>, opt_copy, or file")
        sp.add_argument("--interruption", default="c", choices=sorted(INTERRUPTIONS))
        if name == "lp-check":
            sp.add_argument("--theory", default="quantum", choices=["quantum", "ns"],
                            help="source theory; both use the same no-signaling LP")

    sp = add("sdp-bound", cmd_sdp_bound, "moment-matrix upper bound on a functional")
    sp.add_argument("--functional", required=True, choices=list(FUNCTIONAL_IDS))
    sp.add_argument("--level", type=int, choices=[1, 2, 3], default=None,
                    help="fixed level; omit to escalate until consecutive levels agree")
    sp.add_argument("--agree", type=float, default=1e-4)
    sp.add_argument("--compare", type=float, default=None, help="print a comparison against this value")

    add("entropy-derive", cmd_entropy_derive, "project the elemental entropy cone onto observable coordinates")
    sp = add("entropy-eval", cmd_entropy_eval, "evaluate an entropic inequality on a target box")
    sp.add_argument("--inequality", default="monogamy", help="bc, monogamy, monogamy:<P><x><y> or JSON file")
    sp.add_argument("--target", required=True)

    sp = add("scan-bc", cmd_scan_bc, "search qubit/deterministic mixtures for BC violations")
    sp.add_argument("--angle-steps", type=int, default=8)
    sp.add_argument("--p-steps", type=int, default=11)
    sp.add_argument("--no-refine", action="store_true")
    sp.add_argument("--threshold", type=float, default=1e-3)

    sp = add("pipeline", cmd_pipeline, "run a named end-to-end recipe")
    sp.add_argument("name", choices=list(PIPELINES))

    sp = add("registry", cmd_registry, "registry operations")
    sp.add_argument("action", choices=["list"])
    return p


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    report = RunReport("latent-layers " + shlex.join(argv))
    _timed(report, lambda r: args.func(args, r))
    if getattr(args, "json", False):
        print(report.to_json(indent=2))
    else:
        print(report.text())
    return EXIT_OK if report.ok else EXIT_STAGE_FAILED


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
