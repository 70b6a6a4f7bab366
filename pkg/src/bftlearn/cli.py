"""Command-line entry point.

    bftlearn check-assumptions CONFIG
    bftlearn enumerate-reduced CONFIG [--cap N] [--list]
    bftlearn tverberg POINTS --f K
    bftlearn run CONFIG --out DIR [--seed S] [--trials N] [--cap N]
    bftlearn analyze TRACE_DIR

Failures print one JSON object ``{"error": ..., "message": ...}`` on stderr
and exit 1; bad usage exits 2.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .geometry import TverbergError, tverberg_point
from .harness.config import AnalysisOptions, ConfigError, config_from_dict, load_config
from .harness.runner import ExperimentError, run_experiment
from .harness.traceio import analysis_document, read_beliefs, write_trace
from .observation import check_global_identifiability, compute_C0, compute_C1
from .topology import SourceComponent, count_reduced_graphs, enumerate_reduced_graphs
from .analysis import collect_source_components

log = logging.getLogger("bftlearn")


def _emit_error(kind: str, message: str, **extra) -> int:
    doc = {"error": kind, "message": message, **{k: v for k, v in extra.items() if v is not None}}
    print(json.dumps(doc, sort_keys=True), file=sys.stderr)
    return 1


def cmd_check_assumptions(args) -> int:
    cfg = load_config(args.config)
    if args.cap is not None:
        cfg = cfg.with_overrides(cap=args.cap)
    rep = check_global_identifiability(cfg.model, cfg.scenario, cfg.state, cfg.cap)
    print(f"holds={'true' if rep.holds else 'false'}")
    print(f"graphs_checked={rep.graphs_checked} exhaustive={'true' if rep.exhaustive else 'false'}")
    print(f"C0={compute_C0(cfg.model)!r}")
    if rep.holds:
        graphs, _ = enumerate_reduced_graphs(cfg.scenario, cfg.cap)
        comps = [SourceComponent(c) for c in collect_source_components(graphs)]
        print(f"C1={compute_C1(cfg.model, comps, cfg.state)!r}")
        return 0
    print("witness=" + json.dumps(rep.witness.to_dict(cfg.state), sort_keys=True))
    return 1


def cmd_enumerate_reduced(args) -> int:
    cfg = load_config(args.config)
    cap = args.cap if args.cap is not None else cfg.cap
    total = count_reduced_graphs(cfg.scenario)
    graphs, exhaustive = enumerate_reduced_graphs(cfg.scenario, cap)
    print(f"count={total}")
    print(f"enumerated={len(graphs)} cap={cap} exhaustive={'true' if exhaustive else 'false'}")
    if args.list:
        for k, h in enumerate(graphs):
            print(json.dumps({"index": k, **h.to_dict()}, sort_keys=True))
    return 0


def _read_points(path: str) -> np.ndarray:
    try:
        doc = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError("<file>", f"cannot read {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError("<parse>", f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    if isinstance(doc, dict):
        doc = doc.get("points")
    try:
        pts = np.asarray(doc, dtype=float)
    except (TypeError, ValueError):
        raise ConfigError("points", "expected a list of coordinate lists") from None
    if pts.ndim == 1:
        pts = pts[:, None]
    if pts.ndim != 2:
        raise ConfigError("points", "expected a list of coordinate lists")
    return pts


def cmd_tverberg(args) -> int:
    pts = _read_points(args.points)
    res = tverberg_point(pts, args.f)
    print(json.dumps(res.to_dict(), sort_keys=True))
    return 0


def cmd_run(args) -> int:
    cfg = load_config(args.config).with_overrides(seed=args.seed, trials=args.trials, cap=args.cap)
    trace = run_experiment(cfg)
    paths = write_trace(trace, args.out)
    for p in paths:
        print(p)
    log.info("run finished in %.1fs", trace.meta.get("elapsed_s", 0.0))
    return 0


def _all_passed(doc: dict) -> bool:
    ok = True
    for tr in doc["trials"]:
        checks = tr["checks"]
        for key in ("transition_matrices", "psi_reconstruction", "source_windows", "belief_trend"):
            if key in checks:
                ok &= bool(checks[key]["passed"])
    ident = doc["global"].get("identifiability")
    if ident is not None:
        ok &= bool(ident["holds"])
    return ok


def cmd_analyze(args) -> int:
    tdir = Path(args.trace_dir)
    snap = tdir / "config.json"
    try:
        doc = json.loads(snap.read_text())
    except OSError as exc:
        raise ConfigError("<file>", f"cannot read {snap}: {exc.strerror}") from None
    cfg = config_from_dict(doc, tdir)
    cfg = cfg.with_overrides(analysis=AnalysisOptions.full(cfg.horizon))
    trace = run_experiment(cfg)

    # the replay must reproduce the recorded series exactly
    recorded = read_beliefs(tdir / "beliefs.csv", cfg.state.labels)
    for res in trace.trials:
        mu = np.exp(res.beliefs[1:])
        got = recorded.get(res.trial)
        if got is None:
            return _emit_error("trace_mismatch", f"trial {res.trial} missing from beliefs.csv", trial=res.trial)
        for k, a in enumerate(res.agents):
            if a not in got or not np.array_equal(got[a], mu[:, k, :]):
                return _emit_error(
                    "trace_mismatch", f"replayed beliefs differ from beliefs.csv for agent {a}", trial=res.trial, agent=a
                )

    out = analysis_document(trace)
    path = tdir / "analysis.json"
    path.write_text(json.dumps(out, indent=2, sort_keys=True) + "\n")
    passed = _all_passed(out)
    print(f"analysis={path}")
    print(f"passed={'true' if passed else 'false'}")
    return 0 if passed else 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bftlearn", description="Byzantine-resilient non-Bayesian learning simulator")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("check-assumptions", help="test global identifiability over all reduced graphs")
    s.add_argument("config")
    s.add_argument("--cap", type=int, default=None)
    s.set_defaults(func=cmd_check_assumptions)

    s = sub.add_parser("enumerate-reduced", help="count and optionally list reduced graphs")
    s.add_argument("config")
    s.add_argument("--cap", type=int, default=None)
    s.add_argument("--list", action="store_true", help="print every enumerated graph as JSON")
    s.set_defaults(func=cmd_enumerate_reduced)

    s = sub.add_parser("tverberg", help="compute a Tverberg point of a JSON point list")
    s.add_argument("points")
    s.add_argument("--f", type=int, required=True)
    s.set_defaults(func=cmd_tverberg)

    s = sub.add_parser("run", help="simulate and write a trace directory")
    s.add_argument("config")
    s.add_argument("--out", required=True)
    s.add_argument("--seed", type=int, default=None)
    s.add_argument("--trials", type=int, default=None)
    s.add_argument("--cap", type=int, default=None)
    s.set_defaults(func=cmd_run)

    s = sub.add_parser("analyze", help="replay a trace with every analysis enabled")
    s.add_argument("trace_dir")
    s.set_defaults(func=cmd_analyze)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else 0
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        return _emit_error("config", exc.message, field=exc.field)
    except ExperimentError as exc:
        return _emit_error("experiment", str(exc), trial=exc.trial, round=exc.round_index, agent=exc.agent)
    except TverbergError as exc:
        return _emit_error("tverberg", str(exc))
    except (ValueError, OSError) as exc:
        return _emit_error(type(exc).__name__, str(exc))


if __name__ == "__main__":
    sys.exit(main())
