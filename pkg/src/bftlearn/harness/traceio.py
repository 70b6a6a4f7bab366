"""On-disk trace format.

``beliefs.csv``  columns ``trial,t,agent,state,mu`` for rounds 1..T
``psi.csv``      columns ``trial,t,agent,theta,psi`` with psi = log mu(theta)/mu(theta*)
``config.json``  self-contained config snapshot
``analysis.json`` per-trial check reports (only when some analysis is enabled)

Floats are written with ``repr`` so values round-trip exactly and reruns
are byte-identical.  Agents are node indices, states are labels.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .runner import Trace

__all__ = ["BELIEF_COLUMNS", "PSI_COLUMNS", "write_trace", "read_beliefs", "analysis_document"]

BELIEF_COLUMNS = ("trial", "t", "agent", "state", "mu")
PSI_COLUMNS = ("trial", "t", "agent", "theta", "psi")


def analysis_document(trace: Trace) -> dict:
    return {
        "global": trace.analysis,
        "trials": [{"trial": r.trial, "checks": r.report} for r in trace.trials],
    }


def write_trace(trace: Trace, out_dir: str | Path) -> list[Path]:
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create trace directory {out}: {exc.strerror}") from exc
    cfg = trace.config
    labels = cfg.state.labels
    th_star = cfg.state.true_index
    others = cfg.state.others()
    written = []

    path = out / "beliefs.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(BELIEF_COLUMNS)
        for res in trace.trials:
            mu = np.exp(res.beliefs)
            for t in range(1, res.beliefs.shape[0]):
                for k, a in enumerate(res.agents):
                    for s, lab in enumerate(labels):
                        w.writerow((res.trial, t, a, lab, repr(float(mu[t, k, s]))))
    written.append(path)

    path = out / "psi.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(PSI_COLUMNS)
        for res in trace.trials:
            b = res.beliefs
            for t in range(1, b.shape[0]):
                for k, a in enumerate(res.agents):
                    for th in others:
                        w.writerow((res.trial, t, a, labels[th], repr(float(b[t, k, th] - b[t, k, th_star]))))
    written.append(path)

    path = out / "config.json"
    path.write_text(json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n")
    written.append(path)

    if cfg.analysis.any_enabled:
        path = out / "analysis.json"
        path.write_text(json.dumps(analysis_document(trace), indent=2, sort_keys=True) + "\n")
        written.append(path)
    return written


def read_beliefs(path: str | Path, labels: tuple[str, ...]) -> dict[int, dict[int, np.ndarray]]:
    """``beliefs.csv`` back into ``{trial: {agent: (T, m) array of mu}}``."""
    col = {lab: k for k, lab in enumerate(labels)}
    rows: dict[int, dict[int, dict[int, np.ndarray]]] = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != BELIEF_COLUMNS:
            raise ValueError(f"{path}: unexpected header {reader.fieldnames}")
        for row in reader:
            trial, t, agent = int(row["trial"]), int(row["t"]), int(row["agent"])
            per_t = rows.setdefault(trial, {}).setdefault(agent, {})
            vec = per_t.setdefault(t, np.zeros(len(labels)))
            vec[col[row["state"]]] = float(row["mu"])
    out: dict[int, dict[int, np.ndarray]] = {}
    for trial, per_agent in rows.items():
        out[trial] = {a: np.stack([per_t[t] for t in sorted(per_t)]) for a, per_t in per_agent.items()}
    return out
