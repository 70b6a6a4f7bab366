"""Experiment configuration documents.

A config is one JSON document with sections ``graph``, ``scenario``,
``model``, ``adversary``, ``run`` and ``analysis``::

    {
      "graph": {"n": 5, "complete": true},
      "scenario": {"faulty": [4], "fault_bound": 1, "state_count": 2, "true_state": 0},
      "model": {"default": {"matrix": [[0.7, 0.3], [0.3, 0.7]]}},
      "adversary": {"4": {"kind": "split_equivocate", "theta_bad": 1}},
      "run": {"horizon": 2000, "seed": 1, "trials": 20},
      "analysis": {"identifiability": true}
    }

``model`` may instead be ``{"path": "model.json"}`` (relative to the
config file).  Defaults: ``trials = 1``, ``cap = 100000``,
``max_in_degree = 12``, every analysis off.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any

from ..observation import LikelihoodModel, StateSpace
from ..protocol import DEFAULT_MAX_IN_DEGREE, AdversaryStrategy
from ..topology import DirectedGraph, Scenario

__all__ = ["ConfigError", "AnalysisOptions", "ExperimentConfig", "load_config", "config_from_dict"]

DEFAULT_CAP = 100_000


class ConfigError(ValueError):
    """Invalid configuration; ``field`` names the offending entry."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field
        self.message = message


@dataclass(frozen=True)
class AnalysisOptions:
    identifiability: bool = False
    transition_matrices: bool = False
    psi_reconstruction: bool = False
    psi_rounds: int = 50
    window_checks: tuple[tuple[int, int], ...] = ()
    window_threshold: float = 1e-4
    decay_times: tuple[int, ...] = ()
    belief_trend: bool = False
    keep_records: bool = False

    @property
    def any_enabled(self) -> bool:
        return bool(
            self.identifiability
            or self.transition_matrices
            or self.psi_reconstruction
            or self.window_checks
            or self.decay_times
            or self.belief_trend
        )

    def needed_rounds(self, horizon: int) -> set[int]:
        """Rounds whose transition matrix some enabled analysis needs."""
        out: set[int] = set()
        if self.transition_matrices:
            out.update(range(1, horizon + 1))
        if self.psi_reconstruction:
            out.update(range(1, min(self.psi_rounds, horizon) + 1))
        for end, length in self.window_checks:
            out.update(range(max(1, end - length + 1), end + 1))
        if self.decay_times:
            out.update(range(1, max(self.decay_times) + 1))
        return out

    def to_dict(self) -> dict:
        return {
            "identifiability": self.identifiability,
            "transition_matrices": self.transition_matrices,
            "psi_reconstruction": self.psi_reconstruction,
            "psi_rounds": self.psi_rounds,
            "window_checks": [list(w) for w in self.window_checks],
            "window_threshold": self.window_threshold,
            "decay_times": list(self.decay_times),
            "belief_trend": self.belief_trend,
            "keep_records": self.keep_records,
        }

    @classmethod
    def full(cls, horizon: int) -> "AnalysisOptions":
        """Everything on, with windows and checkpoints scaled to ``horizon``."""
        length = min(50, horizon)
        ends = sorted({max(length, horizon // 4), max(length, horizon // 2), horizon})
        times = sorted({max(1, horizon // 16), max(1, horizon // 4), horizon})
        return cls(
            identifiability=True,
            transition_matrices=True,
            psi_reconstruction=True,
            psi_rounds=min(50, horizon),
            window_checks=tuple((e, length) for e in ends),
            decay_times=tuple(times),
            belief_trend=True,
        )


@dataclass(frozen=True)
class ExperimentConfig:
    scenario: Scenario
    state: StateSpace
    model: LikelihoodModel
    strategies: dict[int, AdversaryStrategy]
    horizon: int
    seed: int
    trials: int = 1
    cap: int = DEFAULT_CAP
    max_in_degree: int = DEFAULT_MAX_IN_DEGREE
    analysis: AnalysisOptions = field(default_factory=AnalysisOptions)

    def __post_init__(self) -> None:
        if self.horizon < 1:
            raise ConfigError("run.horizon", f"must be >= 1, got {self.horizon}")
        if self.trials < 1:
            raise ConfigError("run.trials", f"must be >= 1, got {self.trials}")
        if self.cap < 1:
            raise ConfigError("run.cap", f"must be >= 1, got {self.cap}")
        for end, length in self.analysis.window_checks:
            if not (1 <= length <= end <= self.horizon):
                raise ConfigError("analysis.window_checks", f"window (end={end}, length={length}) does not fit horizon {self.horizon}")
        for t in self.analysis.decay_times:
            if not 1 <= t <= self.horizon:
                raise ConfigError("analysis.decay_times", f"time {t} outside 1..{self.horizon}")

    def with_overrides(self, **kwargs) -> "ExperimentConfig":
        return replace(self, **{k: v for k, v in kwargs.items() if v is not None})

    def to_dict(self) -> dict:
        """Self-contained snapshot (model inlined) that round-trips through :func:`config_from_dict`."""
        sc = self.scenario
        return {
            "graph": sc.graph.to_dict(),
            "scenario": {
                "faulty": sorted(sc.faulty_set),
                "fault_bound": sc.fault_bound,
                "states": list(self.state.labels),
                "true_state": self.state.true_index,
            },
            "model": self.model.to_dict(),
            "adversary": {str(k): s.to_dict() for k, s in sorted(self.strategies.items())},
            "run": {
                "horizon": self.horizon,
                "seed": self.seed,
                "trials": self.trials,
                "cap": self.cap,
                "max_in_degree": self.max_in_degree,
            },
            "analysis": self.analysis.to_dict(),
        }


def _int(section: dict, key: str, where: str, default: Any = None) -> int:
    if key not in section:
        if default is None:
            raise ConfigError(f"{where}.{key}", "is required")
        return default
    val = section[key]
    if not isinstance(val, int) or isinstance(val, bool):
        raise ConfigError(f"{where}.{key}", f"must be an integer, got {val!r}")
    return val


def _section(doc: dict, name: str, required: bool = True) -> dict:
    sec = doc.get(name)
    if sec is None:
        if required:
            raise ConfigError(name, "section is missing")
        return {}
    if not isinstance(sec, dict):
        raise ConfigError(name, "section must be an object")
    return sec


def _parse_analysis(sec: dict, horizon: int) -> AnalysisOptions:
    if sec.get("full"):
        return AnalysisOptions.full(horizon)
    known = set(AnalysisOptions().to_dict())
    extra = set(sec) - known
    if extra:
        raise ConfigError("analysis", f"unknown toggles {sorted(extra)}")
    try:
        windows = tuple((int(e), int(l)) for e, l in sec.get("window_checks", []))
    except (TypeError, ValueError):
        raise ConfigError("analysis.window_checks", "must be a list of [end, length] pairs") from None
    return AnalysisOptions(
        identifiability=bool(sec.get("identifiability", False)),
        transition_matrices=bool(sec.get("transition_matrices", False)),
        psi_reconstruction=bool(sec.get("psi_reconstruction", False)),
        psi_rounds=_int(sec, "psi_rounds", "analysis", 50),
        window_checks=windows,
        window_threshold=float(sec.get("window_threshold", 1e-4)),
        decay_times=tuple(int(t) for t in sec.get("decay_times", [])),
        belief_trend=bool(sec.get("belief_trend", False)),
        keep_records=bool(sec.get("keep_records", False)),
    )


def config_from_dict(doc: dict, base_dir: Path | None = None) -> ExperimentConfig:
    if not isinstance(doc, dict):
        raise ConfigError("<root>", "config must be a JSON object")
    g_sec = _section(doc, "graph")
    try:
        graph = DirectedGraph.from_dict(g_sec)
    except ValueError as exc:
        raise ConfigError("graph", str(exc)) from None

    s_sec = _section(doc, "scenario")
    labels = s_sec.get("states")
    if labels is None:
        m = _int(s_sec, "state_count", "scenario")
        labels = [f"theta{k + 1}" for k in range(m)]
    if not isinstance(labels, list):
        raise ConfigError("scenario.states", "must be a list of labels")
    true_raw = s_sec.get("true_state", 0)
    if isinstance(true_raw, str):
        if true_raw not in labels:
            raise ConfigError("scenario.true_state", f"{true_raw!r} is not one of {labels}")
        true_index = labels.index(true_raw)
    else:
        true_index = true_raw
    try:
        state = StateSpace(tuple(labels), int(true_index))
    except ValueError as exc:
        raise ConfigError("scenario.states", str(exc)) from None
    faulty = s_sec.get("faulty", [])
    if not isinstance(faulty, list) or not all(isinstance(v, int) for v in faulty):
        raise ConfigError("scenario.faulty", "must be a list of node indices")
    f = _int(s_sec, "fault_bound", "scenario", len(faulty))
    if f < len(faulty):
        raise ConfigError("scenario.fault_bound", f"fault_bound={f} is below the faulty set size {len(faulty)}")
    try:
        scenario = Scenario(graph, frozenset(faulty), f, state.m)
    except ValueError as exc:
        raise ConfigError("scenario.faulty", str(exc)) from None

    m_sec = _section(doc, "model")
    if "path" in m_sec:
        p = Path(m_sec["path"])
        if base_dir is not None and not p.is_absolute():
            p = base_dir / p
        m_sec = _read_json(p)
    try:
        model = LikelihoodModel.from_dict(m_sec, graph.node_count)
    except (ValueError, KeyError, TypeError) as exc:
        raise ConfigError("model", str(exc)) from None
    if model.state_count != state.m:
        raise ConfigError("model", f"matrices have {model.state_count} state columns, scenario has {state.m} states")

    strategies: dict[int, AdversaryStrategy] = {}
    for key, spec in _section(doc, "adversary", required=False).items():
        try:
            agent = int(key)
        except ValueError:
            raise ConfigError("adversary", f"key {key!r} is not an agent index") from None
        if agent not in scenario.faulty_set:
            raise ConfigError(f"adversary.{key}", "agent is not in the faulty set")
        try:
            strat = AdversaryStrategy.from_dict(spec)
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"adversary.{key}", str(exc)) from None
        if not 0 <= strat.theta_bad < state.m:
            raise ConfigError(f"adversary.{key}.theta_bad", f"{strat.theta_bad} is not a valid state index")
        strategies[agent] = strat
    for k in scenario.faulty_set:
        strategies.setdefault(k, AdversaryStrategy())

    r_sec = _section(doc, "run")
    horizon = _int(r_sec, "horizon", "run")
    analysis = _parse_analysis(_section(doc, "analysis", required=False), horizon)
    return ExperimentConfig(
        scenario=scenario,
        state=state,
        model=model,
        strategies=strategies,
        horizon=horizon,
        seed=_int(r_sec, "seed", "run", 0),
        trials=_int(r_sec, "trials", "run", 1),
        cap=_int(r_sec, "cap", "run", DEFAULT_CAP),
        max_in_degree=_int(r_sec, "max_in_degree", "run", DEFAULT_MAX_IN_DEGREE),
        analysis=analysis,
    )


def _read_json(path: Path) -> Any:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError("<file>", f"cannot read {path}: {exc.strerror}") from None
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError("<parse>", f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from None


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    return config_from_dict(_read_json(path), path.parent)
