"""Signal models, KL divergences and the identifiability constants.

All likelihood arithmetic is in natural-log space.  Likelihood matrices are
stored per agent with shape ``(|S_i|, m)``: rows are signals, columns are
states, so ``L[w, k] = l_i(w | theta_k)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .topology import ReducedGraph, Scenario, SourceComponent, count_reduced_graphs, iter_reduced_graphs

__all__ = [
    "MIN_ENTRY",
    "StateSpace",
    "LikelihoodModel",
    "SignalHistory",
    "sample_signal",
    "kl_divergence",
    "h_value",
    "compute_C0",
    "compute_C1",
    "IdentifiabilityReport",
    "Witness",
    "check_global_identifiability",
]

MIN_ENTRY = 1e-12
COLUMN_TOL = 1e-12


@dataclass(frozen=True)
class StateSpace:
    labels: tuple[str, ...]
    true_index: int

    def __post_init__(self) -> None:
        labels = tuple(str(x) for x in self.labels)
        object.__setattr__(self, "labels", labels)
        if len(labels) < 2:
            raise ValueError("a state space needs at least two states")
        if len(set(labels)) != len(labels):
            raise ValueError(f"state labels must be distinct: {labels}")
        if not 0 <= self.true_index < len(labels):
            raise ValueError(f"true_index {self.true_index} outside 0..{len(labels) - 1}")

    @classmethod
    def of_size(cls, m: int, true_index: int = 0) -> "StateSpace":
        return cls(tuple(f"theta{k + 1}" for k in range(m)), true_index)

    @property
    def m(self) -> int:
        return len(self.labels)

    def others(self) -> list[int]:
        return [k for k in range(self.m) if k != self.true_index]


@dataclass(frozen=True, eq=False)
class LikelihoodModel:
    """Per-agent finite signal distributions for every state.

    Construction validates full support (entries >= 1e-12) and that each
    column is a distribution to 1e-12.
    """

    matrices: tuple[np.ndarray, ...]
    _log: tuple[np.ndarray, ...] = field(init=False, repr=False)
    _cdf: tuple[np.ndarray, ...] = field(init=False, repr=False)

    def __post_init__(self) -> None:
        mats = []
        m = None
        for i, raw in enumerate(self.matrices):
            mat = np.array(raw, dtype=float)
            if mat.ndim != 2 or mat.shape[0] < 1:
                raise ValueError(f"agent {i}: likelihood matrix must be 2-D with at least one signal row")
            if m is None:
                m = mat.shape[1]
            elif mat.shape[1] != m:
                raise ValueError(f"agent {i}: expected {m} state columns, got {mat.shape[1]}")
            if not np.all(np.isfinite(mat)):
                raise ValueError(f"agent {i}: likelihood entries must be finite")
            if mat.min() < MIN_ENTRY:
                raise ValueError(
                    f"agent {i}: likelihood entry {mat.min():.3g} below the full-support floor {MIN_ENTRY}"
                )
            sums = mat.sum(axis=0)
            bad = np.flatnonzero(np.abs(sums - 1.0) > COLUMN_TOL)
            if bad.size:
                k = int(bad[0])
                raise ValueError(f"agent {i}: column for state {k} sums to {sums[k]!r}, not 1")
            mat.setflags(write=False)
            mats.append(mat)
        if not mats:
            raise ValueError("likelihood model needs at least one agent")
        object.__setattr__(self, "matrices", tuple(mats))
        object.__setattr__(self, "_log", tuple(np.log(x) for x in mats))
        cdfs = []
        for x in mats:
            c = np.cumsum(x, axis=0)
            c[-1, :] = 1.0
            cdfs.append(c)
        object.__setattr__(self, "_cdf", tuple(cdfs))

    @classmethod
    def from_dict(cls, data: dict, n: int | None = None) -> "LikelihoodModel":
        """Parse ``{"agents": [{"signals": k, "matrix": [[...], ...]}, ...]}``.

        A ``"default"`` entry fills every agent not listed explicitly when
        ``n`` is given; ``"agents"`` may also be a mapping from index to entry.
        """
        agents = data.get("agents", [])
        default = data.get("default")
        if isinstance(agents, dict):
            listed = {int(k): v for k, v in agents.items()}
        else:
            listed = dict(enumerate(agents))
        count = n if n is not None else len(listed)
        mats = []
        for i in range(count):
            entry = listed.get(i, default)
            if entry is None:
                raise ValueError(f"model has no entry for agent {i}")
            mat = np.array(entry["matrix"], dtype=float)
            if "signals" in entry and mat.shape[0] != entry["signals"]:
                raise ValueError(
                    f"agent {i}: 'signals'={entry['signals']} but matrix has {mat.shape[0]} rows"
                )
            mats.append(mat)
        return cls(tuple(mats))

    def to_dict(self) -> dict:
        return {
            "agents": [
                {"signals": int(x.shape[0]), "matrix": x.tolist()} for x in self.matrices
            ]
        }

    @property
    def agent_count(self) -> int:
        return len(self.matrices)

    @property
    def state_count(self) -> int:
        return self.matrices[0].shape[1]

    def signal_count(self, agent: int) -> int:
        return self.matrices[agent].shape[0]

    def log_likelihood(self, agent: int, signal: int) -> np.ndarray:
        """``log l_agent(signal | theta)`` for every state, shape ``(m,)``."""
        return self._log[agent][signal]

    def column(self, agent: int, state: int) -> np.ndarray:
        return self.matrices[agent][:, state]


class SignalHistory:
    """Observed signals of one agent and their cumulative log-likelihoods."""

    __slots__ = ("signals", "cumulative")

    def __init__(self, m: int):
        self.signals: list[int] = []
        self.cumulative = np.zeros(m)

    def record(self, signal: int, log_lik: np.ndarray) -> None:
        self.signals.append(int(signal))
        self.cumulative = self.cumulative + log_lik

    def recompute(self, model: LikelihoodModel, agent: int) -> np.ndarray:
        logs = model._log[agent]
        if not self.signals:
            return np.zeros(model.state_count)
        return logs[np.asarray(self.signals)].sum(axis=0)

    def __len__(self) -> int:
        return len(self.signals)

    def copy(self) -> "SignalHistory":
        h = SignalHistory(self.cumulative.shape[0])
        h.signals = list(self.signals)
        h.cumulative = self.cumulative.copy()
        return h


def sample_signal(model: LikelihoodModel, agent: int, state: StateSpace, rng: np.random.Generator) -> int:
    """Draw one signal from ``l_agent(. | theta*)`` by inverse CDF."""
    cdf = model._cdf[agent][:, state.true_index]
    return int(np.searchsorted(cdf, rng.random(), side="right"))


def kl_divergence(model: LikelihoodModel, agent: int, theta_a: int, theta_b: int) -> float:
    """``D(l(.|theta_a) || l(.|theta_b))`` in nats."""
    p = model.matrices[agent][:, theta_a]
    logs = model._log[agent]
    return float(max(np.sum(p * (logs[:, theta_a] - logs[:, theta_b])), 0.0))


def h_value(model: LikelihoodModel, agent: int, theta: int, theta_star: int) -> float:
    """Expected one-step log-likelihood ratio of ``theta`` against ``theta_star``."""
    return -kl_divergence(model, agent, theta_star, theta)


def compute_C0(model: LikelihoodModel) -> float:
    """Largest magnitude of any single-signal log-likelihood ratio."""
    worst = 0.0
    for logs in model._log:
        # min over ordered state pairs of a column difference = row min - row max
        spread = logs.max(axis=1) - logs.min(axis=1)
        worst = max(worst, float(spread.max()))
    return worst


def _component_margin(model: LikelihoodModel, members, theta_star: int, theta: int) -> float:
    return sum(kl_divergence(model, j, theta_star, theta) for j in members)


def compute_C1(
    model: LikelihoodModel,
    components: Sequence[SourceComponent],
    state: StateSpace,
    strict: bool = False,
) -> float:
    """Worst collective KL margin over the supplied source components.

    By default the true state is held fixed and the minimum runs over the
    other states.  ``strict=True`` minimises over every ordered pair of
    distinct states instead.
    """
    if not components:
        raise ValueError("compute_C1 needs at least one source component")
    if strict:
        pairs = [(a, b) for a in range(state.m) for b in range(state.m) if a != b]
    else:
        pairs = [(state.true_index, b) for b in state.others()]
    best = math.inf
    for comp in components:
        for a, b in pairs:
            best = min(best, _component_margin(model, comp.members, a, b))
    return best


@dataclass(frozen=True)
class Witness:
    graph_index: int
    graph: ReducedGraph
    component: SourceComponent
    theta: int

    def to_dict(self, state: StateSpace | None = None) -> dict:
        out = {
            "graph_index": self.graph_index,
            "graph": self.graph.to_dict(),
            "component": self.component.sorted_members(),
            "theta": self.theta,
        }
        if state is not None:
            out["theta_label"] = state.labels[self.theta]
        return out


@dataclass(frozen=True)
class IdentifiabilityReport:
    holds: bool
    witness: Witness | None
    exhaustive: bool
    graphs_checked: int
    components_checked: int


def check_global_identifiability(
    model: LikelihoodModel,
    scenario: Scenario,
    state: StateSpace,
    cap: int = 100_000,
    tol: float = 0.0,
) -> IdentifiabilityReport:
    """Test every source component of every reduced graph (up to ``cap``).

    A component passes for ``theta`` when its summed KL divergence from the
    true state exceeds ``tol``.  Stops at the first failing component.
    """
    if cap < 1:
        raise ValueError(f"cap must be a positive integer, got {cap}")
    if model.agent_count < scenario.graph.node_count:
        raise ValueError(
            f"model covers {model.agent_count} agents but the graph has {scenario.graph.node_count}"
        )
    exhaustive = count_reduced_graphs(scenario) <= cap
    margins: dict[frozenset[int], tuple[float, int]] = {}
    checked = 0
    for idx, h in enumerate(iter_reduced_graphs(scenario)):
        if idx >= cap:
            break
        checked += 1
        for comp in h.sources():
            if comp.members not in margins:
                worst = (math.inf, -1)
                for theta in state.others():
                    val = _component_margin(model, comp.members, state.true_index, theta)
                    if val < worst[0]:
                        worst = (val, theta)
                margins[comp.members] = worst
            val, theta = margins[comp.members]
            if not val > tol:
                return IdentifiabilityReport(
                    False, Witness(idx, h, comp, theta), exhaustive, checked, len(margins)
                )
    return IdentifiabilityReport(True, None, exhaustive, checked, len(margins))
