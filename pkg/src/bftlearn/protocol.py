"""Synchronous round engine for Byzantine-resilient non-Bayesian learning.

Each round every non-faulty agent broadcasts its log-belief, replaces the
multiset it receives (plus its own value) by the Tverberg points of all its
``(m+1)f+1``-subsets, averages those with its own value, and then applies a
Bayesian update with its cumulative signal likelihood.  Faulty agents emit
whatever their :class:`AdversaryStrategy` dictates, per outgoing link.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .geometry import TverbergError, TverbergResult, tverberg_point
from .observation import LikelihoodModel, SignalHistory, StateSpace, sample_signal
from .topology import Scenario

__all__ = [
    "DEFAULT_MAX_IN_DEGREE",
    "ADVERSARY_KINDS",
    "AgentState",
    "AdversaryStrategy",
    "AgentRound",
    "RoundRecord",
    "ProtocolError",
    "World",
    "WorldView",
    "logsumexp",
    "initial_state",
    "subset_size",
    "aggregate",
    "bayesian_update",
    "adversary_emit",
    "step_round",
    "agent_rng",
]

DEFAULT_MAX_IN_DEGREE = 12
ADVERSARY_KINDS = ("conformant", "constant_push", "random_noise", "split_equivocate")

# stream ids mixed into per-agent seeds
SIGNAL_STREAM = 0
ADVERSARY_STREAM = 1


class ProtocolError(RuntimeError):
    def __init__(self, message: str, round_index: int | None = None, agent: int | None = None):
        super().__init__(message)
        self.round_index = round_index
        self.agent = agent


def logsumexp(v: np.ndarray) -> float:
    mx = float(v.max())
    return mx + math.log(float(np.exp(v - mx).sum()))


@dataclass
class AgentState:
    """Log-belief ``log mu_t`` of a non-faulty agent plus its signal history."""

    belief: np.ndarray
    history: SignalHistory

    @property
    def mu(self) -> np.ndarray:
        return np.exp(self.belief)


def initial_state(m: int) -> AgentState:
    if m < 2:
        raise ValueError(f"need at least two states, got m={m}")
    return AgentState(np.full(m, math.log(1.0 / m)), SignalHistory(m))


@dataclass(frozen=True)
class AdversaryStrategy:
    """Fixed Byzantine policy.

    ``constant_push`` adds ``magnitude`` to the ``theta_bad`` coordinate of the
    reference vector and renormalises; ``random_noise`` adds i.i.d. uniform
    noise in ``[-scale, scale]``; ``split_equivocate`` pushes ``theta_bad`` to
    even-indexed targets and the true state to odd-indexed ones.
    """

    kind: str = "conformant"
    theta_bad: int = 1
    magnitude: float = 10.0
    scale: float = 1.0

    def __post_init__(self) -> None:
        if self.kind not in ADVERSARY_KINDS:
            raise ValueError(f"unknown adversary kind {self.kind!r}; expected one of {ADVERSARY_KINDS}")
        for name in ("magnitude", "scale"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"adversary parameter {name} must be finite")
        if self.scale < 0:
            raise ValueError("adversary noise scale must be non-negative")

    @classmethod
    def from_dict(cls, data: Mapping) -> "AdversaryStrategy":
        allowed = {"kind", "theta_bad", "magnitude", "scale"}
        extra = set(data) - allowed
        if extra:
            raise ValueError(f"unknown adversary fields: {sorted(extra)}")
        return cls(
            kind=data.get("kind", "conformant"),
            theta_bad=int(data.get("theta_bad", 1)),
            magnitude=float(data.get("magnitude", 10.0)),
            scale=float(data.get("scale", 1.0)),
        )

    def to_dict(self) -> dict:
        return {"kind": self.kind, "theta_bad": self.theta_bad, "magnitude": self.magnitude, "scale": self.scale}


@dataclass(frozen=True)
class WorldView:
    """What an adversary can see when choosing a message: everything honest."""

    broadcasts: Mapping[int, np.ndarray]
    state: StateSpace
    round_index: int

    def reference(self) -> np.ndarray:
        """The adversary's stand-in for its own honest value: the mean honest broadcast."""
        if not self.broadcasts:
            return np.full(self.state.m, math.log(1.0 / self.state.m))
        return np.mean(np.stack([self.broadcasts[i] for i in sorted(self.broadcasts)]), axis=0)


def _push(ref: np.ndarray, theta: int, magnitude: float) -> np.ndarray:
    v = ref.copy()
    v[theta] += magnitude
    return v - logsumexp(v)


def adversary_emit(strategy: AdversaryStrategy, view: WorldView, target: int, rng: np.random.Generator) -> np.ndarray:
    """Vector a faulty agent sends to ``target`` this round."""
    ref = view.reference()
    kind = strategy.kind
    if kind == "conformant":
        return ref
    if kind == "constant_push":
        if strategy.magnitude == 0.0:
            return ref
        return _push(ref, strategy.theta_bad, strategy.magnitude)
    if kind == "random_noise":
        return ref + rng.uniform(-strategy.scale, strategy.scale, size=ref.shape[0])
    theta = strategy.theta_bad if target % 2 == 0 else view.state.true_index
    return _push(ref, theta, strategy.magnitude)


def subset_size(m: int, f: int) -> int:
    return (m + 1) * f + 1


def aggregate(
    x_own: np.ndarray,
    received: Sequence[tuple[int, np.ndarray]],
    f: int,
    m: int,
    own_index: int = -1,
    cache: dict | None = None,
    max_in_degree: int = DEFAULT_MAX_IN_DEGREE,
) -> tuple[np.ndarray, list[TverbergResult], list[tuple[int, ...]]]:
    """Replace every ``(m+1)f+1``-subset of own + received values by a Tverberg point.

    Values are ordered by sender index (the own value under ``own_index``)
    and subsets are taken in lexicographic order of those positions.
    Returns ``(eta, Z, subsets)`` where ``subsets[k]`` lists the senders
    behind ``Z[k]``.  With too few values ``Z`` is empty and ``eta`` is the
    own value.  ``cache`` may be shared by agents within a round; it maps
    the raw bytes of an ordered subset to its Tverberg result.
    """
    if len(received) > max_in_degree:
        raise ValueError(f"in-degree {len(received)} exceeds the cap of {max_in_degree}")
    entries = sorted([(own_index, x_own), *received], key=lambda e: e[0])
    size = subset_size(m, f)
    if len(entries) < size:
        return np.array(x_own, dtype=float), [], []
    senders = [e[0] for e in entries]
    pts = np.stack([np.asarray(e[1], dtype=float) for e in entries])
    Z: list[TverbergResult] = []
    subsets: list[tuple[int, ...]] = []
    for combo in itertools.combinations(range(len(entries)), size):
        sub = pts[list(combo)]
        if cache is None:
            res = tverberg_point(sub, f)
        else:
            key = sub.tobytes()
            res = cache.get(key)
            if res is None:
                res = cache[key] = tverberg_point(sub, f)
        Z.append(res)
        subsets.append(tuple(senders[j] for j in combo))
    total = np.array(x_own, dtype=float)
    for z in Z:
        total = total + z.point
    return total / (1 + len(Z)), Z, subsets


def bayesian_update(eta: np.ndarray, cumulative_loglik: np.ndarray) -> np.ndarray:
    v = cumulative_loglik + eta
    return v - logsumexp(v)


@dataclass
class AgentRound:
    agent: int
    sent: np.ndarray
    received: tuple[tuple[int, np.ndarray], ...]
    subsets: tuple[tuple[int, ...], ...]
    Z: tuple[TverbergResult, ...]
    eta: np.ndarray
    signal: int
    belief: np.ndarray


@dataclass
class RoundRecord:
    t: int
    agents: dict[int, AgentRound]
    emissions: dict[int, dict[int, np.ndarray]]


def agent_rng(seed: int, trial: int, agent: int, stream: int) -> np.random.Generator:
    """Independent generator for one (trial, agent, purpose) triple."""
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(trial, agent, stream)))


@dataclass
class World:
    scenario: Scenario
    model: LikelihoodModel
    state: StateSpace
    strategies: dict[int, AdversaryStrategy]
    agents: dict[int, AgentState]
    signal_rngs: dict[int, np.random.Generator]
    adversary_rngs: dict[int, np.random.Generator]
    max_in_degree: int = DEFAULT_MAX_IN_DEGREE
    t: int = 0
    _in: dict[int, list[int]] = field(default_factory=dict, repr=False)
    _out: dict[int, list[int]] = field(default_factory=dict, repr=False)

    @classmethod
    def create(
        cls,
        scenario: Scenario,
        model: LikelihoodModel,
        state: StateSpace,
        strategies: Mapping[int, AdversaryStrategy] | None = None,
        seed: int = 0,
        trial: int = 0,
        max_in_degree: int = DEFAULT_MAX_IN_DEGREE,
    ) -> "World":
        n = scenario.graph.node_count
        if model.agent_count < n:
            raise ValueError(f"model covers {model.agent_count} agents, graph has {n}")
        if model.state_count != state.m or scenario.state_count != state.m:
            raise ValueError("state count mismatch between scenario, model and state space")
        strategies = dict(strategies or {})
        for k, s in strategies.items():
            if k not in scenario.faulty_set:
                raise ValueError(f"adversary strategy given for non-faulty agent {k}")
            if not 0 <= s.theta_bad < state.m:
                raise ValueError(f"adversary theta_bad={s.theta_bad} is not a valid state")
        for k in scenario.faulty_set:
            strategies.setdefault(k, AdversaryStrategy())
        honest = scenario.non_faulty
        g = scenario.graph
        return cls(
            scenario=scenario,
            model=model,
            state=state,
            strategies=strategies,
            agents={i: initial_state(state.m) for i in honest},
            signal_rngs={i: agent_rng(seed, trial, i, SIGNAL_STREAM) for i in honest},
            adversary_rngs={k: agent_rng(seed, trial, k, ADVERSARY_STREAM) for k in sorted(scenario.faulty_set)},
            max_in_degree=max_in_degree,
            _in={v: g.in_neighbors(v) for v in g.nodes},
            _out={v: g.out_neighbors(v) for v in g.nodes},
        )

    @property
    def honest(self) -> list[int]:
        return sorted(self.agents)

    def beliefs(self) -> np.ndarray:
        """Current log-beliefs, one row per non-faulty agent in index order."""
        return np.stack([self.agents[i].belief for i in self.honest])


def step_round(world: World, t: int | None = None) -> RoundRecord:
    """Advance ``world`` by one synchronous round and return what happened."""
    t = world.t + 1 if t is None else t
    sc = world.scenario
    f = sc.fault_bound
    m = world.state.m
    broadcasts = {i: st.belief for i, st in world.agents.items()}
    view = WorldView(broadcasts, world.state, t)

    emissions: dict[int, dict[int, np.ndarray]] = {}
    for k in sorted(sc.faulty_set):
        strat = world.strategies[k]
        rng = world.adversary_rngs[k]
        emissions[k] = {v: adversary_emit(strat, view, v, rng) for v in world._out[k]}

    cache: dict = {}
    rounds: dict[int, AgentRound] = {}
    for i in world.honest:
        x_own = broadcasts[i]
        received = tuple(
            (j, broadcasts[j] if j in broadcasts else emissions[j][i]) for j in world._in[i]
        )
        try:
            eta, Z, subsets = aggregate(x_own, received, f, m, i, cache, world.max_in_degree)
        except (TverbergError, ValueError) as exc:
            raise ProtocolError(f"round {t}, agent {i}: {exc}", t, i) from exc
        st = world.agents[i]
        s = sample_signal(world.model, i, world.state, world.signal_rngs[i])
        st.history.record(s, world.model.log_likelihood(i, s))
        belief = bayesian_update(eta, st.history.cumulative)
        rounds[i] = AgentRound(i, x_own, received, tuple(subsets), tuple(Z), eta, s, belief)

    for i, rec in rounds.items():
        world.agents[i].belief = rec.belief
    world.t = t
    return RoundRecord(t, rounds, emissions)
