"""Offline checks on recorded runs.

The aggregation step of every round is equivalent to a row-stochastic
matrix ``A[t]`` acting on the previous log-beliefs of the non-faulty
agents.  This module recovers such matrices from round records, multiplies
them into backward products ``Phi(t, r) = A[t] ... A[r]`` and uses those to
replay the log-belief-ratio recursion and the centred likelihood statistic.

Agents are addressed by their row position in the sorted list of
non-faulty agents unless stated otherwise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .geometry import VERIFY_TOL, min_norm_hull_weights
from .observation import LikelihoodModel, h_value
from .protocol import RoundRecord
from .topology import ReducedGraph, SourceComponent

__all__ = [
    "ExtractionError",
    "TransitionMatrix",
    "ProductMatrix",
    "PsiTrace",
    "BetaResult",
    "Lemma1Row",
    "extract_transition_matrix",
    "phi_product",
    "empirical_beta",
    "collect_source_components",
    "lemma1_window_check",
    "psi_trace",
    "log_likelihood_series",
    "psi_reconstruction_check",
    "lemma3_statistic",
    "is_block_diagonal",
]

ROW_SUM_TOL = 1e-9
CLAMP_TOL = 1e-12


class ExtractionError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class TransitionMatrix:
    t: int
    entries: np.ndarray
    residual: float
    agents: tuple[int, ...]

    @property
    def row_sum_error(self) -> float:
        return float(np.abs(self.entries.sum(axis=1) - 1.0).max())


@dataclass(frozen=True, eq=False)
class ProductMatrix:
    t: int
    r: int
    entries: np.ndarray


@dataclass(frozen=True, eq=False)
class PsiTrace:
    agent: int
    theta: int
    theta_star: int
    values: np.ndarray  # values[t-1] is psi at round t


def _prev_matrix(prev_beliefs, agents: Sequence[int]) -> np.ndarray:
    if isinstance(prev_beliefs, Mapping):
        return np.stack([np.asarray(prev_beliefs[a], dtype=float) for a in agents])
    return np.asarray(prev_beliefs, dtype=float)


def extract_transition_matrix(
    rec: RoundRecord,
    prev_beliefs: Mapping[int, np.ndarray] | np.ndarray,
    tol: float = VERIFY_TOL,
) -> TransitionMatrix:
    """Row-stochastic ``A[t]`` with ``A[t] @ prev = eta`` for the round in ``rec``.

    Each Tverberg point is written as the minimum-norm convex combination of
    the non-faulty values in its subset; a row is then the own unit vector
    plus those combinations, divided by ``1 + |Z|``.  ``prev_beliefs`` is
    either a mapping agent -> log-belief or an array in sorted-agent order.
    """
    agents = tuple(sorted(rec.agents))
    pos = {a: k for k, a in enumerate(agents)}
    prev = _prev_matrix(prev_beliefs, agents)
    n = len(agents)
    A = np.zeros((n, n))
    residual = 0.0
    memo: dict = {}
    for i in agents:
        ar = rec.agents[i]
        row = np.zeros(n)
        row[pos[i]] = 1.0
        for z, subset in zip(ar.Z, ar.subsets):
            good = [j for j in subset if j in pos]
            key = (tuple(good), z.point.tobytes())
            w = memo.get(key)
            if w is None:
                if not good:
                    raise ExtractionError(f"round {rec.t}, agent {i}: subset {subset} has no non-faulty member")
                hr = min_norm_hull_weights(z.point, prev[[pos[j] for j in good]], tol)
                if not hr.inside:
                    raise ExtractionError(
                        f"round {rec.t}, agent {i}: Tverberg point of subset {subset} is outside the hull "
                        f"of its non-faulty members (more than f faulty senders?)"
                    )
                w = memo[key] = hr.weights
            for j, wj in zip(good, w):
                row[pos[j]] += wj
        row /= 1 + len(ar.Z)
        A[pos[i]] = row
        residual = max(residual, float(np.abs(row @ prev - ar.eta).max()))
    A[(A < 0) & (A >= -CLAMP_TOL)] = 0.0
    if A.min() < 0:
        raise ExtractionError(f"round {rec.t}: negative transition weight {A.min():.3g}")
    return TransitionMatrix(rec.t, A, residual, agents)


def _by_round(mats) -> dict[int, np.ndarray]:
    if isinstance(mats, Mapping):
        return {int(t): (m.entries if isinstance(m, TransitionMatrix) else np.asarray(m)) for t, m in mats.items()}
    return {m.t: m.entries for m in mats}


def phi_product(mats, t: int, r: int) -> ProductMatrix:
    """``A[t] A[t-1] ... A[r]``; the identity when ``r == t + 1``."""
    if not 1 <= r <= t + 1:
        raise ValueError(f"need 1 <= r <= t+1, got t={t}, r={r}")
    by_t = _by_round(mats)
    if not by_t:
        raise ValueError("no transition matrices supplied")
    n = next(iter(by_t.values())).shape[0]
    out = np.eye(n)
    for s in range(t, r - 1, -1):
        if s not in by_t:
            raise KeyError(f"transition matrix for round {s} is missing")
        out = out @ by_t[s]
    return ProductMatrix(t, r, out)


@dataclass(frozen=True)
class BetaResult:
    beta: float
    graph: ReducedGraph | None
    graph_index: int


def empirical_beta(a: TransitionMatrix | np.ndarray, reduced_graphs: Sequence[ReducedGraph], agents: Sequence[int] | None = None) -> BetaResult:
    """Largest ``beta`` with ``A >= beta * H`` over the supplied reduced graphs.

    ``H`` is the graph's adjacency pattern with the diagonal included.
    """
    if not reduced_graphs:
        raise ValueError("empirical_beta needs at least one reduced graph")
    if isinstance(a, TransitionMatrix):
        entries, agents = a.entries, a.agents
    else:
        entries = np.asarray(a, dtype=float)
        agents = tuple(agents) if agents is not None else tuple(range(entries.shape[0]))
    pos = {v: k for k, v in enumerate(agents)}
    diag_min = float(np.diag(entries).min())
    best, best_idx = -1.0, -1
    for idx, h in enumerate(reduced_graphs):
        val = diag_min
        for u, v in h.kept_edges:
            val = min(val, entries[pos[v], pos[u]])
            if val <= best:
                break
        if val > best:
            best, best_idx = val, idx
    if best <= 0:
        return BetaResult(0.0, None, -1)
    return BetaResult(float(best), reduced_graphs[best_idx], best_idx)


def collect_source_components(reduced_graphs: Sequence[ReducedGraph]) -> dict[frozenset[int], int]:
    """Every distinct source component, mapped to the first graph that has it."""
    out: dict[frozenset[int], int] = {}
    for idx, h in enumerate(reduced_graphs):
        for comp in h.sources():
            out.setdefault(comp.members, idx)
    return out


@dataclass(frozen=True)
class Lemma1Row:
    row: int
    agent: int
    graph_index: int
    component: tuple[int, ...]
    min_entry: float
    passed: bool

    def to_dict(self) -> dict:
        return {
            "row": self.row,
            "agent": self.agent,
            "graph_index": self.graph_index,
            "component": list(self.component),
            "min_entry": self.min_entry,
            "passed": self.passed,
        }


def lemma1_window_check(
    phi: ProductMatrix | np.ndarray,
    reduced_graphs: Sequence[ReducedGraph],
    threshold: float,
    agents: Sequence[int] | None = None,
    components: Mapping[frozenset[int], int] | None = None,
) -> list[Lemma1Row]:
    """Per row, the source component on which the row's mass is most uniform.

    The score of a component is the minimum row entry over its members; the
    best-scoring component is reported and passes when it reaches
    ``threshold``.  ``components`` may be precomputed with
    :func:`collect_source_components`.
    """
    if not reduced_graphs:
        raise ValueError("lemma1_window_check needs at least one reduced graph")
    entries = phi.entries if isinstance(phi, ProductMatrix) else np.asarray(phi, dtype=float)
    if agents is None:
        agents = reduced_graphs[0].kept_nodes
    pos = {v: k for k, v in enumerate(agents)}
    comps = components if components is not None else collect_source_components(reduced_graphs)
    order = sorted(comps, key=lambda c: (comps[c], sorted(c)))
    cols = [np.array([pos[v] for v in sorted(c)]) for c in order]
    rows = []
    for i in range(entries.shape[0]):
        best, best_c = -math.inf, None
        for c, idx in zip(order, cols):
            score = float(entries[i, idx].min())
            if score > best:
                best, best_c = score, c
        rows.append(
            Lemma1Row(i, agents[i], comps[best_c], tuple(sorted(best_c)), best, best >= threshold)
        )
    return rows


def psi_trace(beliefs: np.ndarray, i: int, theta: int, theta_star: int) -> PsiTrace:
    """Log-belief ratio series for row ``i``; ``beliefs[t]`` is round ``t`` (row 0 = start)."""
    b = np.asarray(beliefs, dtype=float)
    vals = b[1:, i, theta] - b[1:, i, theta_star]
    return PsiTrace(i, theta, theta_star, vals)


def log_likelihood_series(model: LikelihoodModel, signals: np.ndarray, agents: Sequence[int]) -> np.ndarray:
    """``out[t-1, k, :] = log l_{agents[k]}(s_t | .)`` for a ``(T, n')`` signal array."""
    signals = np.asarray(signals, dtype=int)
    out = np.empty((signals.shape[0], len(agents), model.state_count))
    for k, a in enumerate(agents):
        out[:, k, :] = model._log[a][signals[:, k]]
    return out


def _cumulative_ratios(loglik: np.ndarray, theta_star: int) -> np.ndarray:
    ratios = loglik - loglik[:, :, theta_star : theta_star + 1]
    return np.cumsum(ratios, axis=0)


def psi_reconstruction_check(
    beliefs: np.ndarray,
    loglik: np.ndarray,
    mats,
    theta_star: int,
    ts: Sequence[int] | None = None,
) -> float:
    """Max gap between measured ``psi_t`` and the backward-product double sum.

    ``psi_t = sum_{r=1..t} Phi(t, r+1) S_r`` where ``S_r`` stacks every
    agent's cumulative log-likelihood ratio up to round ``r``.  Evaluated
    literally for each requested ``t`` (default: every round).
    """
    b = np.asarray(beliefs, dtype=float)
    by_t = _by_round(mats)
    T = loglik.shape[0]
    S = _cumulative_ratios(loglik, theta_star)  # S[r-1] is S_r
    ts = range(1, T + 1) if ts is None else ts
    worst = 0.0
    for t in ts:
        n = S.shape[1]
        P = np.eye(n)
        total = S[t - 1].copy()
        for r in range(t - 1, 0, -1):
            P = P @ by_t[r + 1]
            total += P @ S[r - 1]
        measured = b[t] - b[t][:, theta_star : theta_star + 1]
        worst = max(worst, float(np.abs(total - measured).max()))
    return worst


def lemma3_statistic(
    loglik: np.ndarray,
    mats,
    theta: int,
    theta_star: int,
    model: LikelihoodModel,
    agents: Sequence[int],
    ts: Sequence[int] | None = None,
    direct: bool = False,
) -> np.ndarray:
    """``q_t = |Q(1, t)| / t^2`` per agent, with Q the centred likelihood sum.

    ``Q(1, t) = sum_r Phi(t, r+1) (S_r - r H)`` with ``H`` the expected
    one-step log-likelihood ratio per agent.  By default ``Q`` is advanced
    with ``Q(t) = v_t + A[t] Q(t-1)``; ``direct=True`` evaluates the double
    sum term by term instead.  Returns shape ``(len(ts), n')``.
    """
    by_t = _by_round(mats)
    T = loglik.shape[0]
    ratios = loglik[:, :, theta] - loglik[:, :, theta_star]
    S = np.cumsum(ratios, axis=0)
    H = np.array([h_value(model, a, theta, theta_star) for a in agents])
    r_idx = np.arange(1, T + 1)[:, None]
    V = S - r_idx * H  # V[r-1] = S_r - r H
    ts = list(range(1, T + 1)) if ts is None else list(ts)
    out = np.empty((len(ts), len(agents)))
    if direct:
        for k, t in enumerate(ts):
            P = np.eye(len(agents))
            total = V[t - 1].copy()
            for r in range(t - 1, 0, -1):
                P = P @ by_t[r + 1]
                total += P @ V[r - 1]
            out[k] = np.abs(total) / t**2
        return out
    wanted = {t: k for k, t in enumerate(ts)}
    Q = np.zeros(len(agents))
    for t in range(1, max(ts) + 1):
        Q = V[t - 1] + (by_t[t] @ Q if t > 1 else 0.0)
        if t in wanted:
            out[wanted[t]] = np.abs(Q) / t**2
    return out


def is_block_diagonal(entries: np.ndarray, blocks: Sequence[Sequence[int]], tol: float = 0.0) -> bool:
    """Whether all mass of ``entries`` stays inside the given row/column blocks."""
    n = entries.shape[0]
    owner = np.empty(n, dtype=int)
    for k, blk in enumerate(blocks):
        owner[list(blk)] = k
    off = owner[:, None] != owner[None, :]
    return bool(np.all(np.abs(entries[off]) <= tol))
