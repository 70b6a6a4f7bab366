"""Directed communication graphs, source components and reduced graphs.

A reduced graph drops every faulty node (and its links) and then, at each
remaining node, up to ``m * f`` further incoming links.  The family of all
such graphs is what the trimming performed by Tverberg aggregation can look
like from the outside, so most of the assumption checks iterate over it.
"""

from __future__ import annotations

import itertools
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Sequence

__all__ = [
    "DirectedGraph",
    "Scenario",
    "ReducedGraph",
    "SourceComponent",
    "strongly_connected_components",
    "source_components",
    "check_reachability_condition",
    "iter_reduced_graphs",
    "enumerate_reduced_graphs",
    "count_reduced_graphs",
]


@dataclass(frozen=True)
class DirectedGraph:
    """Simple digraph on nodes ``0..node_count-1``.

    Self-loops are rejected: every agent always sees its own value, so the
    protocol treats self-influence as implicit.
    """

    node_count: int
    edges: frozenset[tuple[int, int]] = frozenset()

    def __post_init__(self) -> None:
        if self.node_count < 1:
            raise ValueError(f"node_count must be positive, got {self.node_count}")
        edges = frozenset((int(u), int(v)) for u, v in self.edges)
        for u, v in edges:
            if not (0 <= u < self.node_count and 0 <= v < self.node_count):
                raise ValueError(f"edge ({u}, {v}) has an endpoint outside 0..{self.node_count - 1}")
            if u == v:
                raise ValueError(f"self-loop on node {u} is not allowed")
        object.__setattr__(self, "edges", edges)

    @classmethod
    def complete(cls, n: int) -> "DirectedGraph":
        return cls(n, frozenset((u, v) for u in range(n) for v in range(n) if u != v))

    @classmethod
    def from_dict(cls, data: dict) -> "DirectedGraph":
        """Build from the ``{"n": ..., "edges": [[src, dst], ...]}`` document form.

        ``"complete": true`` may replace ``edges`` for a complete digraph.
        """
        if "n" not in data:
            raise ValueError("graph document needs an integer field 'n'")
        n = data["n"]
        if not isinstance(n, int) or isinstance(n, bool):
            raise ValueError(f"graph field 'n' must be an integer, got {n!r}")
        if data.get("complete"):
            return cls.complete(n)
        edges = []
        for pair in data.get("edges", []):
            if not isinstance(pair, (list, tuple)) or len(pair) != 2:
                raise ValueError(f"graph edge must be a [src, dst] pair, got {pair!r}")
            edges.append((pair[0], pair[1]))
        return cls(n, frozenset(edges))

    def to_dict(self) -> dict:
        return {"n": self.node_count, "edges": [list(e) for e in sorted(self.edges)]}

    @property
    def nodes(self) -> range:
        return range(self.node_count)

    def in_neighbors(self, v: int) -> list[int]:
        return sorted(u for u, w in self.edges if w == v)

    def out_neighbors(self, u: int) -> list[int]:
        return sorted(w for x, w in self.edges if x == u)

    def relabel(self, perm: Sequence[int]) -> "DirectedGraph":
        """Graph with node ``v`` renamed to ``perm[v]``."""
        return DirectedGraph(self.node_count, frozenset((perm[u], perm[v]) for u, v in self.edges))


@dataclass(frozen=True)
class Scenario:
    """One execution: a graph, the actual faulty set and the bound ``f``."""

    graph: DirectedGraph
    faulty_set: frozenset[int]
    fault_bound: int
    state_count: int

    def __post_init__(self) -> None:
        faulty = frozenset(int(v) for v in self.faulty_set)
        object.__setattr__(self, "faulty_set", faulty)
        if self.fault_bound < 0:
            raise ValueError(f"fault_bound must be non-negative, got {self.fault_bound}")
        if len(faulty) > self.fault_bound:
            raise ValueError(
                f"fault_bound={self.fault_bound} is smaller than the faulty set size {len(faulty)}"
            )
        bad = [v for v in faulty if not 0 <= v < self.graph.node_count]
        if bad:
            raise ValueError(f"faulty_set contains nodes outside the graph: {sorted(bad)}")
        if self.state_count < 1:
            raise ValueError(f"state_count must be positive, got {self.state_count}")

    @property
    def non_faulty(self) -> list[int]:
        return [v for v in self.graph.nodes if v not in self.faulty_set]

    @property
    def removal_budget(self) -> int:
        """Extra incoming links each kept node may lose (``m * f``)."""
        return self.state_count * self.fault_bound


@dataclass(frozen=True)
class SourceComponent:
    members: frozenset[int]

    def __contains__(self, v: object) -> bool:
        return v in self.members

    def sorted_members(self) -> list[int]:
        return sorted(self.members)


@dataclass(frozen=True)
class ReducedGraph:
    base: Scenario = field(repr=False)
    kept_nodes: tuple[int, ...]
    kept_edges: frozenset[tuple[int, int]]

    @property
    def removed_edges(self) -> frozenset[tuple[int, int]]:
        kept = set(self.kept_nodes)
        full = {(u, v) for u, v in self.base.graph.edges if u in kept and v in kept}
        return frozenset(full - self.kept_edges)

    def sources(self) -> list[SourceComponent]:
        return source_components(self.kept_nodes, self.kept_edges)

    def to_dict(self) -> dict:
        return {
            "nodes": list(self.kept_nodes),
            "edges": [list(e) for e in sorted(self.kept_edges)],
            "removed": [list(e) for e in sorted(self.removed_edges)],
        }


def _as_nodes_edges(g, edges=None) -> tuple[list[int], frozenset[tuple[int, int]]]:
    if isinstance(g, DirectedGraph):
        return list(g.nodes), g.edges
    if isinstance(g, ReducedGraph):
        return list(g.kept_nodes), g.kept_edges
    return sorted(g), frozenset(edges or ())


def strongly_connected_components(g: DirectedGraph | ReducedGraph | Iterable[int], edges=None) -> list[frozenset[int]]:
    """Maximal strongly connected node sets, ordered by smallest member.

    Accepts a :class:`DirectedGraph`, a :class:`ReducedGraph` or a bare
    ``(nodes, edges)`` pair.  Iterative Tarjan, so deep chains do not hit
    the recursion limit.
    """
    nodes, edge_set = _as_nodes_edges(g, edges)
    succ: dict[int, list[int]] = {v: [] for v in nodes}
    for u, v in sorted(edge_set):
        succ[u].append(v)

    index: dict[int, int] = {}
    low: dict[int, int] = {}
    on_stack: set[int] = set()
    stack: list[int] = []
    out: list[frozenset[int]] = []
    counter = 0

    for root in nodes:
        if root in index:
            continue
        work = [(root, 0)]
        index[root] = low[root] = counter
        counter += 1
        stack.append(root)
        on_stack.add(root)
        while work:
            v, i = work[-1]
            nbrs = succ[v]
            if i < len(nbrs):
                work[-1] = (v, i + 1)
                w = nbrs[i]
                if w not in index:
                    index[w] = low[w] = counter
                    counter += 1
                    stack.append(w)
                    on_stack.add(w)
                    work.append((w, 0))
                elif w in on_stack:
                    low[v] = min(low[v], index[w])
                continue
            work.pop()
            if work:
                parent = work[-1][0]
                low[parent] = min(low[parent], low[v])
            if low[v] == index[v]:
                comp = set()
                while True:
                    w = stack.pop()
                    on_stack.discard(w)
                    comp.add(w)
                    if w == v:
                        break
                out.append(frozenset(comp))

    out.sort(key=min)
    return out


def source_components(g, edges=None) -> list[SourceComponent]:
    """SCCs with no incoming edge from outside (in-degree zero in the condensation)."""
    nodes, edge_set = _as_nodes_edges(g, edges)
    comps = strongly_connected_components(nodes, edge_set)
    owner = {v: k for k, comp in enumerate(comps) for v in comp}
    has_incoming = [False] * len(comps)
    for u, v in edge_set:
        if owner[u] != owner[v]:
            has_incoming[owner[v]] = True
    return [SourceComponent(c) for c, inc in zip(comps, has_incoming) if not inc]


def check_reachability_condition(h: ReducedGraph | DirectedGraph) -> bool:
    """True iff every node is in a source component or reachable from one.

    Always true for a finite digraph; kept as an executable sanity check.
    """
    nodes, edge_set = _as_nodes_edges(h)
    succ: dict[int, list[int]] = {v: [] for v in nodes}
    for u, v in edge_set:
        succ[u].append(v)
    seen: set[int] = set()
    queue = deque(v for comp in source_components(nodes, edge_set) for v in comp.members)
    seen.update(queue)
    while queue:
        u = queue.popleft()
        for w in succ[u]:
            if w not in seen:
                seen.add(w)
                queue.append(w)
    return seen == set(nodes)


def _removal_options(s: Scenario) -> tuple[list[int], list[list[tuple[int, int]]], list[list[tuple[tuple[int, int], ...]]]]:
    kept = s.non_faulty
    kept_set = set(kept)
    incoming = [
        [(u, v) for u in s.graph.in_neighbors(v) if u in kept_set]
        for v in kept
    ]
    budget = s.removal_budget
    options = []
    for links in incoming:
        opts: list[tuple[tuple[int, int], ...]] = []
        for k in range(min(budget, len(links)) + 1):
            opts.extend(itertools.combinations(links, k))
        options.append(opts)
    return kept, incoming, options


def iter_reduced_graphs(s: Scenario) -> Iterator[ReducedGraph]:
    """Stream every reduced graph of ``s`` in a fixed order.

    Per kept node the removal subsets run through sizes ``0..m*f`` and,
    within a size, lexicographically; nodes combine as a Cartesian product
    with the highest-indexed node varying fastest.
    """
    kept, incoming, options = _removal_options(s)
    all_links = frozenset(e for links in incoming for e in links)
    kept_t = tuple(kept)
    for choice in itertools.product(*options):
        removed = set()
        for r in choice:
            removed.update(r)
        yield ReducedGraph(s, kept_t, all_links - removed)


def enumerate_reduced_graphs(s: Scenario, cap: int) -> tuple[list[ReducedGraph], bool]:
    """First ``cap`` reduced graphs and whether that is all of them."""
    if cap < 1:
        raise ValueError(f"cap must be a positive integer, got {cap}")
    out = list(itertools.islice(iter_reduced_graphs(s), cap + 1))
    if len(out) > cap:
        return out[:cap], False
    return out, True


def count_reduced_graphs(s: Scenario, max_count: int | None = None) -> int:
    """Exact size of the reduced-graph family, without building it.

    Python integers do not wrap; ``max_count`` turns an oversized result
    into an :class:`OverflowError` for consumers with fixed-width storage.
    """
    budget = s.removal_budget
    kept = s.non_faulty
    kept_set = set(kept)
    total = 1
    for v in kept:
        d = sum(1 for u in s.graph.in_neighbors(v) if u in kept_set)
        total *= sum(math.comb(d, k) for k in range(min(budget, d) + 1))
        if max_count is not None and total > max_count:
            raise OverflowError(f"reduced-graph count exceeds {max_count}")
    return total
