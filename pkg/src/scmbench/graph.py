"""Causal graphs: random DAG sampling, hidden variables, latent projection,
d-separation, c-components and graph surgery.

Nodes are integers ``0 .. n-1`` and index order is always a topological order
of a :class:`CausalGraph` (every edge ``j -> i`` has ``j < i``).
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from itertools import combinations
from typing import Hashable, Iterable, Union

import numpy as np

from .errors import EmptyObservedError, NodeNotFound, ParamError, ValidationError


@dataclass(frozen=True)
class CausalGraph:
    """DAG over all endogenous variables plus the hidden subset."""

    parents: tuple[tuple[int, ...], ...]
    hidden: frozenset[int] = field(default_factory=frozenset)

    def __post_init__(self):
        n = len(self.parents)
        for i, pa in enumerate(self.parents):
            if len(set(pa)) != len(pa):
                raise ValidationError(f"duplicate parents for node {i}")
            for j in pa:
                if not 0 <= j < i:
                    raise ValidationError(f"edge {j} -> {i} violates index order")
        if any(not 0 <= h < n for h in self.hidden):
            raise ValidationError("hidden node out of range")
        object.__setattr__(self, "parents", tuple(tuple(sorted(pa)) for pa in self.parents))
        object.__setattr__(self, "hidden", frozenset(self.hidden))

    @classmethod
    def from_edges(cls, n: int, edges: Iterable[tuple[int, int]], hidden: Iterable[int] = ()) -> "CausalGraph":
        parents: list[list[int]] = [[] for _ in range(n)]
        for j, i in edges:
            if not (0 <= i < n and 0 <= j < n):
                raise ValidationError(f"edge {j} -> {i} out of range for {n} nodes")
            parents[i].append(j)
        return cls(tuple(tuple(p) for p in parents), frozenset(hidden))

    @property
    def n(self) -> int:
        return len(self.parents)

    @property
    def nodes(self) -> tuple[int, ...]:
        return tuple(range(self.n))

    @property
    def observed(self) -> tuple[int, ...]:
        return tuple(i for i in range(self.n) if i not in self.hidden)

    @property
    def edges(self) -> list[tuple[int, int]]:
        return [(j, i) for i, pa in enumerate(self.parents) for j in pa]

    def children(self) -> list[list[int]]:
        ch: list[list[int]] = [[] for _ in range(self.n)]
        for i, pa in enumerate(self.parents):
            for j in pa:
                ch[j].append(i)
        return ch

    def with_hidden(self, hidden: Iterable[int]) -> "CausalGraph":
        return CausalGraph(self.parents, frozenset(hidden))

    def to_json(self) -> dict:
        return {
            "nodes": list(self.nodes),
            "directed_edges": [list(e) for e in self.edges],
            "bidirected_edges": [],
            "hidden": sorted(self.hidden),
        }


@dataclass(frozen=True)
class Admg:
    """Acyclic directed mixed graph over the observed variables."""

    nodes: tuple[int, ...]
    directed: frozenset[tuple[int, int]]
    bidirected: frozenset[tuple[int, int]]

    def __post_init__(self):
        node_set = set(self.nodes)
        for a, b in self.directed:
            if a not in node_set or b not in node_set or a == b:
                raise ValidationError(f"invalid directed edge {a} -> {b}")
        canon = set()
        for a, b in self.bidirected:
            if a not in node_set or b not in node_set or a == b:
                raise ValidationError(f"invalid bidirected edge {a} <-> {b}")
            canon.add((min(a, b), max(a, b)))
        object.__setattr__(self, "nodes", tuple(sorted(node_set)))
        object.__setattr__(self, "directed", frozenset(self.directed))
        object.__setattr__(self, "bidirected", frozenset(canon))
        if _has_cycle(self.nodes, self.directed):
            raise ValidationError("directed part of an ADMG must be acyclic")

    def parents_of(self, node: int) -> list[int]:
        return sorted(a for a, b in self.directed if b == node)

    def siblings(self, node: int) -> list[int]:
        return sorted({b if a == node else a for a, b in self.bidirected if node in (a, b)})

    def to_json(self) -> dict:
        return {
            "nodes": list(self.nodes),
            "directed_edges": [list(e) for e in sorted(self.directed)],
            "bidirected_edges": [list(e) for e in sorted(self.bidirected)],
            "hidden": [],
        }

    @classmethod
    def from_json(cls, doc: dict) -> "Admg":
        return cls(
            tuple(doc["nodes"]),
            frozenset(tuple(e) for e in doc["directed_edges"]),
            frozenset(tuple(e) for e in doc["bidirected_edges"]),
        )


Graph = Union[CausalGraph, Admg]


def _has_cycle(nodes, directed) -> bool:
    indeg = {v: 0 for v in nodes}
    out: dict[int, list[int]] = {v: [] for v in nodes}
    for a, b in directed:
        out[a].append(b)
        indeg[b] += 1
    queue = deque(v for v in nodes if indeg[v] == 0)
    seen = 0
    while queue:
        v = queue.popleft()
        seen += 1
        for w in out[v]:
            indeg[w] -= 1
            if indeg[w] == 0:
                queue.append(w)
    return seen != len(nodes)


# -- sampling ----------------------------------------------------------------

def edge_probability(n: int, d: float) -> float:
    if d < 0:
        raise ParamError(f"expected degree must be >= 0, got {d}")
    if n <= 1:
        return 0.0
    return min(1.0, 2.0 * d / (n - 1))


def sample_dag(n: int, d: float, rng: np.random.Generator) -> CausalGraph:
    """Random DAG whose index order is topological, with expected degree ``d``.

    Node ``i`` draws ``Binomial(i, p_edge)`` parents without replacement from
    its predecessors, with ``p_edge = 2 d / (n - 1)`` clamped to ``[0, 1]``.
    """
    if n < 1:
        raise ParamError(f"need at least one node, got {n}")
    p = edge_probability(n, d)
    parents = []
    for i in range(n):
        k = int(rng.binomial(i, p)) if i > 0 else 0
        parents.append(tuple(sorted(int(j) for j in rng.choice(i, size=k, replace=False))) if k else ())
    return CausalGraph(tuple(parents))


def assign_hidden(g: CausalGraph, p_h: float, rng: np.random.Generator) -> CausalGraph:
    if not 0.0 <= p_h <= 1.0:
        raise ParamError(f"hidden proportion must lie in [0, 1], got {p_h}")
    k = int(rng.binomial(g.n, p_h))
    hidden = rng.choice(g.n, size=k, replace=False) if k else []
    return g.with_hidden(int(h) for h in hidden)


def latent_project(g: CausalGraph) -> Admg:
    """Project ``g`` onto its observed nodes.

    ``A -> B`` when a directed path from A to B has only hidden intermediates;
    ``A <-> B`` when some hidden node reaches both A and B along directed
    paths whose intermediates are hidden (a collider-free path A <- ... -> B).
    """
    observed = g.observed
    if not observed:
        raise EmptyObservedError("every node is hidden")
    children = g.children()
    hidden = g.hidden

    def observed_reach(start: int) -> set[int]:
        # observed nodes reachable from start through hidden-only intermediates
        found: set[int] = set()
        stack = list(children[start])
        seen: set[int] = set()
        while stack:
            v = stack.pop()
            if v in seen:
                continue
            seen.add(v)
            if v in hidden:
                stack.extend(children[v])
            else:
                found.add(v)
        return found

    directed = {(a, b) for a in observed for b in observed_reach(a)}
    bidirected = set()
    for h in sorted(hidden):
        reach = sorted(observed_reach(h))
        bidirected.update(combinations(reach, 2))
    return Admg(observed, frozenset(directed), frozenset(bidirected))


# -- generic DAG view ----------------------------------------------------------

def _dag_view(g: Graph) -> tuple[list[Hashable], dict[Hashable, list[Hashable]]]:
    """Nodes and parent map; bidirected edges become latent common causes."""
    if isinstance(g, CausalGraph):
        return list(g.nodes), {i: list(pa) for i, pa in enumerate(g.parents)}
    parents: dict[Hashable, list[Hashable]] = {v: [] for v in g.nodes}
    for a, b in g.directed:
        parents[b].append(a)
    nodes: list[Hashable] = list(g.nodes)
    for a, b in sorted(g.bidirected):
        latent = ("latent", a, b)
        nodes.append(latent)
        parents[latent] = []
        parents[a].append(latent)
        parents[b].append(latent)
    return nodes, parents


def _check_nodes(g: Graph, *sets: Iterable[int]) -> list[set[int]]:
    valid = set(g.nodes)
    out = []
    for s in sets:
        s = set(s)
        missing = s - valid
        if missing:
            raise NodeNotFound(f"unknown nodes {sorted(missing)}")
        out.append(s)
    return out


def ancestors(g: Graph, nodes: Iterable[int], include_self: bool = False) -> set[int]:
    (targets,) = _check_nodes(g, nodes)
    _, parents = _dag_view(g)
    found: set = set(targets) if include_self else set()
    stack = list(targets)
    seen = set(targets)
    while stack:
        v = stack.pop()
        for p in parents[v]:
            if p not in seen:
                seen.add(p)
                stack.append(p)
                found.add(p)
    return {v for v in found if not isinstance(v, tuple)}


def descendants(g: Graph, nodes: Iterable[int], include_self: bool = False) -> set[int]:
    (sources,) = _check_nodes(g, nodes)
    node_list, parents = _dag_view(g)
    children: dict = {v: [] for v in node_list}
    for v, pa in parents.items():
        for p in pa:
            children[p].append(v)
    found: set = set(sources) if include_self else set()
    stack = list(sources)
    seen = set(sources)
    while stack:
        v = stack.pop()
        for c in children[v]:
            if c not in seen:
                seen.add(c)
                stack.append(c)
                found.add(c)
    return {v for v in found if not isinstance(v, tuple)}


def d_separated(g: Graph, a: Iterable[int], b: Iterable[int], c: Iterable[int]) -> bool:
    """True iff every path between ``a`` and ``b`` is blocked given ``c``.

    Reachability ("Bayes ball") over (node, direction) states.  Bidirected edges
    of an :class:`Admg` are treated as paths through a latent common cause.
    """
    a, b, c = _check_nodes(g, a, b, c)
    if a & b or a & c or b & c:
        raise ParamError("node sets must be pairwise disjoint")
    if not a or not b:
        return True
    node_list, parents = _dag_view(g)
    children: dict = {v: [] for v in node_list}
    for v, pa in parents.items():
        for p in pa:
            children[p].append(v)

    # nodes that are in c or have a descendant in c (collider activation set)
    anc_c: set = set()
    stack = list(c)
    while stack:
        v = stack.pop()
        if v in anc_c:
            continue
        anc_c.add(v)
        stack.extend(parents[v])

    # direction "up": arrived from a child; "down": arrived from a parent
    visited: set = set()
    queue = deque((v, "up") for v in a)
    while queue:
        v, direction = queue.popleft()
        if (v, direction) in visited:
            continue
        visited.add((v, direction))
        if v not in c and v in b:
            return False
        if direction == "up" and v not in c:
            queue.extend((p, "up") for p in parents[v])
            queue.extend((ch, "down") for ch in children[v])
        elif direction == "down":
            if v not in c:
                queue.extend((ch, "down") for ch in children[v])
            if v in anc_c:
                queue.extend((p, "up") for p in parents[v])
    return True


def c_components(a: Admg) -> list[tuple[int, ...]]:
    """Connected components of the bidirected part, singletons included."""
    parent = {v: v for v in a.nodes}

    def find(v):
        while parent[v] != v:
            parent[v] = parent[parent[v]]
            v = parent[v]
        return v

    for x, y in a.bidirected:
        rx, ry = find(x), find(y)
        if rx != ry:
            parent[max(rx, ry)] = min(rx, ry)
    groups: dict[int, list[int]] = {}
    for v in a.nodes:
        groups.setdefault(find(v), []).append(v)
    return sorted(tuple(sorted(grp)) for grp in groups.values())


def graph_surgery(g: Graph, remove_incoming: Iterable[int] = (), remove_outgoing: Iterable[int] = ()) -> Graph:
    """Copy of ``g`` with edges into ``remove_incoming`` and out of
    ``remove_outgoing`` deleted.  On an ADMG, removing incoming edges also
    removes bidirected edges touching the node."""
    inc, out = _check_nodes(g, remove_incoming, remove_outgoing)
    if isinstance(g, CausalGraph):
        parents = tuple(
            () if i in inc else tuple(j for j in pa if j not in out) for i, pa in enumerate(g.parents)
        )
        return CausalGraph(parents, g.hidden)
    directed = frozenset((x, y) for x, y in g.directed if y not in inc and x not in out)
    bidirected = frozenset((x, y) for x, y in g.bidirected if x not in inc and y not in inc)
    return Admg(g.nodes, directed, bidirected)
