"""Triangulated Laman graphs built by Henneberg vertex additions.

A TLG starts from a single base edge; every later vertex is joined to two
existing, mutually adjacent vertices. Vertex ids are dense 1-based integers.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import networkx as nx
import numpy as np

log = logging.getLogger(__name__)

Edge = tuple[int, int]


class TLGError(ValueError):
    """Base class for graph construction failures."""


class NonAdjacentParents(TLGError):
    pass


class DuplicateVertex(TLGError):
    pass


class DanglingReference(TLGError):
    pass


class NotTLG(TLGError):
    pass


def edge_key(i: int, j: int) -> Edge:
    return (i, j) if i < j else (j, i)


@dataclass(frozen=True)
class HennebergStep:
    vertex: int
    parents: tuple[int, int]

    def __post_init__(self):
        p, q = self.parents
        if p == q:
            raise NonAdjacentParents(f"step {self.vertex}: parents must be distinct, got {self.parents}")
        object.__setattr__(self, "parents", (int(p), int(q)))
        object.__setattr__(self, "vertex", int(self.vertex))


@dataclass(frozen=True)
class TLGraph:
    n: int
    base_edge: Edge
    steps: tuple[HennebergStep, ...]
    edges: frozenset = field(compare=False)

    @property
    def edge_list(self) -> list[Edge]:
        return sorted(self.edges)

    @property
    def vertices(self) -> list[int]:
        return list(range(1, self.n + 1))

    def construction_edges(self) -> list[Edge]:
        """Edges in Henneberg order: base edge, then two edges per step."""
        out = [edge_key(*self.base_edge)]
        for s in self.steps:
            out += [edge_key(s.vertex, s.parents[0]), edge_key(s.vertex, s.parents[1])]
        return out

    def to_networkx(self) -> nx.Graph:
        g = nx.Graph()
        g.add_nodes_from(self.vertices)
        g.add_edges_from(self.edges)
        return nx.freeze(g)

    def neighbors(self, v: int) -> list[int]:
        return sorted(j for e in self.edges if v in e for j in e if j != v)

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "base_edge": list(self.base_edge),
            "steps": [{"vertex": s.vertex, "parents": list(s.parents)} for s in self.steps],
        }


# ----------------------- construction -----------------------
def build_tlg(base_edge: Iterable[int], steps: Iterable[HennebergStep | tuple]) -> TLGraph:
    u, v = (int(x) for x in base_edge)
    if u == v:
        raise DuplicateVertex(f"base edge repeats vertex {u}")
    present = {u, v}
    edges = {edge_key(u, v)}
    parsed: list[HennebergStep] = []

    for raw in steps:
        st = raw if isinstance(raw, HennebergStep) else HennebergStep(raw[0], tuple(raw[1]))
        p, q = st.parents
        if st.vertex in present:
            raise DuplicateVertex(f"vertex {st.vertex} added twice")
        for parent in (p, q):
            if parent not in present:
                raise DanglingReference(f"step {st.vertex}: parent {parent} does not exist yet")
        if edge_key(p, q) not in edges:
            raise NonAdjacentParents(f"step {st.vertex}: parents {p},{q} are not adjacent")
        present.add(st.vertex)
        edges.add(edge_key(st.vertex, p))
        edges.add(edge_key(st.vertex, q))
        parsed.append(st)

    n = len(present)
    if present != set(range(1, n + 1)):
        raise DanglingReference(f"vertex ids must be dense 1..{n}, got {sorted(present)}")
    if len(edges) != 2 * n - 3:
        raise NotTLG(f"{len(edges)} edges on {n} vertices; a Laman graph has {2 * n - 3}")
    return TLGraph(n=n, base_edge=(u, v), steps=tuple(parsed), edges=frozenset(edges))


def _as_nx(edge_set: Iterable[Iterable[int]]) -> nx.Graph:
    g = nx.Graph()
    for e in edge_set:
        i, j = (int(x) for x in e)
        if i == j:
            raise NotTLG(f"self loop at {i}")
        g.add_edge(i, j)
    return g


def _simplicial(g: nx.Graph) -> list[int]:
    """Degree-2 vertices whose two neighbours are adjacent."""
    out = []
    for v in g.nodes:
        if g.degree(v) == 2:
            a, b = g.neighbors(v)
            if g.has_edge(a, b):
                out.append(v)
    return sorted(out)


def _deletion_to_graph(g0: nx.Graph, order: list[int]) -> TLGraph:
    g = g0.copy()
    rev: list[HennebergStep] = []
    for v in order:
        a, b = sorted(g.neighbors(v))
        rev.append(HennebergStep(v, (a, b)))
        g.remove_node(v)
    base = tuple(sorted(g.nodes))
    return build_tlg(base, list(reversed(rev)))


def _check_counts(g: nx.Graph) -> None:
    n = g.number_of_nodes()
    m = g.number_of_edges()
    if n < 2 or m != 2 * n - 3:
        raise NotTLG(f"Laman count fails: |V|={n}, |E|={m}")
    if not nx.is_connected(g):
        raise NotTLG("edge set is disconnected")


def recognize_tlg(edge_set: Iterable[Iterable[int]]) -> TLGraph:
    """Recover a Henneberg construction by deleting simplicial degree-2 vertices.

    The smallest eligible vertex is always deleted first, so the result is the
    lexicographically smallest reverse-deletion order.
    """
    g0 = _as_nx(edge_set)
    _check_counts(g0)
    g = g0.copy()
    order: list[int] = []
    while g.number_of_nodes() > 2:
        cand = _simplicial(g)
        if not cand:
            raise NotTLG(f"no simplicial degree-2 vertex left among {sorted(g.nodes)}")
        order.append(cand[0])
        g.remove_node(cand[0])
    return _deletion_to_graph(g0, order)


def alternative_henneberg_orders(graph: TLGraph, limit: int = 50) -> list[TLGraph]:
    """Distinct constructions of the same edge set, by DFS over deletion choices."""
    g0 = nx.Graph(graph.to_networkx())
    out: list[TLGraph] = []

    def dfs(g: nx.Graph, order: list[int]):
        if len(out) >= limit:
            return
        if g.number_of_nodes() == 2:
            out.append(_deletion_to_graph(g0, order))
            return
        for v in _simplicial(g):
            h = g.copy()
            h.remove_node(v)
            dfs(h, order + [v])
            if len(out) >= limit:
                return

    dfs(g0.copy(), [])
    return out


# ----------------------- relabeling / subgraphs -----------------------
def relabel(graph: TLGraph, mapping: Mapping[int, int]) -> TLGraph:
    if sorted(mapping) != graph.vertices or sorted(mapping.values()) != graph.vertices:
        raise TLGError("relabel map must be a bijection on 1..n")
    base = (mapping[graph.base_edge[0]], mapping[graph.base_edge[1]])
    steps = [HennebergStep(mapping[s.vertex], (mapping[s.parents[0]], mapping[s.parents[1]])) for s in graph.steps]
    return build_tlg(base, steps)


def induced_subsystem(graph: TLGraph, edge_subset: Iterable[Iterable[int]]) -> tuple[TLGraph, dict[int, int]]:
    """Re-validate an edge subset as a TLG on its own vertices.

    Returns the relabeled graph and the order-preserving map old id -> new id.
    """
    sub = {edge_key(*e) for e in edge_subset}
    if not sub:
        raise NotTLG("empty edge subset")
    if not sub <= graph.edges:
        raise NotTLG(f"edges {sorted(sub - graph.edges)} are not in the graph")
    verts = sorted({v for e in sub for v in e})
    remap = {old: new for new, old in enumerate(verts, start=1)}
    return recognize_tlg([(remap[i], remap[j]) for i, j in sub]), remap


def reduce_last_vertex(graph: TLGraph) -> tuple[TLGraph, dict[int, int]]:
    """Drop the last Henneberg vertex; ids above it shift down by one."""
    if not graph.steps:
        raise TLGError("a single edge cannot be reduced further")
    gone = graph.steps[-1].vertex
    remap = {v: (v if v < gone else v - 1) for v in graph.vertices if v != gone}
    base = (remap[graph.base_edge[0]], remap[graph.base_edge[1]])
    steps = [HennebergStep(remap[s.vertex], (remap[s.parents[0]], remap[s.parents[1]])) for s in graph.steps[:-1]]
    return build_tlg(base, steps), remap


def random_tlg(n: int, rng: np.random.Generator) -> TLGraph:
    if n < 2:
        raise TLGError("a TLG needs at least two vertices")
    edges = [(1, 2)]
    steps = []
    for v in range(3, n + 1):
        p, q = edges[int(rng.integers(len(edges)))]
        steps.append(HennebergStep(v, (p, q)))
        edges += [(p, v), (q, v)]
    return build_tlg((1, 2), steps)


def tlg_subgraphs(graph: TLGraph, limit: int | None = None) -> list[frozenset]:
    """All triangulated Laman subgraphs, as edge sets, smallest first."""
    g = graph.to_networkx()
    seen: set[frozenset] = {frozenset([e]) for e in graph.edges}
    frontier = list(seen)
    while frontier:
        nxt = []
        for sub in frontier:
            verts = {v for e in sub for v in e}
            for i, j in sub:
                for k in nx.common_neighbors(g, i, j):
                    if k in verts:
                        continue
                    grown = sub | {edge_key(i, k), edge_key(j, k)}
                    if grown not in seen:
                        seen.add(grown)
                        nxt.append(grown)
            if limit is not None and len(seen) >= limit:
                log.warning("tlg_subgraphs: stopped at limit=%d", limit)
                frontier = []
                break
        else:
            frontier = nxt
    return sorted(seen, key=lambda s: (len(s), sorted(s)))
