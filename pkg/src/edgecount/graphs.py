"""Similarity graphs on distinct values and the induced observation-level family.

The central construction is the nearest neighbor link (NNL): a Boruvka-style
growth that keeps ALL tied minimal edges, so it is well-defined on distance
matrices with ties, where "the" minimum spanning tree is not. A graph C0 on
the K distinct values induces a family of observation-level graphs (one
observation-pair choice per C0 edge crossed with one spanning tree per
within-value clique); statistics either average over that family in closed
form or evaluate on its edge union. This module computes everything the
statistics need from C0: degrees, neighbor sets, union-graph sizes, and the
family cardinality.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass
from functools import cached_property
from itertools import product

import numpy as np

from .dataset import DistanceMatrix, DistinctTable
from .errors import FamilyTooLargeError, InfeasibleGraphError, InputFormatError


class _DisjointSet:
    def __init__(self, n: int) -> None:
        self.parent = list(range(n))

    def find(self, x: int) -> int:
        root = x
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[x] != root:
            self.parent[x], x = root, self.parent[x]
        return root

    def union(self, a: int, b: int) -> bool:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return False
        self.parent[rb] = ra
        return True


@dataclass(frozen=True)
class SimilarityGraph:
    """Simple undirected graph on distinct-value indices 0..n_nodes-1."""

    n_nodes: int
    edges: tuple[tuple[int, int], ...]

    @classmethod
    def from_edges(cls, n_nodes: int, edges) -> "SimilarityGraph":
        if n_nodes <= 0:
            raise InputFormatError("graph needs at least one node")
        canon = set()
        for u, v in edges:
            u, v = int(u), int(v)
            if u == v:
                raise InputFormatError(f"self-loop at node {u}")
            if not (0 <= u < n_nodes and 0 <= v < n_nodes):
                raise InputFormatError(f"edge ({u},{v}) outside 0..{n_nodes - 1}")
            canon.add((min(u, v), max(u, v)))
        return cls(n_nodes=n_nodes, edges=tuple(sorted(canon)))

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @cached_property
    def edge_array(self) -> np.ndarray:
        """Edges as an (n_edges, 2) int array; shape (0, 2) when empty."""
        if not self.edges:
            return np.empty((0, 2), dtype=np.int64)
        arr = np.asarray(self.edges, dtype=np.int64)
        arr.setflags(write=False)
        return arr

    @cached_property
    def degrees(self) -> np.ndarray:
        deg = np.bincount(self.edge_array.ravel(), minlength=self.n_nodes)
        deg.setflags(write=False)
        return deg

    @cached_property
    def neighbors(self) -> tuple[tuple[int, ...], ...]:
        adj: list[list[int]] = [[] for _ in range(self.n_nodes)]
        for u, v in self.edges:
            adj[u].append(v)
            adj[v].append(u)
        return tuple(tuple(sorted(a)) for a in adj)

    @cached_property
    def second_order_counts(self) -> np.ndarray:
        """Per node u: number of edges with at least one endpoint adjacent to u."""
        adj = np.zeros((self.n_nodes, self.n_nodes), dtype=bool)
        ea = self.edge_array
        if ea.shape[0]:
            adj[ea[:, 0], ea[:, 1]] = True
            adj[ea[:, 1], ea[:, 0]] = True
            counts = (adj[:, ea[:, 0]] | adj[:, ea[:, 1]]).sum(axis=1)
        else:
            counts = np.zeros(self.n_nodes, dtype=np.int64)
        counts = counts.astype(np.int64)
        counts.setflags(write=False)
        return counts

    def is_connected(self) -> bool:
        ds = _DisjointSet(self.n_nodes)
        parts = self.n_nodes
        for u, v in self.edges:
            parts -= ds.union(u, v)
        return parts == 1


def _as_matrix(dist) -> tuple[np.ndarray, float]:
    if isinstance(dist, DistanceMatrix):
        return np.asarray(dist.values, dtype=np.float64), float(dist.tie_tolerance)
    arr = np.asarray(dist, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise InputFormatError("distance input must be a square matrix")
    if not (arr == arr.T).all():
        raise InputFormatError("distance input must be symmetric")
    return arr, 0.0


def build_nnl(dist, excluded: np.ndarray | None = None) -> SimilarityGraph:
    """Nearest neighbor link graph of a symmetric dissimilarity matrix.

    The result contains exactly the pairs that occur in at least one minimum
    spanning tree of the weighted complete graph on the distinct values — a
    pair belongs to some minimum spanning tree precisely when its endpoints
    lie in different components of the subgraph of strictly lighter pairs
    (cycle property). The construction sweeps admissible pairs in ascending
    distance order and keeps a pair whenever the union-find state built from
    all pairs lighter by more than ``tie_tolerance`` leaves its endpoints
    disconnected, so tied pairs never block one another and the result does
    not depend on any processing order.

    ``excluded`` marks pairs treated as inadmissible, as are non-finite
    distances; that is how later rounds of multi-graph constructions drop
    earlier rounds' edges. When exclusions disconnect the values, the result
    is the union of all minimum spanning forests (per remaining component);
    with no admissible pair at all the graph is undefined and
    InfeasibleGraphError is raised. Without exclusions the result always
    contains a spanning tree and is therefore connected.
    """
    work, tol = _as_matrix(dist)
    k = work.shape[0]
    if k < 2:
        raise InputFormatError("need at least two distinct values to build a graph")
    work = work.copy()
    np.fill_diagonal(work, np.inf)
    if excluded is not None:
        work[excluded] = np.inf

    iu, ju = np.triu_indices(k, 1)
    weights = work[iu, ju]
    finite = np.isfinite(weights)
    if not finite.any():
        raise InfeasibleGraphError("no admissible pair remains")
    order = np.argsort(weights[finite], kind="stable")
    us = iu[finite][order].tolist()
    vs = ju[finite][order].tolist()
    ws = weights[finite][order].tolist()

    ds = _DisjointSet(k)
    n_parts = k
    merged = 0  # pairs [0, merged) folded into the strictly-lighter state
    edges: list[tuple[int, int]] = []
    for idx, w in enumerate(ws):
        while ws[merged] < w - tol:
            n_parts -= ds.union(us[merged], vs[merged])
            merged += 1
        if n_parts == 1:
            break
        if ds.find(us[idx]) != ds.find(vs[idx]):
            edges.append((us[idx], vs[idx]))
    return SimilarityGraph.from_edges(k, edges)


def build_knnl(dist, k: int) -> SimilarityGraph:
    """Union of the 1st..kth NNLs, each round excluding earlier rounds' edges."""
    if k < 1:
        raise InputFormatError("k must be >= 1")
    work, _ = _as_matrix(dist)
    n = work.shape[0]
    excluded = np.zeros((n, n), dtype=bool)
    edges: set[tuple[int, int]] = set()
    for round_index in range(k):
        try:
            round_graph = build_nnl(dist, excluded=excluded)
        except InfeasibleGraphError:
            raise InfeasibleGraphError(
                f"round {round_index + 1} of {k} has no admissible pair left"
            ) from None
        for u, v in round_graph.edges:
            edges.add((u, v))
            excluded[u, v] = excluded[v, u] = True
    return SimilarityGraph.from_edges(n, edges)


def build_kmst(dist, k: int, seed: int) -> SimilarityGraph:
    """Union of k successive MSTs with seeded tie-breaking.

    Kruskal per round; edges of equal weight are ordered by a seeded random
    key, so different seeds can return different (all minimal) trees when
    the distances have ties. Rounds exclude earlier rounds' edges. The
    controllable non-determinism is the point: it exposes how much
    graph-based statistics move across equally valid MSTs.
    """
    if k < 1:
        raise InputFormatError("k must be >= 1")
    work, _ = _as_matrix(dist)
    n = work.shape[0]
    if n < 2:
        raise InputFormatError("need at least two distinct values to build a graph")
    rng = np.random.default_rng(seed)
    iu, jv = np.triu_indices(n, k=1)
    weights = work[iu, jv]
    used = np.zeros(len(iu), dtype=bool)
    edges: set[tuple[int, int]] = set()
    for _ in range(k):
        order = np.lexsort((rng.random(len(iu)), weights))
        ds = _DisjointSet(n)
        picked = []
        for e in order:
            if used[e]:
                continue
            if ds.union(int(iu[e]), int(jv[e])):
                picked.append(e)
                if len(picked) == n - 1:
                    break
        if len(picked) < n - 1:
            raise InfeasibleGraphError(
                f"no spanning tree left after excluding earlier rounds (k={k} too large)"
            )
        for e in picked:
            used[e] = True
            edges.add((int(iu[e]), int(jv[e])))
    return SimilarityGraph.from_edges(n, edges)


@dataclass(frozen=True)
class UnionGraphSummary:
    """Size and per-observation incidence of the family's edge union.

    ``incident[i]`` counts union-graph edges containing observation i; for
    an observation of value u it equals m_u - 1 + sum of neighbor
    multiplicities. ``size`` is the union edge count.
    """

    size: int
    incident: np.ndarray

    def __post_init__(self) -> None:
        inc = np.asarray(self.incident, dtype=np.int64)
        if int(inc.sum()) != 2 * self.size:
            raise InputFormatError("incident counts must sum to twice the union size")
        inc = inc.copy()
        inc.setflags(write=False)
        object.__setattr__(self, "incident", inc)

    @property
    def sum_sq(self) -> int:
        return int((self.incident.astype(object) ** 2).sum())


def union_graph_summary(c0: SimilarityGraph, table: DistinctTable) -> UnionGraphSummary:
    """Summary of the union graph induced by C0 and the multiplicities."""
    if c0.n_nodes != table.n_values:
        raise InputFormatError("graph and table disagree on the number of distinct values")
    m = table.multiplicity
    ea = c0.edge_array
    size = int((m * (m - 1) // 2).sum())
    if ea.shape[0]:
        size += int((m[ea[:, 0]] * m[ea[:, 1]]).sum())
    neighbor_mass = np.zeros(table.n_values, dtype=np.int64)
    if ea.shape[0]:
        np.add.at(neighbor_mass, ea[:, 0], m[ea[:, 1]])
        np.add.at(neighbor_mass, ea[:, 1], m[ea[:, 0]])
    per_value = m - 1 + neighbor_mass
    return UnionGraphSummary(size=size, incident=per_value[table.value_index])


def materialize_union_graph(c0: SimilarityGraph, table: DistinctTable) -> SimilarityGraph:
    """The union graph as an explicit observation-level graph.

    Within each distinct value the observations form a clique; each C0 edge
    contributes the complete bipartite join of the two observation blocks.
    """
    if c0.n_nodes != table.n_values:
        raise InputFormatError("graph and table disagree on the number of distinct values")
    members = [np.nonzero(table.value_index == u)[0] for u in range(table.n_values)]
    edges = []
    for obs in members:
        for a in range(len(obs)):
            for b in range(a + 1, len(obs)):
                edges.append((int(obs[a]), int(obs[b])))
    for u, v in c0.edges:
        for a in members[u]:
            for b in members[v]:
                edges.append((int(a), int(b)))
    return SimilarityGraph.from_edges(table.n_total, edges)


def count_graph_family(c0: SimilarityGraph, table: DistinctTable) -> int:
    """Exact size of the induced observation-level graph family.

    One observation pair per C0 edge (m_u * m_v choices) crossed with one
    labeled spanning tree per within-value clique (m_u ** (m_u - 2) by
    Cayley's formula; a single observation contributes factor 1).
    """
    if c0.n_nodes != table.n_values:
        raise InputFormatError("graph and table disagree on the number of distinct values")
    m = [int(x) for x in table.multiplicity]
    total = 1
    for u, v in c0.edges:
        total *= m[u] * m[v]
    for mu in m:
        total *= mu ** max(mu - 2, 0)
    return total


def _prufer_tree(seq: tuple[int, ...], n: int) -> list[tuple[int, int]]:
    """Decode a Prufer sequence over nodes 0..n-1 into its labeled tree."""
    degree = [1] * n
    for x in seq:
        degree[x] += 1
    leaves = [i for i in range(n) if degree[i] == 1]
    heapq.heapify(leaves)
    edges = []
    for x in seq:
        leaf = heapq.heappop(leaves)
        edges.append((min(leaf, x), max(leaf, x)))
        degree[leaf] -= 1
        degree[x] -= 1
        if degree[x] == 1:
            heapq.heappush(leaves, x)
    u, v = (i for i in range(n) if degree[i] == 1)
    edges.append((min(u, v), max(u, v)))
    return edges


def enumerate_graph_family(c0: SimilarityGraph, table: DistinctTable, cap: int = 10**6):
    """Yield every observation-level graph of the family exactly once.

    Graphs come out as sorted tuples of observation-index pairs. Spanning
    trees on within-value cliques are enumerated via Prufer sequences, so
    each of the m_u ** (m_u - 2) trees appears exactly once with no dedup
    bookkeeping.
    """
    total = count_graph_family(c0, table)
    if total > cap:
        raise FamilyTooLargeError(f"family has {total} graphs, cap is {cap}")
    members = [np.nonzero(table.value_index == u)[0] for u in range(table.n_values)]

    edge_choices = []
    for u, v in c0.edges:
        edge_choices.append([
            (min(int(a), int(b)), max(int(a), int(b)))
            for a in members[u]
            for b in members[v]
        ])

    tree_choices = []
    for obs in members:
        mu = len(obs)
        if mu == 1:
            continue
        trees = []
        for seq in product(range(mu), repeat=max(mu - 2, 0)):
            local = _prufer_tree(seq, mu) if mu > 2 else [(0, 1)]
            trees.append(tuple(
                (min(int(obs[a]), int(obs[b])), max(int(obs[a]), int(obs[b])))
                for a, b in local
            ))
        tree_choices.append(trees)

    for between in product(*edge_choices):
        for within in product(*tree_choices):
            edges = list(between)
            for tree in within:
                edges.extend(tree)
            yield tuple(sorted(edges))


# --- graph file format ----------------------------------------------------
#
# Edge list CSV of 1-based distinct-value indices, one "u,v" pair per line,
# preceded by a header line "K=<K>". Used for both export and user-supplied
# graph import.


def write_graph(path, graph: SimilarityGraph) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"K={graph.n_nodes}\n")
        for u, v in graph.edges:
            fh.write(f"{u + 1},{v + 1}\n")


def read_graph(path) -> SimilarityGraph:
    with open(path, "r", encoding="utf-8") as fh:
        lines = [(no, line.strip()) for no, line in enumerate(fh, start=1)]
    lines = [(no, line) for no, line in lines if line and not line.startswith("#")]
    if not lines:
        raise InputFormatError(f"{path}: empty graph file")
    lineno, header = lines[0]
    if not header.startswith("K="):
        raise InputFormatError(f"{path}:{lineno}: expected header 'K=<K>'")
    try:
        n_nodes = int(header.split("=", 1)[1])
    except ValueError:
        raise InputFormatError(f"{path}:{lineno}: malformed node count") from None
    edges = []
    for lineno, line in lines[1:]:
        cells = line.split(",")
        if len(cells) != 2:
            raise InputFormatError(f"{path}:{lineno}: expected 'u,v'")
        try:
            u, v = int(cells[0]), int(cells[1])
        except ValueError:
            raise InputFormatError(f"{path}:{lineno}: non-integer node index") from None
        if not (1 <= u <= n_nodes and 1 <= v <= n_nodes):
            raise InputFormatError(f"{path}:{lineno}: node index outside 1..{n_nodes}")
        edges.append((u - 1, v - 1))
    try:
        return SimilarityGraph.from_edges(n_nodes, edges)
    except InputFormatError as exc:
        raise InputFormatError(f"{path}: {exc}") from None
