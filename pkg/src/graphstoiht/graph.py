"""Undirected weighted graphs and the weighted graph model (WGM).

A support is a set of coefficient indices.  It belongs to the
``(G, s, g, C)``-WGM when it has at most ``s`` nodes, induces at most ``g``
connected components, and the components can be spanned by a forest of total
edge weight at most ``C``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np


class GraphError(ValueError):
    """Invalid graph, support or model parameters."""


class SupportGenerationError(RuntimeError):
    """Raised when a random walk cannot visit enough distinct nodes."""


@dataclass(frozen=True)
class Graph:
    """Undirected weighted graph over nodes ``0 .. num_nodes - 1``.

    Edges are stored as parallel arrays ``edges`` (shape ``(E, 2)``) and
    ``weights`` (shape ``(E,)``).  A CSR adjacency is derived on construction.
    """

    num_nodes: int
    edges: np.ndarray
    weights: np.ndarray
    adj_ptr: np.ndarray = field(init=False, repr=False, compare=False)
    adj_nbr: np.ndarray = field(init=False, repr=False, compare=False)
    adj_eid: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        p = int(self.num_nodes)
        if p < 1:
            raise GraphError(f"num_nodes must be positive, got {p}")
        edges = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        weights = np.asarray(self.weights, dtype=np.float64).reshape(-1)
        if len(edges) != len(weights):
            raise GraphError("edges and weights differ in length")
        if len(edges):
            if edges.min() < 0 or edges.max() >= p:
                raise GraphError("edge endpoint out of range")
            if np.any(edges[:, 0] == edges[:, 1]):
                raise GraphError("self-loops are not allowed")
            if np.any(~np.isfinite(weights)) or np.any(weights < 0):
                raise GraphError("edge weights must be finite and nonnegative")
            keys = np.sort(edges, axis=1)
            if len(np.unique(keys, axis=0)) != len(keys):
                raise GraphError("duplicate undirected edge")
        edges.flags.writeable = False
        weights.flags.writeable = False
        object.__setattr__(self, "num_nodes", p)
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "weights", weights)

        # both directions of every edge, grouped by source node
        src = np.concatenate([edges[:, 0], edges[:, 1]])
        dst = np.concatenate([edges[:, 1], edges[:, 0]])
        eid = np.concatenate([np.arange(len(edges))] * 2)
        order = np.lexsort((dst, src))
        ptr = np.zeros(p + 1, dtype=np.int64)
        np.add.at(ptr, src + 1, 1)
        for arr_name, arr in (("adj_ptr", np.cumsum(ptr)),
                              ("adj_nbr", dst[order].astype(np.int64)),
                              ("adj_eid", eid[order].astype(np.int64))):
            arr.flags.writeable = False
            object.__setattr__(self, arr_name, arr)

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    def neighbors(self, u: int) -> np.ndarray:
        return self.adj_nbr[self.adj_ptr[u]:self.adj_ptr[u + 1]]

    def degree(self, u: int) -> int:
        return int(self.adj_ptr[u + 1] - self.adj_ptr[u])

    def degrees(self) -> np.ndarray:
        return np.diff(self.adj_ptr)

    def __hash__(self):
        return hash((self.num_nodes, self.edges.tobytes(), self.weights.tobytes()))


@dataclass(frozen=True)
class WgmParams:
    """Sparsity ``s``, component count ``g`` and weight budget ``C``."""

    s: int
    g: int = 1
    C: float = math.inf

    def __post_init__(self):
        if self.s < 1 or self.g < 1 or self.g > self.s:
            raise GraphError(f"need 1 <= g <= s, got s={self.s}, g={self.g}")
        if not self.C >= 0:
            raise GraphError(f"budget C must be nonnegative, got {self.C}")


def as_support(support: Iterable[int], num_nodes: int) -> np.ndarray:
    """Validate a support and return it as a sorted unique int array."""
    idx = np.asarray(list(support) if not isinstance(support, np.ndarray) else support,
                     dtype=np.int64).reshape(-1)
    if len(idx) and (idx.min() < 0 or idx.max() >= num_nodes):
        raise GraphError("support index out of range")
    uniq = np.unique(idx)
    if len(uniq) != len(idx):
        raise GraphError("support indices must be unique")
    return uniq


def grid_graph(rows: int, cols: int, weight: float = 1.0) -> Graph:
    """4-connected ``rows x cols`` grid; node ``(r, c)`` has index ``r * cols + c``."""
    if rows < 1 or cols < 1:
        raise GraphError(f"grid dimensions must be positive, got {rows}x{cols}")
    idx = np.arange(rows * cols).reshape(rows, cols)
    horiz = np.stack([idx[:, :-1].ravel(), idx[:, 1:].ravel()], axis=1)
    vert = np.stack([idx[:-1, :].ravel(), idx[1:, :].ravel()], axis=1)
    edges = np.concatenate([horiz, vert]).reshape(-1, 2)
    # row-major edge order: for each node, right edge then down edge
    edges = edges[np.lexsort((edges[:, 1], edges[:, 0]))]
    return Graph(rows * cols, edges, np.full(len(edges), float(weight)))


def complete_graph(num_nodes: int, weight: float = 1.0) -> Graph:
    iu, ju = np.triu_indices(num_nodes, k=1)
    edges = np.stack([iu, ju], axis=1)
    return Graph(num_nodes, edges, np.full(len(edges), float(weight)))


def grid_center(rows: int, cols: int) -> int:
    """Center node of a grid, rounding down on even dimensions."""
    return (rows // 2) * cols + cols // 2


def _induced_labels(graph: Graph, nodes: np.ndarray) -> np.ndarray:
    """Component label for each node of ``nodes`` in the induced subgraph."""
    pos = -np.ones(graph.num_nodes, dtype=np.int64)
    pos[nodes] = np.arange(len(nodes))
    labels = -np.ones(len(nodes), dtype=np.int64)
    comp = 0
    for start in range(len(nodes)):
        if labels[start] >= 0:
            continue
        labels[start] = comp
        stack = [nodes[start]]
        while stack:
            u = stack.pop()
            for v in graph.neighbors(u):
                k = pos[v]
                if k >= 0 and labels[k] < 0:
                    labels[k] = comp
                    stack.append(v)
        comp += 1
    return labels


def connected_component_count(graph: Graph, support: Iterable[int]) -> int:
    """Number of connected components of the subgraph induced by ``support``."""
    nodes = as_support(support, graph.num_nodes)
    if len(nodes) == 0:
        return 0
    return int(_induced_labels(graph, nodes).max() + 1)


def induced_forest_weight(graph: Graph, support: Iterable[int]) -> float:
    """Weight of a minimum spanning forest of the induced subgraph (Kruskal)."""
    nodes = as_support(support, graph.num_nodes)
    inside = np.zeros(graph.num_nodes, dtype=bool)
    inside[nodes] = True
    mask = inside[graph.edges[:, 0]] & inside[graph.edges[:, 1]]
    eids = np.flatnonzero(mask)
    eids = eids[np.argsort(graph.weights[eids], kind="stable")]
    parent = np.arange(graph.num_nodes)

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    total = 0.0
    for e in eids:
        ra, rb = find(graph.edges[e, 0]), find(graph.edges[e, 1])
        if ra != rb:
            parent[ra] = rb
            total += graph.weights[e]
    return float(total)


def is_in_wgm(graph: Graph, support: Iterable[int], params: WgmParams) -> bool:
    nodes = as_support(support, graph.num_nodes)
    if len(nodes) > params.s:
        return False
    if connected_component_count(graph, nodes) > params.g:
        return False
    return induced_forest_weight(graph, nodes) <= params.C


def random_walk_support(graph: Graph, s: int, rng: np.random.Generator,
                        start: int | None = None,
                        max_steps: int | None = None) -> np.ndarray:
    """Visit nodes by a simple random walk until ``s`` distinct ones are seen.

    Each step moves to a uniformly chosen neighbour (probability ``1/deg``).
    ``start`` defaults to the middle node index, which is the grid center for
    graphs built by :func:`grid_graph` with square or even dimensions; pass
    :func:`grid_center` explicitly for other shapes.
    """
    p = graph.num_nodes
    if not 1 <= s <= p:
        raise GraphError(f"need 1 <= s <= p, got s={s}, p={p}")
    if start is None:
        side = int(math.isqrt(p))
        start = grid_center(side, side) if side * side == p else p // 2
    cap = 100 * s if max_steps is None else max_steps
    visited = [start]
    seen = {start}
    v = start
    steps = 0
    while len(visited) < s:
        if steps >= cap:
            raise SupportGenerationError(
                f"random walk reached {len(visited)} of {s} nodes in {cap} steps")
        nbrs = graph.neighbors(v)
        if len(nbrs) == 0:
            raise SupportGenerationError(f"node {v} has no neighbours")
        v = int(nbrs[rng.integers(len(nbrs))])
        steps += 1
        if v not in seen:
            seen.add(v)
            visited.append(v)
    return np.sort(np.asarray(visited, dtype=np.int64))


def read_edge_list(path: str | Path) -> Graph:
    """Parse the ``p <num_nodes>`` header + ``u v weight`` lines format."""
    num_nodes = None
    edges: list[tuple[int, int]] = []
    weights: list[float] = []
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if num_nodes is None:
                if parts[0] != "p" or len(parts) != 2:
                    raise GraphError(f"{path}:{lineno}: expected header 'p <num_nodes>'")
                num_nodes = int(parts[1])
                continue
            if len(parts) not in (2, 3):
                raise GraphError(f"{path}:{lineno}: expected 'u v [weight]'")
            try:
                u, v = int(parts[0]), int(parts[1])
                w = float(parts[2]) if len(parts) == 3 else 1.0
            except ValueError as exc:
                raise GraphError(f"{path}:{lineno}: {exc}") from None
            edges.append((u, v))
            weights.append(w)
    if num_nodes is None:
        raise GraphError(f"{path}: missing 'p <num_nodes>' header")
    return Graph(num_nodes, np.asarray(edges, dtype=np.int64).reshape(-1, 2),
                 np.asarray(weights, dtype=np.float64))


def write_edge_list(graph: Graph, path: str | Path) -> None:
    with open(path, "w") as fh:
        fh.write(f"p {graph.num_nodes}\n")
        for (u, v), w in zip(graph.edges, graph.weights):
            fh.write(f"{u} {v} {w:.12g}\n")

