"""Head and tail approximate projections onto the weighted graph model.

Both projections run the same search: node prizes are ``x_i**2`` and a
multiplicative scale on the edge costs is bisected (in log space) until the
prize-collecting Steiner forest has between ``s_low`` and ``s_high`` nodes.
Cheap edges give large forests, expensive edges give the ``g`` best
singletons.  The two routines differ only in their default sparsity bounds.

``top_s_projection`` is the exact projection onto plain ``s``-sparse vectors.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .graph import Graph, GraphError, WgmParams, as_support
from .pcst import PcstInstance, solve_pcst

SCALE_LOW = 1e-6
SCALE_HIGH = 1e6
# the forest size is piecewise constant in the scale; once the bracket is
# this tight the window sits on a jump and more bisection cannot land in it
SCALE_RTOL = 1e-3


def round_half_up(v: float) -> int:
    return int(math.floor(v + 0.5))


@dataclass(frozen=True)
class ProjectionConfig:
    """Sparsity window ``[s_low, s_high]`` for the binary search.

    ``s_high`` defaults to ``round(s_low * (1 + omega))``.
    """

    kind: str
    s_low: int
    wgm: WgmParams
    omega: float = 0.1
    max_iters: int = 50
    s_high: int | None = None

    def __post_init__(self):
        if self.kind not in ("head", "tail"):
            raise GraphError(f"kind must be 'head' or 'tail', got {self.kind!r}")
        if self.s_low < 1:
            raise GraphError(f"s_low must be positive, got {self.s_low}")
        if not self.omega > 0:
            raise GraphError(f"omega must be positive, got {self.omega}")
        if self.max_iters < 1:
            raise GraphError("max_iters must be at least 1")
        if self.s_high is None:
            object.__setattr__(self, "s_high",
                               round_half_up(self.s_low * (1 + self.omega)))
        if self.s_high < self.s_low:
            raise GraphError(f"s_high={self.s_high} below s_low={self.s_low}")

    @classmethod
    def head(cls, num_nodes: int, wgm: WgmParams, omega: float = 0.1,
             max_iters: int = 50, s_low: int | None = None) -> "ProjectionConfig":
        """Head bounds; ``s_low`` defaults to half the node count."""
        if s_low is None:
            s_low = max(num_nodes // 2, wgm.g)
        return cls("head", s_low, wgm, omega, max_iters)

    @classmethod
    def tail(cls, wgm: WgmParams, omega: float = 0.1,
             max_iters: int = 50) -> "ProjectionConfig":
        return cls("tail", wgm.s, wgm, omega, max_iters)


@dataclass(frozen=True)
class ProjectionResult:
    support: np.ndarray
    vector: np.ndarray
    iterations_used: int = 0

    @property
    def achieved_sparsity(self) -> int:
        return len(self.support)


def restrict(x: np.ndarray, support) -> np.ndarray:
    """Copy of ``x`` with every entry outside ``support`` set to zero."""
    x = np.asarray(x, dtype=np.float64)
    idx = as_support(support, len(x))
    out = np.zeros_like(x)
    out[idx] = x[idx]
    return out


def top_s_projection(x: np.ndarray, s: int) -> ProjectionResult:
    """Keep the ``s`` largest-magnitude entries (ties go to the lower index)."""
    x = np.asarray(x, dtype=np.float64)
    if s < 0:
        raise GraphError(f"s must be nonnegative, got {s}")
    if s >= len(x):
        return ProjectionResult(np.arange(len(x)), x.copy())
    order = np.argsort(-np.abs(x), kind="stable")
    support = np.sort(order[:s])
    return ProjectionResult(support, restrict(x, support))


def _forest_nodes(graph: Graph, prizes: np.ndarray, g: int, scale: float) -> np.ndarray:
    return solve_pcst(PcstInstance(graph, prizes, g, scale)).nodes


def _search(x: np.ndarray, graph: Graph, config: ProjectionConfig) -> ProjectionResult:
    x = np.asarray(x, dtype=np.float64)
    if len(x) != graph.num_nodes:
        raise GraphError(f"vector length {len(x)} != num_nodes {graph.num_nodes}")
    prizes = x * x
    top = prizes.max() if len(prizes) else 0.0
    if not top > 0:
        return ProjectionResult(np.zeros(0, dtype=np.int64), np.zeros_like(x))
    prizes = prizes / top
    g = config.wgm.g
    s_low, s_high = config.s_low, config.s_high

    lo, hi = SCALE_LOW, SCALE_HIGH
    positive = graph.weights[graph.weights > 0]
    if len(positive):
        # beyond this scale no edge can pay for itself, so only singletons remain
        hi = min(hi, max(lo, 2.0 / positive.min()))

    best = None
    best_energy = -1.0
    calls = 0

    def consider(nodes):
        nonlocal best, best_energy
        if len(nodes) <= s_high:
            energy = prizes[nodes].sum()
            if energy > best_energy:
                best, best_energy = nodes, energy

    def done(nodes):
        return ProjectionResult(nodes, restrict(x, nodes), calls)

    for scale in (lo, hi):
        if calls >= config.max_iters:
            break
        nodes = _forest_nodes(graph, prizes, g, scale)
        calls += 1
        if s_low <= len(nodes) <= s_high:
            return done(nodes)
        consider(nodes)
        if scale == lo and len(nodes) < s_low:
            # even the cheapest edges cannot reach s_low nodes
            return done(nodes)

    while calls < config.max_iters and hi > lo * (1 + SCALE_RTOL):
        mid = math.sqrt(lo * hi)
        nodes = _forest_nodes(graph, prizes, g, mid)
        calls += 1
        if s_low <= len(nodes) <= s_high:
            return done(nodes)
        consider(nodes)
        if len(nodes) > s_high:
            lo = mid
        else:
            hi = mid

    if best is None:
        # every forest was too large: fall back to the g best singletons
        best = np.sort(np.argsort(-prizes, kind="stable")[:min(g, s_high)])
    return done(best)


def head_projection(x: np.ndarray, graph: Graph, config: ProjectionConfig) -> ProjectionResult:
    """Support of bounded size and at most ``g`` components capturing much of ``x``."""
    if config.kind != "head":
        raise GraphError("head_projection needs a head config")
    return _search(x, graph, config)


def tail_projection(x: np.ndarray, graph: Graph, config: ProjectionConfig) -> ProjectionResult:
    """Model-feasible support leaving a small residual; the result is ``x`` restricted to it."""
    if config.kind != "tail":
        raise GraphError("tail_projection needs a tail config")
    return _search(x, graph, config)
