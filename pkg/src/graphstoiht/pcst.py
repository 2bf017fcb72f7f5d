"""Prize-collecting Steiner forest via Goemans-Williamson moat growing.

The solver is unrooted.  Every node starts as its own cluster; clusters with
positive remaining prize grow moats at unit rate.  An edge becomes tight when
the moats covering it sum to its cost, which merges the two clusters; a
cluster deactivates once its moats have paid for all of its prize.  Growth
stops when at most ``g`` clusters remain active.  Each tree of tight edges is
then strong-pruned from its best root and the ``g`` trees of largest net value
(collected prize minus edge cost) are returned.

The kernel keeps one live heap entry per edge and per cluster.  Moat totals
are stored per node as an offset into a linear function owned by the node's
group, so rates only need updating for the edges around a cluster whose
activity flips.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .graph import Graph, GraphError

EVENT_TOL = 1e-12


@dataclass(frozen=True)
class PcstInstance:
    graph: Graph
    prizes: np.ndarray
    target_components: int = 1
    cost_scale: float = 1.0

    def __post_init__(self):
        prizes = np.asarray(self.prizes, dtype=np.float64).reshape(-1)
        if len(prizes) != self.graph.num_nodes:
            raise GraphError(f"expected {self.graph.num_nodes} prizes, got {len(prizes)}")
        if np.any(~np.isfinite(prizes)) or np.any(prizes < 0):
            raise GraphError("prizes must be finite and nonnegative")
        if self.target_components < 1:
            raise GraphError("target_components must be >= 1")
        if not self.cost_scale > 0 or not np.isfinite(self.cost_scale):
            raise GraphError("cost_scale must be a positive finite number")
        object.__setattr__(self, "prizes", prizes)


@dataclass(frozen=True)
class Forest:
    nodes: np.ndarray
    edges: np.ndarray
    objective: float

    def num_components(self) -> int:
        return len(self.nodes) - len(self.edges)


# -- indexed binary heap ---------------------------------------------------
# ``heap`` holds item ids, ``pos[item]`` its slot or -1.  Items compare by
# key, then by id, with keys within EVENT_TOL treated as equal.

@njit(cache=True, inline="always")
def _less(key, a, b):
    ka = key[a]
    kb = key[b]
    if abs(ka - kb) <= 1e-12:
        return a < b
    return ka < kb


@njit(cache=True, inline="always")
def _sift_up(heap, pos, key, i):
    item = heap[i]
    while i > 0:
        parent = (i - 1) >> 1
        other = heap[parent]
        if _less(key, item, other):
            heap[i] = other
            pos[other] = i
            i = parent
        else:
            break
    heap[i] = item
    pos[item] = i


@njit(cache=True, inline="always")
def _sift_down(heap, pos, key, i, size):
    item = heap[i]
    while True:
        child = 2 * i + 1
        if child >= size:
            break
        right = child + 1
        if right < size and _less(key, heap[right], heap[child]):
            child = right
        other = heap[child]
        if _less(key, other, item):
            heap[i] = other
            pos[other] = i
            i = child
        else:
            break
    heap[i] = item
    pos[item] = i


@njit(cache=True, inline="always")
def _heap_set(heap, pos, key, size, item, k):
    """Insert ``item`` or change its key; returns the new heap size."""
    key[item] = k
    i = pos[item]
    if i < 0:
        heap[size] = item
        pos[item] = size
        _sift_up(heap, pos, key, size)
        return size + 1
    _sift_up(heap, pos, key, i)
    _sift_down(heap, pos, key, pos[item], size)
    return size


@njit(cache=True, inline="always")
def _heap_remove(heap, pos, key, size, item):
    i = pos[item]
    if i < 0:
        return size
    pos[item] = -1
    size -= 1
    if i == size:
        return size
    last = heap[size]
    heap[i] = last
    pos[last] = i
    _sift_up(heap, pos, key, i)
    _sift_down(heap, pos, key, pos[last], size)
    return size


# -- moat growing ------------------------------------------------------------

@njit(cache=True, inline="always")
def _refresh_edge(e, t, eu, ev, ec, grp, nb, g0, t0, gact, heap, pos, key, size):
    a = grp[eu[e]]
    b = grp[ev[e]]
    rate = gact[a] + gact[b]
    if a == b or rate == 0:
        return _heap_remove(heap, pos, key, size, e)
    du = nb[eu[e]] + g0[a] + gact[a] * (t - t0[a])
    dv = nb[ev[e]] + g0[b] + gact[b] * (t - t0[b])
    slack = ec[e] - du - dv
    if slack < 0.0:
        slack = 0.0
    return _heap_set(heap, pos, key, size, e, t + slack / rate)


@njit(cache=True)
def _refresh_group(grp_id, t, head, nxt, adj_ptr, adj_eid, eu, ev, ec, grp, nb,
                   g0, t0, gact, heap, pos, key, size):
    u = head[grp_id]
    while u >= 0:
        for k in range(adj_ptr[u], adj_ptr[u + 1]):
            size = _refresh_edge(adj_eid[k], t, eu, ev, ec, grp, nb, g0, t0,
                                 gact, heap, pos, key, size)
        u = nxt[u]
    return size


@njit(cache=True)
def _grow(n, eu, ev, ec, adj_ptr, adj_eid, prizes, g):
    """Phase one.  Returns (forest edge ids, group id per node)."""
    m = len(eu)
    max_clusters = 2 * n
    # groups: node sets merged so far, identified by a representative node
    grp = np.arange(n)
    head = np.arange(n)
    tail = np.arange(n)
    nxt = -np.ones(n, dtype=np.int64)
    gsize = np.ones(n, dtype=np.int64)
    nb = np.zeros(n)
    g0 = np.zeros(n)
    t0 = np.zeros(n)
    gact = np.zeros(n, dtype=np.int64)
    gclu = np.arange(n)
    # clusters of the laminar family; only the top cluster of a group is alive
    c_prize = np.zeros(max_clusters)
    c_moat = np.zeros(max_clusters)
    c_time = np.zeros(max_clusters)
    c_act = np.zeros(max_clusters, dtype=np.int64)
    c_grp = np.zeros(max_clusters, dtype=np.int64)
    num_clusters = n

    n_items = m + max_clusters
    heap = np.empty(n_items, dtype=np.int64)
    pos = -np.ones(n_items, dtype=np.int64)
    key = np.zeros(n_items)
    size = 0

    n_active = 0
    for u in range(n):
        c_prize[u] = prizes[u]
        c_grp[u] = u
        if prizes[u] > 0.0:
            c_act[u] = 1
            gact[u] = 1
            n_active += 1
            size = _heap_set(heap, pos, key, size, m + u, prizes[u])
    t = 0.0
    for e in range(m):
        size = _refresh_edge(e, t, eu, ev, ec, grp, nb, g0, t0, gact,
                             heap, pos, key, size)

    forest = np.empty(max(n - 1, 0), dtype=np.int64)
    nf = 0
    while n_active > g and size > 0:
        item = heap[0]
        if key[item] > t:
            t = key[item]
        size = _heap_remove(heap, pos, key, size, item)
        if item < m:
            a = grp[eu[item]]
            b = grp[ev[item]]
            if a == b:
                continue
            forest[nf] = item
            nf += 1
            ca = gclu[a]
            cb = gclu[b]
            k = num_clusters
            num_clusters += 1
            ma = c_moat[ca] + c_act[ca] * (t - c_time[ca])
            mb = c_moat[cb] + c_act[cb] * (t - c_time[cb])
            c_prize[k] = c_prize[ca] + c_prize[cb]
            c_moat[k] = ma + mb
            c_time[k] = t
            c_act[k] = 1
            n_active += 1 - c_act[ca] - c_act[cb]
            size = _heap_remove(heap, pos, key, size, m + ca)
            size = _heap_remove(heap, pos, key, size, m + cb)
            c_act[ca] = 0
            c_act[cb] = 0
            remaining = c_prize[k] - c_moat[k]
            if remaining < 0.0:
                remaining = 0.0
            size = _heap_set(heap, pos, key, size, m + k, t + remaining)
            # rebase both group moat functions at t before folding
            g0[a] += gact[a] * (t - t0[a])
            t0[a] = t
            g0[b] += gact[b] * (t - t0[b])
            t0[b] = t
            if gact[a] and gact[b]:
                # both grow already: no rate changes, fold small into big
                big, small = (a, b) if gsize[a] >= gsize[b] else (b, a)
            else:
                # fold the inactive group into the active one; its nodes
                # start growing, so their edges need new event times
                big, small = (a, b) if gact[a] else (b, a)
            flips = gact[small] == 0
            shift = g0[small] - g0[big]
            first = head[small]
            u = first
            while u >= 0:
                nb[u] += shift
                grp[u] = big
                u = nxt[u]
            nxt[tail[big]] = head[small]
            tail[big] = tail[small]
            gsize[big] += gsize[small]
            gclu[big] = k
            c_grp[k] = big
            if flips:
                u = first
                while u >= 0:
                    for q in range(adj_ptr[u], adj_ptr[u + 1]):
                        size = _refresh_edge(adj_eid[q], t, eu, ev, ec, grp, nb, g0,
                                             t0, gact, heap, pos, key, size)
                    u = nxt[u]
        else:
            c = item - m
            grp_id = c_grp[c]
            c_moat[c] = c_prize[c]
            c_time[c] = t
            c_act[c] = 0
            n_active -= 1
            g0[grp_id] += gact[grp_id] * (t - t0[grp_id])
            t0[grp_id] = t
            gact[grp_id] = 0
            size = _refresh_group(grp_id, t, head, nxt, adj_ptr, adj_eid, eu, ev,
                                  ec, grp, nb, g0, t0, gact, heap, pos, key, size)
    return forest[:nf], grp


# -- strong pruning ----------------------------------------------------------

@njit(cache=True)
def _prune(n, eu, ev, ec, prizes, forest, grp, g):
    """Strong-prune every tree from its best root and keep the best ``g``.

    Returns (node mask, forest-edge mask, objective of the kept trees).
    """
    nf = len(forest)
    # forest adjacency
    deg = np.zeros(n + 1, dtype=np.int64)
    for i in range(nf):
        deg[eu[forest[i]] + 1] += 1
        deg[ev[forest[i]] + 1] += 1
    ptr = np.cumsum(deg)
    fill = ptr[:-1].copy()
    nbr = np.empty(2 * nf, dtype=np.int64)
    fid = np.empty(2 * nf, dtype=np.int64)
    for i in range(nf):
        e = forest[i]
        u = eu[e]
        v = ev[e]
        nbr[fill[u]] = v
        fid[fill[u]] = i
        fill[u] += 1
        nbr[fill[v]] = u
        fid[fill[v]] = i
        fill[v] += 1

    order = np.empty(n, dtype=np.int64)
    parent = -np.ones(n, dtype=np.int64)
    pcost = np.zeros(n)
    pedge = -np.ones(n, dtype=np.int64)
    down = np.zeros(n)
    full = np.zeros(n)
    seen = np.zeros(n, dtype=np.bool_)

    tree_obj = np.empty(n)
    tree_min = np.empty(n, dtype=np.int64)
    tree_root = np.empty(n, dtype=np.int64)
    n_trees = 0

    for r in range(n):
        if grp[r] != r:
            continue
        # BFS from the smallest node of the group
        start = r
        # groups are connected through forest edges; find the min node by BFS
        cnt = 0
        order[0] = start
        seen[start] = True
        parent[start] = -1
        cnt = 1
        i = 0
        while i < cnt:
            u = order[i]
            i += 1
            for k in range(ptr[u], ptr[u + 1]):
                v = nbr[k]
                if not seen[v]:
                    seen[v] = True
                    parent[v] = u
                    pcost[v] = ec[forest[fid[k]]]
                    order[cnt] = v
                    cnt += 1
        for j in range(cnt - 1, -1, -1):
            u = order[j]
            down[u] += prizes[u]
            pu = parent[u]
            if pu >= 0:
                gain = down[u] - pcost[u]
                if gain > 0.0:
                    down[pu] += gain
        full[start] = down[start]
        best = start
        min_node = start
        for j in range(1, cnt):
            u = order[j]
            pu = parent[u]
            gain = down[u] - pcost[u]
            if gain < 0.0:
                gain = 0.0
            up = full[pu] - gain - pcost[u]
            if up < 0.0:
                up = 0.0
            full[u] = down[u] + up
            if u < min_node:
                min_node = u
            if full[u] > full[best] + 1e-12 or (abs(full[u] - full[best]) <= 1e-12
                                                and u < best):
                best = u
        tree_obj[n_trees] = full[best]
        tree_min[n_trees] = min_node
        tree_root[n_trees] = best
        n_trees += 1
        for j in range(cnt):
            u = order[j]
            seen[u] = False
            down[u] = 0.0

    node_mask = np.zeros(n, dtype=np.bool_)
    edge_mask = np.zeros(nf, dtype=np.bool_)
    taken = np.zeros(n_trees, dtype=np.bool_)
    total = 0.0
    for _ in range(g):
        pick = -1
        for j in range(n_trees):
            if taken[j] or tree_obj[j] <= 0.0:
                continue
            if pick < 0:
                pick = j
                continue
            if tree_obj[j] > tree_obj[pick] + 1e-12 or (
                    abs(tree_obj[j] - tree_obj[pick]) <= 1e-12
                    and tree_min[j] < tree_min[pick]):
                pick = j
        if pick < 0:
            break
        taken[pick] = True
        total += tree_obj[pick]
        root = tree_root[pick]
        # re-root at the best node, recompute subtree values, keep positives
        order[0] = root
        seen[root] = True
        parent[root] = -1
        cnt = 1
        i = 0
        while i < cnt:
            u = order[i]
            i += 1
            for k in range(ptr[u], ptr[u + 1]):
                v = nbr[k]
                if not seen[v]:
                    seen[v] = True
                    parent[v] = u
                    pcost[v] = ec[forest[fid[k]]]
                    pedge[v] = fid[k]
                    order[cnt] = v
                    cnt += 1
        for j in range(cnt - 1, -1, -1):
            u = order[j]
            down[u] += prizes[u]
            pu = parent[u]
            if pu >= 0:
                gain = down[u] - pcost[u]
                if gain > 0.0:
                    down[pu] += gain
        node_mask[root] = True
        for j in range(1, cnt):
            u = order[j]
            if node_mask[parent[u]] and down[u] - pcost[u] > 0.0:
                node_mask[u] = True
                edge_mask[pedge[u]] = True
        for j in range(cnt):
            u = order[j]
            seen[u] = False
            down[u] = 0.0
    return node_mask, edge_mask, total


def solve_pcst(instance: PcstInstance) -> Forest:
    """Approximately solve unrooted prize-collecting Steiner forest.

    The returned forest has at most ``instance.target_components`` trees.
    Its penalty (edge cost plus prizes left out) is within a factor two of
    optimal on the instances we check exhaustively.
    """
    graph = instance.graph
    costs = graph.weights * instance.cost_scale
    eu = graph.edges[:, 0]
    ev = graph.edges[:, 1]
    forest, grp = _grow(graph.num_nodes, eu, ev, costs, graph.adj_ptr,
                        graph.adj_eid, instance.prizes, instance.target_components)
    node_mask, edge_mask, objective = _prune(
        graph.num_nodes, eu, ev, costs, instance.prizes, forest, grp,
        instance.target_components)
    return Forest(nodes=np.flatnonzero(node_mask),
                  edges=np.sort(forest[edge_mask]),
                  objective=float(objective))


def penalty(instance: PcstInstance, forest: Forest) -> float:
    """Cost of the forest's edges plus the prizes of nodes it leaves out."""
    cost = float(instance.graph.weights[forest.edges].sum()) * instance.cost_scale
    missed = instance.prizes.sum() - instance.prizes[forest.nodes].sum()
    return cost + float(missed)
