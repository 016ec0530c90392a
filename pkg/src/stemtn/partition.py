"""Balanced K-way hypergraph partitioning.

Seeded greedy region growing gives an initial partition, then
Fiduccia-Mattheyses passes with gain buckets move single vertices to
reduce the number of cut hyperedges while keeping every block within
``floor((1 + eps) * ceil(n / K))`` vertices.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .errors import Infeasible


@dataclass
class Hypergraph:
    """Vertices ``0..n-1`` labelled by ``labels``; ``edges`` are pin tuples."""

    labels: list
    edges: list
    weights: list
    edge_labels: list = field(default_factory=list)

    @property
    def n(self):
        return len(self.labels)

    @classmethod
    def from_network(cls, net, vertices=None):
        """Sub-hypergraph induced on ``vertices`` (default: all of them).

        Edges with fewer than two pins inside the subset cannot be cut and
        are dropped.
        """
        labels = list(net.vertices if vertices is None else sorted(vertices))
        pos = {v: i for i, v in enumerate(labels)}
        edges, weights, names = [], [], []
        for e in net.edges:
            pins = tuple(pos[v] for v in net.incidence[e] if v in pos)
            if len(pins) >= 2:
                edges.append(pins)
                weights.append(max(1, round(math.log2(net.dims[e]))))
                names.append(e)
        return cls(labels, edges, weights, names)

    @classmethod
    def from_masks(cls, labels, masks):
        """Hypergraph whose edges are the bit positions shared by the masks."""
        pins = {}
        for i, m in enumerate(masks):
            b = 0
            while m:
                if m & 1:
                    pins.setdefault(b, []).append(i)
                m >>= 1
                b += 1
        names = sorted(k for k, p in pins.items() if len(p) >= 2)
        edges = [tuple(pins[k]) for k in names]
        return cls(list(labels), edges, [1] * len(edges), names)

    @classmethod
    def from_edge_list(cls, n, edges):
        edges = [tuple(e) for e in edges]
        return cls(list(range(n)), edges, [1] * len(edges), list(range(len(edges))))


@dataclass
class Partition:
    blocks: list
    cut: set

    @property
    def cut_size(self):
        return len(self.cut)


def max_block_size(n, k, eps):
    return int(math.floor((1 + eps) * math.ceil(n / k) + 1e-9))


class _GainBuckets:
    """Vertices keyed by their current best move gain."""

    def __init__(self):
        self.buckets = {}
        self.where = {}

    def insert(self, v, gain):
        self.buckets.setdefault(gain, {})[v] = None
        self.where[v] = gain

    def remove(self, v):
        g = self.where.pop(v, None)
        if g is not None:
            b = self.buckets[g]
            del b[v]
            if not b:
                del self.buckets[g]

    def pop_max(self):
        if not self.buckets:
            return None
        g = max(self.buckets)
        v = next(iter(self.buckets[g]))
        self.remove(v)
        return v, g

    def __bool__(self):
        return bool(self.where)


class _State:
    def __init__(self, graph, k, part):
        self.g = graph
        self.k = k
        self.part = list(part)
        self.inc = [[] for _ in range(graph.n)]
        for j, pins in enumerate(graph.edges):
            for v in pins:
                self.inc[v].append(j)
        self.count = [[0] * k for _ in graph.edges]
        for j, pins in enumerate(graph.edges):
            for v in pins:
                self.count[j][self.part[v]] += 1
        self.size = [0] * k
        for p in self.part:
            self.size[p] += 1

    def cut(self):
        total = 0
        for j, pins in enumerate(self.g.edges):
            if max(self.count[j]) < len(pins):
                total += self.g.weights[j]
        return total

    def gain(self, v, b):
        a = self.part[v]
        gain = 0
        for j in self.inc[v]:
            c = self.count[j]
            size = len(self.g.edges[j])
            w = self.g.weights[j]
            if c[a] == size:
                gain -= w
            elif c[a] == 1 and c[b] == size - 1:
                gain += w
        return gain

    def targets(self, v):
        a = self.part[v]
        blocks = set()
        for j in self.inc[v]:
            for u in self.g.edges[j]:
                blocks.add(self.part[u])
        blocks.discard(a)
        return sorted(blocks)

    def best_move(self, v, cap):
        a = self.part[v]
        if self.size[a] <= 1:
            return None
        best = None
        for b in self.targets(v):
            if self.size[b] >= cap:
                continue
            g = self.gain(v, b)
            if best is None or g > best[0]:
                best = (g, b)
        return best

    def move(self, v, b):
        a = self.part[v]
        for j in self.inc[v]:
            self.count[j][a] -= 1
            self.count[j][b] += 1
        self.size[a] -= 1
        self.size[b] += 1
        self.part[v] = b


def _fm_pass(state, cap, order):
    buckets = _GainBuckets()
    target = {}
    for v in order:
        mv = state.best_move(v, cap)
        if mv is not None:
            buckets.insert(v, mv[0])
            target[v] = mv[1]
    locked = set()
    history = []
    running = 0
    best_gain, best_len = 0, 0
    while buckets:
        v, g = buckets.pop_max()
        mv = state.best_move(v, cap)
        if mv is None:
            continue
        if mv[0] != g or mv[1] != target.get(v):
            buckets.insert(v, mv[0])
            target[v] = mv[1]
            continue
        src = state.part[v]
        state.move(v, mv[1])
        locked.add(v)
        history.append((v, src))
        running += g
        if running > best_gain:
            best_gain, best_len = running, len(history)
        touched = set()
        for j in state.inc[v]:
            touched.update(state.g.edges[j])
        for u in sorted(touched - locked):
            buckets.remove(u)
            mu = state.best_move(u, cap)
            if mu is not None:
                buckets.insert(u, mu[0])
                target[u] = mu[1]
    for v, src in reversed(history[best_len:]):
        state.move(v, src)
    return best_gain


def _grow(graph, k, rng, targets):
    """Region growing from spread-out seeds."""
    n = graph.n
    nbrs = [set() for _ in range(n)]
    for pins in graph.edges:
        for v in pins:
            nbrs[v].update(pins)
    for v in range(n):
        nbrs[v].discard(v)

    def bfs_dist(src):
        dist = [-1] * n
        for s in src:
            dist[s] = 0
        q = deque(src)
        while q:
            u = q.popleft()
            for w in nbrs[u]:
                if dist[w] < 0:
                    dist[w] = dist[u] + 1
                    q.append(w)
        return dist

    seeds = [int(rng.integers(n))]
    while len(seeds) < k:
        dist = bfs_dist(seeds)
        # unreachable vertices count as farthest
        far = -1 if -1 in dist else max(dist)
        pool = [v for v in range(n) if v not in seeds and dist[v] == far]
        seeds.append(int(pool[rng.integers(len(pool))]))

    part = [-1] * n
    size = [0] * k
    conn = [dict() for _ in range(k)]
    for b, s in enumerate(seeds):
        part[s] = b
        size[b] = 1
    for b, s in enumerate(seeds):
        for w in nbrs[s]:
            if part[w] < 0:
                conn[b][w] = conn[b].get(w, 0) + 1
    unassigned = n - k
    while unassigned:
        open_blocks = [b for b in range(k) if size[b] < targets[b]]
        b = min(open_blocks, key=lambda x: (size[x] / targets[x], x))
        cands = {w: c for w, c in conn[b].items() if part[w] < 0}
        if cands:
            top = max(cands.values())
            pool = sorted(w for w, c in cands.items() if c == top)
        else:
            pool = [v for v in range(n) if part[v] < 0]
        v = pool[rng.integers(len(pool))]
        part[v] = b
        size[b] += 1
        unassigned -= 1
        for w in nbrs[v]:
            if part[w] < 0:
                conn[b][w] = conn[b].get(w, 0) + 1
    return part


def partition_hypergraph(graph, k, eps, seed=0, attempts=4, max_passes=20):
    """Partition ``graph`` (a ``Hypergraph`` or ``TensorNetwork``) into ``k`` blocks.

    Returns the best of ``attempts`` refined starting points.  Blocks are
    lists of vertex labels; ``cut`` holds the labels of cut hyperedges.
    """
    if not isinstance(graph, Hypergraph):
        graph = Hypergraph.from_network(graph)
    n = graph.n
    if k < 2:
        raise Infeasible("need at least two blocks")
    if n < k:
        raise Infeasible(f"cannot split {n} vertices into {k} non-empty blocks")
    if not 0 <= eps:
        raise Infeasible("imbalance must be non-negative")
    cap = max_block_size(n, k, eps)
    if cap * k < n:
        raise Infeasible("balance constraint cannot be met")
    base, extra = divmod(n, k)
    targets = [base + (1 if b < extra else 0) for b in range(k)]
    rng = np.random.default_rng(seed)

    best = None
    for _ in range(attempts):
        state = _State(graph, k, _grow(graph, k, rng, targets))
        for _ in range(max_passes):
            order = list(rng.permutation(n))
            if _fm_pass(state, cap, order) <= 0:
                break
        key = state.cut()
        if best is None or key < best[0]:
            best = (key, list(state.part), state)
    _, part, state = best
    blocks = [[] for _ in range(k)]
    for v, b in enumerate(part):
        blocks[b].append(graph.labels[v])
    cut = {
        graph.edge_labels[j]
        for j, pins in enumerate(graph.edges)
        if max(state.count[j]) < len(pins)
    }
    return Partition([sorted(b) for b in blocks], cut)


def random_balanced_partition(graph, k, seed=0):
    """Uniformly shuffled partition with near-equal block sizes (a baseline)."""
    if not isinstance(graph, Hypergraph):
        graph = Hypergraph.from_network(graph)
    rng = np.random.default_rng(seed)
    perm = rng.permutation(graph.n)
    part = [0] * graph.n
    for i, v in enumerate(perm):
        part[v] = i % k
    blocks = [[] for _ in range(k)]
    for v, b in enumerate(part):
        blocks[b].append(graph.labels[v])
    cut = {
        graph.edge_labels[j]
        for j, pins in enumerate(graph.edges)
        if len({part[v] for v in pins}) > 1
    }
    return Partition([sorted(b) for b in blocks], cut)
