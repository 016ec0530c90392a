"""Contraction-scheme search.

Phase 1 builds unsliced trees by hypergraph decomposition: a K-way split
of the whole network, then repeated lopsided bipartitions of any large
block, peeling one small branch off the stem at a time.  An evolution
strategy tunes ``(K, eps, eps_prime)`` against ``log2 tc`` of the result.

Phase 2 alternates greedy edge slicing with brute-force re-optimization of
small windows around the stem until the contraction width fits the target.
"""

from __future__ import annotations

import heapq
import math
import time
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .errors import Stuck
from .partition import Hypergraph, partition_hypergraph
from .tree import (
    ContractionScheme,
    ContractionTree,
    TreeContext,
    apply_slice_to_tree,
    canonical_children,
    extract_stem,
    scheme_costs,
)

EXHAUSTIVE_LEAVES = 8
K_RANGE = (2, 6)


@dataclass
class PlannerParams:
    K: int = 3
    eps: float = 0.2
    eps_prime: float = 0.9
    N: int = 25
    cma_iters: int = 50
    local_pre: int = 20
    local_mid: int = 20
    local_post: int = 50
    target_cw: int = 29
    restarts: int = 5
    seed: int = 0
    window: int = 8
    stem_bias: float = 0.9
    popsize: int = 8

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, doc):
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(doc) - known
        if unknown:
            raise ValueError(f"unknown planner parameters: {sorted(unknown)}")
        return cls(**doc)


def derive_seed(*parts):
    """Stable 63-bit seed from integers."""
    ss = np.random.SeedSequence([int(p) & 0xFFFFFFFF for p in parts])
    return int(ss.generate_state(1, dtype=np.uint64)[0]) >> 1


def _context(net_or_ctx):
    if isinstance(net_or_ctx, TreeContext):
        return net_or_ctx
    if isinstance(net_or_ctx, ContractionTree):
        return net_or_ctx.ctx
    return TreeContext.from_network(net_or_ctx)


# small subproblems: merge a list of tensors (given by edge masks) into one


def optimal_merge(ctx, masks, outer, max_width=None):
    """Cheapest binary tree over ``masks`` by dynamic programming over subsets.

    ``outer`` marks edges that must survive to the final tensor.  Nodes
    wider than ``max_width`` are forbidden (except the root, whose edges
    are fixed).  Returns ``(cost, nested)`` with ``nested`` a tuple tree
    over input indices, or ``None`` when the width limit cannot be met.
    """
    k = len(masks)
    if k == 1:
        return 0, 0
    full = (1 << k) - 1
    union = [0] * (full + 1)
    for s in range(1, full + 1):
        low = s & -s
        union[s] = union[s ^ low] | masks[low.bit_length() - 1]
    estar = [union[s] & (outer | union[full ^ s]) for s in range(full + 1)]
    # a single input keeps all its axes, dangling ones included
    for i, m in enumerate(masks):
        estar[1 << i] = m
    size = ctx.size
    inf = math.inf
    best = [inf] * (full + 1)
    split = [0] * (full + 1)
    for s in range(1, full + 1):
        if s & (s - 1) == 0:
            best[s] = 0
            continue
        if max_width is not None and s != full and ctx.width(estar[s]) > max_width:
            continue
        low = s & -s
        rest = s ^ low
        t = rest
        b, bs = inf, 0
        # enumerate subsets t of rest; s1 = low | t must be a proper subset
        while True:
            s1 = low | t
            if s1 != s:
                s2 = s ^ s1
                c = best[s1] + best[s2]
                if c < b:
                    c += size(estar[s1] | estar[s2])
                    if c < b:
                        b, bs = c, s1
            if t == 0:
                break
            t = (t - 1) & rest
        best[s] = b
        split[s] = bs
    if best[full] == inf:
        return None

    def build(s):
        if s & (s - 1) == 0:
            return s.bit_length() - 1
        s1 = split[s]
        return (build(s1), build(s ^ s1))

    return best[full], build(full)


def greedy_merge(ctx, masks, outer, rng=None, temperature=0.0, alpha=1.0):
    """Greedy pairwise merging of ``masks``.

    Each step merges the connected pair minimizing
    ``size(new) - alpha * (size(a) + size(b))``; with ``temperature > 0``
    the scores are perturbed by Gumbel noise.  Returns ``(cost, nested)``.
    """
    k = len(masks)
    if k == 1:
        return 0, 0
    size = ctx.size
    items = dict(enumerate(masks))
    nested = {i: i for i in range(k)}
    holders = {}
    for i, m in items.items():
        b = 0
        while m:
            if m & 1:
                holders.setdefault(b, set()).add(i)
            m >>= 1
            b += 1
    once = twice = 0
    for b, hs in holders.items():
        if len(hs) == 1:
            once |= 1 << b
        elif len(hs) == 2:
            twice |= 1 << b
    keep = outer

    def merged(mi, mj):
        vanish = (((mi ^ mj) & once) | (mi & mj & twice)) & ~keep
        return (mi | mj) & ~vanish

    def score(i, j):
        mi, mj = items[i], items[j]
        s = size(merged(mi, mj)) - alpha * (size(mi) + size(mj))
        if temperature > 0:
            s = math.copysign(math.log2(1 + abs(s)), s)
            s -= temperature * rng.gumbel()
        return s

    heap = []
    for b, hs in holders.items():
        hs = sorted(hs)
        for x in range(len(hs)):
            for y in range(x + 1, len(hs)):
                heap.append((score(hs[x], hs[y]), hs[x], hs[y]))
    heapq.heapify(heap)
    total = 0
    nxt = k
    while len(items) > 1:
        pair = None
        while heap:
            _, i, j = heapq.heappop(heap)
            if i in items and j in items:
                pair = (i, j)
                break
        if pair is None:
            # disconnected: outer product of the two smallest tensors
            i, j = sorted(items, key=lambda x: (size(items[x]), x))[:2]
        else:
            i, j = pair
        mi, mj = items.pop(i), items.pop(j)
        total += size(mi | mj)
        new = merged(mi, mj)
        touched = (mi | mj)
        b = 0
        m = touched
        while m:
            if m & 1:
                hs = holders[b]
                hs.discard(i)
                hs.discard(j)
                if new >> b & 1:
                    hs.add(nxt)
                bit = 1 << b
                once &= ~bit
                twice &= ~bit
                if len(hs) == 1:
                    once |= bit
                elif len(hs) == 2:
                    twice |= bit
            m >>= 1
            b += 1
        items[nxt] = new
        nested[nxt] = (nested.pop(i), nested.pop(j))
        nbrs = set()
        b = 0
        m = new
        while m:
            if m & 1:
                nbrs |= holders[b]
            m >>= 1
            b += 1
        nbrs.discard(nxt)
        for w in sorted(nbrs):
            heapq.heappush(heap, (score(w, nxt), w, nxt))
        nxt += 1
    (root,) = items
    return total, nested[root]


def _map_nested(nested, labels):
    if isinstance(nested, tuple):
        return (_map_nested(nested[0], labels), _map_nested(nested[1], labels))
    return labels[nested]


# Phase 1: decomposition


class _Pieces:
    def __init__(self, ctx):
        self.ctx = ctx
        self.all_or = 0
        for m in ctx.leaf_masks:
            self.all_or |= m

    def outside(self, leaves):
        inside = set(leaves)
        out = 0
        for i, m in enumerate(self.ctx.leaf_masks):
            if i not in inside:
                out |= m
        return out

    def out_mask(self, leaves):
        sub = 0
        for i in leaves:
            sub |= self.ctx.leaf_masks[i]
        return sub & (self.ctx.open_mask | self.outside(leaves))

    def order(self, leaves):
        """Exhaustive search for small pieces, greedy otherwise."""
        leaves = list(leaves)
        masks = [self.ctx.leaf_masks[i] for i in leaves]
        outer = self.ctx.open_mask | self.outside(leaves)
        if len(leaves) <= EXHAUSTIVE_LEAVES:
            _, nested = optimal_merge(self.ctx, masks, outer)
        else:
            _, nested = greedy_merge(self.ctx, masks, outer)
        return _map_nested(nested, leaves)

    def split(self, leaves, k, eps, rng):
        graph = Hypergraph.from_masks(leaves, [self.ctx.leaf_masks[i] for i in leaves])
        return partition_hypergraph(graph, k, eps, seed=int(rng.integers(2**62))).blocks

    def peel(self, leaves, params, rng):
        """Strip branches off a large component until ``N`` vertices remain."""
        branches = []
        cur = list(leaves)
        while len(cur) > params.N:
            a, b = self.split(cur, 2, params.eps_prime, rng)
            big, small = (a, b) if len(a) >= len(b) else (b, a)
            branches.append(small)
            cur = big
        tree = self.order(cur)
        for br in reversed(branches):
            sub = self.peel(br, params, rng) if len(br) > params.N else self.order(br)
            tree = (tree, sub)
        return tree


def build_tree_by_decomposition(net, params=None, seed=None):
    """One decomposition-based contraction tree for ``net``.

    Top-level ``K``-way split with imbalance ``eps``; blocks larger than
    ``N`` are peeled by bipartitions with imbalance ``eps_prime``; small
    pieces are ordered exhaustively (up to 8 leaves) or greedily; the
    blocks are joined by exhaustive search.
    """
    params = params or PlannerParams()
    ctx = _context(net)
    n = ctx.n
    rng = np.random.default_rng(params.seed if seed is None else seed)
    pieces = _Pieces(ctx)
    if n == 1:
        return ContractionTree(ctx, [])
    if n <= EXHAUSTIVE_LEAVES:
        nested = pieces.order(range(n))
    else:
        k = max(2, min(int(params.K), n))
        blocks = [b for b in pieces.split(list(range(n)), k, params.eps, rng) if b]
        subs = [pieces.peel(b, params, rng) if len(b) > params.N else pieces.order(b) for b in blocks]
        if len(subs) == 1:
            nested = subs[0]
        else:
            _, top = optimal_merge(ctx, [pieces.out_mask(b) for b in blocks], ctx.open_mask)
            nested = _map_nested(top, subs)
    return ContractionTree(ctx, canonical_children(ctx, nested))


def greedy_tree(net, rng=None, temperature=0.0, alpha=1.0):
    ctx = _context(net)
    if ctx.n == 1:
        return ContractionTree(ctx, [])
    _, nested = greedy_merge(ctx, list(ctx.leaf_masks), ctx.open_mask, rng, temperature, alpha)
    return ContractionTree(ctx, canonical_children(ctx, nested))


def random_greedy_costs(net, trials, seed=0):
    """``log2 tc`` of ``trials`` randomized greedy trees (a quality baseline).

    Each trial draws a temperature log-uniformly in [0.01, 1] and a size
    weight uniformly in [0.5, 1.5].
    """
    ctx = _context(net)
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(trials):
        temp = 10 ** rng.uniform(-2, 0)
        alpha = rng.uniform(0.5, 1.5)
        if ctx.n == 1:
            out.append(float("-inf"))
            continue
        cost, _ = greedy_merge(ctx, list(ctx.leaf_masks), ctx.open_mask, rng, temp, alpha)
        out.append(math.log2(cost))
    return out


def _decode(x):
    k = int(round(min(max(x[0], K_RANGE[0]), K_RANGE[1])))
    sig = lambda z: 1 / (1 + math.exp(-min(max(z, -30), 30)))
    eps = min(max(sig(x[1]), 0.01), 0.99)
    eps_prime = min(max(sig(x[2]), 0.01), 0.99)
    return k, eps, eps_prime


def _encode(params):
    logit = lambda p: math.log(p / (1 - p))
    return [float(params.K), logit(params.eps), logit(params.eps_prime)]


def optimize_params(net, params=None, trace=None):
    """Black-box search over ``(K, eps, eps_prime)`` with CMA-ES.

    ``params.cma_iters`` objective evaluations per restart, ``params.restarts``
    restarts; returns ``(best_tree, best_params)``.  When ``trace`` is a
    list, one ``(restart, evaluation, log2_tc, best_so_far)`` tuple is
    appended per evaluation.  With ``cma_iters == 0`` the given parameters
    are used as-is.
    """
    import cma

    params = params or PlannerParams()
    ctx = _context(net)
    if params.cma_iters <= 0 or ctx.n <= EXHAUSTIVE_LEAVES:
        tree = build_tree_by_decomposition(ctx, params)
        if trace is not None:
            trace.append((0, 0, tree.log2_tc, tree.log2_tc))
        return tree, params

    best = None
    for r in range(max(1, params.restarts)):
        seed_r = derive_seed(params.seed, r)
        es = cma.CMAEvolutionStrategy(
            _encode(params),
            1.0,
            {
                "seed": seed_r % (2**31 - 2) + 1,
                "popsize": params.popsize,
                "verbose": -9,
                "verb_log": 0,
                "verb_disp": 0,
            },
        )
        evals = 0
        run_best = math.inf
        while evals < params.cma_iters:
            xs = es.ask()
            values = []
            for x in xs:
                if evals >= params.cma_iters:
                    break
                k, eps, eps_prime = _decode(x)
                cand = replace(params, K=k, eps=eps, eps_prime=eps_prime)
                tree = build_tree_by_decomposition(ctx, cand, seed=derive_seed(seed_r, evals))
                value = tree.log2_tc
                values.append(value)
                run_best = min(run_best, value)
                key = (value, r, evals)
                if best is None or key < best[0]:
                    best = (key, tree, cand)
                if trace is not None:
                    trace.append((r, evals, value, best[0][0]))
                evals += 1
            if len(values) == len(xs):
                es.tell(xs, values)
    return best[1], best[2]


# local optimization


def _grow_window(tree, start, window, rng, stem_set, stem_bias):
    nodes = {start}
    top = start
    inputs = list(tree.kids(start))
    while len(inputs) < window:
        options = [("down", c) for c in inputs if not tree.is_leaf(c)]
        up = tree.parent[top]
        if up >= 0:
            options.append(("up", up))
        if not options:
            break
        on_stem = [o for o in options if o[1] in stem_set]
        pool = on_stem if on_stem and rng.random() < stem_bias else options
        kind, x = pool[int(rng.integers(len(pool)))]
        if kind == "down":
            inputs.remove(x)
            inputs.extend(tree.kids(x))
        else:
            a, b = tree.kids(x)
            inputs.append(b if a == top else a)
            top = x
        nodes.add(x)
    return top, nodes, inputs


def local_optimize(tree, stem=None, window=8, iterations=20, seed=0, max_cw=None,
                   stem_bias=0.9, log=None):
    """Brute-force re-optimization of small windows, mostly on the stem.

    Each iteration grows a connected window of at most ``window`` inputs
    from a randomly chosen node (a stem node with probability
    ``stem_bias``), finds its cheapest internal structure exhaustively, and
    swaps it in only if ``tc`` strictly drops.  With ``max_cw`` no node of
    the new structure may be wider than ``max_cw``.  ``log`` receives
    ``(old_window_cost, new_window_cost, old_tc, new_tc)`` per replacement.
    """
    if len(tree.children) < 2 or iterations <= 0:
        return tree
    rng = np.random.default_rng(seed)
    if stem is None:
        stem = extract_stem(tree).nodes
    stem_set = set(stem)
    internal = list(tree.internal_nodes)
    for _ in range(iterations):
        if stem and rng.random() < stem_bias:
            start = stem[int(rng.integers(len(stem)))]
        else:
            start = internal[int(rng.integers(len(internal)))]
        top, nodes, inputs = _grow_window(tree, start, window, rng, stem_set, stem_bias)
        if len(inputs) < 3:
            continue
        old = sum(tree.node_cost(u) for u in nodes)
        masks = [tree.out_mask(i) for i in inputs]
        found = optimal_merge(tree.ctx, masks, tree.ext_mask(top), max_width=max_cw)
        if found is None or found[0] >= old:
            continue
        new_tree = tree.rewrite(top, nodes, _map_nested(found[1], inputs))
        if log is not None:
            log.append((old, found[0], tree.tc, new_tree.tc))
        tree = new_tree
        stem = extract_stem(tree).nodes
        stem_set = set(stem)
        internal = list(tree.internal_nodes)
    return tree


# Phase 2: slicing


def _slice_choice(tree, target_cw, stem):
    ctx = tree.ctx
    viol = 0
    for u in tree.internal_nodes:
        m = tree.out_mask(u)
        if ctx.width(m) > target_cw:
            viol |= m
    cands = ctx.edges_of(viol & ~ctx.open_mask)
    if not cands:
        return None
    bits = {e: 1 << ctx.bit[e] for e in cands}
    saved = {e: 0 for e in cands}
    on_stem = {e: 0 for e in cands}
    stem_set = set(stem)
    for u in tree.internal_nodes:
        m = tree.edges_mask(u)
        c = tree.node_cost(u)
        for e, b in bits.items():
            if m & b:
                saved[e] += c - c // ctx.dims[ctx.bit[e]]
                if u in stem_set:
                    on_stem[e] += 1
    pool = [e for e in cands if on_stem[e]] or cands
    sub = 1
    for e in ctx.edges_of(tree.sliced):
        sub *= ctx.dims[ctx.bit[e]]

    def key(e):
        d = ctx.dims[ctx.bit[e]]
        return (sub * d * (tree.tc - saved[e]), -on_stem[e], e)

    return min(pool, key=key)


def dynamic_slice(net, tree, target_cw, local_iters=20, seed=0, window=8, stem_bias=0.9,
                  params=None, log=None):
    """Slice edges greedily until ``cw <= target_cw``.

    Candidates are the non-open edges of nodes wider than the target,
    preferring those on the stem; the one giving the smallest scheme ``tc``
    wins.  Between slices, ``local_iters`` rounds of width-capped local
    optimization run.  Raises ``Stuck`` when only open edges remain on the
    widest nodes.  ``log`` receives one record per sliced edge.
    """
    step = 0
    while tree.cw > target_cw:
        stem = extract_stem(tree).nodes if tree.children else []
        e = _slice_choice(tree, target_cw, stem)
        if e is None:
            scheme = ContractionScheme(tree, dict(params or {}))
            raise Stuck(
                f"cannot reduce width below {tree.cw} (target {target_cw}): only open edges remain",
                scheme=scheme,
                cw=tree.cw,
            )
        tree = apply_slice_to_tree(tree, e)
        if log is not None:
            log.append({"edge": e, "cw": tree.cw, "log2_tc": scheme_costs(ContractionScheme(tree)).log2_tc})
        tree = local_optimize(
            tree, window=window, iterations=local_iters, seed=derive_seed(seed, step),
            max_cw=tree.cw, stem_bias=stem_bias,
        )
        step += 1
    return ContractionScheme(tree, dict(params or {}))


# full pipeline


@dataclass
class PlanResult:
    scheme: ContractionScheme
    runs: list = field(default_factory=list)


def plan_single(net, params, run=0):
    """One full Phase 1 + Phase 2 run."""
    seed = derive_seed(params.seed, run)
    p = replace(params, seed=seed, restarts=1)
    tree, best = optimize_params(net, p)
    tree = local_optimize(tree, window=p.window, iterations=p.local_pre,
                          seed=derive_seed(seed, 1), stem_bias=p.stem_bias)
    meta = {
        "K": best.K,
        "eps": best.eps,
        "eps_prime": best.eps_prime,
        "N": best.N,
        "seeds": [params.seed, run],
        "target_cw": params.target_cw,
    }
    scheme = dynamic_slice(net, tree, params.target_cw, local_iters=p.local_mid,
                           seed=derive_seed(seed, 2), window=p.window,
                           stem_bias=p.stem_bias, params=meta)
    tree = local_optimize(scheme.tree, window=p.window, iterations=p.local_post,
                          seed=derive_seed(seed, 3), max_cw=params.target_cw,
                          stem_bias=p.stem_bias)
    return ContractionScheme(tree, meta)


def plan(net, params=None):
    """Best scheme over ``params.restarts`` independent runs."""
    params = params or PlannerParams()
    runs = []
    best = None
    for r in range(max(1, params.restarts)):
        t0 = time.perf_counter()
        scheme = plan_single(net, params, r)
        cost = scheme_costs(scheme)
        runs.append({
            "run": r,
            "log2_tc": cost.log2_tc,
            "cw": cost.cw,
            "subtasks": cost.subtasks,
            "seconds": time.perf_counter() - t0,
        })
        key = (cost.tc, cost.cw, r)
        if best is None or key < best[0]:
            best = (key, scheme)
    return PlanResult(best[1], runs)
