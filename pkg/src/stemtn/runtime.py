"""Execution of contraction schemes.

Each pairwise contraction is lowered to transpose + reshape + batched
matrix multiply.  Subtrees that touch no sliced edge ("branches") are
computed once into a cache shared by all subtasks; the remaining steps run
once per slice assignment.  Subtask values are summed in ascending
assignment order so results do not depend on scheduling.
"""

from __future__ import annotations

import hashlib
import itertools
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import CacheMismatch, HashMismatch, SubtaskFailure, WidthExceedsBudget
from .network import finalize_output
from .tree import ContractionScheme, ContractionTree, extract_stem, scheme_costs

PRECISIONS = {"single": np.complex64, "double": np.complex128}


@dataclass
class Step:
    """One pairwise contraction: ``out = left (x) right`` as a batched GEMM."""

    node: int
    left: int
    right: int
    branch: bool
    left_prep: tuple
    right_prep: tuple
    out_axes: tuple
    out_shape: tuple
    batch: int
    M: int
    N: int
    K: int

    @property
    def mults(self):
        return self.batch * self.M * self.N * self.K


def _prep(axes, target, dims, rows, cols, batch):
    """Recipe turning a tensor with ``axes`` into a ``(batch, rows, cols)`` array."""
    axes = list(axes)
    missing = [e for e in target if e not in axes]
    expand = (1,) * len(missing)
    bshape = tuple(dims[e] for e in axes + missing)
    full = axes + missing
    perm = tuple(full.index(e) for e in target)
    return (len(missing) > 0, expand, bshape, perm, (batch, rows, cols))


def _apply_prep(x, prep):
    needs_bcast, expand, bshape, perm, shape3 = prep
    if needs_bcast:
        x = np.broadcast_to(x.reshape(x.shape + expand), bshape)
    # a fixed C layout keeps matmul on one kernel path whatever the input strides
    return np.ascontiguousarray(np.transpose(x, perm).reshape(shape3))


def _prod(dims, edges):
    out = 1
    for e in edges:
        out *= dims[e]
    return out


def _make_step(node, left, right, a_axes, b_axes, out_set, dims, branch):
    a_set, b_set = set(a_axes), set(b_axes)
    batch = [e for e in a_axes if e in b_set and e in out_set]
    contract = [e for e in a_axes if e in b_set and e not in out_set]
    left_free = [e for e in a_axes if e not in b_set and e in out_set]
    right_free = [e for e in b_axes if e not in a_set and e in out_set]
    # axes summed inside one operand only; the other operand is broadcast
    # along them so the multiply count matches 2^|E_u|
    left_sum = [e for e in a_axes if e not in b_set and e not in out_set]
    right_sum = [e for e in b_axes if e not in a_set and e not in out_set]
    k_axes = contract + left_sum + right_sum
    nb, m, n, k = (_prod(dims, x) for x in (batch, left_free, right_free, k_axes))
    out_axes = tuple(batch + left_free + right_free)
    return Step(
        node=node,
        left=left,
        right=right,
        branch=branch,
        left_prep=_prep(a_axes, batch + left_free + k_axes, dims, m, k, nb),
        right_prep=_prep(b_axes, batch + k_axes + right_free, dims, k, n, nb),
        out_axes=out_axes,
        out_shape=tuple(dims[e] for e in out_axes),
        batch=nb,
        M=m,
        N=n,
        K=k,
    )


def _run_step(step, a, b):
    out = np.matmul(_apply_prep(a, step.left_prep), _apply_prep(b, step.right_prep))
    return out.reshape(step.out_shape)


# branch merging


def _merge_branches(tree, dependent, merge_min_dim):
    """Absorb runs of small adjacent stem branches as one merged tensor.

    Walking the stem from the tip up, consecutive slice-independent
    branches that each face the stem through fewer than ``merge_min_dim``
    elements are combined into one branch until the combined facing size
    reaches ``merge_min_dim``.  A merge is kept only if it does not raise
    the tree width.
    """
    if merge_min_dim <= 1 or len(tree.children) < 2:
        return tree
    ctx = tree.ctx
    cw0 = tree.cw
    dep = dependent(tree)
    stem = extract_stem(tree).nodes
    on_stem = set(stem)
    tip_a, tip_b = tree.kids(stem[-1])
    base = tip_a
    # (branch, stem tensor it is absorbed into), bottom-up
    chain = [(tip_b, tip_a)]
    for u, p in zip(reversed(stem), reversed(stem[:-1])):
        a, b = tree.kids(p)
        chain.append((b if a == u else a, u))
    facing = lambda mask, s: ctx.size(mask & tree.out_mask(s))

    groups = []  # [nested, union of out masks, stem tensor below the group, mergeable]
    for i, (br, s) in enumerate(chain):
        rest = [c[0] for c in chain[i + 1:]]
        mask = tree.out_mask(br)
        small = not dep[br] and facing(mask, s) < merge_min_dim
        if groups:
            g = groups[-1]
            if small and g[3] and facing(g[1], g[2]) < merge_min_dim:
                trial = groups[:-1] + [[(g[0], br), g[1] | mask, g[2], True]]
                if _assemble(tree, base, trial, on_stem, rest).cw <= cw0:
                    groups = trial
                    continue
        groups.append([br, mask, s, small])
    if all(not isinstance(g[0], tuple) for g in groups):
        return tree
    return _assemble(tree, base, groups, on_stem, [])


def _assemble(tree, base, groups, on_stem, rest):
    nested = base
    for g in groups:
        nested = (nested, g[0])
    for br in rest:
        nested = (nested, br)
    return tree.rewrite(tree.root, on_stem, nested)


def _dependence(tree):
    """Per node: does its subtree touch a sliced edge?"""
    ctx = tree.ctx
    dep = [bool(m & tree.sliced) for m in ctx.leaf_masks]
    for a, b in tree.children:
        dep.append(dep[a] or dep[b])
    return dep


@dataclass
class ExecutablePlan:
    net: object
    scheme: ContractionScheme
    tree: ContractionTree
    steps: list
    leaf_axes: list
    leaf_index: list
    sliced_edges: tuple
    sliced_dims: tuple
    dtype: object
    version: str
    dependent: list = field(repr=False)

    @property
    def branch_steps(self):
        return [s for s in self.steps if s.branch]

    @property
    def stem_steps(self):
        return [s for s in self.steps if not s.branch]

    @property
    def subtasks(self):
        out = 1
        for d in self.sliced_dims:
            out *= d
        return out

    @property
    def flop_estimate(self):
        """Real flops of all steps for all subtasks (8 per complex multiply-add)."""
        return 8 * self.subtasks * sum(s.mults for s in self.steps)

    @property
    def cw(self):
        return self.tree.cw

    def assignment(self, index):
        """Mixed-radix digits of ``index``; the first sliced edge is most significant."""
        digits = []
        for d in reversed(self.sliced_dims):
            index, r = divmod(index, d)
            digits.append(r)
        return tuple(reversed(digits))

    def assignments(self):
        return itertools.product(*(range(d) for d in self.sliced_dims))

    def rebind(self, net):
        """Same plan over a network with identical structure (different data)."""
        if net.structure_hash() != self.scheme.network_hash:
            raise HashMismatch("network structure differs from the planned one")
        return ExecutablePlan(
            net, self.scheme, self.tree, self.steps, self.leaf_axes, self.leaf_index,
            self.sliced_edges, self.sliced_dims, self.dtype, _version(net, self),
            self.dependent,
        )


def _version(net, plan):
    h = hashlib.sha256()
    h.update(plan.scheme.network_hash.encode())
    h.update(repr(plan.tree.children).encode())
    h.update(repr(plan.tree.sliced).encode())
    h.update(np.dtype(plan.dtype).str.encode())
    for v in net.vertices:
        h.update(np.ascontiguousarray(net.tensors[v]).tobytes())
    return h.hexdigest()


def compile_scheme(net, scheme, merge_min_dim=32, precision="single", max_cw=None):
    """Lower ``scheme`` on ``net`` to GEMM steps.

    ``merge_min_dim`` controls branch merging (1 disables it).  With
    ``max_cw`` set, schemes wider than the budget are rejected.
    """
    if scheme.network_hash != net.structure_hash():
        raise HashMismatch("scheme was planned for a different network")
    if max_cw is not None and scheme.tree.cw > max_cw:
        raise WidthExceedsBudget(f"scheme width {scheme.tree.cw} exceeds budget {max_cw}")
    dtype = PRECISIONS[precision] if isinstance(precision, str) else np.dtype(precision).type
    tree = _merge_branches(scheme.tree, _dependence, merge_min_dim)
    ctx = tree.ctx
    dims = {e: ctx.dims[i] for e, i in ctx.bit.items()}
    sliced = tuple(ctx.edges_of(tree.sliced))
    sliced_set = set(sliced)
    leaf_axes, leaf_index = [], []
    for v in ctx.leaves:
        order = net.edge_order[v]
        leaf_index.append(tuple(sliced.index(e) if e in sliced_set else None for e in order))
        # repeated axes collapse to their diagonal during leaf preparation
        leaf_axes.append(tuple(dict.fromkeys(e for e in order if e not in sliced_set)))
    dep = _dependence(tree)
    axes = {i: leaf_axes[i] for i in range(ctx.n)}
    steps = []
    for u in tree.internal_nodes:
        a, b = tree.kids(u)
        out_set = set(ctx.edges_of(tree.out_mask(u)))
        step = _make_step(u, a, b, axes[a], axes[b], out_set, dims, not dep[u])
        axes[u] = step.out_axes
        steps.append(step)
    plan = ExecutablePlan(
        net, ContractionScheme(tree, scheme.params), tree, steps, leaf_axes, leaf_index,
        sliced, tuple(dims[e] for e in sliced), dtype, "", dep,
    )
    plan.version = _version(net, plan)
    return plan


# public alias matching the verb used throughout the CLI
compile = compile_scheme


def _leaf(plan, i, assignment):
    v = plan.tree.ctx.leaves[i]
    t = plan.net.tensors[v]
    order = plan.net.edge_order[v]
    index = plan.leaf_index[i]
    if assignment is not None and any(x is not None for x in index):
        t = t[tuple(slice(None) if x is None else assignment[x] for x in index)]
        order = tuple(e for e, x in zip(order, index) if x is None)
    if len(set(order)) != len(order):
        labels = {e: k for k, e in enumerate(dict.fromkeys(order))}
        t = np.einsum(t, [labels[e] for e in order], [labels[e] for e in plan.leaf_axes[i]])
    return np.asarray(t, dtype=plan.dtype)


class BranchCache:
    """Slice-independent leaves and subtrees, computed once per plan."""

    def __init__(self, plan, precompute=True):
        self.version = plan.version
        self.tensors = {}
        self.mult_count = 0
        self.precomputed = precompute
        if not precompute:
            return
        dep = plan.dependent
        for i in range(plan.tree.ctx.n):
            if not dep[i]:
                self.tensors[i] = _leaf(plan, i, None)
        for step in plan.steps:
            if step.branch:
                a = self.tensors[step.left]
                b = self.tensors[step.right]
                self.tensors[step.node] = _run_step(step, a, b)
                self.mult_count += step.mults
        # only keep what the slice-dependent steps (or the root) read
        keep = {plan.tree.root}
        for step in plan.steps:
            if not step.branch:
                keep.update((step.left, step.right))
        self.tensors = {k: v for k, v in self.tensors.items() if k in keep}

    @property
    def elements(self):
        return sum(t.size for t in self.tensors.values())


@dataclass
class SubtaskResult:
    assignment: tuple
    value: np.ndarray
    step_count: int
    peak_elements: int
    mult_count: int


def run_subtask(plan, assignment=(), branch_cache=None):
    """Contract the sub-network for one slice assignment."""
    assignment = tuple(int(x) for x in assignment)
    if len(assignment) != len(plan.sliced_edges):
        raise ValueError(
            f"assignment has {len(assignment)} entries for {len(plan.sliced_edges)} sliced edges"
        )
    for x, d in zip(assignment, plan.sliced_dims):
        if not 0 <= x < d:
            raise ValueError(f"assignment {assignment} out of range")
    if branch_cache is not None and branch_cache.version != plan.version:
        raise CacheMismatch("branch cache was built for a different plan")
    use_cache = branch_cache is not None and branch_cache.precomputed
    cached = branch_cache.tensors if use_cache else {}
    live = {}

    def fetch(node):
        if node in live:
            return live.pop(node)
        if node in cached:
            return cached[node]
        return _leaf(plan, node, assignment)

    steps = mults = peak = 0
    root = plan.tree.root
    for step in plan.steps:
        if step.node in cached:
            continue
        if step.branch and use_cache:
            continue
        out = _run_step(step, fetch(step.left), fetch(step.right))
        live[step.node] = out
        steps += 1
        mults += step.mults
        peak = max(peak, out.size)
    top = fetch(root)
    axes = plan.steps[-1].out_axes if plan.steps else plan.leaf_axes[0]
    value = finalize_output(top, axes, plan.net)
    return SubtaskResult(assignment, value, steps, peak, mults)


def ordered_sum(values):
    """Left-to-right sum; the single reduction used everywhere results meet.

    Accumulates in double precision (slicing can produce many partial sums
    that cancel) and returns the dtype of the inputs.
    """
    total, dtype = None, None
    for v in values:
        v = np.asarray(v)
        if total is None:
            dtype = v.dtype
            total = v.astype(np.result_type(v.dtype, np.complex128), copy=True)
        else:
            total += v
    return total if total is None else total.astype(dtype, copy=False)


@dataclass
class RunReport:
    log2_tc: float
    cw: int
    cw_budget: object
    subtasks: int
    wall_seconds: float
    mult_count: int
    per_subtask_ms: dict

    def to_dict(self):
        return {
            "log2_tc": self.log2_tc,
            "cw": self.cw,
            "cw_budget": self.cw_budget,
            "subtasks": self.subtasks,
            "wall_seconds": self.wall_seconds,
            "mult_count": self.mult_count,
            "per_subtask_ms": self.per_subtask_ms,
        }


def run_range(plan, lo, hi, branch_cache=None, parallelism=1):
    """Subtask results for assignment indices ``lo <= i < hi``, in index order."""
    if parallelism < 1:
        raise ValueError("parallelism must be at least 1")

    def one(i):
        a = plan.assignment(i)
        t0 = time.perf_counter()
        try:
            res = run_subtask(plan, a, branch_cache)
        except Exception as exc:
            raise SubtaskFailure(f"subtask {a} failed: {exc}", assignment=a) from exc
        return res, (time.perf_counter() - t0) * 1000

    if parallelism == 1:
        return [one(i) for i in range(lo, hi)]
    with ThreadPoolExecutor(max_workers=parallelism) as pool:
        return list(pool.map(one, range(lo, hi)))


def run_scheme(net, plan, parallelism=1, branch_cache=None, cw_budget=None):
    """Value of ``net`` under ``plan`` plus a ``RunReport``."""
    t0 = time.perf_counter()
    if net is not plan.net:
        plan = plan.rebind(net)
    cache = branch_cache if branch_cache is not None else BranchCache(plan)
    results = run_range(plan, 0, plan.subtasks, cache, parallelism)
    value = ordered_sum(r.value for r, _ in results)
    ms = np.array([t for _, t in results])
    cost = scheme_costs(plan.scheme)
    report = RunReport(
        log2_tc=cost.log2_tc,
        cw=cost.cw,
        cw_budget=cw_budget,
        subtasks=plan.subtasks,
        wall_seconds=time.perf_counter() - t0,
        mult_count=cache.mult_count + sum(r.mult_count for r, _ in results),
        per_subtask_ms={
            q: float(np.quantile(ms, p)) for q, p in (("min", 0), ("p50", 0.5), ("p90", 0.9), ("max", 1))
        },
    )
    return value, report
