"""Contraction trees, their costs, stems, and sliced contraction schemes.

Edge sets are Python ints used as bitsets over a fixed edge numbering, so
node costs are a popcount away.  For an internal node ``u`` with children
``A`` and ``B``::

    E_u  = E*_A | E*_B                (edges touched by the step)
    E*_u = E_u & ext(u)               (edges that survive the step)

where ``ext(u)`` holds the open edges plus every edge incident to a leaf
outside ``u``'s subtree.  The step costs ``prod d(e)`` over ``E_u``
(``2**|E_u|`` for qubit networks) and produces a tensor of ``|E*_u|`` axes.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import cached_property

from .errors import EdgeNotFound, HashMismatch, OpenEdgeSliced, SchemaError

ORDER_FILE_VERSION = 1


class TreeContext:
    """Hypergraph structure a contraction tree is built over."""

    def __init__(self, leaves, leaf_edges, dims, open_edges, network_hash=""):
        self.leaves = tuple(leaves)
        self.edge_ids = tuple(sorted(dims))
        self.bit = {e: i for i, e in enumerate(self.edge_ids)}
        self.dims = tuple(dims[e] for e in self.edge_ids)
        self.leaf_masks = tuple(self.mask(edges) for edges in leaf_edges)
        self.open_mask = self.mask(open_edges)
        self.network_hash = network_hash
        self.leaf_pos = {v: i for i, v in enumerate(self.leaves)}
        self.bond2 = all(d == 2 for d in self.dims)
        self._log2 = tuple(math.log2(d) for d in self.dims)

    @classmethod
    def from_network(cls, net):
        leaves = net.vertices
        return cls(
            leaves,
            [set(net.edge_order[v]) for v in leaves],
            net.dims,
            net.open_edges,
            net.structure_hash(),
        )

    @property
    def n(self):
        return len(self.leaves)

    def mask(self, edges):
        m = 0
        for e in edges:
            m |= 1 << self.bit[e]
        return m

    def edges_of(self, mask):
        out = []
        i = 0
        while mask:
            if mask & 1:
                out.append(self.edge_ids[i])
            mask >>= 1
            i += 1
        return out

    def size(self, mask):
        """Number of entries of a tensor over ``mask`` (also the step cost)."""
        if self.bond2:
            return 1 << mask.bit_count()
        out = 1
        i = 0
        while mask:
            if mask & 1:
                out *= self.dims[i]
            mask >>= 1
            i += 1
        return out

    def width(self, mask):
        """log2 of ``size(mask)``."""
        if self.bond2:
            return mask.bit_count()
        w = 0.0
        i = 0
        while mask:
            if mask & 1:
                w += self._log2[i]
            mask >>= 1
            i += 1
        return int(w) if w == int(w) else w


class ContractionTree:
    """Rooted binary tree over a network's vertices.

    Nodes ``0 .. n-1`` are leaves (``ctx.leaves[i]``); internal node
    ``n + k`` has children ``children[k]``, and every child id is smaller
    than its parent's, so the root is the last node.  ``sliced`` is a
    bitmask of edges removed by slicing.
    """

    def __init__(self, ctx, children, sliced=0):
        self.ctx = ctx
        self.children = tuple((int(a), int(b)) for a, b in children)
        self.sliced = sliced
        n = ctx.n
        if n == 0:
            raise SchemaError("tree over an empty network")
        if len(self.children) != n - 1:
            raise SchemaError(f"{n} leaves need {n - 1} internal nodes, got {len(self.children)}")
        seen = set()
        for k, (a, b) in enumerate(self.children):
            for c in (a, b):
                if not 0 <= c < n + k or c in seen:
                    raise SchemaError(f"node {n + k} has invalid child {c}")
                seen.add(c)
        if len(seen) != max(2 * n - 2, 0):
            raise SchemaError("tree does not cover every node")

    # construction helpers

    @classmethod
    def from_nested(cls, ctx, nested, sliced=0):
        """Build from nested ``[left, right]`` pairs of leaf vertex ids."""
        children = []

        def walk(x):
            if isinstance(x, (list, tuple)):
                if len(x) != 2:
                    raise SchemaError("tree nodes must be [left, right] pairs")
                a, b = walk(x[0]), walk(x[1])
                children.append((a, b))
                return ctx.n + len(children) - 1
            if x not in ctx.leaf_pos:
                raise SchemaError(f"unknown vertex id {x}")
            return ctx.leaf_pos[x]

        walk(nested)
        return cls(ctx, children, sliced)

    def canonical(self):
        """Same tree with internal nodes numbered in post-order (as parsed trees are)."""
        if not self.children:
            return self
        return ContractionTree.from_nested(self.ctx, self.to_nested(), self.sliced)

    def to_nested(self, node=None):
        if node is None:
            node = self.root
        if node < self.ctx.n:
            return self.ctx.leaves[node]
        a, b = self.children[node - self.ctx.n]
        return [self.to_nested(a), self.to_nested(b)]

    @property
    def n_leaves(self):
        return self.ctx.n

    @property
    def root(self):
        return self.ctx.n + len(self.children) - 1 if self.children else 0

    @property
    def internal_nodes(self):
        return range(self.ctx.n, self.ctx.n + len(self.children))

    def is_leaf(self, node):
        return node < self.ctx.n

    def kids(self, node):
        return self.children[node - self.ctx.n]

    @cached_property
    def parent(self):
        par = [-1] * (self.ctx.n + len(self.children))
        for k, (a, b) in enumerate(self.children):
            par[a] = par[b] = self.ctx.n + k
        return par

    # edge sets

    @cached_property
    def _masks(self):
        ctx = self.ctx
        n = ctx.n
        keep = ~self.sliced
        total = n + len(self.children)
        sub = [0] * total
        estar = [0] * total
        for i in range(n):
            sub[i] = estar[i] = ctx.leaf_masks[i] & keep
        for k, (a, b) in enumerate(self.children):
            sub[n + k] = sub[a] | sub[b]
        ext = [0] * total
        ext[self.root] = ctx.open_mask & keep
        for k in range(len(self.children) - 1, -1, -1):
            u = n + k
            a, b = self.children[k]
            ext[a] = ext[u] | sub[b]
            ext[b] = ext[u] | sub[a]
        e_full = [0] * total
        for k, (a, b) in enumerate(self.children):
            u = n + k
            e_full[u] = estar[a] | estar[b]
            estar[u] = e_full[u] & ext[u]
        return sub, ext, e_full, estar

    def edges_mask(self, node):
        """``E_u`` as a bitmask (leaves: their own edges)."""
        return self._masks[2][node] if node >= self.ctx.n else self._masks[3][node]

    def out_mask(self, node):
        """``E*_u`` as a bitmask (leaves: their own edges)."""
        return self._masks[3][node]

    def ext_mask(self, node):
        return self._masks[1][node]

    def subtree_mask(self, node):
        return self._masks[0][node]

    def node_cost(self, node):
        return 0 if node < self.ctx.n else self.ctx.size(self._masks[2][node])

    @cached_property
    def node_costs(self):
        return [self.node_cost(u) for u in range(self.ctx.n + len(self.children))]

    @cached_property
    def tc(self):
        return sum(self.node_costs)

    @cached_property
    def cw(self):
        return max((self.ctx.width(self._masks[3][u]) for u in self.internal_nodes), default=0)

    @property
    def log2_tc(self):
        return _log2_int(self.tc)

    def leaves_under(self, node):
        if node < self.ctx.n:
            return [node]
        a, b = self.kids(node)
        return self.leaves_under(a) + self.leaves_under(b)

    def occurrence(self, edge):
        """Internal nodes whose ``E_u`` contains ``edge``."""
        bit = 1 << self.ctx.bit[edge]
        return [u for u in self.internal_nodes if self._masks[2][u] & bit]

    def replace_children(self, children):
        return ContractionTree(self.ctx, children, self.sliced)

    def rewrite(self, top, window, nested):
        """Tree with the internal nodes ``window`` (rooted at ``top``) rebuilt as ``nested``.

        ``nested`` is a tuple tree whose leaves are the node ids feeding the
        window; everything outside the window keeps its shape.
        """
        n = self.ctx.n
        children = []
        new_id = {i: i for i in range(n)}

        def emit(x):
            if isinstance(x, tuple):
                a, b = emit(x[0]), emit(x[1])
                children.append((a, b))
                return n + len(children) - 1
            return new_id[x]

        for old in self.internal_nodes:
            if old == top:
                new_id[old] = emit(nested)
            elif old in window:
                continue
            else:
                a, b = self.kids(old)
                children.append((new_id[a], new_id[b]))
                new_id[old] = n + len(children) - 1
        return self.replace_children(children)

    def __eq__(self, other):
        return (
            isinstance(other, ContractionTree)
            and self.ctx.leaves == other.ctx.leaves
            and self.to_nested() == other.to_nested()
            and self.sliced == other.sliced
        )

    def __hash__(self):
        return hash((self.ctx.leaves, json.dumps(self.to_nested()), self.sliced))

    def __repr__(self):
        return f"ContractionTree(n={self.ctx.n}, log2_tc={self.log2_tc:.3f}, cw={self.cw})"


def _log2_int(x):
    if x <= 0:
        return float("-inf")
    if x.bit_length() < 1000:
        return math.log2(x)
    shift = x.bit_length() - 64
    return math.log2(x >> shift) + shift


def canonical_children(tree_or_ctx, nested):
    """Post-order child list for a nested tree of leaf positions."""
    ctx = tree_or_ctx.ctx if isinstance(tree_or_ctx, ContractionTree) else tree_or_ctx
    children = []

    def walk(x):
        if isinstance(x, tuple):
            a, b = walk(x[0]), walk(x[1])
            children.append((a, b))
            return ctx.n + len(children) - 1
        return x

    walk(nested)
    return children


@dataclass
class TreeCost:
    tc: int
    log2_tc: float
    cw: float
    per_node: list


def tree_costs(tree):
    """Exact ``tc = sum 2**|E_u|`` (arbitrary precision), ``cw`` and per-node costs."""
    per_node = [
        {
            "node": u,
            "cost": tree.node_cost(u),
            "edges": tree.ctx.width(tree.edges_mask(u)),
            "width": tree.ctx.width(tree.out_mask(u)),
        }
        for u in tree.internal_nodes
    ]
    return TreeCost(tree.tc, tree.log2_tc, tree.cw, per_node)


@dataclass
class Stem:
    nodes: list
    cost: int
    fraction: float


def extract_stem(tree):
    """Heaviest root-to-tip path of internal nodes.

    From the root, repeatedly step to the child whose heaviest downward path
    costs more (ties go to the smaller node id) until both children are
    leaves.
    """
    if not tree.children:
        raise ValueError("a single-leaf tree has no stem")
    n = tree.ctx.n
    costs = tree.node_costs
    best = [0] * (n + len(tree.children))
    for k, (a, b) in enumerate(tree.children):
        best[n + k] = costs[n + k] + max(best[a], best[b])
    path = [tree.root]
    u = tree.root
    while True:
        a, b = tree.kids(u)
        internal = [c for c in (a, b) if c >= n]
        if not internal:
            break
        u = min(internal, key=lambda c: (-best[c], c))
        path.append(u)
    cost = best[tree.root]
    return Stem(path, cost, cost / tree.tc if tree.tc else 0.0)


def apply_slice_to_tree(tree, edge):
    """Same tree shape with ``edge`` removed from every node's edge sets."""
    ctx = tree.ctx
    if edge not in ctx.bit:
        raise EdgeNotFound(edge)
    bit = 1 << ctx.bit[edge]
    if ctx.open_mask & bit:
        raise OpenEdgeSliced(f"edge {edge} is open")
    if tree.sliced & bit or not any(m & bit for m in ctx.leaf_masks):
        raise EdgeNotFound(edge)
    return ContractionTree(ctx, tree.children, tree.sliced | bit)


# schemes


@dataclass
class SchemeCost:
    tc: int
    log2_tc: float
    cw: float
    subtasks: int


@dataclass
class ContractionScheme:
    """Sliced edges plus a contraction tree over the remaining hypergraph."""

    tree: ContractionTree
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        # node numbering feeds tie-breaks downstream; fix it so that a
        # scheme and its serialized round trip execute identically
        self.tree = self.tree.canonical()

    @property
    def sliced_edges(self):
        return tuple(self.tree.ctx.edges_of(self.tree.sliced))

    @property
    def network_hash(self):
        return self.tree.ctx.network_hash

    @property
    def subtasks(self):
        out = 1
        for e in self.sliced_edges:
            out *= self.tree.ctx.dims[self.tree.ctx.bit[e]]
        return out

    @property
    def costs(self):
        return scheme_costs(self)


def scheme_costs(scheme):
    """``tc = subtasks * tc(tree)``, ``cw = cw(tree)``."""
    subtasks = scheme.subtasks
    tc = subtasks * scheme.tree.tc
    return SchemeCost(tc, _log2_int(tc), scheme.tree.cw, subtasks)


def serialize_scheme(scheme):
    """Order-file JSON text; byte-identical for equal schemes."""
    costs = scheme_costs(scheme)
    doc = {
        "version": ORDER_FILE_VERSION,
        "network_hash": scheme.network_hash,
        "sliced_edges": list(scheme.sliced_edges),
        "tree": scheme.tree.to_nested(),
        "params": scheme.params,
        "costs": {"log2_tc": costs.log2_tc, "cw": costs.cw, "subtasks": costs.subtasks},
    }
    return json.dumps(doc, sort_keys=True)


def parse_scheme(text, net, check_hash=True):
    """Rebuild a scheme from order-file text against ``net``."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"order file is not JSON: {exc}") from None
    for key in ("version", "network_hash", "sliced_edges", "tree"):
        if key not in doc:
            raise SchemaError(f"order file lacks {key!r}")
    if doc["version"] != ORDER_FILE_VERSION:
        raise SchemaError(f"unsupported order-file version {doc['version']}")
    ctx = TreeContext.from_network(net)
    if check_hash and doc["network_hash"] != ctx.network_hash:
        raise HashMismatch(
            f"order file was planned for network {doc['network_hash'][:12]}, "
            f"not {ctx.network_hash[:12]}"
        )
    for e in doc["sliced_edges"]:
        if e not in ctx.bit:
            raise SchemaError(f"unknown edge id {e}")
        if ctx.open_mask >> ctx.bit[e] & 1:
            raise SchemaError(f"sliced edge {e} is open")
    tree = ContractionTree.from_nested(ctx, doc["tree"], ctx.mask(doc["sliced_edges"]))
    return ContractionScheme(tree, doc.get("params", {}))


def tree_for(net, nested):
    """Convenience: tree over ``net`` from nested pairs of vertex ids."""
    return ContractionTree.from_nested(TreeContext.from_network(net), nested)
