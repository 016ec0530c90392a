"""Tensor networks as attributed multi-hypergraphs.

A network maps vertex ids to dense tensors.  Each vertex carries an ordered
tuple of hyperedge ids (one per tensor axis); a hyperedge may touch any number
of vertices and has a bond dimension.  Open edges are left unsummed, so the
value of a network is a tensor over its open edges, ordered by edge id.
"""

from __future__ import annotations

import hashlib
import json
from collections.abc import Iterable, Mapping
from functools import cached_property

import numpy as np

from .errors import (
    CapExceeded,
    EdgeNotFound,
    IndexOutOfRange,
    MalformedNetwork,
    OpenEdgeSliced,
)

DEFAULT_FEYNMAN_CAP = 2**26
_FEYNMAN_CHUNK = 2**16


class TensorNetwork:
    """Immutable tensor network value.

    Parameters
    ----------
    tensors : mapping of int -> array_like
        Tensor per vertex id.
    edge_order : mapping of int -> sequence of int
        Hyperedge id for each axis of the vertex's tensor.
    dims : mapping of int -> int
        Bond dimension per hyperedge id.
    open_edges : iterable of int, optional
        Hyperedges left unsummed.
    """

    def __init__(self, tensors, edge_order, dims, open_edges=(), validate=True):
        self.tensors = {int(v): np.asarray(t) for v, t in tensors.items()}
        self.edge_order = {int(v): tuple(int(e) for e in o) for v, o in edge_order.items()}
        self.dims = {int(e): int(d) for e, d in dims.items()}
        self.open_edges = frozenset(int(e) for e in open_edges)
        if validate:
            self.validate()

    def validate(self):
        if set(self.tensors) != set(self.edge_order):
            raise MalformedNetwork("tensors and edge_order disagree on the vertex set")
        for e, d in self.dims.items():
            if d < 1:
                raise MalformedNetwork(f"edge {e} has bond dimension {d}")
        for v, order in self.edge_order.items():
            t = self.tensors[v]
            if t.ndim != len(order):
                raise MalformedNetwork(
                    f"vertex {v}: tensor rank {t.ndim} != {len(order)} incident slots"
                )
            for axis, e in enumerate(order):
                if e not in self.dims:
                    raise MalformedNetwork(f"vertex {v} references unknown edge {e}")
                if t.shape[axis] != self.dims[e]:
                    raise MalformedNetwork(
                        f"vertex {v} axis {axis}: size {t.shape[axis]} != d({e}) = {self.dims[e]}"
                    )
        for e in self.open_edges:
            if e not in self.dims:
                raise MalformedNetwork(f"open edge {e} is not an edge")
        for e in self.dims:
            if not self.incidence.get(e) and e not in self.open_edges:
                raise MalformedNetwork(f"edge {e} touches no vertex and is not open")

    # structure

    @cached_property
    def vertices(self):
        return tuple(sorted(self.tensors))

    @cached_property
    def edges(self):
        return tuple(sorted(self.dims))

    @cached_property
    def incidence(self):
        """Edge id -> sorted tuple of incident vertex ids."""
        inc = {e: set() for e in self.dims}
        for v, order in self.edge_order.items():
            for e in order:
                inc.setdefault(e, set()).add(v)
        return {e: tuple(sorted(vs)) for e, vs in inc.items()}

    def vertex_edges(self, v):
        """Distinct edges incident to ``v``."""
        return frozenset(self.edge_order[v])

    def rank(self, v):
        return len(self.vertex_edges(v))

    def neighbors(self, v):
        out = set()
        for e in self.vertex_edges(v):
            out.update(self.incidence[e])
        out.discard(v)
        return sorted(out)

    @property
    def open_order(self):
        """Open edges in output-axis order."""
        return tuple(sorted(self.open_edges))

    @property
    def output_shape(self):
        return tuple(self.dims[e] for e in self.open_order)

    def structure_hash(self):
        """Hash of the hypergraph structure, independent of tensor values.

        Networks that differ only in tensor entries (for instance the same
        circuit with different fixed output bits) share a hash, so one
        contraction order can serve all of them.
        """
        payload = {
            "edges": [[e, self.dims[e], e in self.open_edges] for e in self.edges],
            "order": [[v, list(self.edge_order[v])] for v in self.vertices],
        }
        blob = json.dumps(payload, separators=(",", ":")).encode()
        return hashlib.sha256(blob).hexdigest()

    def replace(self, tensors=None, edge_order=None, dims=None, open_edges=None, validate=True):
        return TensorNetwork(
            self.tensors if tensors is None else tensors,
            self.edge_order if edge_order is None else edge_order,
            self.dims if dims is None else dims,
            self.open_edges if open_edges is None else open_edges,
            validate=validate,
        )

    def astype(self, dtype):
        return self.replace(
            tensors={v: t.astype(dtype) for v, t in self.tensors.items()}, validate=False
        )

    def __repr__(self):
        return (
            f"TensorNetwork(|V|={len(self.tensors)}, |E|={len(self.dims)}, "
            f"open={sorted(self.open_edges)})"
        )

    # interchange format

    def to_dict(self):
        return {
            "vertices": [
                {
                    "id": v,
                    "dims": list(self.tensors[v].shape),
                    "data": [
                        [float(z.real), float(z.imag)]
                        for z in np.asarray(self.tensors[v], dtype=complex).ravel()
                    ],
                }
                for v in self.vertices
            ],
            "edges": [
                {
                    "id": e,
                    "dim": self.dims[e],
                    "endpoints": list(self.incidence[e]),
                    "open": e in self.open_edges,
                }
                for e in self.edges
            ],
            "edge_order": {str(v): list(self.edge_order[v]) for v in self.vertices},
        }

    def to_json(self):
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, doc):
        try:
            tensors = {}
            for rec in doc["vertices"]:
                shape = tuple(rec["dims"])
                flat = np.array([complex(re, im) for re, im in rec["data"]], dtype=complex)
                if flat.size != int(np.prod(shape, dtype=np.int64)):
                    raise MalformedNetwork(f"vertex {rec['id']}: data length mismatch")
                tensors[int(rec["id"])] = flat.reshape(shape)
            dims = {int(rec["id"]): int(rec["dim"]) for rec in doc["edges"]}
            open_edges = [int(rec["id"]) for rec in doc["edges"] if rec.get("open")]
            edge_order = {int(v): order for v, order in doc["edge_order"].items()}
        except (KeyError, TypeError) as exc:
            raise MalformedNetwork(f"bad network document: {exc!r}") from exc
        net = cls(tensors, edge_order, dims, open_edges)
        for rec in doc["edges"]:
            if "endpoints" in rec and sorted(rec["endpoints"]) != list(net.incidence[int(rec["id"])]):
                raise MalformedNetwork(f"edge {rec['id']}: endpoints disagree with edge_order")
        return net

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


def feynman_value(net, cap=DEFAULT_FEYNMAN_CAP):
    """Value of ``net`` by explicit summation over every edge assignment.

    Slow on purpose: this is the reference every contraction route is
    checked against.  Raises ``CapExceeded`` when the number of paths
    exceeds ``cap``.
    """
    edges = net.edges
    sizes = [net.dims[e] for e in edges]
    total = 1
    for d in sizes:
        total *= d
    if total > cap:
        raise CapExceeded(f"{total} Feynman paths exceed the cap of {cap}")
    pos = {e: i for i, e in enumerate(edges)}
    open_pos = [pos[e] for e in net.open_order]
    out_shape = net.output_shape
    n_out = int(np.prod(out_shape, dtype=np.int64)) if out_shape else 1
    dtype = np.result_type(complex, *net.tensors.values()) if net.tensors else np.complex128
    acc = np.zeros(n_out, dtype=dtype)
    for lo in range(0, total, _FEYNMAN_CHUNK):
        flat = np.arange(lo, min(lo + _FEYNMAN_CHUNK, total))
        assign = np.unravel_index(flat, sizes) if sizes else ()
        path = np.ones(flat.shape, dtype=dtype)
        for v in net.vertices:
            t = net.tensors[v]
            path = path * t[tuple(assign[pos[e]] for e in net.edge_order[v])]
        if open_pos:
            target = np.ravel_multi_index([assign[i] for i in open_pos], out_shape)
        else:
            target = np.zeros(flat.shape, dtype=np.int64)
        acc += np.bincount(target, weights=path.real, minlength=n_out)
        acc += 1j * np.bincount(target, weights=path.imag, minlength=n_out)
    return acc.reshape(out_shape)


def contract_pair(net, u, v, new_id=None):
    """Replace vertices ``u`` and ``v`` by their pairwise contraction.

    Edges incident to either vertex are summed unless they are open or touch
    a third vertex.  The new tensor's axes follow ascending edge id.
    """
    if u == v:
        raise MalformedNetwork("cannot contract a vertex with itself")
    for w in (u, v):
        if w not in net.tensors:
            raise MalformedNetwork(f"vertex {w} is not in the network")
    if new_id is None:
        new_id = max(net.vertices) + 1
    elif new_id in net.tensors and new_id not in (u, v):
        raise MalformedNetwork(f"vertex id {new_id} already in use")

    pair = {u, v}
    e_ab = net.vertex_edges(u) | net.vertex_edges(v)
    kept = sorted(
        e for e in e_ab
        if e in net.open_edges or any(w not in pair for w in net.incidence[e])
    )
    labels = {e: i for i, e in enumerate(sorted(e_ab))}
    if len(labels) > 52:
        raise MalformedNetwork("pairwise contraction touches more than 52 edges")
    result = np.einsum(
        net.tensors[u], [labels[e] for e in net.edge_order[u]],
        net.tensors[v], [labels[e] for e in net.edge_order[v]],
        [labels[e] for e in kept],
        optimize=True,
    )
    tensors = {w: t for w, t in net.tensors.items() if w not in pair}
    order = {w: o for w, o in net.edge_order.items() if w not in pair}
    tensors[new_id] = np.asarray(result)
    order[new_id] = tuple(kept)
    gone = set(e_ab) - set(kept) - net.open_edges
    dims = {e: d for e, d in net.dims.items() if e not in gone}
    return TensorNetwork(tensors, order, dims, net.open_edges, validate=False)


def _normalize_assignment(edges, assignment):
    edges = sorted(set(edges))
    if isinstance(assignment, Mapping):
        values = [assignment[e] for e in edges]
    else:
        values = list(assignment)
        if len(values) != len(edges):
            raise IndexOutOfRange("assignment length does not match the sliced edge count")
    return dict(zip(edges, (int(x) for x in values)))


def slice_network(net, edges: Iterable[int], assignment):
    """Fix the index of each edge in ``edges`` and drop those edges.

    ``assignment`` is either a mapping edge -> index or a sequence aligned
    with the edges in ascending id order.
    """
    fixed = _normalize_assignment(edges, assignment)
    if not fixed:
        return net
    for e, a in fixed.items():
        if e not in net.dims:
            raise EdgeNotFound(e)
        if e in net.open_edges:
            raise OpenEdgeSliced(f"edge {e} is open")
        if not 0 <= a < net.dims[e]:
            raise IndexOutOfRange(f"index {a} out of range for edge {e} (d={net.dims[e]})")
    tensors = dict(net.tensors)
    order = dict(net.edge_order)
    touched = {w for e in fixed for w in net.incidence[e]}
    for w in touched:
        o = net.edge_order[w]
        index = tuple(fixed[e] if e in fixed else slice(None) for e in o)
        tensors[w] = net.tensors[w][index]
        order[w] = tuple(e for e in o if e not in fixed)
    dims = {e: d for e, d in net.dims.items() if e not in fixed}
    return TensorNetwork(tensors, order, dims, net.open_edges, validate=False)


def simplify(net):
    """Merge vertex pairs whose contraction does not raise the larger rank.

    Absorbs input states, projectors and single-qubit gates into their
    neighbours.  The value is unchanged and the choice of merges depends
    only on structure, so equal-structure networks simplify identically.
    """
    while True:
        merge = _find_cheap_merge(net)
        if merge is None:
            return net
        net = contract_pair(net, *merge)


def _find_cheap_merge(net):
    verts = net.vertices
    if len(verts) < 2:
        return None
    for v in verts:
        ev = net.vertex_edges(v)
        if not ev:
            return v, next(w for w in verts if w != v)
        for w in net.neighbors(v):
            ew = net.vertex_edges(w)
            union = ev | ew
            pair = {v, w}
            kept = sum(
                1 for e in union
                if e in net.open_edges or any(x not in pair for x in net.incidence[e])
            )
            if kept <= max(len(ev), len(ew)):
                return v, w
    return None


def contract_all(net, order=None):
    """Contract the network down to one tensor by sequential pairing.

    ``order`` is a sequence of vertex pairs naming vertices by id, where new
    vertices get ids from ``contract_pair``'s default.  Without an order,
    vertices are absorbed left to right.  Returns the value tensor with axes
    in open-edge order.
    """
    if not net.tensors:
        raise MalformedNetwork("empty network")
    if order is None:
        while len(net.tensors) > 1:
            a, b = net.vertices[:2]
            net = contract_pair(net, a, b)
    else:
        for a, b in order:
            net = contract_pair(net, a, b)
        if len(net.tensors) != 1:
            raise MalformedNetwork("order does not contract to a single vertex")
    (v,) = net.vertices
    return finalize_output(net.tensors[v], net.edge_order[v], net)


def finalize_output(tensor, edges, net):
    """Sum stray closed axes and arrange ``tensor`` over ``net``'s open edges."""
    edges = list(edges)
    tensor = np.asarray(tensor)
    # collapse repeated axes to their diagonal and sum closed ones
    labels = {e: i for i, e in enumerate(dict.fromkeys(edges))}
    out = [e for e in labels if e in net.open_edges]
    tensor = np.einsum(tensor, [labels[e] for e in edges], [labels[e] for e in out])
    missing = [e for e in net.open_order if e not in out]
    if missing:
        tensor = tensor.reshape(tensor.shape + (1,) * len(missing))
        out = out + missing
    perm = [out.index(e) for e in net.open_order]
    tensor = np.transpose(tensor, perm)
    return np.broadcast_to(tensor, net.output_shape).copy() if missing else tensor
