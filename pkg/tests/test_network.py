import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_network, relative_error
from stemtn.errors import (
    CapExceeded,
    EdgeNotFound,
    IndexOutOfRange,
    MalformedNetwork,
    OpenEdgeSliced,
)
from stemtn.network import (
    TensorNetwork,
    contract_all,
    contract_pair,
    feynman_value,
    simplify,
    slice_network,
)


def test_scalar_pair():
    net = TensorNetwork({0: np.array([1.0, 2.0]), 1: np.array([3.0, 4.0])}, {0: [0], 1: [0]}, {0: 2})
    assert feynman_value(net) == pytest.approx(11.0)
    assert contract_all(net) == pytest.approx(11.0)


def test_hyperedge_three_way_sum():
    # one edge shared by three vectors: sum_i a_i b_i c_i
    a, b, c = np.array([1, 2]), np.array([3, 5]), np.array([7, 11])
    net = TensorNetwork({0: a, 1: b, 2: c}, {0: [0], 1: [0], 2: [0]}, {0: 2})
    assert feynman_value(net) == pytest.approx(1 * 3 * 7 + 2 * 5 * 11)
    assert contract_all(net) == pytest.approx(131)


def test_open_edge_matrix_product():
    rng = np.random.default_rng(0)
    a, b = rng.normal(size=(2, 3)), rng.normal(size=(3, 4))
    net = TensorNetwork({0: a, 1: b}, {0: [0, 1], 1: [1, 2]}, {0: 2, 1: 3, 2: 4}, open_edges=[0, 2])
    np.testing.assert_allclose(feynman_value(net), a @ b, atol=1e-12)
    np.testing.assert_allclose(contract_all(net), a @ b, atol=1e-12)


def test_repeated_axis_is_a_diagonal():
    m = np.arange(9.0).reshape(3, 3)
    net = TensorNetwork({0: m}, {0: [0, 0]}, {0: 3})
    assert feynman_value(net) == pytest.approx(np.trace(m))
    assert contract_all(net) == pytest.approx(np.trace(m))


def test_open_edge_without_vertices_broadcasts():
    net = TensorNetwork({0: np.array([2.0, 3.0])}, {0: [0]}, {0: 2, 1: 2}, open_edges=[1])
    np.testing.assert_allclose(feynman_value(net), [5.0, 5.0])
    np.testing.assert_allclose(contract_all(net), [5.0, 5.0])


def test_validation_errors():
    with pytest.raises(MalformedNetwork):
        TensorNetwork({0: np.ones(2)}, {0: [0]}, {0: 3})
    with pytest.raises(MalformedNetwork):
        TensorNetwork({0: np.ones(2)}, {0: [5]}, {0: 2})
    with pytest.raises(MalformedNetwork):
        TensorNetwork({0: np.ones(2)}, {0: [0]}, {0: 2, 1: 2})
    with pytest.raises(MalformedNetwork):
        TensorNetwork({0: np.ones((2, 2))}, {0: [0]}, {0: 2})


def test_feynman_cap():
    net = TensorNetwork({0: np.ones((2,) * 10)}, {0: list(range(10))}, {e: 2 for e in range(10)})
    with pytest.raises(CapExceeded):
        feynman_value(net, cap=512)
    assert feynman_value(net) == pytest.approx(1024)


def test_contract_pair_reduces_vertex_count(rng):
    net = random_network(rng, 5, 6)
    out = contract_pair(net, 0, 1)
    assert len(out.tensors) == 4
    assert max(net.vertices) + 1 in out.tensors
    np.testing.assert_allclose(feynman_value(out), feynman_value(net), rtol=1e-10, atol=1e-10)
    with pytest.raises(MalformedNetwork):
        contract_pair(net, 0, 0)
    with pytest.raises(MalformedNetwork):
        contract_pair(net, 0, 99)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10**6), nv=st.integers(2, 6), ne=st.integers(1, 7))
def test_contract_all_matches_feynman(seed, nv, ne):
    rng = np.random.default_rng(seed)
    net = random_network(rng, nv, ne, n_open=int(rng.integers(0, 3)))
    # random pairing order
    order, verts, nxt = [], list(net.vertices), max(net.vertices) + 1
    while len(verts) > 1:
        i, j = rng.choice(len(verts), size=2, replace=False)
        a, b = verts[i], verts[j]
        order.append((a, b))
        verts = [v for v in verts if v not in (a, b)] + [nxt]
        nxt += 1
    got = contract_all(net, order)
    assert relative_error(got, feynman_value(net)) < 1e-10


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10**6), k=st.integers(1, 4))
def test_slicing_sum_identity(seed, k):
    rng = np.random.default_rng(seed)
    net = random_network(rng, 5, 7, n_open=1)
    closed = [e for e in net.edges if e not in net.open_edges]
    edges = sorted(rng.choice(closed, size=min(k, len(closed)), replace=False).tolist())
    total = 0
    for assignment in np.ndindex(*[net.dims[e] for e in edges]):
        total = total + feynman_value(slice_network(net, edges, assignment))
    assert relative_error(total, feynman_value(net)) < 1e-10


def test_slice_errors(rng):
    net = random_network(rng, 4, 5, n_open=1)
    (open_edge,) = net.open_edges
    closed = next(e for e in net.edges if e not in net.open_edges and net.dims[e] > 1)
    with pytest.raises(OpenEdgeSliced):
        slice_network(net, [open_edge], [0])
    with pytest.raises(EdgeNotFound):
        slice_network(net, [999], [0])
    with pytest.raises(IndexOutOfRange):
        slice_network(net, [closed], [net.dims[closed]])
    assert slice_network(net, [], []) is net


def test_slice_mapping_and_sequence_agree(rng):
    net = random_network(rng, 4, 6, n_open=0)
    edges = [e for e in net.edges][:2]
    a = slice_network(net, edges, [0, 0])
    b = slice_network(net, edges, {edges[1]: 0, edges[0]: 0})
    assert feynman_value(a) == pytest.approx(feynman_value(b))


def test_json_round_trip(rng):
    net = random_network(rng, 4, 5, n_open=2)
    back = TensorNetwork.from_json(net.to_json())
    assert back.structure_hash() == net.structure_hash()
    for v in net.vertices:
        assert np.array_equal(back.tensors[v], net.tensors[v])
    assert back.open_edges == net.open_edges


def test_structure_hash_ignores_values(rng):
    net = random_network(rng, 4, 5)
    other = net.replace(tensors={v: 2 * t for v, t in net.tensors.items()})
    assert net.structure_hash() == other.structure_hash()
    moved = net.replace(open_edges=[])
    assert moved.structure_hash() != net.structure_hash()


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10**6))
def test_simplify_preserves_value(seed):
    rng = np.random.default_rng(seed)
    net = random_network(rng, 6, 6, n_open=1)
    small = simplify(net)
    assert len(small.tensors) <= len(net.tensors)
    assert relative_error(feynman_value(small), feynman_value(net)) < 1e-10
