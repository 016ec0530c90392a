import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import all_nested, random_network, random_tree
from stemtn.circuit import circuit_to_network, generate_random_circuit
from stemtn.errors import Stuck
from stemtn.network import simplify
from stemtn.planner import (
    PlannerParams,
    build_tree_by_decomposition,
    derive_seed,
    dynamic_slice,
    greedy_merge,
    greedy_tree,
    local_optimize,
    optimal_merge,
    optimize_params,
    plan,
    random_greedy_costs,
)
from stemtn.tree import ContractionTree, TreeContext, scheme_costs, serialize_scheme


def fast(**kw):
    base = dict(cma_iters=6, restarts=1, local_pre=5, local_mid=5, local_post=5, target_cw=30)
    base.update(kw)
    return PlannerParams(**base)


def circuit_net(rows=3, cols=3, cycles=4, seed=0, open_qubits=()):
    c = generate_random_circuit(rows, cols, cycles, seed=seed)
    return simplify(circuit_to_network(c, open_qubits=open_qubits))


def brute_force(ctx, max_cw=None):
    best = None
    for nested in all_nested(ctx.leaves):
        tree = ContractionTree.from_nested(ctx, nested)
        if max_cw is not None and any(
            ctx.width(tree.out_mask(u)) > max_cw for u in tree.internal_nodes if u != tree.root
        ):
            continue
        best = tree.tc if best is None else min(best, tree.tc)
    return best


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10**6), nv=st.integers(2, 6))
def test_optimal_merge_matches_brute_force(seed, nv):
    rng = np.random.default_rng(seed)
    net = random_network(rng, nv, 6, max_dim=3, n_open=int(rng.integers(0, 2)))
    ctx = TreeContext.from_network(net)
    cost, nested = optimal_merge(ctx, list(ctx.leaf_masks), ctx.open_mask)
    assert cost == brute_force(ctx)
    labelled = _relabel(nested, ctx.leaves)
    assert ContractionTree.from_nested(ctx, labelled).tc == cost


def _relabel(nested, labels):
    if isinstance(nested, tuple):
        return tuple(_relabel(x, labels) for x in nested)
    return labels[nested]


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10**6), w=st.integers(1, 4))
def test_width_capped_merge_matches_brute_force(seed, w):
    rng = np.random.default_rng(seed)
    net = random_network(rng, 5, 6, bond2=True, n_open=1)
    ctx = TreeContext.from_network(net)
    found = optimal_merge(ctx, list(ctx.leaf_masks), ctx.open_mask, max_width=w)
    expect = brute_force(ctx, max_cw=w)
    if expect is None:
        assert found is None
    else:
        assert found[0] == expect


def test_single_input_merge_is_free():
    net = random_network(np.random.default_rng(0), 1, 2, n_open=0)
    ctx = TreeContext.from_network(net)
    assert optimal_merge(ctx, list(ctx.leaf_masks), 0) == (0, 0)


def test_greedy_merge_is_valid_and_deterministic(rng):
    net = random_network(rng, 9, 10, bond2=True)
    ctx = TreeContext.from_network(net)
    a = greedy_merge(ctx, list(ctx.leaf_masks), ctx.open_mask)
    b = greedy_merge(ctx, list(ctx.leaf_masks), ctx.open_mask)
    assert a == b
    tree = ContractionTree.from_nested(ctx, _relabel(a[1], ctx.leaves))
    assert tree.tc == a[0]
    assert greedy_tree(net).tc == a[0]


def test_random_greedy_costs_are_seeded():
    net = circuit_net()
    a = random_greedy_costs(net, 20, seed=3)
    assert a == random_greedy_costs(net, 20, seed=3)
    assert len(a) == 20
    assert min(a) <= greedy_tree(net).log2_tc + 3


def test_decomposition_tree_is_valid_and_seeded():
    net = circuit_net(3, 4, 8)
    params = PlannerParams(K=3, eps=0.2, eps_prime=0.5, N=10)
    a = build_tree_by_decomposition(net, params, seed=5)
    b = build_tree_by_decomposition(net, params, seed=5)
    assert a == b
    assert sorted(a.leaves_under(a.root)) == list(range(len(net.vertices)))


def test_decomposition_competes_with_greedy():
    net = circuit_net(4, 4, 10)
    best = min(
        build_tree_by_decomposition(net, PlannerParams(K=k, N=n), seed=s).log2_tc
        for k in (2, 3, 4) for n in (10, 25) for s in range(3)
    )
    assert best <= greedy_tree(net).log2_tc + 1


def test_zero_iterations_use_given_params():
    net = circuit_net(3, 4, 6)
    params = fast(cma_iters=0, K=4, eps=0.3)
    tree, used = optimize_params(net, params)
    assert used == params
    assert tree == build_tree_by_decomposition(net, params)


def test_cma_trace_is_monotone():
    net = circuit_net(3, 4, 8)
    trace = []
    tree, used = optimize_params(net, fast(cma_iters=12, restarts=2), trace)
    assert len(trace) == 24
    best = [t[3] for t in trace]
    assert all(b2 <= b1 for b1, b2 in zip(best, best[1:]))
    assert tree.log2_tc == pytest.approx(best[-1])
    assert min(t[2] for t in trace) == pytest.approx(best[-1])
    assert 2 <= used.K
    assert 0 < used.eps < 1 and 0 < used.eps_prime < 1


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10**6))
def test_local_optimize_only_improves(seed):
    rng = np.random.default_rng(seed)
    net = random_network(rng, 12, 12, bond2=True, n_open=1)
    tree = random_tree(rng, net)
    log = []
    out = local_optimize(tree, window=6, iterations=15, seed=seed, log=log)
    assert out.tc <= tree.tc
    for old_w, new_w, old_tc, new_tc in log:
        assert new_w < old_w
        assert new_tc < old_tc
        assert old_tc - new_tc == old_w - new_w
    if log:
        assert log[-1][3] == out.tc
    else:
        assert out == tree


def test_local_optimize_respects_width_cap(rng):
    for _ in range(10):
        net = random_network(rng, 10, 12, bond2=True, n_open=1)
        tree = random_tree(rng, net)
        out = local_optimize(tree, window=6, iterations=10, max_cw=tree.cw)
        assert out.cw <= tree.cw


def test_window_covering_everything_reaches_optimum(rng):
    for _ in range(5):
        net = random_network(rng, 6, 6, bond2=True, n_open=1)
        ctx = TreeContext.from_network(net)
        tree = random_tree(rng, net)
        out = local_optimize(tree, window=8, iterations=3, stem_bias=1.0)
        assert out.tc == brute_force(ctx)
        again = local_optimize(out, window=8, iterations=3)
        assert again == out


def test_slicing_reaches_target():
    net = circuit_net(4, 4, 10)
    tree = build_tree_by_decomposition(net, PlannerParams(), seed=1)
    log = []
    scheme = dynamic_slice(net, tree, tree.cw - 3, local_iters=5, log=log)
    cost = scheme_costs(scheme)
    assert cost.cw <= tree.cw - 3
    assert len(log) == len(scheme.sliced_edges) >= 1
    assert cost.subtasks == 2 ** len(scheme.sliced_edges)
    assert set(r["edge"] for r in log) == set(scheme.sliced_edges)


def test_slicing_noop_when_narrow_enough():
    net = circuit_net()
    tree = build_tree_by_decomposition(net)
    scheme = dynamic_slice(net, tree, tree.cw)
    assert tuple(scheme.sliced_edges) == ()
    assert scheme.tree == tree


def test_slicing_stuck_on_open_edges():
    net = circuit_net(2, 3, 2, open_qubits=range(6))
    tree = build_tree_by_decomposition(net)
    with pytest.raises(Stuck) as info:
        dynamic_slice(net, tree, 2)
    assert info.value.cw > 2
    assert info.value.scheme is not None


def test_plan_is_deterministic():
    net = circuit_net(3, 4, 8)
    params = fast(restarts=2, target_cw=5)
    a = plan(net, params)
    b = plan(net, params)
    assert serialize_scheme(a.scheme) == serialize_scheme(b.scheme)
    assert len(a.runs) == 2
    best = min(r["log2_tc"] for r in a.runs)
    assert scheme_costs(a.scheme).log2_tc == pytest.approx(best)
    assert scheme_costs(a.scheme).cw <= 5
    assert a.scheme.params["seeds"][0] == params.seed


def test_params_round_trip():
    p = PlannerParams(K=4, eps=0.1)
    assert PlannerParams.from_dict(p.to_dict()) == p
    with pytest.raises(ValueError):
        PlannerParams.from_dict({"bogus": 1})


def test_derive_seed_is_stable():
    assert derive_seed(1, 2) == derive_seed(1, 2)
    assert derive_seed(1, 2) != derive_seed(2, 1)
    assert 0 <= derive_seed(0) < 2**63
