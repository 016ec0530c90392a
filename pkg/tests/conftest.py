import itertools

import numpy as np
import pytest

from stemtn.network import TensorNetwork
from stemtn.tree import TreeContext, ContractionTree


def random_network(rng, n_vertices=5, n_edges=7, max_dim=3, n_open=1, bond2=False):
    """Connected-ish random hypergraph network with complex entries."""
    incidence = {}
    for e in range(n_edges):
        k = int(rng.integers(1, 4))
        incidence[e] = sorted(set(int(v) for v in rng.integers(0, n_vertices, size=k)))
    # chain edges keep every vertex attached
    for v in range(n_vertices - 1):
        incidence[n_edges + v] = [v, v + 1]
    order = {v: [] for v in range(n_vertices)}
    for e, vs in incidence.items():
        for v in vs:
            order[v].append(e)
    for v in order:
        rng.shuffle(order[v])
    dims = {e: 2 if bond2 else int(rng.integers(1, max_dim + 1)) for e in incidence}
    open_edges = [int(e) for e in rng.choice(n_edges, size=min(n_open, n_edges), replace=False)]
    tensors = {}
    for v, o in order.items():
        shape = tuple(dims[e] for e in o)
        tensors[v] = rng.normal(size=shape) + 1j * rng.normal(size=shape)
    return TensorNetwork(tensors, order, dims, open_edges)


def random_nested(rng, items):
    """Uniformly random merge sequence over ``items`` as nested tuples."""
    items = list(items)
    while len(items) > 1:
        i, j = sorted(rng.choice(len(items), size=2, replace=False))
        b = items.pop(j)
        a = items.pop(i)
        items.append((a, b))
    return items[0]


def random_tree(rng, net):
    ctx = TreeContext.from_network(net)
    return ContractionTree.from_nested(ctx, random_nested(rng, ctx.leaves))


def all_nested(items):
    """Every binary tree over ``items`` (the brute-force oracle for small windows)."""
    items = tuple(items)
    if len(items) == 1:
        yield items[0]
        return
    first, rest = items[0], items[1:]
    # split: the part containing the first item versus the rest
    for r in range(0, len(rest)):
        for combo in itertools.combinations(rest, r):
            left = (first,) + combo
            right = tuple(x for x in rest if x not in combo)
            for a in all_nested(left):
                for b in all_nested(right):
                    yield (a, b)


def relative_error(a, b):
    a, b = np.asarray(a), np.asarray(b)
    scale = max(np.abs(b).max(), 1e-300)
    return float(np.abs(a - b).max() / scale)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# acceptance criteria append (number, passed, detail); printed after the run
ACCEPTANCE = []


def record_criterion(number, passed, detail):
    line = f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}"
    ACCEPTANCE.append((number, line))
    print(line)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(ACCEPTANCE):
        terminalreporter.write_line(line)
