"""Planner benchmark: per-circuit cost of several independent planner runs."""

from __future__ import annotations

import time
from dataclasses import replace

from .circuit import circuit_to_network, generate_random_circuit
from .network import simplify
from .planner import PlannerParams, plan

SUITE_SHAPES = ((3, 4), (4, 4))
SUITE_CYCLES = (6, 8, 10, 12)


def bundled_suite(seed=0, shapes=SUITE_SHAPES, cycles=SUITE_CYCLES):
    """Named random grid circuits used for desk-scale benchmarking."""
    return [
        (f"grid{r}x{c}-m{m}-s{seed}", generate_random_circuit(r, c, m, seed=seed))
        for r, c in shapes
        for m in cycles
    ]


def benchmark_network(circuit, open_qubits=()):
    return simplify(circuit_to_network(circuit, open_qubits))


def bench(circuits, params=None, runs=5):
    """One row per ``(name, circuit)``: per-run ``log2 tc`` and the best scheme's costs."""
    params = replace(params or PlannerParams(), restarts=runs)
    rows = []
    for name, circuit in circuits:
        t0 = time.perf_counter()
        result = plan(benchmark_network(circuit), params)
        cost = result.scheme.costs
        rows.append({
            "circuit": name,
            "runs": [{"log2_tc": r["log2_tc"]} for r in result.runs],
            "best_log2_tc": cost.log2_tc,
            "cw": cost.cw,
            "subtasks": cost.subtasks,
            "wall_s": time.perf_counter() - t0,
        })
    return rows


def format_table(rows):
    """Aligned text rendering of ``bench`` rows."""
    n_runs = max((len(r["runs"]) for r in rows), default=0)
    head = ["circuit"] + [f"run{i + 1}" for i in range(n_runs)] + ["best", "cw", "subtasks", "wall_s"]
    body = []
    for r in rows:
        runs = [f"{x['log2_tc']:.2f}" for x in r["runs"]] + [""] * (n_runs - len(r["runs"]))
        body.append(
            [r["circuit"]] + runs
            + [f"{r['best_log2_tc']:.2f}", str(r["cw"]), str(r["subtasks"]), f"{r['wall_s']:.1f}"]
        )
    widths = [max(len(row[i]) for row in [head] + body) for i in range(len(head))]
    fmt = lambda row: "  ".join(c.ljust(w) if i == 0 else c.rjust(w) for i, (c, w) in enumerate(zip(row, widths)))
    return "\n".join([fmt(head), fmt(["-" * w for w in widths])] + [fmt(row) for row in body])
