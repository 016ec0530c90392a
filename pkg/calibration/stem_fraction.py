"""Stem share of total tc on the 4x4 benchmark grids (m in {8, 10, 12}, seeds 0-9)."""

import numpy as np

from stemtn.bench import benchmark_network
from stemtn.circuit import generate_random_circuit
from stemtn.planner import PlannerParams, plan
from stemtn.tree import extract_stem


def stem_fractions(cycles=(8, 10, 12), seeds=range(10)):
    out = []
    for m in cycles:
        for s in seeds:
            net = benchmark_network(generate_random_circuit(4, 4, m, seed=s))
            scheme = plan(net, PlannerParams(restarts=1, seed=s)).scheme
            out.append((m, s, extract_stem(scheme.tree).fraction))
    return out


if __name__ == "__main__":
    rows = stem_fractions()
    for m, s, f in rows:
        print(f"m={m:2d} seed={s}  fraction={f:.3f}")
    fr = np.array([f for _, _, f in rows])
    print(f"min {fr.min():.3f}  10th percentile {np.quantile(fr, 0.1):.3f}  median {np.median(fr):.3f}")
