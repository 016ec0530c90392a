"""KS distance to the exponential law for 10-qubit grid circuits at several depths."""

import numpy as np

from stemtn.circuit import generate_random_circuit
from stemtn.sampler import porter_thomas_check
from stemtn.statevector import probabilities


def ks_values(cycles, seeds=range(20)):
    return np.array([
        porter_thomas_check(probabilities(generate_random_circuit(2, 5, cycles, seed=s)).reshape(-1), 1024).ks_statistic
        for s in seeds
    ])


if __name__ == "__main__":
    for m in (1, 2, 4, 6, 8, 10, 12):
        ks = ks_values(m)
        print(f"m={m:2d}  min {ks.min():.4f}  median {np.median(ks):.4f}  max {ks.max():.4f}")
