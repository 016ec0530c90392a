"""Frugal rejection sampling, XEB and Porter-Thomas diagnostics."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .circuit import batch_qubit_selector, circuit_to_network
from .errors import EmptySamples
from .network import simplify
from .planner import PlannerParams, plan
from .runtime import compile_scheme, run_scheme
from .tree import ContractionScheme

__all__ = [
    "AmplitudeSource",
    "SampleReport",
    "PorterThomasCheck",
    "acceptance_probability",
    "batch_qubit_selector",
    "default_open_qubits",
    "frugal_sample",
    "porter_thomas_check",
    "total_variation",
    "xeb",
]


class AmplitudeSource:
    """Batch amplitudes of one circuit through the planner and runtime.

    One scheme is planned for the open-qubit batch with closed bits all 0;
    every other choice of closed bits has the same network structure and
    reuses it.  Results are memoized per closed-bit tuple.
    """

    def __init__(self, circuit, open_qubits, scheme_provider=None, params=None,
                 precision="double", merge_min_dim=32):
        self.circuit = circuit
        self.open_qubits = sorted(int(q) for q in open_qubits)
        self.closed = [q for q in range(circuit.n_qubits) if q not in self.open_qubits]
        template = self._network((0,) * len(self.closed))
        if isinstance(scheme_provider, ContractionScheme):
            scheme = scheme_provider
        elif callable(scheme_provider):
            scheme = scheme_provider(template)
        else:
            scheme = plan(template, params or PlannerParams(restarts=1)).scheme
        self.scheme = scheme
        self.plan = compile_scheme(template, scheme, merge_min_dim, precision)
        self.cache = {}

    def _network(self, bits):
        return simplify(circuit_to_network(self.circuit, self.open_qubits, list(bits)))

    def __call__(self, bits):
        bits = tuple(int(b) for b in bits)
        if bits not in self.cache:
            net = self._network(bits)
            value, _ = run_scheme(net, self.plan)
            self.cache[bits] = np.asarray(value, dtype=np.complex128)
        return self.cache[bits]


def default_open_qubits(circuit, size=6):
    size = min(size, circuit.n_qubits)
    if circuit.layout is None or circuit.layout.n_qubits != circuit.n_qubits:
        return tuple(range(size))
    return batch_qubit_selector(circuit.layout, circuit.cycles, size=size)


def acceptance_probability(p, n, R=10.0):
    """``min(1, p * 2^n / R)``."""
    return np.minimum(1.0, np.asarray(p, dtype=float) * 2.0**n / R)


def _bitstring(n, closed, closed_bits, open_qubits, open_index):
    bits = [0] * n
    for q, b in zip(closed, closed_bits):
        bits[q] = b
    k = len(open_qubits)
    for pos, q in enumerate(open_qubits):
        bits[q] = (open_index >> (k - 1 - pos)) & 1
    return "".join(str(b) for b in bits)


@dataclass
class SampleReport:
    samples: list
    probs: list
    xeb: float
    xeb_stderr: float
    accepted: int
    attempted: int
    batches: int
    R: float
    seed: int
    open_qubits: list
    pt_histogram: dict = field(default_factory=dict)

    @property
    def acceptance_rate(self):
        return self.accepted / self.attempted if self.attempted else 0.0

    def to_dict(self):
        return {
            "samples": self.samples,
            "probs": self.probs,
            "xeb": self.xeb,
            "xeb_stderr": self.xeb_stderr,
            "accepted": self.accepted,
            "attempted": self.attempted,
            "acceptance_rate": self.acceptance_rate,
            "batches": self.batches,
            "R": self.R,
            "seed": self.seed,
            "open_qubits": self.open_qubits,
            "pt_histogram": self.pt_histogram,
        }


def frugal_sample(circuit, scheme_provider=None, open_qubits=None, batches=None, seed=0,
                  R=10.0, first_only=False, samples=None, source=None, params=None):
    """Draw output bitstrings by frugal rejection sampling.

    Each batch redraws the closed qubits' bits uniformly, evaluates all
    ``2^|open|`` amplitudes at once, then visits the open assignments in
    random order and accepts ``x`` with probability ``min(1, p(x) 2^n / R)``.
    ``first_only`` stops a batch at its first acceptance.  Sampling ends
    after ``batches`` batches or once ``samples`` bitstrings are accepted,
    whichever is given (both: whichever comes first).

    ``source`` overrides the amplitude provider (a callable from closed
    bits to the batch amplitude tensor).
    """
    if batches is None and samples is None:
        raise ValueError("give batches or samples")
    n = circuit.n_qubits
    if open_qubits is None:
        open_qubits = default_open_qubits(circuit)
    open_qubits = sorted(int(q) for q in open_qubits)
    if source is None:
        source = AmplitudeSource(circuit, open_qubits, scheme_provider, params)
    closed = [q for q in range(n) if q not in open_qubits]
    k = len(open_qubits)
    rng = np.random.default_rng(seed)
    out, probs = [], []
    attempted = done = 0
    while (batches is None or done < batches) and (samples is None or len(out) < samples):
        cbits = tuple(int(b) for b in rng.integers(0, 2, size=len(closed)))
        amps = np.asarray(source(cbits)).reshape(-1)
        p = np.abs(amps) ** 2
        accept = acceptance_probability(p, n, R)
        for x in rng.permutation(1 << k):
            attempted += 1
            if rng.random() < accept[x]:
                out.append(_bitstring(n, closed, cbits, open_qubits, int(x)))
                probs.append(float(p[x]))
                if first_only or (samples is not None and len(out) >= samples):
                    break
        done += 1
    if probs:
        value, err = _xeb_values(np.array(probs), n)
        u = np.array(probs) * 2.0**n
        hist, edges = np.histogram(u, bins=20, range=(0.0, max(10.0, float(u.max()))), density=True)
        pt = {"density": hist.tolist(), "edges": edges.tolist()}
    else:
        value, err, pt = float("nan"), float("nan"), {}
    return SampleReport(out, probs, value, err, len(out), attempted, done, R, seed,
                        open_qubits, pt)


def _xeb_values(p, n):
    v = p * 2.0**n
    m = len(v)
    err = float(np.std(v, ddof=1) / np.sqrt(m)) if m > 1 else 0.0
    return float(v.mean() - 1.0), err


def xeb(samples, prob_fn, n):
    """Linear cross-entropy fidelity ``2^n <p(x)> - 1`` and its standard error."""
    samples = list(samples)
    if not samples:
        raise EmptySamples("no samples to score")
    p = np.array([float(prob_fn(s)) for s in samples])
    return _xeb_values(p, n)


@dataclass
class PorterThomasCheck:
    histogram: list
    bin_edges: list
    ks_statistic: float
    degenerate: bool


def porter_thomas_check(probs, n_states, bins=40):
    """Compare ``u = N p`` with the exponential law ``e^{-u}``.

    ``degenerate`` flags inputs where every probability is equal (the KS
    statistic is then that of a point mass).
    """
    u = np.asarray(probs, dtype=float) * n_states
    ks = float(stats.kstest(u, "expon").statistic)
    hist, edges = np.histogram(u, bins=bins, range=(0.0, max(8.0, float(u.max()))), density=True)
    degenerate = bool(np.ptp(u) <= 1e-12 * max(1.0, float(np.abs(u).max())))
    return PorterThomasCheck(hist.tolist(), edges.tolist(), ks, degenerate)


def total_variation(samples, exact_probs, n):
    """TV distance between the empirical distribution of bitstrings and ``exact_probs``.

    ``exact_probs`` is indexed with qubit 0 as the most significant bit.
    """
    counts = np.zeros(1 << n)
    for s in samples:
        counts[int(s, 2)] += 1
    return 0.5 * float(np.abs(counts / counts.sum() - np.asarray(exact_probs)).sum())
