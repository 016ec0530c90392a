"""Brute-force state-vector simulation, used as the reference for small circuits.

Axis ``q`` of the state tensor is qubit ``q``; nothing here touches the
tensor-network code.
"""

import numpy as np


def _apply(state, matrix, qubits):
    k = len(qubits)
    gate = matrix.reshape((2,) * (2 * k))
    # contract gate inputs with the state's qubit axes, then move outputs back
    out = np.tensordot(gate, state, axes=(list(range(k, 2 * k)), list(qubits)))
    return np.moveaxis(out, list(range(k)), list(qubits))


def final_state(circuit):
    """Output state of ``circuit`` on input |0...0>, shape ``(2,) * n``."""
    n = circuit.n_qubits
    state = np.zeros((2,) * n, dtype=complex)
    state[(0,) * n] = 1.0
    for g in circuit.gates:
        state = _apply(state, g.matrix, g.qubits)
    return state


def probabilities(circuit):
    """Output distribution as a flat array; index bit ``n-1-q`` is qubit ``q``."""
    return np.abs(final_state(circuit).ravel()) ** 2


def batch_amplitudes(circuit, open_qubits, fixed_bits=None):
    """Amplitudes over the open qubits with the others fixed.

    Axis order matches ``circuit_to_network``: ascending open qubit.
    """
    state = final_state(circuit)
    open_qubits = sorted(open_qubits)
    closed = [q for q in range(circuit.n_qubits) if q not in open_qubits]
    if fixed_bits is None:
        fixed_bits = [0] * len(closed)
    if isinstance(fixed_bits, dict):
        bits = fixed_bits
    else:
        bits = dict(zip(closed, fixed_bits))
    index = tuple(slice(None) if q in open_qubits else bits[q] for q in range(circuit.n_qubits))
    return state[index]


def bitstring_index(bits):
    """Flat index of a bit sequence (qubit 0 first) in ``probabilities`` order."""
    out = 0
    for b in bits:
        out = (out << 1) | int(b)
    return out
