"""Sycamore-style random circuits: gates, layouts, file format, compilation.

A circuit with ``m`` cycles is ``m`` repetitions of (single-qubit layer,
two-qubit layer) followed by one more single-qubit layer before
measurement.  Two-qubit layers follow the coupler patterns
``A B C D C D A B`` repeated every eight cycles.

Random gate choices come from a counter-based generator so that a circuit
is reproducible from its seed alone: for qubit ``q`` in single-qubit layer
``k`` we key Philox4x64-10 with ``(seed, q << 32 | k)``, take the first
64-bit output ``u`` at counter zero, and pick ``("sx", "sy", "sw")[u % 3]``
in the first layer, or ``others[u % 2]`` afterwards, where ``others`` lists
the two gates different from the qubit's previous one in that same order.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass

import numpy as np

from .errors import (
    CircuitSyntaxError,
    InvariantViolation,
    LayoutTooSmall,
    MissingParams,
    QubitCoverage,
)
from .network import TensorNetwork

PATTERN_SEQUENCE = "ABCDCDAB"
SINGLE_QUBIT_KINDS = ("sx", "sy", "sw")
DEFAULT_FSIM = (math.pi / 2, math.pi / 6)

_S = 1 / math.sqrt(2)
_SQRT_X = _S * np.array([[1, -1j], [-1j, 1]], dtype=complex)
_SQRT_Y = _S * np.array([[1, -1], [1, 1]], dtype=complex)
_SQRT_W = _S * np.array(
    [[1, -np.exp(1j * math.pi / 4)], [np.exp(-1j * math.pi / 4), 1]], dtype=complex
)
_FIXED = {"sx": _SQRT_X, "sy": _SQRT_Y, "sw": _SQRT_W}


def fsim(theta, phi):
    c, s = math.cos(theta), math.sin(theta)
    return np.array(
        [
            [1, 0, 0, 0],
            [0, c, -1j * s, 0],
            [0, -1j * s, c, 0],
            [0, 0, 0, np.exp(-1j * phi)],
        ],
        dtype=complex,
    )


def gate_matrix(kind, theta=None, phi=None):
    """Matrix of a named gate.  ``theta`` and ``phi`` are required for fSim only."""
    has_params = theta is not None or phi is not None
    if kind == "fsim":
        if theta is None or phi is None:
            raise MissingParams("fsim needs both theta and phi")
        return fsim(theta, phi)
    if has_params:
        raise MissingParams(f"{kind} takes no parameters")
    if kind not in _FIXED:
        raise ValueError(f"unknown gate kind {kind!r}")
    return _FIXED[kind].copy()


@dataclass(frozen=True)
class Gate:
    """One gate.  ``kind`` is sx, sy, sw, fsim or custom.

    Custom unitaries carry their matrix as a row-major tuple of complex
    entries (4 or 16 of them).  For two-qubit gates the first listed qubit
    is the more significant bit of the matrix index.
    """

    kind: str
    qubits: tuple
    params: tuple = ()
    custom: tuple = ()

    @property
    def matrix(self):
        if self.kind == "custom":
            k = 2 ** len(self.qubits)
            return np.array(self.custom, dtype=complex).reshape(k, k)
        return gate_matrix(self.kind, *self.params)

    def __post_init__(self):
        object.__setattr__(self, "qubits", tuple(int(q) for q in self.qubits))
        object.__setattr__(self, "params", tuple(float(p) for p in self.params))
        object.__setattr__(self, "custom", tuple(complex(z) for z in self.custom))
        if self.kind == "custom" and len(self.custom) != 4 ** len(self.qubits):
            raise ValueError("custom matrix size does not match qubit count")


# layouts


@dataclass(frozen=True)
class Layout:
    """Named qubit placement; ``coords[q]`` is the (row, col) of qubit ``q``."""

    name: str
    coords: tuple = ()

    @property
    def n_qubits(self):
        return len(self.coords)

    def couplers(self):
        """Nearest-neighbour pairs grouped by pattern label.

        Vertical couplers ``(r, c)-(r+1, c)`` go to A when ``r + c`` is even
        and B otherwise; horizontal couplers ``(r, c)-(r, c+1)`` go to D when
        ``r + c`` is even and C otherwise.  Each class is a matching, and
        together they tile the grid like the four diagonal families of the
        Sycamore coupler map.
        """
        where = {tuple(rc): q for q, rc in enumerate(self.coords)}
        out = {k: [] for k in "ABCD"}
        for q, (r, c) in enumerate(self.coords):
            down = where.get((r + 1, c))
            if down is not None:
                out["A" if (r + c) % 2 == 0 else "B"].append((q, down))
            right = where.get((r, c + 1))
            if right is not None:
                out["D" if (r + c) % 2 == 0 else "C"].append((q, right))
        return {k: sorted(tuple(sorted(p)) for p in v) for k, v in out.items()}

    def header_token(self):
        if self.name:
            return self.name
        return "coords:" + ";".join(f"{r},{c}" for r, c in self.coords)


def grid_layout(rows, cols):
    if rows < 1 or cols < 1:
        raise ValueError("grid needs at least one row and one column")
    coords = tuple((r, c) for r in range(rows) for c in range(cols))
    return Layout(f"grid-{rows}x{cols}", coords)


# Diamond-shaped 54-site lattice with the bottom tip removed, numbered row
# by row.  Site geometry follows the published device diagram; the removed
# site is our choice.
_SYCAMORE_ROWS = (
    "-----AB---",
    "----ABCD--",
    "---ABCDEF-",
    "--ABCDEFGH",
    "-ABCDEFGHI",
    "ABCDEFGHI-",
    "-CDEFGHI--",
    "--EFGHI---",
    "---GHI----",
)


def sycamore_layout():
    coords = tuple(
        (r, c) for r, row in enumerate(_SYCAMORE_ROWS) for c, ch in enumerate(row) if ch != "-"
    )
    return Layout("sycamore53", coords)


def layout_from_token(token, n_qubits=None):
    if token == "sycamore53":
        return sycamore_layout()
    m = re.fullmatch(r"grid-(\d+)x(\d+)", token)
    if m:
        return grid_layout(int(m.group(1)), int(m.group(2)))
    if token.startswith("coords:"):
        body = token[len("coords:"):]
        coords = tuple(tuple(int(x) for x in rc.split(",")) for rc in body.split(";") if rc)
        return Layout("", coords)
    if token == "none":
        return Layout("none", ())
    raise ValueError(f"unknown layout {token!r}")


# circuits


@dataclass(frozen=True)
class Circuit:
    """Gate layers over ``n_qubits`` qubits.

    ``single_layers`` has ``cycles + 1`` entries and ``two_layers`` has
    ``cycles``; the last single-qubit layer precedes measurement.
    """

    n_qubits: int
    single_layers: tuple
    two_layers: tuple
    layout: Layout = Layout("none", ())

    @property
    def cycles(self):
        return len(self.two_layers)

    @property
    def final_layer(self):
        return self.single_layers[-1]

    @property
    def layers(self):
        """All layers in time order as ``(kind, label, gates)`` triples."""
        out = []
        for k, layer in enumerate(self.single_layers):
            out.append(("single", None, layer))
            if k < self.cycles:
                out.append(("two", PATTERN_SEQUENCE[k % 8], self.two_layers[k]))
        return out

    @property
    def gates(self):
        return [g for _, _, layer in self.layers for g in layer]

    def check(self):
        """Raise ``InvariantViolation`` unless the layer structure is valid."""
        if len(self.single_layers) != len(self.two_layers) + 1:
            raise InvariantViolation("circuit must end with a single-qubit layer")
        for k, layer in enumerate(self.single_layers):
            seen = [g.qubits[0] for g in layer]
            for g in layer:
                if len(g.qubits) != 1:
                    raise InvariantViolation("two-qubit gate in a single-qubit layer", cycle=k)
            missing = sorted(set(range(self.n_qubits)) - set(seen))
            if missing:
                raise InvariantViolation(
                    f"cycle {k}: qubit {missing[0]} has no single-qubit gate",
                    qubit=missing[0], cycle=k,
                )
            if len(seen) != len(set(seen)) or any(q >= self.n_qubits for q in seen):
                bad = next(q for q in seen if seen.count(q) > 1 or q >= self.n_qubits)
                raise InvariantViolation(
                    f"cycle {k}: qubit {bad} repeated or out of range", qubit=bad, cycle=k
                )
        for k, layer in enumerate(self.two_layers):
            used = []
            for g in layer:
                if len(g.qubits) != 2 or g.qubits[0] == g.qubits[1]:
                    raise InvariantViolation("bad two-qubit gate", cycle=k)
                used.extend(g.qubits)
            dup = [q for q in used if used.count(q) > 1 or q >= self.n_qubits]
            if dup:
                raise InvariantViolation(
                    f"cycle {k}: qubit {dup[0]} used twice in a two-qubit layer",
                    qubit=dup[0], cycle=k,
                )
        for k in range(1, len(self.single_layers)):
            prev = {g.qubits[0]: g.kind for g in self.single_layers[k - 1]}
            for g in self.single_layers[k]:
                q = g.qubits[0]
                if g.kind in SINGLE_QUBIT_KINDS and prev.get(q) == g.kind:
                    raise InvariantViolation(
                        f"qubit {q} repeats {g.kind} in cycle {k}", qubit=q, cycle=k
                    )
        return self


def _stream_word(seed, qubit, cycle):
    key = np.array([seed & 0xFFFFFFFFFFFFFFFF, (qubit << 32) | cycle], dtype=np.uint64)
    return int(np.random.Philox(key=key).random_raw())


def generate_random_circuit(rows, cols, m, seed, theta=DEFAULT_FSIM[0], phi=DEFAULT_FSIM[1],
                            layout=None):
    """Random circuit on a ``rows x cols`` grid (or on ``layout`` if given)."""
    if layout is None:
        if rows * cols < 1:
            raise ValueError("need at least one qubit")
        layout = grid_layout(rows, cols)
    if m < 0:
        raise ValueError("cycle count must be non-negative")
    n = layout.n_qubits
    couplers = layout.couplers()
    prev = [None] * n
    singles = []
    for k in range(m + 1):
        layer = []
        for q in range(n):
            u = _stream_word(seed, q, k)
            if prev[q] is None:
                kind = SINGLE_QUBIT_KINDS[u % 3]
            else:
                others = [g for g in SINGLE_QUBIT_KINDS if g != prev[q]]
                kind = others[u % 2]
            prev[q] = kind
            layer.append(Gate(kind, (q,)))
        singles.append(tuple(layer))
    twos = tuple(
        tuple(Gate("fsim", pair, (theta, phi)) for pair in couplers[PATTERN_SEQUENCE[k % 8]])
        for k in range(m)
    )
    return Circuit(n, tuple(singles), twos, layout).check()


# text format


def _fmt_custom(g):
    return f"u{2 ** len(g.qubits)}:" + ",".join(repr(z) for z in g.custom)


def serialize_circuit(c):
    lines = [f"qubits: {c.n_qubits} layout: {c.layout.header_token()}"]
    for k, layer in enumerate(c.single_layers):
        for g in layer:
            kind = _fmt_custom(g) if g.kind == "custom" else g.kind
            lines.append(f"{k} {kind} {g.qubits[0]}")
        if k < c.cycles:
            for g in c.two_layers[k]:
                kind = _fmt_custom(g) if g.kind == "custom" else g.kind
                extra = "".join(f" {p!r}" for p in g.params)
                lines.append(f"{k} {kind} {g.qubits[0]} {g.qubits[1]}{extra}")
    return "\n".join(lines) + "\n"


_HEADER = re.compile(r"qubits:\s*(\d+)(?:\s+layout:\s*(\S+))?\s*$")


def parse_circuit(text):
    """Parse the line format written by ``serialize_circuit``.

    ``qubits: <n> layout: <name|coords:r,c;...>`` must come first; each
    following line is ``<cycle> <gate> <qubit> [<qubit2>] [<theta> <phi>]``
    with gate one of ``sx sy sw fsim u4:<16 complex> u2:<4 complex>``.
    Blank lines and ``#`` comments are ignored.
    """
    n = None
    layout = Layout("none", ())
    singles, twos = {}, {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if n is None:
            m = _HEADER.match(line)
            if not m:
                raise CircuitSyntaxError("expected header 'qubits: <n> layout: <name>'", lineno)
            n = int(m.group(1))
            if m.group(2):
                try:
                    layout = layout_from_token(m.group(2))
                except ValueError as exc:
                    raise CircuitSyntaxError(str(exc), lineno) from None
            continue
        tok = line.split()
        try:
            cycle = int(tok[0])
            kind = tok[1]
        except (IndexError, ValueError):
            raise CircuitSyntaxError(f"cannot parse {raw!r}", lineno) from None
        if cycle < 0:
            raise CircuitSyntaxError("negative cycle index", lineno)
        custom = ()
        if kind.startswith(("u2:", "u4:")):
            try:
                custom = tuple(complex(z) for z in kind[3:].split(","))
            except ValueError:
                raise CircuitSyntaxError("bad complex entry in custom unitary", lineno) from None
            width = 1 if kind.startswith("u2:") else 2
            if len(custom) != 4**width:
                raise CircuitSyntaxError(f"{kind[:2]} needs {4**width} entries", lineno)
            kind = "custom"
        elif kind in SINGLE_QUBIT_KINDS:
            width = 1
        elif kind == "fsim":
            width = 2
        else:
            raise CircuitSyntaxError(f"unknown gate {kind!r}", lineno)
        try:
            qubits = tuple(int(x) for x in tok[2:2 + width])
            rest = [float(x) for x in tok[2 + width:]]
        except ValueError:
            raise CircuitSyntaxError(f"cannot parse {raw!r}", lineno) from None
        if len(qubits) != width:
            raise CircuitSyntaxError(f"{kind} needs {width} qubit(s)", lineno)
        if any(not 0 <= q < n for q in qubits):
            raise CircuitSyntaxError("qubit id out of range", lineno)
        if kind == "fsim":
            if len(rest) != 2:
                raise CircuitSyntaxError("fsim needs theta and phi", lineno)
            gate = Gate("fsim", qubits, tuple(rest))
        else:
            if rest:
                raise CircuitSyntaxError("unexpected trailing tokens", lineno)
            gate = Gate(kind, qubits, (), custom)
        (singles if width == 1 else twos).setdefault(cycle, []).append(gate)
    if n is None:
        raise CircuitSyntaxError("missing header", 1)
    last = max(list(singles) + [k + 1 for k in twos], default=0)
    single_layers = tuple(tuple(singles.get(k, ())) for k in range(last + 1))
    two_layers = tuple(tuple(twos.get(k, ())) for k in range(last))
    return Circuit(n, single_layers, two_layers, layout).check()


# compilation to a tensor network


def _normalize_bits(closed, fixed_bits):
    if isinstance(fixed_bits, dict):
        bits = {int(q): int(b) for q, b in fixed_bits.items()}
    else:
        bits = dict(zip(closed, (int(b) for b in fixed_bits)))
        if len(bits) != len(closed) or len(list(fixed_bits)) != len(closed):
            raise QubitCoverage("fixed bits do not match the closed qubits")
    return bits


def circuit_to_network(c, open_qubits=(), fixed_bits=None):
    """Network whose value is ``<b, fixed | U | 0...0>`` over open-qubit bits ``b``.

    ``fixed_bits`` maps each non-open qubit to its measured bit (or is a
    sequence aligned with the closed qubits in ascending order; ``None``
    fixes them all to 0).  Axis ``i`` of the value belongs to the ``i``-th
    smallest open qubit.
    """
    open_qubits = sorted(set(int(q) for q in open_qubits))
    closed = [q for q in range(c.n_qubits) if q not in open_qubits]
    if fixed_bits is None:
        fixed_bits = [0] * len(closed)
    bits = _normalize_bits(closed, fixed_bits)
    if any(q >= c.n_qubits or q < 0 for q in open_qubits):
        raise QubitCoverage("open qubit out of range")
    if set(bits) & set(open_qubits):
        raise QubitCoverage("a qubit is both open and fixed")
    if set(bits) | set(open_qubits) != set(range(c.n_qubits)):
        raise QubitCoverage("open and fixed qubits must cover every qubit")
    if any(b not in (0, 1) for b in bits.values()):
        raise QubitCoverage("fixed bits must be 0 or 1")

    tensors, order = {}, {}
    wire = {}
    next_edge = [0]

    def new_edge():
        next_edge[0] += 1
        return next_edge[0] - 1

    def add(t, edges):
        v = len(tensors)
        tensors[v] = t
        order[v] = tuple(edges)

    for q in range(c.n_qubits):
        wire[q] = new_edge()
        add(np.array([1, 0], dtype=complex), [wire[q]])
    for g in c.gates:
        ins = [wire[q] for q in g.qubits]
        outs = [new_edge() for _ in g.qubits]
        k = len(g.qubits)
        add(g.matrix.reshape((2,) * (2 * k)), outs + ins)
        for q, e in zip(g.qubits, outs):
            wire[q] = e
    for q in closed:
        add(np.eye(2, dtype=complex)[bits[q]], [wire[q]])

    # renumber: closed edges keep creation order, open edges go last by qubit
    open_wires = [wire[q] for q in open_qubits]
    closed_wires = [e for e in range(next_edge[0]) if e not in set(open_wires)]
    relabel = {e: i for i, e in enumerate(closed_wires + open_wires)}
    order = {v: tuple(relabel[e] for e in o) for v, o in order.items()}
    dims = {i: 2 for i in range(next_edge[0])}
    opened = [relabel[e] for e in open_wires]
    return TensorNetwork(tensors, order, dims, opened)


def batch_qubit_selector(layout, m, size=6):
    """Open qubits for batched amplitudes.

    On the Sycamore layout this returns the published choices: qubits 0-5
    for most depths and (10, 17, 26, 36, 27, 18) for 16 and 18 cycles.  On
    other layouts it returns the ``size`` qubits closest to the top-right
    corner, grown as a connected set.
    """
    if layout.n_qubits < size:
        raise LayoutTooSmall(f"layout has {layout.n_qubits} qubits, need {size}")
    if layout.name == "sycamore53" and size == 6:
        if m in (16, 18):
            return (10, 17, 26, 36, 27, 18)
        return (0, 1, 2, 3, 4, 5)
    coords = layout.coords
    top = min(r for r, _ in coords)
    right = max(c for _, c in coords)

    def dist(q):
        r, c = coords[q]
        return (abs(r - top) + abs(right - c), r, -c)

    where = {rc: q for q, rc in enumerate(coords)}
    start = min(range(layout.n_qubits), key=dist)
    chosen = [start]
    while len(chosen) < size:
        frontier = set()
        for q in chosen:
            r, c = coords[q]
            for rc in ((r + 1, c), (r - 1, c), (r, c + 1), (r, c - 1)):
                w = where.get(rc)
                if w is not None and w not in chosen:
                    frontier.add(w)
        if not frontier:
            raise LayoutTooSmall("corner component has fewer than the requested qubits")
        chosen.append(min(frontier, key=dist))
    return tuple(sorted(chosen))
