"""Command-line interface.

Exit codes: 0 success, 2 invalid input, 3 execution failure, 4 queue
corruption.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import bench as bench_mod
from . import harness
from .circuit import (
    DEFAULT_FSIM,
    circuit_to_network,
    generate_random_circuit,
    parse_circuit,
    serialize_circuit,
    sycamore_layout,
)
from .errors import QueueError, StemTNError, SubtaskFailure, Stuck, WidthExceedsBudget
from .network import simplify
from .planner import PlannerParams, plan
from .runtime import compile_scheme, run_scheme
from .sampler import AmplitudeSource, default_open_qubits, frugal_sample, xeb
from .statevector import probabilities
from .tree import parse_scheme, serialize_scheme

EXIT_OK, EXIT_INVALID, EXIT_EXEC, EXIT_QUEUE = 0, 2, 3, 4


class UsageError(Exception):
    pass


def _env_seed():
    return int(os.environ.get("STEMTN_SEED", "0"))


def _queue_dir(args):
    q = args.queue_dir or os.environ.get("STEMTN_QUEUE_DIR")
    if not q:
        raise UsageError("no queue directory (use --queue-dir or STEMTN_QUEUE_DIR)")
    return q


def _read(path):
    try:
        with open(path) as fh:
            return fh.read()
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror}") from None


def _write(path, text):
    with open(path, "w") as fh:
        fh.write(text)


def _emit(obj):
    print(json.dumps(obj, sort_keys=True))


def _circuit(path):
    return parse_circuit(_read(path))


def _open_qubits(spec, circuit):
    if spec is None or spec in ("", "none"):
        return ()
    if spec == "auto":
        return tuple(default_open_qubits(circuit))
    try:
        qs = tuple(sorted({int(x) for x in spec.split(",")}))
    except ValueError:
        raise UsageError(f"bad qubit list {spec!r}") from None
    if any(not 0 <= q < circuit.n_qubits for q in qs):
        raise UsageError("open qubit out of range")
    return qs


def _fixed_bits(spec, n_closed):
    if not spec:
        return [0] * n_closed
    try:
        value = int(spec, 16)
    except ValueError:
        raise UsageError(f"bad hex bit string {spec!r}") from None
    if value >> n_closed:
        raise UsageError(f"fixed bits {spec} do not fit {n_closed} closed qubits")
    return [(value >> (n_closed - 1 - i)) & 1 for i in range(n_closed)]


def _network(circuit, open_qubits, fixed=None):
    closed = circuit.n_qubits - len(open_qubits)
    bits = fixed if fixed is not None else [0] * closed
    return simplify(circuit_to_network(circuit, open_qubits, bits))


def _params(args):
    params = PlannerParams(seed=args.seed if args.seed is not None else _env_seed())
    if args.params_json:
        doc = json.loads(_read(args.params_json))
        try:
            params = PlannerParams.from_dict({**params.to_dict(), **doc})
        except (TypeError, ValueError) as exc:
            raise UsageError(str(exc)) from None
    over = {}
    if args.target_cw is not None:
        over["target_cw"] = args.target_cw
    if args.restarts is not None:
        over["restarts"] = args.restarts
    return PlannerParams.from_dict({**params.to_dict(), **over})


# subcommands


def cmd_gen(args):
    seed = args.seed if args.seed is not None else _env_seed()
    layout = sycamore_layout() if args.layout == "sycamore53" else None
    c = generate_random_circuit(args.rows, args.cols, args.cycles, seed, args.theta, args.phi, layout)
    text = serialize_circuit(c)
    if args.out:
        _write(args.out, text)
        _emit({"qubits": c.n_qubits, "cycles": c.cycles, "gates": len(c.gates), "out": args.out})
    else:
        sys.stdout.write(text)


def cmd_plan(args):
    circuit = _circuit(args.circuit)
    oq = _open_qubits(args.open_qubits, circuit)
    net = _network(circuit, oq)
    result = plan(net, _params(args))
    text = serialize_scheme(result.scheme)
    if args.out:
        _write(args.out, text)
    cost = result.scheme.costs
    _emit({
        "log2_tc": cost.log2_tc,
        "cw": cost.cw,
        "subtasks": cost.subtasks,
        "open_qubits": list(oq),
        "runs": result.runs,
        "out": args.out,
    })


def cmd_run(args):
    circuit = _circuit(args.circuit)
    oq = _open_qubits(args.open_qubits, circuit)
    fixed = _fixed_bits(args.fixed_bits, circuit.n_qubits - len(oq))
    net = _network(circuit, oq, fixed)
    scheme = parse_scheme(_read(args.order), net)
    exec_plan = compile_scheme(net, scheme, args.merge_min_dim, args.precision, args.max_cw)
    value, report = run_scheme(net, exec_plan, args.parallelism, cw_budget=args.max_cw)
    doc = report.to_dict()
    if args.report_json:
        _write(args.report_json, json.dumps(doc, sort_keys=True))
    flat = np.asarray(value, dtype=np.complex128).reshape(-1)
    _emit({
        "open_qubits": list(oq),
        "amplitudes": [[float(z.real), float(z.imag)] for z in flat],
        "report": doc,
    })


def cmd_sample(args):
    circuit = _circuit(args.circuit)
    oq = _open_qubits(args.open_qubits or "auto", circuit)
    if not oq:
        raise UsageError("sampling needs at least one open qubit")
    scheme = None
    if args.order:
        template = _network(circuit, oq)
        scheme = parse_scheme(_read(args.order), template)
    seed = args.seed if args.seed is not None else _env_seed()
    source = AmplitudeSource(circuit, oq, scheme, PlannerParams(seed=seed, restarts=1))
    report = frugal_sample(circuit, open_qubits=oq, seed=seed, R=args.frugal_R,
                           samples=args.samples, first_only=args.first_only, source=source)
    doc = report.to_dict()
    if args.report_json:
        _write(args.report_json, json.dumps(doc, sort_keys=True))
    if args.out:
        _write(args.out, "".join(s + "\n" for s in report.samples))
    _emit({k: doc[k] for k in ("accepted", "attempted", "acceptance_rate", "batches", "xeb", "xeb_stderr")})


def cmd_xeb(args):
    circuit = _circuit(args.circuit)
    n = circuit.n_qubits
    samples = [s.strip() for s in _read(args.samples_file).splitlines() if s.strip()]
    for s in samples:
        if len(s) != n or set(s) - {"0", "1"}:
            raise UsageError(f"bad sample {s!r} for {n} qubits")
    probs = probabilities(circuit)
    value, err = xeb(samples, lambda s: probs[int(s, 2)], n)
    _emit({"xeb": value, "stderr": err, "samples": len(samples)})


def cmd_bench(args):
    if args.circuits:
        circuits = [(os.path.basename(p), _circuit(p)) for p in args.circuits]
    else:
        circuits = bench_mod.bundled_suite(seed=args.suite_seed)
    params = _params(args)
    rows = bench_mod.bench(circuits, params, runs=args.restarts or 5)
    if args.json:
        _write(args.json, json.dumps(rows, sort_keys=True, indent=1))
    print(bench_mod.format_table(rows))


def cmd_agent(args):
    q = _queue_dir(args)
    if args.action == "init":
        circuit = _circuit(args.circuit)
        oq = _open_qubits(args.open_qubits, circuit)
        fixed = _fixed_bits(args.fixed_bits, circuit.n_qubits - len(oq))
        net = _network(circuit, oq, fixed)
        scheme = parse_scheme(_read(args.order), net)
        envs = harness.init_queue(q, net, scheme, args.chunk, args.precision, args.merge_min_dim)
        _emit({"queue": q, "tasks": len(envs), "subtasks": scheme.subtasks})
    elif args.action == "status":
        _emit({k: len(v) for k, v in harness.queue_status(q).items()})
    elif args.action == "requeue":
        _emit({"stale": harness.requeue_stale(q, args.max_age), "corrupt": harness.requeue_corrupt(q)})
    else:
        value = harness.agent_collect(q)
        flat = np.asarray(value, dtype=np.complex128).reshape(-1)
        doc = {"amplitudes": [[float(z.real), float(z.imag)] for z in flat]}
        if args.out:
            _write(args.out, json.dumps(doc))
        _emit(doc)


def cmd_worker(args):
    q = _queue_dir(args)
    done = harness.worker_loop(q, max_tasks=args.max_tasks, parallelism=args.parallelism)
    _emit({"done": done})


def build_parser():
    p = argparse.ArgumentParser(prog="stemtn", description="Tensor-network circuit simulation")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="random grid circuit")
    g.add_argument("--rows", type=int, default=3)
    g.add_argument("--cols", type=int, default=4)
    g.add_argument("--cycles", type=int, default=8)
    g.add_argument("--seed", type=int)
    g.add_argument("--theta", type=float, default=DEFAULT_FSIM[0])
    g.add_argument("--phi", type=float, default=DEFAULT_FSIM[1])
    g.add_argument("--layout", choices=("grid", "sycamore53"), default="grid")
    g.add_argument("--out")
    g.set_defaults(func=cmd_gen)

    def planner_flags(sp):
        sp.add_argument("--target-cw", type=int)
        sp.add_argument("--restarts", type=int)
        sp.add_argument("--seed", type=int)
        sp.add_argument("--params-json")

    pl = sub.add_parser("plan", help="find a contraction scheme")
    pl.add_argument("--circuit", required=True)
    pl.add_argument("--open-qubits", default="none")
    planner_flags(pl)
    pl.add_argument("--out")
    pl.set_defaults(func=cmd_plan)

    def runtime_flags(sp):
        sp.add_argument("--precision", choices=("single", "double"), default="single")
        sp.add_argument("--merge-min-dim", type=int, default=32)

    r = sub.add_parser("run", help="execute a scheme")
    r.add_argument("--circuit", required=True)
    r.add_argument("--order", required=True)
    r.add_argument("--open-qubits", default="none")
    r.add_argument("--fixed-bits", default="")
    r.add_argument("--parallelism", type=int, default=1)
    r.add_argument("--max-cw", type=int)
    runtime_flags(r)
    r.add_argument("--report-json")
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("sample", help="frugal rejection sampling")
    s.add_argument("--circuit", required=True)
    s.add_argument("--order")
    s.add_argument("--open-qubits", default="auto")
    s.add_argument("--samples", type=int, default=1000)
    s.add_argument("--frugal-R", type=float, default=10.0)
    s.add_argument("--first-only", action="store_true")
    s.add_argument("--seed", type=int)
    s.add_argument("--report-json")
    s.add_argument("--out", help="write accepted bitstrings, one per line")
    s.set_defaults(func=cmd_sample)

    x = sub.add_parser("xeb", help="score samples against exact probabilities")
    x.add_argument("--circuit", required=True)
    x.add_argument("--samples-file", required=True)
    x.set_defaults(func=cmd_xeb)

    b = sub.add_parser("bench", help="planner benchmark table")
    b.add_argument("--circuits", nargs="*")
    b.add_argument("--suite-seed", type=int, default=0)
    planner_flags(b)
    b.add_argument("--json")
    b.set_defaults(func=cmd_bench)

    a = sub.add_parser("agent", help="split, inspect or collect a work queue")
    a.add_argument("action", choices=("init", "status", "requeue", "collect"))
    a.add_argument("--queue-dir")
    a.add_argument("--circuit")
    a.add_argument("--order")
    a.add_argument("--open-qubits", default="none")
    a.add_argument("--fixed-bits", default="")
    a.add_argument("--chunk", type=int, default=1)
    a.add_argument("--max-age", type=float)
    a.add_argument("--out")
    runtime_flags(a)
    a.set_defaults(func=cmd_agent)

    w = sub.add_parser("worker", help="drain a work queue")
    w.add_argument("--queue-dir")
    w.add_argument("--max-tasks", type=int)
    w.add_argument("--parallelism", type=int, default=1)
    w.set_defaults(func=cmd_worker)
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INVALID if exc.code else EXIT_OK
    if args.command == "agent" and args.action == "init" and not (args.circuit and args.order):
        print("error: agent init needs --circuit and --order", file=sys.stderr)
        return EXIT_INVALID
    try:
        args.func(args)
    except QueueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_QUEUE
    except (SubtaskFailure, Stuck, WidthExceedsBudget) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_EXEC
    except (UsageError, StemTNError, ValueError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (RuntimeError, ArithmeticError, MemoryError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_EXEC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
