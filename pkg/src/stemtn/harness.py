"""Agent/worker execution over a shared directory.

Layout of a queue directory::

    meta.json          network hash, subtask count, runtime options
    network.json       the network
    scheme.json        the order file
    pending/ claimed/ done/   one envelope JSON per task, moved by rename
    results/           per-task result arrays, named by content hash
    claims.log         one line per successful claim

A worker claims a task by renaming its envelope from ``pending/`` to
``claimed/``; only one rename can succeed.  Results are written to a
temporary file and renamed into place, so a killed worker never leaves a
half-written result under its final name.
"""

from __future__ import annotations

import hashlib
import io
import json
import os
import time
import uuid
from dataclasses import asdict, dataclass

import numpy as np

from .errors import ChecksumMismatch, MissingResult, QueueError
from .network import TensorNetwork
from .runtime import BranchCache, compile_scheme, ordered_sum, run_range
from .tree import parse_scheme, serialize_scheme

STATES = ("pending", "claimed", "done")
MAX_RETRIES = 3
CLAIM_GRACE = 5.0


@dataclass
class TaskEnvelope:
    task_id: str
    network_hash: str
    order_file: str
    lo: int
    hi: int
    status: str = "pending"
    result_path: str = ""
    checksum: str = ""
    worker: str = ""
    retries: int = 0

    def to_json(self):
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, text):
        return cls(**json.loads(text))


def agent_split(scheme, chunk, order_file="scheme.json"):
    """Envelopes covering subtask indices ``[0, subtasks)`` in chunks of ``chunk``."""
    if chunk < 1:
        raise ValueError("chunk must be at least 1")
    total = scheme.subtasks
    return [
        TaskEnvelope(f"t{i // chunk:06d}", scheme.network_hash, order_file, i, min(i + chunk, total))
        for i in range(0, total, chunk)
    ]


def _write_atomic(path, data):
    tmp = f"{path}.{uuid.uuid4().hex}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(data)
        fh.flush()
        os.fsync(fh.fileno())
    os.replace(tmp, path)


def init_queue(queue_dir, net, scheme, chunk, precision="double", merge_min_dim=32):
    """Create a queue directory holding one pending envelope per chunk."""
    os.makedirs(queue_dir, exist_ok=True)
    for sub in STATES + ("results",):
        os.makedirs(os.path.join(queue_dir, sub), exist_ok=True)
    if any(os.listdir(os.path.join(queue_dir, s)) for s in STATES):
        raise QueueError(f"queue {queue_dir} is not empty")
    _write_atomic(os.path.join(queue_dir, "network.json"), net.to_json().encode())
    _write_atomic(os.path.join(queue_dir, "scheme.json"), serialize_scheme(scheme).encode())
    envelopes = agent_split(scheme, chunk)
    meta = {
        "network_hash": scheme.network_hash,
        "subtasks": scheme.subtasks,
        "chunk": chunk,
        "tasks": [e.task_id for e in envelopes],
        "precision": precision,
        "merge_min_dim": merge_min_dim,
    }
    _write_atomic(os.path.join(queue_dir, "meta.json"), json.dumps(meta, sort_keys=True).encode())
    for env in envelopes:
        _write_atomic(os.path.join(queue_dir, "pending", env.task_id + ".json"), env.to_json().encode())
    return envelopes


def load_meta(queue_dir):
    try:
        with open(os.path.join(queue_dir, "meta.json")) as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise QueueError(f"{queue_dir} is not an initialized queue") from None
    except json.JSONDecodeError as exc:
        raise QueueError(f"corrupt queue metadata: {exc}") from None


def load_plan(queue_dir):
    """Compile the queue's scheme against its network, as workers do."""
    meta = load_meta(queue_dir)
    with open(os.path.join(queue_dir, "network.json")) as fh:
        net = TensorNetwork.from_json(fh.read())
    with open(os.path.join(queue_dir, "scheme.json")) as fh:
        scheme = parse_scheme(fh.read(), net)
    return compile_scheme(net, scheme, meta["merge_min_dim"], meta["precision"])


def _read_envelope(path):
    with open(path) as fh:
        return TaskEnvelope.from_json(fh.read())


def _pid_alive(pid):
    try:
        os.kill(pid, 0)
    except ProcessLookupError:
        return False
    except PermissionError:
        return True
    return True


def _owner_alive(worker, age):
    if not worker:
        # renamed but not yet stamped: give the claimer a moment
        return age < CLAIM_GRACE
    try:
        pid = int(worker.split(":")[0])
    except ValueError:
        return True  # not a pid-based id; only max_age can expire it
    return _pid_alive(pid)


def requeue_stale(queue_dir, max_age=None):
    """Return claims of dead workers (or older than ``max_age`` seconds) to pending."""
    moved = []
    claimed = os.path.join(queue_dir, "claimed")
    for name in sorted(os.listdir(claimed)):
        if not name.endswith(".json"):
            continue
        path = os.path.join(claimed, name)
        try:
            env = _read_envelope(path)
            age = time.time() - os.path.getmtime(path)
        except (FileNotFoundError, json.JSONDecodeError):
            continue
        if (max_age is not None and age > max_age) or not _owner_alive(env.worker, age):
            try:
                os.rename(path, os.path.join(queue_dir, "pending", name))
                moved.append(env.task_id)
            except FileNotFoundError:
                pass
    return moved


def _encode(values):
    buf = io.BytesIO()
    np.save(buf, np.stack(values), allow_pickle=False)
    return buf.getvalue()


def _claim(queue_dir, worker_id):
    pending = os.path.join(queue_dir, "pending")
    for name in sorted(os.listdir(pending)):
        if not name.endswith(".json"):
            continue
        src = os.path.join(pending, name)
        dst = os.path.join(queue_dir, "claimed", name)
        try:
            os.rename(src, dst)
        except FileNotFoundError:
            continue  # another worker won
        env = _read_envelope(dst)
        env.status = "claimed"
        env.worker = worker_id
        _write_atomic(dst, env.to_json().encode())
        with open(os.path.join(queue_dir, "claims.log"), "a") as log:
            log.write(f"{env.task_id} {worker_id}\n")
        return env, dst
    return None, None


def worker_loop(queue_dir, plan=None, worker_id=None, max_tasks=None, parallelism=1, hook=None):
    """Claim and execute envelopes until none are pending.

    Returns the ids of the tasks this worker completed.  ``hook(event,
    envelope)`` is called after each claim (``"claimed"``) and each
    completion (``"done"``).
    """
    meta = load_meta(queue_dir)
    if plan is None:
        plan = load_plan(queue_dir)
    if plan.scheme.network_hash != meta["network_hash"]:
        raise QueueError("plan does not match the queue's network")
    worker_id = worker_id or f"{os.getpid()}:{uuid.uuid4().hex[:8]}"
    cache = BranchCache(plan)
    done = []
    requeue_stale(queue_dir)
    while max_tasks is None or len(done) < max_tasks:
        env, path = _claim(queue_dir, worker_id)
        if env is None:
            break
        if hook is not None:
            hook("claimed", env)
        results = run_range(plan, env.lo, env.hi, cache, parallelism)
        blob = _encode([r.value for r, _ in results])
        digest = hashlib.sha256(blob).hexdigest()
        rel = os.path.join("results", f"{env.task_id}-{digest[:16]}.npy")
        _write_atomic(os.path.join(queue_dir, rel), blob)
        env.status = "done"
        env.result_path = rel
        env.checksum = digest
        _write_atomic(os.path.join(queue_dir, "done", env.task_id + ".json"), env.to_json().encode())
        os.remove(path)
        done.append(env.task_id)
        if hook is not None:
            hook("done", env)
    return done


def queue_status(queue_dir):
    return {
        s: sorted(n[:-5] for n in os.listdir(os.path.join(queue_dir, s)) if n.endswith(".json"))
        for s in STATES
    }


def _load_result(queue_dir, env):
    path = os.path.join(queue_dir, env.result_path)
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
    except FileNotFoundError:
        raise MissingResult(f"result of task {env.task_id} is missing") from None
    if hashlib.sha256(blob).hexdigest() != env.checksum:
        raise ChecksumMismatch(f"result of task {env.task_id} fails its checksum", task_id=env.task_id)
    return np.load(io.BytesIO(blob), allow_pickle=False)


def agent_collect(queue_dir):
    """Sum every subtask value in ascending index order."""
    meta = load_meta(queue_dir)
    values = []
    for task_id in meta["tasks"]:
        path = os.path.join(queue_dir, "done", task_id + ".json")
        try:
            env = _read_envelope(path)
        except FileNotFoundError:
            raise MissingResult(f"task {task_id} is not done") from None
        values.extend(_load_result(queue_dir, env))
    if len(values) != meta["subtasks"]:
        raise QueueError(f"expected {meta['subtasks']} subtask values, found {len(values)}")
    return ordered_sum(values)


def requeue_corrupt(queue_dir):
    """Move done tasks whose result is missing or corrupt back to pending."""
    moved = []
    for task_id in load_meta(queue_dir)["tasks"]:
        path = os.path.join(queue_dir, "done", task_id + ".json")
        if not os.path.exists(path):
            continue
        env = _read_envelope(path)
        try:
            _load_result(queue_dir, env)
            continue
        except (MissingResult, ChecksumMismatch):
            pass
        if env.retries >= MAX_RETRIES:
            raise QueueError(f"task {task_id} failed verification {env.retries} times")
        env.retries += 1
        env.status = "pending"
        env.result_path = env.checksum = env.worker = ""
        _write_atomic(os.path.join(queue_dir, "pending", task_id + ".json"), env.to_json().encode())
        os.remove(path)
        moved.append(task_id)
    return moved
