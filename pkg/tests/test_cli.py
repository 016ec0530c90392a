import json
import os

import numpy as np
import pytest

from stemtn.bench import bench, bundled_suite, format_table
from stemtn.circuit import generate_random_circuit, parse_circuit
from stemtn.cli import main
from stemtn.planner import PlannerParams
from stemtn.statevector import final_state


@pytest.fixture
def work(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    with open("params.json", "w") as fh:
        json.dump({"cma_iters": 4, "restarts": 1, "local_pre": 5, "local_mid": 5, "local_post": 5}, fh)
    assert main(["gen", "--rows", "2", "--cols", "3", "--cycles", "6", "--seed", "3", "--out", "c.txt"]) == 0
    return tmp_path


def last_json(capsys):
    out = capsys.readouterr().out.strip().splitlines()
    return json.loads(out[-1])


def amplitudes(doc):
    return np.array([complex(re, im) for re, im in doc["amplitudes"]])


def test_gen_is_seeded(work, capsys):
    assert main(["gen", "--rows", "2", "--cols", "3", "--cycles", "6", "--seed", "3"]) == 0
    text = capsys.readouterr().out
    assert parse_circuit(text) == generate_random_circuit(2, 3, 6, seed=3)
    assert open("c.txt").read() == text


def test_gen_reads_seed_from_environment(work, capsys, monkeypatch):
    monkeypatch.setenv("STEMTN_SEED", "3")
    assert main(["gen", "--rows", "2", "--cols", "3", "--cycles", "6"]) == 0
    assert capsys.readouterr().out == open("c.txt").read()


def test_plan_run_matches_state_vector(work, capsys):
    args = ["--circuit", "c.txt", "--open-qubits", "0,2"]
    assert main(["plan", *args, "--params-json", "params.json", "--target-cw", "3", "--out", "o.json"]) == 0
    planned = last_json(capsys)
    assert planned["cw"] <= 3
    assert main(["run", *args, "--order", "o.json", "--precision", "double", "--fixed-bits", "b",
                 "--report-json", "r.json"]) == 0
    doc = last_json(capsys)
    c = parse_circuit(open("c.txt").read())
    state = final_state(c)
    # closed qubits 1,3,4,5 carry 0xb = 1011
    ref = state[:, 1, :, 0, 1, 1]
    np.testing.assert_allclose(amplitudes(doc), ref.reshape(-1), atol=1e-10)
    assert json.load(open("r.json"))["subtasks"] == planned["subtasks"]


def test_run_rejects_budget_and_mismatch(work, capsys):
    assert main(["plan", "--circuit", "c.txt", "--params-json", "params.json", "--out", "o.json"]) == 0
    cw = last_json(capsys)["cw"]
    assert main(["run", "--circuit", "c.txt", "--order", "o.json", "--max-cw", str(cw - 1)]) == 3
    assert main(["run", "--circuit", "c.txt", "--order", "o.json", "--open-qubits", "1"]) == 2
    assert main(["run", "--circuit", "c.txt", "--order", "o.json", "--fixed-bits", "zz"]) == 2
    assert main(["run", "--circuit", "missing.txt", "--order", "o.json"]) == 2
    assert main(["bogus"]) == 2


def test_sample_and_xeb(work, capsys):
    assert main(["sample", "--circuit", "c.txt", "--samples", "50", "--seed", "1",
                 "--out", "s.txt", "--report-json", "rep.json"]) == 0
    doc = last_json(capsys)
    assert doc["accepted"] == 50
    assert main(["xeb", "--circuit", "c.txt", "--samples-file", "s.txt"]) == 0
    scored = last_json(capsys)
    report = json.load(open("rep.json"))
    assert scored["xeb"] == pytest.approx(report["xeb"], abs=1e-9)
    with open("bad.txt", "w") as fh:
        fh.write("012\n")
    assert main(["xeb", "--circuit", "c.txt", "--samples-file", "bad.txt"]) == 2


def test_sample_is_deterministic(work, capsys):
    main(["sample", "--circuit", "c.txt", "--samples", "20", "--seed", "4", "--report-json", "a.json"])
    main(["sample", "--circuit", "c.txt", "--samples", "20", "--seed", "4", "--report-json", "b.json"])
    assert open("a.json").read() == open("b.json").read()


def test_agent_worker_round_trip(work, capsys, monkeypatch):
    assert main(["plan", "--circuit", "c.txt", "--open-qubits", "0", "--params-json", "params.json",
                 "--target-cw", "2", "--out", "o.json"]) == 0
    subtasks = last_json(capsys)["subtasks"]
    assert main(["run", "--circuit", "c.txt", "--open-qubits", "0", "--order", "o.json",
                 "--precision", "double"]) == 0
    direct = last_json(capsys)
    assert main(["agent", "status"]) == 2  # no queue directory anywhere
    monkeypatch.setenv("STEMTN_QUEUE_DIR", "queue")
    assert main(["agent", "init"]) == 2
    assert main(["agent", "init", "--circuit", "c.txt", "--open-qubits", "0", "--order", "o.json",
                 "--chunk", "2", "--precision", "double"]) == 0
    assert last_json(capsys)["subtasks"] == subtasks
    assert main(["worker", "--max-tasks", "1"]) == 0
    assert len(last_json(capsys)["done"]) == 1
    assert main(["worker"]) == 0
    assert main(["agent", "status"]) == 0
    status = last_json(capsys)
    assert status["pending"] == status["claimed"] == 0
    assert main(["agent", "collect"]) == 0
    assert last_json(capsys)["amplitudes"] == direct["amplitudes"]
    # break a result: collect reports queue corruption, requeue repairs it
    done = sorted(os.listdir("queue/done"))[0]
    env = json.load(open(os.path.join("queue/done", done)))
    with open(os.path.join("queue", env["result_path"]), "ab") as fh:
        fh.write(b"x")
    assert main(["agent", "collect"]) == 4
    assert main(["agent", "requeue"]) == 0
    assert main(["worker"]) == 0
    assert main(["agent", "collect"]) == 0
    assert last_json(capsys)["amplitudes"] == direct["amplitudes"]


def test_bench_command(work, capsys):
    assert main(["bench", "--circuits", "c.txt", "--params-json", "params.json", "--restarts", "2",
                 "--json", "b.json"]) == 0
    rows = json.load(open("b.json"))
    assert rows[0]["circuit"] == "c.txt"
    assert len(rows[0]["runs"]) == 2
    assert "best" in capsys.readouterr().out


def test_bench_rows():
    assert bench([]) == []
    c = generate_random_circuit(2, 3, 4, seed=0)
    params = PlannerParams(cma_iters=4, local_pre=5, local_mid=5, local_post=5)
    rows = bench([("tiny", c)], params, runs=3)
    (row,) = rows
    assert set(row) == {"circuit", "runs", "best_log2_tc", "cw", "subtasks", "wall_s"}
    assert len(row["runs"]) == 3
    assert row["best_log2_tc"] == pytest.approx(min(r["log2_tc"] for r in row["runs"]))
    table = format_table(rows)
    assert table.splitlines()[0].split() == ["circuit", "run1", "run2", "run3", "best", "cw", "subtasks", "wall_s"]
    assert "tiny" in table
    assert format_table([]).splitlines()[0].split()[0] == "circuit"


def test_bundled_suite_names():
    names = [n for n, _ in bundled_suite()]
    assert names[0] == "grid3x4-m6-s0"
    assert len(names) == 8
