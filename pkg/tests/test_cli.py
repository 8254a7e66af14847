import json

from fairmarket import Instance, Solution, check_hall, normalize_instance
from fairmarket.cli import generate_instance, main

DEMO = {
    "agents": 3,
    "goods": 5,
    "valuations": [[6, 5, 0, 0, 0], [0, 1, 7, 3, 0], [2, 3, 6, 3, 4]],
}

def write_demo(tmp_path, name="inst.json", obj=None):
    path = tmp_path / name
    path.write_text(json.dumps(obj if obj is not None else DEMO))
    return str(path)

# ---------------------------------------------------------------------------
# gen

def test_gen_deterministic_bytes(tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    assert main(["gen", "-n", "3", "-m", "5", "--max", "9", "--seed", "7", "-o", str(a)]) == 0
    assert main(["gen", "-n", "3", "-m", "5", "--max", "9", "--seed", "7", "-o", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()

def test_gen_output_always_solvable():
    for seed in range(25):
        inst = generate_instance(3, 6, 10, seed)
        core, _ = normalize_instance(inst)
        assert core is not None and check_hall(core)

def test_gen_rejects_more_agents_than_goods(tmp_path):
    assert main(["gen", "-n", "3", "-m", "2", "-o", str(tmp_path / "x.json")]) == 1

def test_gen_rejects_zero_max(tmp_path):
    assert main(["gen", "-n", "2", "-m", "3", "--max", "0", "-o", str(tmp_path / "x.json")]) == 1

# ---------------------------------------------------------------------------
# solve

def test_solve_demo_file(tmp_path):
    inst_path = write_demo(tmp_path)
    out_path = tmp_path / "sol.json"
    trace_path = tmp_path / "trace.jsonl"
    code = main(["solve", inst_path, "-o", str(out_path), "--trace", str(trace_path)])
    assert code == 0
    sol = Solution.from_json_dict(json.loads(out_path.read_text()))
    sol.validate(Instance.from_json_dict(DEMO))
    lines = [json.loads(line) for line in trace_path.read_text().splitlines()]
    assert lines and all("kind" in ev for ev in lines)

def test_solve_is_deterministic(tmp_path):
    inst_path = write_demo(tmp_path)
    outs = []
    traces = []
    for tag in ("1", "2"):
        out = tmp_path / f"sol{tag}.json"
        tr = tmp_path / f"tr{tag}.jsonl"
        assert main(["solve", inst_path, "-o", str(out), "--trace", str(tr)]) == 0
        outs.append(out.read_bytes())
        traces.append(tr.read_bytes())
    assert outs[0] == outs[1]
    assert traces[0] == traces[1]

def test_solve_rejects_negative_value(tmp_path):
    obj = {"agents": 1, "goods": 2, "valuations": [[1, -3]]}
    assert main(["solve", write_demo(tmp_path, obj=obj)]) == 1

def test_solve_rejects_malformed_json(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text("{nope")
    assert main(["solve", str(path)]) == 1

def test_solve_exit_two_on_matching_failure(tmp_path):
    obj = {"agents": 2, "goods": 1, "valuations": [[1], [1]]}
    assert main(["solve", write_demo(tmp_path, obj=obj)]) == 2

def test_solve_with_order_flag(tmp_path):
    inst_path = write_demo(tmp_path)
    out = tmp_path / "sol.json"
    assert main(["solve", inst_path, "--order", "2,1,0", "-o", str(out)]) == 0
    assert main(["solve", inst_path, "--order", "2,2,0", "-o", str(out)]) == 1

def test_solve_graph_dump(tmp_path):
    inst_path = write_demo(tmp_path)
    graph_path = tmp_path / "graph.json"
    assert main(["solve", inst_path, "-o", str(tmp_path / "s.json"), "--dump-graph", str(graph_path)]) == 0
    dump = json.loads(graph_path.read_text())
    assert "mbb_edges" in dump and "alphas" in dump and "levels" in dump
    assert dump["levels"]["2"] == 0  # levels are measured from the newest agent

# ---------------------------------------------------------------------------
# verify

def test_verify_solver_output(tmp_path, capsys):
    inst_path = write_demo(tmp_path)
    sol_path = tmp_path / "sol.json"
    assert main(["solve", inst_path, "-o", str(sol_path)]) == 0
    assert main(["verify", inst_path, str(sol_path)]) == 0
    report = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
    assert report["ok"] is True and report["brute_po"] is True

def test_verify_flags_bad_solution(tmp_path, capsys):
    inst_path = write_demo(tmp_path)
    bad = {"bundles": [[0, 1, 2, 3, 4], [], []], "prices": ["1", "1", "1", "1", "1"]}
    bad_path = tmp_path / "bad.json"
    bad_path.write_text(json.dumps(bad))
    assert main(["verify", inst_path, str(bad_path)]) == 4
    report = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
    assert report["ok"] is False

def test_verify_brute_cap_flag_and_env(tmp_path, capsys, monkeypatch):
    inst_path = write_demo(tmp_path)
    sol_path = tmp_path / "sol.json"
    main(["solve", inst_path, "-o", str(sol_path)])

    assert main(["verify", inst_path, str(sol_path), "--brute-cap", "0"]) == 0
    report = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
    assert report["brute_po"] == "skipped"

    monkeypatch.setenv("FAIRMARKET_BRUTE_CAP", "0")
    assert main(["verify", inst_path, str(sol_path)]) == 0
    report = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
    assert report["brute_po"] == "skipped"

def test_verify_rejects_mismatched_solution(tmp_path):
    inst_path = write_demo(tmp_path)
    bad_path = tmp_path / "bad.json"
    bad_path.write_text(json.dumps({"bundles": [[0]], "prices": ["1"]}))
    assert main(["verify", inst_path, str(bad_path)]) == 1

# ---------------------------------------------------------------------------
# bench

def test_bench_report(tmp_path):
    spec = {"runs": [{"n": 2, "m": [2, 4], "max_value": 6, "seeds": [0, 1]}]}
    spec_path = tmp_path / "spec.json"
    spec_path.write_text(json.dumps(spec))
    report_path = tmp_path / "report.json"
    assert main(["bench", "--spec", str(spec_path), "-o", str(report_path)]) == 0
    report = json.loads(report_path.read_text())
    assert len(report["rows"]) == 4
    for row in report["rows"]:
        assert row["bound_ratio_max"] <= 1.0
        assert row["total_iterations"] == sum(row["iterations_per_call"])
        assert row["nsw_ratio"] is None or row["nsw_ratio"] >= 0.6922

def test_bench_single_agent_rows_never_iterate(tmp_path):
    spec = {"runs": [{"n": 1, "m": [1, 3, 5], "max_value": 4, "seeds": [0]}]}
    spec_path = tmp_path / "spec.json"
    spec_path.write_text(json.dumps(spec))
    report_path = tmp_path / "report.json"
    assert main(["bench", "--spec", str(spec_path), "-o", str(report_path)]) == 0
    for row in json.loads(report_path.read_text())["rows"]:
        assert row["total_iterations"] == 0

def test_bench_csv_and_instance_paths(tmp_path):
    inst_path = write_demo(tmp_path)
    spec = {"instances": [inst_path]}
    spec_path = tmp_path / "spec.json"
    spec_path.write_text(json.dumps(spec))
    report_path = tmp_path / "report.csv"
    assert main(["bench", "--spec", str(spec_path), "-o", str(report_path)]) == 0
    text = report_path.read_text().splitlines()
    assert text[0].startswith("n,m,")
    assert len(text) == 2
