import csv
import io
import json
import subprocess

ANSWER = '{"Bbox": [10, 100, 200, 210], "Point 1": [30, 110], "Point 2": [35, 180]}'


def run(cli, *args, **kw):
    return subprocess.run([cli, *map(str, args)], capture_output=True, text=True, **kw)


def evaluate_args(ev, suffix=""):
    return ["evaluate", "--predictions", ev / f"predictions{suffix}.jsonl",
            "--annotations", ev / f"annotations{suffix}.jsonl",
            "--offline-scores", ev / "offline_scores.jsonl", "--model-params", 7, "--gamma", 0.7]


def test_evaluate_matches_goldens(cli, fixtures):
    ev = fixtures / "eval"
    for fmt, ext in (("text", "txt"), ("json", "json"), ("csv", "csv")):
        golden = (ev / "golden" / f"report.{ext}").read_text()
        for suffix in ("", "_permuted"):
            r = run(cli, *evaluate_args(ev, suffix), "--format", fmt)
            assert r.returncode == 0, r.stderr
            assert r.stdout == golden


def test_report_renders_same_numbers(cli, fixtures, tmp_path):
    golden = fixtures / "eval" / "golden" / "report.json"
    as_csv = run(cli, "report", "--input", golden, "--format", "csv")
    assert as_csv.returncode == 0, as_csv.stderr
    assert as_csv.stdout == (fixtures / "eval" / "golden" / "report.csv").read_text()
    as_json = run(cli, "report", "--input", golden, "--format", "json")
    assert json.loads(as_json.stdout) == json.loads(golden.read_text())


def test_reward_on_reference_answer(cli):
    out = "<think>The red cup is on the left side.</think><answer>" + ANSWER + "</answer>"
    r = run(cli, "reward", "--output-text", out, "--gt-answer", ANSWER, "--gt-mask-rle", "4 4 0 16",
            "--difficulty", 2)
    assert r.returncode == 0, r.stderr
    lines = dict(line.split(" = ", 1) for line in r.stdout.splitlines())
    assert lines["r_original"] == "5"
    assert lines["s"] == "1"
    assert lines["r_final"] == "5"
    assert lines["budget"] == "96"
    assert lines["tokens_used"] == "8"
    r = run(cli, "reward", "--output-text", out, "--gt-answer", ANSWER, "--gt-mask-rle", "4 4 0 16",
            "--difficulty", 2, "--tokens", 196, "--json")
    assert json.loads(r.stdout)["r_final"] == 4.0


def test_simulate_and_report(cli, tmp_path):
    log = tmp_path / "log.jsonl"
    r = run(cli, "simulate", "--steps", 200, "--seed", 2, "--out", log)
    assert r.returncode == 0, r.stderr
    assert "easy" in r.stderr
    as_json = json.loads(run(cli, "report", "--input", log, "--format", "json").stdout)
    rows = list(csv.DictReader(io.StringIO(run(cli, "report", "--input", log, "--format", "csv").stdout)))
    # one record per level present in a step's sampled tasks
    assert {rec["step"] for rec in as_json["records"]} == set(range(1, 201))
    assert len(as_json["records"]) <= 200 * 3
    steps = [row for row in rows if row["kind"] == "step"]
    assert len(steps) == len(as_json["records"])
    for rec, row in zip(as_json["records"], steps):
        assert float(row["mean_length"]) == rec["mean_length"]
    off = run(cli, "simulate", "--steps", 200, "--seed", 2, "--beta", 0, "--quiet")
    assert off.returncode == 0
    assert off.stdout != log.read_text()


def test_usage_errors_exit_2(cli):
    assert run(cli).returncode == 2
    r = run(cli, "evaluate", "--predictions", "/nonexistent")
    assert r.returncode == 2
    assert "Usage" in r.stderr or "usage" in r.stderr.lower()
    assert run(cli, "reward", "--output-text", "x", "--output-file", "/etc/hostname",
               "--gt-answer", ANSWER, "--gt-mask-rle", "1 1 1", "--difficulty", 2).returncode == 2


def test_skipped_record_exits_3(cli, fixtures, tmp_path):
    ev = fixtures / "eval"
    preds = tmp_path / "predictions.jsonl"
    preds.write_text((ev / "predictions.jsonl").read_text() + "{broken\n")
    r = run(cli, "evaluate", "--predictions", preds, "--annotations", ev / "annotations.jsonl",
            "--offline-scores", ev / "offline_scores.jsonl", "--format", "json")
    assert r.returncode == 3
    assert json.loads(r.stdout)["skipped_records"] == 1
    assert "skipped" in r.stderr


def test_inconsistent_inputs_exit_1(cli, fixtures, tmp_path):
    ev = fixtures / "eval"
    scores = tmp_path / "scores.jsonl"
    scores.write_text("\n".join((ev / "offline_scores.jsonl").read_text().splitlines()[1:]) + "\n")
    r = run(cli, "evaluate", "--predictions", ev / "predictions.jsonl", "--annotations",
            ev / "annotations.jsonl", "--offline-scores", scores)
    assert r.returncode == 1
    assert "s01" in r.stderr


def test_annotate_offline(cli, fixtures, tmp_path):
    ann = fixtures / "annotator"
    out = tmp_path / "annotated.jsonl"
    r = run(cli, "annotate", "--annotations", ann / "samples.jsonl", "--offline-responses",
            ann / "responses.jsonl", "--out", out)
    assert r.returncode == 0, r.stderr
    levels = [json.loads(line)["level"] for line in out.read_text().splitlines()]
    assert levels == ["easy", "easy", "medium", "medium", "hard", "hard"]
