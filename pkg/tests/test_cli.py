import json

import numpy as np
import pytest

from tinyforge.cli import main


def run(capsys, *argv):
    capsys.readouterr()  # drain anything from earlier raw main() calls
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


@pytest.fixture(scope="module")
def pipeline_project(tmp_path_factory):
    """init && ingest && split && dsp && train through the real CLI."""
    root = tmp_path_factory.mktemp("proj")
    p = str(root)
    assert main(["--project", p, "init", "--demo", "--demo-per-class", "6"]) == 0
    assert main(["--project", p, "ingest", "--dir", str(root / "raw")]) == 0
    assert main(["--project", p, "--seed", "1", "split", "--test-fraction", "0.25"]) == 0
    assert main(["--project", p, "dsp", "--block", "mfcc", "--fft-size", "512",
                 "--mel-filters", "20", "--cepstral-coeffs", "10",
                 "--model", "2x conv1d (4 to 8)"]) == 0
    assert main(["--project", p, "--seed", "3", "train", "--epochs", "12",
                 "--batch-size", "8", "--lr", "0.05"]) == 0
    return root


def test_pipeline_artifacts(pipeline_project):
    root = pipeline_project
    assert (root / "project.json").is_file()
    assert (root / "impulse.json").is_file()
    assert (root / "artifacts" / "model.f32.json").is_file()
    assert (root / "reports" / "train.json").is_file()
    assert (root / "reports" / "train.png").is_file()


def test_stats_json(pipeline_project, capsys):
    code, out, err = run(capsys, "--project", str(pipeline_project), "--json", "stats")
    assert code == 0
    payload = json.loads(out)
    assert payload["stats"]["total"] == 18
    assert set(payload["stats"]["per_class"]) == {"low", "mid", "high"}


def test_eval_f32(pipeline_project, capsys):
    code, out, err = run(capsys, "--project", str(pipeline_project), "--json",
                         "eval", "--split", "test")
    assert code == 0
    payload = json.loads(out)
    assert payload["report"]["accuracy"] >= 0.5
    assert (pipeline_project / "reports" / "eval_f32_test.png").is_file()


def test_quantize_build_run(pipeline_project, capsys):
    root = pipeline_project
    p = str(root)
    assert main(["--project", p, "quantize"]) == 0
    assert (root / "artifacts" / "model.i8.json").is_file()

    code, out, err = run(capsys, "--project", p, "--json", "build", "--prefix", "model")
    assert code == 0
    assert (root / "deploy" / "model_model.c").is_file()
    assert (root / "deploy" / "model_model.h").is_file()
    assert json.loads(out)["dtype"] == "i8"

    # idempotent regeneration
    before = (root / "deploy" / "model_model.c").read_bytes()
    assert main(["--project", p, "build", "--prefix", "model"]) == 0
    assert (root / "deploy" / "model_model.c").read_bytes() == before

    wav = sorted((root / "raw" / "mid").iterdir())[0]
    code, out, err = run(capsys, "--project", p, "--json", "run", str(wav))
    assert code == 0
    probs = json.loads(out)["probabilities"]
    assert set(probs) == {"low", "mid", "high"}
    assert abs(sum(probs.values()) - 1.0) < 1e-6


def test_estimate_output(pipeline_project, capsys):
    code, out, err = run(capsys, "--project", str(pipeline_project), "--json",
                         "--profile", "nano33", "estimate")
    assert code == 0
    payload = json.loads(out)
    est = payload["estimate"]
    assert est["total_latency_ms"] == pytest.approx(
        est["dsp_latency_ms"] + est["nn_latency_ms"]
    )
    assert payload["fit"]["fits"] in (True, False)
    assert payload["profile"] == "nano33"


def test_missing_artifact_actionable(tmp_path, capsys):
    p = str(tmp_path / "empty")
    assert main(["--project", p, "init"]) == 0
    code, out, err = run(capsys, "--project", p, "build")
    assert code == 1
    assert "model.f32.json" in err or "model.i8.json" in err
    assert "train" in err


def test_usage_error_exit_2(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["bogus-command"])
    assert exc.value.code == 2


def test_uninitialized_project(tmp_path, capsys):
    code, out, err = run(capsys, "--project", str(tmp_path / "nope"), "stats")
    assert code == 1
    assert "init" in err


def test_lock_file(pipeline_project, capsys):
    lock = pipeline_project / ".tinyforge.lock"
    lock.write_text("12345")
    try:
        code, out, err = run(capsys, "--project", str(pipeline_project), "stats")
        assert code == 1
        assert "another command" in err
    finally:
        lock.unlink()


def test_calibrate_small(pipeline_project, capsys):
    code, out, err = run(
        capsys, "--project", str(pipeline_project), "--json",
        "calibrate", "--duration", "12", "--event-rate", "10",
        "--population", "8", "--generations", "4",
    )
    assert code == 0
    payload = json.loads(out)
    assert payload["front"]
    for r in payload["front"]:
        assert 0.0 <= r["far"] <= 1.0
        assert 0.0 <= r["frr"] <= 1.0
    assert (pipeline_project / "reports" / "calibration.json").is_file()
    assert (pipeline_project / "reports" / "calibration.png").is_file()


def test_tune_small(pipeline_project, capsys):
    code, out, err = run(
        capsys, "--project", str(pipeline_project), "--json", "--profile", "esp_eye",
        "tune", "--trials", "3", "--epochs", "6", "--batch-size", "8",
        "--constraint", "ram=8m",
    )
    assert code == 0
    payload = json.loads(out)
    rows = payload["rows"]
    assert 1 <= len(rows) <= 3
    accs = [r["accuracy"] for r in rows]
    assert accs == sorted(accs, reverse=True)
    for r in rows:
        assert r["ram_total_bytes"] <= 8 * 1024 * 1024
    root = pipeline_project
    assert (root / "reports" / "tuner.md").is_file()
    assert (root / "reports" / "tuner.csv").is_file()
    assert (root / "reports" / "tuner.png").is_file()

    # apply a trial into impulse.json
    tid = rows[0]["trial_id"]
    assert main(["--project", str(root), "tune", "--apply", str(tid)]) == 0
    impulse = json.loads((root / "impulse.json").read_text())
    assert impulse["model"] == rows[0]["model"]


def test_json_stream_separation(pipeline_project, capsys):
    code, out, err = run(capsys, "--project", str(pipeline_project), "--json", "stats")
    assert code == 0
    json.loads(out)  # stdout is pure JSON
    assert "samples" in err  # human text went to stderr


def test_json_outputs_validate_against_published_schemas(pipeline_project, capsys):
    import jsonschema

    from tinyforge.schemas import CLI_SCHEMAS

    p = str(pipeline_project)
    # earlier tests may have applied a tuner trial; restore the impulse the
    # stored model was trained with
    assert main(["--project", p, "dsp", "--block", "mfcc", "--fft-size", "512",
                 "--frame-length", "0.02", "--frame-stride", "0.01",
                 "--mel-filters", "20", "--cepstral-coeffs", "10",
                 "--model", "2x conv1d (4 to 8)"]) == 0
    wav = str(sorted((pipeline_project / "raw" / "low").iterdir())[0])
    invocations = {
        "stats": ["stats"],
        "split": ["split", "--test-fraction", "0.25"],
        "dsp": ["dsp"],
        "eval": ["eval", "--split", "test"],
        "quantize": ["quantize"],
        "build": ["build"],
        "estimate": ["estimate"],
        "run": ["run", wav],
    }
    for cmd, argv in invocations.items():
        code, out, err = run(capsys, "--project", p, "--json", *argv)
        assert code == 0, f"{cmd}: {err}"
        payload = json.loads(out)
        jsonschema.validate(payload, CLI_SCHEMAS[cmd])
