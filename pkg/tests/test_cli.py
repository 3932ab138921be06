import csv
import subprocess
import sys

import pytest

from thrustlab import cli, evalkit
from thrustlab.agent.train import CURVE_FIELDS, read_curve
from thrustlab.errors import NonFiniteLoss


def run(*argv):
    return cli.main([str(a) for a in argv])


def small(*argv):
    return [*argv, "--num-envs", 8]


@pytest.fixture(scope="module")
def checkpoints(tmp_path_factory):
    root = tmp_path_factory.mktemp("ckpt")
    out = {}
    for kind in ("gotoxy", "gotoxyz", "trackxyvelocity"):
        assert run("train", "--task", kind, "--epochs", 0, "--out", root / kind) == 0
        out[kind] = root / kind / "checkpoint.pt"
    return out


def test_train_zero_epochs(tmp_path):
    assert run(*small("train", "--task", "gotoxy", "--epochs", 0, "--out", tmp_path)) == 0
    assert (tmp_path / "checkpoint.pt").exists()
    assert read_curve(tmp_path / "curve.csv") == []
    manifest = evalkit.read_manifest(tmp_path / "run_manifest.txt")
    assert manifest["command"] == "train" and manifest["seed"] == "0"


def test_train_curve_one_row_per_epoch(tmp_path):
    assert run("train", "--task", "gotoxy", "--num-envs", 256, "--seed", 1, "--epochs", 2, "--out", tmp_path) == 0
    with open(tmp_path / "curve.csv") as fh:
        rows = list(csv.DictReader(line for line in fh if not line.startswith("#")))
    assert [int(r["epoch"]) for r in rows] == [1, 2]
    assert list(rows[0]) == CURVE_FIELDS


def test_train_is_reproducible_from_the_manifest_config(tmp_path):
    assert run(*small("train", "--task", "gotoxy", "--epochs", 2, "--seed", 5, "--out", tmp_path / "a")) == 0
    resolved = tmp_path / "a" / "resolved_config.yaml"
    assert run(*small("train", "--config", resolved, "--epochs", 2, "--seed", 5, "--out", tmp_path / "b")) == 0
    a = read_curve(tmp_path / "a" / "curve.csv")
    b = read_curve(tmp_path / "b" / "curve.csv")
    assert [r["mean_return"] for r in a] == [r["mean_return"] for r in b]


def test_missing_config_file(tmp_path, capsys):
    assert run("train", "--config", tmp_path / "nope.yaml", "--out", tmp_path) == cli.EXIT_CONFIG
    assert "cannot read" in capsys.readouterr().err


def test_invalid_config_value(tmp_path, capsys):
    bad = tmp_path / "bad.yaml"
    bad.write_text("task:\n  kind: gotoxy\nppo:\n  gamma: 2.0\n")
    assert run("train", "--config", bad, "--out", tmp_path) == cli.EXIT_CONFIG
    assert "bad.yaml:4" in capsys.readouterr().err


def test_numeric_failure_exit_code(tmp_path, monkeypatch):
    import thrustlab.agent.train as train_mod

    def boom(*args, **kwargs):
        raise NonFiniteLoss("policy_loss is nan at epoch 1")

    monkeypatch.setattr(train_mod, "train", boom)
    assert run(*small("train", "--epochs", 1, "--out", tmp_path)) == cli.EXIT_NUMERIC


def test_eval_defaults_are_paper_protocol():
    args = cli.build_parser().parse_args(["eval", "--checkpoint", "x.pt"])
    assert args.num_envs is None and args.steps is None
    from thrustlab.config import RunConfig

    cfg = RunConfig.for_task("gotoxy")
    assert (cfg.eval.n_envs, cfg.eval.steps) == (1024, 500)


def test_eval_smoke(checkpoints, tmp_path, capsys):
    assert run("eval", "--checkpoint", checkpoints["gotoxy"], "--num-envs", 8, "--steps", 10, "--out", tmp_path) == 0
    assert "final_distance" in capsys.readouterr().out
    rows = [l for l in (tmp_path / "per_step.csv").read_text().splitlines() if not l.startswith("#")]
    assert len(rows) == 1 + 8 * 10
    assert evalkit.read_manifest(tmp_path / "run_manifest.txt")["n_envs"] == "8"


def test_eval_reports_are_reproducible(checkpoints, tmp_path):
    for name in ("a", "b"):
        assert run("eval", "--checkpoint", checkpoints["gotoxy"], "--num-envs", 4, "--steps", 6, "--seed", 3, "--out", tmp_path / name) == 0
    for name in ("per_step.csv", "per_episode.csv", "summary.csv", "trajectories.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_eval_3dof_checkpoint_on_6dof_task(checkpoints, tmp_path, capsys):
    code = run("eval", "--checkpoint", checkpoints["gotoxy"], "--task", "gotoxyz", "--num-envs", 2, "--steps", 2, "--out", tmp_path)
    assert code == cli.EXIT_MISMATCH
    assert "mismatch" in capsys.readouterr().err


def test_eval_unreadable_checkpoint(tmp_path):
    junk = tmp_path / "junk.pt"
    junk.write_text("junk")
    assert run("eval", "--checkpoint", junk, "--out", tmp_path) == cli.EXIT_MISMATCH


def test_track_circle(checkpoints, tmp_path):
    assert run("track", "--checkpoint", checkpoints["trackxyvelocity"], "--shape", "circle", "--steps", 50, "--out", tmp_path) == 0
    with open(tmp_path / "tracking.csv") as fh:
        rows = list(csv.DictReader(line for line in fh if not line.startswith("#")))
    assert len(rows) == 50
    for r in rows:
        speed = (float(r["cmd_vx"]) ** 2 + float(r["cmd_vy"]) ** 2) ** 0.5
        assert speed == pytest.approx(0.25, abs=1e-12)
    assert evalkit.read_manifest(tmp_path / "run_manifest.txt")["shape"] == "circle"


def test_track_unknown_shape(checkpoints, tmp_path):
    assert run("track", "--checkpoint", checkpoints["trackxyvelocity"], "--shape", "hexagon", "--out", tmp_path) == cli.EXIT_CONFIG


def test_track_needs_tracking_checkpoint(checkpoints, tmp_path):
    assert run("track", "--checkpoint", checkpoints["gotoxy"], "--shape", "circle", "--out", tmp_path) == cli.EXIT_MISMATCH


def bench_keys(text):
    return [line.split("=")[0] for line in text.splitlines()]


def test_bench_small(capsys):
    assert run("bench", "--num-envs", 1, "--steps", 100) == 0
    first = capsys.readouterr().out
    assert "steps_per_second=" in first
    assert run("bench", "--num-envs", 1, "--steps", 100) == 0
    assert bench_keys(capsys.readouterr().out) == bench_keys(first)


def test_bench_16000_envs(tmp_path):
    assert run("bench", "--num-envs", 16000, "--steps", 5, "--out", tmp_path) == 0
    report = dict(line.split("=", 1) for line in (tmp_path / "bench.txt").read_text().splitlines())
    assert report["n_envs"] == "16000"


def test_usage_error_is_exit_2():
    with pytest.raises(SystemExit) as exc:
        run("bench", "--num-envs", 0)
    assert exc.value.code == 2


def test_console_script_entry_point():
    out = subprocess.run([sys.executable, "-m", "thrustlab.cli", "--version"], capture_output=True, text=True)
    assert out.returncode == 0 and out.stdout.startswith("thrustlab ")
