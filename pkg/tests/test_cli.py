import csv
import hashlib
import json
import re
import subprocess
import sys

import pytest

from videossl.cli import main
from videossl.models import load_teacher

TINY_CONFIG = """\
total_iterations = 12
eval_every = 4
batch_size = 8
label_fraction = 0.25
model.clip_frames = 4
model.clip_h = 8
model.clip_w = 8
model.block_channels = 4,6
data.frames_per_video = 8
data.gen_h = 12
data.gen_w = 12
data.seed = 3
data.n_per_class = 4
data.n_test_per_class = 2
"""


def sha(path):
    return hashlib.sha256(path.read_bytes()).hexdigest()


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    cfg = root / "tiny.txt"
    cfg.write_text(TINY_CONFIG)
    assert main(["gen-data", "--spec", str(cfg), "--out", str(root / "data.vssld")]) == 0
    assert main(["train-teacher", "--data", str(root / "data.vssld"), "--out", str(root / "teacher.vsslc"),
                 "--epochs", "2", "--config", str(cfg)]) == 0
    return root


def with_method(root, method, name):
    path = root / name
    path.write_text(TINY_CONFIG + f"method = {method}\n")
    return path


class TestGenData:
    def test_counts_and_determinism(self, workspace, tmp_path, capsys):
        assert main(["gen-data", "--spec", str(workspace / "tiny.txt"), "--out", str(tmp_path / "d")]) == 0
        out = capsys.readouterr().out
        assert "32 train / 16 test" in out and "channel mean" in out
        assert sha(tmp_path / "d") == sha(workspace / "data.vssld")

    def test_flags_override_config(self, workspace, tmp_path, capsys):
        main(["gen-data", "--spec", str(workspace / "tiny.txt"), "--out", str(tmp_path / "d"),
              "--n-per-class", "3", "--n-test", "1"])
        assert "24 train / 8 test" in capsys.readouterr().out

    def test_missing_out_is_usage_error(self):
        with pytest.raises(SystemExit) as info:
            main(["gen-data"])
        assert info.value.code == 2

    def test_bad_spec_key(self, tmp_path):
        (tmp_path / "bad.txt").write_text("data.colour = red\n")
        assert main(["gen-data", "--spec", str(tmp_path / "bad.txt"), "--out", str(tmp_path / "d")]) == 2


class TestTrainTeacher:
    def test_checkpoint_loads_frozen(self, workspace):
        t = load_teacher(workspace / "teacher.vsslc")
        assert t.frozen and t.checksum() == load_teacher(workspace / "teacher.vsslc").checksum()

    def test_bad_data_path(self, tmp_path):
        assert main(["train-teacher", "--data", str(tmp_path / "none"), "--out", str(tmp_path / "t")]) == 3

    def test_corrupt_data(self, tmp_path):
        (tmp_path / "junk").write_bytes(b"not a dataset")
        assert main(["train-teacher", "--data", str(tmp_path / "junk"), "--out", str(tmp_path / "t")]) == 3


class TestTrain:
    def test_supervised_without_teacher(self, workspace, tmp_path):
        cfg = with_method(tmp_path, "SUPERVISED", "s.txt")
        assert main(["train", "--config", str(cfg), "--data", str(workspace / "data.vssld"),
                     "--out", str(tmp_path / "run")]) == 0
        run = tmp_path / "run"
        for name in ("metrics.csv", "checkpoint.vsslc", "config.txt", "summary.json"):
            assert (run / name).exists()
        rows = list(csv.reader((run / "metrics.csv").open()))
        assert len(rows) == 1 + 12 // 4 + 1
        summary = json.loads((run / "summary.json").read_text())
        assert summary["method"] == "SUPERVISED" and len(summary["per_class_top1"]) == 8

    def test_sd_requires_teacher(self, workspace, tmp_path):
        cfg = with_method(tmp_path, "SD", "sd.txt")
        assert main(["train", "--config", str(cfg), "--data", str(workspace / "data.vssld"),
                     "--out", str(tmp_path / "run")]) == 2

    def test_deterministic_rerun_and_effective_config(self, workspace, tmp_path):
        cfg = with_method(tmp_path, "VIDEOSSL", "v.txt")
        args = ["--data", str(workspace / "data.vssld"), "--teacher", str(workspace / "teacher.vsslc")]
        assert main(["train", "--config", str(cfg), *args, "--out", str(tmp_path / "a")]) == 0
        assert main(["train", "--config", str(cfg), *args, "--out", str(tmp_path / "b")]) == 0
        # re-run from the stored effective config
        assert main(["train", "--config", str(tmp_path / "a" / "config.txt"), *args,
                     "--out", str(tmp_path / "c")]) == 0
        for name in ("metrics.csv", "summary.json", "checkpoint.vsslc"):
            assert sha(tmp_path / "a" / name) == sha(tmp_path / "b" / name) == sha(tmp_path / "c" / name)

    def test_missing_data(self, tmp_path):
        cfg = with_method(tmp_path, "SUPERVISED", "s.txt")
        assert main(["train", "--config", str(cfg), "--data", str(tmp_path / "x"), "--out", str(tmp_path / "r")]) == 3

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_numeric_abort(self, workspace, tmp_path):
        cfg = tmp_path / "nan.txt"
        cfg.write_text(TINY_CONFIG + "method = SUPERVISED\noptim.lr0 = 1e300\n")
        assert main(["train", "--config", str(cfg), "--data", str(workspace / "data.vssld"),
                     "--out", str(tmp_path / "r")]) == 4


@pytest.fixture(scope="module")
def sweep(workspace):
    out = workspace / "sweep"
    assert main(["compare", "--config", str(workspace / "tiny.txt"), "--data", str(workspace / "data.vssld"),
                 "--teacher", str(workspace / "teacher.vsslc"), "--methods", "SUPERVISED,VIDEOSSL",
                 "--fractions", "0.25", "--seeds", "1,2,3", "--out", str(out)]) == 0
    return out


class TestCompareAndReport:
    def test_sweep_rows(self, sweep):
        rows = list(csv.DictReader((sweep / "sweep.csv").open()))
        assert list(rows[0]) == ["method", "label_fraction", "seed", "clip_top1", "video_top1", "runtime_seconds"]
        assert [(r["method"], r["seed"]) for r in rows] == [
            ("SUPERVISED", "1"), ("SUPERVISED", "2"), ("SUPERVISED", "3"),
            ("VIDEOSSL", "1"), ("VIDEOSSL", "2"), ("VIDEOSSL", "3")]

    def test_svg(self, sweep):
        svg = (sweep / "video_top1.svg").read_text()
        assert svg.count("<polyline") == 2
        assert "label fraction" in svg and "video top-1" in svg

    def test_runs_are_paired(self, sweep):
        a = (sweep / "runs" / "SUPERVISED_P0.25_seed1" / "config.txt").read_text()
        b = (sweep / "runs" / "VIDEOSSL_P0.25_seed1" / "config.txt").read_text()
        diff = [x for x, y in zip(a.splitlines(), b.splitlines()) if x != y]
        assert diff == ["method = SUPERVISED"]

    def test_report(self, sweep, tmp_path, capsys):
        a = sweep / "runs" / "SUPERVISED_P0.25_seed1"
        b = sweep / "runs" / "VIDEOSSL_P0.25_seed1"
        assert main(["report", "--run-a", str(a), "--run-b", str(b), "--out", str(tmp_path / "r.csv")]) == 0
        lines = (tmp_path / "r.csv").read_text().splitlines()
        assert lines[0] == "class_id,class_name,top1_a,top1_b,delta" and len(lines) == 1 + 8
        deltas = [float(x.split(",")[-1]) for x in lines[1:]]
        assert deltas == sorted(deltas, reverse=True)
        table = capsys.readouterr().out
        assert "SUPERVISED" in table and "VIDEOSSL" in table

    def test_report_same_run(self, sweep, tmp_path):
        a = sweep / "runs" / "VIDEOSSL_P0.25_seed2"
        main(["report", "--run-a", str(a), "--run-b", str(a), "--out", str(tmp_path / "r.csv")])
        rows = (tmp_path / "r.csv").read_text().splitlines()[1:]
        assert all(float(r.split(",")[-1]) == 0.0 for r in rows)

    def test_report_missing_run(self, sweep, tmp_path):
        assert main(["report", "--run-a", str(tmp_path / "no"), "--run-b", str(sweep),
                     "--out", str(tmp_path / "r.csv")]) == 3

    def test_bad_method_list(self, workspace, tmp_path):
        assert main(["compare", "--data", str(workspace / "data.vssld"), "--methods", "NOPE",
                     "--out", str(tmp_path / "o")]) == 2

    def test_parallel_matches_sequential(self, workspace, sweep, tmp_path, monkeypatch):
        monkeypatch.setenv("VSSL_THREADS", "2")
        out = tmp_path / "par"
        assert main(["compare", "--config", str(workspace / "tiny.txt"), "--data", str(workspace / "data.vssld"),
                     "--teacher", str(workspace / "teacher.vsslc"), "--methods", "SUPERVISED,VIDEOSSL",
                     "--fractions", "0.25", "--seeds", "1,2,3", "--out", str(out)]) == 0

        def strip_runtime(p):
            return [re.sub(r",[^,]*$", "", line) for line in p.read_text().splitlines()]

        assert strip_runtime(out / "sweep.csv") == strip_runtime(sweep / "sweep.csv")
        run = "VIDEOSSL_P0.25_seed3"
        assert sha(out / "runs" / run / "metrics.csv") == sha(sweep / "runs" / run / "metrics.csv")


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "videossl", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0
    for cmd in ("gen-data", "train-teacher", "train", "compare", "report"):
        assert cmd in proc.stdout
