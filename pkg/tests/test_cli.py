"""End-to-end tests of the command-line interface."""

import json

import numpy as np
import pytest

from wsed.cli import dispatch
from wsed.containers import read_tensor_file
from wsed.manifest import load_manifest
from wsed.postprocess import PostProcessConfig, detect_events, write_events_csv
from wsed.training import load_checkpoint


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    code = dispatch([
        "make-data", "--out", str(root / "data"), "--classes", "4",
        "--clips", "16", "--snr", "20", "--folds", "4", "--seed", "5",
        "--clip-seconds", "2.0",
    ])
    assert code == 0
    code = dispatch([
        "train", "--manifest", str(root / "data" / "manifest.jsonl"),
        "--fold", "0", "--pooling", "gwrp", "--r", "0.995",
        "--epochs", "4", "--lr", "0.002", "--batch", "6", "--seed", "5",
        "--out", str(root / "model.ckpt"),
    ])
    assert code == 0
    return root


class TestMakeData:
    def test_manifest_line_count(self, tmp_path):
        out = tmp_path / "d"
        assert dispatch(["make-data", "--out", str(out), "--classes", "4",
                         "--clips", "8", "--snr", "0", "--seed", "7",
                         "--clip-seconds", "2.0"]) == 0
        lines = (out / "manifest.jsonl").read_text().strip().splitlines()
        assert len(lines) == 8

    def test_too_many_classes_fails(self, tmp_path, capsys):
        code = dispatch(["make-data", "--out", str(tmp_path / "x"),
                         "--classes", "99", "--clips", "4", "--seed", "0"])
        assert code == 1
        assert "error" in capsys.readouterr().err


class TestTrain:
    def test_outputs_exist(self, workspace):
        assert (workspace / "model.ckpt").exists()
        assert (workspace / "model.ckpt.loss.csv").exists()
        assert (workspace / "model.ckpt.loss.png").exists()
        log = (workspace / "model.ckpt.loss.csv").read_text().splitlines()
        assert log[0] == "epoch,loss"
        assert len(log) == 5

    def test_checkpoint_carries_config(self, workspace):
        ckpt = load_checkpoint(workspace / "model.ckpt")
        assert ckpt.train_config.pooling.kind == "gwrp"
        assert ckpt.train_config.pooling.r == 0.995
        assert ckpt.labels == ["hiss", "purr", "ticker", "warble"]


class TestInfer:
    def test_events_csv_format(self, workspace):
        out = workspace / "events.csv"
        code = dispatch([
            "infer", "--manifest", str(workspace / "data" / "manifest.jsonl"),
            "--fold", "0", "--ckpt", str(workspace / "model.ckpt"),
            "--events-out", str(out),
        ])
        assert code == 0
        lines = out.read_text().strip().splitlines()
        assert lines[0] == "clip_id,label,onset,offset,confidence"
        for line in lines[1:]:
            clip_id, label, onset, offset, conf = line.split(",")
            assert clip_id.startswith("clip_")
            assert len(onset.split(".")[1]) == 3
            assert float(offset) > float(onset)
            assert 0.0 <= float(conf) <= 1.0

    def test_mask_dump_reproduces_event_csv(self, workspace, tmp_path):
        events_a = workspace / "events_a.csv"
        masks_dir = workspace / "masks"
        code = dispatch([
            "infer", "--manifest", str(workspace / "data" / "manifest.jsonl"),
            "--fold", "0", "--ckpt", str(workspace / "model.ckpt"),
            "--events-out", str(events_a), "--masks-out", str(masks_dir),
        ])
        assert code == 0
        ckpt = load_checkpoint(workspace / "model.ckpt")
        hop_seconds = ckpt.feature_config.hop / ckpt.feature_config.sample_rate
        records = [r for r in load_manifest(workspace / "data" / "manifest.jsonl")
                   if r.fold == 0]
        rows = []
        for record in records:
            masks = read_tensor_file(masks_dir / f"{record.clip_id}.masks")
            events, _ = detect_events(masks, ckpt.train_config.pooling,
                                      hop_seconds, ckpt.labels,
                                      PostProcessConfig())
            rows.extend((record.clip_id, ev, conf) for ev, conf in events)
        rebuilt = tmp_path / "events_b.csv"
        write_events_csv(rows, rebuilt)
        assert rebuilt.read_text() == events_a.read_text()


class TestEvaluate:
    def test_report_and_figures(self, workspace):
        report_path = workspace / "report.json"
        code = dispatch([
            "evaluate", "--manifest", str(workspace / "data" / "manifest.jsonl"),
            "--fold", "0", "--ckpt", str(workspace / "model.ckpt"),
            "--report", str(report_path),
        ])
        assert code == 0
        report = json.loads(report_path.read_text())
        for level in ("tagging", "frame", "event", "tf"):
            assert level in report
        assert (workspace / "report.csv").exists()
        assert (workspace / "report_per_class_f1.png").exists()
        assert (workspace / "report_macro.png").exists()

    def test_byte_identical_reports(self, workspace, tmp_path):
        args = [
            "evaluate", "--manifest", str(workspace / "data" / "manifest.jsonl"),
            "--fold", "0", "--ckpt", str(workspace / "model.ckpt"),
            "--no-figures",
        ]
        r1 = tmp_path / "r1.json"
        r2 = tmp_path / "r2.json"
        assert dispatch(args + ["--report", str(r1)]) == 0
        assert dispatch(args + ["--report", str(r2)]) == 0
        assert r1.read_bytes() == r2.read_bytes()


class TestSeparate:
    def test_writes_named_waveforms(self, workspace):
        out_dir = workspace / "sep"
        code = dispatch([
            "separate", "--manifest", str(workspace / "data" / "manifest.jsonl"),
            "--fold", "0", "--ckpt", str(workspace / "model.ckpt"),
            "--out", str(out_dir),
        ])
        assert code == 0
        files = sorted(out_dir.glob("*.wav"))
        assert files, "no separated sources written"
        for path in files:
            clip_id, label = path.stem.split("__")
            assert clip_id.startswith("clip_")
            from wsed.dsp import read_wav

            wav = read_wav(path)
            assert wav.sample_rate == 16000


class TestExitCodes:
    def test_unknown_flag_usage_error(self, capsys):
        assert dispatch(["train", "--bogus-flag", "1"]) == 2
        capsys.readouterr()

    def test_missing_required_flag(self, capsys):
        assert dispatch(["train"]) == 2
        capsys.readouterr()

    def test_missing_file_distinct_code(self, workspace, capsys):
        code = dispatch([
            "infer", "--manifest", "/nonexistent/manifest.jsonl",
            "--fold", "0", "--ckpt", str(workspace / "model.ckpt"),
            "--events-out", "/tmp/x.csv",
        ])
        assert code == 3
        assert "file error" in capsys.readouterr().err

    def test_bad_fold_generic_error(self, workspace, capsys):
        code = dispatch([
            "infer", "--manifest", str(workspace / "data" / "manifest.jsonl"),
            "--fold", "9", "--ckpt", str(workspace / "model.ckpt"),
            "--events-out", "/tmp/y.csv",
        ])
        assert code == 1
        assert "error" in capsys.readouterr().err
