"""End-to-end CLI behavior: wiring, output formats, exit codes."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import pytest

from dgloc import PipelineConfig, io
from dgloc.cli import main


@pytest.fixture()
def tiny_config_file(tmp_path, tiny_config):
    path = tmp_path / "tiny.cfg"
    io.write_config(path, tiny_config)
    return str(path)


def tiny_synth_flags():
    return [
        "--scenes", "2",
        "--frames", "500",
        "--views", "2",
        "--noise", "0.05",
        "--event-len", "60,90",
    ]


def run_pipeline(out_dir, config_file, extra=()):
    argv = [
        "pipeline",
        "--config", config_file,
        "--seed", "0",
        "--out", str(out_dir),
        *tiny_synth_flags(),
        *extra,
    ]
    return main(argv)


class TestSmoothDemo:
    def test_prints_worked_example(self, capsys):
        assert main(["smooth-demo", "--beta", "10", "--counts", "64,0,0"]) == 0
        out = capsys.readouterr().out.splitlines()
        assert out[0] == "# counts=64,0,0 beta=10"
        assert out[1] == "0.996688,0.001656,0.001656"

    def test_multiple_counts_and_betas(self, capsys):
        code = main(
            [
                "smooth-demo",
                "--counts", "64,0,0",
                "--counts", "32,32,0",
                "--betas", "10,20",
            ]
        )
        assert code == 0
        out = capsys.readouterr().out.splitlines()
        assert len(out) == 8  # comment + row per (counts, beta) pair
        assert out[4] == "# counts=32,32,0 beta=10"

    def test_out_file_matches_stdout(self, capsys, tmp_path):
        dest = tmp_path / "rows.txt"
        main(["smooth-demo", "--beta", "10", "--counts", "64,0,0", "--out", str(dest)])
        assert dest.read_text() == capsys.readouterr().out

    def test_plot_written(self, tmp_path, capsys):
        dest = tmp_path / "grid.png"
        main(
            [
                "smooth-demo",
                "--counts", "64,0,0",
                "--betas", "5,10",
                "--plot", str(dest),
            ]
        )
        capsys.readouterr()
        assert dest.exists()
        assert dest.read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"

    def test_uniform_counts(self, capsys):
        main(["smooth-demo", "--beta", "5", "--counts", "7,7,7,7"])
        out = capsys.readouterr().out.splitlines()
        assert out[1] == "0.250000,0.250000,0.250000,0.250000"

    @pytest.mark.parametrize("counts", ["a,b", "1,-2", ""])
    def test_bad_counts_exit_2(self, counts, capsys):
        assert main(["smooth-demo", "--counts", counts]) == 2
        assert "error:" in capsys.readouterr().err

    def test_mismatched_count_widths_exit_2(self, capsys):
        code = main(["smooth-demo", "--counts", "1,2", "--counts", "1,2,3"])
        assert code == 2


class TestExitCodes:
    def test_missing_file_exit_2(self, capsys, tmp_path):
        code = main(
            [
                "eval",
                "--annotations", str(tmp_path / "nope.csv"),
                "--predictions", str(tmp_path / "nope2.csv"),
            ]
        )
        assert code == 2
        assert "error:" in capsys.readouterr().err

    def test_bad_config_value_exit_2(self, capsys, tmp_path):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("tau=1.5\n")
        code = main(["smooth-demo", "--config", str(cfg), "--counts", "1,0"])
        assert code == 2

    def test_version_flag(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["--version"])
        assert exc.value.code == 0
        assert "dgloc" in capsys.readouterr().out

    def test_missing_subcommand(self, capsys):
        with pytest.raises(SystemExit):
            main([])

    def test_corrupt_model_exit_2(self, tmp_path, capsys, tiny_config_file):
        out = tmp_path / "synth"
        assert main(
            ["synth", "--config", tiny_config_file, "--seed", "0",
             "--out", str(out), *tiny_synth_flags()]
        ) == 0
        bad_model = tmp_path / "bad.bin"
        bad_model.write_bytes(b"JUNKJUNKJUNK")
        code = main(
            [
                "infer",
                "--config", tiny_config_file,
                "--features", str(out / "features.bin"),
                "--model", str(bad_model),
                "--out", str(tmp_path / "probs.csv"),
            ]
        )
        assert code == 2


class TestConfigPrecedence:
    def test_config_file_applies(self, capsys, tmp_path):
        cfg = tmp_path / "beta.cfg"
        cfg.write_text("beta=10.0\n")
        main(["smooth-demo", "--config", str(cfg), "--counts", "64,0,0"])
        out = capsys.readouterr().out.splitlines()
        assert out[1] == "0.996688,0.001656,0.001656"

    def test_flag_overrides_config(self, capsys, tmp_path):
        cfg = tmp_path / "beta.cfg"
        cfg.write_text("beta=10.0\n")
        main(
            [
                "smooth-demo",
                "--config", str(cfg),
                "--beta", "1000000",
                "--counts", "64,0,0",
            ]
        )
        out = capsys.readouterr().out.splitlines()
        # at huge temperature the distribution is essentially uniform
        assert out[1] == "0.333333,0.333334,0.333334" or out[1].startswith("0.3333")


class TestPipeline:
    def test_end_to_end_metrics_and_outputs(self, tmp_path, capsys, tiny_config_file):
        out = tmp_path / "run"
        assert run_pipeline(out, tiny_config_file) == 0
        lines = capsys.readouterr().out.splitlines()
        metrics = dict(line.split("=") for line in lines)
        assert float(metrics["f1"]) == 1.0
        assert metrics["tp"] == "6"  # 3 classes x 2 scenes

        assert (out / "features.bin").exists()
        assert (out / "annotations.csv").exists()
        assert (out / "model.bin").exists()
        assert (out / "segment_probs.csv").exists()
        assert (out / "predictions.csv").exists()
        assert (out / "report" / "metrics.txt").exists()
        assert (out / "report" / "per_class.csv").exists()
        assert (out / "report" / "figures" / "metrics_per_class.png").exists()
        scene_files = sorted((out / "scenes").glob("scene_*.csv"))
        assert len(scene_files) == 2
        figures = sorted((out / "report" / "figures").glob("scene_*.png"))
        assert len(figures) == 2

    def test_manifest_contents(self, tmp_path, capsys, tiny_config_file):
        out = tmp_path / "run"
        run_pipeline(out, tiny_config_file)
        capsys.readouterr()
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["command"] == "pipeline"
        assert manifest["seed"] == 0
        assert manifest["config"]["n_classes"] == 4
        assert manifest["synth"]["frames"] == 500
        assert "predictions.csv" in manifest["outputs"]
        assert "model.bin" in manifest["outputs"]
        assert set(manifest["timings_s"]) == {
            "synth", "train", "infer", "fuse", "localize", "eval",
        }
        assert manifest["versions"]["numpy"] == np.__version__

    def test_metrics_file_matches_stdout(self, tmp_path, capsys, tiny_config_file):
        out = tmp_path / "run"
        run_pipeline(out, tiny_config_file)
        stdout = capsys.readouterr().out
        assert (out / "report" / "metrics.txt").read_text() == stdout

    def test_emit_signals(self, tmp_path, capsys, tiny_config_file):
        out = tmp_path / "run"
        run_pipeline(out, tiny_config_file, extra=["--emit-signals"])
        capsys.readouterr()
        sig_files = sorted((out / "signals").glob("scene_*.csv"))
        assert len(sig_files) == 2
        first = sig_files[0].read_text().splitlines()
        assert first[0].startswith("# scene 0")
        assert len(first) == 1 + 500  # header plus one row per frame


class TestStageChaining:
    def test_stages_reproduce_pipeline(self, tmp_path, capsys, tiny_config_file):
        pipe_out = tmp_path / "pipeline"
        assert run_pipeline(pipe_out, tiny_config_file) == 0
        pipeline_metrics = capsys.readouterr().out

        stage = tmp_path / "stages"
        base = ["--config", tiny_config_file, "--seed", "0"]
        assert main(
            ["synth", *base, "--out", str(stage), *tiny_synth_flags()]
        ) == 0
        assert main(
            [
                "train", *base,
                "--features", str(stage / "features.bin"),
                "--annotations", str(stage / "annotations.csv"),
                "--out", str(stage / "model.bin"),
            ]
        ) == 0
        capsys.readouterr()
        assert main(
            [
                "infer", *base,
                "--features", str(stage / "features.bin"),
                "--model", str(stage / "model.bin"),
                "--out", str(stage / "segment_probs.csv"),
            ]
        ) == 0
        assert main(
            [
                "fuse", *base,
                "--probs", str(stage / "segment_probs.csv"),
                "--out", str(stage / "scenes"),
            ]
        ) == 0
        assert main(
            [
                "localize", *base,
                "--scenes", str(stage / "scenes"),
                "--out", str(stage / "predictions.csv"),
            ]
        ) == 0
        assert main(
            [
                "eval", *base,
                "--annotations", str(stage / "annotations.csv"),
                "--predictions", str(stage / "predictions.csv"),
            ]
        ) == 0
        stage_metrics = capsys.readouterr().out

        assert stage_metrics == pipeline_metrics
        for name in ("features.bin", "annotations.csv", "model.bin",
                     "segment_probs.csv", "predictions.csv"):
            assert (stage / name).read_bytes() == (pipe_out / name).read_bytes()
        for scene_file in sorted((pipe_out / "scenes").glob("*.csv")):
            twin = stage / "scenes" / scene_file.name
            assert twin.read_bytes() == scene_file.read_bytes()

    def test_localize_flags(self, tmp_path, capsys, tiny_config_file):
        stage = tmp_path / "stages"
        base = ["--config", tiny_config_file, "--seed", "0"]
        main(["synth", *base, "--out", str(stage), *tiny_synth_flags()])
        main(
            [
                "train", *base,
                "--features", str(stage / "features.bin"),
                "--annotations", str(stage / "annotations.csv"),
                "--out", str(stage / "model.bin"),
            ]
        )
        main(
            [
                "infer", *base,
                "--features", str(stage / "features.bin"),
                "--model", str(stage / "model.bin"),
                "--out", str(stage / "segment_probs.csv"),
            ]
        )
        main(
            [
                "fuse", *base,
                "--probs", str(stage / "segment_probs.csv"),
                "--out", str(stage / "scenes"),
            ]
        )
        code = main(
            [
                "localize", *base,
                "--scenes", str(stage / "scenes"),
                "--out", str(stage / "predictions.csv"),
                "--emit-signals", str(stage / "signals"),
                "--plot", str(stage / "figures"),
                "--no-eop",
            ]
        )
        capsys.readouterr()
        assert code == 0
        assert sorted((stage / "signals").glob("*.csv"))
        assert sorted((stage / "figures").glob("*.png"))


class TestEval:
    def test_empty_predictions_all_zero(self, tmp_path, capsys, tiny_config_file):
        stage = tmp_path / "stage"
        main(
            ["synth", "--config", tiny_config_file, "--seed", "0",
             "--out", str(stage), *tiny_synth_flags()]
        )
        io.write_predictions(stage / "empty.csv", [])
        code = main(
            [
                "eval",
                "--config", tiny_config_file,
                "--annotations", str(stage / "annotations.csv"),
                "--predictions", str(stage / "empty.csv"),
            ]
        )
        assert code == 0
        out = capsys.readouterr().out.splitlines()
        assert "tp=0" in out
        assert "fp=0" in out
        assert "fn=6" in out
        assert "precision=0.000000" in out
        assert "recall=0.000000" in out
        assert "f1=0.000000" in out

    def test_per_class_table_and_report(self, tmp_path, capsys, tiny_config_file):
        out = tmp_path / "run"
        run_pipeline(out, tiny_config_file)
        capsys.readouterr()
        report = tmp_path / "report"
        code = main(
            [
                "eval",
                "--config", tiny_config_file,
                "--annotations", str(out / "annotations.csv"),
                "--predictions", str(out / "predictions.csv"),
                "--per-class",
                "--report", str(report),
            ]
        )
        assert code == 0
        lines = capsys.readouterr().out.splitlines()
        assert "# class_id,tp,fp,fn,precision,recall,f1" in lines
        class_rows = [l for l in lines if l and l[0].isdigit()]
        assert [row.split(",")[0] for row in class_rows] == ["1", "2", "3"]
        for row in class_rows:
            assert row.endswith("1.000000,1.000000,1.000000")
        assert (report / "per_class.csv").read_text().splitlines()[1:] == class_rows
        assert (report / "figures" / "metrics_per_class.png").exists()


class TestDeterminism:
    def test_repeat_runs_byte_identical(self, tmp_path, capsys, tiny_config_file):
        a, b = tmp_path / "a", tmp_path / "b"
        run_pipeline(a, tiny_config_file)
        run_pipeline(b, tiny_config_file, extra=["--threads", "8"])
        capsys.readouterr()
        files_a = sorted(
            p.relative_to(a) for p in a.rglob("*") if p.is_file()
        )
        files_b = sorted(
            p.relative_to(b) for p in b.rglob("*") if p.is_file()
        )
        assert files_a == files_b
        for rel in files_a:
            if rel.name == "manifest.json":
                ma = json.loads((a / rel).read_text())
                mb = json.loads((b / rel).read_text())
                ma.pop("timings_s"), mb.pop("timings_s")
                assert ma == mb
            else:
                assert (a / rel).read_bytes() == (b / rel).read_bytes(), rel
