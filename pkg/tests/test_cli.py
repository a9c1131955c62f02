"""End-to-end tests for the command-line interface."""

import hashlib
import json
import os

import numpy as np
import pytest

import skelflow.cli as cli
import skelflow.data as data
import skelflow.flow as flow
import skelflow.metrics as metrics
import skelflow.skeleton as skeleton

TINY_SKELETON = "markers 3\ncenter 1\nheels 0 2\nroot 0\nedge 0 1\nedge 1 2\n"


def sha(path):
    with open(path, "rb") as fh:
        return hashlib.sha256(fh.read()).hexdigest()


def run(args):
    return cli.main(args)


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """One synth dir and one short desk-scale training run, shared."""
    base = tmp_path_factory.mktemp("cli")
    synth_dir = str(base / "synth")
    run_dir = str(base / "run")
    assert run(["synth", "--out", synth_dir, "--steps", "12", "--noise", "0",
                "--path", "line:speed=70", "--path", "circle:radius=250",
                "--seed", "3"]) == 0
    assert run(["train", "--out", run_dir, "--steps", "12",
                "--batch-size", "2", "--nll-frames", "2", "--eval-every", "4",
                "--walker-steps", "12", "--path", "line:speed=70",
                "--seed", "3"]) == 0
    return {"base": base, "synth": synth_dir, "run": run_dir,
            "checkpoint": os.path.join(run_dir, "model.ckpt")}


class TestSynth:
    def test_writes_clips_truth_and_manifest(self, workspace):
        names = sorted(os.listdir(workspace["synth"]))
        assert names == ["clip_000.truth.json", "clip_000.txt",
                         "clip_001.truth.json", "clip_001.txt",
                         "manifest_synth.json"]
        clip = data.load_clip(os.path.join(workspace["synth"], "clip_000.txt"))
        assert clip.marker_count == 21
        truth = json.load(open(os.path.join(workspace["synth"],
                                            "clip_000.truth.json")))
        assert truth["step_count"] == 12
        assert truth["path_spec"] == "line:speed=70"
        assert len(truth["footstep_intervals"]) == 12

    def test_manifest_hashes_match_files(self, workspace):
        manifest = json.load(open(os.path.join(workspace["synth"],
                                               "manifest_synth.json")))
        assert manifest["command"] == "synth"
        assert manifest["seed"] == 3
        for name, digest in manifest["outputs"].items():
            assert sha(os.path.join(workspace["synth"], name)) == digest

    def test_rerun_is_bit_identical(self, workspace, tmp_path):
        again = str(tmp_path / "synth")
        assert run(["synth", "--out", again, "--steps", "12", "--noise", "0",
                    "--path", "line:speed=70", "--path", "circle:radius=250",
                    "--seed", "3"]) == 0
        for name in ("clip_000.txt", "clip_001.txt", "clip_000.truth.json"):
            assert sha(os.path.join(again, name)) == \
                sha(os.path.join(workspace["synth"], name))

    def test_bad_path_spec_is_config_error(self, tmp_path):
        assert run(["synth", "--out", str(tmp_path / "x"),
                    "--path", "zigzag:speed=70"]) == cli.EXIT_CONFIG


class TestTrain:
    def test_checkpoint_and_log(self, workspace):
        model, meta = flow.load_checkpoint(workspace["checkpoint"])
        assert meta["steps_done"] == 12
        assert meta["ablation"] == "stmg"
        assert model.config.flow_steps == 6  # desk preset
        lines = open(os.path.join(workspace["run"],
                                  "train_log.txt")).read().splitlines()
        assert lines[0].startswith("post_init_holdout_nll ")
        assert sum(1 for l in lines if l.startswith("step ")) == 12
        post_init = float(lines[0].split()[1])
        assert meta["final_holdout_nll"] < post_init

    def test_resume_from_checkpoint(self, workspace, tmp_path):
        out = str(tmp_path / "resumed")
        assert run(["train", "--out", out, "--steps", "4",
                    "--batch-size", "2", "--nll-frames", "2",
                    "--eval-every", "4", "--walker-steps", "12",
                    "--path", "line:speed=70", "--seed", "4",
                    "--init-from", workspace["checkpoint"]]) == 0
        model, meta = flow.load_checkpoint(os.path.join(out, "model.ckpt"))
        assert meta["steps_done"] == 4

    def test_mg_ablation_has_no_graph_parameters(self, tmp_path):
        out = str(tmp_path / "mg")
        assert run(["train", "--out", out, "--steps", "2",
                    "--batch-size", "2", "--nll-frames", "2",
                    "--eval-every", "2", "--walker-steps", "12",
                    "--path", "line:speed=70", "--ablation", "mg"]) == 0
        model, _ = flow.load_checkpoint(os.path.join(out, "model.ckpt"))
        census = model.census()
        assert census["graph"] == 0

    def test_empty_data_dir_is_io_error(self, tmp_path):
        empty = tmp_path / "empty"
        empty.mkdir()
        assert run(["train", "--out", str(tmp_path / "o"),
                    "--data-dir", str(empty), "--steps", "2"]) == cli.EXIT_IO

    def test_ingests_clip_directory(self, workspace, tmp_path):
        out = str(tmp_path / "ingest")
        assert run(["train", "--out", out, "--data-dir", workspace["synth"],
                    "--steps", "2", "--batch-size", "2", "--nll-frames", "2",
                    "--eval-every", "2"]) == 0
        assert os.path.exists(os.path.join(out, "model.ckpt"))


class TestGenerate:
    def test_sequences_are_distinct_but_reruns_identical(self, workspace,
                                                         tmp_path):
        out_a = str(tmp_path / "a")
        out_b = str(tmp_path / "b")
        args = ["generate", "--checkpoint", workspace["checkpoint"],
                "--num", "3", "--horizon", "30", "--seed", "11"]
        assert run(args + ["--out", out_a]) == 0
        assert run(args + ["--out", out_b]) == 0
        hashes = [sha(os.path.join(out_a, f"gen_{i:03d}.txt"))
                  for i in range(3)]
        assert len(set(hashes)) == 3
        for i in range(3):
            assert hashes[i] == sha(os.path.join(out_b, f"gen_{i:03d}.txt"))

    def test_zero_temperature_collapses_to_one_sequence(self, workspace,
                                                        tmp_path):
        out = str(tmp_path / "t0")
        assert run(["generate", "--checkpoint", workspace["checkpoint"],
                    "--num", "2", "--horizon", "20", "--seed", "11",
                    "--temperature", "0", "--out", out]) == 0
        assert sha(os.path.join(out, "gen_000.txt")) == \
            sha(os.path.join(out, "gen_001.txt"))

    def test_generated_clips_are_finite_with_sane_bones(self, workspace,
                                                        tmp_path):
        out = str(tmp_path / "chk")
        assert run(["generate", "--checkpoint", workspace["checkpoint"],
                    "--num", "1", "--horizon", "30", "--seed", "2",
                    "--out", out, "--report"]) == 0
        clip = data.load_clip(os.path.join(out, "gen_000.txt"))
        assert np.all(np.isfinite(clip.positions))
        report = metrics.bone_length_analysis(clip, skeleton.default_skeleton())
        assert np.isfinite(report.bl_rmse)
        assert os.path.exists(os.path.join(out, "generate_report.txt"))

    def test_missing_checkpoint_is_io_error(self, tmp_path):
        assert run(["generate", "--checkpoint",
                    str(tmp_path / "nope.ckpt"),
                    "--out", str(tmp_path / "o")]) == cli.EXIT_IO

    def test_skeleton_mismatch_is_config_error(self, workspace, tmp_path):
        other = tmp_path / "tiny.txt"
        other.write_text(TINY_SKELETON)
        assert run(["generate", "--checkpoint", workspace["checkpoint"],
                    "--skeleton", str(other),
                    "--out", str(tmp_path / "o")]) == cli.EXIT_CONFIG


class TestReconstruct:
    def test_right_arm_provenance(self, workspace, tmp_path):
        out = str(tmp_path / "rec")
        assert run(["reconstruct", "--checkpoint", workspace["checkpoint"],
                    "--mask", "right_arm", "--num", "2", "--horizon", "12",
                    "--seed", "9", "--out", out]) == 0
        for i in range(2):
            side = json.load(open(os.path.join(
                out, f"recon_{i:03d}.provenance.json")))
            assert side["masked_markers"] == [18, 19, 20]
            assert side["preset"] == "right_arm"
        summary = open(os.path.join(out,
                                    "reconstruct_summary.txt")).read()
        assert summary.splitlines()[0] == \
            "# clip preset masked_markers bl_rmse_cm"
        assert "18,19,20" in summary

    def test_none_preset_preserves_input_past(self, workspace, tmp_path):
        out = str(tmp_path / "none")
        assert run(["reconstruct", "--checkpoint", workspace["checkpoint"],
                    "--mask", "none", "--num", "1", "--horizon", "10",
                    "--seed", "5", "--out", out]) == 0
        model, _ = flow.load_checkpoint(workspace["checkpoint"])
        config = cli.resolve_config(cli.build_parser().parse_args(
            ["reconstruct", "--checkpoint", workspace["checkpoint"],
             "--mask", "none", "--num", "1", "--horizon", "10",
             "--seed", "5", "--out", out]))
        history, _ = cli._reconstruction_input(config, model, "")
        clip = data.load_clip(os.path.join(out, "recon_000.txt"))
        t_h = model.config.history
        np.testing.assert_array_equal(clip.positions[:, :, :t_h], history)

    def test_unknown_preset_is_config_error(self, workspace, tmp_path):
        assert run(["reconstruct", "--checkpoint", workspace["checkpoint"],
                    "--mask", "torso", "--out",
                    str(tmp_path / "o")]) == cli.EXIT_CONFIG


class TestEvaluate:
    def test_reports_recover_generator_step_count(self, workspace, tmp_path):
        out = str(tmp_path / "ev")
        assert run(["evaluate", "--clips", workspace["synth"],
                    "--out", out]) == 0
        lines = open(os.path.join(out,
                                  "evaluate_summary.txt")).read().splitlines()
        assert lines[0] == cli.SUMMARY_HEADER
        body = [l for l in lines if not l.startswith("#")]
        assert len(body) == 2
        for row in body:
            assert int(row.split()[1]) == 12
        assert lines[-1].startswith("# aggregate mean_f_est 12.000000")

    def test_per_clip_artifacts_written(self, workspace, tmp_path):
        out = str(tmp_path / "ev2")
        assert run(["evaluate", "--clips", workspace["synth"],
                    "--out", out]) == 0
        for stem in ("clip_000", "clip_001"):
            for suffix in (".footsteps.txt", ".sweep.txt", ".bones.txt"):
                assert os.path.exists(os.path.join(out, stem + suffix))
        sweep = open(os.path.join(out, "clip_000.sweep.txt")).read()
        assert sweep.splitlines()[0] == "# v_tol_mm_s f_est"
        assert len(sweep.splitlines()) == 602

    def test_empty_dir_is_explicit_error(self, tmp_path):
        empty = tmp_path / "none"
        empty.mkdir()
        assert run(["evaluate", "--clips", str(empty),
                    "--out", str(tmp_path / "o")]) == cli.EXIT_IO

    def test_missing_clips_flag_is_config_error(self, tmp_path, monkeypatch):
        monkeypatch.delenv(cli.DATA_DIR_ENV, raising=False)
        assert run(["evaluate", "--out",
                    str(tmp_path / "o")]) == cli.EXIT_CONFIG

    def test_reruns_are_bit_identical(self, workspace, tmp_path):
        out_a = str(tmp_path / "a")
        out_b = str(tmp_path / "b")
        for out in (out_a, out_b):
            assert run(["evaluate", "--clips", workspace["synth"],
                        "--out", out]) == 0
        assert sha(os.path.join(out_a, "evaluate_summary.txt")) == \
            sha(os.path.join(out_b, "evaluate_summary.txt"))


class TestJobConfig:
    def test_json_config_round_trip(self, tmp_path):
        config = cli.JobConfig()
        blob = json.dumps(config.to_dict())
        again = cli.JobConfig.from_dict(json.loads(blob))
        assert again == config

    def test_defaults_follow_published_setup(self):
        model = cli.JobConfig().model
        assert model.flow_steps == 16
        assert model.history == 10
        assert tuple(model.kernel_schedule) == (3,) * 10 + (5,) * 4 + (7,) * 2
        assert model.temporal_kernel == 9
        assert model.lstm_hidden == 512 and model.lstm_layers == 2

    def test_unknown_config_key_is_config_error(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps({"horizont": 5}))
        assert run(["synth", "--config", str(bad),
                    "--out", str(tmp_path / "o")]) == cli.EXIT_CONFIG

    def test_config_file_values_apply_and_flags_override(self, tmp_path):
        blob = tmp_path / "cfg.json"
        blob.write_text(json.dumps({"horizon": 55, "temperature": 0.5}))
        args = cli.build_parser().parse_args(
            ["generate", "--config", str(blob), "--temperature", "0.25"])
        config = cli.resolve_config(args)
        assert config.horizon == 55
        assert config.temperature == 0.25

    def test_invalid_values_rejected(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps({"clip_format": "parquet"}))
        assert run(["synth", "--config", str(bad),
                    "--out", str(tmp_path / "o")]) == cli.EXIT_CONFIG

    def test_malformed_json_is_io_error(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text("{not json")
        assert run(["synth", "--config", str(bad),
                    "--out", str(tmp_path / "o")]) == cli.EXIT_IO
