"""Tests for CLI functionality."""
import json

import pytest
from click.testing import CliRunner

from approxtrain import __version__
from approxtrain.cli import main
from approxtrain.config import ConfigLoader
from approxtrain.core.checkpoint import load_checkpoint, save_checkpoint


@pytest.fixture
def cli_runner():
    """Create a Click CLI runner."""
    return CliRunner()


@pytest.fixture
def trained_run(cli_runner, tiny_config_file, tmp_path):
    """Run directory of a completed tiny exact run."""
    run_dir = tmp_path / "run"
    result = cli_runner.invoke(
        main, ["train", str(tiny_config_file), "--seed", "3", "--out", str(run_dir)]
    )
    assert result.exit_code == 0, result.output
    return run_dir, result.stdout.strip()


@pytest.fixture
def noisy_run(cli_runner, noisy_config_file, tmp_path):
    run_dir = tmp_path / "noisy"
    result = cli_runner.invoke(
        main, ["train", str(noisy_config_file), "--seed", "3", "--out", str(run_dir)]
    )
    assert result.exit_code == 0, result.output
    return run_dir


class TestCLI:
    """Test the command-line interface."""

    @pytest.mark.parametrize("option_args", [["--version"], ["-V"]])
    def test_version(self, cli_runner, option_args):
        result = cli_runner.invoke(main, option_args)
        assert result.exit_code == 0
        assert __version__ in result.output

    def test_help(self, cli_runner):
        result = cli_runner.invoke(main, ["--help"])
        assert result.exit_code == 0
        assert "approximate multipliers" in result.output
        assert "Examples:" in result.output
        for command in ("calibrate", "gen-noise", "train", "eval", "find-switch", "sweep"):
            assert command in result.output


class TestCalibrate:
    def test_exact_model_has_no_error(self, cli_runner):
        result = cli_runner.invoke(
            main, ["calibrate", "--model", "exact", "--n", "2000", "--seed", "1"]
        )

        assert result.exit_code == 0, result.output
        profile = json.loads(result.stdout)
        assert sorted(profile) == ["k", "mean_signed", "model", "mre", "n", "sd", "width"]
        assert profile["mre"] == 0.0
        assert profile["n"] == 2000

    def test_truncate_is_biased_low(self, cli_runner, tmp_path):
        out = tmp_path / "profile.json"
        result = cli_runner.invoke(
            main,
            ["calibrate", "--model", "truncate", "--n", "20000", "--seed", "2", "--out", str(out)],
        )

        assert result.exit_code == 0, result.output
        assert json.loads(out.read_text())["mean_signed"] < 0.0
        assert out.read_text() == result.stdout

    def test_exhaustive_8_bit(self, cli_runner):
        result = cli_runner.invoke(
            main, ["calibrate", "--k", "6", "--width", "8", "--exhaustive", "--seed", "0"]
        )
        assert result.exit_code == 0, result.output
        assert json.loads(result.stdout)["n"] == 255 * 255

    def test_seed_is_required(self, cli_runner):
        result = cli_runner.invoke(main, ["calibrate"])
        assert result.exit_code == 2
        assert "--seed" in result.output

    def test_invalid_k(self, cli_runner):
        result = cli_runner.invoke(main, ["calibrate", "--k", "0", "--seed", "1"])
        assert result.exit_code == 1
        assert result.stdout == ""


class TestGenNoise:
    def test_histogram_csv(self, cli_runner):
        result = cli_runner.invoke(
            main, ["gen-noise", "--sd", "0.045", "--shape", "100,100", "--seed", "1"]
        )

        assert result.exit_code == 0, result.output
        lines = result.stdout.splitlines()
        assert lines[0] == "bin_center,count"
        assert len(lines) == 501
        assert sum(int(line.split(",")[1]) for line in lines[1:]) == 10000

    def test_deterministic(self, cli_runner):
        args = ["gen-noise", "--sd", "0.12", "--shape", "3,3,4,4", "--seed", "7", "--bins", "10"]
        assert cli_runner.invoke(main, args).stdout == cli_runner.invoke(main, args).stdout

    def test_extreme_sd_needs_flag(self, cli_runner):
        result = cli_runner.invoke(main, ["gen-noise", "--sd", "0.6", "--seed", "1"])
        assert result.exit_code == 2
        assert "allow_extreme" in result.stderr

        result = cli_runner.invoke(
            main,
            ["gen-noise", "--sd", "0.6", "--seed", "1", "--shape", "8,8", "--allow-extreme"],
        )
        assert result.exit_code == 0

    @pytest.mark.parametrize("shape", ["3,x", "0,3", ""])
    def test_bad_shape(self, cli_runner, shape):
        result = cli_runner.invoke(main, ["gen-noise", "--sd", "0.1", "--seed", "1", "--shape", shape])
        assert result.exit_code == 2


class TestTrain:
    """Test the train and eval commands."""

    def test_writes_run_directory(self, trained_run):
        run_dir, stdout = trained_run

        assert stdout.startswith("accuracy=")
        for name in ("metrics.csv", "config.toml", "manifest.json", "train.log"):
            assert (run_dir / name).is_file(), name
        assert (run_dir / "checkpoints" / "epoch_0003.ckpt").is_file()
        manifest = json.loads((run_dir / "manifest.json").read_text())
        assert "metrics.csv" in manifest["artifacts"]
        assert "checkpoints/epoch_0000.ckpt" in manifest["artifacts"]
        assert ConfigLoader.load(run_dir / "config.toml").train.seed == 3

    def test_unknown_config_key(self, cli_runner, tmp_path):
        config = tmp_path / "bad.toml"
        config.write_text("[train]\nbogus = 1\n")

        result = cli_runner.invoke(
            main, ["train", str(config), "--seed", "1", "--out", str(tmp_path / "run")]
        )

        assert result.exit_code == 2
        assert "train.bogus" in result.stderr
        assert result.stdout == ""

    def test_missing_seed(self, cli_runner, tiny_config_file, tmp_path):
        result = cli_runner.invoke(main, ["train", str(tiny_config_file), "--out", str(tmp_path)])
        assert result.exit_code == 2

    def test_switch_epoch_override(self, cli_runner, noisy_config_file, tmp_path):
        run_dir = tmp_path / "hybrid"
        result = cli_runner.invoke(
            main,
            [
                "train", str(noisy_config_file), "--seed", "3",
                "--out", str(run_dir), "--switch-epoch", "1",
            ],
        )  # fmt: skip

        assert result.exit_code == 0, result.output
        rows = (run_dir / "metrics.csv").read_text().splitlines()[1:]
        assert [row.split(",")[4] for row in rows] == ["1", "0", "0"]

    def test_switch_epoch_without_noise(self, cli_runner, tiny_config_file, tmp_path):
        result = cli_runner.invoke(
            main,
            ["train", str(tiny_config_file), "--seed", "3", "--out", str(tmp_path), "--switch-epoch", "1"],
        )
        assert result.exit_code == 2
        assert "train" in result.stderr

    def test_resume_reproduces_the_run(
        self, cli_runner, trained_run, tiny_config_file, tmp_path
    ):
        run_dir, stdout = trained_run
        resumed_dir = tmp_path / "resumed"

        result = cli_runner.invoke(
            main,
            [
                "train", str(tiny_config_file), "--seed", "3", "--out", str(resumed_dir),
                "--resume", str(run_dir / "checkpoints" / "epoch_0001.ckpt"),
            ],
        )  # fmt: skip

        assert result.exit_code == 0, result.output
        assert result.stdout.strip() == stdout
        metrics = (resumed_dir / "metrics.csv").read_bytes()
        assert metrics == (run_dir / "metrics.csv").read_bytes()
        assert (resumed_dir / "checkpoints" / "epoch_0003.ckpt").is_file()

    def test_resume_missing_checkpoint(self, cli_runner, tiny_config_file, tmp_path):
        result = cli_runner.invoke(
            main,
            [
                "train", str(tiny_config_file), "--seed", "3", "--out", str(tmp_path / "run"),
                "--resume", str(tmp_path / "nope.ckpt"),
            ],
        )  # fmt: skip
        assert result.exit_code == 2

    def test_eval_matches_training(self, cli_runner, trained_run):
        run_dir, stdout = trained_run
        checkpoint = str(run_dir / "checkpoints" / "epoch_0003.ckpt")

        first = cli_runner.invoke(main, ["eval", checkpoint])
        second = cli_runner.invoke(main, ["eval", checkpoint])

        assert first.exit_code == 0, first.output
        assert first.stdout == second.stdout
        assert first.stdout.strip() == stdout

    def test_eval_corrupt_file(self, cli_runner, tmp_path):
        path = tmp_path / "broken.ckpt"
        path.write_bytes(b"definitely not a checkpoint")

        result = cli_runner.invoke(main, ["eval", str(path)])

        assert result.exit_code == 1
        assert result.stdout == ""
        assert "Error:" in result.stderr

    def test_eval_on_mismatched_images(self, cli_runner, trained_run, tmp_path):
        run_dir, _ = trained_run
        checkpoint = load_checkpoint(run_dir / "checkpoints" / "epoch_0003.ckpt")
        checkpoint.config["train"]["data"]["synthetic_size"] = 6
        path = save_checkpoint(checkpoint, tmp_path / "resized.ckpt")

        result = cli_runner.invoke(main, ["eval", str(path)])

        assert result.exit_code == 1
        assert result.stdout == ""
        assert "does not match" in result.stderr

    def test_eval_version_mismatch(self, cli_runner, trained_run, tmp_path):
        run_dir, _ = trained_run
        checkpoint = load_checkpoint(run_dir / "checkpoints" / "epoch_0001.ckpt")
        checkpoint.version = "approxtrain-checkpoint/0"
        path = save_checkpoint(checkpoint, tmp_path / "old.ckpt")

        result = cli_runner.invoke(main, ["eval", str(path)])

        assert result.exit_code == 1
        assert "approxtrain-checkpoint/0" in result.stderr
        assert "approxtrain-checkpoint/1" in result.stderr


class TestFindSwitch:
    def test_appends_hybrid_row(self, cli_runner, noisy_run):
        args = ["find-switch", str(noisy_run), "--target", "0.0", "--coarse-step", "1"]

        first = cli_runner.invoke(main, args)
        second = cli_runner.invoke(main, args)

        assert first.exit_code == 0, first.output
        assert first.stdout.strip() == "0.0359,3,0,100.0"
        lines = (noisy_run / "hybrid_summary.csv").read_text().splitlines()
        assert lines == ["mre,approx_epochs,exact_epochs,utilization_pct"] + [
            "0.0359,3,0,100.0"
        ] * 2
        assert second.stdout == first.stdout

    def test_needs_exactly_one_target(self, cli_runner, noisy_run):
        neither = cli_runner.invoke(main, ["find-switch", str(noisy_run)])
        both = cli_runner.invoke(
            main, ["find-switch", str(noisy_run), "--target", "0.5", "--baseline", "0.5"]
        )
        assert neither.exit_code == 2
        assert both.exit_code == 2

    def test_missing_checkpoints(self, cli_runner, noisy_run):
        for path in (noisy_run / "checkpoints").iterdir():
            if path.name == "epoch_0002.ckpt":
                path.unlink()

        result = cli_runner.invoke(
            main, ["find-switch", str(noisy_run), "--baseline", "0.5", "--coarse-step", "1"]
        )

        assert result.exit_code == 1
        assert "epoch_0002.ckpt" in result.stderr

    def test_exact_run_rejected(self, cli_runner, trained_run):
        run_dir, _ = trained_run
        result = cli_runner.invoke(main, ["find-switch", str(run_dir), "--target", "0.1"])
        assert result.exit_code == 1
        assert "noisy" in result.stderr


class TestSweep:
    def test_sweep(self, cli_runner, tiny_config, tmp_path):
        data = tiny_config.model_dump(mode="json")
        data["train"]["epochs"] = 2
        data["sweep"] = {"sd_targets": [0.0, 0.045], "repeats": 1, "target_margin": 1.0}
        config_path = tmp_path / "sweep.toml"
        ConfigLoader.save(ConfigLoader.from_dict(data), config_path)
        out = tmp_path / "sweep"

        result = cli_runner.invoke(
            main, ["sweep", str(config_path), "--seed", "4", "--out", str(out)]
        )

        assert result.exit_code == 0, result.output
        assert result.stdout.strip() == str(out)
        assert len((out / "sweep_summary.csv").read_text().splitlines()) == 3
        assert (out / "hybrid_summary.csv").read_text().splitlines()[1] == "0.0359,2,0,100.0"
        manifest = json.loads((out / "manifest.json").read_text())
        assert "sd_0.0450/seed_4/metrics.csv" in manifest["artifacts"]

    def test_extreme_level_rejected_before_training(self, cli_runner, tmp_path):
        config_path = tmp_path / "sweep.toml"
        config_path.write_text("[sweep]\nsd_targets = [0.0, 0.6]\n")
        out = tmp_path / "sweep"

        result = cli_runner.invoke(
            main, ["sweep", str(config_path), "--seed", "4", "--out", str(out)]
        )

        assert result.exit_code == 2
        assert "allow_extreme" in result.stderr
        assert not out.exists()


class TestInitConfig:
    def test_writes_loadable_defaults(self, cli_runner, tmp_path):
        path = tmp_path / "approxtrain.toml"

        result = cli_runner.invoke(main, ["init-config", str(path)])

        assert result.exit_code == 0
        assert ConfigLoader.load(path) == ConfigLoader.load()

    def test_refuses_to_overwrite(self, cli_runner, tmp_path):
        path = tmp_path / "approxtrain.toml"
        path.write_text("# mine\n")

        result = cli_runner.invoke(main, ["init-config", str(path)])

        assert result.exit_code == 1
        assert path.read_text() == "# mine\n"
