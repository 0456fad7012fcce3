"""Tests for the switch-epoch search."""
import pytest

from approxtrain.core import switch_search
from approxtrain.core.checkpoint import CheckpointStore, MissingCheckpointError
from approxtrain.core.metrics import EpochRecord, RunHistory
from approxtrain.core.switch_search import (
    SwitchEpochNotAchievable,
    coarse_grid,
    default_target,
    find_switch_epoch,
)
from approxtrain.core.training import train
from approxtrain.errors import ApproxTrainError


@pytest.fixture
def noisy_run(noisy_config, tiny_data, tmp_path):
    """A completed fully noisy run with a checkpoint per epoch."""
    result = train(noisy_config, tiny_data, run_dir=tmp_path)
    return result, CheckpointStore(tmp_path / "checkpoints")


class TestGrid:
    @pytest.mark.parametrize(
        "epochs,step,expected",
        [
            (3, 1, [3, 2, 1, 0]),
            (10, 4, [10, 6, 2, 0]),
            (200, 0, list(range(200, -1, -20))),
            (5, 0, [5, 4, 3, 2, 1, 0]),
        ],
    )
    def test_coarse_grid(self, epochs, step, expected):
        assert coarse_grid(epochs, step) == expected

    def test_default_target(self):
        assert default_target(0.8) == pytest.approx(0.7998)
        assert default_target(0.8, margin=0.01) == pytest.approx(0.79)


class TestFindSwitchEpoch:
    """Test the search against a real noisy run."""

    def test_reachable_target_keeps_every_noisy_epoch(self, noisy_config, tiny_data, noisy_run):
        result, store = noisy_run
        target = result.history.final_test_acc

        found = find_switch_epoch(noisy_config, tiny_data, target, store, coarse_step=1)

        assert found.switch_epoch == 3
        assert found.exact_epochs == 0
        assert found.utilization == 1.0
        assert found.accuracy == target
        assert list(found.probes) == [3]

    def test_result_matches_probe_histories(self, noisy_config, tiny_data, noisy_run):
        _, store = noisy_run
        target = 0.0

        found = find_switch_epoch(noisy_config, tiny_data, target, store, coarse_step=2)

        # grid 3, 1, 0; the first grid epoch passes so nothing is refined
        assert found.switch_epoch == 3
        assert found.history.final_test_acc == found.accuracy

    def test_unreachable_target(self, noisy_config, tiny_data, noisy_run):
        _, store = noisy_run

        with pytest.raises(SwitchEpochNotAchievable) as exc_info:
            find_switch_epoch(noisy_config, tiny_data, 1.01, store, coarse_step=1)

        assert sorted(exc_info.value.probes) == [0, 1, 2, 3]
        assert exc_info.value.target_acc == 1.01

    def test_missing_checkpoints(self, noisy_config, tiny_data, tmp_path):
        with pytest.raises(MissingCheckpointError) as exc_info:
            find_switch_epoch(
                noisy_config, tiny_data, 0.5, CheckpointStore(tmp_path), coarse_step=1
            )
        assert len(exc_info.value.expected_paths) == 4

    def test_requires_noisy_run(self, tiny_config, tiny_data, tmp_path):
        with pytest.raises(ApproxTrainError, match="fully noisy"):
            find_switch_epoch(tiny_config, tiny_data, 0.5, CheckpointStore(tmp_path))


class TestRefinement:
    """Test grid refinement with a fixed accuracy per switch epoch."""

    ACCURACY = {3: 0.50, 2: 0.80, 1: 0.80, 0: 0.90}

    @pytest.fixture
    def fixed_probes(self, monkeypatch):
        def fake_probe(config, data, store, switch_epoch):
            acc = self.ACCURACY[switch_epoch]
            return RunHistory(EpochRecord(e, 1.0, acc, acc, e <= switch_epoch) for e in (1, 2, 3))

        monkeypatch.setattr(switch_search, "probe_switch", fake_probe)

    def test_refines_upwards_from_passing_grid_point(
        self, noisy_config, tiny_data, noisy_run, fixed_probes
    ):
        _, store = noisy_run

        found = find_switch_epoch(noisy_config, tiny_data, 0.75, store, coarse_step=2)

        # grid 3, 1, 0: epoch 1 passes, then epoch 2 is tried
        assert found.switch_epoch == 2
        assert list(found.probes) == [3, 1, 2]
        assert found.exact_epochs == 1

    def test_refinement_skips_missing_checkpoints(
        self, noisy_config, tiny_data, noisy_run, fixed_probes
    ):
        _, store = noisy_run
        store.path_for(2).unlink()

        found = find_switch_epoch(noisy_config, tiny_data, 0.75, store, coarse_step=2)

        assert found.switch_epoch == 1
        assert list(found.probes) == [3, 1]

    def test_only_exact_run_passes(self, noisy_config, tiny_data, noisy_run, fixed_probes):
        _, store = noisy_run

        found = find_switch_epoch(noisy_config, tiny_data, 0.85, store, coarse_step=1)

        assert found.switch_epoch == 0
        assert found.utilization == 0.0
