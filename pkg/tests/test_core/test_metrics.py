"""Tests for run histories and CSV artifacts."""
import pytest

from approxtrain.core.metrics import (
    HYBRID_HEADER,
    EpochRecord,
    HybridRow,
    RunHistory,
    SweepRow,
    append_hybrid_row,
    format_csv_row,
    write_hybrid_csv,
    write_metrics_csv,
    write_sweep_csv,
)


def record(epoch, noise=True, wall_time=0.0):
    return EpochRecord(epoch, 1.0 / epoch, 0.1 * epoch, 0.09 * epoch, noise, wall_time)


class TestRunHistory:
    """Test RunHistory bookkeeping."""

    def test_append_consecutive(self):
        history = RunHistory([record(1), record(2)])
        history.append(record(3, noise=False))

        assert len(history) == 3
        assert history.final_test_acc == pytest.approx(0.27)
        assert history.noisy_epochs == 2

    @pytest.mark.parametrize("epochs", [[2], [1, 3], [1, 1]])
    def test_rejects_gaps(self, epochs):
        with pytest.raises(ValueError, match="expected record"):
            RunHistory(record(e) for e in epochs)

    def test_rejects_noise_re_enabled(self):
        history = RunHistory([record(1), record(2, noise=False)])
        with pytest.raises(ValueError, match="re-enabled"):
            history.append(record(3, noise=True))

    def test_wall_time_ignored_in_equality(self):
        a = RunHistory([record(1, wall_time=1.0)])
        b = RunHistory([record(1, wall_time=2.5)])
        assert a == b

    def test_dict_round_trip(self):
        history = RunHistory([record(1), record(2, noise=False)])
        assert RunHistory.from_dicts(history.to_dicts()) == history

    def test_empty_history_has_no_accuracy(self):
        with pytest.raises(ValueError):
            RunHistory().final_test_acc


class TestMetricsCsv:
    """Test the per-run metrics file."""

    def test_format(self, tmp_path):
        history = RunHistory(
            [
                EpochRecord(1, 2.302585, 0.1, 0.125, True, wall_time=3.21),
                EpochRecord(2, 1.5, 0.34567, 0.4, False, wall_time=2.0),
            ]
        )
        path = tmp_path / "metrics.csv"

        write_metrics_csv(history, path)

        assert path.read_text() == (
            "epoch,train_loss,train_acc,test_acc,noise_active,seconds\n"
            "1,2.302585,0.1000,0.1250,1,0.000\n"
            "2,1.500000,0.3457,0.4000,0,0.000\n"
        )

    def test_wall_time_recorded_on_request(self, tmp_path):
        history = RunHistory([EpochRecord(1, 2.0, 0.1, 0.1, False, wall_time=3.2104)])
        path = tmp_path / "metrics.csv"

        write_metrics_csv(history, path, record_wall_time=True)

        assert path.read_text().splitlines()[1].endswith(",3.210")

    def test_rewrite_leaves_no_temp_files(self, tmp_path):
        path = tmp_path / "metrics.csv"
        write_metrics_csv(RunHistory([record(1)]), path)
        write_metrics_csv(RunHistory([record(1), record(2)]), path)
        assert [p.name for p in tmp_path.iterdir()] == ["metrics.csv"]


class TestSummaries:
    """Test sweep and hybrid summaries."""

    def test_sweep_rows(self, tmp_path):
        rows = [
            SweepRow(1, 0.0, 0.0, 0.8123, None),
            SweepRow(2, 0.0359, 0.045, 0.8011, -0.0112),
        ]
        path = tmp_path / "sweep_summary.csv"

        write_sweep_csv(rows, path)

        assert path.read_text() == (
            "test_id,mre,sd,accuracy,diff_from_exact\n"
            "1,0.0000,0.0000,0.8123,N/A\n"
            "2,0.0359,0.0450,0.8011,-0.0112\n"
        )

    def test_hybrid_utilization(self):
        assert HybridRow(0.012, 30, 0).utilization_pct == 100.0
        assert HybridRow(0.0359, 151, 49).utilization_pct == pytest.approx(75.5)
        assert HybridRow(0.0, 0, 0).utilization_pct == 0.0

    def test_hybrid_csv(self, tmp_path):
        path = tmp_path / "hybrid_summary.csv"
        write_hybrid_csv([HybridRow(0.0359, 151, 49)], path)
        assert path.read_text() == (
            "mre,approx_epochs,exact_epochs,utilization_pct\n0.0359,151,49,75.5\n"
        )

    def test_append_hybrid_row(self, tmp_path):
        path = tmp_path / "hybrid_summary.csv"

        append_hybrid_row(HybridRow(0.012, 30, 0), path)
        append_hybrid_row(HybridRow(0.0359, 24, 6), path)

        lines = path.read_text().splitlines()
        assert lines[0] == ",".join(HYBRID_HEADER)
        assert lines[1:] == ["0.0120,30,0,100.0", "0.0359,24,6,80.0"]

    def test_append_refuses_foreign_file(self, tmp_path):
        path = tmp_path / "hybrid_summary.csv"
        path.write_text("a,b\n1,2\n")
        with pytest.raises(ValueError):
            append_hybrid_row(HybridRow(0.012, 30, 0), path)

    def test_format_csv_row(self):
        assert format_csv_row(["0.0359", "24", "6", "80.0"]) == "0.0359,24,6,80.0"
