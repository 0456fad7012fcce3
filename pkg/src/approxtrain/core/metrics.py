"""
Run history records and CSV artifacts.
"""

import csv
import io
import os
import tempfile
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, List, Optional, Sequence

METRICS_HEADER = ["epoch", "train_loss", "train_acc", "test_acc", "noise_active", "seconds"]
SWEEP_HEADER = ["test_id", "mre", "sd", "accuracy", "diff_from_exact"]
HYBRID_HEADER = ["mre", "approx_epochs", "exact_epochs", "utilization_pct"]


@dataclass(frozen=True)
class EpochRecord:
    """Outcome of one completed epoch."""

    epoch: int
    train_loss: float
    train_acc: float
    test_acc: float
    noise_active: bool
    wall_time: float = field(default=0.0, compare=False)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "EpochRecord":
        return cls(**data)


class RunHistory:
    """Ordered per-epoch records of one training run."""

    def __init__(self, records: Optional[Iterable[EpochRecord]] = None):
        self.records: List[EpochRecord] = []
        for record in records or []:
            self.append(record)

    def append(self, record: EpochRecord) -> None:
        """Add the next epoch's record.

        Raises:
            ValueError: If epochs are not consecutive or noise is re-enabled
        """
        expected = self.records[-1].epoch + 1 if self.records else 1
        if record.epoch != expected:
            raise ValueError(f"expected record for epoch {expected}, got {record.epoch}")
        if self.records and record.noise_active and not self.records[-1].noise_active:
            raise ValueError(f"noise re-enabled at epoch {record.epoch}")
        self.records.append(record)

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def __eq__(self, other) -> bool:
        return isinstance(other, RunHistory) and self.records == other.records

    @property
    def final_test_acc(self) -> float:
        if not self.records:
            raise ValueError("history is empty")
        return self.records[-1].test_acc

    @property
    def noisy_epochs(self) -> int:
        return sum(1 for r in self.records if r.noise_active)

    def to_dicts(self) -> List[dict]:
        return [r.to_dict() for r in self.records]

    @classmethod
    def from_dicts(cls, rows: Sequence[dict]) -> "RunHistory":
        return cls(EpochRecord.from_dict(row) for row in rows)


def atomic_write(path: Path, data: bytes) -> None:
    """Write ``data`` to ``path`` through a temporary file and rename."""
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _csv_text(header: Sequence[str], rows: Iterable[Sequence[str]]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buffer.getvalue()


def metrics_rows(history: RunHistory, record_wall_time: bool = False) -> List[List[str]]:
    return [
        [
            str(r.epoch),
            f"{r.train_loss:.6f}",
            f"{r.train_acc:.4f}",
            f"{r.test_acc:.4f}",
            "1" if r.noise_active else "0",
            f"{r.wall_time if record_wall_time else 0.0:.3f}",
        ]
        for r in history
    ]


def write_metrics_csv(
    history: RunHistory, path: Path, record_wall_time: bool = False
) -> None:
    """Rewrite the per-run metrics CSV from the full history."""
    text = _csv_text(METRICS_HEADER, metrics_rows(history, record_wall_time))
    atomic_write(path, text.encode("utf-8"))


@dataclass(frozen=True)
class SweepRow:
    """One line of the accuracy-vs-error summary."""

    test_id: int
    mre: float
    sd: float
    accuracy: float
    diff_from_exact: Optional[float]

    def cells(self) -> List[str]:
        diff = "N/A" if self.diff_from_exact is None else f"{self.diff_from_exact:+.4f}"
        return [
            str(self.test_id),
            f"{self.mre:.4f}",
            f"{self.sd:.4f}",
            f"{self.accuracy:.4f}",
            diff,
        ]


@dataclass(frozen=True)
class HybridRow:
    """One line of the hybrid-schedule summary."""

    mre: float
    approx_epochs: int
    exact_epochs: int

    @property
    def utilization_pct(self) -> float:
        total = self.approx_epochs + self.exact_epochs
        return 100.0 * self.approx_epochs / total if total else 0.0

    def cells(self) -> List[str]:
        return [
            f"{self.mre:.4f}",
            str(self.approx_epochs),
            str(self.exact_epochs),
            f"{self.utilization_pct:.1f}",
        ]


def write_sweep_csv(rows: Sequence[SweepRow], path: Path) -> None:
    atomic_write(path, _csv_text(SWEEP_HEADER, [r.cells() for r in rows]).encode("utf-8"))


def write_hybrid_csv(rows: Sequence[HybridRow], path: Path) -> None:
    atomic_write(path, _csv_text(HYBRID_HEADER, [r.cells() for r in rows]).encode("utf-8"))


def format_csv_row(cells: Sequence[str]) -> str:
    """A single CSV line without trailing newline."""
    return _csv_text(cells, []).rstrip("\n")


def append_hybrid_row(row: HybridRow, path: Path) -> None:
    """Add one row to a hybrid summary, creating it with a header if absent."""
    rows: List[List[str]] = []
    if path.is_file():
        with open(path, "r", encoding="utf-8", newline="") as f:
            existing = list(csv.reader(f))
        if existing and existing[0] != HYBRID_HEADER:
            raise ValueError(f"{path} is not a hybrid summary")
        rows = existing[1:]
    rows.append(row.cells())
    atomic_write(path, _csv_text(HYBRID_HEADER, rows).encode("utf-8"))
