"""
Accuracy-vs-error sweep over noise levels and seeds.

Every (sd_target, seed) pair is a full training run in its own directory
``sd_<sd>/seed_<seed>``. Final accuracies are averaged per noise level into
``sweep_summary.csv``; with ``sweep.find_switch`` each noisy level also gets
a switch-epoch search whose result lands in ``hybrid_summary.csv``.
"""

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional

from ..config.models import ApproxTrainConfig
from .checkpoint import CheckpointStore
from .data import PreparedData, prepare_data
from .metrics import HybridRow, SweepRow, write_hybrid_csv, write_sweep_csv
from .noise import HALF_NORMAL_RATIO
from .switch_search import SwitchEpochNotAchievable, default_target, find_switch_epoch
from .training import train

logger = logging.getLogger(__name__)

SWEEP_SUMMARY_FILE = "sweep_summary.csv"
HYBRID_SUMMARY_FILE = "hybrid_summary.csv"


@dataclass
class SweepPoint:
    """Per-seed outcomes at one noise level."""

    sd: float
    accuracies: Dict[int, float] = field(default_factory=dict)
    switch_epochs: Dict[int, int] = field(default_factory=dict)

    @property
    def mre(self) -> float:
        return self.sd * HALF_NORMAL_RATIO

    @property
    def mean_accuracy(self) -> float:
        return math.fsum(self.accuracies.values()) / len(self.accuracies)


@dataclass
class SweepReport:
    points: List[SweepPoint]
    sweep_rows: List[SweepRow]
    hybrid_rows: List[HybridRow]
    epochs: int


def run_dir_for(out_dir: Path, sd: float, seed: int) -> Path:
    return out_dir / f"sd_{sd:.4f}" / f"seed_{seed}"


def point_config(config: ApproxTrainConfig, sd: float, seed: int) -> ApproxTrainConfig:
    """Fully noisy (or exact, for sd 0) run at one sweep point."""
    train_cfg = config.train.model_copy(
        update={
            "seed": seed,
            "switch_epoch": None,
            "checkpoint_every": 1 if config.sweep.find_switch else config.train.checkpoint_every,
            "noise": config.train.noise.model_copy(
                update={"enabled": sd > 0.0, "sd_target": sd, "seed": None}
            ),
        }
    )
    return config.model_copy(update={"train": train_cfg})


def summarize(points: List[SweepPoint]) -> List[SweepRow]:
    """One row per noise level; the difference is against the sd 0 level."""
    baseline = next((p for p in points if p.sd == 0.0), None)
    rows = []
    for test_id, point in enumerate(points, start=1):
        diff: Optional[float] = None
        if baseline is not None and point is not baseline:
            diff = point.mean_accuracy - baseline.mean_accuracy
        rows.append(
            SweepRow(
                test_id=test_id,
                mre=point.mre,
                sd=point.sd,
                accuracy=point.mean_accuracy,
                diff_from_exact=diff,
            )
        )
    return rows


def hybrid_row(point: SweepPoint, epochs: int) -> HybridRow:
    """Switch epoch averaged over seeds and rounded down."""
    switch = math.floor(math.fsum(point.switch_epochs.values()) / len(point.switch_epochs))
    return HybridRow(mre=point.mre, approx_epochs=switch, exact_epochs=epochs - switch)


def run_sweep(config: ApproxTrainConfig, out_dir: Path, seed: int) -> SweepReport:
    """Train every sweep point and write the summary CSVs into ``out_dir``.

    Seeds are ``seed, seed + 1, ...`` for ``sweep.repeats`` repeats. The
    switch search target for a seed is that seed's exact accuracy minus
    ``sweep.target_margin``; it needs an sd 0 level in ``sd_targets``.
    """
    sweep = config.sweep
    epochs = config.train.epochs
    seeds = [seed + r for r in range(sweep.repeats)]
    data_by_seed: Dict[int, PreparedData] = {}
    points = [SweepPoint(sd=sd) for sd in sweep.sd_targets]

    for point in points:
        for run_seed in seeds:
            if run_seed not in data_by_seed:
                data_by_seed[run_seed] = prepare_data(config.train.data, run_seed)
            run_dir = run_dir_for(out_dir, point.sd, run_seed)
            logger.info("Sweep point sd=%.4f seed=%d -> %s", point.sd, run_seed, run_dir)
            result = train(
                point_config(config, point.sd, run_seed),
                data_by_seed[run_seed],
                run_dir=run_dir,
            )
            point.accuracies[run_seed] = result.history.final_test_acc

    sweep_rows = summarize(points)
    write_sweep_csv(sweep_rows, out_dir / SWEEP_SUMMARY_FILE)

    hybrid_rows: List[HybridRow] = []
    baseline = next((p for p in points if p.sd == 0.0), None)
    if sweep.find_switch and baseline is None:
        logger.warning("No sd 0 level in the sweep; skipping the switch-epoch search")
    elif sweep.find_switch:
        for point in points:
            if point.sd == 0.0:
                continue
            for run_seed in seeds:
                target = default_target(baseline.accuracies[run_seed], sweep.target_margin)
                run_dir = run_dir_for(out_dir, point.sd, run_seed)
                try:
                    found = find_switch_epoch(
                        point_config(config, point.sd, run_seed),
                        data_by_seed[run_seed],
                        target,
                        CheckpointStore(run_dir / "checkpoints"),
                        coarse_step=sweep.coarse_step,
                    )
                    point.switch_epochs[run_seed] = found.switch_epoch
                except SwitchEpochNotAchievable as e:
                    logger.warning("sd=%.4f seed=%d: %s", point.sd, run_seed, e)
                    point.switch_epochs[run_seed] = 0
            hybrid_rows.append(hybrid_row(point, epochs))
        write_hybrid_csv(hybrid_rows, out_dir / HYBRID_SUMMARY_FILE)

    return SweepReport(
        points=points, sweep_rows=sweep_rows, hybrid_rows=hybrid_rows, epochs=epochs
    )
