"""
Search for the latest epoch at which a noisy run can switch to exact arithmetic.

Every probe resumes the stored noisy checkpoint of a candidate epoch ``s``
and trains exactly through the final epoch, so noisy epochs are never
recomputed. Candidates are walked from the end of the run downwards on a
coarse grid; the first passing grid point is then refined upwards within
the grid step.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional

from ..config.models import ApproxTrainConfig
from ..errors import ApproxTrainError
from .checkpoint import CheckpointStore
from .data import PreparedData
from .metrics import RunHistory
from .training import exact_variant, noise_spec_for, train

logger = logging.getLogger(__name__)


class SwitchEpochNotAchievable(ApproxTrainError):
    """Raised when even a fully exact run misses the target accuracy."""

    def __init__(self, target_acc: float, probes: Dict[int, float]):
        self.target_acc = target_acc
        self.probes = dict(probes)
        best = max(probes.values()) if probes else float("nan")
        super().__init__(
            f"target accuracy {target_acc:.4f} not reached by any switch epoch "
            f"(best probe {best:.4f})"
        )


@dataclass
class SwitchSearchResult:
    """Largest passing switch epoch and the probes that found it."""

    switch_epoch: int
    accuracy: float
    epochs: int
    history: RunHistory
    probes: Dict[int, float] = field(default_factory=dict)

    @property
    def exact_epochs(self) -> int:
        return self.epochs - self.switch_epoch

    @property
    def utilization(self) -> float:
        return self.switch_epoch / self.epochs if self.epochs else 0.0


def default_target(baseline_acc: float, margin: float = 0.0002) -> float:
    """Target accuracy: the exact baseline minus a small margin."""
    return baseline_acc - margin


def coarse_grid(epochs: int, step: int) -> List[int]:
    """Candidate switch epochs from ``epochs`` down to 0."""
    step = step or max(1, epochs // 10)
    grid = list(range(epochs, -1, -step))
    if grid[-1] != 0:
        grid.append(0)
    return grid


def probe_switch(
    config: ApproxTrainConfig,
    data: PreparedData,
    store: CheckpointStore,
    switch_epoch: int,
) -> RunHistory:
    """History of resuming the noisy checkpoint at ``switch_epoch`` exactly."""
    checkpoint = store.load(switch_epoch)
    epochs = config.train.epochs
    if switch_epoch == epochs:
        return checkpoint.history
    result = train(exact_variant(config), data, run_dir=None, resume=checkpoint)
    return result.history


def find_switch_epoch(
    config: ApproxTrainConfig,
    data: PreparedData,
    target_acc: float,
    store: CheckpointStore,
    coarse_step: int = 0,
) -> SwitchSearchResult:
    """Largest switch epoch whose exact continuation reaches ``target_acc``.

    Args:
        config: Configuration of the completed noisy run
        data: The data the noisy run trained on
        target_acc: Required final test accuracy (fraction)
        store: Per-epoch checkpoints of the noisy run
        coarse_step: Grid spacing (0 selects epochs // 10)

    Raises:
        MissingCheckpointError: If a grid epoch has no checkpoint
        SwitchEpochNotAchievable: If even s = 0 misses the target
    """
    if noise_spec_for(config) is None or config.train.switch_epoch is not None:
        raise ApproxTrainError("switch search needs a completed fully noisy run")
    epochs = config.train.epochs
    grid = coarse_grid(epochs, coarse_step)
    store.require(grid)
    available = set(store.available_epochs())

    probes: Dict[int, float] = {}
    histories: Dict[int, RunHistory] = {}

    def run_probe(s: int) -> bool:
        history = probe_switch(config, data, store, s)
        histories[s] = history
        probes[s] = history.final_test_acc
        passed = probes[s] >= target_acc
        logger.info(
            "switch probe s=%d: accuracy=%.4f target=%.4f %s",
            s,
            probes[s],
            target_acc,
            "pass" if passed else "fail",
        )
        return passed

    passing: Optional[int] = None
    for position, s in enumerate(grid):
        if run_probe(s):
            passing = s
            upper = grid[position - 1] if position > 0 else s
            break
    if passing is None:
        raise SwitchEpochNotAchievable(target_acc, probes)

    for s in range(upper - 1, passing, -1):
        if s not in available:
            logger.debug("no checkpoint for epoch %d, skipping", s)
            continue
        if run_probe(s):
            passing = s
            break

    return SwitchSearchResult(
        switch_epoch=passing,
        accuracy=probes[passing],
        epochs=epochs,
        history=histories[passing],
        probes=probes,
    )
