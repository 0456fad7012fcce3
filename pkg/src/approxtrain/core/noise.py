"""
Per-layer error matrices simulating approximate multiplication of weights.

Each injected layer owns a matrix of multiplicative factors ``1 + eps`` with
``eps ~ N(0, sd_target)``. Matrices are a pure function of
``(seed, layer_id, generation, shape)``: every key gets its own Philox
stream, so generation order and thread count never change the result.
"""

import logging
import math
from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np

from ..config.models import MAX_SD_TARGET, ResamplePolicy
from ..errors import ApproxTrainError

logger = logging.getLogger(__name__)

# Factors are kept positive: a magnitude error never flips a weight's sign
CLAMP_MIN = 0.01
CLAMP_MAX = 1.99
HALF_NORMAL_RATIO = math.sqrt(2.0 / math.pi)
DEFAULT_HISTOGRAM_BINS = 500


class ShapeMismatchError(ApproxTrainError, ValueError):
    """Raised when an array does not have the shape it must match."""

    pass


@dataclass(frozen=True)
class NoiseSpec:
    """Statistical description of simulated multiplier error."""

    sd_target: float
    resample_policy: ResamplePolicy = ResamplePolicy.PER_RUN
    seed: int = 0
    allow_extreme: bool = False

    def __post_init__(self):
        if self.sd_target < 0:
            raise ValueError(f"sd_target must be >= 0, got {self.sd_target}")
        if self.sd_target >= MAX_SD_TARGET and not self.allow_extreme:
            raise ValueError(
                f"sd_target {self.sd_target} >= {MAX_SD_TARGET} requires allow_extreme"
            )

    @property
    def implied_mre(self) -> float:
        """Expected MRE of the matrix (half-normal mean)."""
        return self.sd_target * HALF_NORMAL_RATIO

    def generation_for(self, epoch: int, step: int) -> int:
        """Matrix generation in effect at a 1-based epoch and global step."""
        if self.resample_policy is ResamplePolicy.PER_EPOCH:
            return epoch - 1
        if self.resample_policy is ResamplePolicy.PER_STEP:
            return step
        return 0


@dataclass(frozen=True)
class ErrorMatrix:
    """Multiplicative perturbation field for one layer's weights."""

    entries: np.ndarray
    layer_id: int
    generation: int

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.entries.shape


@dataclass(frozen=True)
class MatrixStats:
    """Empirical statistics of ``entries - 1``."""

    mre: float
    sd: float
    mean: float
    size: int


def _stream(seed: int, layer_id: int, generation: int) -> np.random.Generator:
    sequence = np.random.SeedSequence(entropy=seed, spawn_key=(layer_id, generation))
    return np.random.Generator(np.random.Philox(sequence))


def generate_error_matrix(
    shape: Sequence[int],
    spec: NoiseSpec,
    layer_id: int,
    generation: int = 0,
) -> ErrorMatrix:
    """Generate the error matrix for one layer and generation.

    Args:
        shape: Weight tensor shape
        spec: Noise statistics and seed
        layer_id: Index of the injected layer in its network
        generation: Resample counter (0 for the per-run policy)

    Returns:
        ErrorMatrix with float32 entries clamped to [CLAMP_MIN, CLAMP_MAX]
    """
    shape = tuple(int(d) for d in shape)
    if spec.sd_target == 0.0:
        entries = np.ones(shape, dtype=np.float32)
    else:
        eps = _stream(spec.seed, layer_id, generation).standard_normal(shape)
        entries = np.clip(1.0 + spec.sd_target * eps, CLAMP_MIN, CLAMP_MAX)
        entries = entries.astype(np.float32)
    matrix = ErrorMatrix(entries=entries, layer_id=layer_id, generation=generation)
    if logger.isEnabledFor(logging.DEBUG):
        logger.debug(
            "Generated error matrix layer=%d generation=%d shape=%s mre=%.5f",
            layer_id,
            generation,
            shape,
            mre_of_matrix(matrix),
        )
    return matrix


def apply_error(weights: np.ndarray, matrix: ErrorMatrix) -> np.ndarray:
    """Elementwise product of weights and error factors.

    The input weights are not modified.

    Raises:
        ShapeMismatchError: If shapes differ
    """
    if weights.shape != matrix.entries.shape:
        raise ShapeMismatchError(
            f"weights {weights.shape} vs error matrix {matrix.entries.shape} "
            f"(layer {matrix.layer_id})"
        )
    return weights * matrix.entries.astype(weights.dtype, copy=False)


def mre_of_matrix(matrix: ErrorMatrix) -> float:
    """Mean of |entries - 1|."""
    if matrix.entries.size == 0:
        raise ValueError("error matrix is empty")
    return float(np.mean(np.abs(matrix.entries.astype(np.float64) - 1.0)))


def matrix_stats(matrix: ErrorMatrix) -> MatrixStats:
    """Empirical MRE, SD and mean of the signed error."""
    eps = matrix.entries.astype(np.float64) - 1.0
    return MatrixStats(
        mre=float(np.mean(np.abs(eps))),
        sd=float(np.std(eps)),
        mean=float(np.mean(eps)),
        size=int(eps.size),
    )


def error_histogram(
    matrix: ErrorMatrix, bins: int = DEFAULT_HISTOGRAM_BINS
) -> Tuple[np.ndarray, np.ndarray]:
    """Histogram of matrix entries as (bin_centers, counts)."""
    counts, edges = np.histogram(matrix.entries.astype(np.float64), bins=bins)
    centers = (edges[:-1] + edges[1:]) / 2.0
    return centers, counts
