"""
Bit-level exact and approximate integer multiplier models.

Two families of operand reduction are modelled on unsigned integers:

- ``drum``: dynamic-range unbiased reduction. The leading one of each operand
  is located, the ``k`` bits starting there are kept, the lowest kept bit is
  forced to 1 and everything below is dropped.
- ``truncate``: the same reduction without the forced bit, which biases every
  product downwards.

Operands with at most ``k`` significant bits pass through unchanged.
"""

import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import Iterator, Literal, Tuple

import numpy as np

from ..errors import ApproxTrainError

logger = logging.getLogger(__name__)

DEFAULT_OPERAND_WIDTH = 16
# Largest width for which exhaustive sweeps are offered (2^24 pairs)
MAX_EXHAUSTIVE_WIDTH = 12
CHUNK_SIZE = 1 << 20

Distribution = Literal["uniform", "gaussian"]


class EmptyProfileError(ApproxTrainError):
    """Raised when no operand pair with a nonzero product was sampled."""

    pass


class MultiplierKind(str, Enum):
    """Supported multiplier models."""

    EXACT = "exact"
    DRUM = "drum"
    TRUNCATE = "truncate"


@dataclass(frozen=True)
class MultiplierModel:
    """An integer multiplier design of a given operand width."""

    kind: MultiplierKind
    k: int = 6
    operand_width: int = DEFAULT_OPERAND_WIDTH

    def __post_init__(self):
        if self.operand_width < 2 or self.operand_width > 32:
            raise ValueError(f"operand_width must be in [2, 32], got {self.operand_width}")
        if self.kind is not MultiplierKind.EXACT and not (
            2 <= self.k <= self.operand_width
        ):
            raise ValueError(
                f"k must satisfy 2 <= k <= {self.operand_width}, got {self.k}"
            )

    def multiply(self, a: int, b: int) -> int:
        """Multiply two unsigned operands with this model."""
        _check_operand(a, self.operand_width)
        _check_operand(b, self.operand_width)
        if self.kind is MultiplierKind.EXACT:
            return exact_mul(a, b)
        if self.kind is MultiplierKind.DRUM:
            return drum_mul(a, b, self.k)
        return truncate_mul(a, b, self.k)

    def products(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        """Vectorized products over operand arrays (see approx_products)."""
        return approx_products(self, a, b)


@dataclass(frozen=True)
class ErrorProfile:
    """Relative-error statistics of a multiplier model."""

    mre: float
    sd: float
    mean_signed: float
    sample_count: int
    max_relative: float = 0.0

    def to_json_dict(self, model: MultiplierModel) -> dict:
        """Profile as emitted by the calibrate command."""
        return {
            "model": model.kind.value,
            "k": model.k,
            "width": model.operand_width,
            "mre": self.mre,
            "sd": self.sd,
            "mean_signed": self.mean_signed,
            "n": self.sample_count,
        }


def _check_operand(value: int, width: int) -> None:
    if value < 0 or value >= (1 << width):
        raise ValueError(f"operand {value} outside [0, 2^{width})")


def exact_mul(a: int, b: int) -> int:
    """Exact product of two unsigned integers."""
    return a * b


def _reduce_operand(value: int, k: int, unbias: bool) -> int:
    """Keep the k bits below and including the leading one."""
    p = value.bit_length() - 1
    if p < k:
        # value is 0 or already has at most k significant bits
        return value
    shift = p - k + 1
    kept = value >> shift
    if unbias:
        kept |= 1
    return kept << shift


def drum_mul(a: int, b: int, k: int) -> int:
    """Dynamic-range unbiased approximate product of two unsigned integers."""
    return _reduce_operand(a, k, unbias=True) * _reduce_operand(b, k, unbias=True)


def truncate_mul(a: int, b: int, k: int) -> int:
    """Leading-one truncation product without the unbiasing bit."""
    return _reduce_operand(a, k, unbias=False) * _reduce_operand(b, k, unbias=False)


def leading_one(values: np.ndarray, width: int) -> np.ndarray:
    """Index of the most significant set bit (-1 for zero)."""
    values = values.astype(np.uint64, copy=False)
    position = np.full(values.shape, -1, dtype=np.int64)
    for bit in range(width):
        position = np.where((values >> np.uint64(bit)) != 0, bit, position)
    return position


def reduce_operands(values: np.ndarray, k: int, width: int, unbias: bool) -> np.ndarray:
    """Vectorized operand reduction matching the scalar models."""
    values = values.astype(np.uint64, copy=False)
    p = leading_one(values, width)
    shift = np.maximum(p - k + 1, 0).astype(np.uint64)
    kept = values >> shift
    if unbias:
        kept = kept | np.uint64(1)
    reduced = kept << shift
    return np.where(p >= k, reduced, values)


def approx_products(model: MultiplierModel, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Products of operand arrays under ``model`` as uint64."""
    a = np.asarray(a, dtype=np.uint64)
    b = np.asarray(b, dtype=np.uint64)
    if model.kind is MultiplierKind.EXACT:
        return a * b
    unbias = model.kind is MultiplierKind.DRUM
    ra = reduce_operands(a, model.k, model.operand_width, unbias)
    rb = reduce_operands(b, model.k, model.operand_width, unbias)
    return ra * rb


class _ProfileAccumulator:
    """Order-independent accumulation of relative-error moments.

    Counts are exact integers; each chunk contributes float64 partial sums
    that are combined with math.fsum at the end.
    """

    def __init__(self):
        self.count = 0
        self.abs_parts = []
        self.sum_parts = []
        self.sq_parts = []
        self.max_relative = 0.0

    def add(self, exact: np.ndarray, approx: np.ndarray) -> None:
        mask = exact != 0
        if not mask.any():
            return
        x = exact[mask].astype(np.float64)
        x_approx = approx[mask].astype(np.float64)
        rel = (x_approx - x) / x
        self.count += int(rel.size)
        self.abs_parts.append(float(np.abs(rel).sum()))
        self.sum_parts.append(float(rel.sum()))
        self.sq_parts.append(float(np.square(rel).sum()))
        self.max_relative = max(self.max_relative, float(np.abs(rel).max()))

    def profile(self) -> ErrorProfile:
        if self.count == 0:
            raise EmptyProfileError("no operand pairs with a nonzero exact product")
        n = self.count
        mre = math.fsum(self.abs_parts) / n
        mean = math.fsum(self.sum_parts) / n
        variance = max(math.fsum(self.sq_parts) / n - mean * mean, 0.0)
        return ErrorProfile(
            mre=mre,
            sd=math.sqrt(variance),
            mean_signed=mean,
            sample_count=n,
            max_relative=self.max_relative,
        )


def exhaustive_operands(width: int) -> Iterator[Tuple[np.ndarray, np.ndarray]]:
    """All nonzero operand pairs of the given width, chunked by first operand."""
    if width > MAX_EXHAUSTIVE_WIDTH:
        raise ValueError(
            f"exhaustive sweeps are limited to {MAX_EXHAUSTIVE_WIDTH}-bit operands"
        )
    values = np.arange(1, 1 << width, dtype=np.uint64)
    rows_per_chunk = max(1, CHUNK_SIZE // values.size)
    for start in range(0, values.size, rows_per_chunk):
        rows = values[start : start + rows_per_chunk]
        a = np.repeat(rows, values.size)
        b = np.tile(values, rows.size)
        yield a, b


def sampled_operands(
    width: int,
    n: int,
    seed: int,
    distribution: Distribution = "uniform",
) -> Iterator[Tuple[np.ndarray, np.ndarray]]:
    """Random nonzero operand pairs, chunked.

    ``uniform`` draws uniformly over [1, 2^width). ``gaussian`` draws
    magnitudes |N(0, 2^(width-2))| rounded and clipped into [1, 2^width),
    which concentrates mass on small values like trained weights do.
    """
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    high = 1 << width
    remaining = n
    while remaining > 0:
        size = min(remaining, CHUNK_SIZE)
        if distribution == "uniform":
            a = rng.integers(1, high, size=size, dtype=np.uint64)
            b = rng.integers(1, high, size=size, dtype=np.uint64)
        elif distribution == "gaussian":
            scale = float(1 << max(width - 2, 0))
            a = np.clip(np.rint(np.abs(rng.normal(0.0, scale, size))), 1, high - 1)
            b = np.clip(np.rint(np.abs(rng.normal(0.0, scale, size))), 1, high - 1)
            a = a.astype(np.uint64)
            b = b.astype(np.uint64)
        else:
            raise ValueError(f"unknown operand distribution: {distribution}")
        yield a, b
        remaining -= size


def measure_error_profile(
    model: MultiplierModel,
    operands: Iterator[Tuple[np.ndarray, np.ndarray]],
) -> ErrorProfile:
    """Mean relative error, SD and bias of ``model`` over an operand source.

    Pairs whose exact product is zero are skipped and not counted.

    Raises:
        EmptyProfileError: If every pair had a zero product
    """
    accumulator = _ProfileAccumulator()
    for a, b in operands:
        a = np.asarray(a, dtype=np.uint64)
        b = np.asarray(b, dtype=np.uint64)
        accumulator.add(a * b, approx_products(model, a, b))
    profile = accumulator.profile()
    logger.debug(
        "Profiled %s k=%d width=%d over %d pairs: mre=%.5f sd=%.5f mean=%.5f",
        model.kind.value,
        model.k,
        model.operand_width,
        profile.sample_count,
        profile.mre,
        profile.sd,
        profile.mean_signed,
    )
    return profile


def calibrate(
    model: MultiplierModel,
    n: int = 1_000_000,
    seed: int = 0,
    distribution: Distribution = "uniform",
    exhaustive: bool = False,
) -> ErrorProfile:
    """Profile ``model`` exhaustively or over ``n`` sampled pairs."""
    if exhaustive:
        operands = exhaustive_operands(model.operand_width)
    else:
        operands = sampled_operands(model.operand_width, n, seed, distribution)
    return measure_error_profile(model, operands)
