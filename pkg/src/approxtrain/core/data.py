"""
Dataset ingestion for CIFAR-10 (binary version) and MNIST (IDX).
"""

import gzip
import logging
import struct
from dataclasses import dataclass, replace
from pathlib import Path
from typing import List, Literal, Optional, Tuple, Union

import numpy as np

from ..config.models import DataConfig
from ..errors import ApproxTrainError

logger = logging.getLogger(__name__)

Split = Literal["train", "test"]

CIFAR_IMAGE_SHAPE = (32, 32, 3)
CIFAR_RECORD_BYTES = 1 + 32 * 32 * 3
CIFAR_RECORDS_PER_FILE = 10000
CIFAR_FILE_BYTES = CIFAR_RECORD_BYTES * CIFAR_RECORDS_PER_FILE
CIFAR_TRAIN_FILES = [f"data_batch_{i}.bin" for i in range(1, 6)]
CIFAR_TEST_FILE = "test_batch.bin"

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801

STD_EPSILON = 1e-7
SHUFFLE_STREAM = 0x53485546
SUBSET_STREAM = 0x53554253


class DatasetFormatError(ApproxTrainError):
    """Raised when a dataset cannot be read or used as configured."""

    pass


@dataclass(frozen=True)
class Dataset:
    """Images (N, H, W, C) float32 with integer labels."""

    images: np.ndarray
    labels: np.ndarray
    split: Split
    num_classes: int = 10

    def __post_init__(self):
        if self.images.shape[0] != self.labels.shape[0]:
            raise DatasetFormatError(
                f"{self.images.shape[0]} images but {self.labels.shape[0]} labels"
            )
        if self.labels.size and (
            self.labels.min() < 0 or self.labels.max() >= self.num_classes
        ):
            raise DatasetFormatError(f"labels outside [0, {self.num_classes})")

    def __len__(self) -> int:
        return int(self.labels.shape[0])

    @property
    def image_shape(self) -> Tuple[int, int, int]:
        return tuple(self.images.shape[1:])

    def take(self, indices: np.ndarray) -> "Dataset":
        return replace(self, images=self.images[indices], labels=self.labels[indices])


@dataclass(frozen=True)
class NormalizationStats:
    """Per-channel mean and standard deviation of a training split."""

    mean: np.ndarray
    std: np.ndarray


@dataclass(frozen=True)
class PreparedData:
    """Normalized training/test splits plus the statistics used."""

    train: Dataset
    test: Dataset
    stats: NormalizationStats


def _validate_exact_size(path: Path, expected: int) -> None:
    if not path.is_file():
        raise DatasetFormatError(f"File does not exist: {path}")
    size = path.stat().st_size
    if size != expected:
        raise DatasetFormatError(
            f"{path}: size {size:,} bytes, expected {expected:,} bytes"
        )


def read_cifar_batch(
    path: Union[str, Path], records: int = CIFAR_RECORDS_PER_FILE
) -> Tuple[np.ndarray, np.ndarray]:
    """Read one CIFAR-10 binary batch file.

    Each record is one label byte followed by 3072 pixel bytes stored
    channel-planar (all R, then G, then B), each plane row-major.

    Returns:
        (images float32 in [0, 1] as (N, 32, 32, 3), labels int64)

    Raises:
        DatasetFormatError: On a size mismatch or a label byte above 9
    """
    path = Path(path)
    _validate_exact_size(path, records * CIFAR_RECORD_BYTES)
    raw = np.fromfile(path, dtype=np.uint8).reshape(records, CIFAR_RECORD_BYTES)
    labels = raw[:, 0].astype(np.int64)
    if labels.size and labels.max() > 9:
        bad = int(np.argmax(labels > 9))
        raise DatasetFormatError(f"{path}: record {bad} has label byte {labels[bad]}")
    planes = raw[:, 1:].reshape(records, 3, 32, 32).transpose(0, 2, 3, 1)
    images = planes.astype(np.float32) / np.float32(255.0)
    return images, labels


def load_cifar10(
    directory: Union[str, Path], records_per_file: int = CIFAR_RECORDS_PER_FILE
) -> Tuple[Dataset, Dataset]:
    """Load the five training batches and the test batch, order preserved."""
    directory = Path(directory)
    train_images: List[np.ndarray] = []
    train_labels: List[np.ndarray] = []
    for name in CIFAR_TRAIN_FILES:
        images, labels = read_cifar_batch(directory / name, records_per_file)
        train_images.append(images)
        train_labels.append(labels)
    test_images, test_labels = read_cifar_batch(
        directory / CIFAR_TEST_FILE, records_per_file
    )
    logger.info("Loaded CIFAR-10 from %s", directory)
    return (
        Dataset(np.concatenate(train_images), np.concatenate(train_labels), "train"),
        Dataset(test_images, test_labels, "test"),
    )


def _open_maybe_gzip(path: Path):
    if path.suffix == ".gz":
        return gzip.open(path, "rb")
    return open(path, "rb")


def read_idx(path: Union[str, Path], expected_magic: int) -> np.ndarray:
    """Read an unsigned-byte IDX file (big-endian header).

    Raises:
        DatasetFormatError: On a wrong magic number or truncated payload
    """
    path = Path(path)
    with _open_maybe_gzip(path) as f:
        header = f.read(4)
        if len(header) != 4:
            raise DatasetFormatError(f"{path}: truncated header")
        (magic,) = struct.unpack(">I", header)
        if magic != expected_magic:
            raise DatasetFormatError(
                f"{path}: bad magic 0x{magic:08x}, expected 0x{expected_magic:08x}"
            )
        ndim = magic & 0xFF
        dim_words = f.read(4 * ndim)
        if len(dim_words) != 4 * ndim:
            raise DatasetFormatError(
                f"{path}: truncated header, expected {ndim} dimensions"
            )
        dims = struct.unpack(f">{ndim}I", dim_words)
        payload = f.read()
    expected = int(np.prod(dims))
    if len(payload) != expected:
        raise DatasetFormatError(
            f"{path}: payload has {len(payload)} bytes, header implies {expected}"
        )
    return np.frombuffer(payload, dtype=np.uint8).reshape(dims)


def _find_idx(directory: Path, stem: str) -> Path:
    dotted = stem.replace("-idx", ".idx")
    for name in (stem, dotted, stem + ".gz", dotted + ".gz"):
        candidate = directory / name
        if candidate.is_file():
            return candidate
    raise DatasetFormatError(f"{directory}: missing {stem} (or .gz)")


def _load_mnist_split(directory: Path, prefix: str, split: Split) -> Dataset:
    images = read_idx(_find_idx(directory, f"{prefix}-images-idx3-ubyte"), IDX_IMAGES_MAGIC)
    labels = read_idx(_find_idx(directory, f"{prefix}-labels-idx1-ubyte"), IDX_LABELS_MAGIC)
    if images.shape[0] != labels.shape[0]:
        raise DatasetFormatError(
            f"{prefix}: {images.shape[0]} images but {labels.shape[0]} labels"
        )
    scaled = images.astype(np.float32)[..., None] / np.float32(255.0)
    return Dataset(scaled, labels.astype(np.int64), split)


def load_mnist_idx(directory: Union[str, Path]) -> Tuple[Dataset, Dataset]:
    """Load MNIST train/t10k IDX files as 28x28x1 images in [0, 1]."""
    directory = Path(directory)
    train = _load_mnist_split(directory, "train", "train")
    test = _load_mnist_split(directory, "t10k", "test")
    logger.info("Loaded MNIST from %s", directory)
    return train, test


def compute_stats(ds: Dataset) -> NormalizationStats:
    axes = (0, 1, 2)
    mean = ds.images.mean(axis=axes, dtype=np.float64)
    std = ds.images.std(axis=axes, dtype=np.float64)
    std = np.where(std < STD_EPSILON, 1.0, std)
    return NormalizationStats(mean=mean.astype(np.float32), std=std.astype(np.float32))


def normalize(
    ds: Dataset, stats: Optional[NormalizationStats] = None
) -> Tuple[Dataset, NormalizationStats]:
    """Per-channel standardization.

    Without ``stats`` the dataset's own statistics are computed; pass the
    training-split statistics when normalizing a test split. Channels with
    zero spread are centred only.
    """
    if stats is None:
        stats = compute_stats(ds)
    images = ((ds.images - stats.mean) / stats.std).astype(np.float32)
    return replace(ds, images=images), stats


def epoch_permutation(n: int, seed: int, epoch: int) -> np.ndarray:
    """Batch order for an epoch; fully determined by (seed, epoch)."""
    sequence = np.random.SeedSequence([seed, SHUFFLE_STREAM, epoch])
    return np.random.Generator(np.random.Philox(sequence)).permutation(n)


def stratified_subset(ds: Dataset, n: int, seed: int) -> Dataset:
    """Class-balanced subset of ``n`` samples in original record order.

    Each class contributes n // num_classes samples, and the remainder goes
    one each to the lowest class ids.
    """
    if n <= 0 or n >= len(ds):
        return ds
    rng = np.random.Generator(
        np.random.Philox(np.random.SeedSequence([seed, SUBSET_STREAM]))
    )
    base, extra = divmod(n, ds.num_classes)
    chosen: List[np.ndarray] = []
    for cls in range(ds.num_classes):
        members = np.flatnonzero(ds.labels == cls)
        quota = base + (1 if cls < extra else 0)
        if quota > members.size:
            raise DatasetFormatError(
                f"class {cls} has {members.size} samples, a subset of {n} needs {quota}"
            )
        chosen.append(rng.choice(members, size=quota, replace=False))
    return ds.take(np.sort(np.concatenate(chosen)))


def make_synthetic(
    n_train: int = 2000,
    n_test: int = 500,
    size: int = 32,
    channels: int = 3,
    num_classes: int = 10,
    seed: int = 0,
) -> Tuple[Dataset, Dataset]:
    """Learnable toy dataset: per-class templates plus pixel noise."""
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, 0x53594E])))
    cells = -(-size // 4)
    coarse = rng.normal(0.0, 1.0, (num_classes, cells, cells, channels))
    templates = np.repeat(np.repeat(coarse, 4, axis=1), 4, axis=2)[:, :size, :size, :]

    def split(n: int, name: Split) -> Dataset:
        labels = np.arange(n, dtype=np.int64) % num_classes
        labels = labels[rng.permutation(n)]
        pixels = 0.5 + 0.15 * templates[labels] + rng.normal(0.0, 0.2, (n, size, size, channels))
        return Dataset(
            np.clip(pixels, 0.0, 1.0).astype(np.float32), labels, name, num_classes
        )

    return split(n_train, "train"), split(n_test, "test")


def load_raw(cfg: DataConfig, seed: int) -> Tuple[Dataset, Dataset]:
    """Load the configured dataset without subsetting or normalization."""
    if cfg.dataset == "cifar10":
        return load_cifar10(cfg.path)
    if cfg.dataset == "mnist":
        return load_mnist_idx(cfg.path)
    return make_synthetic(
        cfg.synthetic_train,
        cfg.synthetic_test,
        cfg.synthetic_size,
        cfg.synthetic_channels,
        seed=seed,
    )


def prepare_data(cfg: DataConfig, seed: int) -> PreparedData:
    """Load, subset (training split only) and normalize with training stats."""
    train, test = load_raw(cfg, seed)
    if cfg.train_subset:
        train = stratified_subset(train, cfg.train_subset, seed)
    train, stats = normalize(train)
    test, _ = normalize(test, stats)
    logger.info("Prepared %s: %d train / %d test", cfg.dataset, len(train), len(test))
    return PreparedData(train=train, test=test, stats=stats)
