"""
Resumable training state and its on-disk container.

File layout::

    MAGIC (8 bytes) | header length (uint64 little-endian) | JSON header | payload

The header is canonical JSON (sorted keys) describing the run state and every
tensor's name, dtype, shape and payload offset; the payload is the raw
little-endian tensor bytes in header order. Saving a loaded checkpoint
reproduces the original file byte for byte.
"""

import hashlib
import json
import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..errors import ApproxTrainError
from ..nn.layers import LayerSpec, Params
from ..nn.network import Network
from ..nn.optim import OptimizerState
from .data import NormalizationStats
from .metrics import RunHistory, atomic_write

logger = logging.getLogger(__name__)

MAGIC = b"APXCKPT\x00"
FORMAT_VERSION = "approxtrain-checkpoint/1"


class CheckpointError(ApproxTrainError):
    """Raised when a checkpoint file is unreadable or corrupt."""

    pass


class CheckpointVersionError(CheckpointError):
    """Raised when a checkpoint was written by an incompatible format."""

    def __init__(self, found: str, expected: str):
        self.found = found
        self.expected = expected
        super().__init__(
            f"checkpoint format {found!r} is not supported (expected {expected!r})"
        )


class MissingCheckpointError(CheckpointError):
    """Raised when required epoch checkpoints are absent."""

    def __init__(self, expected_paths: Sequence[Path]):
        self.expected_paths = list(expected_paths)
        listed = ", ".join(str(p) for p in self.expected_paths[:5])
        more = len(self.expected_paths) - 5
        suffix = f" (and {more} more)" if more > 0 else ""
        super().__init__(f"missing checkpoint files: {listed}{suffix}")


@dataclass
class Checkpoint:
    """Everything needed to continue a run bit-identically."""

    config: Dict[str, Any]
    epoch: int
    global_step: int
    layers: List[LayerSpec]
    input_shape: Tuple[int, ...]
    params: List[Params]
    buffers: List[Params]
    velocities: List[Params]
    stats: NormalizationStats
    history: RunHistory
    noise: Optional[Dict[str, Any]] = None
    rng_positions: Dict[str, int] = field(default_factory=dict)
    version: str = FORMAT_VERSION

    @classmethod
    def capture(
        cls,
        config: Dict[str, Any],
        epoch: int,
        net: Network,
        state: OptimizerState,
        stats: NormalizationStats,
        history: RunHistory,
        noise: Optional[Dict[str, Any]] = None,
    ) -> "Checkpoint":
        """Snapshot (copy) the live training state."""
        return cls(
            config=config,
            epoch=epoch,
            global_step=state.step,
            layers=list(net.layers),
            input_shape=tuple(net.input_shape),
            params=[{k: v.copy() for k, v in p.items()} for p in net.params],
            buffers=[{k: v.copy() for k, v in b.items()} for b in net.buffers],
            velocities=[{k: v.copy() for k, v in p.items()} for p in state.velocities],
            stats=stats,
            history=RunHistory(history.records),
            noise=noise,
            rng_positions={"shuffle_epoch": epoch, "dropout_step": state.step},
        )

    def network(self) -> Network:
        """Rebuild the network (without error matrices)."""
        return Network(
            layers=list(self.layers),
            input_shape=tuple(self.input_shape),
            params=[{k: v.copy() for k, v in p.items()} for p in self.params],
            buffers=[{k: v.copy() for k, v in b.items()} for b in self.buffers],
        )

    def optimizer_state(self) -> OptimizerState:
        return OptimizerState(
            velocities=[{k: v.copy() for k, v in p.items()} for p in self.velocities],
            step=self.global_step,
        )


def _tensor_groups(ckpt: Checkpoint) -> List[Tuple[str, np.ndarray]]:
    tensors: List[Tuple[str, np.ndarray]] = []
    for group, layers in (
        ("params", ckpt.params),
        ("buffers", ckpt.buffers),
        ("velocity", ckpt.velocities),
    ):
        for index, layer in enumerate(layers):
            for name in sorted(layer):
                tensors.append((f"{group}/{index}/{name}", layer[name]))
    tensors.append(("stats/mean", ckpt.stats.mean))
    tensors.append(("stats/std", ckpt.stats.std))
    return tensors


def to_bytes(ckpt: Checkpoint) -> bytes:
    """Serialize a checkpoint."""
    entries = []
    chunks = []
    offset = 0
    for name, array in _tensor_groups(ckpt):
        data = np.ascontiguousarray(array, dtype=array.dtype.newbyteorder("<"))
        raw = data.tobytes()
        entries.append(
            {
                "name": name,
                "dtype": data.dtype.str,
                "shape": list(data.shape),
                "offset": offset,
                "nbytes": len(raw),
            }
        )
        chunks.append(raw)
        offset += len(raw)
    payload = b"".join(chunks)
    header = {
        "version": ckpt.version,
        "config": ckpt.config,
        "epoch": ckpt.epoch,
        "global_step": ckpt.global_step,
        "layers": [spec.to_dict() for spec in ckpt.layers],
        "layer_count": len(ckpt.layers),
        "input_shape": list(ckpt.input_shape),
        "history": ckpt.history.to_dicts(),
        "noise": ckpt.noise,
        "rng_positions": ckpt.rng_positions,
        "tensors": entries,
        "payload_sha256": hashlib.sha256(payload).hexdigest(),
    }
    header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode(
        "utf-8"
    )
    return MAGIC + struct.pack("<Q", len(header_bytes)) + header_bytes + payload


def from_bytes(blob: bytes, source: str = "<memory>") -> Checkpoint:
    """Deserialize a checkpoint.

    Raises:
        CheckpointVersionError: If the format version differs
        CheckpointError: If the data is truncated or corrupt
    """
    if len(blob) < len(MAGIC) + 8 or not blob.startswith(MAGIC):
        raise CheckpointError(f"{source}: not an approxtrain checkpoint")
    (header_len,) = struct.unpack("<Q", blob[len(MAGIC) : len(MAGIC) + 8])
    start = len(MAGIC) + 8
    try:
        header = json.loads(blob[start : start + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CheckpointError(f"{source}: corrupt header ({e})")

    version = header.get("version")
    if version != FORMAT_VERSION:
        raise CheckpointVersionError(str(version), FORMAT_VERSION)

    payload = blob[start + header_len :]
    if hashlib.sha256(payload).hexdigest() != header.get("payload_sha256"):
        raise CheckpointError(f"{source}: payload checksum mismatch")

    try:
        count = header["layer_count"]
        groups: Dict[str, List[Params]] = {
            g: [{} for _ in range(count)] for g in ("params", "buffers", "velocity")
        }
        stats: Dict[str, np.ndarray] = {}
        for entry in header["tensors"]:
            raw = payload[entry["offset"] : entry["offset"] + entry["nbytes"]]
            array = np.frombuffer(raw, dtype=np.dtype(entry["dtype"])).reshape(
                entry["shape"]
            )
            array = array.astype(array.dtype.newbyteorder("="))
            group, _, rest = entry["name"].partition("/")
            if group == "stats":
                stats[rest] = array
            else:
                index, _, name = rest.partition("/")
                groups[group][int(index)][name] = array
        return Checkpoint(
            config=header["config"],
            epoch=header["epoch"],
            global_step=header["global_step"],
            layers=[LayerSpec.from_dict(d) for d in header["layers"]],
            input_shape=tuple(header["input_shape"]),
            params=groups["params"],
            buffers=groups["buffers"],
            velocities=groups["velocity"],
            stats=NormalizationStats(mean=stats["mean"], std=stats["std"]),
            history=RunHistory.from_dicts(header["history"]),
            noise=header["noise"],
            rng_positions=header["rng_positions"],
            version=version,
        )
    except (KeyError, ValueError, TypeError, IndexError) as e:
        raise CheckpointError(f"{source}: malformed checkpoint ({e})")


def save_checkpoint(ckpt: Checkpoint, path: Path) -> Path:
    atomic_write(path, to_bytes(ckpt))
    logger.debug("Saved checkpoint epoch=%d to %s", ckpt.epoch, path)
    return path


def load_checkpoint(path: Path) -> Checkpoint:
    """Read a checkpoint file.

    Raises:
        CheckpointError: If the file is missing, corrupt or incompatible
    """
    path = Path(path)
    if not path.is_file():
        raise MissingCheckpointError([path])
    return from_bytes(path.read_bytes(), source=str(path))


class CheckpointStore:
    """Per-epoch checkpoint files of one run: ``epoch_0007.ckpt``."""

    def __init__(self, root: Path):
        self.root = Path(root)

    def path_for(self, epoch: int) -> Path:
        return self.root / f"epoch_{epoch:04d}.ckpt"

    def save(self, ckpt: Checkpoint) -> Path:
        return save_checkpoint(ckpt, self.path_for(ckpt.epoch))

    def load(self, epoch: int) -> Checkpoint:
        return load_checkpoint(self.path_for(epoch))

    def available_epochs(self) -> List[int]:
        if not self.root.is_dir():
            return []
        epochs = []
        for path in self.root.glob("epoch_*.ckpt"):
            try:
                epochs.append(int(path.stem.split("_", 1)[1]))
            except ValueError:
                continue
        return sorted(epochs)

    def require(self, epochs: Sequence[int]) -> None:
        """Raise MissingCheckpointError naming every absent epoch file."""
        available = set(self.available_epochs())
        missing = [self.path_for(e) for e in epochs if e not in available]
        if missing:
            raise MissingCheckpointError(missing)

    def latest(self) -> Optional[int]:
        epochs = self.available_epochs()
        return epochs[-1] if epochs else None
