"""
Training loop with simulated approximate-multiplier error.

Procedure per run: load data, build the network, bind one error matrix per
conv/dense layer (when noise is active), then train epoch by epoch with
injected weights in both forward and backward passes. After every epoch
the network is evaluated noise-free and, when a checkpoint store is given,
its state is saved so training can resume from that epoch.

The hybrid schedule is literally the composition of a noisy run up to the
switch epoch and an exact resume from its final state.
"""

import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional

import numpy as np

from ..config.loader import ConfigError
from ..config.models import ApproxTrainConfig
from ..errors import ApproxTrainError
from ..nn.layers import Mode
from ..nn.network import Network, NonFiniteError, backward, build_model, forward, predict
from ..nn.optim import OptimizerState, learning_rate, sgd_step
from .checkpoint import Checkpoint, CheckpointStore, from_bytes, to_bytes
from .data import Dataset, PreparedData, epoch_permutation
from .metrics import EpochRecord, RunHistory, write_metrics_csv
from .noise import NoiseSpec

logger = logging.getLogger(__name__)

DROPOUT_STREAM = 0x44524F50
METRICS_FILE = "metrics.csv"


class TrainingDivergedError(ApproxTrainError):
    """Raised when the loss or an activation stops being finite."""

    def __init__(
        self, epoch: int, step: int, last_checkpoint: Optional[Path], detail: str
    ):
        self.epoch = epoch
        self.step = step
        self.last_checkpoint = last_checkpoint
        where = str(last_checkpoint) if last_checkpoint else "none"
        super().__init__(
            f"training diverged at epoch {epoch}, step {step}: {detail}; "
            f"last good checkpoint: {where}"
        )


@dataclass
class TrainResult:
    """Final network, per-epoch history and the checkpoint files written."""

    network: Network
    history: RunHistory
    checkpoints: List[Path] = field(default_factory=list)
    final_state: Optional[Checkpoint] = None


def noise_spec_for(config: ApproxTrainConfig) -> Optional[NoiseSpec]:
    """Noise spec when injection is active, None for exact arithmetic.

    An enabled noise table with sd_target 0 is treated as exact arithmetic.
    """
    noise = config.train.noise
    if not noise.enabled or noise.sd_target == 0.0:
        return None
    return NoiseSpec(
        sd_target=noise.sd_target,
        resample_policy=noise.resample_policy,
        seed=config.train.noise_seed,
        allow_extreme=noise.allow_extreme,
    )


def exact_variant(config: ApproxTrainConfig) -> ApproxTrainConfig:
    """Same run with injection switched off."""
    train = config.train.model_copy(
        update={
            "switch_epoch": None,
            "noise": config.train.noise.model_copy(update={"enabled": False}),
        }
    )
    return config.model_copy(update={"train": train})


def with_epochs(config: ApproxTrainConfig, epochs: int) -> ApproxTrainConfig:
    """Same run truncated (or extended) to ``epochs`` without a switch."""
    train = config.train.model_copy(update={"epochs": epochs, "switch_epoch": None})
    return config.model_copy(update={"train": train})


def dropout_generator(seed: int, step: int) -> np.random.Generator:
    sequence = np.random.SeedSequence([seed, DROPOUT_STREAM, step])
    return np.random.Generator(np.random.Philox(sequence))


def evaluate(net: Network, test: Dataset, batch_size: int = 500) -> float:
    """Noise-free top-1 accuracy over the full split.

    Eval mode ignores any error matrices bound to the network.
    """
    if len(test) == 0:
        return 0.0
    correct = 0
    for start in range(0, len(test), batch_size):
        images = test.images[start : start + batch_size]
        labels = test.labels[start : start + batch_size]
        correct += int((predict(net, images) == labels).sum())
    return correct / len(test)


def _noise_state(spec: Optional[NoiseSpec], net: Network) -> Optional[dict]:
    if spec is None:
        return None
    return {
        "sd_target": spec.sd_target,
        "resample_policy": spec.resample_policy.value,
        "seed": spec.seed,
        "generations": {
            str(index): matrix.generation for index, matrix in net.error_matrices.items()
        },
    }


class _Run:
    """One uninterrupted stretch of epochs over a single configuration."""

    def __init__(
        self,
        config: ApproxTrainConfig,
        data: PreparedData,
        run_dir: Optional[Path],
        store: Optional[CheckpointStore],
        snapshot: Optional[dict] = None,
    ):
        cfg = config.train
        if cfg.seed is None:
            raise ConfigError("train.seed", "a seed is required for training")
        self.config = config
        self.cfg = cfg
        self.seed = cfg.seed
        self.data = data
        self.run_dir = run_dir
        self.store = store
        self.spec = noise_spec_for(config)
        self.snapshot = snapshot or config.model_dump(mode="json")
        self.written: List[Path] = []
        self.last_checkpoint: Optional[Path] = None

    def start(self, resume: Optional[Checkpoint]):
        if resume is None:
            net = build_model(
                self.cfg.arch,
                self.data.train.image_shape,
                self.data.train.num_classes,
                seed=self.seed,
            )
            state = OptimizerState.zeros_like(net.params)
            history = RunHistory()
            self._checkpoint(0, net, state, history)
            return net, state, history, 0
        if tuple(resume.input_shape) != self.data.train.image_shape:
            raise ApproxTrainError(
                f"checkpoint input {resume.input_shape} does not match "
                f"dataset {self.data.train.image_shape}"
            )
        net = resume.network()
        return net, resume.optimizer_state(), RunHistory(resume.history.records), resume.epoch

    def _capture(
        self, epoch: int, net: Network, state: OptimizerState, history: RunHistory
    ) -> Checkpoint:
        return Checkpoint.capture(
            self.snapshot,
            epoch,
            net,
            state,
            self.data.stats,
            history,
            noise=_noise_state(self.spec, net),
        )

    def _checkpoint(
        self, epoch: int, net: Network, state: OptimizerState, history: RunHistory
    ) -> Checkpoint:
        ckpt = self._capture(epoch, net, state, history)
        if self.store is not None:
            path = self.store.save(ckpt)
            self.written.append(path)
            self.last_checkpoint = path
        return ckpt

    def train_epoch(
        self, epoch: int, net: Network, state: OptimizerState
    ) -> EpochRecord:
        train = self.data.train
        order = epoch_permutation(len(train), self.seed, epoch)
        if self.spec is None:
            net.set_error_matrices(None)
        started = time.perf_counter()
        loss_total = 0.0
        correct = 0
        for start in range(0, len(train), self.cfg.batch_size):
            index = order[start : start + self.cfg.batch_size]
            images = train.images[index]
            labels = train.labels[index]
            if self.spec is not None:
                net.set_error_matrices(
                    self.spec, self.spec.generation_for(epoch, state.step)
                )
            try:
                logits, cache = forward(
                    net, images, Mode.TRAIN, dropout_generator(self.seed, state.step)
                )
                result = backward(net, cache, labels)
            except NonFiniteError as e:
                raise TrainingDivergedError(
                    epoch, state.step, self.last_checkpoint, str(e)
                ) from e
            loss_total += result.loss * len(index)
            correct += int((logits.argmax(axis=1) == labels).sum())
            sgd_step(net.layers, net.params, result.grads, state, epoch, self.cfg.optimizer)
        test_acc = evaluate(net, self.data.test, self.cfg.eval_batch_size)
        return EpochRecord(
            epoch=epoch,
            train_loss=loss_total / len(train),
            train_acc=correct / len(train),
            test_acc=test_acc,
            noise_active=self.spec is not None,
            wall_time=time.perf_counter() - started,
        )

    def run(self, resume: Optional[Checkpoint]) -> TrainResult:
        net, state, history, start = self.start(resume)
        final: Optional[Checkpoint] = None
        current = start
        for epoch in range(start + 1, self.cfg.epochs + 1):
            current = epoch
            record = self.train_epoch(epoch, net, state)
            history.append(record)
            logger.info(
                "epoch %d/%d loss=%.4f train_acc=%.4f test_acc=%.4f noise=%s "
                "lr=%.5f %.1fs",
                epoch,
                self.cfg.epochs,
                record.train_loss,
                record.train_acc,
                record.test_acc,
                "on" if record.noise_active else "off",
                learning_rate(self.cfg.optimizer, epoch, state.step),
                record.wall_time,
            )
            if self.run_dir is not None:
                write_metrics_csv(
                    history, self.run_dir / METRICS_FILE, self.cfg.record_wall_time
                )
            if epoch % self.cfg.checkpoint_every == 0 or epoch == self.cfg.epochs:
                final = self._checkpoint(epoch, net, state, history)
        if final is None or final.epoch != current:
            final = self._capture(current, net, state, history)
        return TrainResult(
            network=net, history=history, checkpoints=self.written, final_state=final
        )


def train(
    config: ApproxTrainConfig,
    data: PreparedData,
    run_dir: Optional[Path] = None,
    resume: Optional[Checkpoint] = None,
) -> TrainResult:
    """Train per ``config``, optionally resuming from a checkpoint.

    With ``train.switch_epoch`` set this runs the hybrid schedule. When
    ``run_dir`` is given, ``metrics.csv`` is rewritten after every epoch and
    checkpoints go to ``run_dir/checkpoints``.

    Raises:
        ConfigError: If no seed is configured
        TrainingDivergedError: On a non-finite loss or activation
    """
    if config.train.switch_epoch is not None:
        return hybrid_train(config, data, run_dir=run_dir, resume=resume)
    store = CheckpointStore(run_dir / "checkpoints") if run_dir is not None else None
    return _Run(config, data, run_dir, store).run(resume)


def hybrid_train(
    config: ApproxTrainConfig,
    data: PreparedData,
    run_dir: Optional[Path] = None,
    resume: Optional[Checkpoint] = None,
) -> TrainResult:
    """Noisy epochs 1..s followed by exact epochs s+1..epochs.

    The noisy phase's final state is serialized and reloaded before the exact
    phase continues from it, the same path a stored checkpoint takes.
    """
    switch = config.train.switch_epoch
    if switch is None:
        raise ConfigError("train.switch_epoch", "hybrid training needs a switch epoch")
    epochs = config.train.epochs
    store = CheckpointStore(run_dir / "checkpoints") if run_dir is not None else None
    # both phases record the hybrid configuration
    snapshot = config.model_dump(mode="json")

    if resume is not None and resume.epoch >= switch:
        handoff = resume
        written: List[Path] = []
    else:
        noisy = _Run(
            with_epochs(config, switch), data, run_dir, store, snapshot
        ).run(resume)
        handoff = from_bytes(to_bytes(noisy.final_state))
        written = list(noisy.checkpoints)
    logger.info("Switching to exact multipliers after epoch %d of %d", switch, epochs)

    exact = _Run(exact_variant(config), data, run_dir, store, snapshot).run(handoff)
    exact.checkpoints = written + exact.checkpoints
    return exact
