"""
Configuration models for approxtrain.
"""

from enum import Enum
from typing import List, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

# Largest SD studied; above it training is expected to collapse entirely
MAX_SD_TARGET = 0.5


class ResamplePolicy(str, Enum):
    """When error matrices are regenerated during training."""

    PER_RUN = "per_run"
    PER_EPOCH = "per_epoch"
    PER_STEP = "per_step"


class StrictModel(BaseModel):
    """Base model rejecting unknown keys."""

    model_config = ConfigDict(extra="forbid")


class OptimizerConfig(StrictModel):
    """SGD optimizer configuration."""

    lr: float = Field(default=0.1, gt=0.0)
    momentum: float = Field(default=0.9, ge=0.0, lt=1.0)
    nesterov: bool = False
    decay: float = Field(default=1e-6, ge=0.0, description="Per-step inverse-time decay")
    drop_every: int = Field(default=20, ge=0, description="Epochs between LR drops (0 disables)")
    drop_factor: float = Field(default=0.5, gt=0.0, le=1.0)
    weight_decay: float = Field(default=5e-4, ge=0.0)


class NoiseConfig(StrictModel):
    """Approximate-multiplier error injection configuration."""

    enabled: bool = False
    sd_target: float = Field(default=0.0, ge=0.0)
    resample_policy: ResamplePolicy = ResamplePolicy.PER_RUN
    seed: Optional[int] = Field(
        default=None, description="Noise stream seed; defaults to the run seed"
    )
    allow_extreme: bool = False

    @model_validator(mode="after")
    def validate_sd_target(self) -> "NoiseConfig":
        if self.sd_target >= MAX_SD_TARGET and not self.allow_extreme:
            raise ValueError(
                f"sd_target {self.sd_target} >= {MAX_SD_TARGET} requires allow_extreme = true"
            )
        return self


class DataConfig(StrictModel):
    """Dataset selection."""

    dataset: Literal["cifar10", "mnist", "synthetic"] = "cifar10"
    path: Optional[str] = None
    train_subset: int = Field(
        default=8000, ge=0, description="Stratified training subset size (0 = full)"
    )
    synthetic_train: int = Field(default=2000, ge=10)
    synthetic_test: int = Field(default=500, ge=10)
    synthetic_size: int = Field(default=32, ge=4)
    synthetic_channels: int = Field(default=3, ge=1)

    @model_validator(mode="after")
    def validate_path(self) -> "DataConfig":
        if self.dataset != "synthetic" and not self.path:
            raise ValueError(f"dataset '{self.dataset}' requires a path")
        return self


class TrainConfig(StrictModel):
    """Training run configuration."""

    seed: Optional[int] = None
    epochs: int = Field(default=30, ge=1)
    batch_size: int = Field(default=128, ge=1)
    arch: Literal["desk_cnn", "vgg_cifar"] = "desk_cnn"
    switch_epoch: Optional[int] = Field(default=None, ge=0)
    checkpoint_every: int = Field(default=1, ge=1)
    eval_batch_size: int = Field(default=500, ge=1)
    record_wall_time: bool = False

    optimizer: OptimizerConfig = Field(default_factory=OptimizerConfig)
    noise: NoiseConfig = Field(default_factory=NoiseConfig)
    data: DataConfig = Field(default_factory=lambda: DataConfig(dataset="synthetic"))

    @model_validator(mode="after")
    def validate_switch_epoch(self) -> "TrainConfig":
        if self.switch_epoch is not None:
            if self.switch_epoch > self.epochs:
                raise ValueError(
                    f"switch_epoch {self.switch_epoch} exceeds epochs {self.epochs}"
                )
            if not self.noise.enabled:
                raise ValueError("switch_epoch requires noise.enabled = true")
        return self

    @property
    def noise_seed(self) -> int:
        """Seed used for error-matrix streams."""
        if self.noise.seed is not None:
            return self.noise.seed
        return self.seed if self.seed is not None else 0


class SweepConfig(StrictModel):
    """Accuracy-vs-error sweep configuration."""

    sd_targets: List[float] = Field(
        default_factory=lambda: [0.0, 0.015, 0.045, 0.12, 0.48]
    )
    repeats: int = Field(default=3, ge=1)
    find_switch: bool = True
    target_margin: float = Field(
        default=0.0002, ge=0.0, description="Target = baseline - margin (fraction)"
    )
    coarse_step: int = Field(default=0, ge=0, description="0 = epochs // 10")

    @field_validator("sd_targets")
    def validate_sd_targets(cls, v):
        if not v:
            raise ValueError("sd_targets must not be empty")
        if any(sd < 0 for sd in v):
            raise ValueError("sd_targets must be non-negative")
        return v


class ApproxTrainConfig(StrictModel):
    """Complete approxtrain configuration."""

    train: TrainConfig = Field(default_factory=TrainConfig)
    sweep: SweepConfig = Field(default_factory=SweepConfig)

    @model_validator(mode="after")
    def validate_sweep_levels(self) -> "ApproxTrainConfig":
        extreme = [sd for sd in self.sweep.sd_targets if sd >= MAX_SD_TARGET]
        if extreme and not self.train.noise.allow_extreme:
            raise ValueError(
                f"sweep.sd_targets {extreme} >= {MAX_SD_TARGET} "
                "require train.noise.allow_extreme = true"
            )
        return self
