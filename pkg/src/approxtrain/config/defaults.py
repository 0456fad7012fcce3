"""
Default configuration for approxtrain.
"""

from .models import (
    ApproxTrainConfig,
    DataConfig,
    NoiseConfig,
    OptimizerConfig,
    ResamplePolicy,
    SweepConfig,
    TrainConfig,
)


def get_default_config() -> ApproxTrainConfig:
    """Get default configuration."""
    return ApproxTrainConfig(
        train=TrainConfig(
            seed=None,
            epochs=30,
            batch_size=128,
            arch="desk_cnn",
            switch_epoch=None,
            checkpoint_every=1,
            eval_batch_size=500,
            record_wall_time=False,
            optimizer=OptimizerConfig(
                lr=0.1,
                momentum=0.9,
                nesterov=False,
                decay=1e-6,
                drop_every=20,
                drop_factor=0.5,
                weight_decay=5e-4,
            ),
            noise=NoiseConfig(
                enabled=False,
                sd_target=0.0,
                resample_policy=ResamplePolicy.PER_RUN,
                seed=None,
                allow_extreme=False,
            ),
            data=DataConfig(dataset="synthetic", path=None, train_subset=8000),
        ),
        sweep=SweepConfig(
            sd_targets=[0.0, 0.015, 0.045, 0.12, 0.48],
            repeats=3,
            find_switch=True,
            target_margin=0.0002,
            coarse_step=0,
        ),
    )


DEFAULT_CONFIG_TOML = """# approxtrain configuration file
# Every key is optional; omitted keys take the values shown here.
# Unknown keys are rejected.

[train]
# Required for any stochastic command (may also be given as --seed)
# seed = 1
epochs = 30
batch_size = 128
arch = "desk_cnn"            # desk_cnn | vgg_cifar
# Hybrid schedule: epochs 1..switch_epoch noisy, the rest exact
# switch_epoch = 25
checkpoint_every = 1
eval_batch_size = 500
# Write measured seconds into metrics.csv (breaks byte-identical reruns)
record_wall_time = false

[train.optimizer]
lr = 0.1
momentum = 0.9
nesterov = false
decay = 1e-6                 # lr / (1 + decay * step)
drop_every = 20              # multiply lr by drop_factor every N epochs
drop_factor = 0.5
weight_decay = 5e-4          # L2 on conv/dense weights only

[train.noise]
enabled = false
sd_target = 0.0              # SD of the signed relative error; MRE = 0.798 * SD
resample_policy = "per_run"  # per_run | per_epoch | per_step
# seed = 7                   # defaults to train.seed
allow_extreme = false        # required for sd_target >= 0.5

[train.data]
dataset = "synthetic"        # cifar10 | mnist | synthetic
# path = "/data/cifar-10-batches-bin"
train_subset = 8000          # stratified subset, 0 = full training split
synthetic_train = 2000
synthetic_test = 500
synthetic_size = 32
synthetic_channels = 3

[sweep]
sd_targets = [0.0, 0.015, 0.045, 0.12, 0.48]
repeats = 3
find_switch = true
target_margin = 0.0002       # switch-search target = baseline - margin
coarse_step = 0              # 0 = epochs // 10
"""
