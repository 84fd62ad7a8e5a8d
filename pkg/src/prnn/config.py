"""Dataclass configs for the model, the synthetic benchmark and experiments."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

from .tensor import ValidationError

VARIANTS = ("vanilla_cnn_rnn", "prnn_no_pretrain", "prnn_no_refine", "prnn_full")

# joint order used everywhere: index 5 is the hip center
JOINT_NAMES = ("head", "left_hand", "right_hand", "left_foot", "right_foot", "hip_center")
HIP_INDEX = 5
NUM_JOINTS = len(JOINT_NAMES)


@dataclass(frozen=True)
class EncoderConfig:
    input_size: int
    conv_channels: tuple
    feature_dim: int
    scale: str

    def __post_init__(self):
        if self.input_size % 32 != 0:
            raise ValidationError(
                f"input_size {self.input_size} not divisible by 2^5"
            )
        if len(self.conv_channels) != 5:
            raise ValidationError("encoder needs exactly 5 conv stages")

    @property
    def final_side(self):
        return self.input_size // 32

    @property
    def flat_dim(self):
        return self.final_side * self.final_side * self.conv_channels[-1]

    @staticmethod
    def paper() -> "EncoderConfig":
        return EncoderConfig(224, (64, 128, 256, 512, 512), 1000, "paper")

    @staticmethod
    def desk() -> "EncoderConfig":
        return EncoderConfig(32, (8, 16, 16, 32, 32), 64, "desk")

    @staticmethod
    def preset(name: str) -> "EncoderConfig":
        if name == "paper":
            return EncoderConfig.paper()
        if name == "desk":
            return EncoderConfig.desk()
        raise ValidationError(f"unknown encoder preset {name!r}")


@dataclass(frozen=True)
class LSTMConfig:
    num_layers: int = 2
    hidden_units: int = 64
    max_unroll: int = 30
    cell: str = "lstm"  # "lstm" or "rnn" (vanilla recurrence, ablation only)

    @staticmethod
    def paper() -> "LSTMConfig":
        return LSTMConfig(2, 1000, 200)

    @staticmethod
    def desk() -> "LSTMConfig":
        return LSTMConfig(2, 64, 30)


@dataclass(frozen=True)
class Hyperparams:
    lam: float = 1.0      # regression weight in the multi-task loss
    alpha: float = 0.4    # label-disturbance strength
    beta: float = 0.5     # secondary-softmax weight in the refining loss
    lr: float = 0.001
    batch: int = 10
    K: int = 4
    em_max_iters: int = 20
    em_tol: float = 1e-6

    def __post_init__(self):
        if self.lam < 0 or self.beta < 0:
            raise ValidationError("lam and beta must be nonnegative")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValidationError("alpha must lie in [0, 1]")


@dataclass(frozen=True)
class DatasetConfig:
    K: int = 4
    per_class: int = 10
    split_fracs: tuple = (0.6, 0.2, 0.2)
    base_seed: int = 7
    frame_size: int = 32
    t_min: int = 10
    t_max: int = 30
    blob_sigma: float = 1.5
    jitter: float = 0.3
    occlusion: str = "none"  # "none" or "lower_body"

    def __post_init__(self):
        if self.K < 2:
            raise ValidationError("need at least 2 classes")
        if self.t_min < 2 or self.t_max < self.t_min:
            raise ValidationError("bad sequence length range")
        if abs(sum(self.split_fracs) - 1.0) > 1e-9:
            raise ValidationError("split fractions must sum to 1")


@dataclass(frozen=True)
class TrainConfig:
    pretrain_epochs: int = 20
    learn_epochs: int = 20
    patience: int = 5


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    encoder_preset: str = "desk"
    lstm: LSTMConfig = field(default_factory=LSTMConfig.desk)
    hyper: Hyperparams = field(default_factory=Hyperparams)
    train: TrainConfig = field(default_factory=TrainConfig)
    variant: str = "prnn_full"
    seed: int = 0

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValidationError(f"unknown variant {self.variant!r}")
        if self.hyper.K != self.dataset.K:
            raise ValidationError("hyper.K must match dataset.K")

    @property
    def encoder(self) -> EncoderConfig:
        return EncoderConfig.preset(self.encoder_preset)

    @staticmethod
    def desk(seed: int = 0, variant: str = "prnn_full") -> "ExperimentConfig":
        """Tuned desk-scale defaults: full runs finish in about a minute."""
        return ExperimentConfig(
            hyper=Hyperparams(lr=0.005, em_max_iters=8),
            train=TrainConfig(pretrain_epochs=25, learn_epochs=45, patience=15),
            variant=variant,
            seed=seed,
        )

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    @staticmethod
    def from_dict(d: dict) -> "ExperimentConfig":
        d = dict(d)
        if "dataset" in d:
            ds = dict(d["dataset"])
            if "split_fracs" in ds:
                ds["split_fracs"] = tuple(ds["split_fracs"])
            d["dataset"] = DatasetConfig(**ds)
        if "lstm" in d:
            d["lstm"] = LSTMConfig(**d["lstm"])
        if "hyper" in d:
            d["hyper"] = Hyperparams(**d["hyper"])
        if "train" in d:
            d["train"] = TrainConfig(**d["train"])
        return ExperimentConfig(**d)

    @staticmethod
    def from_json(text: str) -> "ExperimentConfig":
        return ExperimentConfig.from_dict(json.loads(text))
