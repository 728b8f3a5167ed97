"""Codec configuration and config-file parsing."""

import configparser
from dataclasses import dataclass, field, asdict

LAMBDA_VALUES = (256, 512, 1024, 2048)
MSSSIM_LAMBDA_DIVISOR = 50.0

RECONSTRUCTION_VARIANTS = ("two_unet", "one_unet", "two_resblock", "one_resblock")
DISTORTION_METRICS = ("mse", "ms-ssim")


class ConfigError(ValueError):
    pass


@dataclass
class CodecConfig:
    """Rate point and architecture constants for one codec model."""

    rd_lambda: float = 256.0
    distortion_metric: str = "mse"
    intra_period: int = 12
    feature_channels: int = 64
    contextual_latent_channels: int = 96
    motion_latent_channels: int = 128
    hyper_latent_channels: int = 64
    reconstruction_variant: str = "two_unet"
    num_frames_to_code: int = 96
    seed: int = 0
    # Whether the reference feature is detached before being used to code
    # the next frame (no recurrent backprop through earlier frames).
    detach_reference: bool = True

    def __post_init__(self):
        if self.distortion_metric not in DISTORTION_METRICS:
            raise ConfigError(f"unknown distortion metric {self.distortion_metric!r}")
        if self.reconstruction_variant not in RECONSTRUCTION_VARIANTS:
            raise ConfigError(
                f"unknown reconstruction variant {self.reconstruction_variant!r}"
            )
        if self.intra_period < 1:
            raise ConfigError("intra_period must be >= 1")
        if self.num_frames_to_code < 1:
            raise ConfigError("num_frames_to_code must be >= 1")
        base = self.base_lambda
        if base not in LAMBDA_VALUES:
            raise ConfigError(
                f"lambda {self.rd_lambda} not in {LAMBDA_VALUES}"
                + (" (after multiplying back by 50)" if self.distortion_metric == "ms-ssim" else "")
            )

    @property
    def base_lambda(self) -> float:
        """The MSE-scale lambda; MS-SSIM models store that value / 50."""
        if self.distortion_metric == "ms-ssim":
            return self.rd_lambda * MSSSIM_LAMBDA_DIVISOR
        return self.rd_lambda

    @property
    def lambda_index(self) -> int:
        return LAMBDA_VALUES.index(self.base_lambda)

    @classmethod
    def for_lambda_index(cls, index: int, distortion_metric: str = "mse", **kwargs) -> "CodecConfig":
        if not 0 <= index < len(LAMBDA_VALUES):
            raise ConfigError(f"lambda index {index} out of range")
        lam = float(LAMBDA_VALUES[index])
        if distortion_metric == "ms-ssim":
            lam /= MSSSIM_LAMBDA_DIVISOR
        return cls(rd_lambda=lam, distortion_metric=distortion_metric, **kwargs)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "CodecConfig":
        return cls(**d)


@dataclass
class TrainConfig:
    """Desk-scale training schedule (key = value config file, [training] section)."""

    steps_intra: int = 300
    steps_motion: int = 400
    steps_contextual: int = 700
    steps_joint: int = 700
    learning_rate: float = 1e-4
    batch_size: int = 4
    crop_size: int = 32
    num_clips: int = 256
    data_seed: int = 777
    log_every: int = 50
    # Ablation wiring, exercised by the training harness only.
    motion_source: str = "cross"  # cross | pixel | feature
    context_source: str = "intermediate"  # intermediate | last_feature | recon_frame

    def __post_init__(self):
        if self.motion_source not in ("cross", "pixel", "feature"):
            raise ConfigError(f"unknown motion_source {self.motion_source!r}")
        if self.context_source not in ("intermediate", "last_feature", "recon_frame"):
            raise ConfigError(f"unknown context_source {self.context_source!r}")
        if self.crop_size % 16 != 0:
            raise ConfigError("crop_size must be a multiple of 16")

    def to_dict(self) -> dict:
        return asdict(self)


_CODEC_FIELDS = {
    "lambda": ("rd_lambda", float),
    "distortion_metric": ("distortion_metric", str),
    "intra_period": ("intra_period", int),
    "feature_channels": ("feature_channels", int),
    "contextual_latent_channels": ("contextual_latent_channels", int),
    "motion_latent_channels": ("motion_latent_channels", int),
    "hyper_latent_channels": ("hyper_latent_channels", int),
    "reconstruction_variant": ("reconstruction_variant", str),
    "num_frames_to_code": ("num_frames_to_code", int),
    "seed": ("seed", int),
    "detach_reference": ("detach_reference", lambda s: s.lower() in ("1", "true", "yes")),
}

_TRAIN_FIELDS = {
    "steps_intra": int,
    "steps_motion": int,
    "steps_contextual": int,
    "steps_joint": int,
    "learning_rate": float,
    "batch_size": int,
    "crop_size": int,
    "num_clips": int,
    "data_seed": int,
    "log_every": int,
    "motion_source": str,
    "context_source": str,
}


def load_config_file(path) -> tuple[CodecConfig, TrainConfig]:
    """Parse a `key = value` config file with [codec] and [training] sections."""
    parser = configparser.ConfigParser()
    read = parser.read(path)
    if not read:
        raise ConfigError(f"cannot read config file {path}")
    codec_kwargs = {}
    if parser.has_section("codec"):
        for key, raw in parser.items("codec"):
            if key not in _CODEC_FIELDS:
                raise ConfigError(f"unknown [codec] key {key!r}")
            name, conv = _CODEC_FIELDS[key]
            codec_kwargs[name] = conv(raw)
    train_kwargs = {}
    if parser.has_section("training"):
        for key, raw in parser.items("training"):
            if key not in _TRAIN_FIELDS:
                raise ConfigError(f"unknown [training] key {key!r}")
            train_kwargs[key] = _TRAIN_FIELDS[key](raw)
    return CodecConfig(**codec_kwargs), TrainConfig(**train_kwargs)
