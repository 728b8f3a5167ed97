"""Feature-domain neural video codec.

Encodes P-frames conditioned on temporal contexts mined from partially
decoded intermediate features.  The single bitstream can be decoded to an
intermediate feature (for direct enhancement/analysis) or all the way to
pixels.
"""

from .config import CodecConfig, LAMBDA_VALUES
from .frames import (
    Frame,
    FeatureMap,
    MotionField,
    LatentGrid,
    RDStats,
    pad_to_multiple,
    crop_back,
)
from .synthetic import generate_synthetic_sequence

__all__ = [
    "CodecConfig",
    "LAMBDA_VALUES",
    "Frame",
    "FeatureMap",
    "MotionField",
    "LatentGrid",
    "RDStats",
    "pad_to_multiple",
    "crop_back",
    "generate_synthetic_sequence",
]

__version__ = "0.1.0"
