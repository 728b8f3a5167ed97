"""Quantization, probability models, range coding, and bitstream containers."""

from .coder import (
    CODER_BACKEND,
    TOTAL_FREQ,
    PRECISION,
    quantize_cdf,
    range_encode,
    range_decode,
)
from .models import (
    SCALE_FLOOR,
    LIKELIHOOD_FLOOR,
    LaplaceParams,
    FactorizedModel,
    quantize_train,
    quantize_eval,
    laplace_rate,
    factorized_rate,
)

__all__ = [
    "CODER_BACKEND",
    "TOTAL_FREQ",
    "PRECISION",
    "quantize_cdf",
    "range_encode",
    "range_decode",
    "SCALE_FLOOR",
    "LIKELIHOOD_FLOOR",
    "LaplaceParams",
    "FactorizedModel",
    "quantize_train",
    "quantize_eval",
    "laplace_rate",
    "factorized_rate",
]
