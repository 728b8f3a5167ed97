"""Domain value types and padding utilities.

All tensors are torch float tensors without a batch dimension; the network
modules work on batched raw tensors internally and the typed wrappers are
the unit of exchange between pipeline stages.
"""

from dataclasses import dataclass

import torch
import torch.nn.functional as F

LATENT_ROLES = ("contextual", "motion", "hyper")


def _require_finite(t: torch.Tensor, what: str):
    if not torch.isfinite(t).all():
        raise ValueError(f"{what} contains non-finite values")


@dataclass(frozen=True)
class Frame:
    """An RGB image, channel order RGB, values in [0, 1], shape (3, H, W)."""

    pixels: torch.Tensor

    def __post_init__(self):
        p = self.pixels
        if p.ndim != 3 or p.shape[0] != 3:
            raise ValueError(f"frame must have shape (3, H, W), got {tuple(p.shape)}")
        if p.shape[1] < 1 or p.shape[2] < 1:
            raise ValueError("frame must be at least 1x1")
        _require_finite(p, "frame")
        if p.min() < 0.0 or p.max() > 1.0:
            raise ValueError("frame values must lie in [0, 1]")

    @property
    def height(self) -> int:
        return self.pixels.shape[1]

    @property
    def width(self) -> int:
        return self.pixels.shape[2]


@dataclass(frozen=True)
class FeatureMap:
    """An N-channel full-resolution feature tensor, shape (N, H, W)."""

    values: torch.Tensor

    def __post_init__(self):
        if self.values.ndim != 3:
            raise ValueError("feature map must have shape (N, H, W)")
        _require_finite(self.values, "feature map")

    @property
    def channels(self) -> int:
        return self.values.shape[0]

    @property
    def height(self) -> int:
        return self.values.shape[1]

    @property
    def width(self) -> int:
        return self.values.shape[2]


@dataclass(frozen=True)
class MotionField:
    """Per-pixel displacements in pixel units, shape (2, H, W).

    Channel 0 is horizontal (+x right), channel 1 vertical (+y down).
    """

    displacements: torch.Tensor

    def __post_init__(self):
        d = self.displacements
        if d.ndim != 3 or d.shape[0] != 2:
            raise ValueError(f"motion field must have shape (2, H, W), got {tuple(d.shape)}")
        _require_finite(d, "motion field")

    @property
    def height(self) -> int:
        return self.displacements.shape[1]

    @property
    def width(self) -> int:
        return self.displacements.shape[2]


@dataclass(frozen=True)
class LatentGrid:
    """A quantizable latent tensor on the (H/16, W/16) grid, shape (C, h, w)."""

    values: torch.Tensor
    role: str

    def __post_init__(self):
        if self.role not in LATENT_ROLES:
            raise ValueError(f"unknown latent role {self.role!r}")
        if self.values.ndim != 3:
            raise ValueError("latent grid must have shape (C, h, w)")
        _require_finite(self.values, "latent grid")

    @property
    def channels(self) -> int:
        return self.values.shape[0]


@dataclass
class RDStats:
    """Per-frame rate/distortion accounting.

    Bit counts are payload bits; bpp is total bits over the unpadded pixel
    count of the source frame.
    """

    bits_motion: float = 0.0
    bits_contextual: float = 0.0
    bits_hyper: float = 0.0
    distortion: float = 0.0
    bpp: float = 0.0

    @property
    def total_bits(self) -> float:
        return self.bits_motion + self.bits_contextual + self.bits_hyper


def padded_size(size: int, multiple: int) -> int:
    return ((size + multiple - 1) // multiple) * multiple


def pad_to_multiple(frame: Frame, multiple: int) -> tuple[Frame, tuple[int, int]]:
    """Edge-replicate pad on the bottom/right to the next size multiple.

    Returns the padded frame and the original (H, W) for crop_back.
    """
    if multiple < 1:
        raise ValueError("multiple must be >= 1")
    h, w = frame.height, frame.width
    ph, pw = padded_size(h, multiple), padded_size(w, multiple)
    if (ph, pw) == (h, w):
        return frame, (h, w)
    padded = F.pad(frame.pixels.unsqueeze(0), (0, pw - w, 0, ph - h), mode="replicate")
    return Frame(padded.squeeze(0)), (h, w)


def crop_back(frame: Frame, original_size: tuple[int, int]) -> Frame:
    """Inverse of pad_to_multiple: crop the top-left original_size region."""
    h, w = original_size
    if h > frame.height or w > frame.width:
        raise ValueError(
            f"cannot crop {original_size} out of {(frame.height, frame.width)}"
        )
    if (h, w) == (frame.height, frame.width):
        return frame
    return Frame(frame.pixels[:, :h, :w])


def pad_tensor_to_multiple(t: torch.Tensor, multiple: int) -> torch.Tensor:
    """Same padding rule for raw (B, C, H, W) tensors."""
    h, w = t.shape[-2:]
    ph, pw = padded_size(h, multiple), padded_size(w, multiple)
    if (ph, pw) == (h, w):
        return t
    return F.pad(t, (0, pw - w, 0, ph - h), mode="replicate")
