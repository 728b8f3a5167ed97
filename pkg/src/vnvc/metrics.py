"""Quality metrics and the BD-rate calculator."""

import math
from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F
from scipy.interpolate import pchip_interpolate

from .frames import Frame

PSNR_CAP = 100.0

_MSSSIM_WEIGHTS = (0.0448, 0.2856, 0.3001, 0.2363, 0.1333)
_SSIM_WINDOW = 11
_SSIM_SIGMA = 1.5


def _as_tensor(x) -> torch.Tensor:
    if isinstance(x, Frame):
        return x.pixels
    return x


def psnr_from_mse(mse: float) -> float:
    """-10*log10(mse) on the [0,1] range, capped at 100 dB."""
    if mse <= 0.0:
        return PSNR_CAP
    return min(PSNR_CAP, -10.0 * math.log10(mse))


def psnr(a, b) -> float:
    ta, tb = _as_tensor(a), _as_tensor(b)
    if ta.shape != tb.shape:
        raise ValueError(f"psnr shape mismatch: {tuple(ta.shape)} vs {tuple(tb.shape)}")
    mse = torch.mean((ta.double() - tb.double()) ** 2).item()
    return psnr_from_mse(mse)


def _gaussian_window(channels: int, dtype, device) -> torch.Tensor:
    half = _SSIM_WINDOW // 2
    coords = torch.arange(_SSIM_WINDOW, dtype=dtype, device=device) - half
    g = torch.exp(-(coords ** 2) / (2 * _SSIM_SIGMA ** 2))
    g = g / g.sum()
    kernel = torch.outer(g, g)
    return kernel.expand(channels, 1, _SSIM_WINDOW, _SSIM_WINDOW).contiguous()


def _ssim_maps(a: torch.Tensor, b: torch.Tensor, window: torch.Tensor):
    c = a.shape[1]
    mu_a = F.conv2d(a, window, groups=c)
    mu_b = F.conv2d(b, window, groups=c)
    mu_aa = mu_a * mu_a
    mu_bb = mu_b * mu_b
    mu_ab = mu_a * mu_b
    sigma_aa = F.conv2d(a * a, window, groups=c) - mu_aa
    sigma_bb = F.conv2d(b * b, window, groups=c) - mu_bb
    sigma_ab = F.conv2d(a * b, window, groups=c) - mu_ab
    c1 = 0.01 ** 2
    c2 = 0.03 ** 2
    cs = (2 * sigma_ab + c2) / (sigma_aa + sigma_bb + c2)
    ssim = ((2 * mu_ab + c1) / (mu_aa + mu_bb + c1)) * cs
    return ssim, cs


def usable_msssim_scales(height: int, width: int) -> int:
    """How many of the 5 standard scales the frame size admits."""
    scales = 0
    h, w = height, width
    while scales < len(_MSSSIM_WEIGHTS) and min(h, w) >= _SSIM_WINDOW:
        scales += 1
        h //= 2
        w //= 2
    return scales


def msssim_tensor(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    """Differentiable multi-scale SSIM on (B, C, H, W) tensors in [0, 1].

    Uses as many of the 5 standard scales as the size admits, with the
    standard weights renormalized over the used scales.
    """
    if a.shape != b.shape:
        raise ValueError("msssim shape mismatch")
    scales = usable_msssim_scales(a.shape[-2], a.shape[-1])
    if scales < 1:
        raise ValueError(
            f"frame {tuple(a.shape[-2:])} too small for one {_SSIM_WINDOW}px SSIM scale"
        )
    weights = torch.tensor(_MSSSIM_WEIGHTS[:scales], dtype=a.dtype, device=a.device)
    weights = weights / weights.sum()
    window = _gaussian_window(a.shape[1], a.dtype, a.device)
    terms = []
    for s in range(scales):
        ssim, cs = _ssim_maps(a, b, window)
        if s < scales - 1:
            terms.append(cs.mean().clamp_min(1e-8))
            a = F.avg_pool2d(a, 2)
            b = F.avg_pool2d(b, 2)
        else:
            terms.append(ssim.mean().clamp_min(1e-8))
    stack = torch.stack(terms)
    return torch.prod(stack ** weights)


def msssim(a, b) -> float:
    ta, tb = _as_tensor(a), _as_tensor(b)
    with torch.no_grad():
        return msssim_tensor(ta.unsqueeze(0).double(), tb.unsqueeze(0).double()).item()


@dataclass
class RateCurve:
    """(bpp, quality) points sorted by strictly increasing bpp."""

    points: list

    def __post_init__(self):
        if len(self.points) < 2:
            raise ValueError("a rate curve needs at least 2 points")
        bpps = [p[0] for p in self.points]
        if any(b1 <= b0 for b0, b1 in zip(bpps, bpps[1:])):
            raise ValueError("bpp values must be strictly increasing")
        if not all(math.isfinite(p[0]) and math.isfinite(p[1]) for p in self.points):
            raise ValueError("rate curve values must be finite")

    @property
    def rates(self) -> np.ndarray:
        return np.array([p[0] for p in self.points], dtype=np.float64)

    @property
    def qualities(self) -> np.ndarray:
        return np.array([p[1] for p in self.points], dtype=np.float64)


def bd_rate(anchor: RateCurve, test: RateCurve) -> float:
    """Bjontegaard delta rate in percent (negative = test saves bits).

    Piecewise-cubic-hermite interpolation of log-rate against quality,
    averaged over the overlapping quality interval.
    """
    if len(anchor.points) < 4 or len(test.points) < 4:
        raise ValueError("bd_rate needs at least 4 points per curve")
    qa, ra = anchor.qualities, np.log(anchor.rates)
    qt, rt = test.qualities, np.log(test.rates)
    for q in (qa, qt):
        if np.any(np.diff(q) <= 0):
            raise ValueError("curve quality must be strictly increasing with bpp")
    lo = max(qa.min(), qt.min())
    hi = min(qa.max(), qt.max())
    if hi <= lo:
        raise ValueError("rate curves have no overlapping quality range")
    grid = np.linspace(lo, hi, 1000)
    ia = pchip_interpolate(qa, ra, grid)
    it = pchip_interpolate(qt, rt, grid)
    avg_diff = np.trapz(it - ia, grid) / (hi - lo)
    return float((math.exp(avg_diff) - 1.0) * 100.0)
