"""Learned probability models and rate estimation.

Hyper latents use a per-channel factorized model (monotone stack of small
affine+gate factors); main latents use a conditional Laplace whose mean and
scale come from the decoded hyper latent, plus a temporal prior mined from
the context pyramid for the conditional path.
"""

import math

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .coder import quantize_cdf

SCALE_FLOOR = 0.11
LIKELIHOOD_FLOOR = 2.0 ** -30
_LOG2 = math.log(2.0)


def quantize_train(latent: torch.Tensor, generator: torch.Generator | None = None) -> torch.Tensor:
    """Additive uniform(-0.5, 0.5) noise; gradient passes through unchanged."""
    noise = torch.empty_like(latent).uniform_(-0.5, 0.5, generator=generator)
    return latent + noise


def quantize_eval(latent: torch.Tensor) -> torch.Tensor:
    """Element-wise round half away from zero."""
    return torch.sign(latent) * torch.floor(latent.abs() + 0.5)


def laplace_cdf(x: torch.Tensor, mu: torch.Tensor, scale: torch.Tensor) -> torch.Tensor:
    z = x - mu
    return 0.5 - 0.5 * torch.sign(z) * torch.expm1(-z.abs() / scale)


def laplace_likelihood(y: torch.Tensor, mu: torch.Tensor, scale: torch.Tensor) -> torch.Tensor:
    upper = laplace_cdf(y + 0.5, mu, scale)
    lower = laplace_cdf(y - 0.5, mu, scale)
    return upper - lower


def laplace_rate(y: torch.Tensor, params: "LaplaceParams") -> torch.Tensor:
    """Bits per element for (possibly noisy) latents under Laplace(mu, scale)."""
    like = laplace_likelihood(y, params.mu, params.scale)
    like = torch.clamp(like, min=LIKELIHOOD_FLOOR)
    return -torch.log(like) / _LOG2


class LaplaceParams:
    """Mean/scale tensors matching the target latent shape; scale >= floor."""

    def __init__(self, mu: torch.Tensor, scale: torch.Tensor):
        if mu.shape != scale.shape:
            raise ValueError("mu and scale must have the same shape")
        if not torch.isfinite(mu).all() or not torch.isfinite(scale).all():
            raise ValueError("Laplace parameters must be finite")
        if scale.min() < SCALE_FLOOR - 1e-6:
            raise ValueError(f"Laplace scale below floor {SCALE_FLOOR}")
        self.mu = mu
        self.scale = scale

    def integer_cdfs(self, window_lo: int, window_hi: int) -> np.ndarray:
        """Quantized per-element CDF rows over [lo, hi]; row i = element i."""
        edges = torch.arange(window_lo, window_hi + 2, dtype=torch.float64) - 0.5
        mu = self.mu.detach().double().reshape(-1, 1)
        scale = self.scale.detach().double().reshape(-1, 1)
        cdf = laplace_cdf(edges.unsqueeze(0), mu, scale)
        pmf = (cdf[:, 1:] - cdf[:, :-1]).clamp_min(0.0).numpy()
        return quantize_cdf(pmf)


class FactorizedModel(nn.Module):
    """Per-channel learned cumulative model for hyper latents.

    The CDF is a stack of monotone factors: softplus-constrained matrices,
    tanh-bounded gates, and a final sigmoid.  Three factors of width 3.
    """

    def __init__(self, channels: int, filters: tuple[int, ...] = (3, 3, 3), init_scale: float = 10.0):
        super().__init__()
        self.channels = channels
        dims = (1,) + tuple(filters) + (1,)
        scale = init_scale ** (1.0 / (len(dims) - 1))
        self._matrices = nn.ParameterList()
        self._biases = nn.ParameterList()
        self._gates = nn.ParameterList()
        for k in range(len(dims) - 1):
            init = math.log(math.expm1(1.0 / scale / dims[k + 1]))
            m = nn.Parameter(torch.full((channels, dims[k + 1], dims[k]), init))
            self._matrices.append(m)
            b = nn.Parameter(torch.empty(channels, dims[k + 1], 1).uniform_(-0.5, 0.5))
            self._biases.append(b)
            if k < len(dims) - 2:
                self._gates.append(nn.Parameter(torch.zeros(channels, dims[k + 1], 1)))

    def _logits(self, x: torch.Tensor) -> torch.Tensor:
        # x: (channels, 1, n) -> logits of the cumulative at x, same shape.
        for k, matrix in enumerate(self._matrices):
            w = F.softplus(matrix)
            if x.dtype is not w.dtype:
                w = w.to(x.dtype)
            x = torch.matmul(w, x) + self._biases[k].to(x.dtype)
            if k < len(self._gates):
                gate = torch.tanh(self._gates[k]).to(x.dtype)
                x = x + gate * torch.tanh(x)
        return x

    def cdf(self, x: torch.Tensor) -> torch.Tensor:
        """Cumulative probability; x shaped (channels, n) or broadcastable."""
        squeeze = x.ndim == 1
        if squeeze:
            x = x.unsqueeze(0).expand(self.channels, -1)
        flat = x.reshape(self.channels, 1, -1)
        out = torch.sigmoid(self._logits(flat))
        return out.reshape(x.shape)

    def likelihood(self, z: torch.Tensor) -> torch.Tensor:
        """z: (..., channels, h, w) values; per-element bin probability."""
        ch_first = torch.movedim(z, -3, 0)
        shape = ch_first.shape
        flat = ch_first.reshape(self.channels, 1, -1)
        upper = torch.sigmoid(self._logits(flat + 0.5))
        lower = torch.sigmoid(self._logits(flat - 0.5))
        like = (upper - lower).reshape(shape)
        return torch.movedim(like, 0, -3)

    def integer_cdfs(self, window_lo: int, window_hi: int) -> np.ndarray:
        """Quantized per-channel CDF rows over [lo, hi]."""
        edges = torch.arange(window_lo, window_hi + 2, dtype=torch.float64) - 0.5
        with torch.no_grad():
            flat = edges.reshape(1, 1, -1).expand(self.channels, 1, -1)
            cum = torch.sigmoid(self._logits(flat.contiguous())).squeeze(1)
        pmf = (cum[:, 1:] - cum[:, :-1]).clamp_min(0.0).numpy()
        return quantize_cdf(pmf)

    def assert_monotone(self, window: int = 64):
        """Hook for training-time sanity: CDF must be non-decreasing."""
        xs = torch.linspace(-window, window, 2 * window + 1, dtype=torch.float64)
        with torch.no_grad():
            cum = self.cdf(xs.unsqueeze(0).expand(self.channels, -1).contiguous())
        if (cum[:, 1:] - cum[:, :-1]).min() < -1e-9:
            raise RuntimeError("factorized model CDF is not monotone")


def factorized_rate(z: torch.Tensor, model) -> torch.Tensor:
    """Bits per element under the factorized model; errors on a broken CDF."""
    like = model.likelihood(z)
    if (like < -1e-9).any():
        raise RuntimeError("factorized model produced a negative bin probability")
    like = torch.clamp(like, min=LIKELIHOOD_FLOOR)
    return -torch.log(like) / _LOG2
