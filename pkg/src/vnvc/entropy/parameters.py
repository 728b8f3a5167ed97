"""Conditioning networks for the Laplace models of the main latents.

Motion latents are conditioned on their decoded hyper latent only; the
contextual latent additionally receives a temporal prior reduced from the
multi-scale contexts to the latent grid.
"""

import torch
import torch.nn as nn
import torch.nn.functional as F

from ..layers import conv
from .models import SCALE_FLOOR, LaplaceParams

LATENT_CONDITIONING_ROLES = ("motion", "contextual", "intra")


class TemporalPriorNet(nn.Module):
    """Strided reduction of (c0, c1, c2) to one grid-aligned prior feature."""

    def __init__(self, feature_channels: int = 64, out_channels: int = 64):
        super().__init__()
        n = feature_channels
        self.down0 = conv(n, n, stride=2)
        self.down1 = conv(2 * n, n, stride=2)
        self.down2 = conv(2 * n, n, stride=2)
        self.down3 = conv(n, out_channels, stride=2)
        self.act = nn.LeakyReLU(0.2, inplace=True)

    def forward(self, c0: torch.Tensor, c1: torch.Tensor, c2: torch.Tensor) -> torch.Tensor:
        x = self.act(self.down0(c0))
        x = self.act(self.down1(torch.cat([x, c1], dim=1)))
        x = self.act(self.down2(torch.cat([x, c2], dim=1)))
        return self.down3(x)


class LaplaceParamHead(nn.Module):
    """Maps hyper features (plus optional prior) to per-element (mu, scale)."""

    def __init__(self, hyper_feat_channels: int, latent_channels: int, prior_channels: int = 0):
        super().__init__()
        self.prior_channels = prior_channels
        in_ch = hyper_feat_channels + prior_channels
        self.net = nn.Sequential(
            conv(in_ch, in_ch, kernel=1),
            nn.LeakyReLU(0.2, inplace=True),
            conv(in_ch, in_ch, kernel=1),
            nn.LeakyReLU(0.2, inplace=True),
            conv(in_ch, 2 * latent_channels, kernel=1),
        )
        self.latent_channels = latent_channels

    def forward(self, hyper_feat: torch.Tensor, prior: torch.Tensor | None = None) -> tuple[torch.Tensor, torch.Tensor]:
        if self.prior_channels:
            if prior is None:
                raise ValueError("this head requires a temporal prior")
            x = torch.cat([hyper_feat, prior], dim=1)
        else:
            x = hyper_feat
        raw = self.net(x)
        mu, raw_scale = raw.chunk(2, dim=1)
        scale = SCALE_FLOOR + F.softplus(raw_scale)
        return mu, scale


class EntropyConditioner(nn.Module):
    """Bundles the param heads and the temporal prior net for all roles."""

    def __init__(
        self,
        motion_latent_channels: int = 128,
        contextual_latent_channels: int = 96,
        feature_channels: int = 64,
        hyper_feat_channels: int = 64,
        prior_channels: int = 64,
    ):
        super().__init__()
        self.prior_net = TemporalPriorNet(feature_channels, prior_channels)
        self.motion_head = LaplaceParamHead(hyper_feat_channels, motion_latent_channels)
        self.contextual_head = LaplaceParamHead(
            hyper_feat_channels, contextual_latent_channels, prior_channels
        )
        self.intra_head = LaplaceParamHead(hyper_feat_channels, contextual_latent_channels)

    def temporal_prior(self, ctx) -> torch.Tensor:
        return self.prior_net(*ctx)

    def laplace_params_for(
        self, role: str, hyper_feat: torch.Tensor, prior: torch.Tensor | None = None
    ) -> tuple[torch.Tensor, torch.Tensor]:
        if role == "motion":
            return self.motion_head(hyper_feat)
        if role == "contextual":
            if prior is None:
                raise ValueError("contextual latents require a temporal prior")
            return self.contextual_head(hyper_feat, prior)
        if role == "intra":
            return self.intra_head(hyper_feat)
        raise ValueError(f"unknown latent role {role!r}")


def laplace_params_for(
    conditioner: EntropyConditioner,
    role: str,
    hyper_feat: torch.Tensor,
    prior: torch.Tensor | None = None,
) -> LaplaceParams:
    """Typed single-frame wrapper over EntropyConditioner.laplace_params_for."""
    mu, scale = conditioner.laplace_params_for(role, hyper_feat, prior)
    return LaplaceParams(mu.squeeze(0), scale.squeeze(0))
