"""Conditional contextual autoencoder.

The encoder compresses the current frame with the temporal contexts
concatenated at their matching resolutions; the decoder re-fills the same
contexts and emits the intermediate feature.  The decoder never sees the
input frame: its only inputs are quantized latents and contexts.
"""

from dataclasses import dataclass

import torch
import torch.nn as nn

from .frames import Frame, FeatureMap, LatentGrid
from .layers import conv, deconv, ResidualBlock
from .context import ContextPyramid
from .motion import HyperEncoder, HyperDecoder


@dataclass(frozen=True)
class ContextualLatentPair:
    main: LatentGrid
    hyper: LatentGrid


class ContextualEncoder(nn.Module):
    def __init__(self, feature_channels: int, latent_channels: int, width: int = 48):
        super().__init__()
        n = feature_channels
        self.down1 = conv(3 + n, width, kernel=5, stride=2)
        self.res1 = ResidualBlock(width)
        self.down2 = conv(width + n, width, kernel=5, stride=2)
        self.res2 = ResidualBlock(width)
        self.down3 = conv(width + n, width, kernel=5, stride=2)
        self.res3 = ResidualBlock(width)
        self.down4 = conv(width, latent_channels, kernel=5, stride=2)
        self.act = nn.LeakyReLU(0.2, inplace=True)

    def forward(self, frame, c0, c1, c2):
        x = self.res1(self.act(self.down1(torch.cat([frame, c0], dim=1))))
        x = self.res2(self.act(self.down2(torch.cat([x, c1], dim=1))))
        x = self.res3(self.act(self.down3(torch.cat([x, c2], dim=1))))
        return self.down4(x)


class ContextualDecoder(nn.Module):
    """Latents + contexts -> intermediate feature (no output nonlinearity)."""

    def __init__(self, feature_channels: int, latent_channels: int, width: int = 48):
        super().__init__()
        n = feature_channels
        self.up1 = deconv(latent_channels, width)
        self.res1 = ResidualBlock(width)
        self.up2 = deconv(width, width)
        self.fuse2 = conv(width + n, width, kernel=1)
        self.res2 = ResidualBlock(width)
        self.up3 = deconv(width, width)
        self.fuse1 = conv(width + n, width, kernel=1)
        self.res3 = ResidualBlock(width)
        self.up4 = deconv(width, n)
        self.fuse0 = conv(2 * n, n)
        self.out = conv(n, n)
        self.act = nn.LeakyReLU(0.2, inplace=True)

    def forward(self, latent, c0, c1, c2):
        x = self.res1(self.act(self.up1(latent)))
        x = self.act(self.up2(x))
        x = self.res2(self.act(self.fuse2(torch.cat([x, c2], dim=1))))
        x = self.act(self.up3(x))
        x = self.res3(self.act(self.fuse1(torch.cat([x, c1], dim=1))))
        x = self.act(self.up4(x))
        x = self.act(self.fuse0(torch.cat([x, c0], dim=1)))
        return self.out(x)


class ContextualCodec(nn.Module):
    def __init__(self, feature_channels: int = 64, latent_channels: int = 96, hyper_channels: int = 64):
        super().__init__()
        self.latent_channels = latent_channels
        self.encoder = ContextualEncoder(feature_channels, latent_channels)
        self.decoder = ContextualDecoder(feature_channels, latent_channels)
        self.hyper_encoder = HyperEncoder(latent_channels, hyper_channels)
        self.hyper_decoder = HyperDecoder(hyper_channels, 64)

    def encode(self, frame: Frame, ctx: ContextPyramid) -> ContextualLatentPair:
        if frame.pixels.shape[-2:] != ctx.c0.values.shape[-2:]:
            raise ValueError("frame and context sizes differ")
        main, hyper = self.encode_tensors(frame.pixels.unsqueeze(0), ctx.tensors())
        return ContextualLatentPair(
            main=LatentGrid(main.squeeze(0), "contextual"),
            hyper=LatentGrid(hyper.squeeze(0), "hyper"),
        )

    def encode_tensors(self, frame: torch.Tensor, ctx):
        main = self.encoder(frame, *ctx)
        hyper = self.hyper_encoder(main)
        return main, hyper

    def decode(self, latents: ContextualLatentPair, ctx: ContextPyramid) -> FeatureMap:
        """Pure function of (latents, contexts): identical on both loop sides."""
        feat = self.decode_tensors(latents.main.values.unsqueeze(0), ctx.tensors())
        return FeatureMap(feat.squeeze(0))

    def decode_tensors(self, main: torch.Tensor, ctx) -> torch.Tensor:
        return self.decoder(main, *ctx)

    def hyper_features(self, hyper: torch.Tensor, grid_hw: tuple[int, int]) -> torch.Tensor:
        return self.hyper_decoder(hyper, grid_hw)
