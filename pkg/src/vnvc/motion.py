"""Motion: joint estimation+compression from the current frame and the
previous intermediate feature, plus differentiable warping.

The motion autoencoder never sees pixel-domain reference frames; its inputs
are the raw frame being coded and the feature-domain reference.
"""

from dataclasses import dataclass

import torch
import torch.nn as nn

from .frames import Frame, FeatureMap, MotionField, LatentGrid
from .layers import conv, deconv, zero_init, ResidualBlock


def warp_tensor(source: torch.Tensor, flow: torch.Tensor) -> torch.Tensor:
    """Backward bilinear warp: out(p) = source(p + flow(p)).

    source (B, C, H, W), flow (B, 2, H, W) in pixels (channel 0 horizontal,
    channel 1 vertical).  Out-of-bounds samples clamp to the border.  Exact
    identity for zero flow.
    """
    if source.shape[-2:] != flow.shape[-2:]:
        raise ValueError(
            f"warp shape mismatch: source {tuple(source.shape)} vs flow {tuple(flow.shape)}"
        )
    b, c, h, w = source.shape
    dev, dt = source.device, source.dtype
    gx = torch.arange(w, device=dev, dtype=dt).view(1, 1, 1, w) + flow[:, 0:1]
    gy = torch.arange(h, device=dev, dtype=dt).view(1, 1, h, 1) + flow[:, 1:2]
    x0f = gx.floor()
    y0f = gy.floor()
    fx = gx - x0f
    fy = gy - y0f
    x0 = x0f.long().clamp(0, w - 1)
    x1 = (x0f.long() + 1).clamp(0, w - 1)
    y0 = y0f.long().clamp(0, h - 1)
    y1 = (y0f.long() + 1).clamp(0, h - 1)

    def gather(yi, xi):
        idx = (yi * w + xi).expand(b, c, h, w).reshape(b, c, -1)
        return source.reshape(b, c, -1).gather(2, idx).reshape(b, c, h, w)

    v00 = gather(y0, x0)
    v01 = gather(y0, x1)
    v10 = gather(y1, x0)
    v11 = gather(y1, x1)
    return (
        v00 * (1 - fy) * (1 - fx)
        + v01 * (1 - fy) * fx
        + v10 * fy * (1 - fx)
        + v11 * fy * fx
    )


def warp(source, flow: MotionField):
    """Typed warp: Frame -> Frame, FeatureMap -> FeatureMap."""
    t = warp_tensor(_values(source).unsqueeze(0), flow.displacements.unsqueeze(0)).squeeze(0)
    if isinstance(source, Frame):
        return Frame(t.clamp(0.0, 1.0))
    return FeatureMap(t)


def _values(source) -> torch.Tensor:
    if isinstance(source, Frame):
        return source.pixels
    if isinstance(source, FeatureMap):
        return source.values
    raise TypeError(f"cannot warp {type(source).__name__}")


def predict_frame(prev_recon: Frame | None, flow: MotionField) -> Frame:
    """Training-only motion-compensated prediction from the previous
    reconstructed frame."""
    if prev_recon is None:
        raise ValueError("predict_frame needs a previously reconstructed frame")
    return warp(prev_recon, flow)


@dataclass(frozen=True)
class MotionLatentPair:
    main: LatentGrid
    hyper: LatentGrid


class MotionEncoder(nn.Module):
    """Four stride-2 stages over the channel-concatenated inputs."""

    def __init__(self, in_channels: int, latent_channels: int, width: int = 48):
        super().__init__()
        self.down1 = conv(in_channels, width, kernel=5, stride=2)
        self.res1 = ResidualBlock(width)
        self.down2 = conv(width, width, kernel=5, stride=2)
        self.res2 = ResidualBlock(width)
        self.down3 = conv(width, width, kernel=5, stride=2)
        self.res3 = ResidualBlock(width)
        self.down4 = conv(width, latent_channels, kernel=5, stride=2)
        self.act = nn.LeakyReLU(0.2, inplace=True)

    def forward(self, frame: torch.Tensor, ref_feature: torch.Tensor) -> torch.Tensor:
        x = torch.cat([frame, ref_feature], dim=1)
        x = self.res1(self.act(self.down1(x)))
        x = self.res2(self.act(self.down2(x)))
        x = self.res3(self.act(self.down3(x)))
        return self.down4(x)


class MotionDecoder(nn.Module):
    """Mirror of the encoder; the final layer starts at zero so an untrained
    model emits zero flow (identity prediction)."""

    def __init__(self, latent_channels: int, width: int = 48):
        super().__init__()
        self.up1 = deconv(latent_channels, width)
        self.res1 = ResidualBlock(width)
        self.up2 = deconv(width, width)
        self.res2 = ResidualBlock(width)
        self.up3 = deconv(width, width)
        self.res3 = ResidualBlock(width)
        self.up4 = zero_init(deconv(width, 2))
        self.act = nn.LeakyReLU(0.2, inplace=True)

    def forward(self, latent: torch.Tensor) -> torch.Tensor:
        x = self.res1(self.act(self.up1(latent)))
        x = self.res2(self.act(self.up2(x)))
        x = self.res3(self.act(self.up3(x)))
        return self.up4(x)


class HyperEncoder(nn.Module):
    def __init__(self, in_ch: int, hyper_ch: int):
        super().__init__()
        self.net = nn.Sequential(
            conv(in_ch, hyper_ch, kernel=5, stride=2),
            nn.LeakyReLU(0.2, inplace=True),
            conv(hyper_ch, hyper_ch, kernel=5, stride=2),
        )

    def forward(self, latent: torch.Tensor) -> torch.Tensor:
        return self.net(latent)


class HyperDecoder(nn.Module):
    """Upsamples the hyper latent back to the main grid (cropped exactly)."""

    def __init__(self, hyper_ch: int, out_ch: int):
        super().__init__()
        self.up1 = deconv(hyper_ch, hyper_ch)
        self.up2 = deconv(hyper_ch, out_ch)
        self.act = nn.LeakyReLU(0.2, inplace=True)

    def forward(self, hyper: torch.Tensor, grid_hw: tuple[int, int]) -> torch.Tensor:
        x = self.act(self.up1(hyper))
        x = self.act(self.up2(x))
        return x[..., : grid_hw[0], : grid_hw[1]]


class MotionCodec(nn.Module):
    """Cross-domain motion autoencoder with hyper-prior."""

    def __init__(self, feature_channels: int = 64, latent_channels: int = 128, hyper_channels: int = 64):
        super().__init__()
        self.latent_channels = latent_channels
        self.encoder = MotionEncoder(3 + feature_channels, latent_channels)
        self.decoder = MotionDecoder(latent_channels)
        self.hyper_encoder = HyperEncoder(latent_channels, hyper_channels)
        self.hyper_decoder = HyperDecoder(hyper_channels, 64)

    def encode(self, frame: Frame, ref_feature: FeatureMap) -> MotionLatentPair:
        """Pre-quantization latents for one frame."""
        if frame.pixels.shape[-2:] != ref_feature.values.shape[-2:]:
            raise ValueError("frame and reference feature sizes differ")
        main, hyper = self.encode_tensors(
            frame.pixels.unsqueeze(0), ref_feature.values.unsqueeze(0)
        )
        return MotionLatentPair(
            main=LatentGrid(main.squeeze(0), "motion"),
            hyper=LatentGrid(hyper.squeeze(0), "hyper"),
        )

    def encode_tensors(self, frame: torch.Tensor, ref_feature: torch.Tensor):
        main = self.encoder(frame, ref_feature)
        hyper = self.hyper_encoder(main)
        return main, hyper

    def decode(self, latents: MotionLatentPair) -> MotionField:
        """Flow from the quantized main latent; pure function of its input."""
        flow = self.decoder(latents.main.values.unsqueeze(0)).squeeze(0)
        return MotionField(flow)

    def decode_tensor(self, main: torch.Tensor) -> torch.Tensor:
        return self.decoder(main)

    def hyper_features(self, hyper: torch.Tensor, grid_hw: tuple[int, int]) -> torch.Tensor:
        return self.hyper_decoder(hyper, grid_hw)
