"""Video reconstruction: intermediate feature -> pixels.

Variants trade quality for decode complexity: two cascaded channel-
attention U-Nets (the full model), one U-Net, or plain residual blocks.
The feature is the network's only input; forward invocations are counted
on the instance so feature-path pipelines can prove they never ran it.
"""

import torch
import torch.nn as nn

from .frames import Frame, FeatureMap
from .layers import conv, ResidualBlock

VARIANTS = ("two_unet", "one_unet", "two_resblock", "one_resblock")


class ChannelAttention(nn.Module):
    """Squeeze-excite gate: global average pool -> two-layer MLP -> scale."""

    def __init__(self, channels: int, reduction: int = 4):
        super().__init__()
        hidden = max(channels // reduction, 4)
        self.fc1 = nn.Linear(channels, hidden)
        self.fc2 = nn.Linear(hidden, channels)
        self.act = nn.ReLU(inplace=True)

    def forward(self, x):
        squeezed = x.mean(dim=(2, 3))
        gate = torch.sigmoid(self.fc2(self.act(self.fc1(squeezed))))
        return x * gate.unsqueeze(-1).unsqueeze(-1)


class _AttentionStage(nn.Module):
    def __init__(self, in_ch: int, out_ch: int):
        super().__init__()
        self.conv1 = conv(in_ch, out_ch)
        self.conv2 = conv(out_ch, out_ch)
        self.attn = ChannelAttention(out_ch)
        self.act = nn.LeakyReLU(0.2, inplace=True)

    def forward(self, x):
        x = self.act(self.conv1(x))
        x = self.act(self.conv2(x))
        return self.attn(x)


class AttentionUNet(nn.Module):
    """3-level U-Net with channel attention after every stage."""

    def __init__(self, channels: int, widths: tuple[int, int, int] = (32, 48, 64)):
        super().__init__()
        w0, w1, w2 = widths
        self.enc0 = _AttentionStage(channels, w0)
        self.down1 = conv(w0, w1, stride=2)
        self.enc1 = _AttentionStage(w1, w1)
        self.down2 = conv(w1, w2, stride=2)
        self.enc2 = _AttentionStage(w2, w2)
        self.up1 = nn.ConvTranspose2d(w2, w1, 2, stride=2)
        self.dec1 = _AttentionStage(2 * w1, w1)
        self.up0 = nn.ConvTranspose2d(w1, w0, 2, stride=2)
        self.dec0 = _AttentionStage(2 * w0, w0)
        self.out = conv(w0, channels)
        self.act = nn.LeakyReLU(0.2, inplace=True)

    def forward(self, x):
        e0 = self.enc0(x)
        e1 = self.enc1(self.act(self.down1(e0)))
        e2 = self.enc2(self.act(self.down2(e1)))
        d1 = self.dec1(torch.cat([self.up1(e2), e1], dim=1))
        d0 = self.dec0(torch.cat([self.up0(d1), e0], dim=1))
        return self.out(d0)


class ReconstructionNet(nn.Module):
    """variant in {two_unet, one_unet, two_resblock, one_resblock}."""

    def __init__(self, feature_channels: int = 64, variant: str = "two_unet"):
        super().__init__()
        if variant not in VARIANTS:
            raise ValueError(f"unknown reconstruction variant {variant!r}")
        self.variant = variant
        n = feature_channels
        if variant in ("two_unet", "one_unet"):
            count = 2 if variant == "two_unet" else 1
            self.stem = None
            self.stages = nn.ModuleList(AttentionUNet(n) for _ in range(count))
            self.head = conv(n, 3)
        else:
            # Narrow bottleneck keeps the complexity strictly below one U-Net,
            # matching the variants' intended ordering.
            count = 2 if variant == "two_resblock" else 1
            width = n // 2
            self.stem = conv(n, width, kernel=1)
            self.stages = nn.ModuleList(ResidualBlock(width) for _ in range(count))
            self.head = conv(width, 3)
        self.invocations = 0

    def _trunk(self, feature: torch.Tensor) -> torch.Tensor:
        x = feature if self.stem is None else self.stem(feature)
        for stage in self.stages:
            if isinstance(stage, AttentionUNet):
                x = x + stage(x)
            else:
                x = stage(x)
        return x

    def forward(self, feature: torch.Tensor) -> torch.Tensor:
        self.invocations += 1
        return self.head(self._trunk(feature))

    def forward_with_tap(self, feature: torch.Tensor):
        """Also returns the feature entering the final conv (for the
        last-feature context-source ablation)."""
        self.invocations += 1
        x = self._trunk(feature)
        return self.head(x), x


def reconstruct(net: ReconstructionNet, feature: FeatureMap) -> Frame:
    """Pixel frame in [0, 1] (clamped) from an intermediate feature."""
    with torch.no_grad():
        raw = net(feature.values.unsqueeze(0)).squeeze(0)
    return Frame(raw.clamp(0.0, 1.0))
