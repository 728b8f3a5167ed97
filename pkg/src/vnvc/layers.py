"""Shared network building blocks."""

import torch
import torch.nn as nn


def conv(in_ch: int, out_ch: int, kernel: int = 3, stride: int = 1) -> nn.Conv2d:
    return nn.Conv2d(in_ch, out_ch, kernel, stride=stride, padding=kernel // 2)


def deconv(in_ch: int, out_ch: int, kernel: int = 5, stride: int = 2) -> nn.ConvTranspose2d:
    return nn.ConvTranspose2d(
        in_ch, out_ch, kernel, stride=stride, padding=kernel // 2, output_padding=stride - 1
    )


def zero_init(module: nn.Module) -> nn.Module:
    """Zero the final conv so the block starts as an identity/zero residual."""
    nn.init.zeros_(module.weight)
    if module.bias is not None:
        nn.init.zeros_(module.bias)
    return module


class ResidualBlock(nn.Module):
    def __init__(self, channels: int):
        super().__init__()
        self.conv1 = conv(channels, channels)
        self.conv2 = conv(channels, channels)
        self.act = nn.LeakyReLU(0.2, inplace=True)

    def forward(self, x):
        h = self.conv2(self.act(self.conv1(x)))
        return x + h


class ZeroResidual(nn.Module):
    """conv-act-conv residual whose last conv starts at zero."""

    def __init__(self, in_ch: int, out_ch: int, hidden: int | None = None):
        super().__init__()
        hidden = hidden or out_ch
        self.conv1 = conv(in_ch, hidden)
        self.conv2 = zero_init(conv(hidden, out_ch))
        self.act = nn.LeakyReLU(0.2, inplace=True)

    def forward(self, x):
        return self.conv2(self.act(self.conv1(x)))
