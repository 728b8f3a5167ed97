"""Temporal context mining from the previous intermediate feature.

A three-level feature pyramid of the reference feature is warped with the
decoded motion (downsampled and rescaled per level) and refined coarse to
fine.  The refinement convs start at zero, so an untrained miner passes the
warped features through unchanged.
"""

from dataclasses import dataclass

import torch
import torch.nn as nn
import torch.nn.functional as F

from .frames import FeatureMap, MotionField
from .layers import conv, ZeroResidual
from .motion import warp_tensor


@dataclass(frozen=True)
class ContextPyramid:
    """Temporal contexts at full, half, and quarter resolution; all share the
    reference feature's channel count."""

    c0: FeatureMap
    c1: FeatureMap
    c2: FeatureMap

    def __post_init__(self):
        n = self.c0.channels
        if self.c1.channels != n or self.c2.channels != n:
            raise ValueError("context channel counts must match")
        h, w = self.c0.height, self.c0.width
        if (self.c1.height, self.c1.width) != (h // 2, w // 2):
            raise ValueError("level-1 context must be half resolution")
        if (self.c2.height, self.c2.width) != (h // 4, w // 4):
            raise ValueError("level-2 context must be quarter resolution")

    def tensors(self) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
        return (
            self.c0.values.unsqueeze(0),
            self.c1.values.unsqueeze(0),
            self.c2.values.unsqueeze(0),
        )

    @classmethod
    def from_tensors(cls, c0: torch.Tensor, c1: torch.Tensor, c2: torch.Tensor) -> "ContextPyramid":
        return cls(
            FeatureMap(c0.squeeze(0)), FeatureMap(c1.squeeze(0)), FeatureMap(c2.squeeze(0))
        )


def downsample_flow_tensor(flow: torch.Tensor, level: int) -> torch.Tensor:
    if level not in (0, 1, 2):
        raise ValueError(f"invalid pyramid level {level}")
    if level == 0:
        return flow
    factor = 2 ** level
    return F.avg_pool2d(flow, factor) / factor


def downsample_flow(flow: MotionField, level: int) -> MotionField:
    """Average-pool by 2^level and rescale displacements by 2^-level."""
    return MotionField(
        downsample_flow_tensor(flow.displacements.unsqueeze(0), level).squeeze(0)
    )


class ContextMiner(nn.Module):
    def __init__(self, feature_channels: int = 64):
        super().__init__()
        n = feature_channels
        self.level0 = conv(n, n)
        self.level1 = conv(n, n, stride=2)
        self.level2 = conv(n, n, stride=2)
        self.act = nn.LeakyReLU(0.2, inplace=True)
        self.refine2 = ZeroResidual(n, n)
        self.refine1 = ZeroResidual(2 * n, n)
        self.refine0 = ZeroResidual(2 * n, n)

    def forward(self, ref_feature: torch.Tensor, flow: torch.Tensor):
        f0 = self.level0(ref_feature)
        f1 = self.level1(self.act(f0))
        f2 = self.level2(self.act(f1))
        w0 = warp_tensor(f0, flow)
        w1 = warp_tensor(f1, downsample_flow_tensor(flow, 1))
        w2 = warp_tensor(f2, downsample_flow_tensor(flow, 2))
        c2 = w2 + self.refine2(w2)
        up1 = F.interpolate(c2, scale_factor=2, mode="nearest")
        c1 = w1 + self.refine1(torch.cat([w1, up1], dim=1))
        up0 = F.interpolate(c1, scale_factor=2, mode="nearest")
        c0 = w0 + self.refine0(torch.cat([w0, up0], dim=1))
        return c0, c1, c2

    def mine(self, ref_feature: FeatureMap, flow: MotionField) -> ContextPyramid:
        if ref_feature.values.shape[-2:] != flow.displacements.shape[-2:]:
            raise ValueError("reference feature and flow sizes differ")
        c0, c1, c2 = self.forward(
            ref_feature.values.unsqueeze(0), flow.displacements.unsqueeze(0)
        )
        return ContextPyramid.from_tensors(c0, c1, c2)


def mine_contexts(miner: ContextMiner, ref_feature: FeatureMap, flow: MotionField) -> ContextPyramid:
    return miner.mine(ref_feature, flow)


def zero_pyramid_like(ctx: tuple[torch.Tensor, torch.Tensor, torch.Tensor]):
    """All-zero contexts with matching shapes (conditioning ablation)."""
    return tuple(torch.zeros_like(c) for c in ctx)
