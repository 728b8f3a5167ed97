"""Task heads running directly on intermediate features (fea mode) or on
reconstructed pixels (img mode)."""

from dataclasses import dataclass

import torch
import torch.nn as nn
import torch.nn.functional as F

from .frames import Frame, FeatureMap
from .layers import conv, zero_init, ResidualBlock

TASK_KINDS = ("denoise", "classify")
INPUT_MODES = ("fea", "img")
NUM_MOTION_CLASSES = 4


@dataclass
class TaskHeadConfig:
    kind: str
    input_mode: str
    width: int = 32
    depth: int = 2
    feature_channels: int = 64

    def __post_init__(self):
        if self.kind not in TASK_KINDS:
            raise ValueError(f"unknown task kind {self.kind!r}")
        if self.input_mode not in INPUT_MODES:
            raise ValueError(f"unknown input mode {self.input_mode!r}")


class DenoiseHead(nn.Module):
    """Residual denoiser: output = input projection + learned residual.

    fea mode consumes (feature, full-res context); img mode consumes
    (decoded frame, predicted frame).  The residual branch starts at zero,
    so an untrained img-mode head returns the decoded frame unchanged.
    """

    def __init__(self, cfg: TaskHeadConfig):
        super().__init__()
        if cfg.kind != "denoise":
            raise ValueError("config kind must be denoise")
        self.cfg = cfg
        n = cfg.feature_channels
        in_ch = 2 * n if cfg.input_mode == "fea" else 6
        self.stem = conv(in_ch, cfg.width)
        self.blocks = nn.Sequential(*[ResidualBlock(cfg.width) for _ in range(cfg.depth)])
        self.residual_out = zero_init(conv(cfg.width, 3))
        if cfg.input_mode == "fea":
            self.project = conv(n, 3, kernel=1)
        else:
            self.project = None
        self.act = nn.LeakyReLU(0.2, inplace=True)

    def _expected_primary_channels(self) -> int:
        return self.cfg.feature_channels if self.cfg.input_mode == "fea" else 3

    def forward(self, primary: torch.Tensor, aux: torch.Tensor) -> torch.Tensor:
        want = self._expected_primary_channels()
        if primary.shape[1] != want or aux.shape[1] != want:
            raise ValueError(
                f"{self.cfg.input_mode} denoise head expects {want}-channel inputs, "
                f"got {primary.shape[1]} and {aux.shape[1]}"
            )
        base = self.project(primary) if self.project is not None else primary
        h = self.act(self.stem(torch.cat([primary, aux], dim=1)))
        return base + self.residual_out(self.blocks(h))


def denoise(head: DenoiseHead, primary, aux) -> Frame:
    """fea mode: (feature, context c0); img mode: (decoded, predicted)."""
    p = primary.values if isinstance(primary, FeatureMap) else primary.pixels
    a = aux.values if isinstance(aux, FeatureMap) else aux.pixels
    with torch.no_grad():
        out = head(p.unsqueeze(0), a.unsqueeze(0)).squeeze(0)
    return Frame(out.clamp(0.0, 1.0))


class ClassifyHead(nn.Module):
    """Toy classifier over the clip's global motion direction.

    The only change between modes is the first layer's input channel count:
    the feature path takes the feature channel count, the pixel path 3.
    """

    def __init__(self, cfg: TaskHeadConfig, num_classes: int = NUM_MOTION_CLASSES):
        super().__init__()
        if cfg.kind != "classify":
            raise ValueError("config kind must be classify")
        self.cfg = cfg
        in_ch = cfg.feature_channels if cfg.input_mode == "fea" else 3
        self.in_channels = in_ch
        layers = [conv(in_ch, cfg.width, stride=2), nn.LeakyReLU(0.2, inplace=True)]
        for _ in range(cfg.depth):
            layers += [conv(cfg.width, cfg.width, stride=2), nn.LeakyReLU(0.2, inplace=True)]
        self.features = nn.Sequential(*layers)
        self.fc = nn.Linear(cfg.width, num_classes)
        self.num_classes = num_classes

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        """x: the difference of two consecutive decoded inputs (the caller
        computes current - previous).  Returns logits."""
        if x.shape[1] != self.in_channels:
            raise ValueError(
                f"{self.cfg.input_mode} classify head expects {self.in_channels} input "
                f"channels, got {x.shape[1]}"
            )
        h = self.features(x)
        return self.fc(h.mean(dim=(2, 3)))


def classify(head: ClassifyHead, current, previous) -> torch.Tensor:
    """Normalized class scores from two consecutive decoded inputs."""
    cur = current.values if isinstance(current, FeatureMap) else current.pixels
    prev = previous.values if isinstance(previous, FeatureMap) else previous.pixels
    with torch.no_grad():
        logits = head(cur.unsqueeze(0) - prev.unsqueeze(0)).squeeze(0)
    return torch.softmax(logits, dim=-1)


def save_head_checkpoint(path, head: nn.Module):
    cfg = head.cfg
    torch.save(
        {
            "kind": cfg.kind,
            "input_mode": cfg.input_mode,
            "config": {
                "kind": cfg.kind,
                "input_mode": cfg.input_mode,
                "width": cfg.width,
                "depth": cfg.depth,
                "feature_channels": cfg.feature_channels,
            },
            "state": head.state_dict(),
        },
        path,
    )


def load_head_checkpoint(path) -> nn.Module:
    payload = torch.load(path, map_location="cpu", weights_only=False)
    cfg = TaskHeadConfig(**payload["config"])
    head = DenoiseHead(cfg) if cfg.kind == "denoise" else ClassifyHead(cfg)
    head.load_state_dict(payload["state"])
    head.eval()
    return head
