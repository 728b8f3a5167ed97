"""Procedural moving-texture sequences.

Desk-scale stand-in for a real training corpus: textured shapes drifting
over a textured background with small smooth motion (at most 4 px/frame),
bit-reproducible from the seed.
"""

import math

import numpy as np
import torch

from .frames import Frame

MOTION_STYLES = ("translate", "rotate", "mixed")

# Class ids for the toy motion-direction task.
DIRECTION_CLASSES = ("right", "left", "down", "up")


def _smooth_noise(rng: np.random.Generator, channels: int, h: int, w: int, cell: int) -> np.ndarray:
    """Bilinearly upsampled coarse noise; smooth texture in [0, 1]."""
    gh, gw = max(2, h // cell + 2), max(2, w // cell + 2)
    coarse = rng.random((channels, gh, gw))
    ys = np.linspace(0.0, gh - 1.0, h)
    xs = np.linspace(0.0, gw - 1.0, w)
    y0 = np.clip(ys.astype(np.int64), 0, gh - 2)
    x0 = np.clip(xs.astype(np.int64), 0, gw - 2)
    fy = (ys - y0)[None, :, None]
    fx = (xs - x0)[None, None, :]
    c00 = coarse[:, y0][:, :, x0]
    c01 = coarse[:, y0][:, :, x0 + 1]
    c10 = coarse[:, y0 + 1][:, :, x0]
    c11 = coarse[:, y0 + 1][:, :, x0 + 1]
    out = (
        c00 * (1 - fy) * (1 - fx)
        + c01 * (1 - fy) * fx
        + c10 * fy * (1 - fx)
        + c11 * fy * fx
    )
    return out.astype(np.float64)


def _ellipse_mask(h: int, w: int) -> np.ndarray:
    ys = (np.arange(h) - (h - 1) / 2.0) / (h / 2.0)
    xs = (np.arange(w) - (w - 1) / 2.0) / (w / 2.0)
    return (ys[:, None] ** 2 + xs[None, :] ** 2) <= 1.0


def _rotate_patch(texture: np.ndarray, mask: np.ndarray, angle: float) -> tuple[np.ndarray, np.ndarray]:
    """Rotate a (3, h, w) texture and its mask about the patch center."""
    _, h, w = texture.shape
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    ys, xs = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
    ca, sa = math.cos(-angle), math.sin(-angle)
    sy = cy + (ys - cy) * ca - (xs - cx) * sa
    sx = cx + (ys - cy) * sa + (xs - cx) * ca
    y0 = np.clip(np.floor(sy).astype(np.int64), 0, h - 2)
    x0 = np.clip(np.floor(sx).astype(np.int64), 0, w - 2)
    fy = np.clip(sy - y0, 0.0, 1.0)
    fx = np.clip(sx - x0, 0.0, 1.0)
    inside = (sy >= 0) & (sy <= h - 1) & (sx >= 0) & (sx <= w - 1)

    def sample(img):
        return (
            img[..., y0, x0] * (1 - fy) * (1 - fx)
            + img[..., y0, x0 + 1] * (1 - fy) * fx
            + img[..., y0 + 1, x0] * fy * (1 - fx)
            + img[..., y0 + 1, x0 + 1] * fy * fx
        )

    tex = sample(texture)
    m = sample(mask.astype(np.float64)) * inside
    return tex, m >= 0.5


class _Shape:
    def __init__(self, rng: np.random.Generator, h: int, w: int, velocity, spin: float):
        side = max(4, min(h, w) // 3)
        self.size = (side, side)
        # Oversized patch so rotation never clips the shape.
        pad = int(math.ceil(side * (math.sqrt(2.0) - 1.0) / 2.0)) + 1
        self.patch = side + 2 * pad
        self.texture = _smooth_noise(rng, 3, self.patch, self.patch, cell=3)
        base = np.zeros((self.patch, self.patch), dtype=bool)
        inner = _ellipse_mask(side, side) if rng.random() < 0.5 else np.ones((side, side), bool)
        base[pad : pad + side, pad : pad + side] = inner
        self.mask = base
        margin = 5.0
        self.pos = np.array(
            [
                rng.uniform(margin, max(margin + 1.0, h - self.patch - margin)),
                rng.uniform(margin, max(margin + 1.0, w - self.patch - margin)),
            ]
        )
        self.vel = np.asarray(velocity, dtype=np.float64)  # (vy, vx)
        self.spin = spin
        self.angle = 0.0

    def step(self, h: int, w: int):
        self.pos = self.pos + self.vel
        # Bounce off borders so long sequences keep the shape in view.
        for axis, limit in ((0, h - self.patch), (1, w - self.patch)):
            if self.pos[axis] < 0:
                self.pos[axis] = -self.pos[axis]
                self.vel[axis] = -self.vel[axis]
            elif self.pos[axis] > limit:
                self.pos[axis] = 2 * limit - self.pos[axis]
                self.vel[axis] = -self.vel[axis]
        self.angle += self.spin

    def render(self, canvas: np.ndarray):
        if abs(self.angle) > 1e-12:
            tex, mask = _rotate_patch(self.texture, self.mask, self.angle)
        else:
            tex, mask = self.texture, self.mask
        h, w = canvas.shape[1:]
        top = int(round(self.pos[0]))
        left = int(round(self.pos[1]))
        y0, y1 = max(0, top), min(h, top + self.patch)
        x0, x1 = max(0, left), min(w, left + self.patch)
        if y0 >= y1 or x0 >= x1:
            return
        sub = mask[y0 - top : y1 - top, x0 - left : x1 - left]
        region = canvas[:, y0:y1, x0:x1]
        region[:, sub] = tex[:, y0 - top : y1 - top, x0 - left : x1 - left][:, sub]


def _make_shapes(rng, h, w, motion_style, velocity, num_shapes):
    shapes = []
    for i in range(num_shapes):
        if velocity is not None:
            vel = (float(velocity[1]), float(velocity[0]))  # (vy, vx) from (vx, vy)
        elif motion_style == "rotate":
            vel = (0.0, 0.0)
        else:
            vel = tuple(rng.uniform(-3.0, 3.0, size=2))
        if motion_style == "translate":
            spin = 0.0
        elif motion_style == "rotate":
            spin = rng.uniform(-0.12, 0.12)
        else:
            spin = rng.uniform(-0.08, 0.08)
        shapes.append(_Shape(rng, h, w, vel, spin))
    return shapes


def generate_synthetic_sequence(
    seed: int,
    num_frames: int,
    height: int,
    width: int,
    motion_style: str = "translate",
    velocity: tuple[float, float] | None = None,
    num_shapes: int = 2,
) -> list[Frame]:
    """Deterministic list of frames; `velocity` is (vx, vy) applied to all shapes."""
    if num_frames < 1:
        raise ValueError("num_frames must be >= 1")
    if motion_style not in MOTION_STYLES:
        raise ValueError(f"unknown motion style {motion_style!r}")
    rng = np.random.default_rng(seed)
    background = 0.15 + 0.7 * _smooth_noise(rng, 3, height, width, cell=6)
    shapes = _make_shapes(rng, height, width, motion_style, velocity, num_shapes)
    frames = []
    for t in range(num_frames):
        canvas = background.copy()
        for shape in shapes:
            shape.render(canvas)
        frames.append(Frame(torch.from_numpy(np.clip(canvas, 0.0, 1.0)).float()))
        if t + 1 < num_frames:
            for shape in shapes:
                shape.step(height, width)
    return frames


_DIRECTION_VECTORS = {
    "right": (1.0, 0.0),
    "left": (-1.0, 0.0),
    "down": (0.0, 1.0),
    "up": (0.0, -1.0),
}


def generate_labeled_clip(
    seed: int, num_frames: int, height: int, width: int
) -> tuple[list[Frame], int]:
    """Clip whose shapes all drift in one of four directions; returns class id."""
    rng = np.random.default_rng(seed ^ 0x5EED)
    class_id = int(rng.integers(0, len(DIRECTION_CLASSES)))
    ax, ay = _DIRECTION_VECTORS[DIRECTION_CLASSES[class_id]]
    speed = rng.uniform(1.5, 3.0)
    jitter = rng.uniform(-0.3, 0.3)
    vel = (ax * speed + (0.0 if ax else jitter), ay * speed + (0.0 if ay else jitter))
    frames = generate_synthetic_sequence(
        seed, num_frames, height, width, motion_style="translate", velocity=vel
    )
    return frames, class_id


def add_gaussian_noise(frames: list[Frame], sigma: float, seed: int) -> list[Frame]:
    """AWGN with sigma on the 0..255 scale, clipped back to [0, 1]."""
    rng = np.random.default_rng(seed)
    noisy = []
    for f in frames:
        n = rng.standard_normal(tuple(f.pixels.shape)) * (sigma / 255.0)
        arr = np.clip(f.pixels.numpy() + n, 0.0, 1.0)
        noisy.append(Frame(torch.from_numpy(arr).float()))
    return noisy
