"""Frame import/export: 8-bit PNG and raw planar float32."""

import struct
from pathlib import Path

import numpy as np
import torch
from PIL import Image

from .frames import Frame

RAW_MAGIC = b"VNVCRAW0"
_RAW_HEADER = struct.Struct("<8sII")


def frame_to_uint8(frame: Frame) -> np.ndarray:
    """(H, W, 3) uint8 via round(x*255) with clamping."""
    arr = frame.pixels.numpy()
    return np.clip(np.rint(arr * 255.0), 0, 255).astype(np.uint8).transpose(1, 2, 0)


def frame_from_uint8(arr: np.ndarray) -> Frame:
    t = torch.from_numpy(arr.astype(np.float32) / 255.0).permute(2, 0, 1)
    return Frame(t.contiguous())


def save_png(frame: Frame, path):
    Image.fromarray(frame_to_uint8(frame), mode="RGB").save(path, format="PNG")


def load_png(path) -> Frame:
    with Image.open(path) as img:
        rgb = img.convert("RGB")
        return frame_from_uint8(np.asarray(rgb))


def save_raw(frame: Frame, path):
    """16-byte header (magic, u32 H, u32 W, little-endian) + planar RGB float32."""
    data = frame.pixels.numpy().astype("<f4").tobytes()
    with open(path, "wb") as fh:
        fh.write(_RAW_HEADER.pack(RAW_MAGIC, frame.height, frame.width))
        fh.write(data)


def load_raw(path) -> Frame:
    with open(path, "rb") as fh:
        header = fh.read(_RAW_HEADER.size)
        if len(header) != _RAW_HEADER.size:
            raise ValueError(f"{path}: truncated raw header")
        magic, h, w = _RAW_HEADER.unpack(header)
        if magic != RAW_MAGIC:
            raise ValueError(f"{path}: bad raw magic {magic!r}")
        payload = fh.read(3 * h * w * 4)
        if len(payload) != 3 * h * w * 4:
            raise ValueError(f"{path}: truncated raw payload")
    arr = np.frombuffer(payload, dtype="<f4").reshape(3, h, w)
    return Frame(torch.from_numpy(arr.copy()))


def load_frames(path) -> list[Frame]:
    """A directory of .png/.raw frames (sorted by name) or a single .raw file."""
    p = Path(path)
    if p.is_dir():
        files = sorted(
            f for f in p.iterdir() if f.suffix.lower() in (".png", ".raw")
        )
        if not files:
            raise ValueError(f"{path}: no .png or .raw frames found")
        return [load_png(f) if f.suffix.lower() == ".png" else load_raw(f) for f in files]
    if p.suffix.lower() == ".raw":
        return [load_raw(p)]
    if p.suffix.lower() == ".png":
        return [load_png(p)]
    raise ValueError(f"{path}: expected a directory or a .png/.raw file")
