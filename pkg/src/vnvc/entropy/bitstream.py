"""Sequence and frame bitstream containers.

Sequence layout (all little-endian):
  magic "VNVC0001" (8 bytes), u16 version, u16 intra_period,
  u32 height, u32 width (unpadded), u32 frame_count, u8 lambda_index,
  then per frame: u8 frame_type (0=I, 1=P), then per chunk
  u32 byte length + payload.

I frames carry 2 chunks (contextual_hyper, contextual_main); P frames 4
(motion_hyper, motion_main, contextual_hyper, contextual_main) in decode
order.  Each chunk payload starts with its symbol window (i16 lo, i16 hi)
followed by the range-coded bytes.

Fixed overhead: 25-byte sequence header, 1 byte per frame, 4 bytes per
chunk length field, 4 bytes per chunk window; reported bpp counts chunk
payloads (windows included) but not the container framing.
"""

import struct
from dataclasses import dataclass, field

MAGIC = b"VNVC0001"
VERSION = 1

FRAME_TYPE_I = 0
FRAME_TYPE_P = 1

P_CHUNKS = ("motion_hyper", "motion_main", "contextual_hyper", "contextual_main")
I_CHUNKS = ("contextual_hyper", "contextual_main")

_HEADER = struct.Struct("<8sHHIIIB")
_WINDOW = struct.Struct("<hh")
_LEN = struct.Struct("<I")


class BitstreamError(ValueError):
    pass


def pack_chunk(window_lo: int, window_hi: int, coded: bytes) -> bytes:
    return _WINDOW.pack(window_lo, window_hi) + coded


def unpack_chunk(payload: bytes) -> tuple[int, int, bytes]:
    if len(payload) < _WINDOW.size:
        raise BitstreamError("chunk payload shorter than its window header")
    lo, hi = _WINDOW.unpack_from(payload)
    return lo, hi, payload[_WINDOW.size :]


@dataclass
class FrameBitstream:
    """Ordered coded chunks of one frame."""

    frame_type: int
    chunks: dict = field(default_factory=dict)

    def __post_init__(self):
        expected = self.chunk_names()
        if tuple(self.chunks.keys()) != expected:
            raise BitstreamError(
                f"frame chunks must be exactly {expected} in order, got {tuple(self.chunks)}"
            )

    def chunk_names(self) -> tuple[str, ...]:
        return I_CHUNKS if self.frame_type == FRAME_TYPE_I else P_CHUNKS

    @property
    def payload_bytes(self) -> int:
        return sum(len(v) for v in self.chunks.values())


@dataclass
class SequenceHeader:
    intra_period: int
    height: int
    width: int
    frame_count: int
    lambda_index: int
    version: int = VERSION


def serialize_frame(fb: FrameBitstream) -> bytes:
    out = bytearray()
    out.append(fb.frame_type)
    for name in fb.chunk_names():
        payload = fb.chunks[name]
        out += _LEN.pack(len(payload))
        out += payload
    return bytes(out)


def parse_frame(data: bytes, offset: int) -> tuple[FrameBitstream, int]:
    if offset >= len(data):
        raise BitstreamError("truncated stream: missing frame record")
    ftype = data[offset]
    offset += 1
    if ftype not in (FRAME_TYPE_I, FRAME_TYPE_P):
        raise BitstreamError(f"unknown frame type {ftype}")
    names = I_CHUNKS if ftype == FRAME_TYPE_I else P_CHUNKS
    chunks = {}
    for name in names:
        if offset + _LEN.size > len(data):
            raise BitstreamError(f"truncated stream: missing {name} length")
        (length,) = _LEN.unpack_from(data, offset)
        offset += _LEN.size
        if offset + length > len(data):
            raise BitstreamError(f"truncated stream: {name} overruns the data")
        chunks[name] = bytes(data[offset : offset + length])
        offset += length
    return FrameBitstream(ftype, chunks), offset


def serialize_sequence(header: SequenceHeader, frames: list[FrameBitstream]) -> bytes:
    if len(frames) != header.frame_count:
        raise BitstreamError("frame_count does not match the frame list")
    out = bytearray(
        _HEADER.pack(
            MAGIC,
            header.version,
            header.intra_period,
            header.height,
            header.width,
            header.frame_count,
            header.lambda_index,
        )
    )
    for fb in frames:
        out += serialize_frame(fb)
    return bytes(out)


def parse_sequence(data: bytes) -> tuple[SequenceHeader, list[FrameBitstream]]:
    if len(data) < _HEADER.size:
        raise BitstreamError("truncated stream: missing sequence header")
    magic, version, intra_period, height, width, frame_count, lambda_index = _HEADER.unpack_from(
        data
    )
    if magic != MAGIC:
        raise BitstreamError(f"bad magic {magic!r}")
    if version != VERSION:
        raise BitstreamError(f"unsupported version {version}")
    header = SequenceHeader(intra_period, height, width, frame_count, lambda_index, version)
    frames = []
    offset = _HEADER.size
    for _ in range(frame_count):
        fb, offset = parse_frame(data, offset)
        frames.append(fb)
    if offset != len(data):
        raise BitstreamError(f"{len(data) - offset} trailing bytes after the last frame")
    return header, frames


def container_overhead_bytes(header: SequenceHeader, frames: list[FrameBitstream]) -> int:
    """Framing bytes not counted in bpp (header + frame types + lengths)."""
    per_frame = sum(1 + _LEN.size * len(fb.chunk_names()) for fb in frames)
    return _HEADER.size + per_frame
