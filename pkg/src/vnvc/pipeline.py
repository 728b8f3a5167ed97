"""End-to-end encode/decode over a GOP structure.

The encoder maintains the same reference state the decoder will: it
quantizes latents, decodes them through the shared module code paths, and
updates its reference feature from the decoded values only.  Neither side
ever runs the reconstruction network inside the loop, so the decoder can
stop at the intermediate feature.
"""

import hashlib
import time
from dataclasses import dataclass, field

import numpy as np
import torch
import torch.nn as nn

from .config import CodecConfig
from .frames import Frame, FeatureMap, RDStats, pad_tensor_to_multiple, padded_size
from .layers import conv, deconv, ResidualBlock
from .motion import MotionCodec, HyperEncoder, HyperDecoder
from .context import ContextMiner
from .contextual import ContextualCodec
from .reconstruction import ReconstructionNet
from .errors import InputError, MismatchError
from .entropy import coder
from .entropy.models import FactorizedModel, LaplaceParams, quantize_eval
from .entropy.parameters import EntropyConditioner
from .entropy.bitstream import (
    FRAME_TYPE_I,
    FRAME_TYPE_P,
    FrameBitstream,
    SequenceHeader,
    serialize_sequence,
    parse_sequence,
    pack_chunk,
    unpack_chunk,
)

PAD_MULTIPLE = 16


def gop_frame_types(num_frames: int, intra_period: int) -> list[int]:
    """Frame 0 is I; an I frame every intra_period frames; the rest are P."""
    return [FRAME_TYPE_I if i % intra_period == 0 else FRAME_TYPE_P for i in range(num_frames)]


@dataclass
class GopPlan:
    intra_period: int
    num_frames: int
    frame_types: list[int] = field(init=False)

    def __post_init__(self):
        if self.intra_period < 1:
            raise ValueError("intra_period must be >= 1")
        self.frame_types = gop_frame_types(self.num_frames, self.intra_period)


class IntraEncoder(nn.Module):
    def __init__(self, latent_channels: int, width: int = 48):
        super().__init__()
        self.net = nn.Sequential(
            conv(3, width, kernel=5, stride=2),
            ResidualBlock(width),
            conv(width, width, kernel=5, stride=2),
            ResidualBlock(width),
            conv(width, width, kernel=5, stride=2),
            ResidualBlock(width),
            conv(width, latent_channels, kernel=5, stride=2),
        )

    def forward(self, x):
        return self.net(x)


class IntraDecoder(nn.Module):
    """Decodes the intra latent straight to an intermediate feature so P
    frames reference I frames uniformly."""

    def __init__(self, feature_channels: int, latent_channels: int, width: int = 48):
        super().__init__()
        self.net = nn.Sequential(
            deconv(latent_channels, width),
            ResidualBlock(width),
            deconv(width, width),
            ResidualBlock(width),
            deconv(width, width),
            ResidualBlock(width),
            deconv(width, feature_channels),
            conv(feature_channels, feature_channels),
        )

    def forward(self, latent):
        return self.net(latent)


class IntraCodec(nn.Module):
    def __init__(self, feature_channels: int = 64, latent_channels: int = 96, hyper_channels: int = 64):
        super().__init__()
        self.latent_channels = latent_channels
        self.encoder = IntraEncoder(latent_channels)
        self.decoder = IntraDecoder(feature_channels, latent_channels)
        self.hyper_encoder = HyperEncoder(latent_channels, hyper_channels)
        self.hyper_decoder = HyperDecoder(hyper_channels, 64)


class VideoCodec(nn.Module):
    """All trainable parts of the compression loop plus reconstruction."""

    def __init__(self, config: CodecConfig):
        super().__init__()
        self.config = config
        n = config.feature_channels
        hc = config.hyper_latent_channels
        self.intra = IntraCodec(n, config.contextual_latent_channels, hc)
        self.motion = MotionCodec(n, config.motion_latent_channels, hc)
        self.miner = ContextMiner(n)
        self.contextual = ContextualCodec(n, config.contextual_latent_channels, hc)
        self.conditioner = EntropyConditioner(
            motion_latent_channels=config.motion_latent_channels,
            contextual_latent_channels=config.contextual_latent_channels,
            feature_channels=n,
        )
        self.factorized = nn.ModuleDict(
            {
                "motion": FactorizedModel(hc),
                "contextual": FactorizedModel(hc),
                "intra": FactorizedModel(hc),
            }
        )
        self.recon = ReconstructionNet(n, config.reconstruction_variant)

    @classmethod
    def seeded(cls, config: CodecConfig) -> "VideoCodec":
        """Build with deterministic initialization from config.seed."""
        torch.manual_seed(config.seed)
        return cls(config)


def _code_factorized(latent_int: torch.Tensor, model: FactorizedModel) -> bytes:
    syms = latent_int.detach().to(torch.int64).cpu().numpy()
    c, h, w = syms.shape
    lo, hi = coder.symbol_window(syms)
    cdfs = model.integer_cdfs(lo, hi)
    rows = np.repeat(np.arange(c, dtype=np.int64), h * w)
    data = coder.range_encode(syms.ravel(), lo, cdfs, rows)
    return pack_chunk(lo, hi, data)


def _decode_factorized(payload: bytes, shape, model: FactorizedModel) -> torch.Tensor:
    c, h, w = shape
    lo, hi, data = unpack_chunk(payload)
    cdfs = model.integer_cdfs(lo, hi)
    rows = np.repeat(np.arange(c, dtype=np.int64), h * w)
    syms = coder.range_decode(data, c * h * w, lo, cdfs, rows)
    return torch.from_numpy(syms.reshape(shape).astype(np.float32))


def _code_laplace(latent_int: torch.Tensor, params: LaplaceParams) -> bytes:
    syms = latent_int.detach().to(torch.int64).cpu().numpy().ravel()
    lo, hi = coder.symbol_window(syms)
    cdfs = params.integer_cdfs(lo, hi)
    data = coder.range_encode(syms, lo, cdfs)
    return pack_chunk(lo, hi, data)


def _decode_laplace(payload: bytes, shape, params: LaplaceParams) -> torch.Tensor:
    lo, hi, data = unpack_chunk(payload)
    cdfs = params.integer_cdfs(lo, hi)
    count = int(np.prod(shape))
    syms = coder.range_decode(data, count, lo, cdfs)
    return torch.from_numpy(syms.reshape(shape).astype(np.float32))


def _grid_of(padded_h: int, padded_w: int) -> tuple[int, int]:
    return padded_h // PAD_MULTIPLE, padded_w // PAD_MULTIPLE


class _Timer:
    def __init__(self, sink: dict, key: str):
        self.sink = sink
        self.key = key

    def __enter__(self):
        self.t0 = time.perf_counter()

    def __exit__(self, *exc):
        self.sink[self.key] = self.sink.get(self.key, 0.0) + time.perf_counter() - self.t0


def encode_intra_frame(codec: VideoCodec, x: torch.Tensor) -> tuple[dict, torch.Tensor]:
    """x: (1, 3, H, W) padded.  Returns ordered chunks and the decoded feature."""
    grid = _grid_of(*x.shape[-2:])
    y = codec.intra.encoder(x)
    z = codec.intra.hyper_encoder(y)
    z_hat = quantize_eval(z)
    hyper_feat = codec.intra.hyper_decoder(z_hat, grid)
    mu, scale = codec.conditioner.laplace_params_for("intra", hyper_feat)
    y_hat = quantize_eval(y)
    chunks = {
        "contextual_hyper": _code_factorized(z_hat.squeeze(0), codec.factorized["intra"]),
        "contextual_main": _code_laplace(
            y_hat.squeeze(0), LaplaceParams(mu.squeeze(0), scale.squeeze(0))
        ),
    }
    feature = codec.intra.decoder(y_hat)
    return chunks, feature


def decode_intra_frame(codec: VideoCodec, fb: FrameBitstream, padded_hw) -> torch.Tensor:
    grid = _grid_of(*padded_hw)
    hyper_shape = _hyper_shape(codec.config.hyper_latent_channels, grid)
    z_hat = _decode_factorized(
        fb.chunks["contextual_hyper"], hyper_shape, codec.factorized["intra"]
    ).unsqueeze(0)
    hyper_feat = codec.intra.hyper_decoder(z_hat, grid)
    mu, scale = codec.conditioner.laplace_params_for("intra", hyper_feat)
    main_shape = (codec.intra.latent_channels, grid[0], grid[1])
    y_hat = _decode_laplace(
        fb.chunks["contextual_main"], main_shape, LaplaceParams(mu.squeeze(0), scale.squeeze(0))
    ).unsqueeze(0)
    return codec.intra.decoder(y_hat)


def _hyper_shape(channels: int, grid: tuple[int, int]) -> tuple[int, int, int]:
    # Two stride-2 convs with kernel 5 / padding 2: each halves with ceil.
    gh = (grid[0] + 1) // 2
    gw = (grid[1] + 1) // 2
    return channels, (gh + 1) // 2, (gw + 1) // 2


def encode_inter_frame(
    codec: VideoCodec, x: torch.Tensor, ref_feature: torch.Tensor
) -> tuple[dict, torch.Tensor]:
    """One P frame: motion, contexts, conditional coding; returns chunks and
    the decoded feature that becomes the next reference."""
    grid = _grid_of(*x.shape[-2:])
    chunks = {}

    m = codec.motion.encoder(x, ref_feature)
    mz = codec.motion.hyper_encoder(m)
    mz_hat = quantize_eval(mz)
    chunks["motion_hyper"] = _code_factorized(mz_hat.squeeze(0), codec.factorized["motion"])
    hyper_feat_m = codec.motion.hyper_decoder(mz_hat, grid)
    mu_m, scale_m = codec.conditioner.laplace_params_for("motion", hyper_feat_m)
    m_hat = quantize_eval(m)
    chunks["motion_main"] = _code_laplace(
        m_hat.squeeze(0), LaplaceParams(mu_m.squeeze(0), scale_m.squeeze(0))
    )

    flow = codec.motion.decoder(m_hat)
    ctx = codec.miner(ref_feature, flow)

    y = codec.contextual.encoder(x, *ctx)
    z = codec.contextual.hyper_encoder(y)
    z_hat = quantize_eval(z)
    chunks["contextual_hyper"] = _code_factorized(
        z_hat.squeeze(0), codec.factorized["contextual"]
    )
    hyper_feat_c = codec.contextual.hyper_decoder(z_hat, grid)
    prior = codec.conditioner.temporal_prior(ctx)
    mu_c, scale_c = codec.conditioner.laplace_params_for("contextual", hyper_feat_c, prior)
    y_hat = quantize_eval(y)
    chunks["contextual_main"] = _code_laplace(
        y_hat.squeeze(0), LaplaceParams(mu_c.squeeze(0), scale_c.squeeze(0))
    )

    feature = codec.contextual.decoder(y_hat, *ctx)
    ordered = {name: chunks[name] for name in ("motion_hyper", "motion_main", "contextual_hyper", "contextual_main")}
    return ordered, feature


def decode_inter_frame(
    codec: VideoCodec,
    fb: FrameBitstream,
    ref_feature: torch.Tensor,
    padded_hw,
    timings: dict | None = None,
    aux_out: dict | None = None,
) -> torch.Tensor:
    timings = timings if timings is not None else {}
    grid = _grid_of(*padded_hw)
    hyper_shape = _hyper_shape(codec.config.hyper_latent_channels, grid)

    with _Timer(timings, "entropy"):
        mz_hat = _decode_factorized(
            fb.chunks["motion_hyper"], hyper_shape, codec.factorized["motion"]
        ).unsqueeze(0)
    with _Timer(timings, "motion"):
        hyper_feat_m = codec.motion.hyper_decoder(mz_hat, grid)
        mu_m, scale_m = codec.conditioner.laplace_params_for("motion", hyper_feat_m)
    motion_shape = (codec.motion.latent_channels, grid[0], grid[1])
    with _Timer(timings, "entropy"):
        m_hat = _decode_laplace(
            fb.chunks["motion_main"],
            motion_shape,
            LaplaceParams(mu_m.squeeze(0), scale_m.squeeze(0)),
        ).unsqueeze(0)
    with _Timer(timings, "motion"):
        flow = codec.motion.decoder(m_hat)
    with _Timer(timings, "context"):
        ctx = codec.miner(ref_feature, flow)

    with _Timer(timings, "entropy"):
        z_hat = _decode_factorized(
            fb.chunks["contextual_hyper"], hyper_shape, codec.factorized["contextual"]
        ).unsqueeze(0)
    with _Timer(timings, "contextual"):
        hyper_feat_c = codec.contextual.hyper_decoder(z_hat, grid)
        prior = codec.conditioner.temporal_prior(ctx)
        mu_c, scale_c = codec.conditioner.laplace_params_for("contextual", hyper_feat_c, prior)
    main_shape = (codec.contextual.latent_channels, grid[0], grid[1])
    with _Timer(timings, "entropy"):
        y_hat = _decode_laplace(
            fb.chunks["contextual_main"],
            main_shape,
            LaplaceParams(mu_c.squeeze(0), scale_c.squeeze(0)),
        ).unsqueeze(0)
    with _Timer(timings, "contextual"):
        feature = codec.contextual.decoder(y_hat, *ctx)
    if aux_out is not None:
        aux_out["flow"] = flow
        aux_out["c0"] = ctx[0]
    return feature


def _frame_stats(fb: FrameBitstream, height: int, width: int) -> RDStats:
    b = {name: len(data) * 8 for name, data in fb.chunks.items()}
    return RDStats(
        bits_motion=b.get("motion_main", 0),
        bits_contextual=b.get("contextual_main", 0),
        bits_hyper=b.get("motion_hyper", 0) + b.get("contextual_hyper", 0),
        distortion=0.0,
        bpp=sum(b.values()) / (height * width),
    )


@dataclass
class EncodeResult:
    data: bytes
    stats: list[RDStats]
    reconstruct_invocations: int
    encoder_features: list[torch.Tensor] | None = None


def encode_sequence(
    frames: list[Frame], codec: VideoCodec, keep_features: bool = False
) -> EncodeResult:
    """Encode a frame list into one bitstream.

    The loop never reconstructs pixels; `reconstruct_invocations` reports the
    reconstruction network's call counter delta (always 0 here).
    """
    if not frames:
        raise InputError("no frames to encode")
    h, w = frames[0].height, frames[0].width
    for i, f in enumerate(frames):
        if (f.height, f.width) != (h, w):
            raise InputError(f"frame {i} size {(f.height, f.width)} != {(h, w)}")
    codec.eval()
    recon_calls_before = codec.recon.invocations
    plan = GopPlan(codec.config.intra_period, len(frames))
    records = []
    stats = []
    kept = [] if keep_features else None
    with torch.no_grad():
        ref_feature = None
        for frame, ftype in zip(frames, plan.frame_types):
            x = pad_tensor_to_multiple(frame.pixels.unsqueeze(0), PAD_MULTIPLE)
            if ftype == FRAME_TYPE_I:
                chunks, feature = encode_intra_frame(codec, x)
            else:
                chunks, feature = encode_inter_frame(codec, x, ref_feature)
            fb = FrameBitstream(ftype, chunks)
            records.append(fb)
            stats.append(_frame_stats(fb, h, w))
            ref_feature = feature
            if keep_features:
                kept.append(feature.squeeze(0).clone())
    header = SequenceHeader(
        intra_period=codec.config.intra_period,
        height=h,
        width=w,
        frame_count=len(frames),
        lambda_index=codec.config.lambda_index,
    )
    data = serialize_sequence(header, records)
    return EncodeResult(
        data=data,
        stats=stats,
        reconstruct_invocations=codec.recon.invocations - recon_calls_before,
        encoder_features=kept,
    )


@dataclass
class DecodeResult:
    header: SequenceHeader
    features: list[FeatureMap] | None
    frames: list[Frame] | None
    reconstruct_invocations: int
    stage_times: dict
    aux: list[dict] | None = None


def decode_sequence(
    data: bytes, mode: str, codec: VideoCodec, keep_aux: bool = False
) -> DecodeResult:
    """mode 'fea' stops at intermediate features (never reconstructs);
    mode 'pixel' adds reconstruction and crops back to the source size.

    keep_aux also returns each P frame's decoded flow and full-resolution
    context (task-head inputs that fall out of the loop for free).
    """
    if mode not in ("fea", "pixel"):
        raise InputError(f"unknown decode mode {mode!r}")
    header, records = parse_sequence(data)
    if header.lambda_index != codec.config.lambda_index:
        raise MismatchError(
            f"stream lambda index {header.lambda_index} != checkpoint {codec.config.lambda_index}"
        )
    codec.eval()
    recon_before = codec.recon.invocations
    padded_hw = (padded_size(header.height, PAD_MULTIPLE), padded_size(header.width, PAD_MULTIPLE))
    timings: dict = {}
    features: list[FeatureMap] | None = [] if mode == "fea" else None
    frames: list[Frame] | None = [] if mode == "pixel" else None
    aux_list: list[dict] | None = [] if keep_aux else None
    with torch.no_grad():
        ref_feature = None
        for fb in records:
            aux: dict = {}
            if fb.frame_type == FRAME_TYPE_I:
                with _Timer(timings, "contextual"):
                    feature = decode_intra_frame(codec, fb, padded_hw)
            else:
                if ref_feature is None:
                    raise MismatchError("P frame before any I frame")
                feature = decode_inter_frame(
                    codec, fb, ref_feature, padded_hw, timings, aux if keep_aux else None
                )
            ref_feature = feature
            if keep_aux:
                aux_list.append(aux)
            if mode == "fea":
                features.append(FeatureMap(feature.squeeze(0).clone()))
            else:
                with _Timer(timings, "reconstruct"):
                    rgb = codec.recon(feature).squeeze(0).clamp(0.0, 1.0)
                frames.append(Frame(rgb[:, : header.height, : header.width].clone()))
    return DecodeResult(
        header=header,
        features=features,
        frames=frames,
        reconstruct_invocations=codec.recon.invocations - recon_before,
        stage_times=timings,
        aux=aux_list,
    )


# --- checkpoints -----------------------------------------------------------

CHECKPOINT_FORMAT = "vnvc-checkpoint"
CHECKPOINT_VERSION = 1


def state_checksum(state_dict: dict) -> str:
    digest = hashlib.sha256()
    for key in sorted(state_dict):
        t = state_dict[key]
        digest.update(key.encode())
        digest.update(str(t.dtype).encode())
        digest.update(str(tuple(t.shape)).encode())
        digest.update(t.detach().cpu().numpy().tobytes())
    return digest.hexdigest()


def save_checkpoint(path, codec: VideoCodec, extra: dict | None = None):
    state = codec.state_dict()
    payload = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "config": codec.config.to_dict(),
        "state": state,
        "checksum": state_checksum(state),
        "extra": extra or {},
    }
    torch.save(payload, path)


def load_checkpoint(path) -> tuple[VideoCodec, dict]:
    try:
        payload = torch.load(path, map_location="cpu", weights_only=False)
    except FileNotFoundError:
        raise InputError(f"checkpoint {path} not found")
    if not isinstance(payload, dict) or payload.get("format") != CHECKPOINT_FORMAT:
        raise MismatchError(f"{path} is not a codec checkpoint")
    if payload.get("version") != CHECKPOINT_VERSION:
        raise MismatchError(f"unsupported checkpoint version {payload.get('version')}")
    if state_checksum(payload["state"]) != payload["checksum"]:
        raise MismatchError(f"{path}: checksum mismatch, checkpoint corrupted")
    config = CodecConfig.from_dict(payload["config"])
    codec = VideoCodec(config)
    codec.load_state_dict(payload["state"])
    codec.eval()
    return codec, payload.get("extra", {})


def checkpoint_config(path) -> CodecConfig:
    payload = torch.load(path, map_location="cpu", weights_only=False)
    if not isinstance(payload, dict) or payload.get("format") != CHECKPOINT_FORMAT:
        raise MismatchError(f"{path} is not a codec checkpoint")
    return CodecConfig.from_dict(payload["config"])
