"""Rate-distortion evaluation, conditioning diagnostics, and the
feature-path vs pixel-path complexity comparison."""

import csv
import time
from dataclasses import dataclass

import torch

from .frames import Frame, pad_tensor_to_multiple
from .metrics import psnr, msssim, RateCurve
from .motion import warp_tensor
from .pipeline import VideoCodec, encode_sequence, decode_sequence, PAD_MULTIPLE
from .profiling import count_macs
from .entropy.models import quantize_eval, laplace_rate, factorized_rate, LaplaceParams


@dataclass
class SequenceEval:
    bpp: float
    psnr: float
    msssim: float


def evaluate_sequence(codec: VideoCodec, frames: list[Frame]) -> SequenceEval:
    """Actual coded bpp plus pixel-path quality against the source."""
    enc = encode_sequence(frames, codec)
    dec = decode_sequence(enc.data, "pixel", codec)
    bpp = sum(s.bpp for s in enc.stats) / len(enc.stats)
    p = sum(psnr(a, b) for a, b in zip(frames, dec.frames)) / len(frames)
    m = sum(msssim(a, b) for a, b in zip(frames, dec.frames)) / len(frames)
    return SequenceEval(bpp=bpp, psnr=p, msssim=m)


def evaluate_dataset(codec: VideoCodec, sequences: list[list[Frame]]) -> SequenceEval:
    evals = [evaluate_sequence(codec, seq) for seq in sequences]
    n = len(evals)
    return SequenceEval(
        bpp=sum(e.bpp for e in evals) / n,
        psnr=sum(e.psnr for e in evals) / n,
        msssim=sum(e.msssim for e in evals) / n,
    )


def estimated_contextual_bits(
    codec: VideoCodec, frames: list[Frame], zero_contexts: bool = False
) -> float:
    """Estimated contextual rate (main + hyper bits) over the sequence's P
    frames, with real rounding; optionally with the temporal contexts zeroed
    everywhere they condition the codec."""
    codec.eval()
    total = 0.0
    with torch.no_grad():
        ref = None
        for i, frame in enumerate(frames):
            x = pad_tensor_to_multiple(frame.pixels.unsqueeze(0), PAD_MULTIPLE)
            if i % codec.config.intra_period == 0:
                y_hat = quantize_eval(codec.intra.encoder(x))
                ref = codec.intra.decoder(y_hat)
                continue
            m_hat = quantize_eval(codec.motion.encoder(x, ref))
            flow = codec.motion.decoder(m_hat)
            ctx = codec.miner(ref, flow)
            if zero_contexts:
                ctx = tuple(torch.zeros_like(c) for c in ctx)
            y = codec.contextual.encoder(x, *ctx)
            z = codec.contextual.hyper_encoder(y)
            y_hat = quantize_eval(y)
            z_hat = quantize_eval(z)
            hyper_feat = codec.contextual.hyper_decoder(z_hat, y.shape[-2:])
            prior = codec.conditioner.temporal_prior(ctx)
            mu, scale = codec.conditioner.laplace_params_for("contextual", hyper_feat, prior)
            total += laplace_rate(y_hat, LaplaceParams(mu, scale)).sum().item()
            total += factorized_rate(z_hat, codec.factorized["contextual"]).sum().item()
            # The reference loop always advances with the mined contexts.
            ref = codec.contextual.decoder(y_hat, *codec.miner(ref, flow))
    return total


@dataclass
class PathReport:
    pipeline: str
    dec_time_excl_entropy: float
    dec_time_incl_entropy: float
    task_time: float
    dec_flops: float
    task_flops: float
    task_quality: float | None
    reconstruct_invocations: int


def compare_paths(
    frames: list[Frame],
    codec: VideoCodec,
    fea_head=None,
    img_head=None,
    clean_frames: list[Frame] | None = None,
) -> list[PathReport]:
    """Per-frame decode/task cost for the feature path vs the pixel path.

    Decode FLOPs are analytic MAC counts; times exclude entropy decoding
    (reported separately in dec_time_incl_entropy).
    """
    enc = encode_sequence(frames, codec)
    n = len(frames)
    reports = []

    loop_modules = (codec.intra, codec.motion, codec.miner, codec.contextual, codec.conditioner)
    reference = clean_frames if clean_frames is not None else frames

    # Feature path: decode stops at features; the task runs on them.
    with count_macs(*loop_modules) as loop_counter:
        fea_dec = decode_sequence(enc.data, "fea", codec, keep_aux=True)
    fea_flops = loop_counter.total
    net_time = sum(v for k, v in fea_dec.stage_times.items() if k != "entropy")
    entropy_time = fea_dec.stage_times.get("entropy", 0.0)
    task_time = 0.0
    task_flops = 0
    quality = None
    if fea_head is not None:
        scores = []
        with count_macs(fea_head) as task_counter:
            for i in range(n):
                feat = fea_dec.features[i].values.unsqueeze(0)
                c0 = fea_dec.aux[i].get("c0")
                aux = c0 if c0 is not None else torch.zeros_like(feat)
                t0 = time.perf_counter()
                with torch.no_grad():
                    out = fea_head(feat, aux).squeeze(0).clamp(0.0, 1.0)
                task_time += time.perf_counter() - t0
                h, w = reference[i].height, reference[i].width
                scores.append(psnr(reference[i], Frame(out[:, :h, :w])))
        task_flops = task_counter.total
        quality = sum(scores) / n
    reports.append(
        PathReport(
            pipeline="fea",
            dec_time_excl_entropy=net_time / n,
            dec_time_incl_entropy=(net_time + entropy_time) / n,
            task_time=task_time / n,
            dec_flops=fea_flops / n,
            task_flops=task_flops / n,
            task_quality=quality,
            reconstruct_invocations=fea_dec.reconstruct_invocations,
        )
    )

    # Pixel path: decode includes reconstruction; the task runs on frames.
    with count_macs(*loop_modules) as loop_counter, count_macs(codec.recon) as recon_counter:
        img_dec = decode_sequence(enc.data, "pixel", codec, keep_aux=True)
    img_flops = loop_counter.total + recon_counter.total
    net_time = sum(v for k, v in img_dec.stage_times.items() if k != "entropy")
    entropy_time = img_dec.stage_times.get("entropy", 0.0)
    task_time = 0.0
    task_flops = 0
    quality = None
    if img_head is not None:
        scores = []
        with count_macs(img_head) as task_counter:
            for i in range(n):
                decoded = img_dec.frames[i]
                flow = img_dec.aux[i].get("flow")
                if flow is not None and i > 0:
                    prev = pad_tensor_to_multiple(
                        img_dec.frames[i - 1].pixels.unsqueeze(0), PAD_MULTIPLE
                    )
                    predicted = warp_tensor(prev, flow)[
                        ..., : decoded.height, : decoded.width
                    ].clamp(0.0, 1.0)
                else:
                    predicted = decoded.pixels.unsqueeze(0)
                t0 = time.perf_counter()
                with torch.no_grad():
                    out = img_head(decoded.pixels.unsqueeze(0), predicted).squeeze(0).clamp(0.0, 1.0)
                task_time += time.perf_counter() - t0
                scores.append(psnr(reference[i], Frame(out)))
        task_flops = task_counter.total
        quality = sum(scores) / n
    reports.append(
        PathReport(
            pipeline="img",
            dec_time_excl_entropy=net_time / n,
            dec_time_incl_entropy=(net_time + entropy_time) / n,
            task_time=task_time / n,
            dec_flops=img_flops / n,
            task_flops=task_flops / n,
            task_quality=quality,
            reconstruct_invocations=img_dec.reconstruct_invocations,
        )
    )
    return reports


def write_path_report(path, reports: list[PathReport]):
    """CSV rows: pipeline,component,flops,seconds."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["pipeline", "component", "flops", "seconds"])
        for r in reports:
            writer.writerow([r.pipeline, "decode", f"{r.dec_flops:.0f}", f"{r.dec_time_excl_entropy:.6f}"])
            writer.writerow([r.pipeline, "decode_incl_entropy", f"{r.dec_flops:.0f}", f"{r.dec_time_incl_entropy:.6f}"])
            writer.writerow([r.pipeline, "task", f"{r.task_flops:.0f}", f"{r.task_time:.6f}"])


def write_rate_curve(path, curve: RateCurve, quality_name: str = "psnr"):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["bpp", quality_name])
        for bpp, q in curve.points:
            writer.writerow([f"{bpp:.6f}", f"{q:.6f}"])
