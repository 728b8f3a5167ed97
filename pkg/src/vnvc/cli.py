"""Command-line interface.

Exit codes: 0 success, 2 bad input, 3 checkpoint/stream mismatch.
"""

import argparse
import csv
import sys
from pathlib import Path

import numpy as np
import torch

from .config import CodecConfig, TrainConfig, ConfigError, LAMBDA_VALUES, load_config_file
from .errors import InputError, MismatchError
from .frames import Frame
from . import frameio
from .metrics import psnr, msssim
from .pipeline import load_checkpoint, encode_sequence, decode_sequence
from .entropy.bitstream import BitstreamError

EXIT_OK = 0
EXIT_BAD_INPUT = 2
EXIT_MISMATCH = 3


def _load_checkpoint_arg(checkpoint: str, lambda_index: int | None):
    path = Path(checkpoint)
    if path.is_dir():
        if lambda_index is None:
            raise InputError("--lambda is required when --checkpoint is a directory")
        matches = sorted(path.glob(f"checkpoint_lambda{LAMBDA_VALUES[lambda_index]}*.pt"))
        if not matches:
            raise InputError(f"no checkpoint for lambda index {lambda_index} in {path}")
        path = matches[0]
    codec, extra = load_checkpoint(path)
    if lambda_index is not None and codec.config.lambda_index != lambda_index:
        raise MismatchError(
            f"checkpoint is lambda index {codec.config.lambda_index}, requested {lambda_index}"
        )
    return codec, extra


def cmd_train(args) -> int:
    from .training import train_progressive

    codec_cfg, train_cfg = load_config_file(args.config)
    out = Path(args.out)
    paths = train_progressive(codec_cfg, train_cfg, out)
    for lam, path in paths.items():
        print(f"lambda {lam}: {path}")
    return EXIT_OK


def cmd_encode(args) -> int:
    frames = frameio.load_frames(args.input)
    codec, _ = _load_checkpoint_arg(args.checkpoint, args.lambda_index)
    overrides = {}
    if args.intra_period is not None:
        overrides["intra_period"] = args.intra_period
    if args.frames is not None:
        overrides["num_frames_to_code"] = args.frames
    if overrides:
        cfg = codec.config.to_dict()
        cfg.update(overrides)
        codec.config = CodecConfig(**cfg)
    frames = frames[: codec.config.num_frames_to_code]
    result = encode_sequence(frames, codec)
    Path(args.out).write_bytes(result.data)
    total_bpp = sum(s.bpp for s in result.stats) / len(result.stats)
    print(f"encoded {len(frames)} frames -> {len(result.data)} bytes, {total_bpp:.4f} bpp")
    return EXIT_OK


def cmd_decode(args) -> int:
    data = Path(args.input).read_bytes()
    codec, _ = _load_checkpoint_arg(args.checkpoint, None)
    result = decode_sequence(data, args.mode, codec)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    if args.mode == "pixel":
        for i, frame in enumerate(result.frames):
            frameio.save_png(frame, out_dir / f"frame_{i:04d}.png")
        print(f"decoded {len(result.frames)} frames -> {out_dir}")
    else:
        for i, feat in enumerate(result.features):
            np.save(out_dir / f"feature_{i:04d}.npy", feat.values.numpy())
        print(f"decoded {len(result.features)} features -> {out_dir}")
        print(f"reconstruct invocations: {result.reconstruct_invocations}")
    return EXIT_OK


def cmd_eval(args) -> int:
    rows = []
    with open(args.pairs, newline="") as fh:
        reader = csv.reader(fh)
        for row in reader:
            if not row or row[0].startswith("#") or row[0] == "reference":
                continue
            if len(row) < 2:
                raise InputError(f"pairs file row needs 2 paths, got {row}")
            rows.append((row[0], row[1]))
    if not rows:
        raise InputError("no pairs to evaluate")
    with open(args.out, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["reference", "test", "psnr", "msssim"])
        for ref_path, test_path in rows:
            ref = frameio.load_frames(ref_path)
            test = frameio.load_frames(test_path)
            if len(ref) != len(test):
                raise InputError(f"{ref_path} and {test_path} differ in frame count")
            p = sum(psnr(a, b) for a, b in zip(ref, test)) / len(ref)
            m = sum(msssim(a, b) for a, b in zip(ref, test)) / len(ref)
            writer.writerow([ref_path, test_path, f"{p:.4f}", f"{m:.6f}"])
    print(f"wrote {args.out}")
    return EXIT_OK


def cmd_task(args) -> int:
    from .tasks import TaskHeadConfig, DenoiseHead, ClassifyHead
    from .synthetic import DIRECTION_CLASSES

    data = Path(args.input).read_bytes()
    codec, _ = _load_checkpoint_arg(args.checkpoint, None)
    head_state = torch.load(args.head_checkpoint, map_location="cpu", weights_only=False)
    if head_state.get("kind") != args.head or head_state.get("input_mode") != args.mode:
        raise MismatchError(
            f"head checkpoint is {head_state.get('kind')}/{head_state.get('input_mode')}, "
            f"requested {args.head}/{args.mode}"
        )
    cfg = TaskHeadConfig(**head_state["config"])
    head = DenoiseHead(cfg) if args.head == "denoise" else ClassifyHead(cfg)
    head.load_state_dict(head_state["state"])
    head.eval()

    decode_mode = "fea" if args.mode == "fea" else "pixel"
    result = decode_sequence(data, decode_mode, codec, keep_aux=True)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    n = result.header.frame_count
    if args.head == "denoise":
        for i in range(n):
            if args.mode == "fea":
                feat = result.features[i].values.unsqueeze(0)
                c0 = result.aux[i].get("c0")
                aux = c0 if c0 is not None else torch.zeros_like(feat)
                with torch.no_grad():
                    out = head(feat, aux).squeeze(0).clamp(0.0, 1.0)
                out = out[:, : result.header.height, : result.header.width]
            else:
                decoded = result.frames[i].pixels.unsqueeze(0)
                with torch.no_grad():
                    out = head(decoded, decoded).squeeze(0).clamp(0.0, 1.0)
            frameio.save_png(Frame(out.contiguous()), out_dir / f"denoised_{i:04d}.png")
        print(f"wrote {n} denoised frames -> {out_dir}")
    else:
        with open(out_dir / "classes.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["frame", "class", *DIRECTION_CLASSES])
            for i in range(1, n):
                if args.mode == "fea":
                    cur = result.features[i].values
                    prev = result.features[i - 1].values
                else:
                    cur = result.frames[i].pixels
                    prev = result.frames[i - 1].pixels
                with torch.no_grad():
                    scores = torch.softmax(head((cur - prev).unsqueeze(0)).squeeze(0), dim=-1)
                writer.writerow(
                    [i, DIRECTION_CLASSES[int(scores.argmax())]]
                    + [f"{s:.4f}" for s in scores.tolist()]
                )
        print(f"wrote {out_dir / 'classes.csv'}")
    if args.mode == "fea":
        print(f"reconstruct invocations: {result.reconstruct_invocations}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vnvc", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="progressive training, one checkpoint per lambda")
    p.add_argument("--config", required=True, help="key = value config file")
    p.add_argument("--out", default="checkpoints", help="output directory")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("encode", help="encode frames to a bitstream")
    p.add_argument("--input", required=True, help="frame directory or .raw/.png file")
    p.add_argument("--checkpoint", required=True, help="checkpoint file or directory")
    p.add_argument("--lambda", dest="lambda_index", type=int, choices=range(4), help="lambda index 0..3")
    p.add_argument("--intra-period", type=int)
    p.add_argument("--frames", type=int, help="encode at most this many frames")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("decode", help="decode a bitstream to features or frames")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--mode", choices=("fea", "pixel"), required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("eval", help="PSNR/MS-SSIM over reference,test pairs")
    p.add_argument("--pairs", required=True, help="CSV of reference,test frame paths")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("task", help="run a task head on a bitstream")
    p.add_argument("--head", choices=("denoise", "classify"), required=True)
    p.add_argument("--mode", choices=("fea", "img"), required=True)
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--head-checkpoint", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_task)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (MismatchError, BitstreamError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MISMATCH
    except (InputError, ConfigError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BAD_INPUT


if __name__ == "__main__":
    sys.exit(main())
