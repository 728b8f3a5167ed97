"""Losses and the progressive training procedure.

Stages run in order: the intra codec is pretrained first (it stands in for
the external intra codec the loop references), then motion alone, then the
contextual path with motion frozen, then everything jointly.  All stages
share initialization and data order across rate points so the four-lambda
sweep differs only in the loss weighting.
"""

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F

from .config import CodecConfig, TrainConfig, LAMBDA_VALUES, MSSSIM_LAMBDA_DIVISOR
from .frames import Frame
from .layers import conv
from .metrics import msssim_tensor
from .motion import MotionEncoder, warp_tensor
from .pipeline import VideoCodec, save_checkpoint, state_checksum
from .entropy.models import laplace_rate, factorized_rate, quantize_eval, LaplaceParams
from .synthetic import generate_synthetic_sequence, generate_labeled_clip, add_gaussian_noise
from .tasks import TaskHeadConfig, DenoiseHead, ClassifyHead

STAGES = ("intra", "motion", "contextual", "joint")


def distortion(a: torch.Tensor, b: torch.Tensor, metric: str = "mse") -> torch.Tensor:
    if metric == "mse":
        return torch.mean((a - b) ** 2)
    if metric == "ms-ssim":
        return 1.0 - msssim_tensor(a, b)
    raise ValueError(f"unknown distortion metric {metric!r}")


def loss_motion(x, x_pred, bits_m, rd_lambda, metric: str = "mse") -> torch.Tensor:
    """lambda * d(x, predicted) + motion rate (bits per pixel, hyper included)."""
    return rd_lambda * distortion(x, x_pred, metric) + bits_m


def loss_contextual(x, x_hat, bits_y, rd_lambda, metric: str = "mse") -> torch.Tensor:
    """lambda * d(x, reconstructed) + contextual rate."""
    return rd_lambda * distortion(x, x_hat, metric) + bits_y


def loss_joint(x, x_hat, bits_m, bits_y, rd_lambda, metric: str = "mse") -> torch.Tensor:
    """lambda * d(x, reconstructed) + both rates."""
    return rd_lambda * distortion(x, x_hat, metric) + bits_m + bits_y


@dataclass
class TrainStageSpec:
    stage: str
    trainable: set
    frozen: set
    steps: int
    learning_rate: float

    def __post_init__(self):
        if self.stage not in STAGES:
            raise ValueError(f"unknown stage {self.stage!r}")
        if self.stage == "motion" and self.trainable - {"motion"}:
            raise ValueError("the motion stage trains the motion codec only")
        if self.stage == "contextual" and "motion" in self.trainable:
            raise ValueError("the contextual stage must keep the motion codec frozen")


@dataclass
class ClipDataset:
    """Pregenerated two-frame clips; deterministic given the seed."""

    clips: torch.Tensor  # (num_clips, 2, 3, H, W)

    @classmethod
    def generate(cls, num_clips: int, size: int, seed: int) -> "ClipDataset":
        styles = ("translate", "mixed", "rotate")
        clips = []
        for i in range(num_clips):
            frames = generate_synthetic_sequence(
                seed + i, 2, size, size, styles[i % len(styles)]
            )
            clips.append(torch.stack([f.pixels for f in frames]))
        return cls(torch.stack(clips))

    def batch(self, rng: np.random.Generator, batch_size: int):
        idx = rng.integers(0, self.clips.shape[0], batch_size)
        picked = self.clips[torch.from_numpy(idx)]
        return picked[:, 0], picked[:, 1]


class TrainingDiverged(RuntimeError):
    pass


@dataclass
class LossRecord:
    step: int
    stage: str
    loss: float
    distortion: float
    bpp_m: float
    bpp_y: float


def write_loss_curves(path, records: list[LossRecord]):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "stage", "loss", "distortion", "bpp_m", "bpp_y"])
        for r in records:
            writer.writerow([r.step, r.stage, f"{r.loss:.6f}", f"{r.distortion:.8f}", f"{r.bpp_m:.6f}", f"{r.bpp_y:.6f}"])


class ProgressiveTrainer:
    """Runs the staged schedule for one rate point."""

    def __init__(self, config: CodecConfig, train: TrainConfig, device: str = "cpu"):
        self.config = config
        self.train_cfg = train
        self.device = torch.device(device)
        self.codec = VideoCodec.seeded(config).to(self.device)
        self.dataset = ClipDataset.generate(train.num_clips, train.crop_size, train.data_seed)
        self.completed: list[str] = []
        self.records: list[LossRecord] = []
        self.global_step = 0
        self._variant_modules = self._build_variant_modules()

    # -- variant wiring (ablation harness) --------------------------------

    def _build_variant_modules(self):
        mods = torch.nn.ModuleDict()
        torch.manual_seed(self.config.seed + 101)
        n = self.config.feature_channels
        k = self.config.motion_latent_channels
        if self.train_cfg.motion_source == "pixel":
            mods["motion_encoder_pixel"] = MotionEncoder(6, k)
        elif self.train_cfg.motion_source == "feature":
            mods["to_feature"] = conv(3, n)
            mods["motion_encoder_feature"] = MotionEncoder(2 * n, k)
        if self.train_cfg.context_source == "recon_frame":
            mods["frame_to_reference"] = conv(3, n)
        return mods.to(self.device)

    def _motion_latents(self, x1, ref_feature, prev_recon):
        src = self.train_cfg.motion_source
        if src == "cross":
            return self.codec.motion.encoder(x1, ref_feature)
        if src == "pixel":
            return self._variant_modules["motion_encoder_pixel"](x1, prev_recon)
        feats = self._variant_modules["to_feature"]
        return self._variant_modules["motion_encoder_feature"](feats(x1), feats(prev_recon))

    def _mining_reference(self, ref_feature, prev_recon):
        src = self.train_cfg.context_source
        if src == "intermediate":
            return ref_feature
        if src == "recon_frame":
            return self._variant_modules["frame_to_reference"](prev_recon)
        # last_feature: the feature entering the reconstruction head's final conv
        _, tap = self.codec.recon.forward_with_tap(ref_feature)
        return tap

    # -- reference branch ---------------------------------------------------

    def _reference(self, x0):
        """Decoded reference feature and reconstruction for frame 0 (no grad,
        eval-style rounding, matching what the real loop will see)."""
        with torch.no_grad():
            y0 = self.codec.intra.encoder(x0)
            y0_hat = quantize_eval(y0)
            f0 = self.codec.intra.decoder(y0_hat)
            x0_hat = self.codec.recon(f0).clamp(0.0, 1.0)
        return f0, x0_hat

    def _intra_rd(self, x0, noise_gen):
        """Trainable intra branch with noise quantization."""
        px = x0.shape[0] * x0.shape[-2] * x0.shape[-1]
        y = self.codec.intra.encoder(x0)
        z = self.codec.intra.hyper_encoder(y)
        y_noisy = y + torch.empty_like(y).uniform_(-0.5, 0.5, generator=noise_gen)
        z_noisy = z + torch.empty_like(z).uniform_(-0.5, 0.5, generator=noise_gen)
        grid = y.shape[-2:]
        hyper_feat = self.codec.intra.hyper_decoder(z_noisy, grid)
        mu, scale = self.codec.conditioner.laplace_params_for("intra", hyper_feat)
        bits = laplace_rate(y_noisy, LaplaceParams(mu, scale)).sum()
        bits = bits + factorized_rate(z_noisy, self.codec.factorized["intra"]).sum()
        f0 = self.codec.intra.decoder(y_noisy)
        x0_hat = self.codec.recon(f0)
        lam = self.config.rd_lambda
        metric = self.config.distortion_metric
        d = distortion(x0, x0_hat.clamp(0.0, 1.0) if metric == "ms-ssim" else x0_hat, metric)
        return lam * d + bits / px, d, bits / px

    # -- stage forwards ------------------------------------------------------

    def _motion_branch(self, x1, ref_feature, prev_recon, noise_gen):
        px = x1.shape[0] * x1.shape[-2] * x1.shape[-1]
        m = self._motion_latents(x1, ref_feature, prev_recon)
        mz = self.codec.motion.hyper_encoder(m)
        m_noisy = m + torch.empty_like(m).uniform_(-0.5, 0.5, generator=noise_gen)
        mz_noisy = mz + torch.empty_like(mz).uniform_(-0.5, 0.5, generator=noise_gen)
        hyper_feat = self.codec.motion.hyper_decoder(mz_noisy, m.shape[-2:])
        mu, scale = self.codec.conditioner.laplace_params_for("motion", hyper_feat)
        bits = laplace_rate(m_noisy, LaplaceParams(mu, scale)).sum()
        bits = bits + factorized_rate(mz_noisy, self.codec.factorized["motion"]).sum()
        flow = self.codec.motion.decoder(m_noisy)
        return flow, bits / px

    def _contextual_branch(self, x1, mining_ref, flow, noise_gen):
        px = x1.shape[0] * x1.shape[-2] * x1.shape[-1]
        ctx = self.codec.miner(mining_ref, flow)
        y = self.codec.contextual.encoder(x1, *ctx)
        z = self.codec.contextual.hyper_encoder(y)
        y_noisy = y + torch.empty_like(y).uniform_(-0.5, 0.5, generator=noise_gen)
        z_noisy = z + torch.empty_like(z).uniform_(-0.5, 0.5, generator=noise_gen)
        hyper_feat = self.codec.contextual.hyper_decoder(z_noisy, y.shape[-2:])
        prior = self.codec.conditioner.temporal_prior(ctx)
        mu, scale = self.codec.conditioner.laplace_params_for("contextual", hyper_feat, prior)
        bits = laplace_rate(y_noisy, LaplaceParams(mu, scale)).sum()
        bits = bits + factorized_rate(z_noisy, self.codec.factorized["contextual"]).sum()
        f1 = self.codec.contextual.decoder(y_noisy, *ctx)
        x1_hat = self.codec.recon(f1)
        return x1_hat, bits / px

    # -- stage plumbing -------------------------------------------------------

    def _stage_modules(self, stage: str) -> dict:
        c = self.codec
        mods = {
            "intra": c.intra,
            "motion": c.motion,
            "miner": c.miner,
            "contextual": c.contextual,
            "recon": c.recon,
            "fact_intra": c.factorized["intra"],
            "fact_motion": c.factorized["motion"],
            "fact_contextual": c.factorized["contextual"],
            "head_intra": c.conditioner.intra_head,
            "head_motion": c.conditioner.motion_head,
            "head_contextual": c.conditioner.contextual_head,
            "prior_net": c.conditioner.prior_net,
            "variants": self._variant_modules,
        }
        sets = {
            "intra": {"intra", "recon", "fact_intra", "head_intra"},
            "motion": {"motion", "fact_motion", "head_motion", "variants"},
            "contextual": {
                "contextual", "miner", "prior_net", "head_contextual", "fact_contextual",
                "recon", "intra", "fact_intra", "head_intra", "variants",
            },
            "joint": set(mods.keys()),
        }
        trainable = sets[stage]
        return {name: (mod, name in trainable) for name, mod in mods.items()}

    def stage_spec(self, stage: str) -> TrainStageSpec:
        steps = {
            "intra": self.train_cfg.steps_intra,
            "motion": self.train_cfg.steps_motion,
            "contextual": self.train_cfg.steps_contextual,
            "joint": self.train_cfg.steps_joint,
        }[stage]
        mods = self._stage_modules(stage)
        trainable = {n for n, (_, t) in mods.items() if t}
        if stage == "motion":
            # Entropy parts of the motion codec ride along; the invariant is
            # about the codec modules proper.
            spec_trainable = {"motion"}
        elif stage == "contextual":
            spec_trainable = trainable - {"motion"}
        else:
            spec_trainable = trainable
        return TrainStageSpec(
            stage=stage,
            trainable=spec_trainable,
            frozen=set(mods.keys()) - trainable,
            steps=steps,
            learning_rate=self.train_cfg.learning_rate,
        )

    def _check_order(self, stage: str):
        need = {"intra": [], "motion": ["intra"], "contextual": ["intra", "motion"], "joint": ["intra", "motion", "contextual"]}
        missing = [s for s in need[stage] if s not in self.completed]
        if missing:
            raise RuntimeError(
                f"stage {stage!r} requires completed stage(s) {missing}; ran {self.completed}"
            )

    def run_stage(self, stage: str) -> list[LossRecord]:
        if stage not in STAGES:
            raise ValueError(f"unknown stage {stage!r}")
        self._check_order(stage)
        cfg = self.train_cfg
        mods = self._stage_modules(stage)
        params = []
        for _, (mod, trainable) in mods.items():
            for p in mod.parameters():
                p.requires_grad_(trainable)
            if trainable:
                params.extend(mod.parameters())
        # Dedup (factorized/head modules are children of codec too).
        params = list({id(p): p for p in params}.values())
        optimizer = torch.optim.AdamW(params, lr=cfg.learning_rate)
        noise_gen = torch.Generator(device="cpu").manual_seed(self.config.seed * 7919 + STAGES.index(stage))
        batch_rng = np.random.default_rng(cfg.data_seed * 31 + STAGES.index(stage))
        self.codec.train()
        self._variant_modules.train()
        lam = self.config.rd_lambda
        metric = self.config.distortion_metric
        stage_records = []
        for step in range(self.stage_spec(stage).steps):
            x0, x1 = self.dataset.batch(batch_rng, cfg.batch_size)
            x0 = x0.to(self.device)
            x1 = x1.to(self.device)
            optimizer.zero_grad(set_to_none=True)
            bpp_m = torch.zeros((), device=self.device)
            bpp_y = torch.zeros((), device=self.device)
            if stage == "intra":
                loss, dist, bpp_y = self._intra_rd(x0, noise_gen)
            else:
                ref_feature, prev_recon = self._reference(x0)
                if stage == "motion":
                    flow, bpp_m = self._motion_branch(x1, ref_feature, prev_recon, noise_gen)
                    x1_pred = warp_tensor(prev_recon, flow)
                    dist = distortion(x1, x1_pred, metric)
                    loss = loss_motion(x1, x1_pred, bpp_m, lam, metric)
                elif stage == "contextual":
                    with torch.no_grad():
                        m_hat = quantize_eval(self._motion_latents(x1, ref_feature, prev_recon))
                        flow = self.codec.motion.decoder(m_hat)
                    mining_ref = self._mining_reference(ref_feature, prev_recon)
                    x1_hat, bpp_y = self._contextual_branch(x1, mining_ref, flow, noise_gen)
                    dist = distortion(x1, x1_hat, metric)
                    loss = loss_contextual(x1, x1_hat, bpp_y, lam, metric)
                    intra_loss, _, _ = self._intra_rd(x0, noise_gen)
                    loss = loss + intra_loss
                else:  # joint
                    flow, bpp_m = self._motion_branch(x1, ref_feature, prev_recon, noise_gen)
                    mining_ref = self._mining_reference(ref_feature, prev_recon)
                    x1_hat, bpp_y = self._contextual_branch(x1, mining_ref, flow, noise_gen)
                    dist = distortion(x1, x1_hat, metric)
                    loss = loss_joint(x1, x1_hat, bpp_m, bpp_y, lam, metric)
                    intra_loss, _, _ = self._intra_rd(x0, noise_gen)
                    loss = loss + intra_loss
            if not torch.isfinite(loss):
                raise TrainingDiverged(
                    f"non-finite loss at stage {stage} step {step}: "
                    f"distortion={float(dist):.6g} bpp_m={float(bpp_m):.6g} bpp_y={float(bpp_y):.6g}"
                )
            loss.backward()
            optimizer.step()
            rec = LossRecord(
                step=self.global_step,
                stage=stage,
                loss=float(loss.detach()),
                distortion=float(dist.detach()),
                bpp_m=float(bpp_m.detach() if torch.is_tensor(bpp_m) else bpp_m),
                bpp_y=float(bpp_y.detach() if torch.is_tensor(bpp_y) else bpp_y),
            )
            self.global_step += 1
            if step % cfg.log_every == 0 or step == self.stage_spec(stage).steps - 1:
                stage_records.append(rec)
        for p in self.codec.parameters():
            p.requires_grad_(True)
        self.codec.eval()
        self.completed.append(stage)
        self.records.extend(stage_records)
        return stage_records

    def run_all(self) -> list[LossRecord]:
        for stage in STAGES:
            self.run_stage(stage)
        return self.records


def train_progressive(
    base_config: CodecConfig,
    train_config: TrainConfig,
    out_dir,
    lambdas=None,
    stages=STAGES,
    init_state: dict | None = None,
    completed: tuple = (),
) -> dict:
    """Train one checkpoint per rate point; returns {lambda: checkpoint path}.

    With init_state/completed the schedule can resume from earlier stages
    (used to retrain only the contextual/joint stages for ablations).
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if lambdas is None:
        lambdas = LAMBDA_VALUES
    paths = {}
    for lam in lambdas:
        lam_value = float(lam)
        if base_config.distortion_metric == "ms-ssim":
            lam_value /= MSSSIM_LAMBDA_DIVISOR
        cfg_kwargs = base_config.to_dict()
        cfg_kwargs["rd_lambda"] = lam_value
        config = CodecConfig(**cfg_kwargs)
        trainer = ProgressiveTrainer(config, train_config)
        if init_state is not None:
            trainer.codec.load_state_dict(init_state[lam] if isinstance(init_state, dict) and lam in init_state else init_state)
            trainer.completed = list(completed)
        for stage in stages:
            trainer.run_stage(stage)
        tag = f"lambda{int(lam)}" if float(lam).is_integer() else f"lambda{lam}"
        path = out_dir / f"checkpoint_{tag}_{config.distortion_metric}.pt"
        save_checkpoint(
            path,
            trainer.codec,
            extra={"train": train_config.to_dict(), "stages": trainer.completed},
        )
        write_loss_curves(out_dir / f"loss_{tag}_{config.distortion_metric}.csv", trainer.records)
        paths[lam] = path
    return paths


# --- task heads --------------------------------------------------------------


def transparent_decode(codec: VideoCodec, frames: list[Frame]):
    """Run the loop with real rounding but without range coding; returns the
    per-frame tensors task heads consume (features, contexts, flows, recon)."""
    from .frames import pad_tensor_to_multiple

    codec.eval()
    out = []
    with torch.no_grad():
        ref = None
        for i, frame in enumerate(frames):
            x = pad_tensor_to_multiple(frame.pixels.unsqueeze(0), 16)
            if i % codec.config.intra_period == 0:
                y_hat = quantize_eval(codec.intra.encoder(x))
                feature = codec.intra.decoder(y_hat)
                entry = {"feature": feature, "c0": torch.zeros_like(feature), "flow": None}
            else:
                m_hat = quantize_eval(codec.motion.encoder(x, ref))
                flow = codec.motion.decoder(m_hat)
                ctx = codec.miner(ref, flow)
                y_hat = quantize_eval(codec.contextual.encoder(x, *ctx))
                feature = codec.contextual.decoder(y_hat, *ctx)
                entry = {"feature": feature, "c0": ctx[0], "flow": flow}
            ref = feature
            out.append(entry)
    return out


@dataclass
class TaskTrainResult:
    head: torch.nn.Module
    checksum_before: str
    checksum_after: str
    records: list


def train_task_head(
    head_cfg: TaskHeadConfig,
    codec: VideoCodec,
    steps: int = 400,
    learning_rate: float = 1e-3,
    batch_clips: int = 2,
    num_clips: int = 48,
    clip_size: int = 64,
    noise_sigma: float = 20.0,
    seed: int = 99,
) -> TaskTrainResult:
    """Train a head against the frozen codec; the codec must not change."""
    checksum_before = state_checksum(codec.state_dict())
    for p in codec.parameters():
        p.requires_grad_(False)
    torch.manual_seed(seed)
    if head_cfg.kind == "denoise":
        head = DenoiseHead(head_cfg)
    else:
        head = ClassifyHead(head_cfg)

    # Precompute decoded inputs once; heads train on cached tensors.
    samples = []
    for i in range(num_clips):
        if head_cfg.kind == "denoise":
            clean = generate_synthetic_sequence(seed * 1000 + i, 2, clip_size, clip_size, "mixed")
            noisy = add_gaussian_noise(clean, noise_sigma, seed * 2000 + i)
            decoded = transparent_decode(codec, noisy)
            entry = decoded[1]
            target = clean[1].pixels.unsqueeze(0)
        else:
            frames, label = generate_labeled_clip(seed * 1000 + i, 2, clip_size, clip_size)
            decoded = transparent_decode(codec, frames)
            entry = decoded[1]
            target = torch.tensor([label])
        if head_cfg.input_mode == "fea":
            primary = entry["feature"]
            # Denoising uses the aligned context; classification compares raw
            # consecutive features (alignment would cancel the motion cue).
            aux = entry["c0"] if head_cfg.kind == "denoise" else decoded[0]["feature"]
        else:
            recon1 = codec.recon(entry["feature"]).clamp(0.0, 1.0)
            recon0 = codec.recon(decoded[0]["feature"]).clamp(0.0, 1.0)
            primary = recon1
            if head_cfg.kind == "denoise":
                aux = warp_tensor(recon0, entry["flow"]) if entry["flow"] is not None else recon0
            else:
                aux = recon0
        samples.append((primary.detach(), aux.detach(), target))

    optimizer = torch.optim.AdamW(head.parameters(), lr=learning_rate)
    rng = np.random.default_rng(seed)
    records = []
    head.train()
    for step in range(steps):
        idx = rng.integers(0, len(samples), batch_clips)
        primary = torch.cat([samples[j][0] for j in idx])
        aux = torch.cat([samples[j][1] for j in idx])
        optimizer.zero_grad(set_to_none=True)
        if head_cfg.kind == "denoise":
            target = torch.cat([samples[j][2] for j in idx])
            out = head(primary, aux)
            loss = F.mse_loss(out, target)
        else:
            target = torch.cat([samples[j][2] for j in idx])
            logits = head(primary - aux)
            loss = F.cross_entropy(logits, target)
        if not torch.isfinite(loss):
            raise TrainingDiverged(f"task head loss diverged at step {step}")
        loss.backward()
        optimizer.step()
        if step % 50 == 0 or step == steps - 1:
            records.append((step, float(loss)))
    head.eval()
    checksum_after = state_checksum(codec.state_dict())
    if checksum_after != checksum_before:
        raise RuntimeError("codec parameters changed during task-head training")
    return TaskTrainResult(head, checksum_before, checksum_after, records)
