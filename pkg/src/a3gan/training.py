"""Alternating critic/generator optimization with the published schedules:
Adam(1e-4, betas 0.5/0.999), batch 16, attribute-term weight ramped linearly
from 0 to its maximum over the run, pixel loss every 5th generator iteration,
identity loss every iteration against frozen embedder features.

All randomness (batch order, mismatched attributes, interpolation draws) comes
from per-step seeded streams, so runs are reproducible from (config, dataset,
seed) and a resumed run replays the exact step sequence.
"""

from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .checkpoint import (
    load_checkpoint,
    load_model_arrays,
    load_optimizer_arrays,
    model_arrays,
    optimizer_arrays,
    save_checkpoint,
)
from .data import (
    GROUP_LABELS,
    AgeGroup,
    FaceDataset,
    epoch_batches,
    group_from_label,
    sample_batch,
    sample_mismatched,
)
from .discriminator import DiscriminatorConfig, WaveletCritic, build_discriminator
from .embedder import FeatureEmbedder, make_fixed_embedder
from .errors import TrainingDiverged
from .generator import AgingGenerator, GeneratorConfig, build_generator
from .images import batch_to_tensor
from .losses import (
    LossWeights,
    attribute_consistency_loss,
    authenticity_loss,
    generator_adversarial_loss,
    gradient_penalty,
    identity_loss,
    lambda_att_schedule,
    pixel_loss,
)

LOG_COLUMNS = (
    "step",
    "loss_adv_att",
    "loss_adv_auth",
    "gradient_penalty",
    "loss_adv_g",
    "loss_id",
    "loss_pix",
    "lambda_att",
)

# spawn_key stream tags for per-purpose RNGs
_STREAM_EPOCH = 1
_STREAM_STEP = 2
_STREAM_INIT_G = 3
_STREAM_INIT_D = 4
_STREAM_EMBED = 5


def derived_rng(seed: int, stream: int, index: int = 0) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(stream, index)))


def derived_int(seed: int, stream: int, index: int = 0) -> int:
    return int(derived_rng(seed, stream, index).integers(0, 2**31 - 1))


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-4
    batch_size: int = 16
    epochs: int = 30
    pixel_loss_period: int = 5
    identity_loss_period: int = 1
    weights: LossWeights = field(default_factory=LossWeights)
    d_steps_per_g: int = 1
    betas: tuple[float, float] = (0.5, 0.999)
    seed: int = 0
    target_group: AgeGroup = AgeGroup.G51_PLUS
    g_iterations: int | None = None
    checkpoint_interval: int = 500
    deterministic: bool = False
    match_attributes: bool = True

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be >= 0")
        if self.batch_size < 1 or self.pixel_loss_period < 1 or self.identity_loss_period < 1:
            raise ValueError("batch_size and loss periods must be >= 1")
        if self.d_steps_per_g < 1:
            raise ValueError("d_steps_per_g must be >= 1")


@dataclass
class TrainState:
    generator: AgingGenerator
    critic: WaveletCritic
    embedder: FeatureEmbedder
    opt_g: torch.optim.Adam
    opt_d: torch.optim.Adam
    g_step: int = 0


@dataclass
class TrainResult:
    state: TrainState
    checkpoint_path: Path | None
    metrics_path: Path | None
    rows: list[dict]


def _batch_tensors(samples, attr_dim: int):
    # channels_last keeps the CPU conv kernels on their fast path
    images = batch_to_tensor([s.image for s in samples]).contiguous(
        memory_format=torch.channels_last
    )
    if attr_dim:
        alpha = torch.tensor(
            np.stack([s.attributes[:attr_dim] for s in samples]), dtype=torch.float32
        )
    else:
        alpha = torch.zeros(len(samples), 0)
    return images, alpha


def _mismatched_alpha(samples, attr_dim: int, rng) -> torch.Tensor:
    if not attr_dim:
        return torch.zeros(len(samples), 0)
    rows = [sample_mismatched(s.attributes[:attr_dim], rng) for s in samples]
    return torch.tensor(np.stack(rows), dtype=torch.float32)


def _check_finite(step: int, components: dict) -> None:
    if not all(math.isfinite(v) for v in components.values()):
        raise TrainingDiverged(step, components)


def train_step_d(state: TrainState, young, old, weights: LossWeights, lam_att: float,
                 rng: np.random.Generator, fakes: torch.Tensor | None = None) -> dict:
    """One critic update; generator outputs enter detached from its graph."""
    attr_dim = state.critic.config.attr_dim
    young_images, alpha = _batch_tensors(young, attr_dim)
    old_images, old_alpha = _batch_tensors(old, attr_dim)
    if fakes is None:
        with torch.no_grad():
            fakes = state.generator(young_images, alpha).output.detach()

    if attr_dim:
        alpha_bar = _mismatched_alpha(old, attr_dim, rng)
        att = attribute_consistency_loss(state.critic, old_images, old_alpha, alpha_bar)
    else:
        att = torch.zeros(())
    auth = authenticity_loss(state.critic, old_images, alpha, fakes)
    gp = gradient_penalty(state.critic, old_images, fakes, alpha, weights.lambda_gp, rng=rng)
    total = lam_att * att + auth + gp

    components = {
        "loss_adv_att": float(att.detach()),
        "loss_adv_auth": float(auth.detach()),
        "gradient_penalty": float(gp.detach()),
        "loss_d_total": float(total.detach()),
    }
    _check_finite(state.g_step, components)

    state.opt_d.zero_grad(set_to_none=True)
    total.backward()
    state.opt_d.step()
    return components


def train_step_g(state: TrainState, young, weights: LossWeights, g_iter: int,
                 pixel_period: int, identity_period: int, prebuilt=None) -> dict:
    """One generator update; the pixel term joins only every `pixel_period` iters.

    ``prebuilt`` may carry (images, alpha, forward output) from the same
    iteration's D step so the generator forward is not repeated.
    """
    attr_dim = state.generator.config.attr_dim
    if prebuilt is None:
        young_images, alpha = _batch_tensors(young, attr_dim)
        out = state.generator(young_images, alpha)
    else:
        young_images, alpha, out = prebuilt

    adv = generator_adversarial_loss(state.critic, out.output, alpha)
    use_id = g_iter % identity_period == 0
    use_pix = g_iter % pixel_period == 0
    id_term = identity_loss(state.embedder, young_images, out.output) if use_id else torch.zeros(())
    pix_term = pixel_loss(young_images, out.output) if use_pix else torch.zeros(())
    total = adv + weights.lambda_id * id_term + weights.lambda_pix * pix_term

    components = {
        "loss_adv_g": float(adv.detach()),
        "loss_id": float(id_term.detach()),
        "loss_pix": float(pix_term.detach()),
        "loss_g_total": float(total.detach()),
    }
    _check_finite(state.g_step, components)

    state.opt_g.zero_grad(set_to_none=True)
    total.backward()
    state.opt_g.step()
    return components


def build_state(gen_config: GeneratorConfig, disc_config: DiscriminatorConfig,
                config: TrainConfig, embedder: FeatureEmbedder | None = None) -> TrainState:
    generator = build_generator(gen_config, seed=derived_int(config.seed, _STREAM_INIT_G))
    critic = build_discriminator(disc_config, seed=derived_int(config.seed, _STREAM_INIT_D))
    if embedder is None:
        embedder = make_fixed_embedder(derived_int(config.seed, _STREAM_EMBED))
    for model in (generator, critic, embedder):
        model.to(memory_format=torch.channels_last)
    opt_g = torch.optim.Adam(generator.parameters(), lr=config.learning_rate, betas=config.betas)
    opt_d = torch.optim.Adam(critic.parameters(), lr=config.learning_rate, betas=config.betas)
    return TrainState(generator, critic, embedder, opt_g, opt_d)


def state_arrays(state: TrainState) -> dict:
    return {
        **model_arrays(state.generator, "generator"),
        **model_arrays(state.critic, "discriminator"),
        **model_arrays(state.embedder, "embedder"),
        **optimizer_arrays(state.opt_g, "optim/g"),
        **optimizer_arrays(state.opt_d, "optim/d"),
    }


def load_state_arrays(state: TrainState, arrays: dict) -> None:
    load_model_arrays(state.generator, "generator", arrays)
    load_model_arrays(state.critic, "discriminator", arrays)
    load_model_arrays(state.embedder, "embedder", arrays)
    load_optimizer_arrays(state.opt_g, "optim/g", arrays)
    load_optimizer_arrays(state.opt_d, "optim/d", arrays)


def _checkpoint_manifest(state: TrainState, config: TrainConfig, total_g: int,
                         extra: dict | None = None) -> dict:
    gen_cfg = state.generator.config
    disc_cfg = state.critic.config
    manifest = {
        "step": state.g_step,
        "total_g_steps": total_g,
        "seed": config.seed,
        "profile": gen_cfg.profile,
        "filter": disc_cfg.filter_name,
        "target_group": GROUP_LABELS[config.target_group],
        "generator_config": {**gen_cfg.__dict__},
        "discriminator_config": {**disc_cfg.__dict__},
        "train_config": {
            **config.__dict__,
            "weights": config.weights.__dict__,
            "target_group": GROUP_LABELS[config.target_group],
            "betas": list(config.betas),
        },
    }
    if extra:
        manifest.update(extra)
    return manifest


def save_train_checkpoint(path, state: TrainState, config: TrainConfig, total_g: int,
                          extra: dict | None = None) -> Path:
    return save_checkpoint(path, state_arrays(state), _checkpoint_manifest(state, config, total_g, extra))


def restore_train_state(path, embedder: FeatureEmbedder | None = None):
    """Rebuild (state, train_config, total_g) from a checkpoint file."""
    arrays, manifest = load_checkpoint(path)
    gen_config = GeneratorConfig(**manifest["generator_config"])
    disc_config = DiscriminatorConfig(**manifest["discriminator_config"])
    tc = dict(manifest["train_config"])
    tc["weights"] = LossWeights(**tc["weights"])
    tc["target_group"] = group_from_label(tc["target_group"])
    tc["betas"] = tuple(tc["betas"])
    config = TrainConfig(**tc)
    state = build_state(gen_config, disc_config, config, embedder=embedder)
    load_state_arrays(state, arrays)
    state.g_step = int(manifest["step"])
    return state, config, int(manifest["total_g_steps"])


def _format_row(row: dict) -> list[str]:
    return [
        str(row["step"]) if col == "step" else f"{row[col]:.10g}" for col in LOG_COLUMNS
    ]


def train(config: TrainConfig, dataset: FaceDataset, gen_config: GeneratorConfig,
          disc_config: DiscriminatorConfig, out_dir, embedder: FeatureEmbedder | None = None,
          resume_from=None, max_steps: int | None = None) -> TrainResult:
    """Run the full alternating loop, logging one CSV row per generator step.

    ``max_steps`` stops early (for determinism/resume harnesses) without
    changing the schedule horizon.
    """
    out_dir = Path(out_dir)
    (out_dir / "ckpt").mkdir(parents=True, exist_ok=True)
    (out_dir / "logs").mkdir(parents=True, exist_ok=True)

    if resume_from is not None:
        # The checkpoint owns the run definition; the passed config is ignored.
        state, config, total_g = restore_train_state(resume_from, embedder=embedder)
    else:
        state = build_state(gen_config, disc_config, config, embedder=embedder)
        total_g = None

    if config.deterministic:
        torch.set_num_threads(1)

    young_count = len(dataset.group(AgeGroup.UNDER31))
    steps_per_epoch = max(1, math.ceil(young_count / config.batch_size))
    if total_g is None:
        if config.g_iterations is not None:
            total_g = config.g_iterations
        else:
            total_g = config.epochs * steps_per_epoch

    ramp_horizon = max(1, total_g - 1)
    metrics_path = out_dir / "logs" / "metrics.csv"
    mode = "a" if resume_from is not None and metrics_path.exists() else "w"
    rows: list[dict] = []
    stop_at = total_g if max_steps is None else min(total_g, state.g_step + max_steps)

    with open(metrics_path, mode, newline="") as fh:
        writer = csv.writer(fh)
        if mode == "w":
            writer.writerow(LOG_COLUMNS)
            fh.flush()

        epoch_iter = itertools.count() if config.g_iterations is not None else range(config.epochs)
        done = state.g_step >= stop_at
        for epoch in epoch_iter:
            if done:
                break
            # Skip whole epochs that precede a resumed step.
            if state.g_step >= (epoch + 1) * steps_per_epoch:
                continue
            epoch_rng = derived_rng(config.seed, _STREAM_EPOCH, epoch)
            for batch_idx, (young, old) in enumerate(
                epoch_batches(dataset, config.target_group, config.batch_size, epoch_rng,
                              config.match_attributes)
            ):
                t = epoch * steps_per_epoch + batch_idx
                if t < state.g_step:
                    continue
                if t >= stop_at:
                    done = True
                    break
                step_rng = derived_rng(config.seed, _STREAM_STEP, t)
                lam_att = lambda_att_schedule(
                    min(t, ramp_horizon), ramp_horizon, config.weights.lambda_att_max
                )

                # One generator forward serves both phases: its detached output
                # feeds the critic update, its graph the generator update.
                attr_dim = state.generator.config.attr_dim
                young_images, alpha = _batch_tensors(young, attr_dim)
                g_out = state.generator(young_images, alpha)

                d_components = train_step_d(
                    state, young, old, config.weights, lam_att, step_rng,
                    fakes=g_out.output.detach(),
                )
                for _ in range(config.d_steps_per_g - 1):
                    extra_young, extra_old = sample_batch(
                        dataset, config.target_group, config.batch_size, step_rng,
                        config.match_attributes,
                    )
                    d_components = train_step_d(
                        state, extra_young, extra_old, config.weights, lam_att, step_rng
                    )

                g_components = train_step_g(
                    state, young, config.weights, t + 1,
                    config.pixel_loss_period, config.identity_loss_period,
                    prebuilt=(young_images, alpha, g_out),
                )

                state.g_step = t + 1
                row = {
                    "step": t,
                    "loss_adv_att": d_components["loss_adv_att"],
                    "loss_adv_auth": d_components["loss_adv_auth"],
                    "gradient_penalty": d_components["gradient_penalty"],
                    "loss_adv_g": g_components["loss_adv_g"],
                    "loss_id": g_components["loss_id"],
                    "loss_pix": g_components["loss_pix"],
                    "lambda_att": lam_att,
                }
                rows.append(row)
                writer.writerow(_format_row(row))
                fh.flush()

                if config.checkpoint_interval and state.g_step % config.checkpoint_interval == 0 \
                        and state.g_step < stop_at:
                    save_train_checkpoint(
                        out_dir / "ckpt" / f"step_{state.g_step:06d}.ckpt",
                        state, config, total_g,
                    )

    final_path = save_train_checkpoint(out_dir / "ckpt" / "final.ckpt", state, config, total_g)
    return TrainResult(state=state, checkpoint_path=final_path, metrics_path=metrics_path, rows=rows)
