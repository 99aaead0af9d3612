"""Training objectives: conditional Wasserstein terms, gradient penalty,
identity-feature and pixel losses, and the attribute-term ramp.

Critics are plain callables ``critic(images, alpha) -> (B,) scores`` so the
stubs used in tests and the real network are interchangeable. All functions
return 0-d tensors when handed tensors, keeping them usable inside training
graphs, and plain floats fall out via ``float(...)`` at the call site.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch

from .errors import CapabilityError, ConfigurationError, DimensionError


@dataclass(frozen=True)
class LossWeights:
    lambda_att_max: float = 0.75
    lambda_pix: float = 8.0
    lambda_id: float = 0.02
    lambda_gp: float = 10.0

    def __post_init__(self):
        for name in ("lambda_att_max", "lambda_pix", "lambda_id", "lambda_gp"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")


def lambda_att_schedule(step: int, total_steps: int, lambda_att_max: float = 0.75) -> float:
    """Linear ramp from 0 at step 0 to the maximum at the final step."""
    if total_steps < 1:
        raise ValueError(f"total_steps must be >= 1, got {total_steps}")
    if step < 0:
        raise ValueError(f"step must be >= 0, got {step}")
    return min(lambda_att_max, lambda_att_max * step / total_steps)


def _require_batch(batch: torch.Tensor, name: str) -> None:
    if batch.shape[0] == 0:
        raise ValueError(f"{name} batch is empty")


def attribute_consistency_loss(critic, real_old: torch.Tensor, alpha: torch.Tensor,
                               alpha_bar: torch.Tensor) -> torch.Tensor:
    """Mismatched attributes should score below matched ones on real aged faces."""
    _require_batch(real_old, "real")
    return critic(real_old, alpha_bar).mean() - critic(real_old, alpha).mean()


def authenticity_loss(critic, real_old: torch.Tensor, alpha: torch.Tensor,
                      fake: torch.Tensor) -> torch.Tensor:
    """Generated aged faces should score below real ones under matched attributes."""
    _require_batch(real_old, "real")
    _require_batch(fake, "fake")
    return critic(fake, alpha).mean() - critic(real_old, alpha).mean()


def generator_adversarial_loss(critic, fake: torch.Tensor, alpha: torch.Tensor) -> torch.Tensor:
    """Negated mean critic score of generated faces."""
    _require_batch(fake, "fake")
    return -critic(fake, alpha).mean()


def gradient_penalty(critic, real: torch.Tensor, fake: torch.Tensor, alpha: torch.Tensor,
                     lambda_gp: float = 10.0, eps: torch.Tensor | None = None,
                     rng=None) -> torch.Tensor:
    """Penalize critic input-gradient norms away from 1 on real/fake interpolates.

    One interpolation coefficient per sample: x_hat = eps*real + (1-eps)*fake.
    Gradients are taken over the image input only; attributes stay fixed.
    """
    _require_batch(real, "real")
    if real.shape != fake.shape:
        raise DimensionError(f"real {tuple(real.shape)} and fake {tuple(fake.shape)} differ")
    b = real.shape[0]
    if eps is None:
        if rng is not None:
            eps = torch.as_tensor(rng.uniform(size=b), dtype=real.dtype)
        else:
            eps = torch.rand(b, dtype=real.dtype)
    eps = eps.to(real.dtype).view(b, *([1] * (real.dim() - 1)))
    x_hat = (eps * real + (1.0 - eps) * fake).detach().requires_grad_(True)
    scores = critic(x_hat, alpha)
    if not scores.requires_grad:
        raise CapabilityError("critic does not expose gradients w.r.t. its image input")
    (grads,) = torch.autograd.grad(
        scores.sum(), x_hat, create_graph=torch.is_grad_enabled()
    )
    norms = grads.flatten(1).norm(2, dim=1)
    return lambda_gp * ((norms - 1.0) ** 2).mean()


def discriminator_total_loss(att_term, auth_term, gp_term, lambda_att: float):
    if lambda_att < 0:
        raise ValueError("lambda_att must be >= 0")
    return lambda_att * att_term + auth_term + gp_term


def identity_loss(embedder, young: torch.Tensor, fake: torch.Tensor) -> torch.Tensor:
    """Squared pooling-feature plus squared head-feature distance, batch mean."""
    _require_batch(young, "young")
    try:
        pool_y, pool_f = embedder.embed_pool(young), embedder.embed_pool(fake)
        fc_y, fc_f = embedder.embed_fc(young), embedder.embed_fc(fake)
    except RuntimeError as exc:
        raise ConfigurationError(f"identity embedder rejected the batch: {exc}") from exc
    pool_term = (pool_f - pool_y).flatten(1).pow(2).sum(dim=1)
    fc_term = (fc_f - fc_y).pow(2).sum(dim=1)
    return (pool_term + fc_term).mean()


def pixel_loss(young: torch.Tensor, fake: torch.Tensor) -> torch.Tensor:
    """Mean squared pixel difference (mean per pixel, then per batch)."""
    if young.shape != fake.shape:
        raise DimensionError(f"young {tuple(young.shape)} and fake {tuple(fake.shape)} differ")
    return (fake - young).pow(2).flatten(1).mean(dim=1).mean()


def generator_total_loss(adv_term, id_term, pix_term, weights: LossWeights):
    return adv_term + weights.lambda_id * id_term + weights.lambda_pix * pix_term
