"""Multi-pathway critic over wavelet packet levels of the input image.

Pathway k consumes the level-k packet stack (4^k * C channels at 1/2^k
resolution) and downsamples it to a 4x4 single-channel patch map through a
chain of 4x4/stride-2/pad-1 convolutions with leaky rectifier activations.
The attribute vector is replicated spatially and concatenated onto the
features mid-pathway. Patch maps from all pathways are flattened together
and a final linear layer produces one unbounded score; no normalization or
saturating output is used anywhere so the critic stays penalty-friendly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
from torch import nn

from .errors import ConfigurationError, DimensionError
from .images import batch_to_tensor, check_pixel_range
from .wpt import DEFAULT_FILTER, get_filters, packet_decompose, packet_kernel

PATCH_SIZE = 4
LEAKY_SLOPE = 0.2


def pathway_depth(image_size: int, level: int) -> int:
    """Number of stride-2 convs taking the level-k stack down to 4x4."""
    size = image_size >> level
    depth = int(np.log2(size)) - 2
    if size != (1 << (depth + 2)) or depth < 1:
        raise ConfigurationError(
            f"pathway at level {level} of a {image_size}px input cannot reach "
            f"a {PATCH_SIZE}x{PATCH_SIZE} patch map"
        )
    return depth


def max_pathways(image_size: int) -> int:
    return int(np.log2(image_size)) - 2


def pathway_channel_schedule(base: int, level: int, depth: int) -> list[int]:
    """Output channels of the depth-1 feature convs (the final conv emits 1)."""
    return [min(base << (level + i), 8 * base) for i in range(depth - 1)]


@dataclass(frozen=True)
class DiscriminatorConfig:
    image_size: int = 256
    attr_dim: int = 2
    in_channels: int = 3
    base_channels: int = 64
    n_pathways: int = 3
    filter_name: str = DEFAULT_FILTER
    profile: str = "paper-256"

    def __post_init__(self):
        if self.n_pathways < 1:
            raise ValueError("need at least one pathway")
        cap = max_pathways(self.image_size)
        if self.n_pathways > cap:
            raise ConfigurationError(
                f"{self.image_size}px input supports at most {cap} pathways"
            )

    def level_shape(self, level: int) -> tuple[int, int, int]:
        s = self.image_size >> level
        return (s, s, (4**level) * self.in_channels)


def desk_discriminator_config(image_size: int = 64, attr_dim: int = 2, **kw) -> DiscriminatorConfig:
    n_pathways = kw.pop("n_pathways", min(3, max_pathways(image_size)))
    return DiscriminatorConfig(
        image_size=image_size,
        attr_dim=attr_dim,
        base_channels=kw.pop("base_channels", 32),
        n_pathways=n_pathways,
        profile=kw.pop("profile", "desk-64"),
        **kw,
    )


class Pathway(nn.Module):
    """One conv chain from a packet stack to a 4x4x1 patch score map."""

    def __init__(self, config: DiscriminatorConfig, level: int):
        super().__init__()
        self.level = level
        in_ch = (4**level) * config.in_channels
        depth = pathway_depth(config.image_size, level)
        schedule = pathway_channel_schedule(config.base_channels, level, depth)

        # Concatenate attributes after the conv whose width hits 4*base; short
        # pathways without such a conv take them right after the first conv
        # (or on the raw coefficients when only the final conv remains).
        concat_at = len(schedule)
        for i, ch in enumerate(schedule):
            if ch == 4 * config.base_channels:
                concat_at = i + 1
                break
        else:
            if schedule:
                concat_at = 1
            else:
                concat_at = 0
        self.concat_at = concat_at

        convs = []
        prev = in_ch
        for i, ch in enumerate(schedule):
            if i == concat_at:
                prev += config.attr_dim
            convs.append(nn.Conv2d(prev, ch, 4, 2, 1))
            prev = ch
        if len(schedule) == concat_at:
            prev += config.attr_dim
        convs.append(nn.Conv2d(prev, 1, 4, 2, 1))
        self.convs = nn.ModuleList(convs)
        self.act = nn.LeakyReLU(LEAKY_SLOPE)

    def forward(self, coeffs: torch.Tensor, alpha: torch.Tensor) -> torch.Tensor:
        x = coeffs
        for i, conv in enumerate(self.convs):
            if i == self.concat_at and alpha.numel() > 0:
                b, _, h, w = x.shape
                planes = alpha.to(x.dtype).view(b, -1, 1, 1).expand(b, alpha.shape[1], h, w)
                x = torch.cat([x, planes], dim=1)
            x = conv(x)
            if i < len(self.convs) - 1:
                x = self.act(x)
        return x


class WaveletCritic(nn.Module):
    def __init__(self, config: DiscriminatorConfig):
        super().__init__()
        self.config = config
        self.pathways = nn.ModuleList(
            Pathway(config, level) for level in range(config.n_pathways)
        )
        self.fc = nn.Linear(PATCH_SIZE * PATCH_SIZE * config.n_pathways, 1)
        kernel = packet_kernel(get_filters(config.filter_name), dtype=torch.float32)
        self.register_buffer("wpt_kernel", kernel)

    def forward(self, images: torch.Tensor, alpha: torch.Tensor) -> torch.Tensor:
        """(B, C, H, W) images + (B, N) attributes -> (B,) unbounded scores."""
        cfg = self.config
        if images.shape[1:] != (cfg.in_channels, cfg.image_size, cfg.image_size):
            raise DimensionError(
                f"expected (B, {cfg.in_channels}, {cfg.image_size}, {cfg.image_size}), "
                f"got {tuple(images.shape)}"
            )
        if alpha.shape != (images.shape[0], cfg.attr_dim):
            raise ValueError(
                f"attribute batch of shape {tuple(alpha.shape)} does not match "
                f"(batch={images.shape[0]}, attr_dim={cfg.attr_dim})"
            )
        kernel = self.wpt_kernel.to(images.dtype)
        stacks = packet_decompose(images, cfg.n_pathways - 1, kernel)
        maps = [p(stacks[p.level], alpha) for p in self.pathways]
        fused = torch.cat([m.flatten(1) for m in maps], dim=1)
        return self.fc(fused).squeeze(1)

    def pathway_forward(self, level: int, coeffs: np.ndarray, alpha: np.ndarray) -> np.ndarray:
        """Level-k (h, w, 4^k*C) stack -> (4, 4, 1) patch score map."""
        expected = self.config.level_shape(level)
        coeffs = np.asarray(coeffs, dtype=np.float32)
        if coeffs.shape != expected:
            raise DimensionError(
                f"pathway {level} expects a stack of shape {expected}, got {coeffs.shape}"
            )
        t = batch_to_tensor([coeffs], dtype=next(self.parameters()).dtype)
        alpha_t = torch.as_tensor(
            np.asarray(alpha, dtype=np.float32).reshape(1, -1), dtype=t.dtype
        )
        with torch.no_grad():
            out = self.pathways[level](t, alpha_t)
        return out[0].numpy().transpose(1, 2, 0)

    def discriminate(self, image: np.ndarray, alpha: np.ndarray) -> float:
        """Single (H, W, C) image in [-1, 1] -> scalar critic score."""
        image = np.asarray(image, dtype=np.float32)
        check_pixel_range(image)
        t = batch_to_tensor([image], dtype=next(self.parameters()).dtype)
        alpha_t = torch.as_tensor(
            np.asarray(alpha, dtype=np.float32).reshape(1, -1), dtype=t.dtype
        )
        with torch.no_grad():
            return float(self.forward(t, alpha_t)[0])


def build_discriminator(config: DiscriminatorConfig, seed: int = 1) -> WaveletCritic:
    from .generator import init_parameters

    model = WaveletCritic(config)
    init_parameters(model, seed)
    return model
