"""Frozen feature extractor backing the identity-preservation loss.

The default is a deterministic stand-in: a small seeded conv net exposing the
two feature views the loss needs, a spatial map from the last pooling stage
and a flat vector from the head. It carries no identity-discrimination
guarantee; real pretrained weights can be loaded from a checkpoint container
(keys under ``embedder/``) through the same interface.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
from torch import nn

POOL_CHANNELS = 64
FC_DIM = 128


@dataclass(frozen=True)
class EmbedderConfig:
    in_channels: int = 3
    channels: tuple[int, int, int] = (16, 32, POOL_CHANNELS)
    fc_dim: int = FC_DIM


class FeatureEmbedder(nn.Module):
    """Three stride-2 conv blocks plus a global head; parameters are frozen."""

    def __init__(self, config: EmbedderConfig = EmbedderConfig()):
        super().__init__()
        self.config = config
        c1, c2, c3 = config.channels
        self.blocks = nn.Sequential(
            nn.Conv2d(config.in_channels, c1, 4, 2, 1),
            nn.LeakyReLU(0.2),
            nn.Conv2d(c1, c2, 4, 2, 1),
            nn.LeakyReLU(0.2),
            nn.Conv2d(c2, c3, 4, 2, 1),
            nn.LeakyReLU(0.2),
        )
        self.head = nn.Linear(c3, config.fc_dim)
        self.freeze()

    def freeze(self) -> None:
        for p in self.parameters():
            p.requires_grad_(False)

    @property
    def frozen(self) -> bool:
        return not any(p.requires_grad for p in self.parameters())

    def embed_pool(self, images: torch.Tensor) -> torch.Tensor:
        """(B, C, H, W) -> (B, 64, H/8, W/8) feature map."""
        return self.blocks(images)

    def embed_fc(self, images: torch.Tensor) -> torch.Tensor:
        """(B, C, H, W) -> (B, 128) feature vector."""
        pooled = self.embed_pool(images).mean(dim=(2, 3))
        return self.head(pooled)


def make_fixed_embedder(seed: int, config: EmbedderConfig = EmbedderConfig()) -> FeatureEmbedder:
    """Deterministic embedder: every parameter is a pure function of the seed."""
    model = FeatureEmbedder(config)
    g = torch.Generator().manual_seed(seed)
    for m in model.modules():
        if isinstance(m, (nn.Conv2d, nn.Linear)):
            fan_in = m.weight.shape[1] * (m.weight.shape[2] * m.weight.shape[3] if m.weight.dim() == 4 else 1)
            std = (2.0 / fan_in) ** 0.5
            with torch.no_grad():
                m.weight.copy_(torch.randn(m.weight.shape, generator=g) * std)
                m.bias.zero_()
    model.freeze()
    return model


def embedder_arrays(model: FeatureEmbedder) -> dict:
    """Named parameter arrays under the ``embedder/`` checkpoint prefix."""
    import numpy as np

    return {
        f"embedder/{name.rsplit('.', 1)[0]}/{name.rsplit('.', 1)[1]}": p.detach().numpy().copy()
        for name, p in model.named_parameters()
    }


def load_embedder_arrays(model: FeatureEmbedder, arrays: dict) -> FeatureEmbedder:
    for name, p in model.named_parameters():
        stem, role = name.rsplit(".", 1)
        key = f"embedder/{stem}/{role}"
        if key not in arrays:
            raise KeyError(f"checkpoint is missing embedder array '{key}'")
        with torch.no_grad():
            p.copy_(torch.from_numpy(arrays[key]))
    model.freeze()
    return model
