"""Hourglass generator with attribute embedding and attention fusion.

The network encodes the input face, runs residual blocks at the bottleneck,
concatenates the attribute vector (replicated spatially) onto the last
bottleneck features, decodes back to full resolution, and emits two heads:
a single-channel attention mask squashed to [0, 1] and an image map squashed
to [-1, 1]. The output is the per-pixel convex combination

    output = mask * input + (1 - mask) * image_map

with the mask broadcast across channels. With ``use_attention=False`` the
mask head is absent and the image map is returned directly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
from torch import nn

from .errors import DimensionError
from .images import check_pixel_range, hwc_to_tensor, tensor_to_hwc

INIT_STD = 0.02


@dataclass(frozen=True)
class GeneratorConfig:
    image_size: int = 256
    in_channels: int = 3
    base_channels: int = 64
    n_resblocks: int = 6
    attr_dim: int = 2
    use_attention: bool = True
    profile: str = "paper-256"

    def __post_init__(self):
        if self.image_size < 16 or self.image_size % 4 != 0:
            raise ValueError(
                f"image_size must be >= 16 and divisible by 4, got {self.image_size}"
            )
        if self.n_resblocks < 1:
            raise ValueError("need at least one residual block")
        if self.attr_dim < 0:
            raise ValueError("attr_dim must be >= 0")


def desk_generator_config(image_size: int = 64, attr_dim: int = 2, **kw) -> GeneratorConfig:
    """Small non-paper profile for fast CI and laptop experiments."""
    return GeneratorConfig(
        image_size=image_size,
        base_channels=kw.pop("base_channels", 32),
        n_resblocks=kw.pop("n_resblocks", 4),
        attr_dim=attr_dim,
        profile=kw.pop("profile", "desk-64"),
        **kw,
    )


@dataclass
class GeneratorOutput:
    """Aged image plus the attention mask and raw image map that produced it."""

    output: np.ndarray | torch.Tensor
    mask: np.ndarray | torch.Tensor | None
    image_map: np.ndarray | torch.Tensor


def concat_attributes(features: torch.Tensor, alpha: torch.Tensor) -> torch.Tensor:
    """Append attribute channels, each spatially constant, to (B, C, h, w) features."""
    b, _, h, w = features.shape
    if alpha.numel() == 0:
        return features
    planes = alpha.to(features.dtype).view(b, -1, 1, 1).expand(b, alpha.shape[1], h, w)
    return torch.cat([features, planes], dim=1)


def embed_attributes(features: np.ndarray, alpha: np.ndarray, attr_dim: int | None = None) -> np.ndarray:
    """(h, w, c) features + length-N attribute vector -> (h, w, c+N).

    The first c channels are returned bit-identical; each new channel is a
    constant plane holding one attribute value.
    """
    features = np.asarray(features)
    alpha = np.asarray(alpha, dtype=features.dtype).reshape(-1)
    if attr_dim is not None and alpha.shape[0] != attr_dim:
        raise ValueError(f"attribute vector has length {alpha.shape[0]}, expected {attr_dim}")
    if alpha.shape[0] == 0:
        return features
    h, w, _ = features.shape
    planes = np.broadcast_to(alpha.reshape(1, 1, -1), (h, w, alpha.shape[0]))
    return np.concatenate([features, planes], axis=2)


def fuse(input_image: np.ndarray, mask: np.ndarray, image_map: np.ndarray) -> np.ndarray:
    """Convex per-pixel combination of the input and the synthesized map."""
    input_image = np.asarray(input_image)
    image_map = np.asarray(image_map)
    mask = np.asarray(mask)
    if input_image.shape != image_map.shape:
        raise DimensionError(
            f"input {input_image.shape} and image map {image_map.shape} differ"
        )
    if mask.ndim == 2:
        mask = mask[:, :, None]
    if mask.shape[:2] != input_image.shape[:2] or mask.shape[2] not in (1, input_image.shape[2]):
        raise DimensionError(f"mask shape {mask.shape} does not broadcast over {input_image.shape}")
    return mask * input_image + (1.0 - mask) * image_map


class ResBlock(nn.Module):
    def __init__(self, channels: int):
        super().__init__()
        self.conv1 = nn.Conv2d(channels, channels, 3, 1, 1)
        self.norm1 = nn.InstanceNorm2d(channels, affine=True)
        self.conv2 = nn.Conv2d(channels, channels, 3, 1, 1)
        self.norm2 = nn.InstanceNorm2d(channels, affine=True)
        self.act = nn.ReLU()

    def forward(self, x):
        y = self.norm1(self.conv1(x))
        y = self.norm2(self.conv2(self.act(y)))
        return x + y


class UpsampleConv(nn.Module):
    """Nearest-neighbour x2 upsampling followed by a 3x3 conv (no checkerboard)."""

    def __init__(self, in_ch: int, out_ch: int):
        super().__init__()
        self.conv = nn.Conv2d(in_ch, out_ch, 3, 1, 1)

    def forward(self, x):
        return self.conv(nn.functional.interpolate(x, scale_factor=2, mode="nearest"))


class AgingGenerator(nn.Module):
    def __init__(self, config: GeneratorConfig):
        super().__init__()
        self.config = config
        b = config.base_channels
        act = nn.ReLU()

        self.enc1 = nn.Sequential(
            nn.Conv2d(config.in_channels, b, 7, 1, 3), nn.InstanceNorm2d(b, affine=True), act
        )
        self.enc2 = nn.Sequential(
            nn.Conv2d(b, 2 * b, 4, 2, 1), nn.InstanceNorm2d(2 * b, affine=True), act
        )
        self.enc3 = nn.Sequential(
            nn.Conv2d(2 * b, 4 * b, 4, 2, 1), nn.InstanceNorm2d(4 * b, affine=True), act
        )
        self.resblocks = nn.ModuleList(ResBlock(4 * b) for _ in range(config.n_resblocks))
        self.dec1 = nn.Sequential(UpsampleConv(4 * b + config.attr_dim, 2 * b), nn.ReLU())
        self.dec2 = nn.Sequential(UpsampleConv(2 * b, b), nn.ReLU())
        if config.use_attention:
            self.mask_head = nn.Conv2d(b, 1, 7, 1, 3)
        self.image_head = nn.Conv2d(b, config.in_channels, 7, 1, 3)

    def forward(self, images: torch.Tensor, alpha: torch.Tensor) -> GeneratorOutput:
        """images: (B, C, H, W) in [-1, 1]; alpha: (B, N)."""
        cfg = self.config
        if images.shape[-2:] != (cfg.image_size, cfg.image_size) or images.shape[1] != cfg.in_channels:
            raise DimensionError(
                f"expected input of shape (B, {cfg.in_channels}, {cfg.image_size}, "
                f"{cfg.image_size}), got {tuple(images.shape)}"
            )
        if alpha.shape != (images.shape[0], cfg.attr_dim):
            raise ValueError(
                f"attribute batch of shape {tuple(alpha.shape)} does not match "
                f"(batch={images.shape[0]}, attr_dim={cfg.attr_dim})"
            )
        x = self.enc3(self.enc2(self.enc1(images)))
        for block in self.resblocks:
            x = block(x)
        x = concat_attributes(x, alpha)
        x = self.dec2(self.dec1(x))
        image_map = torch.tanh(self.image_head(x))
        if not cfg.use_attention:
            return GeneratorOutput(output=image_map, mask=None, image_map=image_map)
        mask = torch.sigmoid(self.mask_head(x))
        output = mask * images + (1.0 - mask) * image_map
        return GeneratorOutput(output=output, mask=mask, image_map=image_map)

    @torch.no_grad()
    def generate(self, image: np.ndarray, alpha: np.ndarray) -> GeneratorOutput:
        """Single (H, W, C) image in [-1, 1] -> GeneratorOutput of HWC arrays."""
        image = np.asarray(image, dtype=np.float32)
        if image.shape != (self.config.image_size, self.config.image_size, self.config.in_channels):
            raise DimensionError(
                f"expected image of shape ({self.config.image_size}, "
                f"{self.config.image_size}, {self.config.in_channels}), got {image.shape}"
            )
        check_pixel_range(image)
        dtype = next(self.parameters()).dtype
        alpha_t = torch.as_tensor(np.asarray(alpha, dtype=np.float32).reshape(1, -1), dtype=dtype)
        out = self.forward(hwc_to_tensor(image, dtype=dtype), alpha_t)
        return GeneratorOutput(
            output=tensor_to_hwc(out.output),
            mask=None if out.mask is None else tensor_to_hwc(out.mask),
            image_map=tensor_to_hwc(out.image_map),
        )


def init_parameters(module: nn.Module, seed: int) -> None:
    """Gaussian(0, 0.02) conv/linear weights, zero biases, unit norm scales."""
    g = torch.Generator().manual_seed(seed)
    for m in module.modules():
        if isinstance(m, (nn.Conv2d, nn.ConvTranspose2d, nn.Linear)):
            with torch.no_grad():
                m.weight.copy_(
                    torch.randn(m.weight.shape, generator=g, dtype=torch.float32).to(m.weight.dtype)
                    * INIT_STD
                )
                if m.bias is not None:
                    m.bias.zero_()
        elif isinstance(m, nn.InstanceNorm2d) and m.affine:
            with torch.no_grad():
                m.weight.fill_(1.0)
                m.bias.zero_()


def build_generator(config: GeneratorConfig, seed: int = 0) -> AgingGenerator:
    model = AgingGenerator(config)
    init_parameters(model, seed)
    return model
