"""Conversions between HWC arrays in [-1, 1], torch tensors, and PNG files."""

from __future__ import annotations

import numpy as np
import torch
from PIL import Image

from .errors import ValidationError

PIXEL_RANGE_TOL = 1e-3


def check_pixel_range(image: np.ndarray, tol: float = PIXEL_RANGE_TOL) -> None:
    lo, hi = float(image.min()), float(image.max())
    if lo < -1.0 - tol or hi > 1.0 + tol:
        raise ValidationError(
            f"pixel values outside [-1, 1]: observed range [{lo:.4f}, {hi:.4f}]"
        )


def hwc_to_tensor(image: np.ndarray, dtype: torch.dtype = torch.float32) -> torch.Tensor:
    """(H, W, C) array -> (1, C, H, W) tensor."""
    if image.ndim != 3:
        raise ValidationError(f"expected an (H, W, C) array, got shape {image.shape}")
    return torch.from_numpy(np.ascontiguousarray(image.transpose(2, 0, 1))).to(dtype).unsqueeze(0)


def batch_to_tensor(images: list[np.ndarray] | np.ndarray, dtype: torch.dtype = torch.float32) -> torch.Tensor:
    """Stack (H, W, C) arrays into a (B, C, H, W) tensor."""
    arr = np.stack([np.asarray(im) for im in images], axis=0)
    return torch.from_numpy(np.ascontiguousarray(arr.transpose(0, 3, 1, 2))).to(dtype)


def tensor_to_hwc(t: torch.Tensor) -> np.ndarray:
    """(C, H, W) or (1, C, H, W) tensor -> (H, W, C) float array."""
    if t.dim() == 4:
        if t.shape[0] != 1:
            raise ValidationError(f"expected a single image, got batch of {t.shape[0]}")
        t = t[0]
    return t.detach().cpu().numpy().transpose(1, 2, 0)


def to_uint8(image: np.ndarray) -> np.ndarray:
    """[-1, 1] image -> uint8 [0, 255], clipping out-of-range values."""
    scaled = (np.clip(image, -1.0, 1.0) + 1.0) * 127.5
    return np.round(scaled).astype(np.uint8)


def from_uint8(pixels: np.ndarray) -> np.ndarray:
    return pixels.astype(np.float32) / 127.5 - 1.0


def save_png(path, image: np.ndarray) -> None:
    arr = to_uint8(image)
    if arr.ndim == 3 and arr.shape[2] == 1:
        arr = arr[:, :, 0]
    Image.fromarray(arr).save(path, format="PNG")


def load_png(path, size: int | None = None) -> np.ndarray:
    """Load an image file as (H, W, 3) float32 in [-1, 1], optionally resized."""
    with Image.open(path) as img:
        img = img.convert("RGB")
        if size is not None and img.size != (size, size):
            img = img.resize((size, size), Image.BILINEAR)
        return from_uint8(np.asarray(img))
