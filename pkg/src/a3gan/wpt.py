"""2-D wavelet packet transform with a verification inverse.

Convention: each step cross-correlates the input with separable row/column
filters and decimates by 2, wrapping periodically at the boundary, so
subband (r, c) at output position (i, j) is

    sum_{m,n} x[(2i + m) mod H, (2j + n) mod W] * f_r[m] * f_c[n].

Subbands are ordered (LL, LH, HL, HH); the first letter is the filter
applied along the height axis, the second along the width axis, so LH
carries horizontal detail. Decomposing every subband again (the full
packet tree) multiplies the channel count by 4 per level, and children
are stored parent-major: channel p of level k expands into channels
4p..4p+3 of level k+1.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F

from .errors import ConfigurationError, DimensionError

_SQRT1_2 = 1.0 / np.sqrt(2.0)

SUBBAND_ORDER = ("LL", "LH", "HL", "HH")


@dataclass(frozen=True)
class FilterPair:
    """A low/high analysis filter pair; orthonormal for the shipped families."""

    low: tuple[float, ...]
    high: tuple[float, ...]
    name: str

    def __post_init__(self):
        low = np.asarray(self.low, dtype=np.float64)
        high = np.asarray(self.high, dtype=np.float64)
        if low.ndim != 1 or high.ndim != 1 or low.size != high.size:
            raise ConfigurationError(
                f"filter pair '{self.name}': low and high must be 1-D and equal length"
            )
        if low.size == 0 or low.size % 2 != 0:
            raise ConfigurationError(
                f"filter pair '{self.name}': length must be positive and even, got {low.size}"
            )

    @property
    def length(self) -> int:
        return len(self.low)

    def is_orthonormal(self, tol: float = 1e-12) -> bool:
        low = np.asarray(self.low)
        high = np.asarray(self.high)
        return (
            abs(np.dot(low, low) - 1.0) <= tol
            and abs(np.dot(high, high) - 1.0) <= tol
            and abs(np.dot(low, high)) <= tol
        )


_D2 = (1 + np.sqrt(3.0)) / (4 * np.sqrt(2.0)), (3 + np.sqrt(3.0)) / (4 * np.sqrt(2.0)), \
      (3 - np.sqrt(3.0)) / (4 * np.sqrt(2.0)), (1 - np.sqrt(3.0)) / (4 * np.sqrt(2.0))

FILTERS = {
    "haar": FilterPair(low=(_SQRT1_2, _SQRT1_2), high=(_SQRT1_2, -_SQRT1_2), name="haar"),
    "db2": FilterPair(
        low=_D2,
        high=(_D2[3], -_D2[2], _D2[1], -_D2[0]),
        name="db2",
    ),
}

DEFAULT_FILTER = "haar"


def get_filters(name: str) -> FilterPair:
    try:
        return FILTERS[name]
    except KeyError:
        raise ConfigurationError(
            f"unknown filter '{name}'; available: {sorted(FILTERS)}"
        ) from None


def packet_kernel(filters: FilterPair, dtype: torch.dtype = torch.float32,
                  device=None) -> torch.Tensor:
    """(4, 1, F, F) conv kernel producing (LL, LH, HL, HH) per input channel."""
    low = torch.tensor(filters.low, dtype=dtype, device=device)
    high = torch.tensor(filters.high, dtype=dtype, device=device)
    bands = [torch.outer(r, c) for r in (low, high) for c in (low, high)]
    return torch.stack(bands, dim=0).unsqueeze(1)


def _check_even(h: int, w: int) -> None:
    if h % 2 != 0:
        raise DimensionError(f"height {h} is odd; the packet step halves each axis")
    if w % 2 != 0:
        raise DimensionError(f"width {w} is odd; the packet step halves each axis")


def packet_step(x: torch.Tensor, kernel: torch.Tensor) -> torch.Tensor:
    """One analysis step: (B, C, H, W) -> (B, 4C, H/2, W/2), parent-major channels."""
    _, c, h, w = x.shape
    _check_even(h, w)
    pad = kernel.shape[-1] - 2
    if pad:
        x = F.pad(x, (0, pad, 0, pad), mode="circular")
    weight = kernel.repeat(c, 1, 1, 1)
    return F.conv2d(x, weight, stride=2, groups=c)


def packet_unstep(coeffs: torch.Tensor, kernel: torch.Tensor) -> torch.Tensor:
    """Adjoint of :func:`packet_step`; exact inverse for orthonormal filters."""
    _, c4, _, _ = coeffs.shape
    if c4 % 4 != 0:
        raise DimensionError(f"channel count {c4} is not a multiple of 4")
    c = c4 // 4
    weight = kernel.repeat(c, 1, 1, 1)
    y = F.conv_transpose2d(coeffs, weight, stride=2, groups=c)
    pad = kernel.shape[-1] - 2
    if pad:
        # Fold the periodic overhang back onto the leading rows/columns.
        h, w = y.shape[-2] - pad, y.shape[-1] - pad
        y[..., :pad, :] += y[..., h:, :]
        y = y[..., :h, :]
        y[..., :, :pad] += y[..., :, w:]
        y = y[..., :, :w]
    return y


def packet_decompose(x: torch.Tensor, levels: int, kernel: torch.Tensor) -> list[torch.Tensor]:
    """Full packet tree of a (B, C, H, W) tensor; entry k has 4^k * C channels."""
    out = [x]
    for _ in range(levels):
        out.append(packet_step(out[-1], kernel))
    return out


@dataclass
class WptPyramid:
    """Packet coefficient stacks; ``levels[k]`` has shape (H/2^k, W/2^k, 4^k*C)."""

    levels: list[np.ndarray]
    source_shape: tuple[int, int, int]
    filter_name: str

    @property
    def max_level(self) -> int:
        return len(self.levels) - 1

    def level_energy(self, k: int) -> float:
        return float(np.sum(np.asarray(self.levels[k], dtype=np.float64) ** 2))


def _as_hwc(image: np.ndarray) -> np.ndarray:
    image = np.asarray(image, dtype=np.float64)
    if image.ndim == 2:
        image = image[:, :, None]
    if image.ndim != 3:
        raise DimensionError(f"expected an (H, W, C) image, got shape {image.shape}")
    return image


def wpt_step(x: np.ndarray, filters: FilterPair) -> tuple[np.ndarray, ...]:
    """Split a 2-D array into its (LL, LH, HL, HH) half-size subbands."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise DimensionError(f"expected a 2-D array, got shape {x.shape}")
    kernel = packet_kernel(filters, dtype=torch.float64)
    t = torch.from_numpy(x).unsqueeze(0).unsqueeze(0)
    bands = packet_step(t, kernel)[0]
    return tuple(bands[i].numpy() for i in range(4))


def wpt_decompose(image: np.ndarray, levels: int, filters: FilterPair | None = None) -> WptPyramid:
    """Decompose an (H, W, C) image into a full packet pyramid of depth ``levels``."""
    if levels < 0:
        raise ValueError(f"levels must be >= 0, got {levels}")
    filters = filters or get_filters(DEFAULT_FILTER)
    image = _as_hwc(image)
    h, w, c = image.shape
    if levels > 0 and (h % (1 << levels) != 0 or w % (1 << levels) != 0):
        raise DimensionError(
            f"image of shape {h}x{w} is not divisible by 2^{levels} on both axes"
        )
    kernel = packet_kernel(filters, dtype=torch.float64)
    t = torch.from_numpy(image.transpose(2, 0, 1)).unsqueeze(0)
    stacks = packet_decompose(t, levels, kernel)
    arrays = [s[0].numpy().transpose(1, 2, 0) for s in stacks]
    return WptPyramid(levels=arrays, source_shape=(h, w, c), filter_name=filters.name)


def wpt_reconstruct(pyramid: WptPyramid, filters: FilterPair | None = None) -> np.ndarray:
    """Invert a pyramid from its deepest level only (orthonormal filters)."""
    filters = filters or get_filters(DEFAULT_FILTER)
    if filters.name != pyramid.filter_name:
        raise ConfigurationError(
            f"pyramid was built with filter '{pyramid.filter_name}', got '{filters.name}'"
        )
    kernel = packet_kernel(filters, dtype=torch.float64)
    t = torch.from_numpy(
        np.asarray(pyramid.levels[-1], dtype=np.float64).transpose(2, 0, 1)
    ).unsqueeze(0)
    for _ in range(pyramid.max_level):
        t = packet_unstep(t, kernel)
    return t[0].numpy().transpose(1, 2, 0)
