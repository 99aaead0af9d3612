"""Datasets: a procedural synthetic aging corpus with decodable ground truth,
a CSV-manifest loader for real image folders, and the batch samplers.

Synthetic image construction (all in [-1, 1], fully seeded):

* identity signature: a smooth zero-mean sum of low-frequency cosines per
  channel, fixed per identity, max-abs 0.4;
* attribute bit 0: a hue bias over the central aging band, +0.1 on channel 0
  and -0.1 on channel 2 when the bit is set, mirrored otherwise — placed
  inside the band so age translation has to re-synthesize it, the way real
  attribute features (facial hair, skin tone) overlap age-modified regions;
* attribute bit 1: the top-left (size/8)^2 corner block overwritten with
  +0.3 (set) or -0.3 (clear) on every channel;
* aging texture: rows inside the central band [size/4, 3*size/4) receive a
  column-alternating +/-0.25 line; the fraction of band rows textured grows
  strictly with the age group.

The markers are chosen so closed-form oracles (hue-mean sign, corner-mean
sign, detail energy, low-frequency correlation) recover the labels exactly
on clean images; the aging band is the only region where aging texture may
legitimately appear, which the ablation leakage metric relies on.

Within the aged groups the per-sample line count is additionally tilted by
attribute bit 0 (`attribute_age_correlation`), reproducing the demographic
entanglement of real unpaired aging sets: an unconditional critic then
rewards outputs whose attribute markers drift toward the texture-heavy
majority, which is exactly the failure mode attribute conditioning exists
to prevent. Group mean densities stay strictly increasing.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from enum import IntEnum
from pathlib import Path

import numpy as np

from .errors import DataError, ValidationError
from .images import load_png, save_png

logger = logging.getLogger(__name__)

BASE_AMPLITUDE = 0.4
HUE_AMPLITUDE = 0.1
CORNER_AMPLITUDE = 0.3
CORNER_FRACTION = 8
LINE_AMPLITUDE = 0.25
DEFAULT_DENSITIES = (0.06, 0.18, 0.34, 0.50)


class AgeGroup(IntEnum):
    UNDER31 = 0
    G31_40 = 1
    G41_50 = 2
    G51_PLUS = 3


GROUP_LABELS = {
    AgeGroup.UNDER31: "under31",
    AgeGroup.G31_40: "31-40",
    AgeGroup.G41_50: "41-50",
    AgeGroup.G51_PLUS: "51plus",
}
TARGET_GROUPS = (AgeGroup.G31_40, AgeGroup.G41_50, AgeGroup.G51_PLUS)
GROUP_EXPORT_AGES = {
    AgeGroup.UNDER31: 25,
    AgeGroup.G31_40: 35,
    AgeGroup.G41_50: 45,
    AgeGroup.G51_PLUS: 55,
}


def group_from_label(label: str) -> AgeGroup:
    for group, name in GROUP_LABELS.items():
        if name == label:
            return group
    raise ValidationError(f"unknown age group '{label}'; expected one of {list(GROUP_LABELS.values())}")


def bin_age(age: int) -> AgeGroup:
    if age < 0:
        raise ValidationError(f"age must be >= 0, got {age}")
    if age <= 30:
        return AgeGroup.UNDER31
    if age <= 40:
        return AgeGroup.G31_40
    if age <= 50:
        return AgeGroup.G41_50
    return AgeGroup.G51_PLUS


@dataclass(frozen=True)
class FaceSample:
    image: np.ndarray
    age_group: AgeGroup
    attributes: np.ndarray
    identity: int


class FaceDataset:
    """Immutable sample collection indexed by age group."""

    def __init__(self, samples: list[FaceSample], image_size: int, attr_dim: int):
        self.samples = tuple(samples)
        self.image_size = image_size
        self.attr_dim = attr_dim
        by_group: dict[AgeGroup, list[FaceSample]] = {g: [] for g in AgeGroup}
        for s in samples:
            by_group[s.age_group].append(s)
        self._by_group = {g: tuple(v) for g, v in by_group.items()}

    def __len__(self) -> int:
        return len(self.samples)

    def __iter__(self):
        return iter(self.samples)

    def group(self, g: AgeGroup) -> tuple[FaceSample, ...]:
        return self._by_group[g]


@dataclass(frozen=True)
class SynthSpec:
    seed: int = 0
    n_identities: int = 10
    samples_per_identity_per_group: int = 2
    image_size: int = 32
    attr_dim: int = 2
    texture_density_per_group: tuple[float, float, float, float] = DEFAULT_DENSITIES
    attribute_age_correlation: float = 0.25

    def __post_init__(self):
        d = self.texture_density_per_group
        if len(d) != 4 or any(b <= a for a, b in zip(d, d[1:])):
            raise ValidationError(
                f"texture densities must be 4 strictly increasing values, got {d}"
            )
        if not all(0.0 <= x <= 1.0 for x in d):
            raise ValidationError(f"texture densities must lie in [0, 1], got {d}")
        if self.attr_dim not in (1, 2):
            raise ValidationError(
                "the synthetic markers encode 1 or 2 attribute bits; "
                f"attr_dim={self.attr_dim} is not supported"
            )
        if self.image_size < 16 or self.image_size % 8 != 0:
            raise ValidationError(
                f"image_size must be >= 16 and divisible by 8, got {self.image_size}"
            )
        counts = [self.line_count(g) for g in AgeGroup]
        if any(b <= a for a, b in zip(counts, counts[1:])):
            raise ValidationError(
                f"texture densities {d} do not yield strictly increasing line "
                f"counts {counts} at image size {self.image_size}"
            )
        if not 0.0 <= self.attribute_age_correlation < 1.0:
            raise ValidationError(
                f"attribute_age_correlation must be in [0, 1), got "
                f"{self.attribute_age_correlation}"
            )

    @property
    def band(self) -> tuple[int, int]:
        return (self.image_size // 4, 3 * self.image_size // 4)

    def line_count(self, group: AgeGroup) -> int:
        lo, hi = self.band
        return round(self.texture_density_per_group[int(group)] * (hi - lo))

    def sample_line_count(self, group: AgeGroup, bits: np.ndarray) -> int:
        """Per-sample count: aged groups tilt with attribute bit 0."""
        base = self.line_count(group)
        if group == AgeGroup.UNDER31 or self.attribute_age_correlation == 0.0:
            return base
        shift = round(self.attribute_age_correlation * base)
        signed = base + (shift if int(round(bits[0])) else -shift)
        lo, hi = self.band
        return int(np.clip(signed, 0, hi - lo))


@dataclass(frozen=True)
class SynthOracle:
    """Ground-truth geometry of a generated dataset, for closed-form scoring."""

    spec: SynthSpec

    def texture_region_mask(self) -> np.ndarray:
        """(H, W) boolean mask, True where aging texture may appear."""
        size = self.spec.image_size
        mask = np.zeros((size, size), dtype=bool)
        lo, hi = self.spec.band
        mask[lo:hi, :] = True
        return mask


def _identity_signature(rng: np.random.Generator, size: int) -> np.ndarray:
    yy, xx = np.meshgrid(np.arange(size), np.arange(size), indexing="ij")
    base = np.zeros((size, size, 3))
    for c in range(3):
        for _ in range(3):
            fy, fx = rng.integers(1, 3, size=2)
            py, px = rng.uniform(0, 2 * np.pi, size=2)
            amp = rng.uniform(0.4, 1.0)
            base[:, :, c] += amp * np.cos(2 * np.pi * fy * yy / size + py) * np.cos(
                2 * np.pi * fx * xx / size + px
            )
    return base / np.max(np.abs(base)) * BASE_AMPLITUDE


def hue_band(size: int) -> tuple[int, int]:
    """Rows carrying the hue marker (the aging band)."""
    return (size // 4, 3 * size // 4)


def apply_hue_marker(image: np.ndarray, bit: int, amplitude: float = HUE_AMPLITUDE) -> np.ndarray:
    sign = 1.0 if bit else -1.0
    lo, hi = hue_band(image.shape[0])
    out = image.copy()
    out[lo:hi, :, 0] += sign * amplitude
    out[lo:hi, :, 2] -= sign * amplitude
    return out


def apply_corner_marker(image: np.ndarray, bit: int, amplitude: float = CORNER_AMPLITUDE) -> np.ndarray:
    block = image.shape[0] // CORNER_FRACTION
    sign = 1.0 if bit else -1.0
    out = image.copy()
    out[:block, :block, :] = sign * amplitude
    return out


def _apply_aging_lines(image: np.ndarray, spec: SynthSpec, group: AgeGroup,
                       bits: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    lo, hi = spec.band
    count = spec.sample_line_count(group, bits)
    out = image.copy()
    if count == 0:
        return out
    rows = rng.choice(np.arange(lo, hi), size=count, replace=False)
    colsign = np.where(np.arange(spec.image_size) % 2 == 0, 1.0, -1.0)
    out[rows, :, :] += LINE_AMPLITUDE * colsign[None, :, None]
    return out


def synth_generate(spec: SynthSpec) -> tuple[FaceDataset, SynthOracle]:
    """Deterministically expand a SynthSpec into samples plus its oracle handle."""
    samples = []
    for ident in range(spec.n_identities):
        id_seq, line_seq = np.random.SeedSequence(spec.seed, spawn_key=(ident,)).spawn(2)
        id_rng = np.random.default_rng(id_seq)
        base = _identity_signature(id_rng, spec.image_size)
        bits = id_rng.integers(0, 2, size=spec.attr_dim)
        marked = apply_hue_marker(base, int(bits[0]))
        line_rng = np.random.default_rng(line_seq)
        for group in AgeGroup:
            for _ in range(spec.samples_per_identity_per_group):
                img = _apply_aging_lines(marked, spec, group, bits, line_rng)
                if spec.attr_dim > 1:
                    img = apply_corner_marker(img, int(bits[1]))
                samples.append(
                    FaceSample(
                        image=img.astype(np.float32),
                        age_group=group,
                        attributes=bits.astype(np.float64),
                        identity=ident,
                    )
                )
    return FaceDataset(samples, spec.image_size, spec.attr_dim), SynthOracle(spec)


def load_manifest(directory, manifest: str | Path = "manifest.csv",
                  image_size: int | None = None, attr_dim: int | None = None) -> FaceDataset:
    """Read `filename,age,attr_0..attr_{N-1},identity` rows into a dataset."""
    directory = Path(directory)
    path = directory / manifest if not Path(manifest).is_absolute() else Path(manifest)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValidationError(f"{path}: manifest has no header row") from None
        attr_cols = [c for c in header if c.startswith("attr_")]
        expected = ["filename", "age", *attr_cols, "identity"]
        if header != expected:
            raise ValidationError(f"{path}: header {header} != expected {expected}")
        n = len(attr_cols)
        if attr_dim is not None and n != attr_dim:
            raise ValidationError(f"{path}: manifest has {n} attributes, expected {attr_dim}")
        samples = []
        size = image_size
        for row_no, row in enumerate(reader, start=2):
            if len(row) != len(expected):
                raise ValidationError(
                    f"{path} row {row_no}: expected {len(expected)} fields, got {len(row)}"
                )
            fname, age_str, *attrs, ident = row
            group = bin_age(int(age_str))
            img_path = directory / fname
            if not img_path.exists():
                raise FileNotFoundError(f"{path} row {row_no}: image '{img_path}' not found")
            image = load_png(img_path, size=size)
            if size is None:
                size = image.shape[0]
            samples.append(
                FaceSample(
                    image=image,
                    age_group=group,
                    attributes=np.array([float(a) for a in attrs]),
                    identity=int(ident),
                )
            )
    return FaceDataset(samples, size if size is not None else 0, n)


def export_dataset(dataset: FaceDataset, out_dir) -> Path:
    """Write PNGs plus a generated manifest so synthetic and real data share a path."""
    out_dir = Path(out_dir)
    (out_dir / "images").mkdir(parents=True, exist_ok=True)
    manifest = out_dir / "manifest.csv"
    with open(manifest, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["filename", "age", *[f"attr_{i}" for i in range(dataset.attr_dim)], "identity"]
        )
        for i, s in enumerate(dataset):
            fname = f"images/{i:05d}.png"
            save_png(out_dir / fname, s.image)
            writer.writerow(
                [fname, GROUP_EXPORT_AGES[s.age_group], *[int(a) for a in s.attributes], s.identity]
            )
    return manifest


def sample_mismatched(alpha: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Uniform draw from the 2^N - 1 binary vectors different from alpha."""
    alpha = np.asarray(alpha)
    n = alpha.shape[0]
    if n == 0:
        raise ValueError("no mismatched vector exists for an empty attribute vector")
    own = int(sum(int(round(b)) << i for i, b in enumerate(alpha)))
    draw = int(rng.integers(0, (1 << n) - 1))
    if draw >= own:
        draw += 1
    return np.array([(draw >> i) & 1 for i in range(n)], dtype=np.float64)


def _matched_old_draw(old: tuple[FaceSample, ...], attrs: np.ndarray,
                      rng: np.random.Generator, match_attributes: bool) -> FaceSample:
    if match_attributes:
        candidates = [s for s in old if np.array_equal(s.attributes, attrs)]
        if candidates:
            return candidates[rng.integers(len(candidates))]
        logger.warning(
            "no aged sample matches attributes %s; falling back to unconditional sampling",
            attrs.tolist(),
        )
    return old[rng.integers(len(old))]


def sample_batch(dataset: FaceDataset, target_group: AgeGroup, batch_size: int,
                 rng: np.random.Generator, match_attributes: bool = True):
    """Independent young/old draws; old attributes match young when possible."""
    if batch_size < 1:
        raise ValueError(f"batch_size must be >= 1, got {batch_size}")
    young = dataset.group(AgeGroup.UNDER31)
    old = dataset.group(target_group)
    if not young:
        raise DataError("the under-31 group is empty")
    if not old:
        raise DataError(f"the {GROUP_LABELS[target_group]} group is empty")
    young_batch = [young[i] for i in rng.integers(0, len(young), size=batch_size)]
    old_batch = [
        _matched_old_draw(old, s.attributes, rng, match_attributes) for s in young_batch
    ]
    return young_batch, old_batch


def epoch_batches(dataset: FaceDataset, target_group: AgeGroup, batch_size: int,
                  rng: np.random.Generator, match_attributes: bool = True):
    """One shuffled pass over the young group, old batches drawn per chunk."""
    young = dataset.group(AgeGroup.UNDER31)
    old = dataset.group(target_group)
    if not young:
        raise DataError("the under-31 group is empty")
    if not old:
        raise DataError(f"the {GROUP_LABELS[target_group]} group is empty")
    order = rng.permutation(len(young))
    for start in range(0, len(order), batch_size):
        idx = order[start : start + batch_size]
        young_batch = [young[i] for i in idx]
        old_batch = [
            _matched_old_draw(old, s.attributes, rng, match_attributes) for s in young_batch
        ]
        yield young_batch, old_batch
