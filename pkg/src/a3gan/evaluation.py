"""The three quantitative protocols (aging accuracy, identity preservation,
attribute consistency) against pluggable estimators, plus the closed-form
oracle estimators that stand in for external face-analysis services on the
synthetic corpus, and the image-grid / attention-map emitters.

Oracle conventions mirror the synthetic markers in :mod:`a3gan.data`:
age is scored as mean detail energy of the two finest packet levels,
attributes decode from the hue-mean and corner-mean signs, and identity is
the centred correlation of level-2 approximation content.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .data import (
    CORNER_FRACTION,
    GROUP_LABELS,
    TARGET_GROUPS,
    AgeGroup,
    FaceDataset,
    FaceSample,
    hue_band,
)
from .images import batch_to_tensor, tensor_to_hwc, to_uint8
from .wpt import get_filters, wpt_decompose

HUE_CONFIDENCE_MIN = 0.02
CORNER_CONFIDENCE_MIN = 0.05
ORACLE_VERIFICATION_THRESHOLD = 0.5


def oracle_age_score(image: np.ndarray) -> float:
    """Mean energy of the two finest packet detail levels (brightness-invariant)."""
    pyr = wpt_decompose(np.asarray(image, dtype=np.float64), 2, get_filters("haar"))
    total, count = 0.0, 0
    for level, period in ((1, 4), (2, 16)):
        arr = pyr.levels[level]
        detail = np.delete(arr, np.s_[::period], axis=2)
        total += float(np.sum(detail**2))
        count += detail.size
    return total / count


@dataclass(frozen=True)
class AttributeReading:
    values: np.ndarray
    low_confidence: bool


def oracle_attribute_classify(image: np.ndarray, attr_dim: int = 2) -> AttributeReading:
    """Decode the hue-bias and corner-block markers; best-effort off-family."""
    image = np.asarray(image, dtype=np.float64)
    bits, weak = [], []
    lo, hi = hue_band(image.shape[0])
    hue = float(image[lo:hi, :, 0].mean() - image[lo:hi, :, 2].mean())
    bits.append(1.0 if hue > 0 else 0.0)
    weak.append(abs(hue) < HUE_CONFIDENCE_MIN)
    if attr_dim > 1:
        block = image.shape[0] // CORNER_FRACTION
        corner = float(image[:block, :block, :].mean())
        bits.append(1.0 if corner > 0 else 0.0)
        weak.append(abs(corner) < CORNER_CONFIDENCE_MIN)
    return AttributeReading(values=np.array(bits[:attr_dim]), low_confidence=any(weak[:attr_dim]))


def oracle_identity_score(a: np.ndarray, b: np.ndarray) -> float:
    """Centred correlation of level-2 approximation content, in [-1, 1]."""
    feats = []
    for img in (a, b):
        pyr = wpt_decompose(np.asarray(img, dtype=np.float64), 2, get_filters("haar"))
        ll = pyr.levels[2][:, :, ::16].reshape(-1)
        feats.append(ll - ll.mean())
    na, nb = np.linalg.norm(feats[0]), np.linalg.norm(feats[1])
    if na == 0.0 or nb == 0.0:
        return 0.0
    return float(np.dot(feats[0], feats[1]) / (na * nb))


@dataclass
class GroupAgeStats:
    synthetic_mean: float
    synthetic_std: float
    generic_mean: float
    generic_std: float
    difference: float


@dataclass
class GroupIdentityStats:
    mean: float
    std: float
    rate_percent: float
    threshold: float


@dataclass
class EvalReport:
    """Per-target-group results; a section is None when not evaluated."""

    age: dict = field(default_factory=dict)
    attributes: dict = field(default_factory=dict)
    identity: dict = field(default_factory=dict)

    def __post_init__(self):
        for section in (self.age, self.attributes, self.identity):
            for g in TARGET_GROUPS:
                section.setdefault(GROUP_LABELS[g], None)

    def to_dict(self) -> dict:
        def enc(section):
            return {
                k: (v.__dict__ if hasattr(v, "__dict__") else v) if v is not None else None
                for k, v in section.items()
            }

        return {"age": enc(self.age), "attributes": enc(self.attributes), "identity": enc(self.identity)}

    @classmethod
    def from_dict(cls, d: dict) -> "EvalReport":
        rep = cls()
        for k, v in d.get("age", {}).items():
            rep.age[k] = GroupAgeStats(**v) if v is not None else None
        for k, v in d.get("attributes", {}).items():
            rep.attributes[k] = dict(v) if v is not None else None
        for k, v in d.get("identity", {}).items():
            rep.identity[k] = GroupIdentityStats(**v) if v is not None else None
        return rep

    def to_text(self) -> str:
        lines = ["age estimation (synthetic vs generic, oracle scale)"]
        for k, v in self.age.items():
            if v is None:
                lines.append(f"  {k:>7}: -")
            else:
                lines.append(
                    f"  {k:>7}: {v.synthetic_mean:.5f}+/-{v.synthetic_std:.5f} "
                    f"vs {v.generic_mean:.5f}+/-{v.generic_std:.5f} (diff {v.difference:+.5f})"
                )
        lines.append("attribute preservation rate (%)")
        for k, v in self.attributes.items():
            if v is None:
                lines.append(f"  {k:>7}: -")
            else:
                cells = "  ".join(f"{a}={r:.2f}" for a, r in v.items())
                lines.append(f"  {k:>7}: {cells}")
        lines.append("identity verification")
        for k, v in self.identity.items():
            if v is None:
                lines.append(f"  {k:>7}: -")
            else:
                lines.append(
                    f"  {k:>7}: confidence {v.mean:.4f}+/-{v.std:.4f}, "
                    f"rate {v.rate_percent:.2f}% @ {v.threshold}"
                )
        return "\n".join(lines)


def eval_age(outputs_by_group: dict, references_by_group: dict, estimator=oracle_age_score) -> dict:
    """Mean +/- std of estimated age scores per group, plus the signed gap."""
    section = {GROUP_LABELS[g]: None for g in TARGET_GROUPS}
    for group, outputs in outputs_by_group.items():
        refs = references_by_group[group]
        syn = np.array([estimator(im) for im in outputs])
        gen = np.array([estimator(im) for im in refs])
        section[GROUP_LABELS[group]] = GroupAgeStats(
            synthetic_mean=float(syn.mean()),
            synthetic_std=float(syn.std()),
            generic_mean=float(gen.mean()),
            generic_std=float(gen.std()),
            difference=float(syn.mean() - gen.mean()),
        )
    return section


def eval_attributes(inputs, outputs, classifier=oracle_attribute_classify) -> dict:
    """Exact per-attribute percentage of outputs matching their input's bits."""
    if len(inputs) != len(outputs) or not inputs:
        raise ValueError("inputs and outputs must be equal-length and non-empty")
    in_bits = np.stack([np.asarray(classifier(im).values) for im in inputs])
    out_bits = np.stack([np.asarray(classifier(im).values) for im in outputs])
    n_attr = in_bits.shape[1]
    return {
        f"attr_{j}": float(100.0 * np.mean(in_bits[:, j] == out_bits[:, j]))
        for j in range(n_attr)
    }


def eval_identity(inputs, outputs, scorer=oracle_identity_score,
                  threshold: float = ORACLE_VERIFICATION_THRESHOLD) -> GroupIdentityStats:
    """Mean +/- std of pairwise scores and the exact rate above threshold."""
    if len(inputs) != len(outputs) or not inputs:
        raise ValueError("inputs and outputs must be equal-length and non-empty")
    scores = np.array([scorer(a, b) for a, b in zip(inputs, outputs)])
    return GroupIdentityStats(
        mean=float(scores.mean()),
        std=float(scores.std()),
        rate_percent=float(100.0 * np.mean(scores > threshold)),
        threshold=threshold,
    )


def region_leakage(inputs, outputs, texture_mask: np.ndarray) -> float:
    """Mean |output - input| outside the oracle-known aging-texture region."""
    outside = ~np.asarray(texture_mask, dtype=bool)
    diffs = [
        float(np.mean(np.abs(np.asarray(o, dtype=np.float64) - np.asarray(i, dtype=np.float64))[outside]))
        for i, o in zip(inputs, outputs)
    ]
    return float(np.mean(diffs))


def synthesize_aged(generator, samples: list[FaceSample], batch_size: int = 16,
                    attr_dim: int | None = None) -> list[np.ndarray]:
    """Run the generator over samples, returning HWC outputs in sample order."""
    outputs = []
    n_attr = generator.config.attr_dim if attr_dim is None else attr_dim
    generator.eval()
    with torch.no_grad():
        for start in range(0, len(samples), batch_size):
            chunk = samples[start : start + batch_size]
            imgs = batch_to_tensor([s.image for s in chunk])
            alpha = torch.tensor(
                np.stack([s.attributes[:n_attr] for s in chunk]), dtype=torch.float32
            )
            out = generator(imgs, alpha).output
            outputs.extend(tensor_to_hwc(out[i : i + 1]) for i in range(len(chunk)))
    return outputs


def build_report(dataset: FaceDataset, generator, target_groups=TARGET_GROUPS,
                 threshold: float = ORACLE_VERIFICATION_THRESHOLD,
                 age_estimator=oracle_age_score,
                 classifier=oracle_attribute_classify,
                 identity_scorer=oracle_identity_score) -> EvalReport:
    """Run all three protocols for each requested target group."""
    report = EvalReport()
    young = list(dataset.group(AgeGroup.UNDER31))
    young_images = [s.image for s in young]
    for group in target_groups:
        refs = [s.image for s in dataset.group(group)]
        if not young or not refs:
            continue
        outputs = synthesize_aged(generator, young)
        label = GROUP_LABELS[group]
        report.age.update(eval_age({group: outputs}, {group: refs}, age_estimator))
        report.attributes[label] = eval_attributes(
            young_images, outputs, lambda im: classifier(im, dataset.attr_dim)
        )
        report.identity[label] = eval_identity(young_images, outputs, identity_scorer, threshold)
    return report


def _blank_canvas(n_rows: int, n_cols: int, size: int, margin: int) -> np.ndarray:
    h = n_rows * (size + margin) + margin
    w = n_cols * (size + margin) + margin
    return np.full((h, w, 3), 255, dtype=np.uint8)


def _paste(canvas: np.ndarray, image: np.ndarray, row: int, col: int, size: int, margin: int) -> None:
    tile = to_uint8(image)
    if tile.ndim == 2 or tile.shape[2] == 1:
        tile = np.repeat(tile.reshape(size, size, 1), 3, axis=2)
    y = margin + row * (size + margin)
    x = margin + col * (size + margin)
    canvas[y : y + size, x : x + size] = tile


def emit_grid(rows: list[list[np.ndarray]], margin: int = 2) -> np.ndarray:
    """One row per subject: input then aged outputs; returns an RGB uint8 canvas."""
    if not rows or not rows[0]:
        raise ValueError("grid needs at least one row with at least one image")
    size = rows[0][0].shape[0]
    n_cols = len(rows[0])
    canvas = _blank_canvas(len(rows), n_cols, size, margin)
    for r, row in enumerate(rows):
        if len(row) != n_cols:
            raise ValueError(f"row {r} has {len(row)} images, expected {n_cols}")
        for c, image in enumerate(row):
            _paste(canvas, image, r, c, size, margin)
    return canvas


def emit_attention(inputs, masks, outputs, margin: int = 2) -> np.ndarray:
    """Triplets (input, mask, output); mask intensity equals the retain fraction."""
    if not inputs or len(inputs) != len(masks) or len(inputs) != len(outputs):
        raise ValueError("inputs, masks and outputs must be equal-length and non-empty")
    size = inputs[0].shape[0]
    canvas = _blank_canvas(len(inputs), 3, size, margin)
    for r, (inp, mask, out) in enumerate(zip(inputs, masks, outputs)):
        mask_img = np.asarray(mask, dtype=np.float64).reshape(size, size, -1)[:, :, :1]
        _paste(canvas, inp, r, 0, size, margin)
        _paste(canvas, mask_img * 2.0 - 1.0, r, 1, size, margin)
        _paste(canvas, out, r, 2, size, margin)
    return canvas


def closed_loop_metrics(variant: str, seed: int, iterations: int, out_dir,
                        n_identities: int = 50, image_size: int = 64,
                        batch_size: int = 8, target_group: str = "51plus") -> dict:
    """Train one desk-profile model on the synthetic corpus and score it
    against the oracles: age-gap closure, attribute preservation, identity
    verification, and off-region leakage."""
    import dataclasses
    import time

    from .config import profile_run_config
    from .data import synth_generate
    from .training import train

    cfg = profile_run_config(
        profile="desk-64", seed=seed, variant=variant, target_group=target_group,
        batch_size=batch_size, g_iterations=iterations,
    )
    cfg = dataclasses.replace(
        cfg,
        synth=dataclasses.replace(
            cfg.synth, seed=seed, n_identities=n_identities, image_size=image_size
        ),
    )
    dataset, oracle = synth_generate(cfg.synth)
    cfg.save(Path(out_dir) / "config.json")

    t0 = time.time()
    result = train(cfg.train, dataset, cfg.generator, cfg.discriminator, out_dir)
    train_seconds = time.time() - t0

    young = list(dataset.group(AgeGroup.UNDER31))
    young_images = [s.image for s in young]
    old_images = [s.image for s in dataset.group(cfg.train.target_group)]
    outputs = synthesize_aged(result.state.generator, young)

    input_score = float(np.mean([oracle_age_score(im) for im in young_images]))
    target_score = float(np.mean([oracle_age_score(im) for im in old_images]))
    output_score = float(np.mean([oracle_age_score(im) for im in outputs]))
    attrs = eval_attributes(young_images, outputs)
    ident = eval_identity(young_images, outputs)
    return {
        "variant": variant,
        "seed": seed,
        "iterations": iterations,
        "train_seconds": train_seconds,
        "checkpoint": str(result.checkpoint_path),
        "input_age_score": input_score,
        "target_age_score": target_score,
        "output_age_score": output_score,
        "gap_closure": (output_score - input_score) / (target_score - input_score),
        "attribute_preservation": attrs,
        "identity_rate_percent": ident.rate_percent,
        "identity_mean": ident.mean,
        "region_leakage": region_leakage(
            young_images, outputs, oracle.texture_region_mask()
        ),
    }
