"""Command-line entry point: data synthesis, training, generation, evaluation,
WPT inspection, and ablation presets.

Every run writes its fully resolved config next to its outputs as
`config.json`; re-running from that file (with `--deterministic`) reproduces
the run. Output layout: `<out>/{config.json, ckpt/, logs/metrics.csv,
samples/, report.json}`.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import config as cfgmod
from .config import RunConfig, apply_variant, profile_run_config
from .data import (
    GROUP_LABELS,
    AgeGroup,
    export_dataset,
    group_from_label,
    load_manifest,
    synth_generate,
)
from .embedder import FeatureEmbedder, load_embedder_arrays, make_fixed_embedder
from .errors import ValidationError
from .evaluation import build_report, emit_attention, emit_grid, synthesize_aged
from .images import load_png, save_png
from .training import restore_train_state, train
from .wpt import get_filters, wpt_decompose

TARGET_CHOICES = ("31-40", "41-50", "51plus")


def _num_workers() -> int:
    """Data loading is synchronous; the env var caps any future parallelism."""
    raw = os.environ.get("A3GAN_NUM_WORKERS", "0")
    try:
        return max(0, int(raw))
    except ValueError:
        return 0


def resolve_embedder(spec: str, seed: int) -> FeatureEmbedder:
    kind, _, arg = spec.partition(":")
    if kind == "fixed":
        return make_fixed_embedder(int(arg) if arg else seed)
    if kind == "file":
        from .checkpoint import load_checkpoint

        arrays, _ = load_checkpoint(arg)
        return load_embedder_arrays(FeatureEmbedder(), arrays)
    raise ValidationError(f"--embedder must be fixed:<seed> or file:<path>, got '{spec}'")


def _load_dataset(args, run_config: RunConfig):
    if getattr(args, "data", None):
        return load_manifest(args.data, image_size=run_config.synth.image_size,
                             attr_dim=run_config.synth.attr_dim or None)
    dataset, _ = synth_generate(run_config.synth)
    return dataset


def _build_run_config(args, variant: str = "full") -> RunConfig:
    """Config file first, explicit command-line flags override it."""
    import dataclasses

    train_overrides = {}
    if getattr(args, "epochs", None) is not None:
        train_overrides["epochs"] = args.epochs
        train_overrides.setdefault("g_iterations", None)
    if getattr(args, "iterations", None) is not None:
        train_overrides["g_iterations"] = args.iterations
    if getattr(args, "batch_size", None) is not None:
        train_overrides["batch_size"] = args.batch_size

    if args.config:
        cfg = RunConfig.load(args.config)
        train = cfg.train
        top = {}
        if args.seed is not None:
            top["seed"] = args.seed
            cfg = dataclasses.replace(
                cfg, synth=dataclasses.replace(cfg.synth, seed=args.seed)
            )
            train = dataclasses.replace(train, seed=args.seed)
        if args.target_group is not None:
            top["target_group"] = args.target_group
            train = dataclasses.replace(
                train, target_group=group_from_label(args.target_group)
            )
        if args.embedder is not None:
            top["embedder"] = args.embedder
        if args.deterministic:
            top["deterministic"] = True
            train = dataclasses.replace(train, deterministic=True)
        if train_overrides:
            train = dataclasses.replace(train, **train_overrides)
        cfg = dataclasses.replace(cfg, train=train, **top)
    else:
        cfg = profile_run_config(
            profile=args.profile or "desk-64",
            seed=args.seed if args.seed is not None else 0,
            target_group=args.target_group or "51plus",
            embedder=args.embedder,
            deterministic=args.deterministic,
            **train_overrides,
        )
    if variant != "full":
        cfg = apply_variant(cfg, variant)
    return cfg


def cmd_synth_data(args) -> int:
    run_config = _build_run_config(args)
    dataset, _ = synth_generate(run_config.synth)
    out = Path(args.out)
    manifest = export_dataset(dataset, out)
    run_config.save(out / "config.json")
    print(f"wrote {len(dataset)} samples to {out} (manifest: {manifest})")
    return 0


def _train_with_config(run_config: RunConfig, out: Path, dataset, resume=None) -> int:
    embedder = resolve_embedder(run_config.embedder, run_config.seed)
    run_config.save(out / "config.json")
    result = train(
        run_config.train, dataset, run_config.generator, run_config.discriminator,
        out, embedder=embedder, resume_from=resume,
    )
    print(f"trained {result.state.g_step} generator steps; "
          f"checkpoint: {result.checkpoint_path}; metrics: {result.metrics_path}")
    return 0


def cmd_train(args) -> int:
    run_config = _build_run_config(args)
    out = Path(args.out)
    dataset = _load_dataset(args, run_config)
    return _train_with_config(run_config, out, dataset, resume=args.resume)


def cmd_ablate(args) -> int:
    run_config = _build_run_config(args, variant=args.variant)
    out = Path(args.out)
    dataset = _load_dataset(args, run_config)
    return _train_with_config(run_config, out, dataset)


def cmd_generate(args) -> int:
    state, train_config, _ = restore_train_state(args.ckpt)
    generator = state.generator
    out = Path(args.out)
    (out / "samples").mkdir(parents=True, exist_ok=True)

    if args.data:
        dataset = load_manifest(args.data, image_size=generator.config.image_size)
        samples = list(dataset.group(AgeGroup.UNDER31))
    else:
        spec_seed = args.seed if args.seed is not None else train_config.seed
        from .data import SynthSpec

        dataset, _ = synth_generate(
            SynthSpec(seed=spec_seed, image_size=generator.config.image_size)
        )
        samples = list(dataset.group(AgeGroup.UNDER31))
    samples = samples[: args.limit] if args.limit else samples
    if not samples:
        print("no young samples to translate", file=sys.stderr)
        return 1

    outputs = synthesize_aged(generator, samples)
    for i, (sample, aged) in enumerate(zip(samples, outputs)):
        save_png(out / "samples" / f"{i:04d}_input.png", sample.image)
        save_png(out / "samples" / f"{i:04d}_aged.png", aged)

    from PIL import Image

    grid = emit_grid([[s.image, o] for s, o in zip(samples[:8], outputs[:8])])
    Image.fromarray(grid).save(out / "samples" / "grid.png")
    if generator.config.use_attention:
        masks = []
        for s in samples[:8]:
            masks.append(generator.generate(s.image, s.attributes[: generator.config.attr_dim]).mask)
        attention = emit_attention([s.image for s in samples[:8]], masks, outputs[:8])
        Image.fromarray(attention).save(out / "samples" / "attention.png")
    print(f"wrote {len(outputs)} aged samples under {out / 'samples'}")
    return 0


def cmd_eval(args) -> int:
    state, train_config, _ = restore_train_state(args.ckpt)
    run_config = RunConfig.load(args.config) if args.config else None
    if args.data:
        dataset = load_manifest(args.data, image_size=state.generator.config.image_size)
    elif run_config is not None:
        dataset, _ = synth_generate(run_config.synth)
    else:
        from .data import SynthSpec

        dataset, _ = synth_generate(
            SynthSpec(seed=train_config.seed, image_size=state.generator.config.image_size)
        )
    report = build_report(dataset, state.generator, target_groups=(train_config.target_group,))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(json.dumps(report.to_dict(), indent=1) + "\n")
    print(report.to_text())
    print(f"report written to {out / 'report.json'}")
    return 0


def cmd_wpt(args) -> int:
    image = load_png(args.input)
    filters = get_filters(args.filter)
    pyramid = wpt_decompose(image.astype(np.float64), args.levels, filters)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    manifest = {
        "input": str(args.input),
        "filter": filters.name,
        "levels": [],
    }
    for k, level in enumerate(pyramid.levels):
        manifest["levels"].append(
            {"level": k, "shape": list(level.shape), "energy": pyramid.level_energy(k)}
        )
        if k == 0:
            continue
        for c in range(level.shape[2]):
            band = level[:, :, c]
            scale = np.max(np.abs(band))
            normalized = band / scale if scale > 0 else band
            save_png(out / f"level{k}_band{c:03d}.png", normalized[:, :, None])
    (out / "manifest.json").write_text(json.dumps(manifest, indent=1) + "\n")
    print(f"decomposed {args.input} to {len(pyramid.levels) - 1} levels under {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="a3gan", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", help="JSON run config; explicit flags override it")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--profile", choices=cfgmod.PROFILES, default=None)
        p.add_argument("--target-group", dest="target_group", choices=TARGET_CHOICES,
                       default=None)
        p.add_argument("--embedder", default=None, help="fixed:<seed> or file:<path>")
        p.add_argument("--deterministic", action="store_true")

    p_synth = sub.add_parser("synth-data", help="write the synthetic dataset as PNGs + manifest")
    add_common(p_synth)
    p_synth.set_defaults(fn=cmd_synth_data)

    p_train = sub.add_parser("train", help="train a model")
    add_common(p_train)
    p_train.add_argument("--data", help="directory with manifest.csv (default: synthetic)")
    p_train.add_argument("--epochs", type=int, default=None)
    p_train.add_argument("--iterations", type=int, default=None,
                         help="total generator iterations (overrides --epochs)")
    p_train.add_argument("--batch-size", dest="batch_size", type=int, default=None)
    p_train.add_argument("--resume", help="checkpoint to resume from")
    p_train.set_defaults(fn=cmd_train)

    p_ablate = sub.add_parser("ablate", help="train an ablation preset")
    add_common(p_ablate)
    p_ablate.add_argument("--variant", choices=[v for v in cfgmod.VARIANTS if v != "full"],
                          required=True)
    p_ablate.add_argument("--data", help="directory with manifest.csv (default: synthetic)")
    p_ablate.add_argument("--epochs", type=int, default=None)
    p_ablate.add_argument("--iterations", type=int, default=None)
    p_ablate.add_argument("--batch-size", dest="batch_size", type=int, default=None)
    p_ablate.set_defaults(fn=cmd_ablate)

    p_gen = sub.add_parser("generate", help="translate young faces with a trained model")
    p_gen.add_argument("--ckpt", required=True)
    p_gen.add_argument("--out", required=True)
    p_gen.add_argument("--data", help="directory with manifest.csv (default: synthetic)")
    p_gen.add_argument("--seed", type=int, default=None)
    p_gen.add_argument("--limit", type=int, default=0)
    p_gen.set_defaults(fn=cmd_generate)

    p_eval = sub.add_parser("eval", help="run the three evaluation protocols")
    p_eval.add_argument("--ckpt", required=True)
    p_eval.add_argument("--out", required=True)
    p_eval.add_argument("--config", help="run config describing the eval dataset")
    p_eval.add_argument("--data", help="directory with manifest.csv")
    p_eval.set_defaults(fn=cmd_eval)

    p_wpt = sub.add_parser("wpt", help="decompose an image and dump subband PNGs")
    p_wpt.add_argument("--input", required=True)
    p_wpt.add_argument("--levels", type=int, default=2)
    p_wpt.add_argument("--filter", default="haar")
    p_wpt.add_argument("--out", required=True)
    p_wpt.set_defaults(fn=cmd_wpt)

    return parser


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else 2
    _ = _num_workers()
    try:
        return args.fn(args)
    except (FileNotFoundError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ValidationError, ValueError, KeyError) as exc:
        print(f"invalid configuration: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
