"""Run configuration: one JSON-serializable view over all module configs,
profile presets, and the ablation variants."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

from .data import SynthSpec, group_from_label
from .discriminator import DiscriminatorConfig, desk_discriminator_config, max_pathways
from .errors import ValidationError
from .generator import GeneratorConfig, desk_generator_config
from .losses import LossWeights
from .training import TrainConfig

SCHEMA_VERSION = "a3gan-run-v1"
PROFILES = ("paper-256", "desk-64")
VARIANTS = ("full", "baseline", "no-fae", "no-wmd", "no-am")


@dataclass(frozen=True)
class RunConfig:
    schema_version: str = SCHEMA_VERSION
    profile: str = "desk-64"
    variant: str = "full"
    seed: int = 0
    target_group: str = "51plus"
    embedder: str = "fixed:0"
    deterministic: bool = False
    synth: SynthSpec = field(default_factory=SynthSpec)
    generator: GeneratorConfig = field(default_factory=desk_generator_config)
    discriminator: DiscriminatorConfig = field(default_factory=desk_discriminator_config)
    train: TrainConfig = field(default_factory=TrainConfig)

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValidationError(f"unknown variant '{self.variant}'; expected one of {VARIANTS}")

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["train"]["target_group"] = self.train.target_group.name
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        d = dict(d)
        if d.get("schema_version", SCHEMA_VERSION) != SCHEMA_VERSION:
            raise ValidationError(
                f"config schema {d.get('schema_version')!r} is not {SCHEMA_VERSION!r}"
            )
        synth = dict(d["synth"])
        synth["texture_density_per_group"] = tuple(synth["texture_density_per_group"])
        d["synth"] = SynthSpec(**synth)
        d["generator"] = GeneratorConfig(**d["generator"])
        d["discriminator"] = DiscriminatorConfig(**d["discriminator"])
        from .data import AgeGroup

        train = dict(d["train"])
        train["weights"] = LossWeights(**train["weights"])
        train["betas"] = tuple(train["betas"])
        train["target_group"] = AgeGroup[train["target_group"]]
        d["train"] = TrainConfig(**train)
        return cls(**d)

    def save(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n")
        return path

    @classmethod
    def load(cls, path) -> "RunConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))


def profile_run_config(profile: str = "desk-64", seed: int = 0, target_group: str = "51plus",
                       attr_dim: int = 2, variant: str = "full",
                       embedder: str | None = None, deterministic: bool = False,
                       **train_overrides) -> RunConfig:
    """Assemble a RunConfig for one of the named profiles."""
    group = group_from_label(target_group)
    if profile == "paper-256":
        gen = GeneratorConfig(attr_dim=attr_dim)
        disc = DiscriminatorConfig(attr_dim=attr_dim)
        synth = SynthSpec(seed=seed, image_size=256, attr_dim=attr_dim)
        train_defaults = dict(batch_size=16, epochs=30)
    elif profile == "desk-64":
        gen = desk_generator_config(attr_dim=attr_dim)
        disc = desk_discriminator_config(attr_dim=attr_dim)
        synth = SynthSpec(
            seed=seed, image_size=64, attr_dim=attr_dim,
            n_identities=50, samples_per_identity_per_group=2,
        )
        train_defaults = dict(batch_size=8, epochs=30)
    else:
        raise ValidationError(f"unknown profile '{profile}'; expected one of {PROFILES}")
    train_defaults.update(train_overrides)
    train = TrainConfig(seed=seed, target_group=group, deterministic=deterministic,
                        **train_defaults)
    cfg = RunConfig(
        profile=profile,
        seed=seed,
        target_group=target_group,
        synth=synth,
        generator=gen,
        discriminator=disc,
        train=train,
        embedder=embedder if embedder is not None else f"fixed:{seed}",
        deterministic=deterministic,
    )
    return apply_variant(cfg, variant)


def apply_variant(config: RunConfig, variant: str) -> RunConfig:
    """Expand an ablation preset into concrete config changes.

    baseline: no attribute embedding, single-pathway level-0 critic, no
    attention fusion. no-fae: attributes bypassed in both networks and in
    batch pairing. no-wmd: single-pathway level-0 critic. no-am: generator
    emits the image map directly.
    """
    if variant not in VARIANTS:
        raise ValidationError(f"unknown variant '{variant}'; expected one of {VARIANTS}")
    if variant == "full":
        return dataclasses.replace(config, variant=variant)
    gen = config.generator
    disc = config.discriminator
    train = config.train
    if variant in ("no-fae", "baseline"):
        gen = dataclasses.replace(gen, attr_dim=0)
        disc = dataclasses.replace(disc, attr_dim=0)
        train = dataclasses.replace(train, match_attributes=False)
    if variant in ("no-wmd", "baseline"):
        disc = dataclasses.replace(disc, n_pathways=1)
    if variant in ("no-am", "baseline"):
        gen = dataclasses.replace(gen, use_attention=False)
    return dataclasses.replace(
        config, variant=variant, generator=gen, discriminator=disc, train=train
    )
