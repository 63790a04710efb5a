"""Experiment configuration and its flat ``section.key = value`` text form."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace

from ..bitplane import TriggerSpec
from ..imagecore import PatchLoc
from ..net.model import ModelConfig
from ..scanlib import ScanKind, ScanPlan


class ConfigError(ValueError):
    pass


@dataclass
class DatasetSection:
    source: str = "synth"
    class_count: int = 3
    per_class: int = 100
    test_per_class: int = 50
    side: int = 32
    seed: int = 7
    train_manifest: str = ""
    test_manifest: str = ""


@dataclass
class ModelSection:
    patch_size: int = 4
    embed_dim: int = 24
    state_dim: int = 4
    block_count: int = 2
    init_seed: int = 0
    delta: float = 1.0
    embed_gain: float = 3.0


@dataclass
class TriggerSection:
    patch_size: int = 4
    k: int = 1
    loc_i: str = "topleft"
    loc_j: str = "bottomleft"


@dataclass
class AttackSection:
    kind: str = "badscan"
    poison_ratio: float = 0.33
    source_class: int = 0
    target_class: int = 1
    badnets_patch: int = 4
    badnets_value: int = 255


@dataclass
class ScanSection:
    kind: str = "REDS"
    drop_rate: float = 0.20
    seed: int = 1234


@dataclass
class TrainSection:
    epochs: int = 10
    batch: int = 4
    lr: float = 0.001
    momentum: float = 0.9
    seed: int = 0


@dataclass
class BenchSection:
    repeats: int = 0


@dataclass
class ExperimentConfig:
    dataset: DatasetSection = field(default_factory=DatasetSection)
    model: ModelSection = field(default_factory=ModelSection)
    trigger: TriggerSection = field(default_factory=TriggerSection)
    attack: AttackSection = field(default_factory=AttackSection)
    scan: ScanSection = field(default_factory=ScanSection)
    train: TrainSection = field(default_factory=TrainSection)
    bench: BenchSection = field(default_factory=BenchSection)

    def to_flat(self) -> dict[str, object]:
        out = {}
        for sec in fields(self):
            section = getattr(self, sec.name)
            for f in fields(section):
                out[f"{sec.name}.{f.name}"] = getattr(section, f.name)
        return out

    def with_seed(self, seed: int) -> "ExperimentConfig":
        """Copy with every seed set to ``seed``."""
        return ExperimentConfig(
            replace(self.dataset, seed=seed), replace(self.model, init_seed=seed), self.trigger,
            self.attack, replace(self.scan, seed=seed), replace(self.train, seed=seed), self.bench,
        )

    # derived objects -------------------------------------------------------

    def trigger_spec(self, side: int | None = None) -> TriggerSpec:
        t = self.trigger
        side = side or self.dataset.side
        return TriggerSpec(
            PatchLoc.parse(t.loc_i, side, t.patch_size),
            PatchLoc.parse(t.loc_j, side, t.patch_size),
            t.patch_size, t.k, 3,
        )

    def scan_plan(self) -> ScanPlan:
        return ScanPlan(ScanKind(self.scan.kind), self.scan.drop_rate, self.scan.seed)

    def model_config(self, class_count: int | None = None, side: int | None = None) -> ModelConfig:
        m = self.model
        return ModelConfig(
            image_side=side or self.dataset.side, channels=3, patch_size=m.patch_size,
            embed_dim=m.embed_dim, state_dim=m.state_dim, block_count=m.block_count,
            class_count=class_count or self.dataset.class_count, init_seed=m.init_seed,
            delta=m.delta, embed_gain=m.embed_gain,
        )

    def validate(self) -> None:
        d, a, tr = self.dataset, self.attack, self.train
        if d.source not in ("synth", "manifest"):
            raise ConfigError(f"dataset.source must be synth or manifest, got {d.source!r}")
        if d.source == "manifest" and not (d.train_manifest and d.test_manifest):
            raise ConfigError("dataset.source = manifest needs dataset.train_manifest and dataset.test_manifest")
        if d.source == "synth":
            if d.class_count < 2:
                raise ConfigError("dataset.class_count must be at least 2")
            if d.per_class < 1 or d.test_per_class < 1:
                raise ConfigError("dataset.per_class and dataset.test_per_class must be positive")
            if d.side < 16:
                raise ConfigError("dataset.side must be at least 16")
        if a.kind not in ("badscan", "badnets", "none"):
            raise ConfigError(f"attack.kind must be badscan, badnets or none, got {a.kind!r}")
        if not 0.0 <= a.poison_ratio <= 1.0:
            raise ConfigError("attack.poison_ratio must lie in [0, 1]")
        if a.source_class == a.target_class:
            raise ConfigError("attack.source_class and attack.target_class must differ")
        for name in ("source_class", "target_class"):
            if not 0 <= getattr(a, name) < d.class_count:
                raise ConfigError(f"attack.{name} outside [0, {d.class_count})")
        try:
            ScanKind(self.scan.kind)
        except ValueError:
            raise ConfigError(f"scan.kind must be one of {[k.value for k in ScanKind]}") from None
        if self.scan.kind == "REDS" and not 0.0 < self.scan.drop_rate < 1.0:
            raise ConfigError("scan.drop_rate must lie strictly between 0 and 1")
        if tr.epochs < 0 or tr.batch < 1:
            raise ConfigError("train.epochs must be >= 0 and train.batch >= 1")
        if tr.lr < 0 or not 0.0 <= tr.momentum < 1.0:
            raise ConfigError("train.lr must be >= 0 and train.momentum in [0, 1)")
        try:
            self.trigger_spec()
        except (ValueError, IndexError) as exc:
            raise ConfigError(f"trigger: {exc}") from None
        try:
            self.model_config()
        except ValueError as exc:
            raise ConfigError(f"model: {exc}") from None


SECTIONS = {f.name: f.type for f in fields(ExperimentConfig)}


def _coerce(raw: str, kind, key: str):
    if kind in (int, "int"):
        try:
            return int(raw)
        except ValueError:
            raise ConfigError(f"{key}: expected an integer, got {raw!r}") from None
    if kind in (float, "float"):
        try:
            value = float(raw)
        except ValueError:
            raise ConfigError(f"{key}: expected a number, got {raw!r}") from None
        if math.isnan(value):
            raise ConfigError(f"{key}: NaN is not allowed")
        return value
    return raw.strip().strip('"').strip("'")


def parse_config(text: str, base: ExperimentConfig | None = None) -> ExperimentConfig:
    """Parse ``section.key = value`` lines; ``#`` starts a comment."""
    cfg = base or ExperimentConfig()
    cfg = ExperimentConfig(**{name: replace(getattr(cfg, name)) for name in SECTIONS})
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'section.key = value'")
        key, raw = (part.strip() for part in line.split("=", 1))
        if key.count(".") != 1:
            raise ConfigError(f"line {lineno}: key {key!r} must look like section.key")
        sec_name, attr = key.split(".")
        if sec_name not in SECTIONS:
            raise ConfigError(f"line {lineno}: unknown section {sec_name!r}")
        section = getattr(cfg, sec_name)
        types = {f.name: f.type for f in fields(section)}
        if attr not in types:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        setattr(section, attr, _coerce(raw, types[attr], key))
    return cfg


def load_config(path) -> ExperimentConfig:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text)


def dump_config(cfg: ExperimentConfig) -> str:
    return "".join(f"{k} = {v}\n" for k, v in cfg.to_flat().items())
