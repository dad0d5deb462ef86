"""Experiment configuration.

The on-disk format is INI: one section per component, typed scalar values,
comma-separated lists. ``[dataset]``, ``[model]``, ``[federation]``,
``[optimizer]``, ``[augment]``, ``[seeds]`` and ``[run]`` are recognized;
see ``configs/desk_blobs.ini`` for every key. The run manifest stores the
same structure as JSON, and both forms load back to an equal config.
"""
import configparser
import dataclasses
import json
from dataclasses import dataclass, field

from .augment import AugmentConfig
from .datasets import DatasetSource
from .errors import ConfigError, SSFLError
from .losses import DEFAULT_THRESHOLD
from .model import LrSchedule, ModelSpec, OptimizerConfig
from .partitioner import DEFAULT_PARTITION_SEED

OBJECTIVES = ("crl", "self_training", "supervised_oracle")
AVERAGING = ("fedavg", "grouping")


@dataclass(frozen=True)
class ModelSection:
    architecture: str = "mlp"
    norm: str = "group_norm"
    widths: tuple = field(default=(), metadata={"elem": int})
    groups: tuple = field(default=(), metadata={"elem": int})

    def spec(self, input_shape, num_classes):
        return ModelSpec(
            architecture=self.architecture,
            input_shape=tuple(input_shape),
            num_classes=num_classes,
            norm=self.norm,
            widths=self.widths or None,
            groups=self.groups or None,
        )


@dataclass(frozen=True)
class FederationSection:
    objective: str = "crl"
    averaging: str = "fedavg"
    groups: int = 1
    R: float = 0.6
    T: int = 8
    Ns: int = 500
    K: int = 20
    C: int = 20
    tau: float = DEFAULT_THRESHOLD
    eval_every: int = 1


@dataclass(frozen=True)
class OptimizerSection:
    base_lr: float = 0.03
    period_coeff: float = 0.4375
    epochs: int = 30
    samples_per_epoch: int = 975
    batch_size: int = 64
    warmup_epochs: float = 0.0
    floor: float = 1e-4
    momentum: float = 0.9
    weight_decay: float = 1e-4

    def optimizer(self):
        sched = LrSchedule(
            self.base_lr, self.period_coeff, self.epochs, self.samples_per_epoch,
            self.batch_size, self.warmup_epochs, self.floor,
        )
        return OptimizerConfig(sched, self.momentum, self.weight_decay)


@dataclass(frozen=True)
class AugmentSection:
    max_shift_px: int = 2
    hflip: bool = True
    weak_noise: float = 0.05
    ops_per_sample: int = 2
    op_pool: tuple = field(default=(), metadata={"elem": str})

    def augment(self):
        return AugmentConfig(
            self.max_shift_px, self.hflip, self.weak_noise, self.ops_per_sample, self.op_pool or None
        )


@dataclass(frozen=True)
class SeedSection:
    partition: int = DEFAULT_PARTITION_SEED
    weights: int = 1
    schedule: int = 0


@dataclass(frozen=True)
class RunSection:
    workers: int = 1


SECTIONS = {
    "dataset": DatasetSource,
    "model": ModelSection,
    "federation": FederationSection,
    "optimizer": OptimizerSection,
    "augment": AugmentSection,
    "seeds": SeedSection,
    "run": RunSection,
}


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: DatasetSource = field(default_factory=DatasetSource)
    model: ModelSection = field(default_factory=ModelSection)
    federation: FederationSection = field(default_factory=FederationSection)
    optimizer: OptimizerSection = field(default_factory=OptimizerSection)
    augment: AugmentSection = field(default_factory=AugmentSection)
    seeds: SeedSection = field(default_factory=SeedSection)
    run: RunSection = field(default_factory=RunSection)

    def __post_init__(self):
        f = self.federation
        if f.objective not in OBJECTIVES:
            raise ConfigError(f"objective must be one of {OBJECTIVES}")
        if f.averaging not in AVERAGING:
            raise ConfigError(f"averaging must be one of {AVERAGING}")
        if not 1 <= f.C <= f.K:
            raise ConfigError("need 1 <= C <= K")
        if f.averaging == "grouping" and not 1 <= f.groups <= f.C:
            raise ConfigError("need 1 <= groups <= C for grouping")
        if not 0 < f.tau < 1:
            raise ConfigError("tau must lie in (0, 1)")
        if f.T < 1 or f.eval_every < 1:
            raise ConfigError("T and eval_every must be at least 1")
        if not 0 <= f.R <= 1:
            raise ConfigError("R must lie in [0, 1]")
        if self.run.workers < 1:
            raise ConfigError("workers must be at least 1")
        try:
            self.optimizer.optimizer()
            self.augment.augment()
        except SSFLError as exc:
            raise ConfigError(str(exc)) from exc

    @property
    def S(self):
        return self.federation.groups if self.federation.averaging == "grouping" else 1

    def replace(self, **sections):
        """Copy with whole sections or ``section={key: value}`` updates."""
        kw = {}
        for name, val in sections.items():
            cur = getattr(self, name)
            kw[name] = dataclasses.replace(cur, **val) if isinstance(val, dict) else val
        return dataclasses.replace(self, **kw)

    def to_dict(self):
        return {
            name: {f.name: _jsonable(getattr(getattr(self, name), f.name)) for f in dataclasses.fields(cls)}
            for name, cls in SECTIONS.items()
        }

    @classmethod
    def from_dict(cls, d):
        unknown = set(d) - set(SECTIONS)
        if unknown:
            raise ConfigError(f"unknown config sections {sorted(unknown)}")
        kw = {}
        for name, scls in SECTIONS.items():
            kw[name] = _build_section(name, scls, d.get(name, {}), from_text=False)
        return cls(**kw)

    def to_ini(self):
        lines = []
        for name, scls in SECTIONS.items():
            lines.append(f"[{name}]")
            sec = getattr(self, name)
            for f in dataclasses.fields(scls):
                v = getattr(sec, f.name)
                if isinstance(v, tuple):
                    v = ", ".join(str(x) for x in v)
                elif isinstance(v, bool):
                    v = "true" if v else "false"
                lines.append(f"{f.name} = {v}")
            lines.append("")
        return "\n".join(lines)


def _jsonable(v):
    return list(v) if isinstance(v, tuple) else v


def _coerce(section, key, raw, f, from_text):
    typ = f.type
    try:
        if typ is tuple:
            elem = f.metadata.get("elem", str)
            if from_text:
                items = [s.strip() for s in str(raw).split(",") if s.strip()]
            else:
                items = list(raw)
            return tuple(elem(x) for x in items)
        if typ is bool:
            if isinstance(raw, bool):
                return raw
            text = str(raw).strip().lower()
            if text in ("1", "true", "yes", "on"):
                return True
            if text in ("0", "false", "no", "off"):
                return False
            raise ValueError(f"not a boolean: {raw!r}")
        if typ is int:
            if isinstance(raw, float) and not raw.is_integer():
                raise ValueError(f"not an integer: {raw!r}")
            return int(str(raw).strip()) if from_text else int(raw)
        if typ is float:
            return float(raw)
        return str(raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[{section}] {key}: {exc}") from None


def _build_section(name, scls, values, from_text):
    fields = {f.name: f for f in dataclasses.fields(scls)}
    unknown = set(values) - set(fields)
    if unknown:
        raise ConfigError(f"[{name}] unknown keys {sorted(unknown)}")
    kw = {k: _coerce(name, k, v, fields[k], from_text) for k, v in values.items()}
    try:
        return scls(**kw)
    except SSFLError as exc:
        raise ConfigError(f"[{name}] {exc}") from exc


def parse_ini(text):
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from None
    unknown = set(cp.sections()) - set(SECTIONS)
    if unknown:
        raise ConfigError(f"unknown config sections {sorted(unknown)}")
    kw = {}
    for name, scls in SECTIONS.items():
        values = dict(cp[name]) if cp.has_section(name) else {}
        kw[name] = _build_section(name, scls, values, from_text=True)
    return ExperimentConfig(**kw)


def load_config(path):
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    if path.endswith(".json"):
        try:
            return ExperimentConfig.from_dict(json.loads(text))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"malformed JSON config: {exc}") from None
    return parse_ini(text)


def apply_seed_overrides(cfg, overrides):
    """``overrides``: iterable of ``key=value`` strings for the seeds section."""
    updates = {}
    fields = {f.name: f for f in dataclasses.fields(SeedSection)}
    for item in overrides or ():
        key, sep, value = item.partition("=")
        key = key.strip()
        if key.startswith("seeds."):
            key = key[len("seeds."):]
        if not sep or key not in fields:
            raise ConfigError(f"bad seed override {item!r}; expected one of {sorted(fields)}=<int>")
        updates[key] = _coerce("seeds", key, value, fields[key], from_text=True)
    return cfg.replace(seeds=updates) if updates else cfg
