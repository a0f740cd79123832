"""Run configuration: nested dataclasses loaded from YAML with field-level checks."""
from __future__ import annotations

import dataclasses
import types
import typing
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .genome import MIN_LIQUID_NEURONS, PARAM_NAMES, LiquidSpec
from .netgen import TopologyConfig, WeightInitConfig
from .readout import ReadoutConfig
from .search import SaConfig
from .simulator import LifParams, NeuronParams, SimConfig


class ConfigError(ValueError):
    def __init__(self, field_path: str, message: str):
        super().__init__(f"{field_path}: {message}")
        self.field = field_path


@dataclass(frozen=True)
class DatasetSpec:
    format: str = "idx"              # idx | csv | spikes | synthetic
    train_images: str | None = None
    train_labels: str | None = None
    test_images: str | None = None
    test_labels: str | None = None
    path: str | None = None          # csv: one file, split by train_fraction
    train_path: str | None = None    # csv: separate files
    test_path: str | None = None
    train_spikes: str | None = None
    test_spikes: str | None = None
    channels: int | None = None      # spikes / synthetic
    train_fraction: float = 0.8
    train_limit: int | None = 10000
    test_limit: int | None = None
    n_train: int = 40                # synthetic
    n_test: int = 40
    max_rate_hz: float = 63.75

    def validate(self, prefix: str = "dataset", check_files: bool = True) -> None:
        needed = {
            "idx": ("train_images", "train_labels", "test_images", "test_labels"),
            "spikes": ("train_spikes", "train_labels", "test_spikes", "test_labels", "channels"),
            "synthetic": (),
        }
        if self.format == "csv":
            if not (self.path or (self.train_path and self.test_path)):
                raise ConfigError(f"{prefix}.path", "csv needs 'path' or 'train_path' + 'test_path'")
            files = [p for p in (self.path, self.train_path, self.test_path) if p]
        elif self.format in needed:
            for name in needed[self.format]:
                if getattr(self, name) is None:
                    raise ConfigError(f"{prefix}.{name}", f"required for format {self.format!r}")
            files = [getattr(self, n) for n in needed[self.format] if n != "channels"]
        else:
            raise ConfigError(f"{prefix}.format", f"unknown format {self.format!r}")
        if not 0 < self.train_fraction < 1:
            raise ConfigError(f"{prefix}.train_fraction", "must be in (0, 1)")
        if self.max_rate_hz <= 0:
            raise ConfigError(f"{prefix}.max_rate_hz", "must be positive")
        for name in ("train_limit", "test_limit", "channels"):
            value = getattr(self, name)
            if value is not None and value < 1:
                raise ConfigError(f"{prefix}.{name}", "must be >= 1")
        if self.format == "synthetic" and (self.n_train < 2 or self.n_test < 1):
            raise ConfigError(f"{prefix}.n_train", "synthetic data needs n_train >= 2, n_test >= 1")
        if check_files:
            for p in files:
                if not Path(p).exists():
                    raise ConfigError(prefix, f"file not found: {p}")


@dataclass(frozen=True)
class SearchSpec:
    step1: SaConfig = field(default_factory=SaConfig)
    step2: SaConfig = field(default_factory=SaConfig)
    step3: SaConfig = field(default_factory=SaConfig)
    max_disturb: int | None = None


@dataclass(frozen=True)
class LiquidDefaults:
    excitatory_ratio: float = 0.8
    p_ee: float = 0.4
    p_ei: float = 0.4
    p_ie: float = 0.5
    p_ii: float = 0.1


@dataclass(frozen=True)
class RunConfig:
    dataset: DatasetSpec = field(default_factory=DatasetSpec)
    total_neurons: int = 1000
    group_count: int = 4
    liquid: LiquidDefaults = field(default_factory=LiquidDefaults)
    search: SearchSpec = field(default_factory=SearchSpec)
    lif: LifParams = field(default_factory=LifParams)
    sim: SimConfig = field(default_factory=SimConfig)
    weights: WeightInitConfig = field(default_factory=WeightInitConfig)
    topology: TopologyConfig = field(default_factory=TopologyConfig)
    readout: ReadoutConfig = field(default_factory=ReadoutConfig)
    seed: int = 0
    workers: int = 1
    minimize_fractions: tuple[float, ...] = (1.0, 0.9, 0.8, 0.6)
    out: str = "runs/latest"

    def validate(self, check_files: bool = True) -> "RunConfig":
        self.dataset.validate(check_files=check_files)
        if self.group_count < 1:
            raise ConfigError("group_count", "must be >= 1")
        if self.total_neurons < self.group_count * MIN_LIQUID_NEURONS:
            raise ConfigError(
                "total_neurons",
                f"{self.total_neurons} cannot fill {self.group_count} liquids of "
                f"{MIN_LIQUID_NEURONS} neurons",
            )
        try:
            LiquidSpec(MIN_LIQUID_NEURONS, **self.liquid_params())
        except ValueError as exc:
            raise ConfigError("liquid", str(exc)) from None
        m = self.search.max_disturb
        if m is not None and not 0 < m < self.total_neurons / self.group_count:
            raise ConfigError("search.max_disturb", "must satisfy 0 < M < total_neurons / group_count")
        if self.workers < 1:
            raise ConfigError("workers", "must be >= 1")
        for f in self.minimize_fractions:
            if not 0 < f <= 1:
                raise ConfigError("minimize_fractions", f"{f} outside (0, 1]")
        return self

    def liquid_params(self) -> dict:
        return {name: getattr(self.liquid, name) for name in PARAM_NAMES}

    def sa_configs(self) -> list[SaConfig]:
        """Per-step SA configs with seeds tied to the master seed."""
        from .objective import derive_seed

        return [
            dataclasses.replace(c, seed=derive_seed(self.seed, "sa", i + 1, c.seed) % 2**63)
            for i, c in enumerate((self.search.step1, self.search.step2, self.search.step3))
        ]

    def to_dict(self) -> dict:
        return _to_plain(self)

    def dumps(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=True)


def _to_plain(obj):
    if dataclasses.is_dataclass(obj):
        return {f.name: _to_plain(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, (tuple, list)):
        return [_to_plain(x) for x in obj]
    return obj


def _build(cls, data, prefix: str):
    if data is None:
        return cls()
    if not isinstance(data, dict):
        raise ConfigError(prefix or "<root>", f"expected a mapping, got {type(data).__name__}")
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls) if f.init}
    unknown = set(data) - names
    if unknown:
        raise ConfigError(f"{prefix}.{sorted(unknown)[0]}".lstrip("."), "unknown field")
    kwargs = {}
    for name, value in data.items():
        path = f"{prefix}.{name}".lstrip(".")
        kwargs[name] = _coerce(hints[name], value, path)
    try:
        return cls(**kwargs)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(prefix or "<root>", str(exc)) from None


def _coerce(hint, value, path):
    origin = typing.get_origin(hint)
    args = typing.get_args(hint)
    if dataclasses.is_dataclass(hint):
        return _build(hint, value, path)
    if origin in (typing.Union, types.UnionType):
        if value is None and type(None) in args:
            return None
        inner = [a for a in args if a is not type(None)]
        return _coerce(inner[0], value, path)
    if origin is tuple:
        if not isinstance(value, (list, tuple)):
            raise ConfigError(path, "expected a list")
        item = args[0] if args else float
        return tuple(_coerce(item, v, path) for v in value)
    if hint is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(path, f"expected a number, got {value!r}")
        return float(value)
    if hint is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(path, f"expected an integer, got {value!r}")
        return value
    if hint is str:
        if not isinstance(value, str):
            raise ConfigError(path, f"expected a string, got {value!r}")
        return value
    return value


def config_from_dict(data: dict | None) -> RunConfig:
    return _build(RunConfig, data or {}, "")


def load_config(path: str | Path | None) -> RunConfig:
    if path is None:
        return RunConfig()
    try:
        data = yaml.safe_load(Path(path).read_text())
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError("--config", str(exc)) from None
    return config_from_dict(data)
