"""Experiment configuration: TOML files, ``section.key=value`` overrides, JSON echo.

Every key has a default; a few depend on the chosen example and are filled
in by :func:`materialize`, so a parsed config is always complete and its echo
re-parses to an identical object.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib


class ConfigError(ValueError):
    def __init__(self, key: str, message: str):
        self.key = key
        super().__init__(f"{key}: {message}")


@dataclass(frozen=True)
class ExperimentSection:
    example: str = "example1"
    variant: str = "insa"
    rounds: int | None = None
    clients: int = 100
    subset_size: int = 10
    eta: float = 0.01
    delta: float = 0.01
    beta0: float = 1.0
    alpha: str = "uniform"
    local_steps: int = 10
    cap: int = 10
    reference: str = "global_z"
    convexity: float | None = None
    sigma_safety: float = 1.0
    eval_every: int = 1


@dataclass(frozen=True)
class AdaptiveSection:
    mu: float = 20.0
    tau: float = 2.0
    beta_min: float = 1e-4
    beta_max: float = 1e4


@dataclass(frozen=True)
class SyntheticSection:
    n_samples: int = 10000
    dim: int = 1000
    gamma: float = 1.0
    partition: str = "iid"


@dataclass(frozen=True)
class MnistSection:
    dir: str = "data/mnist"
    n_train: int = 10000
    n_test: int = 1000
    shard_size: int = 50
    shards_per_client: int = 2
    partition: str = "label_shards"


@dataclass(frozen=True)
class SeedsSection:
    data: int = 0
    partition: int = 1
    sampling: int = 2
    init: int = 3


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: ExperimentSection = field(default_factory=ExperimentSection)
    adaptive: AdaptiveSection = field(default_factory=AdaptiveSection)
    synthetic: SyntheticSection = field(default_factory=SyntheticSection)
    mnist: MnistSection = field(default_factory=MnistSection)
    seeds: SeedsSection = field(default_factory=SeedsSection)

    def to_dict(self) -> dict[str, dict[str, Any]]:
        return dataclasses.asdict(self)

    def echo(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


SECTIONS = {f.name: f.default_factory for f in dataclasses.fields(ExperimentConfig)}
CHOICES = {
    "experiment.example": ("example1", "example2"),
    "experiment.variant": ("vanilla", "in", "insa"),
    "experiment.alpha": ("uniform", "proportional"),
    "experiment.reference": ("global_z", "prev_local"),
    "synthetic.partition": ("iid",),
    "mnist.partition": ("label_shards", "iid"),
}


def _field_type(section: str, key: str) -> type:
    annotation = {f.name: f.type for f in dataclasses.fields(SECTIONS[section])}[key]
    base = annotation.split("|")[0].strip()
    return {"int": int, "float": float, "str": str, "bool": bool}[base]


def _coerce(path: str, kind: type, value: Any) -> Any:
    if kind is float and isinstance(value, int) and not isinstance(value, bool):
        return float(value)
    if value is None or type(value) is not kind:
        raise ConfigError(path, f"expected {kind.__name__}, got {type(value).__name__} ({value!r})")
    return value


def _parse_flag_value(path: str, kind: type, text: str) -> Any:
    try:
        if kind is bool:
            if text.lower() not in ("true", "false"):
                raise ValueError(text)
            return text.lower() == "true"
        if kind is int:
            return int(text)
        if kind is float:
            return float(text)
    except ValueError:
        raise ConfigError(path, f"cannot parse {text!r} as {kind.__name__}") from None
    return text


def _split_key(key: str) -> tuple[str, str]:
    section, _, name = key.partition(".")
    if section not in SECTIONS:
        raise ConfigError(key, f"unknown section {section!r} (known: {', '.join(SECTIONS)})")
    known = {f.name for f in dataclasses.fields(SECTIONS[section])}
    if name not in known:
        raise ConfigError(key, "unknown key")
    return section, name


def apply_overrides(raw: dict[str, dict[str, Any]], overrides) -> dict[str, dict[str, Any]]:
    """Merge ``section.key=value`` strings into a raw config mapping; flags win."""
    merged = {k: dict(v) for k, v in raw.items()}
    for item in overrides:
        key, sep, text = item.partition("=")
        if not sep:
            raise ConfigError(item, "override must look like section.key=value")
        section, name = _split_key(key.strip())
        merged.setdefault(section, {})[name] = _parse_flag_value(
            key.strip(), _field_type(section, name), text.strip()
        )
    return merged


def materialize(cfg: ExperimentConfig) -> ExperimentConfig:
    ex = cfg.experiment
    changes = {}
    if ex.rounds is None:
        changes["rounds"] = 100 if ex.example == "example1" else 200
    if ex.convexity is None:
        changes["convexity"] = cfg.synthetic.gamma if ex.example == "example1" else 1.0
    if not changes:
        return cfg
    return dataclasses.replace(cfg, experiment=dataclasses.replace(ex, **changes))


def validate(cfg: ExperimentConfig) -> None:
    for path, options in CHOICES.items():
        section, name = path.split(".")
        value = getattr(getattr(cfg, section), name)
        if value not in options:
            raise ConfigError(path, f"{value!r} is not one of {list(options)}")

    ex = cfg.experiment

    def need(ok, path, message):
        if not ok:
            raise ConfigError(path, message)

    need(ex.rounds >= 0, "experiment.rounds", "must be nonnegative")
    need(ex.clients >= 1, "experiment.clients", "must be at least 1")
    need(ex.subset_size >= 1, "experiment.subset_size", "must be at least 1")
    need(
        ex.subset_size <= ex.clients,
        "experiment.subset_size",
        f"experiment.subset_size ({ex.subset_size}) exceeds experiment.clients ({ex.clients})",
    )
    need(ex.eta > 0, "experiment.eta", "must be positive")
    need(ex.delta >= 0, "experiment.delta", "must be nonnegative")
    need(ex.beta0 > 0, "experiment.beta0", "must be positive")
    need(ex.local_steps >= 1, "experiment.local_steps", "must be at least 1")
    need(ex.cap >= 1, "experiment.cap", "must be at least 1")
    need(ex.convexity > 0, "experiment.convexity", "must be positive")
    need(0 < ex.sigma_safety <= 1, "experiment.sigma_safety", "must lie in (0, 1]")
    need(ex.eval_every >= 1, "experiment.eval_every", "must be at least 1")

    ad = cfg.adaptive
    need(ad.mu > 1, "adaptive.mu", "must exceed 1")
    need(ad.tau > 1, "adaptive.tau", "must exceed 1")
    need(0 < ad.beta_min <= ad.beta_max, "adaptive.beta_min", "need 0 < beta_min <= beta_max")

    for name in ("data", "partition", "sampling", "init"):
        need(getattr(cfg.seeds, name) >= 0, f"seeds.{name}", "must be nonnegative")

    if ex.example == "example1":
        syn = cfg.synthetic
        need(syn.n_samples >= 3, "synthetic.n_samples", "must be at least 3")
        need(syn.dim >= 1, "synthetic.dim", "must be positive")
        need(syn.gamma >= 0, "synthetic.gamma", "must be nonnegative")
        need(
            ex.clients <= syn.n_samples,
            "experiment.clients",
            f"experiment.clients ({ex.clients}) exceeds synthetic.n_samples ({syn.n_samples})",
        )
    else:
        mn = cfg.mnist
        need(mn.n_train >= 1, "mnist.n_train", "must be positive")
        need(mn.n_test >= 0, "mnist.n_test", "must be nonnegative")
        need(mn.shard_size >= 1, "mnist.shard_size", "must be positive")
        need(mn.shards_per_client >= 1, "mnist.shards_per_client", "must be positive")
        if mn.partition == "label_shards":
            total = ex.clients * mn.shards_per_client * mn.shard_size
            need(
                total == mn.n_train,
                "mnist.n_train",
                f"experiment.clients*mnist.shards_per_client*mnist.shard_size = {total} "
                f"!= mnist.n_train ({mn.n_train})",
            )
        else:
            need(ex.clients <= mn.n_train, "experiment.clients", "exceeds mnist.n_train")


def from_dict(raw: Mapping[str, Any]) -> ExperimentConfig:
    sections = {}
    for section, values in raw.items():
        if section not in SECTIONS:
            raise ConfigError(section, "unknown section")
        if not isinstance(values, Mapping):
            raise ConfigError(section, "expected a table of keys")
        typed = {}
        for name, value in values.items():
            path = f"{section}.{name}"
            _split_key(path)
            if value is None and name in ("rounds", "convexity"):
                typed[name] = None
                continue
            typed[name] = _coerce(path, _field_type(section, name), value)
        sections[section] = SECTIONS[section](**typed)
    cfg = materialize(ExperimentConfig(**sections))
    validate(cfg)
    return cfg


def load_raw(path) -> dict[str, Any]:
    path = Path(path)
    text = path.read_text()
    if path.suffix == ".json":
        raw = json.loads(text)
        # A run manifest carries its resolved config under "config".
        return raw["config"] if "config" in raw and "experiment" not in raw else raw
    try:
        return tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(str(path), f"invalid TOML: {exc}") from None


def parse_config(path=None, overrides=()) -> ExperimentConfig:
    raw = load_raw(path) if path is not None else {}
    return from_dict(apply_overrides(raw, overrides))
