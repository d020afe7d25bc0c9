"""Run configuration: a TOML file with one table per component.

Every table is optional; unknown tables or keys are rejected.  After
command-line overrides are applied the fully resolved configuration (every
field, defaults included) is written next to the run's outputs together with
the toolkit version, so the run can be repeated from that file alone.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any, Mapping

import tomli
import tomli_w

from . import __version__
from .convnet.model import Architecture
from .convnet.train import TrainConfig
from .perturbviz import PerturbConfig
from .preprocess import EpochConfig, StandardizerConfig
from .synthgen import SynthConfig, SynthParadigm

RESOLVED_NAME = "resolved_config.toml"


class ConfigError(ValueError):
    """The configuration file is malformed or names unknown settings."""


@dataclass
class ClassifierSection:
    kind: str = "rlda"
    sample_rate_hz: float | None = None     # None: the classifier's default
    standardize: bool | None = None
    channels: str | list[str] | None = None  # set name, explicit list, or "all"
    priors: str = "equal"


@dataclass
class EvalSection:
    scheme: str = "within"
    test_fraction: float = 0.2
    seed: int = 0
    m_values: list[int] = field(default_factory=lambda: [1, 2, 4, 8, 16, 30])
    k_draws: int = 5
    rates: list[float] = field(default_factory=lambda: [1.25, 2.5, 5.0, 10.0, 25.0,
                                                        50.0, 100.0, 250.0])
    channel_sets: list[str] = field(default_factory=lambda: ["all", "midline7"])
    channel_reconciliation: str = "intersection"
    workers: int = 1


@dataclass
class PathsSection:
    data: str = ""
    data_b: str = ""
    epochs: str = ""
    model: str = ""
    out: str = ""


_SECTIONS: dict[str, type] = {
    "synth": SynthConfig,
    "standardizer": StandardizerConfig,
    "epoch": EpochConfig,
    "train": TrainConfig,
    "architecture": Architecture,
    "perturb": PerturbConfig,
    "classifier": ClassifierSection,
    "eval": EvalSection,
    "paths": PathsSection,
}


@dataclass
class RunConfig:
    synth: SynthConfig = field(default_factory=SynthConfig)
    standardizer: StandardizerConfig = field(default_factory=StandardizerConfig)
    epoch: EpochConfig = field(default_factory=EpochConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    architecture: Architecture = field(default_factory=Architecture)
    perturb: PerturbConfig = field(default_factory=PerturbConfig)
    classifier: ClassifierSection = field(default_factory=ClassifierSection)
    eval: EvalSection = field(default_factory=EvalSection)
    paths: PathsSection = field(default_factory=PathsSection)

    @classmethod
    def from_mapping(cls, raw: Mapping[str, Any]) -> "RunConfig":
        raw = dict(raw)
        raw.pop("meta", None)
        unknown = sorted(set(raw) - set(_SECTIONS))
        if unknown:
            raise ConfigError(f"unknown config table(s): {', '.join(unknown)}")
        built = {}
        for name, kind in _SECTIONS.items():
            values = raw.get(name, {})
            if not isinstance(values, Mapping):
                raise ConfigError(f"[{name}] must be a table")
            allowed = {f.name for f in fields(kind)}
            bad = sorted(set(values) - allowed)
            if bad:
                raise ConfigError(f"unknown key(s) in [{name}]: {', '.join(bad)}")
            values = dict(values)
            try:
                if kind is SynthConfig:
                    para = SynthParadigm(values.pop("paradigm", SynthParadigm.FLANKER_LIKE))
                    factory = (SynthConfig.gui_like if para is SynthParadigm.GUI_LIKE
                               else SynthConfig.flanker_like)
                    built[name] = factory(**values)
                elif kind is PerturbConfig and "bands" in values:
                    values["bands"] = tuple(tuple(b) for b in values["bands"])
                    built[name] = kind(**values)
                else:
                    built[name] = kind(**values)
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"invalid [{name}] settings: {exc}") from None
        return cls(**built)

    @classmethod
    def load(cls, path) -> "RunConfig":
        path = Path(path)
        try:
            raw = tomli.loads(path.read_text())
        except FileNotFoundError:
            raise ConfigError(f"config file {path} not found") from None
        except tomli.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from None
        return cls.from_mapping(raw)

    def override(self, section: str, **changes) -> None:
        changes = {k: v for k, v in changes.items() if v is not None}
        if changes:
            current = getattr(self, section)
            try:
                setattr(self, section, dataclasses.replace(current, **changes))
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"invalid [{section}] override: {exc}") from None

    def to_mapping(self) -> dict:
        out: dict[str, Any] = {"meta": {"toolkit": "errpdecode", "version": __version__}}
        for name in _SECTIONS:
            out[name] = _plain(dataclasses.asdict(getattr(self, name)))
        return out

    def write_resolved(self, directory) -> Path:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        path = directory / RESOLVED_NAME
        path.write_text(tomli_w.dumps(self.to_mapping()))
        return path


def _plain(value):
    """Convert to TOML-representable values (no None, tuples become lists)."""
    if isinstance(value, dict):
        return {k: _plain(v) for k, v in value.items() if v is not None}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if hasattr(value, "value") and isinstance(value, str):
        return value.value
    return value
