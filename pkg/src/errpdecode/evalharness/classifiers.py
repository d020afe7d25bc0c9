"""Classifier specifications consumed by the evaluation protocols.

A specification bundles the preprocessing preset a decoder expects with
``fit`` / ``predict`` callables, so a protocol can treat rLDA and the
ConvNet alike.  ``with_preprocessing`` returns a copy with a different
sampling rate or channel subset (used by the sweeps and by channel
reconciliation).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Any, Protocol, Sequence

import numpy as np

from ..convnet.model import Architecture, build_deep_convnet, convnet_predict
from ..convnet.train import TrainConfig, train
from ..data_model import CORRECT, EpochSet, Recording
from ..montage import MIDLINE_7
from ..preprocess import Preset, prepare
from ..rlda import FeatureSpec, flatten_features, rlda_predict, rlda_train


class ClassifierSpec(Protocol):
    tag: str
    preset: Preset

    def prepare(self, recordings: Sequence[Recording]) -> EpochSet: ...

    def fit(self, es: EpochSet, seed: int) -> Any: ...

    def predict(self, model: Any, es: EpochSet) -> np.ndarray: ...

    def with_preprocessing(self, **changes) -> "ClassifierSpec": ...


class _PresetMixin:
    preset: Preset

    def prepare(self, recordings: Sequence[Recording]) -> EpochSet:
        return prepare(recordings, self.preset)

    def with_preprocessing(self, **changes):
        if "channels" in changes and changes["channels"] is not None:
            changes["channels"] = tuple(changes["channels"])
        return replace(self, preset=replace(self.preset, **changes))

    def describe(self) -> dict:
        p = self.preset
        return {
            "tag": self.tag,
            "sample_rate_hz": p.sample_rate_hz,
            "standardize": p.standardize,
            "channels": None if p.channels is None else list(p.channels),
            "window_ms": list(p.epoch.window_ms),
        }


@dataclass(frozen=True)
class RldaClassifier(_PresetMixin):
    """Shrinkage LDA on the 7 midline channels at 50 Hz, raw (CAR) voltages."""

    preset: Preset = Preset(sample_rate_hz=50.0, standardize=False, channels=MIDLINE_7)
    priors: str = "equal"
    tag: str = "rlda"

    def fit(self, es: EpochSet, seed: int = 0):
        return rlda_train(flatten_features(es), es.labels, priors=self.priors,
                          feature_spec=FeatureSpec.of(es))

    def predict(self, model, es: EpochSet) -> np.ndarray:
        return rlda_predict(model, flatten_features(es))[0]


@dataclass(frozen=True)
class ConvNetClassifier(_PresetMixin):
    """Deep ConvNet on all channels at 250 Hz with running standardization.

    A fresh network is initialized from the fold seed for every fit.
    """

    preset: Preset = Preset(sample_rate_hz=250.0, standardize=True)
    train_config: TrainConfig = TrainConfig()
    architecture: Architecture = field(default_factory=Architecture)
    tag: str = "convnet"

    def fit(self, es: EpochSet, seed: int = 0):
        model = build_deep_convnet(es.n_channels, es.n_samples, seed=seed,
                                   arch=self.architecture,
                                   channel_names=es.channel_names)
        best, _ = train(model, es, replace(self.train_config, seed=seed))
        return best

    def predict(self, model, es: EpochSet) -> np.ndarray:
        return convnet_predict(model, es)[0]

    def describe(self) -> dict:
        d = super().describe()
        d["train_config"] = vars(self.train_config).copy()
        return d


@dataclass(frozen=True)
class ConstantClassifier(_PresetMixin):
    """Predicts one class for every trial (a chance-level reference)."""

    label: int = CORRECT
    preset: Preset = Preset(sample_rate_hz=50.0, standardize=False, channels=MIDLINE_7)
    tag: str = "constant"

    def fit(self, es: EpochSet, seed: int = 0):
        return self.label

    def predict(self, model, es: EpochSet) -> np.ndarray:
        return np.full(es.n_trials, model, dtype=np.int8)
