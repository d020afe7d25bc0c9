"""Preprocessing chain: re-referencing, resampling, running standardization,
epoching and channel selection."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import signal
from scipy.interpolate import make_interp_spline

from .data_model import EpochSet, Event, Recording, concatenate, window_samples


@dataclass(frozen=True)
class StandardizerConfig:
    decay: float = 0.999
    epsilon: float = 1e-4

    def __post_init__(self):
        if not 0.0 < self.decay < 1.0:
            raise ValueError("decay must lie in (0, 1)")
        if not self.epsilon > 0.0:
            raise ValueError("epsilon must be positive")


@dataclass(frozen=True)
class EpochConfig:
    start_ms: float = -500.0
    end_ms: float = 1000.0

    def __post_init__(self):
        if not self.start_ms < self.end_ms:
            raise ValueError("start_ms must be smaller than end_ms")

    @property
    def window_ms(self) -> tuple[float, float]:
        return (float(self.start_ms), float(self.end_ms))


class EpochWindowError(ValueError):
    """An event window does not fit inside its recording."""


def common_average_reference(rec: Recording) -> Recording:
    if rec.data.size == 0:
        raise ValueError("cannot re-reference an empty recording")
    data = np.asarray(rec.data, dtype=np.float64)
    return rec.replace(data=data - data.mean(axis=0, keepdims=True))


MAX_TAPS = 1001


def lowpass_zero_phase(x: np.ndarray, cutoff_hz: float, rate_hz: float) -> np.ndarray:
    """Forward-backward Hamming-windowed-sinc low-pass along the last axis.

    The tap count is capped at 1001 and truncated so that the odd-reflection
    padding (3 filter lengths) still fits inside the signal.
    """
    n = x.shape[-1]
    numtaps = min(MAX_TAPS, (n - 1) // 3)
    if numtaps % 2 == 0:
        numtaps -= 1
    if numtaps < 3:
        return np.array(x, dtype=np.float64)
    taps = signal.firwin(numtaps, cutoff_hz, window="hamming", fs=rate_hz)
    pad = 3 * numtaps
    pad = min(pad, n - 1)
    head = 2 * x[..., :1] - x[..., pad:0:-1]
    tail = 2 * x[..., -1:] - x[..., -2:-pad - 2:-1]
    y = np.concatenate([head, x, tail], axis=-1)
    # a symmetric FIR applied forward then backward is a centered convolution
    # with the filter twice
    kernel = np.convolve(taps, taps[::-1])
    shape = (1,) * (y.ndim - 1) + (-1,)
    y = signal.oaconvolve(y, kernel.reshape(shape), mode="same", axes=-1)
    return y[..., pad:pad + n]


def resample(rec: Recording, target_rate_hz: float) -> Recording:
    orig = float(rec.sample_rate_hz)
    if not target_rate_hz > 0:
        raise ValueError("target rate must be positive")
    if target_rate_hz > orig:
        raise ValueError(f"target rate {target_rate_hz} Hz exceeds original {orig} Hz (no upsampling)")
    data = np.asarray(rec.data, dtype=np.float64)
    if target_rate_hz == orig:
        return rec.replace(data=data)
    ratio = target_rate_hz / orig
    n_out = int(np.floor(rec.n_samples * ratio))
    filtered = lowpass_zero_phase(data, 0.45 * target_rate_hz, orig)
    step = orig / target_rate_hz
    if abs(step - round(step)) < 1e-9:
        out = filtered[:, :: int(round(step))][:, :n_out]
    else:
        positions = np.arange(n_out) * step
        spline = make_interp_spline(np.arange(rec.n_samples), filtered, k=3, axis=1)
        out = spline(positions)
    events = tuple(
        Event(min(int(round(ev.sample_index * ratio)), n_out - 1), ev.label, ev.kind)
        for ev in rec.events
    )
    return rec.replace(data=out, sample_rate_hz=float(target_rate_hz), events=events)


def running_standardize(rec: Recording, cfg: StandardizerConfig = StandardizerConfig()) -> Recording:
    """Electrode-wise exponential running standardization.

    Per channel::

        mean_t = (1 - decay) * x_t + decay * mean_{t-1}
        var_t  = (1 - decay) * (x_t - mean_t)**2 + decay * var_{t-1}
        out_t  = (x_t - mean_t) / max(sqrt(var_t), epsilon)

    with mean_{-1} = x_0 and var_{-1} = 1.  The state starts fresh for every
    recording.
    """
    x = np.asarray(rec.data, dtype=np.float64)
    if x.shape[1] == 0:
        return rec.replace(data=x)
    d = cfg.decay
    b, a = [1.0 - d], [1.0, -d]
    mean = signal.lfilter(b, a, x, axis=1, zi=d * x[:, :1])[0]
    centered = x - mean
    zi = np.full((x.shape[0], 1), d)
    var = signal.lfilter(b, a, centered**2, axis=1, zi=zi)[0]
    out = centered / np.maximum(np.sqrt(var), cfg.epsilon)
    return rec.replace(data=out)


def epoch(rec: Recording, cfg: EpochConfig = EpochConfig()) -> EpochSet:
    offset, length = window_samples(cfg.window_ms, rec.sample_rate_hz)
    starts = np.array([ev.sample_index + offset for ev in rec.events], dtype=np.int64)
    for i, s in enumerate(starts):
        if s < 0 or s + length > rec.n_samples:
            raise EpochWindowError(
                f"window out of bounds for event {i} at sample "
                f"{rec.events[i].sample_index} (recording has {rec.n_samples} samples)"
            )
    idx = starts[:, None] + np.arange(length)[None, :]
    trials = np.asarray(rec.data)[:, idx].transpose(1, 0, 2)
    n = len(rec.events)
    return EpochSet(
        trials=trials.reshape(n, rec.data.shape[0], length),
        labels=np.array([int(ev.label) for ev in rec.events], dtype=np.int8),
        window_ms=cfg.window_ms,
        sample_rate_hz=rec.sample_rate_hz,
        channel_names=rec.channel_names,
        subject_ids=[rec.subject_id] * n,
        session_ids=[rec.session_id] * n,
        paradigms=[rec.paradigm.value] * n,
        trial_uids=[f"{rec.subject_id}/{rec.session_id}/{i}" for i in range(n)],
    )


def select_channels(es: EpochSet, names: Sequence[str]) -> EpochSet:
    position = {name: i for i, name in enumerate(es.channel_names)}
    missing = [n for n in names if n not in position]
    if missing:
        raise KeyError(f"unknown channel(s): {', '.join(missing)}")
    idx = [position[n] for n in names]
    return EpochSet(
        trials=es.trials[:, idx, :], labels=es.labels, window_ms=es.window_ms,
        sample_rate_hz=es.sample_rate_hz, channel_names=tuple(names),
        subject_ids=es.subject_ids, session_ids=es.session_ids,
        paradigms=es.paradigms, trial_uids=es.trial_uids,
    )


@dataclass(frozen=True)
class Preset:
    """Per-classifier preprocessing: CAR, resample, optional running
    standardization, epoching, then channel selection."""

    sample_rate_hz: float = 250.0
    standardize: bool = True
    channels: tuple[str, ...] | None = None
    standardizer: StandardizerConfig = StandardizerConfig()
    epoch: EpochConfig = EpochConfig()

    def apply(self, rec: Recording) -> EpochSet:
        rec = common_average_reference(rec)
        if self.sample_rate_hz != rec.sample_rate_hz:
            rec = resample(rec, self.sample_rate_hz)
        if self.standardize:
            rec = running_standardize(rec, self.standardizer)
        es = epoch(rec, self.epoch)
        if self.channels is not None:
            es = select_channels(es, self.channels)
        return es


def prepare(recordings: Sequence[Recording], preset: Preset) -> EpochSet:
    return concatenate([preset.apply(rec) for rec in recordings])
