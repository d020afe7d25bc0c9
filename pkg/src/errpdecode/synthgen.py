"""Deterministic synthetic EEG with planted error-related components.

Each (subject, session) recording is pink background noise plus, on Error
trials, a set of event-locked components:

* a fronto-central positivity (Pe-like) over FCz and Cz peaking 400 ms
  after the response,
* FlankerLike: a mid-parietal positivity around 700 ms,
* GuiLike: an early occipital positivity around 150 ms and a reduction of
  an ongoing occipital alpha rhythm between 50 and 750 ms.

Component topographies are shared by all subjects; each subject gets its own
amplitude scale and latency shift, so decoders can transfer across subjects
but benefit from seeing several of them.
"""

from __future__ import annotations

import enum
import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy import fft as sp_fft

from .data_model import Event, Label, Paradigm, Recording
from .montage import CHANNEL_SETS, MONTAGE, OCCIPITAL, montage_lookup

NOISE_STD_UV = 10.0
PINK_FLOOR_HZ = 0.5
ALPHA_BAND_HZ = (8.0, 12.0)


class SynthParadigm(str, enum.Enum):
    FLANKER_LIKE = "FlankerLike"
    GUI_LIKE = "GuiLike"


_PREFIX = {SynthParadigm.FLANKER_LIKE: "flk", SynthParadigm.GUI_LIKE: "gui"}
_CODE = {SynthParadigm.FLANKER_LIKE: 1, SynthParadigm.GUI_LIKE: 2}


@dataclass(frozen=True)
class SynthConfig:
    """Generator settings.

    ``channels`` is either a named set from :data:`CHANNEL_SETS` or an
    explicit tuple of montage names.  ``snr`` is the Pe amplitude in units
    of the background standard deviation (10 uV).  Successive events are at
    least ``min_spacing_s`` apart, with a further uniform gap of up to
    ``spacing_jitter_s``; ``max_session_s`` (if set) bounds the session length.
    """

    paradigm: SynthParadigm = SynthParadigm.FLANKER_LIKE
    n_subjects: int = 31
    sessions_per_subject: int = 1
    trials_per_session: int = 1000
    error_rate: float = 0.222
    sample_rate_hz: float = 250.0
    channels: str | tuple[str, ...] = "128"
    snr: float = 1.0
    latency_jitter_ms: float = 30.0
    amplitude_scale_std: float = 0.2
    seed: int = 0
    min_spacing_s: float = 2.0
    spacing_jitter_s: float = 0.5
    max_session_s: float | None = None
    ern: bool = False

    def __post_init__(self):
        object.__setattr__(self, "paradigm", SynthParadigm(self.paradigm))
        if not isinstance(self.channels, str):
            object.__setattr__(self, "channels", tuple(self.channels))
        for name in ("n_subjects", "sessions_per_subject", "trials_per_session"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be positive")
        if not 0.0 < self.error_rate < 1.0:
            raise ValueError("error_rate must lie in (0, 1)")
        if not self.snr >= 0.0:
            raise ValueError("snr must be non-negative")
        if not self.sample_rate_hz > 0:
            raise ValueError("sample_rate_hz must be positive")
        if self.latency_jitter_ms < 0 or self.amplitude_scale_std < 0:
            raise ValueError("subject variability must be non-negative")
        if self.min_spacing_s < 2.0:
            raise ValueError("events must be at least 2 s apart")
        if self.spacing_jitter_s < 0:
            raise ValueError("spacing_jitter_s must be non-negative")
        self.channel_names  # validates names

    @classmethod
    def flanker_like(cls, **overrides) -> "SynthConfig":
        base = dict(paradigm=SynthParadigm.FLANKER_LIKE, n_subjects=31,
                    sessions_per_subject=1, trials_per_session=1000,
                    error_rate=0.222, channels="128")
        base.update(overrides)
        return cls(**base)

    @classmethod
    def gui_like(cls, **overrides) -> "SynthConfig":
        base = dict(paradigm=SynthParadigm.GUI_LIKE, n_subjects=4,
                    sessions_per_subject=5, trials_per_session=606,
                    error_rate=0.253, channels="64")
        base.update(overrides)
        return cls(**base)

    @property
    def channel_names(self) -> tuple[str, ...]:
        if isinstance(self.channels, str):
            try:
                return CHANNEL_SETS[self.channels]
            except KeyError:
                raise ValueError(f"unknown channel set {self.channels!r}") from None
        for name in self.channels:
            montage_lookup(name)
        return self.channels

    def subject_ids(self) -> list[str]:
        return [f"{_PREFIX[self.paradigm]}{s + 1:02d}" for s in range(self.n_subjects)]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["paradigm"] = self.paradigm.value
        if not isinstance(self.channels, str):
            d["channels"] = list(self.channels)
        return d


@dataclass(frozen=True)
class _Component:
    name: str
    foci: tuple[str, ...]
    latency_ms: float
    width_ms: float
    gain: float           # relative to the Pe amplitude
    spatial_sigma: float = 0.25


# Spatial widths are in disc units (the Cz-Fpz distance is 0.75).  Both
# paradigms carry the Pe with full weight on Cz; in the FlankerLike paradigm
# it extends forward to FCz, in the GuiLike one back to CPz.
def _components(cfg: SynthConfig) -> list[_Component]:
    if cfg.paradigm is SynthParadigm.FLANKER_LIKE:
        pe = _Component("pe", ("FCz", "Cz"), 400.0, 60.0, 1.0)
        comps = [pe, _Component("parietal_late", ("Pz",), 700.0, 60.0, 0.5)]
    else:
        pe = _Component("pe", ("Cz", "CPz"), 400.0, 60.0, 1.0)
        comps = [pe, _Component("occipital_early", ("Oz",), 150.0, 40.0, 0.6, 0.3)]
    if cfg.ern:
        comps.append(_Component("ern", pe.foci, 50.0, 25.0, -0.5))
    return comps


_ALPHA_FOCUS = "Oz"
_ALPHA_SIGMA = 0.3
_ALPHA_STD_UV = 20.0
_ALPHA_WINDOW_MS = (50.0, 750.0)
_ALPHA_RAMP_MS = 50.0


def alpha_depth(snr: float) -> float:
    """Fractional alpha-amplitude reduction on Error trials."""
    return float(np.clip(0.6 * snr, 0.0, 0.9))


def spatial_weights(channel_names, foci, sigma: float) -> np.ndarray:
    """Gaussian falloff with disc distance from the nearest focus channel."""
    if isinstance(foci, str):
        foci = (foci,)
    xy = np.array([MONTAGE[n] for n in channel_names])
    w = np.zeros(len(xy))
    for focus in foci:
        fx, fy = MONTAGE[focus]
        d2 = (xy[:, 0] - fx) ** 2 + (xy[:, 1] - fy) ** 2
        w = np.maximum(w, np.exp(-d2 / (2.0 * sigma**2)))
    return w


def pink_noise(rng: np.random.Generator, n_channels: int, n_samples: int,
               sample_rate_hz: float, std: float = NOISE_STD_UV) -> np.ndarray:
    """Spectrally shaped Gaussian noise with a 1/sqrt(f) amplitude profile
    above 0.5 Hz (zero below), scaled to the requested per-channel std."""
    n_fft = sp_fft.next_fast_len(n_samples, real=True)
    white = rng.standard_normal((n_channels, n_fft))
    spec = sp_fft.rfft(white, axis=1)
    f = np.fft.rfftfreq(n_fft, 1.0 / sample_rate_hz)
    shape = np.zeros_like(f)
    keep = f >= PINK_FLOOR_HZ
    shape[keep] = 1.0 / np.sqrt(f[keep])
    spec *= shape
    x = sp_fft.irfft(spec, n=n_fft, axis=1)[:, :n_samples]
    x -= x.mean(axis=1, keepdims=True)
    return x * (std / x.std(axis=1, keepdims=True))


def band_noise(rng: np.random.Generator, n_samples: int, sample_rate_hz: float,
               band: tuple[float, float], std: float) -> np.ndarray:
    n_fft = sp_fft.next_fast_len(n_samples, real=True)
    spec = sp_fft.rfft(rng.standard_normal(n_fft))
    f = np.fft.rfftfreq(n_fft, 1.0 / sample_rate_hz)
    spec[(f < band[0]) | (f >= band[1])] = 0.0
    x = sp_fft.irfft(spec, n=n_fft)[:n_samples]
    return x * (std / x.std())


def _event_schedule(cfg: SynthConfig, rng: np.random.Generator) -> tuple[np.ndarray, int]:
    fs = cfg.sample_rate_hz
    lead_s = tail_s = 2.0
    n = cfg.trials_per_session
    needed = lead_s + tail_s + (n - 1) * cfg.min_spacing_s
    if cfg.max_session_s is not None and needed > cfg.max_session_s:
        raise ValueError(
            f"trial spacing infeasible: {n} trials at >= {cfg.min_spacing_s} s need "
            f"{needed:.1f} s but sessions are limited to {cfg.max_session_s} s"
        )
    gaps = cfg.min_spacing_s + rng.uniform(0.0, cfg.spacing_jitter_s, size=n - 1)
    if cfg.max_session_s is not None:
        # shrink only the random part so the limit is respected
        slack = cfg.max_session_s - needed
        extra = gaps - cfg.min_spacing_s
        if extra.sum() > slack:
            gaps = cfg.min_spacing_s + extra * (slack / extra.sum())
    onsets_s = lead_s + np.concatenate([[0.0], np.cumsum(gaps)])
    # rounding keeps spacing since every gap is >= 2 s >> one sample
    idx = np.round(onsets_s * fs).astype(np.int64)
    n_samples = int(idx[-1] + round(tail_s * fs))
    return idx, n_samples


def _alpha_envelope(n_samples: int, error_idx: np.ndarray, fs: float, depth: float) -> np.ndarray:
    env = np.ones(n_samples)
    if depth == 0.0 or error_idx.size == 0:
        return env
    start, stop = (round(ms / 1000.0 * fs) for ms in _ALPHA_WINDOW_MS)
    ramp = max(int(round(_ALPHA_RAMP_MS / 1000.0 * fs)), 1)
    length = stop - start
    shape = np.ones(length)
    r = 0.5 - 0.5 * np.cos(np.pi * (np.arange(ramp) + 0.5) / ramp)
    shape[:ramp] = r
    shape[-ramp:] = r[::-1]
    for i in error_idx:
        seg = slice(i + start, min(i + stop, n_samples))
        env[seg] = np.minimum(env[seg], 1.0 - depth * shape[: seg.stop - seg.start])
    return env


def _subject_params(cfg: SynthConfig, subject: int) -> tuple[float, float]:
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, _CODE[cfg.paradigm], subject, 0]))
    # log-normal with mean 1 and the configured standard deviation
    s2 = math.log1p(cfg.amplitude_scale_std**2)
    scale = math.exp(math.sqrt(s2) * rng.standard_normal() - s2 / 2.0)
    shift_ms = cfg.latency_jitter_ms * rng.standard_normal()
    return scale, shift_ms


def _session(cfg: SynthConfig, subject: int, session: int) -> Recording:
    fs = cfg.sample_rate_hz
    names = cfg.channel_names
    rng = np.random.default_rng(
        np.random.SeedSequence([cfg.seed, _CODE[cfg.paradigm], subject, session + 1]))
    idx, n_samples = _event_schedule(cfg, rng)
    labels = (rng.random(idx.size) < cfg.error_rate).astype(np.int8)
    data = pink_noise(rng, len(names), n_samples, fs)

    error_idx = idx[labels == 1]
    if cfg.paradigm is SynthParadigm.GUI_LIKE:
        alpha = band_noise(rng, n_samples, fs, ALPHA_BAND_HZ, _ALPHA_STD_UV)
        alpha *= _alpha_envelope(n_samples, error_idx, fs, alpha_depth(cfg.snr))
        data += np.outer(spatial_weights(names, _ALPHA_FOCUS, _ALPHA_SIGMA), alpha)

    scale, shift_ms = _subject_params(cfg, subject)
    amp = cfg.snr * NOISE_STD_UV * scale
    if amp > 0:
        for comp in _components(cfg):
            centre = (comp.latency_ms + shift_ms) / 1000.0 * fs
            half = int(math.ceil(4 * comp.width_ms / 1000.0 * fs))
            lags = np.arange(int(round(centre)) - half, int(round(centre)) + half + 1)
            wave = comp.gain * amp * np.exp(
                -0.5 * ((lags - centre) / (comp.width_ms / 1000.0 * fs)) ** 2)
            pattern = np.outer(spatial_weights(names, comp.foci, comp.spatial_sigma), wave)
            for i in error_idx:
                pos = i + lags
                ok = (pos >= 0) & (pos < n_samples)
                data[:, pos[ok]] += pattern[:, ok]

    events = tuple(Event(int(i), Label(int(lab))) for i, lab in zip(idx, labels))
    return Recording(
        subject_id=cfg.subject_ids()[subject], session_id=f"s{session + 1}",
        paradigm=Paradigm.SYNTHETIC, sample_rate_hz=fs, channel_names=names,
        data=data.astype(np.float32), events=events,
    )


def generate_subject(cfg: SynthConfig, subject: int) -> list[Recording]:
    """All sessions of one subject (0-based index); independent of the others."""
    if not 0 <= subject < cfg.n_subjects:
        raise IndexError(f"subject index {subject} outside [0, {cfg.n_subjects})")
    return [_session(cfg, subject, k) for k in range(cfg.sessions_per_subject)]


def generate_dataset(cfg: SynthConfig) -> list[Recording]:
    """Recordings ordered by subject, then session."""
    return [rec for s in range(cfg.n_subjects) for rec in generate_subject(cfg, s)]


def planted_truth(cfg: SynthConfig) -> list[dict]:
    """Machine-readable description of the planted class effects.

    Each entry names the effect, its focus channel and the channels with
    spatial weight above one half, the post-event window, the frequency band
    (``None`` for voltage deflections), the sign of the Error-minus-Correct
    change and its nominal amplitude.  Empty when ``snr`` is zero.
    """
    if cfg.snr == 0:
        return []
    names = cfg.channel_names
    amp = cfg.snr * NOISE_STD_UV
    out = []
    for comp in _components(cfg):
        w = spatial_weights(names, comp.foci, comp.spatial_sigma)
        out.append({
            "name": comp.name,
            "kind": "voltage",
            "foci": list(comp.foci),
            "channels": [n for n, wi in zip(names, w) if wi >= 0.5],
            "latency_ms": comp.latency_ms,
            "window_ms": [comp.latency_ms - 100.0, comp.latency_ms + 100.0],
            "band_hz": None,
            "sign": "positive" if comp.gain > 0 else "negative",
            "amplitude_uv": abs(comp.gain) * amp,
        })
    if cfg.paradigm is SynthParadigm.GUI_LIKE:
        w = spatial_weights(names, _ALPHA_FOCUS, _ALPHA_SIGMA)
        out.append({
            "name": "occipital_alpha_decrease",
            "kind": "band_power",
            "foci": [_ALPHA_FOCUS],
            "channels": [n for n, wi in zip(names, w) if wi >= 0.5 and n in OCCIPITAL],
            "latency_ms": None,
            "window_ms": list(_ALPHA_WINDOW_MS),
            "band_hz": list(ALPHA_BAND_HZ),
            "sign": "negative",
            "amplitude_uv": alpha_depth(cfg.snr) * _ALPHA_STD_UV,
        })
    return out
