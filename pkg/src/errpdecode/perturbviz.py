"""Input-perturbation network-prediction correlation maps.

Random perturbations are injected into the (already standardized) input
trials and correlated, across trials, with the resulting change of the
model's pre-softmax Error-unit output.  Two flavours:

* time domain: additive Gaussian noise; the per-(channel, time bin) mean of
  the injected noise is the perturbation variable;
* frequency domain: the Fourier amplitudes of a post-event segment are scaled
  per (channel, band) by ``exp(g / 2)`` (a log-power offset ``g``) with the
  phases kept; ``g`` is the perturbation variable.

Each iteration draws its perturbations from ``SeedSequence([seed, iteration])``
so iterations are independent and may be run in any order.
"""

from __future__ import annotations

import csv
import enum
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

from .data_model import EpochSet
from .montage import MONTAGE, UnknownChannelError

ERROR_UNIT = 1

DEFAULT_BANDS: tuple[tuple[str, float, float], ...] = (
    ("delta", 0.5, 4.0),
    ("theta", 4.0, 8.0),
    ("alpha", 8.0, 12.0),
    ("low_beta", 12.0, 20.0),
    ("high_beta", 20.0, 30.0),
    ("low_gamma", 30.0, 48.0),
)


@dataclass(frozen=True)
class PerturbConfig:
    n_iterations: int = 30
    noise_scale: float = 0.5
    time_bin_ms: float = 125.0
    bands: tuple[tuple[str, float, float], ...] = DEFAULT_BANDS
    analysis_window_ms: tuple[float, float] = (50.0, 750.0)
    pooled: bool = False
    seed: int = 0

    def __post_init__(self):
        bands = tuple((str(n), float(lo), float(hi)) for n, lo, hi in self.bands)
        object.__setattr__(self, "bands", bands)
        object.__setattr__(self, "analysis_window_ms",
                           tuple(float(v) for v in self.analysis_window_ms))
        if self.n_iterations < 1:
            raise ValueError("n_iterations must be positive")
        if not self.noise_scale > 0:
            raise ValueError("noise_scale must be positive")
        if not self.time_bin_ms > 0:
            raise ValueError("time_bin_ms must be positive")
        if not bands:
            raise ValueError("at least one band is required")
        prev_hi = 0.0
        for name, lo, hi in sorted(bands, key=lambda b: b[1]):
            if not 0.0 < lo < hi:
                raise ValueError(f"band {name!r} must satisfy 0 < low < high")
            if lo < prev_hi:
                raise ValueError(f"band {name!r} overlaps its neighbour")
            prev_hi = hi
        start, end = self.analysis_window_ms
        if not start < end:
            raise ValueError("analysis window start must precede its end")


class MapAxis(str, enum.Enum):
    TIME_BINS = "TimeBins"
    FREQUENCY_BANDS = "FrequencyBands"


@dataclass(frozen=True)
class CorrelationMap:
    axis: MapAxis
    values: np.ndarray              # (channels, bins)
    channel_names: tuple[str, ...]
    bin_labels: tuple[str, ...]
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        object.__setattr__(self, "axis", MapAxis(self.axis))
        object.__setattr__(self, "channel_names", tuple(self.channel_names))
        object.__setattr__(self, "bin_labels", tuple(self.bin_labels))
        if values.shape != (len(self.channel_names), len(self.bin_labels)):
            raise ValueError(
                f"map values {values.shape} do not match "
                f"{len(self.channel_names)} channels x {len(self.bin_labels)} bins"
            )
        if np.isnan(values).any() or np.abs(values).max(initial=0.0) > 1.0 + 1e-12:
            raise ValueError("correlations must lie in [-1, 1]")
        values = np.clip(values, -1.0, 1.0)
        values.flags.writeable = False
        object.__setattr__(self, "values", values)

    @property
    def max_abs(self) -> np.ndarray:
        """Per-bin maximum |r| over channels."""
        return np.abs(self.values).max(axis=0)

    def top_cells(self, k: int = 1) -> list[tuple[str, str, float]]:
        """The ``k`` (channel, bin label, r) cells with the largest |r|."""
        order = np.argsort(-np.abs(self.values), axis=None, kind="stable")[:k]
        rows, cols = np.unravel_index(order, self.values.shape)
        return [(self.channel_names[i], self.bin_labels[j], float(self.values[i, j]))
                for i, j in zip(rows, cols)]


# --------------------------------------------------------------------------

def _output_fn(model) -> Callable[[np.ndarray], np.ndarray]:
    if callable(getattr(model, "penultimate_output", None)):
        return model.penultimate_output
    from .convnet.model import ConvNetModel, penultimate_output

    if isinstance(model, ConvNetModel):
        return lambda batch: penultimate_output(model, batch)
    raise TypeError("model must expose penultimate_output(batch)")


def _check_inputs(model, es: EpochSet) -> None:
    shape = getattr(model, "input_shape", None)
    if shape is not None and tuple(shape) != (es.n_channels, es.n_samples):
        raise ValueError(
            f"model expects {tuple(shape)} (channels, samples), epochs are "
            f"{(es.n_channels, es.n_samples)}"
        )
    if es.n_trials < 3:
        raise ValueError("correlation maps need at least 3 trials")


def _iteration_rng(seed: int, iteration: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(iteration)]))


def _corr_columns(P: np.ndarray, d: np.ndarray) -> np.ndarray:
    """Pearson r of each column ``P[:, ...]`` with ``d`` across trials (axis 0).

    A constant ``d`` (or a constant column) correlates with nothing: r = 0.
    """
    Pc = P - P.mean(axis=0)
    dc = d - d.mean()
    num = np.tensordot(dc, Pc, axes=(0, 0))
    den = np.sqrt((Pc**2).sum(axis=0) * (dc @ dc))
    scale = np.abs(dc).max(initial=0.0)
    # differences at rounding level of the outputs count as no change
    if scale <= 1e-12 * max(1.0, float(np.abs(d).max(initial=0.0))):
        return np.zeros(P.shape[1:])
    with np.errstate(invalid="ignore", divide="ignore"):
        r = np.where(den > 0, num / np.where(den > 0, den, 1.0), 0.0)
    return np.clip(r, -1.0, 1.0)


def _combine(per_iter_P, per_iter_d, pooled: bool) -> np.ndarray:
    if pooled:
        return _corr_columns(np.concatenate(per_iter_P), np.concatenate(per_iter_d))
    return np.mean([_corr_columns(P, d) for P, d in zip(per_iter_P, per_iter_d)], axis=0)


def time_bins(es: EpochSet, bin_ms: float) -> tuple[list[tuple[int, int]], list[str]]:
    """Sample ranges and labels of consecutive ``bin_ms`` bins over the epoch;
    the last bin is truncated at the epoch end."""
    start, end = es.window_ms
    n_bins = math.ceil((end - start) / bin_ms - 1e-9)
    fs = es.sample_rate_hz
    ranges, labels = [], []
    for b in range(n_bins):
        lo_ms = start + b * bin_ms
        hi_ms = min(lo_ms + bin_ms, end)
        lo = int(round((lo_ms - start) / 1000.0 * fs))
        hi = min(int(round((hi_ms - start) / 1000.0 * fs)), es.n_samples)
        ranges.append((lo, max(hi, lo + 1)))
        labels.append(f"{lo_ms:g}..{hi_ms:g}ms")
    return ranges, labels


def time_domain_map(model, es: EpochSet, cfg: PerturbConfig = PerturbConfig()) -> CorrelationMap:
    """Correlation of the per-bin mean additive noise with the Error-unit change."""
    _check_inputs(model, es)
    out = _output_fn(model)
    x = np.asarray(es.trials, dtype=np.float64)
    base = out(x)[:, ERROR_UNIT]
    ch_std = x.std(axis=(0, 2))
    ranges, labels = time_bins(es, cfg.time_bin_ms)
    Ps, ds = [], []
    for it in range(cfg.n_iterations):
        rng = _iteration_rng(cfg.seed, it)
        noise = rng.standard_normal(x.shape) * (cfg.noise_scale * ch_std)[None, :, None]
        delta = out(x + noise)[:, ERROR_UNIT] - base
        P = np.stack([noise[:, :, lo:hi].mean(axis=2) for lo, hi in ranges], axis=2)
        Ps.append(P)
        ds.append(delta)
    values = _combine(Ps, ds, cfg.pooled)
    return CorrelationMap(MapAxis.TIME_BINS, values, es.channel_names, labels,
                          meta={"n_iterations": cfg.n_iterations,
                                "noise_scale": cfg.noise_scale, "seed": cfg.seed,
                                "pooled": cfg.pooled, "bin_ms": cfg.time_bin_ms})


def analysis_segment(es: EpochSet, window_ms: tuple[float, float]) -> tuple[int, int]:
    start, end = es.window_ms
    lo_ms, hi_ms = window_ms
    if lo_ms < start or hi_ms > end:
        raise ValueError(f"analysis window {window_ms} ms outside epoch {es.window_ms} ms")
    fs = es.sample_rate_hz
    lo = int(round((lo_ms - start) / 1000.0 * fs))
    hi = int(round((hi_ms - start) / 1000.0 * fs))
    if hi - lo < 2:
        raise ValueError("analysis window shorter than two samples")
    return lo, hi


def band_bins(n: int, sample_rate_hz: float,
              bands: Sequence[tuple[str, float, float]]) -> np.ndarray:
    """Band index of each rfft bin of an ``n``-sample segment (-1 = no band)."""
    f = np.fft.rfftfreq(n, 1.0 / sample_rate_hz)
    which = np.full(f.size, -1)
    for b, (_, lo, hi) in enumerate(bands):
        which[(f >= lo) & (f < hi)] = b
    return which


def scale_band_amplitudes(x: np.ndarray, sample_rate_hz: float,
                          bands: Sequence[tuple[str, float, float]],
                          log_power: np.ndarray) -> np.ndarray:
    """Multiply the Fourier amplitudes of ``x`` (..., n) in each band by
    ``exp(log_power[..., band] / 2)``, phases unchanged.

    Bins outside every band are untouched.
    """
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[-1]
    which = band_bins(n, sample_rate_hz, bands)
    factors = np.ones(x.shape[:-1] + (which.size,))
    inside = which >= 0
    factors[..., inside] = np.exp(np.asarray(log_power)[..., which[inside]] / 2.0)
    return np.fft.irfft(np.fft.rfft(x, axis=-1) * factors, n=n, axis=-1)


def frequency_domain_map(model, es: EpochSet, cfg: PerturbConfig = PerturbConfig()) -> CorrelationMap:
    """Correlation of per-band log-power offsets with the Error-unit change."""
    _check_inputs(model, es)
    nyquist = es.sample_rate_hz / 2.0
    for name, lo, hi in cfg.bands:
        if hi > nyquist:
            raise ValueError(f"band {name!r} ({lo}-{hi} Hz) exceeds Nyquist ({nyquist} Hz)")
    lo, hi = analysis_segment(es, cfg.analysis_window_ms)
    which = band_bins(hi - lo, es.sample_rate_hz, cfg.bands)
    empty = [cfg.bands[b][0] for b in range(len(cfg.bands)) if not (which == b).any()]
    if empty:
        raise ValueError(f"bands {empty} contain no frequency bin of the analysis window")
    out = _output_fn(model)
    x = np.asarray(es.trials, dtype=np.float64)
    base = out(x)[:, ERROR_UNIT]
    Gs, ds = [], []
    for it in range(cfg.n_iterations):
        rng = _iteration_rng(cfg.seed, it)
        g = rng.normal(0.0, cfg.noise_scale, size=(es.n_trials, es.n_channels, len(cfg.bands)))
        xp = x.copy()
        xp[:, :, lo:hi] = scale_band_amplitudes(x[:, :, lo:hi], es.sample_rate_hz, cfg.bands, g)
        Gs.append(g)
        ds.append(out(xp)[:, ERROR_UNIT] - base)
    values = _combine(Gs, ds, cfg.pooled)
    labels = [f"{name} {lo_hz:g}-{hi_hz:g}Hz" for name, lo_hz, hi_hz in cfg.bands]
    return CorrelationMap(MapAxis.FREQUENCY_BANDS, values, es.channel_names, labels,
                          meta={"n_iterations": cfg.n_iterations,
                                "noise_scale": cfg.noise_scale, "seed": cfg.seed,
                                "pooled": cfg.pooled,
                                "analysis_window_ms": list(cfg.analysis_window_ms)})


def export_topomap(cmap: CorrelationMap, path,
                   montage: Mapping[str, tuple[float, float]] = MONTAGE) -> tuple[Path, Path]:
    """Write ``<path>.csv`` (channel, x, y, bin_label, correlation) and a
    ``<path>.json`` sidecar holding the per-bin maximum |r|."""
    missing = [n for n in cmap.channel_names if n not in montage]
    if missing:
        raise UnknownChannelError(f"channels missing from montage: {missing}")
    path = Path(path)
    stem = path.with_suffix("") if path.suffix in (".csv", ".json") else path
    csv_path, json_path = stem.with_suffix(".csv"), stem.with_suffix(".json")
    csv_path.parent.mkdir(parents=True, exist_ok=True)
    with csv_path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["channel", "x", "y", "bin_label", "correlation"])
        for i, ch in enumerate(cmap.channel_names):
            x, y = montage[ch]
            for j, label in enumerate(cmap.bin_labels):
                w.writerow([ch, f"{x:.6f}", f"{y:.6f}", label, f"{cmap.values[i, j]:.9f}"])
    sidecar = {
        "axis": cmap.axis.value,
        "channels": list(cmap.channel_names),
        "bins": [{"label": label, "max_abs_r": float(m)}
                 for label, m in zip(cmap.bin_labels, cmap.max_abs)],
        "meta": cmap.meta,
    }
    json_path.write_text(json.dumps(sidecar, indent=2) + "\n")
    return csv_path, json_path


def read_topomap(path) -> CorrelationMap:
    """Rebuild a map from the CSV/JSON pair written by :func:`export_topomap`."""
    path = Path(path)
    stem = path.with_suffix("") if path.suffix in (".csv", ".json") else path
    side = json.loads(stem.with_suffix(".json").read_text())
    channels = side["channels"]
    labels = [b["label"] for b in side["bins"]]
    values = np.zeros((len(channels), len(labels)))
    ci = {c: i for i, c in enumerate(channels)}
    bi = {b: j for j, b in enumerate(labels)}
    with stem.with_suffix(".csv").open(newline="") as fh:
        for row in csv.DictReader(fh):
            values[ci[row["channel"]], bi[row["bin_label"]]] = float(row["correlation"])
    return CorrelationMap(MapAxis(side["axis"]), values, channels, labels, side.get("meta", {}))
