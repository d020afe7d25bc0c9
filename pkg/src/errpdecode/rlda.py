"""Shrinkage-regularized linear discriminant analysis on voltage features."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import linalg

from .data_model import CORRECT, ERROR, EpochSet

RLDA_FORMAT = "errpdecode.rlda/1"


class SingularCovarianceError(np.linalg.LinAlgError):
    """The shrunk covariance could not be factorized."""


@dataclass(frozen=True)
class FeatureSpec:
    channel_names: tuple[str, ...]
    sample_rate_hz: float
    window_ms: tuple[float, float]
    n_samples: int

    @property
    def n_features(self) -> int:
        return len(self.channel_names) * self.n_samples

    @classmethod
    def of(cls, es: EpochSet) -> "FeatureSpec":
        return cls(tuple(es.channel_names), float(es.sample_rate_hz),
                   tuple(es.window_ms), es.n_samples)


@dataclass(frozen=True, eq=False)
class RldaModel:
    weights: np.ndarray
    bias: float
    shrinkage: float
    feature_spec: FeatureSpec | None = None

    def __post_init__(self):
        if not 0.0 <= self.shrinkage <= 1.0:
            raise ValueError("shrinkage must lie in [0, 1]")
        w = np.array(self.weights, dtype=np.float64)
        if w.ndim != 1:
            raise ValueError("weights must be a vector")
        if self.feature_spec is not None and w.size != self.feature_spec.n_features:
            raise ValueError("weights length differs from the feature specification")
        w.flags.writeable = False
        object.__setattr__(self, "weights", w)


def flatten_features(es: EpochSet) -> np.ndarray:
    """Rows are trials, channel-major: channel 0's samples come first."""
    if es.n_trials == 0:
        raise ValueError("empty epoch set")
    return np.asarray(es.trials, dtype=np.float64).reshape(es.n_trials, -1)


def unflatten_features(X: np.ndarray, n_channels: int) -> np.ndarray:
    X = np.asarray(X)
    return X.reshape(X.shape[0], n_channels, -1)


def _shrinkage_stats(Xc: np.ndarray):
    """Shrinkage intensity and identity scale for already-centered data.

    Returns (rho, m, S) where S is None when p > n (the Gram route is used
    and the p x p covariance never materializes).
    """
    n, p = Xc.shape
    sq_norms = np.einsum("ij,ij->i", Xc, Xc)
    if p <= n:
        S = Xc.T @ Xc / n
        m = np.trace(S) / p
        d2 = np.sum((S - m * np.eye(p)) ** 2) / p
        s_fro2 = np.sum(S * S)
    else:
        S = None
        G = Xc @ Xc.T
        m = np.trace(G) / (n * p)
        s_fro2 = np.sum(G * G) / n**2
        d2 = max(s_fro2 / p - m * m, 0.0)
    # sum_k ||x_k x_k^T - S||_F^2 = sum_k ||x_k||^4 - n ||S||_F^2
    b_bar2 = max(np.sum(sq_norms**2) - n * s_fro2, 0.0) / (n**2 * p)
    if d2 == 0.0:
        return 0.0, m, S
    return float(min(b_bar2, d2) / d2), m, S


def ledoit_wolf(X: np.ndarray) -> tuple[np.ndarray, float]:
    """Ledoit-Wolf shrunk covariance ``(1 - rho) S + rho m I`` and rho."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 2:
        raise ValueError("ledoit_wolf needs a 2-D array with at least 2 samples")
    Xc = X - X.mean(axis=0)
    p = Xc.shape[1]
    rho, m, S = _shrinkage_stats(Xc)
    if S is None:
        S = Xc.T @ Xc / Xc.shape[0]
    cov = (1.0 - rho) * S + rho * m * np.eye(p)
    return cov, rho


def _solve_shrunk(Xc: np.ndarray, rho: float, m: float, S, v: np.ndarray) -> np.ndarray:
    n, p = Xc.shape
    if S is not None:
        cov = (1.0 - rho) * S + rho * m * np.eye(p)
        try:
            factor = linalg.cho_factor(cov, lower=True, check_finite=True)
        except linalg.LinAlgError as exc:
            raise SingularCovarianceError(f"shrunk covariance is singular: {exc}") from None
        diag = np.abs(np.diag(factor[0]))
        if diag.min() ** 2 <= 1e-14 * diag.max() ** 2:
            raise SingularCovarianceError("shrunk covariance is numerically singular")
        return linalg.cho_solve(factor, v)
    # Woodbury route for p > n: cov = a I + c Xc^T Xc
    a = rho * m
    c = (1.0 - rho) / n
    if not a > 0.0:
        raise SingularCovarianceError("shrunk covariance is singular (p > n without shrinkage)")
    if c == 0.0:
        return v / a
    inner = (a / c) * np.eye(n) + Xc @ Xc.T
    try:
        factor = linalg.cho_factor(inner, lower=True)
    except linalg.LinAlgError as exc:
        raise SingularCovarianceError(f"shrunk covariance is singular: {exc}") from None
    return (v - Xc.T @ linalg.cho_solve(factor, Xc @ v)) / a


def rlda_train(X: np.ndarray, y: np.ndarray, *, priors: str = "equal",
               feature_spec: FeatureSpec | None = None,
               shrinkage: float | None = None) -> RldaModel:
    """Fit the discriminant ``w = inv(cov) (mu_err - mu_corr)``.

    The pooled within-class scatter is shrunk with the Ledoit-Wolf intensity
    unless ``shrinkage`` fixes it.  With ``priors="equal"`` the bias places
    the boundary halfway between the class means; ``"empirical"`` adds the
    log prior ratio.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise ValueError("X must be (n, p) with one label per row")
    is_err = y == ERROR
    n_err = int(is_err.sum())
    n_corr = int((y == CORRECT).sum())
    if n_err == 0 or n_corr == 0:
        raise ValueError("rlda_train needs both classes in the training data")
    if n_err + n_corr != y.size:
        raise ValueError("labels must be 0 (Correct) or 1 (Error)")
    mu_err = X[is_err].mean(axis=0)
    mu_corr = X[~is_err].mean(axis=0)
    Xc = np.where(is_err[:, None], X - mu_err, X - mu_corr)
    rho, m, S = _shrinkage_stats(Xc)
    if shrinkage is not None:
        rho = float(shrinkage)
    w = _solve_shrunk(Xc, rho, m, S, mu_err - mu_corr)
    b = -float(w @ (mu_err + mu_corr)) / 2.0
    if priors == "empirical":
        b += float(np.log(n_err / n_corr))
    elif priors != "equal":
        raise ValueError(f"unknown priors {priors!r}")
    return RldaModel(weights=w, bias=b, shrinkage=min(max(rho, 0.0), 1.0),
                     feature_spec=feature_spec)


def rlda_predict(model: RldaModel, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Labels (1 = Error iff score > 0, ties go to Correct) and scores."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != model.weights.size:
        raise ValueError(
            f"feature dimension {X.shape[-1]} does not match model ({model.weights.size})"
        )
    scores = X @ model.weights + model.bias
    return (scores > 0).astype(np.int8), scores


def save_rlda(model: RldaModel, path) -> None:
    stem = Path(path)
    stem = stem.with_suffix("") if stem.suffix == ".json" else stem
    stem.parent.mkdir(parents=True, exist_ok=True)
    spec = model.feature_spec
    header = {
        "format": RLDA_FORMAT,
        "bias": model.bias,
        "shrinkage": model.shrinkage,
        "n_features": int(model.weights.size),
        "feature_spec": None if spec is None else {
            "channel_names": list(spec.channel_names),
            "sample_rate_hz": spec.sample_rate_hz,
            "window_ms": list(spec.window_ms),
            "n_samples": spec.n_samples,
        },
    }
    (stem.parent / (stem.name + ".json")).write_text(json.dumps(header, indent=2))
    (stem.parent / (stem.name + ".bin")).write_bytes(model.weights.astype("<f8").tobytes())


def load_rlda(path) -> RldaModel:
    stem = Path(path)
    stem = stem.with_suffix("") if stem.suffix == ".json" else stem
    header = json.loads((stem.parent / (stem.name + ".json")).read_text())
    if header.get("format") != RLDA_FORMAT:
        raise ValueError(f"{stem}: not an rLDA model file")
    raw = (stem.parent / (stem.name + ".bin")).read_bytes()
    if len(raw) != 8 * header["n_features"]:
        raise ValueError(f"{stem}: weight payload length mismatch")
    fs = header["feature_spec"]
    spec = None if fs is None else FeatureSpec(
        tuple(fs["channel_names"]), float(fs["sample_rate_hz"]),
        tuple(fs["window_ms"]), int(fs["n_samples"]),
    )
    return RldaModel(weights=np.frombuffer(raw, dtype="<f8"), bias=float(header["bias"]),
                     shrinkage=float(header["shrinkage"]), feature_spec=spec)
