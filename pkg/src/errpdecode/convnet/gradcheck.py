"""Central finite-difference check of the analytic ConvNet gradients."""

from __future__ import annotations

import numpy as np

from .model import ConvNetModel
from .train import loss_and_grads


def _same_branches(a: list, b: list) -> bool:
    return len(a) == len(b) and all(np.array_equal(x, y) for x, y in zip(a, b))


def gradient_check(model: ConvNetModel, batch: np.ndarray, labels: np.ndarray, *,
                   n_params: int = 200, h: float = 1e-3, seed: int = 0,
                   mode: str = "train", class_weights=None,
                   skip_kinks: bool = True, return_details: bool = False):
    """Max relative error ``|ga - gn| / max(|ga|, |gn|, 1e-8)`` between the
    analytic gradient and central differences of the cross-entropy loss.

    The model is evaluated in 64-bit.  In train mode the dropout masks come
    from a generator re-seeded identically for every evaluation, so the
    perturbed losses see the same masks as the analytic pass.

    Coordinates are drawn at random until ``n_params`` have been compared
    (all of them if the model is smaller).  With ``skip_kinks`` a coordinate
    whose +h / -h evaluations take a different max-pool or ELU branch than the
    unperturbed pass is set aside, since the difference quotient then spans a
    point where the loss is not differentiable; those are counted in the
    details.

    A coordinate whose analytic and numeric values both lie below the
    round-off resolution of the difference quotient, ``8 eps |loss| / h``, is
    counted as unresolved rather than compared (e.g. a bias that batch
    normalization cancels has an exactly zero gradient, and the quotient
    returns pure round-off there).  Any analytic value above that
    resolution is compared normally, so a spurious gradient is still caught.
    """
    model = model.copy(dtype=np.float64)
    batch = np.asarray(batch, dtype=np.float64)
    training = mode == "train"
    drop_seed = seed + 1

    def evaluate(trace=None):
        rng = np.random.default_rng(drop_seed)
        return loss_and_grads(model, batch, labels, class_weights, training=training,
                              rng=rng, trace=trace)

    base_trace: list = []
    _, grads = evaluate(base_trace)
    names = list(model.params)
    sizes = np.array([model.params[k].size for k in names])
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    order = np.random.default_rng(seed).permutation(int(offsets[-1]))

    worst = 0.0
    checked = skipped = unresolved = 0
    eps = np.finfo(np.float64).eps
    for fid in order:
        if checked >= n_params:
            break
        which = int(np.searchsorted(offsets, fid, side="right") - 1)
        name = names[which]
        flat = model.params[name].reshape(-1)
        j = fid - offsets[which]
        orig = flat[j]
        trace_plus: list = []
        trace_minus: list = []
        flat[j] = orig + h
        plus, _ = evaluate(trace_plus)
        flat[j] = orig - h
        minus, _ = evaluate(trace_minus)
        flat[j] = orig
        if skip_kinks and not (_same_branches(base_trace, trace_plus)
                               and _same_branches(base_trace, trace_minus)):
            skipped += 1
            continue
        numeric = (plus - minus) / (2.0 * h)
        analytic = grads[name].reshape(-1)[j]
        resolution = 8.0 * eps * max(abs(plus), abs(minus)) / h
        if max(abs(analytic), abs(numeric)) <= resolution:
            unresolved += 1
            continue
        err = abs(analytic - numeric) / max(abs(analytic), abs(numeric), 1e-8)
        worst = max(worst, err)
        checked += 1
    if return_details:
        return float(worst), {"checked": checked, "skipped_kinks": skipped,
                              "unresolved": unresolved}
    return float(worst)
