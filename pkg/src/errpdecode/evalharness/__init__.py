"""Metrics, statistics and evaluation protocols.

The protocols and classifier specifications depend on the ConvNet trainer,
which itself uses the metrics here, so they are imported lazily.
"""

from .metrics import confusion_counts, normalized_accuracy, sem
from .stats import ZeroVarianceError, paired_t_test, pearson_r2

_LAZY = {
    "protocols": (
        "EvalReport", "FoldResult", "LeakageError", "Scheme", "check_disjoint",
        "cross_paradigm_eval", "draw_subsets", "fold_seed", "group_size_sweep",
        "leave_one_session_out_eval", "leave_one_subject_out_eval",
        "reconcile_channels", "sampling_rate_sweep", "within_subject_eval",
    ),
    "classifiers": ("ClassifierSpec", "ConstantClassifier", "ConvNetClassifier",
                    "RldaClassifier"),
}

__all__ = [
    "confusion_counts", "normalized_accuracy", "sem",
    "paired_t_test", "pearson_r2", "ZeroVarianceError",
    *(name for names in _LAZY.values() for name in names),
]


def __getattr__(name):
    import importlib

    for module, names in _LAZY.items():
        if name in names:
            return getattr(importlib.import_module(f"{__name__}.{module}"), name)
    raise AttributeError(f"module {__name__!r} has no attribute {name!r}")
