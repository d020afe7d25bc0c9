"""Evaluation protocols and the report they produce.

Every protocol accepts either a list of :class:`Recording` (prepared with the
classifier's preset) or an already prepared :class:`EpochSet`, builds its
folds, checks that no trial uid appears on both sides of a fold, trains one
model per fold with a seed derived from ``(seed, fold id)`` and collects the
per-fold normalized accuracies into an :class:`EvalReport`.
"""

from __future__ import annotations

import csv
import enum
import itertools
import json
import math
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from ..data_model import CORRECT, ERROR, EpochSet, Recording
from ..montage import MIDLINE_7
from .classifiers import ClassifierSpec
from .metrics import confusion_counts, normalized_accuracy, sem

REPORT_FORMAT = "errpdecode.evalreport/1"
DEFAULT_RATES = (1.25, 2.5, 5.0, 10.0, 25.0, 50.0, 100.0, 250.0)


class Scheme(str, enum.Enum):
    WITHIN_SUBJECT = "WithinSubject"
    LEAVE_ONE_SESSION_OUT = "LeaveOneSessionOut"
    LEAVE_ONE_SUBJECT_OUT = "LeaveOneSubjectOut"
    GROUP_SIZE_SWEEP = "GroupSizeSweep"
    SAMPLING_RATE_SWEEP = "SamplingRateSweep"
    CROSS_PARADIGM = "CrossParadigm"


class LeakageError(RuntimeError):
    """A fold's training and test sets share trials."""


@dataclass
class FoldResult:
    fold_id: str
    train_spec: dict
    test_spec: dict
    normalized_accuracy: float
    confusion: dict
    params: dict = field(default_factory=dict)

    @property
    def n_test(self) -> int:
        return sum(self.confusion.values())


@dataclass
class EvalReport:
    scheme: Scheme
    classifier: str
    folds: list[FoldResult]
    points: list[dict] = field(default_factory=list)
    config: dict = field(default_factory=dict)

    @property
    def accuracies(self) -> np.ndarray:
        return np.array([f.normalized_accuracy for f in self.folds])

    @property
    def summary(self) -> dict:
        acc = self.accuracies
        return {
            "mean": float(acc.mean()) if acc.size else None,
            "sem": sem(acc) if acc.size >= 2 else None,
            "n_folds": int(acc.size),
        }

    def to_dict(self) -> dict:
        return {
            "format": REPORT_FORMAT,
            "scheme": Scheme(self.scheme).value,
            "classifier": self.classifier,
            "summary": self.summary,
            "points": self.points,
            "folds": [asdict(f) for f in self.folds],
            "config": self.config,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "EvalReport":
        if d.get("format") != REPORT_FORMAT:
            raise ValueError(f"not an evaluation report (format {d.get('format')!r})")
        return cls(
            scheme=Scheme(d["scheme"]), classifier=d["classifier"],
            folds=[FoldResult(**f) for f in d["folds"]],
            points=list(d.get("points", [])), config=dict(d.get("config", {})),
        )

    def save(self, path) -> tuple[Path, Path]:
        """Write ``<path>.json`` and the one-row-per-fold ``<path>.csv``."""
        path = Path(path)
        stem = path.with_suffix("") if path.suffix in (".json", ".csv") else path
        json_path, csv_path = stem.with_suffix(".json"), stem.with_suffix(".csv")
        json_path.parent.mkdir(parents=True, exist_ok=True)
        json_path.write_text(json.dumps(self.to_dict(), indent=2) + "\n")
        with csv_path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["fold_id", "train_subjects", "train_sessions", "n_train",
                        "test_subjects", "test_sessions", "n_test",
                        "normalized_accuracy", "tp", "fn", "fp", "tn", "params"])
            for f in self.folds:
                w.writerow([
                    f.fold_id, ";".join(f.train_spec["subjects"]),
                    ";".join(f.train_spec["sessions"]), f.train_spec["n_trials"],
                    ";".join(f.test_spec["subjects"]), ";".join(f.test_spec["sessions"]),
                    f.test_spec["n_trials"], repr(f.normalized_accuracy),
                    f.confusion["tp"], f.confusion["fn"], f.confusion["fp"],
                    f.confusion["tn"], json.dumps(f.params, sort_keys=True),
                ])
        return json_path, csv_path

    @classmethod
    def load(cls, path) -> "EvalReport":
        path = Path(path)
        if path.suffix != ".json":
            path = path.with_suffix(".json")
        return cls.from_dict(json.loads(path.read_text()))


# --------------------------------------------------------------------------
# fold machinery

def fold_seed(seed: int, fold_id: str) -> int:
    """Seed for one fold; depends only on the master seed and the fold id."""
    ss = np.random.SeedSequence([int(seed), zlib.crc32(fold_id.encode())])
    return int(ss.generate_state(1)[0] & 0x7FFFFFFF)


def _describe(es: EpochSet) -> dict:
    def ordered(values):
        return list(dict.fromkeys(values.tolist()))
    return {
        "subjects": ordered(es.subject_ids),
        "sessions": ordered(np.char.add(np.char.add(es.subject_ids, "/"), es.session_ids)),
        "n_trials": int(es.n_trials),
    }


def check_disjoint(train: EpochSet, test: EpochSet, fold_id: str = "") -> None:
    shared = np.intersect1d(train.trial_uids, test.trial_uids)
    if shared.size:
        raise LeakageError(
            f"fold {fold_id!r}: {shared.size} trials in both train and test "
            f"(e.g. {shared[0]!r})"
        )


@dataclass
class _Task:
    fold_id: str
    train: EpochSet
    tests: list[tuple[str, EpochSet]]      # (fold id, test set) sharing one model
    params: dict


def _run_tasks(tasks: Sequence[_Task], spec: ClassifierSpec, seed: int,
               workers: int = 1, check: bool = True) -> list[FoldResult]:
    def run(task: _Task) -> list[FoldResult]:
        for fid, test in task.tests:
            if check:
                check_disjoint(task.train, test, fid)
        model = spec.fit(task.train, fold_seed(seed, task.fold_id))
        out = []
        for fid, test in task.tests:
            pred = spec.predict(model, test)
            out.append(FoldResult(
                fold_id=fid, train_spec=_describe(task.train), test_spec=_describe(test),
                normalized_accuracy=float(normalized_accuracy(test.labels, pred)),
                confusion=confusion_counts(test.labels, pred), params=dict(task.params),
            ))
        return out

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, tasks))
    else:
        results = [run(t) for t in tasks]
    return [f for group in results for f in group]


def _prepared(data, spec: ClassifierSpec) -> EpochSet:
    if isinstance(data, EpochSet):
        return data
    recs = list(data)
    if not recs or not all(isinstance(r, Recording) for r in recs):
        raise TypeError("expected an EpochSet or a non-empty list of Recordings")
    return spec.prepare(recs)


def _subjects(es: EpochSet) -> list[str]:
    return list(dict.fromkeys(es.subject_ids.tolist()))


def _require_both_classes(es: EpochSet, what: str) -> None:
    present = set(np.unique(es.labels).tolist())
    if not {CORRECT, ERROR} <= present:
        raise ValueError(f"{what} lacks one of the two classes")


def _point(values, **params) -> dict:
    v = np.asarray(values, dtype=np.float64)
    return {**params, "mean": float(v.mean()),
            "sem": sem(v) if v.size >= 2 else None, "n": int(v.size)}


# --------------------------------------------------------------------------
# protocols

def within_subject_eval(data, spec: ClassifierSpec, *, test_fraction: float = 0.2,
                        seed: int = 0, workers: int = 1) -> EvalReport:
    """Per subject: train on the chronologically first trials, test on the
    last ``test_fraction`` of them."""
    if not 0.0 < test_fraction < 1.0:
        raise ValueError("test_fraction must lie in (0, 1)")
    es = _prepared(data, spec)
    tasks = []
    for subj in _subjects(es):
        idx = np.flatnonzero(es.subject_ids == subj)
        n_test = min(max(int(round(idx.size * test_fraction)), 1), idx.size - 1)
        train, test = es.subset(idx[:-n_test]), es.subset(idx[-n_test:])
        _require_both_classes(test, f"test split of subject {subj}")
        _require_both_classes(train, f"training split of subject {subj}")
        tasks.append(_Task(subj, train, [(subj, test)], {"subject": subj}))
    folds = _run_tasks(tasks, spec, seed, workers)
    return EvalReport(Scheme.WITHIN_SUBJECT, spec.tag, folds,
                      config={"test_fraction": test_fraction, "seed": seed,
                              "classifier": spec.describe()})


def leave_one_session_out_eval(data, spec: ClassifierSpec, *, seed: int = 0,
                               workers: int = 1) -> EvalReport:
    """One fold per (subject, session): test on it, train on that subject's
    other sessions."""
    es = _prepared(data, spec)
    tasks = []
    for subj in _subjects(es):
        in_subj = es.subject_ids == subj
        sessions = list(dict.fromkeys(es.session_ids[in_subj].tolist()))
        if len(sessions) < 2:
            raise ValueError(f"subject {subj} has {len(sessions)} session(s); need >= 2")
        for sess in sessions:
            is_test = in_subj & (es.session_ids == sess)
            fid = f"{subj}/{sess}"
            tasks.append(_Task(fid, es.subset(in_subj & ~is_test),
                               [(fid, es.subset(is_test))],
                               {"subject": subj, "test_session": sess}))
    folds = _run_tasks(tasks, spec, seed, workers)
    return EvalReport(Scheme.LEAVE_ONE_SESSION_OUT, spec.tag, folds,
                      config={"seed": seed, "classifier": spec.describe()})


def _loso_tasks(es: EpochSet, extra: dict | None = None, prefix: str = "") -> list[_Task]:
    subjects = _subjects(es)
    if len(subjects) < 2:
        raise ValueError(f"leave-one-subject-out needs >= 2 subjects, got {len(subjects)}")
    tasks = []
    for subj in subjects:
        is_test = es.subject_ids == subj
        fid = f"{prefix}{subj}"
        tasks.append(_Task(fid, es.subset(~is_test), [(fid, es.subset(is_test))],
                           {"test_subject": subj, **(extra or {})}))
    return tasks


def leave_one_subject_out_eval(data, spec: ClassifierSpec, *, seed: int = 0,
                               workers: int = 1) -> EvalReport:
    """One fold per subject; training pools all trials of the others."""
    es = _prepared(data, spec)
    folds = _run_tasks(_loso_tasks(es), spec, seed, workers)
    return EvalReport(Scheme.LEAVE_ONE_SUBJECT_OUT, spec.tag, folds,
                      config={"seed": seed, "classifier": spec.describe()})


def draw_subsets(pool: Sequence[str], m: int, k: int, rng: np.random.Generator) -> list[tuple[str, ...]]:
    """``k`` distinct size-``m`` subsets of ``pool`` (all of them if fewer exist)."""
    pool = list(pool)
    if math.comb(len(pool), m) <= k:
        return list(itertools.combinations(pool, m))
    seen: dict[tuple[str, ...], None] = {}
    while len(seen) < k:
        pick = rng.choice(len(pool), size=m, replace=False)
        seen.setdefault(tuple(pool[i] for i in sorted(pick)), None)
    return list(seen)


def group_size_sweep(data, spec: ClassifierSpec, m_values: Sequence[int], *,
                     k_draws: int = 5, seed: int = 0, workers: int = 1) -> EvalReport:
    """For each held-out subject and group size ``m``, train on ``k_draws``
    random size-``m`` subsets of the remaining subjects.

    Points report, per ``m``, the mean and SEM across held-out subjects of
    the draw-averaged accuracy.
    """
    es = _prepared(data, spec)
    subjects = _subjects(es)
    m_values = [int(m) for m in m_values]
    for m in m_values:
        if not 1 <= m < len(subjects):
            raise ValueError(f"group size {m} must lie in [1, {len(subjects) - 1}]")
    if k_draws < 1:
        raise ValueError("k_draws must be positive")
    tasks = []
    for held in subjects:
        others = [s for s in subjects if s != held]
        test = es.subset(es.subject_ids == held)
        for m in m_values:
            rng = np.random.default_rng(fold_seed(seed, f"draws/{held}/m{m}"))
            for j, group in enumerate(draw_subsets(others, m, k_draws, rng)):
                fid = f"{held}/m{m}/d{j}"
                train = es.subset(np.isin(es.subject_ids, group))
                tasks.append(_Task(fid, train, [(fid, test)],
                                   {"test_subject": held, "m": m, "draw": j,
                                    "train_subjects": list(group)}))
    folds = _run_tasks(tasks, spec, seed, workers)
    points = []
    for m in m_values:
        per_subject = [
            np.mean([f.normalized_accuracy for f in folds
                     if f.params["m"] == m and f.params["test_subject"] == held])
            for held in subjects
        ]
        points.append(_point(per_subject, m=m))
    return EvalReport(Scheme.GROUP_SIZE_SWEEP, spec.tag, folds, points,
                      config={"m_values": m_values, "k_draws": k_draws, "seed": seed,
                              "classifier": spec.describe()})


def sampling_rate_sweep(recordings: Sequence[Recording], spec: ClassifierSpec,
                        rates: Sequence[float] = DEFAULT_RATES,
                        channel_sets: Mapping[str, Sequence[str] | None] | None = None, *,
                        seed: int = 0, workers: int = 1) -> EvalReport:
    """Leave-one-subject-out at every (rate, channel set) pair.

    ``channel_sets`` maps a label to channel names (``None`` = all channels);
    by default the classifier's own selection is used.
    """
    recordings = list(recordings)
    native = min(r.sample_rate_hz for r in recordings)
    rates = [float(r) for r in rates]
    for r in rates:
        if not 0.0 < r <= native:
            raise ValueError(f"invalid sampling rate {r} Hz (native rate {native} Hz)")
    if channel_sets is None:
        channel_sets = {"preset": spec.preset.channels}
    folds, points = [], []
    for rate in rates:
        for label, chans in channel_sets.items():
            variant = spec.with_preprocessing(sample_rate_hz=rate, channels=chans)
            es = variant.prepare(recordings)
            tasks = _loso_tasks(es, {"rate_hz": rate, "channel_set": label},
                                prefix=f"{rate:g}Hz/{label}/")
            got = _run_tasks(tasks, variant, seed, workers)
            folds.extend(got)
            points.append(_point([f.normalized_accuracy for f in got],
                                 rate_hz=rate, channel_set=label))
    return EvalReport(Scheme.SAMPLING_RATE_SWEEP, spec.tag, folds, points,
                      config={"rates": rates,
                              "channel_sets": {k: None if v is None else list(v)
                                               for k, v in channel_sets.items()},
                              "seed": seed, "classifier": spec.describe()})


def reconcile_channels(a: Sequence[str], b: Sequence[str], mode: str = "intersection") -> tuple[str, ...]:
    """Channels usable by both datasets: names common to both (in ``a``'s
    order) or the 7 midline channels."""
    if mode == "intersection":
        common = tuple(n for n in a if n in set(b))
    elif mode == "midline7":
        missing = [n for n in MIDLINE_7 if n not in a or n not in b]
        if missing:
            raise ValueError(f"midline channels missing from a dataset: {missing}")
        common = MIDLINE_7
    else:
        raise ValueError(f"unknown channel reconciliation {mode!r}")
    if not common:
        raise ValueError("the two datasets share no channels")
    return common


def cross_paradigm_eval(recordings_a: Sequence[Recording], recordings_b: Sequence[Recording],
                        spec: ClassifierSpec, *, channels: str = "intersection",
                        seed: int = 0, allow_overlap: bool = False,
                        workers: int = 1) -> EvalReport:
    """Train on all of one dataset, test on every subject of the other, in
    both directions.

    ``allow_overlap`` disables the trial-uid guard; it exists only for the
    degenerate identity transfer (a dataset evaluated against itself).
    """
    recs_a, recs_b = list(recordings_a), list(recordings_b)
    names = reconcile_channels(recs_a[0].channel_names, recs_b[0].channel_names, channels)
    for r in recs_a + recs_b:
        if not set(names) <= set(r.channel_names):
            raise ValueError(f"recording {r.subject_id}/{r.session_id} lacks shared channels")
    variant = spec.with_preprocessing(channels=names)
    es_a, es_b = variant.prepare(recs_a), variant.prepare(recs_b)
    tasks = []
    for direction, train, test in (("A->B", es_a, es_b), ("B->A", es_b, es_a)):
        tests = [(f"{direction}/{s}", test.subset(test.subject_ids == s))
                 for s in _subjects(test)]
        tasks.append(_Task(direction, train, tests, {"direction": direction}))
    folds = _run_tasks(tasks, variant, seed, workers, check=not allow_overlap)
    points = [_point([f.normalized_accuracy for f in folds
                      if f.params["direction"] == d], direction=d)
              for d in ("A->B", "B->A")]
    return EvalReport(Scheme.CROSS_PARADIGM, spec.tag, folds, points,
                      config={"channels": channels, "channel_names": list(names),
                              "seed": seed, "classifier": variant.describe()})
