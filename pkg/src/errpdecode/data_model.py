"""Core data containers and their on-disk interchange formats.

Recording files (``<stem>`` is the path with any ``.json`` suffix removed)::

    <stem>.json        header: format, subject_id, session_id, paradigm,
                       sample_rate_hz, channel_names, n_samples
    <stem>.bin         little-endian float32, channel-major
                       (n_channels * n_samples * 4 bytes)
    <stem>.events.csv  sample_index,label,kind

EpochSet files::

    <stem>.json        header: format, n_trials, n_channels, n_samples,
                       window_ms, sample_rate_hz, channel_names
    <stem>.bin         little-endian float32, trial-major (trial, channel, sample)
    <stem>.labels.csv  label,subject_id,session_id,paradigm,trial_uid
"""

from __future__ import annotations

import csv
import enum
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

RECORDING_FORMAT = "errpdecode.recording/1"
EPOCHS_FORMAT = "errpdecode.epochs/1"

_F32_LE = np.dtype("<f4")


class Paradigm(str, enum.Enum):
    FLANKER_TASK = "FlankerTask"
    GUI_CONTROL = "GuiControl"
    SYNTHETIC = "Synthetic"


class Label(enum.IntEnum):
    CORRECT = 0
    ERROR = 1

    @property
    def text(self) -> str:
        return "Error" if self is Label.ERROR else "Correct"

    @classmethod
    def parse(cls, text: str) -> "Label":
        if text == "Error":
            return cls.ERROR
        if text == "Correct":
            return cls.CORRECT
        raise FormatError(f"unknown label {text!r}")


ERROR = int(Label.ERROR)
CORRECT = int(Label.CORRECT)


class FormatError(ValueError):
    """Malformed or inconsistent file contents."""


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class Event:
    sample_index: int
    label: Label
    kind: str = "response"

    def __post_init__(self):
        if self.sample_index < 0:
            raise ValueError("event sample_index must be non-negative")
        object.__setattr__(self, "label", Label(self.label))


@dataclass(frozen=True, eq=False)
class Recording:
    """Continuous multichannel signal in microvolts, shape (channels, samples)."""

    subject_id: str
    session_id: str
    paradigm: Paradigm
    sample_rate_hz: float
    channel_names: tuple[str, ...]
    data: np.ndarray
    events: tuple[Event, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "paradigm", Paradigm(self.paradigm))
        object.__setattr__(self, "channel_names", tuple(self.channel_names))
        object.__setattr__(self, "events", tuple(self.events))
        data = np.asarray(self.data)
        if data.ndim != 2:
            raise ValueError("recording data must be 2-D (channels, samples)")
        if data.shape[0] != len(self.channel_names):
            raise ValueError(
                f"data has {data.shape[0]} rows but {len(self.channel_names)} channel names"
            )
        if len(set(self.channel_names)) != len(self.channel_names):
            raise ValueError("channel names must be unique")
        if not self.sample_rate_hz > 0:
            raise ValueError("sample_rate_hz must be positive")
        for i, ev in enumerate(self.events):
            if not 0 <= ev.sample_index < data.shape[1]:
                raise ValueError(
                    f"event {i} at sample {ev.sample_index} outside [0, {data.shape[1]})"
                )
        object.__setattr__(self, "data", _frozen(data))

    @property
    def n_samples(self) -> int:
        return self.data.shape[1]

    def replace(self, **changes) -> "Recording":
        fields = dict(
            subject_id=self.subject_id, session_id=self.session_id,
            paradigm=self.paradigm, sample_rate_hz=self.sample_rate_hz,
            channel_names=self.channel_names, data=self.data, events=self.events,
        )
        fields.update(changes)
        return Recording(**fields)


@dataclass(frozen=True, eq=False)
class EpochSet:
    """Trials tensor (trial, channel, sample) with labels and per-trial metadata.

    ``labels`` holds 1 for Error and 0 for Correct.  ``subject_ids``,
    ``session_ids``, ``paradigms`` and ``trial_uids`` are per-trial string
    arrays; the uids identify a trial across preprocessing variants.
    """

    trials: np.ndarray
    labels: np.ndarray
    window_ms: tuple[float, float]
    sample_rate_hz: float
    channel_names: tuple[str, ...]
    subject_ids: np.ndarray = field(default=None)
    session_ids: np.ndarray = field(default=None)
    paradigms: np.ndarray = field(default=None)
    trial_uids: np.ndarray = field(default=None)

    def __post_init__(self):
        trials = np.asarray(self.trials)
        if trials.ndim != 3:
            raise ValueError("trials must be 3-D (trial, channel, sample)")
        n = trials.shape[0]
        labels = np.asarray(self.labels, dtype=np.int8)
        if labels.shape != (n,):
            raise ValueError(f"{labels.size} labels for {n} trials")
        if not np.isin(labels, (CORRECT, ERROR)).all():
            raise ValueError("labels must be 0 (Correct) or 1 (Error)")
        names = tuple(self.channel_names)
        if len(names) != trials.shape[1]:
            raise ValueError(
                f"{len(names)} channel names for channel dimension {trials.shape[1]}"
            )
        start, end = (float(v) for v in self.window_ms)
        if not start < end:
            raise ValueError("window start must precede window end")
        if not self.sample_rate_hz > 0:
            raise ValueError("sample_rate_hz must be positive")
        expected = window_samples((start, end), self.sample_rate_hz)[1]
        if trials.shape[2] != expected:
            raise ValueError(
                f"sample dimension {trials.shape[2]} does not match window "
                f"({start}, {end}) ms at {self.sample_rate_hz} Hz ({expected})"
            )
        object.__setattr__(self, "trials", _frozen(trials))
        object.__setattr__(self, "labels", _frozen(labels))
        object.__setattr__(self, "channel_names", names)
        object.__setattr__(self, "window_ms", (start, end))
        defaults = {
            "subject_ids": "", "session_ids": "",
            "paradigms": Paradigm.SYNTHETIC.value, "trial_uids": None,
        }
        for attr, default in defaults.items():
            values = getattr(self, attr)
            if values is None:
                if attr == "trial_uids":
                    values = [str(i) for i in range(n)]
                else:
                    values = [default] * n
            values = np.asarray(values, dtype=str)
            if values.shape != (n,):
                raise ValueError(f"{attr} has {values.size} entries for {n} trials")
            object.__setattr__(self, attr, _frozen(values))

    @property
    def n_trials(self) -> int:
        return self.trials.shape[0]

    @property
    def n_channels(self) -> int:
        return self.trials.shape[1]

    @property
    def n_samples(self) -> int:
        return self.trials.shape[2]

    def subset(self, index) -> "EpochSet":
        """Trials selected by an integer index array or boolean mask."""
        index = np.asarray(index)
        if index.dtype == bool:
            index = np.flatnonzero(index)
        return EpochSet(
            trials=self.trials[index], labels=self.labels[index],
            window_ms=self.window_ms, sample_rate_hz=self.sample_rate_hz,
            channel_names=self.channel_names,
            subject_ids=self.subject_ids[index], session_ids=self.session_ids[index],
            paradigms=self.paradigms[index], trial_uids=self.trial_uids[index],
        )

    def with_trials(self, trials: np.ndarray, labels: np.ndarray | None = None) -> "EpochSet":
        return EpochSet(
            trials=trials, labels=self.labels if labels is None else labels,
            window_ms=self.window_ms, sample_rate_hz=self.sample_rate_hz,
            channel_names=self.channel_names, subject_ids=self.subject_ids,
            session_ids=self.session_ids, paradigms=self.paradigms,
            trial_uids=self.trial_uids,
        )


def window_samples(window_ms: tuple[float, float], sample_rate_hz: float) -> tuple[int, int]:
    """(offset of the first sample relative to the event, number of samples)."""
    start, end = window_ms
    offset = int(round(start / 1000.0 * sample_rate_hz))
    length = int(round((end - start) / 1000.0 * sample_rate_hz))
    return offset, length


def concatenate(sets: Sequence[EpochSet]) -> EpochSet:
    if not sets:
        raise ValueError("nothing to concatenate")
    first = sets[0]
    for es in sets[1:]:
        if es.channel_names != first.channel_names:
            raise ValueError("cannot concatenate epoch sets with different channels")
        if es.sample_rate_hz != first.sample_rate_hz or es.window_ms != first.window_ms:
            raise ValueError("cannot concatenate epoch sets with different timing")
    return EpochSet(
        trials=np.concatenate([es.trials for es in sets]),
        labels=np.concatenate([es.labels for es in sets]),
        window_ms=first.window_ms, sample_rate_hz=first.sample_rate_hz,
        channel_names=first.channel_names,
        subject_ids=np.concatenate([es.subject_ids for es in sets]),
        session_ids=np.concatenate([es.session_ids for es in sets]),
        paradigms=np.concatenate([es.paradigms for es in sets]),
        trial_uids=np.concatenate([es.trial_uids for es in sets]),
    )


# --------------------------------------------------------------------------
# file I/O

def _stem(path) -> Path:
    path = Path(path)
    return path.with_suffix("") if path.suffix == ".json" else path


def _sibling(stem: Path, suffix: str) -> Path:
    return stem.parent / (stem.name + suffix)


def _read_header(path: Path, fmt: str, keys: Sequence[str]) -> dict:
    try:
        header = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise FormatError(f"malformed header {path}: {exc}") from exc
    if not isinstance(header, dict) or header.get("format") != fmt:
        raise FormatError(f"malformed header {path}: expected format {fmt!r}")
    missing = [k for k in keys if k not in header]
    if missing:
        raise FormatError(f"malformed header {path}: missing {', '.join(missing)}")
    return header


def _read_payload(path: Path, count: int) -> np.ndarray:
    raw = path.read_bytes()
    if len(raw) != count * 4:
        raise FormatError(
            f"payload length mismatch in {path}: {len(raw)} bytes, header implies {count * 4}"
        )
    return np.frombuffer(raw, dtype=_F32_LE).astype(np.float32)


def save_recording(rec: Recording, path) -> None:
    stem = _stem(path)
    stem.parent.mkdir(parents=True, exist_ok=True)
    header = {
        "format": RECORDING_FORMAT,
        "subject_id": rec.subject_id,
        "session_id": rec.session_id,
        "paradigm": rec.paradigm.value,
        "sample_rate_hz": float(rec.sample_rate_hz),
        "channel_names": list(rec.channel_names),
        "n_samples": int(rec.n_samples),
    }
    _sibling(stem, ".json").write_text(json.dumps(header, indent=2))
    _sibling(stem, ".bin").write_bytes(
        np.ascontiguousarray(rec.data, dtype=_F32_LE).tobytes()
    )
    with open(_sibling(stem, ".events.csv"), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["sample_index", "label", "kind"])
        for ev in rec.events:
            writer.writerow([ev.sample_index, ev.label.text, ev.kind])


def load_recording(path) -> Recording:
    stem = _stem(path)
    header = _read_header(
        _sibling(stem, ".json"), RECORDING_FORMAT,
        ("subject_id", "session_id", "paradigm", "sample_rate_hz",
         "channel_names", "n_samples"),
    )
    try:
        paradigm = Paradigm(header["paradigm"])
    except ValueError:
        raise FormatError(f"unknown paradigm {header['paradigm']!r}") from None
    n_ch = len(header["channel_names"])
    n_samples = int(header["n_samples"])
    data = _read_payload(_sibling(stem, ".bin"), n_ch * n_samples).reshape(n_ch, n_samples)
    events = []
    with open(_sibling(stem, ".events.csv"), newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != ["sample_index", "label", "kind"]:
            raise FormatError(f"malformed events file for {stem}")
        for row in reader:
            events.append(Event(int(row["sample_index"]), Label.parse(row["label"]), row["kind"]))
    return Recording(
        subject_id=header["subject_id"], session_id=header["session_id"],
        paradigm=paradigm, sample_rate_hz=float(header["sample_rate_hz"]),
        channel_names=tuple(header["channel_names"]), data=data, events=tuple(events),
    )


def save_epochs(es: EpochSet, path) -> None:
    stem = _stem(path)
    stem.parent.mkdir(parents=True, exist_ok=True)
    header = {
        "format": EPOCHS_FORMAT,
        "n_trials": es.n_trials,
        "n_channels": es.n_channels,
        "n_samples": es.n_samples,
        "window_ms": list(es.window_ms),
        "sample_rate_hz": float(es.sample_rate_hz),
        "channel_names": list(es.channel_names),
    }
    _sibling(stem, ".json").write_text(json.dumps(header, indent=2))
    _sibling(stem, ".bin").write_bytes(
        np.ascontiguousarray(es.trials, dtype=_F32_LE).tobytes()
    )
    with open(_sibling(stem, ".labels.csv"), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["label", "subject_id", "session_id", "paradigm", "trial_uid"])
        for i in range(es.n_trials):
            writer.writerow([
                Label(int(es.labels[i])).text, es.subject_ids[i], es.session_ids[i],
                es.paradigms[i], es.trial_uids[i],
            ])


def load_epochs(path) -> EpochSet:
    stem = _stem(path)
    header = _read_header(
        _sibling(stem, ".json"), EPOCHS_FORMAT,
        ("n_trials", "n_channels", "n_samples", "window_ms", "sample_rate_hz",
         "channel_names"),
    )
    n, c, t = int(header["n_trials"]), int(header["n_channels"]), int(header["n_samples"])
    if len(header["channel_names"]) != c:
        raise FormatError("malformed header: channel_names length differs from n_channels")
    trials = _read_payload(_sibling(stem, ".bin"), n * c * t).reshape(n, c, t)
    rows = []
    with open(_sibling(stem, ".labels.csv"), newline="") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            rows.append(row)
    if len(rows) != n:
        raise FormatError(f"labels file has {len(rows)} rows but tensor holds {n} trials")
    for row in rows:
        try:
            Paradigm(row["paradigm"])
        except ValueError:
            raise FormatError(f"unknown paradigm {row['paradigm']!r}") from None
    return EpochSet(
        trials=trials,
        labels=np.array([Label.parse(r["label"]) for r in rows], dtype=np.int8),
        window_ms=tuple(header["window_ms"]),
        sample_rate_hz=float(header["sample_rate_hz"]),
        channel_names=tuple(header["channel_names"]),
        subject_ids=[r["subject_id"] for r in rows],
        session_ids=[r["session_id"] for r in rows],
        paradigms=[r["paradigm"] for r in rows],
        trial_uids=[r["trial_uid"] for r in rows],
    )
