"""Shared fixtures and small data builders."""

from __future__ import annotations

import numpy as np
import pytest
from hypothesis import settings

from errpdecode.data_model import EpochSet, Event, Label, Paradigm, Recording

settings.register_profile("default", deadline=None, max_examples=50)
settings.load_profile("default")


def make_recording(n_channels=4, n_samples=2000, rate=250.0, events=(), seed=0,
                   names=None, subject="s01", session="s1", dtype=np.float64):
    rng = np.random.default_rng(seed)
    names = names or ("Fz", "FCz", "Cz", "Pz", "Oz", "POz", "CPz", "Fpz")[:n_channels]
    data = rng.standard_normal((n_channels, n_samples)).astype(dtype)
    evs = tuple(Event(i, Label(lab)) for i, lab in events)
    return Recording(subject, session, Paradigm.SYNTHETIC, rate, names, data, evs)


def make_epochs(n_trials=20, n_channels=3, window=(-500.0, 1000.0), rate=20.0, seed=0,
                labels=None, subjects=None, sessions=None):
    rng = np.random.default_rng(seed)
    n_samples = int(round((window[1] - window[0]) / 1000.0 * rate))
    names = ("Fz", "FCz", "Cz", "Pz", "Oz", "POz", "CPz", "Fpz")[:n_channels]
    if labels is None:
        labels = np.arange(n_trials) % 2
    return EpochSet(
        trials=rng.standard_normal((n_trials, n_channels, n_samples)),
        labels=labels, window_ms=window, sample_rate_hz=rate, channel_names=names,
        subject_ids=subjects, session_ids=sessions,
    )


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# --------------------------------------------------------------------------
# acceptance reporting: one PASS/FAIL line per criterion in the summary

CRITERION_LINES: dict[int, str] = {}


def record_criterion(number: int, title: str, passed: bool, detail: str = "") -> None:
    status = "PASS" if passed else "FAIL"
    CRITERION_LINES[number] = f"{status}  criterion {number:2d}: {title}" + (
        f"  [{detail}]" if detail else "")


def pytest_terminal_summary(terminalreporter):
    if not CRITERION_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(CRITERION_LINES):
        terminalreporter.write_line(CRITERION_LINES[number])
