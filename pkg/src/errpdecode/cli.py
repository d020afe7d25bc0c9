"""Command-line entry point: ``errpdecode <subcommand> ...``.

Exit status is 0 on success, 1 on a runtime failure and 2 on a usage or
configuration error.  Every subcommand that writes outputs also writes
``resolved_config.toml`` into its output directory.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path
from typing import Sequence

from . import __version__
from .config import ConfigError, RunConfig
from .data_model import (EpochSet, Recording, load_epochs, load_recording, save_epochs,
                         save_recording)
from .montage import CHANNEL_SETS

log = logging.getLogger("errpdecode")

DATASET_MANIFEST = "dataset.json"


class StageError(RuntimeError):
    """A runtime failure, tagged with the stage and input it concerns."""

    def __init__(self, stage: str, source, message: str):
        super().__init__(f"{stage}: {source}: {message}")


# --------------------------------------------------------------------------
# dataset folders

def save_dataset(recordings: Sequence[Recording], directory, extra: dict | None = None) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    stems = []
    for rec in recordings:
        stem = f"{rec.subject_id}_{rec.session_id}"
        save_recording(rec, directory / stem)
        stems.append(stem)
    manifest = {"format": "errpdecode.dataset/1", "recordings": stems, **(extra or {})}
    path = directory / DATASET_MANIFEST
    path.write_text(json.dumps(manifest, indent=2) + "\n")
    return path


def load_dataset(directory) -> list[Recording]:
    """Recordings of a dataset folder, in manifest order (or sorted by name)."""
    directory = Path(directory)
    if not directory.is_dir():
        raise FileNotFoundError(f"dataset folder {directory} does not exist")
    manifest = directory / DATASET_MANIFEST
    if manifest.exists():
        stems = json.loads(manifest.read_text())["recordings"]
    else:
        stems = sorted(p.stem for p in directory.glob("*.json")
                       if p.name not in (DATASET_MANIFEST, "planted_truth.json"))
    if not stems:
        raise FileNotFoundError(f"no recordings in {directory}")
    return [load_recording(directory / s) for s in stems]


# --------------------------------------------------------------------------
# helpers

def _channels(value):
    if isinstance(value, str):
        if value == "all":
            return None
        if value in CHANNEL_SETS:
            return CHANNEL_SETS[value]
        raise ConfigError(f"unknown channel set {value!r}")
    return tuple(value)


def build_classifier(cfg: RunConfig):
    from .evalharness.classifiers import ConvNetClassifier, RldaClassifier
    from .preprocess import Preset

    c = cfg.classifier
    if c.kind == "rlda":
        base = RldaClassifier(priors=c.priors)
    elif c.kind == "convnet":
        base = ConvNetClassifier(train_config=cfg.train, architecture=cfg.architecture)
    else:
        raise ConfigError(f"unknown classifier kind {c.kind!r} (rlda or convnet)")
    p = base.preset
    preset = Preset(
        sample_rate_hz=p.sample_rate_hz if c.sample_rate_hz is None else float(c.sample_rate_hz),
        standardize=p.standardize if c.standardize is None else bool(c.standardize),
        channels=p.channels if c.channels is None else _channels(c.channels),
        standardizer=cfg.standardizer, epoch=cfg.epoch,
    )
    return replace(base, preset=preset)


def _workers(cfg: RunConfig) -> int:
    env = os.environ.get("ERRPDECODE_WORKERS")
    if env:
        try:
            return max(int(env), 1)
        except ValueError:
            raise ConfigError(f"ERRPDECODE_WORKERS must be an integer, got {env!r}") from None
    return max(int(cfg.eval.workers), 1)


def _require(value: str, what: str, flag: str) -> str:
    if not value:
        raise ConfigError(f"{what} is required ({flag} or the [paths] table)")
    return value


def dataset_info(directory) -> dict:
    manifest = Path(directory) / DATASET_MANIFEST
    return json.loads(manifest.read_text()) if manifest.exists() else {}


def _adapt(spec, directory):
    """A dataset written by ``preprocess`` is only epoched (and channel-selected)."""
    done = dataset_info(directory).get("preprocessed")
    if not done:
        return spec
    return spec.with_preprocessing(sample_rate_hz=float(done["sample_rate_hz"]),
                                   standardize=False)


def _load_recordings(stage: str, path: str, spec):
    try:
        return load_dataset(path), _adapt(spec, path)
    except (OSError, ValueError) as exc:
        raise StageError(stage, path, str(exc)) from None


def _load_data(stage: str, cfg: RunConfig, spec):
    """(data, spec): recordings from paths.data, or a prepared EpochSet from
    paths.epochs; the spec is adjusted for already preprocessed folders."""
    if cfg.paths.epochs:
        try:
            return load_epochs(cfg.paths.epochs), spec
        except (OSError, ValueError) as exc:
            raise StageError(stage, cfg.paths.epochs, str(exc)) from None
    return _load_recordings(stage, _require(cfg.paths.data, "input data", "--data"), spec)


def _write_json(path: Path, obj) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2) + "\n")


# --------------------------------------------------------------------------
# subcommands

def cmd_synth(args, cfg: RunConfig) -> None:
    from .synthgen import generate_dataset, planted_truth

    out = Path(_require(cfg.paths.out, "output folder", "--out"))
    recs = generate_dataset(cfg.synth)
    truth = planted_truth(cfg.synth)
    save_dataset(recs, out, {"synth": cfg.synth.to_dict()})
    _write_json(out / "planted_truth.json", truth)
    cfg.write_resolved(out)
    print(f"wrote {len(recs)} recordings to {out}")


def cmd_preprocess(args, cfg: RunConfig) -> None:
    from .preprocess import common_average_reference, resample, running_standardize

    out = Path(_require(cfg.paths.out, "output folder", "--out"))
    src = _require(cfg.paths.data, "input data", "--data")
    try:
        recs = load_dataset(src)
    except (OSError, ValueError) as exc:
        raise StageError("preprocess", src, str(exc)) from None
    spec = build_classifier(cfg)
    result = []
    for rec in recs:
        try:
            rec = common_average_reference(rec)
            if spec.preset.sample_rate_hz != rec.sample_rate_hz:
                rec = resample(rec, spec.preset.sample_rate_hz)
            if spec.preset.standardize:
                rec = running_standardize(rec, cfg.standardizer)
        except ValueError as exc:
            raise StageError("preprocess", f"{rec.subject_id}/{rec.session_id}", str(exc)) from None
        result.append(rec)
    save_dataset(result, out, {"preprocessed": {
        "sample_rate_hz": result[0].sample_rate_hz,
        "standardized": spec.preset.standardize}})
    cfg.write_resolved(out)
    print(f"wrote {len(result)} preprocessed recordings to {out}")


def cmd_epoch(args, cfg: RunConfig) -> None:
    out = Path(_require(cfg.paths.out, "output folder", "--out"))
    src = _require(cfg.paths.data, "input data", "--data")
    recs, spec = _load_recordings("epoch", src, build_classifier(cfg))
    try:
        es = spec.prepare(recs)
    except (ValueError, KeyError) as exc:
        raise StageError("epoch", src, str(exc)) from None
    save_epochs(es, out / "epochs")
    cfg.write_resolved(out)
    print(f"wrote {es.n_trials} epochs ({es.n_channels} ch x {es.n_samples} samples) to {out}")


def cmd_train(args, cfg: RunConfig) -> None:
    from .convnet.model import save_convnet
    from .rlda import save_rlda

    out = Path(_require(cfg.paths.out, "output folder", "--out"))
    data, spec = _load_data("train", cfg, build_classifier(cfg))
    es = data if isinstance(data, EpochSet) else spec.prepare(data)
    try:
        model = spec.fit(es, cfg.eval.seed)
    except ValueError as exc:
        raise StageError("train", cfg.paths.epochs or cfg.paths.data, str(exc)) from None
    out.mkdir(parents=True, exist_ok=True)
    if spec.tag == "rlda":
        save_rlda(model, out / "model")
    else:
        save_convnet(model, out / "model")
    cfg.write_resolved(out)
    print(f"wrote {spec.tag} model to {out / 'model'}")


_SCHEMES = {"within": "within_subject_eval", "losesso": "leave_one_session_out_eval",
            "loso": "leave_one_subject_out_eval", "cross": "cross_paradigm_eval"}


def cmd_eval(args, cfg: RunConfig) -> None:
    from .evalharness import protocols

    out = Path(_require(cfg.paths.out, "output folder", "--out"))
    spec = build_classifier(cfg)
    scheme = cfg.eval.scheme
    if scheme not in _SCHEMES:
        raise ConfigError(f"unknown scheme {scheme!r} ({', '.join(_SCHEMES)})")
    seed, workers = cfg.eval.seed, _workers(cfg)
    source = cfg.paths.epochs or cfg.paths.data
    try:
        if scheme == "cross":
            a, spec = _load_recordings("eval", _require(cfg.paths.data, "dataset A", "--data"), spec)
            b, _ = _load_recordings("eval", _require(cfg.paths.data_b, "dataset B", "--data-b"), spec)
            report = protocols.cross_paradigm_eval(
                a, b, spec, channels=cfg.eval.channel_reconciliation, seed=seed,
                workers=workers)
        else:
            data, spec = _load_data("eval", cfg, spec)
            fn = getattr(protocols, _SCHEMES[scheme])
            kw = {"test_fraction": cfg.eval.test_fraction} if scheme == "within" else {}
            report = fn(data, spec, seed=seed, workers=workers, **kw)
    except (ValueError, protocols.LeakageError) as exc:
        raise StageError("eval", source, str(exc)) from None
    json_path, csv_path = report.save(out / "report")
    cfg.write_resolved(out)
    s = report.summary
    sem_txt = "n/a" if s["sem"] is None else f"{s['sem']:.4f}"
    print(f"{report.scheme.value} [{report.classifier}]: {s['mean']:.4f} +- {sem_txt} "
          f"over {s['n_folds']} folds -> {json_path}, {csv_path}")


def cmd_sweep(args, cfg: RunConfig) -> None:
    from .evalharness import protocols

    out = Path(_require(cfg.paths.out, "output folder", "--out"))
    spec = build_classifier(cfg)
    seed, workers = cfg.eval.seed, _workers(cfg)
    source = cfg.paths.data or cfg.paths.epochs
    try:
        if args.kind == "group-size":
            data, spec = _load_data("sweep", cfg, spec)
            report = protocols.group_size_sweep(
                data, spec, cfg.eval.m_values, k_draws=cfg.eval.k_draws, seed=seed,
                workers=workers)
        else:
            recs, spec = _load_recordings(
                "sweep", _require(cfg.paths.data, "input data", "--data"), spec)
            sets = {name: (None if name == "all" else _channels(name))
                    for name in cfg.eval.channel_sets}
            report = protocols.sampling_rate_sweep(recs, spec, cfg.eval.rates, sets,
                                                   seed=seed, workers=workers)
    except (ValueError, protocols.LeakageError) as exc:
        raise StageError("sweep", source, str(exc)) from None
    json_path, csv_path = report.save(out / "report")
    cfg.write_resolved(out)
    for p in report.points:
        label = ", ".join(f"{k}={v}" for k, v in p.items() if k not in ("mean", "sem", "n"))
        print(f"{label}: {p['mean']:.4f}")
    print(f"-> {json_path}, {csv_path}")


def cmd_perturb_viz(args, cfg: RunConfig) -> None:
    from .convnet.model import load_convnet
    from .perturbviz import export_topomap, frequency_domain_map, time_domain_map

    out = Path(_require(cfg.paths.out, "output folder", "--out"))
    model_path = _require(cfg.paths.model, "model", "--model")
    try:
        model = load_convnet(model_path)
    except (OSError, ValueError) as exc:
        raise StageError("perturb-viz", model_path, str(exc)) from None
    data, spec = _load_data("perturb-viz", cfg, build_classifier(cfg))
    es = data if isinstance(data, EpochSet) else spec.prepare(data)
    fn = time_domain_map if args.domain == "time" else frequency_domain_map
    try:
        cmap = fn(model, es, cfg.perturb)
    except ValueError as exc:
        raise StageError("perturb-viz", cfg.paths.epochs or cfg.paths.data, str(exc)) from None
    csv_path, json_path = export_topomap(cmap, out / f"{args.domain}_map")
    cfg.write_resolved(out)
    for ch, label, r in cmap.top_cells(3):
        print(f"{ch:>6s}  {label:<18s} r = {r:+.3f}")
    print(f"-> {csv_path}, {json_path}")


def compare_reports(a, b) -> dict:
    """Per-fold paired comparison of two reports with identical fold ids."""
    from .evalharness.stats import ZeroVarianceError, paired_t_test
    from .evalharness.metrics import sem

    ids_a = [f.fold_id for f in a.folds]
    ids_b = [f.fold_id for f in b.folds]
    if ids_a != ids_b:
        raise ValueError("reports have different fold structure "
                         f"({len(ids_a)} vs {len(ids_b)} folds, or different fold ids)")
    acc_a, acc_b = a.accuracies, b.accuracies
    diff = acc_b - acc_a
    result = {
        "a": a.classifier, "b": b.classifier, "scheme": a.scheme.value,
        "folds": [{"fold_id": i, "a": float(x), "b": float(y), "difference": float(y - x)}
                  for i, x, y in zip(ids_a, acc_a, acc_b)],
        "mean_a": float(acc_a.mean()), "mean_b": float(acc_b.mean()),
        "mean_difference": float(diff.mean()),
        "sem_difference": sem(diff) if diff.size >= 2 else None,
    }
    try:
        t, p = paired_t_test(acc_b, acc_a)
        result["t_test"] = {"t": t, "p": p, "df": int(diff.size - 1)}
    except (ZeroVarianceError, ValueError) as exc:
        result["t_test"] = {"status": "not testable", "reason": str(exc)}
    return result


def format_comparison(cmp: dict) -> str:
    width = max([len("fold")] + [len(r["fold_id"]) for r in cmp["folds"]])
    lines = [f"{'fold':<{width}}  {cmp['a']:>10s}  {cmp['b']:>10s}  {'b - a':>9s}"]
    for r in cmp["folds"]:
        lines.append(f"{r['fold_id']:<{width}}  {r['a']:10.4f}  {r['b']:10.4f}  {r['difference']:+9.4f}")
    lines.append(f"{'mean':<{width}}  {cmp['mean_a']:10.4f}  {cmp['mean_b']:10.4f}  "
                 f"{cmp['mean_difference']:+9.4f}")
    if cmp["sem_difference"] is not None:
        lines.append(f"SEM of difference: {cmp['sem_difference']:.4f}")
    tt = cmp["t_test"]
    if "p" in tt:
        lines.append(f"paired t-test: t({tt['df']}) = {tt['t']:.4f}, p = {tt['p']:.6g}")
    else:
        lines.append(f"paired t-test: not testable ({tt['reason']})")
    return "\n".join(lines)


def cmd_report(args, cfg: RunConfig) -> None:
    from .evalharness.protocols import EvalReport

    out = Path(_require(cfg.paths.out, "output folder", "--out"))
    reports = []
    for path in args.reports:
        try:
            reports.append(EvalReport.load(path))
        except (OSError, ValueError, KeyError) as exc:
            raise StageError("report", path, str(exc)) from None
    try:
        cmp = compare_reports(*reports)
    except ValueError as exc:
        raise StageError("report", " vs ".join(args.reports), str(exc)) from None
    text = format_comparison(cmp)
    _write_json(out / "comparison.json", cmp)
    (out / "comparison.txt").write_text(text + "\n")
    cfg.write_resolved(out)
    print(text)


# --------------------------------------------------------------------------
# argument parsing

def _common(p: argparse.ArgumentParser, *, data=True, out=True) -> None:
    p.add_argument("--config", help="TOML run configuration")
    if data:
        p.add_argument("--data", help="dataset folder (recordings)")
        p.add_argument("--epochs", help="prepared epochs file (skips preprocessing)")
    if out:
        p.add_argument("--out", help="output folder")
    p.add_argument("--seed", type=int, help="master seed")


def _classifier_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--classifier", choices=("rlda", "convnet"))
    p.add_argument("--rate", type=float, dest="sample_rate_hz",
                   help="resampling rate in Hz (default: classifier preset)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="errpdecode",
        description="Error-related EEG decoding: synthetic data, preprocessing, "
                    "rLDA / deep ConvNet training, evaluation protocols and "
                    "perturbation maps.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    _common(p, data=False)
    p.add_argument("--paradigm", choices=("FlankerLike", "GuiLike"))
    p.add_argument("--subjects", type=int)
    p.add_argument("--trials", type=int, help="trials per session")
    p.add_argument("--snr", type=float)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("preprocess", help="re-reference, resample and standardize recordings")
    _common(p)
    _classifier_args(p)
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("epoch", help="cut event-locked epochs")
    _common(p)
    _classifier_args(p)
    p.set_defaults(func=cmd_epoch)

    p = sub.add_parser("train", help="train a classifier on all given trials")
    _common(p)
    _classifier_args(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="run an evaluation protocol")
    _common(p)
    _classifier_args(p)
    p.add_argument("--scheme", choices=tuple(_SCHEMES))
    p.add_argument("--data-b", help="second dataset (cross scheme)")
    p.add_argument("--test-fraction", type=float)
    p.add_argument("--workers", type=int)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="group-size or sampling-rate sweep")
    _common(p)
    _classifier_args(p)
    p.add_argument("--kind", choices=("group-size", "sampling-rate"), required=True)
    p.add_argument("--m", type=int, nargs="+", dest="m_values", help="group sizes")
    p.add_argument("--k-draws", type=int)
    p.add_argument("--rates", type=float, nargs="+")
    p.add_argument("--workers", type=int)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("perturb-viz", help="perturbation correlation maps of a ConvNet")
    _common(p)
    _classifier_args(p)
    p.add_argument("--model", help="saved ConvNet (from `train`)")
    p.add_argument("--domain", choices=("time", "frequency"), default="time")
    p.add_argument("--iterations", type=int)
    p.set_defaults(func=cmd_perturb_viz)

    p = sub.add_parser("report", help="paired comparison of two evaluation reports")
    p.add_argument("reports", nargs=2, help="two report JSON files (a, b)")
    p.add_argument("--config", help="TOML run configuration")
    p.add_argument("--out", help="output folder")
    p.set_defaults(func=cmd_report)
    return parser


def resolve_config(args) -> RunConfig:
    cfg = RunConfig.load(args.config) if getattr(args, "config", None) else RunConfig()
    get = lambda name: getattr(args, name, None)  # noqa: E731
    cfg.override("paths", data=get("data"), data_b=get("data_b"), epochs=get("epochs"),
                  model=get("model"), out=get("out"))
    cfg.override("classifier", kind=get("classifier"), sample_rate_hz=get("sample_rate_hz"))
    cfg.override("eval", scheme=get("scheme"), test_fraction=get("test_fraction"),
                 seed=get("seed"), m_values=get("m_values"), k_draws=get("k_draws"),
                 rates=get("rates"), workers=get("workers"))
    if args.command == "synth":
        changes = dict(n_subjects=get("subjects"), trials_per_session=get("trials"),
                       snr=get("snr"), seed=get("seed"))
        if get("paradigm") and get("paradigm") != cfg.synth.paradigm.value:
            from .synthgen import SynthConfig, SynthParadigm
            factory = (SynthConfig.gui_like if get("paradigm") == SynthParadigm.GUI_LIKE.value
                       else SynthConfig.flanker_like)
            cfg.synth = factory()
        cfg.override("synth", **changes)
    if args.command == "perturb-viz":
        cfg.override("perturb", n_iterations=get("iterations"), seed=get("seed"))
    return cfg


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:           # usage errors (2), --help / --version (0)
        return int(exc.code or 0)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
        args.func(args, cfg)
    except ConfigError as exc:
        parser.print_usage(sys.stderr)
        print(f"errpdecode {args.command}: configuration error: {exc}", file=sys.stderr)
        return 2
    except StageError as exc:
        print(f"errpdecode {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - any other failure is a runtime error
        print(f"errpdecode {args.command}: error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
