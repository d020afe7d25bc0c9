"""Command-line interface and run configuration."""

from __future__ import annotations

import json

import numpy as np
import pytest
import tomli

from errpdecode import __version__
from errpdecode.cli import compare_reports, load_dataset, main, save_dataset
from errpdecode.config import RESOLVED_NAME, ConfigError, RunConfig
from errpdecode.evalharness import EvalReport
from errpdecode.synthgen import SynthParadigm

SMALL = """
[synth]
paradigm = "FlankerLike"
n_subjects = 3
trials_per_session = 60
channels = "32"
snr = 2.0
seed = 7
"""


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    cfg = root / "small.toml"
    cfg.write_text(SMALL)
    assert main(["synth", "--config", str(cfg), "--out", str(root / "data")]) == 0
    return root / "data"


class TestRunConfig:
    def test_defaults_round_trip_through_toml(self, tmp_path):
        cfg = RunConfig()
        path = cfg.write_resolved(tmp_path)
        assert path.name == RESOLVED_NAME
        raw = tomli.loads(path.read_text())
        assert raw["meta"]["version"] == __version__
        again = RunConfig.from_mapping(raw)
        assert again.to_mapping() == cfg.to_mapping()

    def test_unknown_key(self):
        with pytest.raises(ConfigError, match=r"unknown key\(s\) in \[eval\]: bogus"):
            RunConfig.from_mapping({"eval": {"bogus": 1}})

    def test_unknown_table(self):
        with pytest.raises(ConfigError, match="unknown config table"):
            RunConfig.from_mapping({"nonsense": {}})

    def test_invalid_value(self):
        with pytest.raises(ConfigError, match=r"invalid \[train\]"):
            RunConfig.from_mapping({"train": {"batch_size": 0}})

    def test_paradigm_selects_preset(self):
        cfg = RunConfig.from_mapping({"synth": {"paradigm": "GuiLike", "n_subjects": 2}})
        assert cfg.synth.paradigm is SynthParadigm.GUI_LIKE
        assert cfg.synth.error_rate == 0.253 and cfg.synth.n_subjects == 2

    def test_override_ignores_none(self):
        cfg = RunConfig()
        cfg.override("eval", seed=None, k_draws=3)
        assert cfg.eval.seed == 0 and cfg.eval.k_draws == 3

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="not found"):
            RunConfig.load(tmp_path / "nope.toml")

    def test_malformed_toml(self, tmp_path):
        p = tmp_path / "bad.toml"
        p.write_text("[eval\nseed = 1")
        with pytest.raises(ConfigError):
            RunConfig.load(p)


class TestExitCodes:
    def test_unknown_flag_is_usage_error(self, capsys):
        assert main(["eval", "--no-such-flag"]) == 2

    def test_unknown_config_key_is_usage_error(self, tmp_path, capsys):
        p = tmp_path / "c.toml"
        p.write_text("[eval]\nscheem = 'loso'\n")
        assert main(["eval", "--config", str(p), "--data", "x", "--out", "y"]) == 2
        assert "scheem" in capsys.readouterr().err

    def test_missing_data_folder_is_runtime_error(self, tmp_path, capsys):
        code = main(["eval", "--data", str(tmp_path / "missing"), "--out", str(tmp_path / "o")])
        assert code == 1
        err = capsys.readouterr().err
        assert "eval" in err and "missing" in err

    def test_missing_required_output(self, capsys):
        assert main(["synth"]) == 2

    def test_version(self, capsys):
        assert main(["--version"]) == 0
        assert __version__ in capsys.readouterr().out


class TestPipeline:
    def test_synth_outputs(self, dataset):
        recs = load_dataset(dataset)
        assert len(recs) == 3 and len(recs[0].channel_names) == 32
        truth = json.loads((dataset / "planted_truth.json").read_text())
        assert any(t["name"] == "pe" for t in truth)
        resolved = tomli.loads((dataset / RESOLVED_NAME).read_text())
        assert resolved["synth"]["n_subjects"] == 3

    def test_dataset_round_trip(self, dataset, tmp_path):
        recs = load_dataset(dataset)
        save_dataset(recs, tmp_path / "copy")
        back = load_dataset(tmp_path / "copy")
        for a, b in zip(recs, back):
            np.testing.assert_array_equal(a.data, b.data)
            assert a.events == b.events

    def test_eval_loso_writes_report_and_config(self, dataset, tmp_path, capsys):
        out = tmp_path / "loso"
        assert main(["eval", "--scheme", "loso", "--data", str(dataset), "--out", str(out)]) == 0
        rep = EvalReport.load(out / "report.json")
        assert len(rep.folds) == 3 and (out / "report.csv").exists()
        assert rep.summary["mean"] > 0.6
        assert "LeaveOneSubjectOut" in capsys.readouterr().out
        resolved = tomli.loads((out / RESOLVED_NAME).read_text())
        assert resolved["eval"]["scheme"] == "loso"
        assert resolved["paths"]["data"] == str(dataset)

    def test_rerun_from_resolved_config_is_bit_identical(self, dataset, tmp_path):
        first = tmp_path / "a"
        assert main(["eval", "--scheme", "within", "--data", str(dataset),
                     "--out", str(first), "--seed", "3"]) == 0
        second = tmp_path / "b"
        assert main(["eval", "--config", str(first / RESOLVED_NAME),
                     "--out", str(second)]) == 0
        assert (first / "report.json").read_bytes() == (second / "report.json").read_bytes()
        assert (first / "report.csv").read_bytes() == (second / "report.csv").read_bytes()

    def test_preprocess_then_epoch_then_train(self, dataset, tmp_path):
        pre, ep, model = tmp_path / "pre", tmp_path / "ep", tmp_path / "model"
        assert main(["preprocess", "--data", str(dataset), "--out", str(pre)]) == 0
        assert main(["epoch", "--data", str(pre), "--out", str(ep)]) == 0
        assert list(ep.glob("epochs.*"))
        assert main(["train", "--data", str(pre), "--out", str(model)]) == 0
        assert list(model.glob("model*"))

    def test_group_size_sweep(self, dataset, tmp_path):
        out = tmp_path / "sweep"
        assert main(["sweep", "--kind", "group-size", "--m", "1", "2", "--k-draws", "2",
                     "--data", str(dataset), "--out", str(out)]) == 0
        rep = EvalReport.load(out / "report.json")
        assert [p["m"] for p in rep.points] == [1, 2]

    def test_rate_sweep(self, dataset, tmp_path):
        out = tmp_path / "rates"
        assert main(["sweep", "--kind", "sampling-rate", "--rates", "25", "50",
                     "--data", str(dataset), "--out", str(out)]) == 0
        rep = EvalReport.load(out / "report.json")
        assert len(rep.points) == 2 * 2          # rates x default channel sets


class TestPerturbViz:
    def test_time_map_from_trained_convnet(self, dataset, tmp_path, capsys):
        cfg = tmp_path / "convnet.toml"
        cfg.write_text('[classifier]\nkind = "convnet"\nchannels = "midline7"\n'
                       '[train]\nmax_epochs = 1\n')
        model = tmp_path / "model"
        assert main(["train", "--config", str(cfg), "--data", str(dataset),
                     "--out", str(model)]) == 0
        out = tmp_path / "maps"
        assert main(["perturb-viz", "--config", str(cfg), "--data", str(dataset),
                     "--model", str(model / "model"), "--iterations", "2",
                     "--out", str(out)]) == 0
        side = json.loads((out / "time_map.json").read_text())
        assert len(side["bins"]) == 12 and len(side["channels"]) == 7
        assert (out / RESOLVED_NAME).exists()

    def test_missing_model_is_runtime_error(self, dataset, tmp_path):
        assert main(["perturb-viz", "--data", str(dataset), "--model", str(tmp_path / "nope"),
                     "--out", str(tmp_path / "o")]) == 1


class TestReportCommand:
    def _eval(self, dataset, out, seed="0", classifier="rlda"):
        assert main(["eval", "--scheme", "loso", "--data", str(dataset), "--out", str(out),
                     "--seed", seed, "--classifier", classifier]) == 0
        return out / "report.json"

    def test_identical_reports_not_testable(self, dataset, tmp_path, capsys):
        a = self._eval(dataset, tmp_path / "a")
        assert main(["report", str(a), str(a), "--out", str(tmp_path / "cmp")]) == 0
        assert "not testable" in capsys.readouterr().out
        cmp = json.loads((tmp_path / "cmp" / "comparison.json").read_text())
        assert cmp["t_test"]["status"] == "not testable"
        assert cmp["mean_difference"] == 0.0

    def test_compare_reports_paired_statistics(self, dataset, tmp_path):
        a = EvalReport.load(self._eval(dataset, tmp_path / "a"))
        b = EvalReport.load(self._eval(dataset, tmp_path / "b"))
        b.folds = [type(f)(**{**f.__dict__, "normalized_accuracy": f.normalized_accuracy + d})
                   for f, d in zip(b.folds, (0.01, 0.03, 0.02))]
        cmp = compare_reports(a, b)
        assert cmp["mean_difference"] == pytest.approx(0.02, abs=1e-12)
        assert cmp["t_test"]["df"] == 2 and cmp["t_test"]["t"] > 0

    def test_mismatched_folds_is_runtime_error(self, dataset, tmp_path):
        a = self._eval(dataset, tmp_path / "a")
        out = tmp_path / "w"
        assert main(["eval", "--scheme", "within", "--data", str(dataset),
                     "--out", str(out)]) == 0
        b = out / "report.json"
        rep_a = EvalReport.load(a)
        rep_a.folds = rep_a.folds[:2]
        rep_a.save(tmp_path / "short" / "report")
        assert main(["report", str(tmp_path / "short" / "report.json"), str(b),
                     "--out", str(tmp_path / "cmp")]) == 1

    def test_missing_report_file(self, tmp_path):
        assert main(["report", str(tmp_path / "x.json"), str(tmp_path / "y.json"),
                     "--out", str(tmp_path / "o")]) == 1
