#!/usr/bin/env python3

"""
Tests for score files, normalization, reports, configuration, the
experiment harness and the command-line entry point.
Run with: python test_spe_cli.py  (or pytest)
"""

import contextlib
import io
import json
import math
import os
import runpy
import sys
import tempfile
from unittest import mock

import numpy as np
import pandas as pd
import pytest

from cli import EXIT_IO_ERROR, EXIT_OK, EXIT_SPE_ERROR, main as cli_main
from configs.spe_config import CONFIG_ENV, SPEConfigManager, build_run_config
from tools.experiment_harness import aggregate_trials, run_experiment
from tools.mixture_model import UNLABELED, MixtureParams, ScoreDataset, generate_synthetic_dataset
from tools.performance_estimation import CurveBand, PerformanceCurve, empirical_pr_curve, threshold_grid
from tools.posterior_inference import InferenceSettings
from tools.score_distributions import DistributionSpec, FamilyTag
from tools.score_io import (
    load_scores,
    main as score_io_main,
    normalize_scores,
    sample_label_budget,
    subsample_dataset,
)
from tools.spe_errors import (
    ConfigError,
    ContractViolationError,
    DomainError,
    NormalizationError,
    ParseError,
    ReportError,
    ValidationError,
)
from tools.spe_report import NULL_MARKER, band_table, emit_report, load_report, new_report

GAMMA = FamilyTag.GAMMA
TNORM = FamilyTag.TRUNCATED_NORMAL
FAST = InferenceSettings(samples=20, starts=1)
CONFIG_SCRIPT = os.path.join(os.path.dirname(os.path.abspath(__file__)), "configs", "spe_config.py")


def reference_theta(pi: float = 0.1) -> MixtureParams:
    return MixtureParams(pi, DistributionSpec(GAMMA, (2.0, 0.05)), DistributionSpec(TNORM, (0.7, 0.1)))


def write_text(directory: str, name: str, text: str) -> str:
    path = os.path.join(directory, name)
    with open(path, "w") as f:
        f.write(text)
    return path


def write_dataset(directory: str, name: str, data: ScoreDataset) -> str:
    path = os.path.join(directory, name)
    labels = ["" if y == UNLABELED else str(int(y)) for y in data.labels]
    pd.DataFrame({"id": [f"item{i}" for i in range(data.n_items)], "score": data.scores,
                  "label": labels}).to_csv(path, index=False)
    return path


def run_cli(argv):
    stderr = io.StringIO()
    with contextlib.redirect_stderr(stderr):
        code = cli_main(argv)
    return code, stderr.getvalue()


# -- score files ------------------------------------------------------------

def test_load_scores_partial_labels():
    with tempfile.TemporaryDirectory() as tmp:
        path = write_text(tmp, "scores.csv", "id,score,label\na,0.2,1\nb,0.5,\nc,0.9,\n")
        data = load_scores(path)
    assert data.ids == ["a", "b", "c"]
    np.testing.assert_allclose(data.scores, [0.2, 0.5, 0.9])
    assert data.labels.tolist() == [1, UNLABELED, UNLABELED]
    assert data.labeled_idx.tolist() == [0]


def test_load_scores_without_label_column():
    with tempfile.TemporaryDirectory() as tmp:
        data = load_scores(write_text(tmp, "scores.csv", "id,score\nx,3.5\ny,-1\n"))
    assert data.labels.tolist() == [UNLABELED, UNLABELED]
    np.testing.assert_allclose(data.scores, [3.5, -1.0])


def test_load_scores_rejects_empty_files():
    with tempfile.TemporaryDirectory() as tmp:
        with pytest.raises(ValidationError):
            load_scores(write_text(tmp, "empty.csv", ""))
        with pytest.raises(ValidationError):
            load_scores(write_text(tmp, "header.csv", "id,score,label\n"))


def test_load_scores_names_duplicate_id():
    with tempfile.TemporaryDirectory() as tmp:
        path = write_text(tmp, "dup.csv", "id,score\nitem7,0.1\nother,0.2\nitem7,0.3\n")
        with pytest.raises(ValidationError) as excinfo:
            load_scores(path)
    assert "item7" in str(excinfo.value)


def test_load_scores_rejects_bad_label():
    with tempfile.TemporaryDirectory() as tmp:
        with pytest.raises(ValidationError):
            load_scores(write_text(tmp, "bad.csv", "id,score,label\na,0.1,2\n"))


def test_load_scores_reports_malformed_line():
    with tempfile.TemporaryDirectory() as tmp:
        with pytest.raises(ParseError) as excinfo:
            load_scores(write_text(tmp, "bad.csv", "id,score\na,0.1\nb,abc\n"))
        assert excinfo.value.line == 3
        with pytest.raises(ParseError) as excinfo:
            load_scores(write_text(tmp, "nohead.csv", "name,value\na,0.1\n"))
        assert excinfo.value.line == 1


# -- normalization and label budgets -----------------------------------------

def test_normalize_scores_example():
    normalized, mapping = normalize_scores([0.0, 5.0, 10.0])
    np.testing.assert_allclose(normalized, [0.01 / 10.01, 5.01 / 10.01, 1.0])
    assert mapping.delta == pytest.approx(0.01)
    assert normalized[-1] == 1.0

    shuffled, _ = normalize_scores([10.0, 0.0, 5.0])
    np.testing.assert_allclose(shuffled, [1.0, 0.01 / 10.01, 5.01 / 10.01])


def test_normalize_scores_rejects_constant_input():
    with pytest.raises(NormalizationError):
        normalize_scores([0.4, 0.4, 0.4])
    with pytest.raises(NormalizationError):
        normalize_scores([])


def test_raw_thresholds_keep_item_partitions():
    raw = np.array([3.0, -1.0, 7.5, 2.0, 3.0])
    normalized, mapping = normalize_scores(raw)
    taus = threshold_grid(normalized)
    raw_taus = mapping.raw_thresholds(taus, raw, normalized)
    for tau, raw_tau in zip(taus, raw_taus):
        assert ((normalized > tau) == (raw > raw_tau)).all(), (tau, raw_tau)
    np.testing.assert_allclose(mapping.invert(normalized[:-1]), raw[:-1])


def test_normalization_keeps_empirical_curves():
    rng = np.random.default_rng(21)
    for _ in range(5):
        raw = np.round(rng.normal(3.0, 4.0, size=80), 1)
        labels = (rng.random(80) < 0.4).astype(int)
        labels[0] = 1
        normalized, _ = normalize_scores(raw)
        before = empirical_pr_curve(raw, labels)
        after = empirical_pr_curve(normalized, labels)
        np.testing.assert_array_equal(before.recall, after.recall)
        np.testing.assert_array_equal(before.precision, after.precision)


def run_score_io(argv):
    stdout = io.StringIO()
    with contextlib.redirect_stdout(stdout):
        code = score_io_main(argv)
    return code, stdout.getvalue()


def test_score_io_actions():
    with tempfile.TemporaryDirectory() as tmp:
        path = write_text(tmp, "scores.csv", "id,score,label\na,0.0,0\nb,5.0,\nc,10.0,1\n")
        code, out = run_score_io(["summary", path])
        assert code == 0
        assert json.loads(out) == {"items": 3, "labeled": 2, "positives": 1, "negatives": 1,
                                   "min_score": 0.0, "max_score": 10.0}
        code, out = run_score_io(["normalize", path])
        assert code == 0
        assert json.loads(out)["delta"] == pytest.approx(0.01)
        assert run_score_io(["sort", path])[0] == 1
        assert run_score_io(["summary", os.path.join(tmp, "absent.csv")])[0] == 1
    assert run_score_io(["summary"])[0] == 1


def test_sample_label_budget():
    full = generate_synthetic_dataset(100, reference_theta(0.3), np.random.default_rng(1))
    everything = sample_label_budget(full, 100, np.random.default_rng(2))
    np.testing.assert_array_equal(everything.labels, full.labels)

    nothing = sample_label_budget(full, 0, np.random.default_rng(2))
    assert nothing.labeled_idx.size == 0

    first = sample_label_budget(full, 20, np.random.default_rng(3))
    second = sample_label_budget(full, 20, np.random.default_rng(3))
    np.testing.assert_array_equal(first.labels, second.labels)
    assert first.labeled_idx.size == 20
    np.testing.assert_array_equal(first.labels[first.labeled_idx], full.labels[first.labeled_idx])

    with pytest.raises(DomainError):
        sample_label_budget(full, 101, np.random.default_rng(4))
    with pytest.raises(ContractViolationError):
        sample_label_budget(first, 5, np.random.default_rng(4))


def test_subsample_dataset_keeps_order():
    data = ScoreDataset(np.arange(10) / 10.0, np.zeros(10), [f"i{k}" for k in range(10)])
    sub = subsample_dataset(data, 4, np.random.default_rng(5))
    assert sub.n_items == 4
    assert np.all(np.diff(sub.scores) > 0)
    assert sub.ids == [f"i{int(round(s * 10))}" for s in sub.scores]
    assert subsample_dataset(data, None, np.random.default_rng(5)) is data


# -- reports ----------------------------------------------------------------

def small_band() -> CurveBand:
    grid = np.linspace(0.0, 1.0, 5)
    quantiles = np.array([[np.nan, 0.5, 0.4, 0.3, 0.2], [np.nan, 0.9, 0.8, 0.6, 0.3]])
    mean = np.array([np.nan, 0.7, 0.6, 0.45, 0.25])
    return CurveBand(grid, (0.05, 0.95), quantiles, mean, np.array([3, 0, 0, 0, 0]))


def test_json_report_roundtrip_maps_nan_to_null():
    band = small_band()
    report = new_report("evaluate", {"seed": 1})
    report["band"] = {**band.to_dict(), "rows": band_table(band, PerformanceCurve(band.recall_grid, band.mean))}
    report["ess"] = np.float64(12.5)
    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, "report.json")
        assert emit_report(report, "json", path) == [path]
        loaded = load_report(path)
    assert loaded["schema_version"] == report["schema_version"]
    assert loaded["command"] == "evaluate"
    assert loaded["ess"] == 12.5
    assert loaded["band"]["rows"][0]["q0.05"] is None
    assert loaded["band"]["rows"][1]["q0.95"] == 0.9


def test_csv_report_writes_one_row_per_grid_point():
    band = small_band()
    report = new_report("evaluate", {"seed": 1})
    report["band"] = {**band.to_dict(), "rows": band_table(band, PerformanceCurve(band.recall_grid, band.mean))}
    report["items"] = [{"id": "a", "score": 0.3, "normalized_score": 1.0, "label": None, "p_positive": 0.2}]
    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, "report.csv")
        written = emit_report(report, "csv", path)
        assert written == [path, os.path.join(tmp, "report.items.csv")]
        table = pd.read_csv(path, dtype=str, keep_default_na=False)
        items = pd.read_csv(written[1], dtype=str, keep_default_na=False)
    assert len(table) == 5
    assert list(table.columns) == ["recall", "expected_precision", "q0.05", "q0.95", "excluded"]
    assert table.loc[0, "q0.05"] == NULL_MARKER
    assert items.loc[0, "label"] == NULL_MARKER


def test_report_errors():
    report = new_report("evaluate", {})
    with tempfile.TemporaryDirectory() as tmp:
        with pytest.raises(ReportError):
            emit_report(report, "xml", os.path.join(tmp, "r.xml"))
        with pytest.raises(ReportError):
            emit_report(report, "json", os.path.join(tmp, "missing", "r.json"))
        with pytest.raises(ReportError):
            load_report(write_text(tmp, "plain.json", json.dumps({"command": "fit"})))
        with pytest.raises(ReportError):
            load_report(write_text(tmp, "broken.json", "{not json"))


# -- configuration ----------------------------------------------------------

def test_config_defaults_are_valid():
    manager = SPEConfigManager()
    assert manager.validate_config() == {"valid": True, "issues": []}
    assert manager.get_setting("inference_settings.samples") == 500
    assert manager.get_setting("report_settings.quantile_levels") == [0.05, 0.5, 0.95]
    assert manager.get_setting("no.such.key", "fallback") == "fallback"


def test_config_validation_reports_issues():
    manager = SPEConfigManager()
    manager.set_setting("model_settings.families", ["gamma", "weibull"])
    manager.set_setting("report_settings.quantile_levels", [0.9, 0.1])
    manager.set_setting("inference_settings.samples", 0)
    issues = manager.validate_config()["issues"]
    assert not manager.validate_config()["valid"]
    assert len(issues) == 3
    with pytest.raises(ConfigError):
        manager.require_valid()


def test_config_file_merges_over_defaults():
    with tempfile.TemporaryDirectory() as tmp:
        path = write_text(tmp, "spe.json", json.dumps({"inference_settings": {"samples": 64}}))
        manager = SPEConfigManager(path)
        with pytest.raises(ConfigError):
            SPEConfigManager(os.path.join(tmp, "absent.json"))
    assert manager.get_setting("inference_settings.samples") == 64
    assert manager.get_setting("inference_settings.starts") == 10


def test_build_run_config():
    manager = SPEConfigManager()
    with pytest.raises(ConfigError):
        build_run_config(manager, "scores.csv", None)
    run = build_run_config(manager, "scores.csv", 7, {"inference_settings.samples": 32,
                                                      "report_settings.grid_size": None})
    assert run.seed == 7
    assert run.inference["samples"] == 32
    assert run.grid_size == 200
    assert run.families == [GAMMA, TNORM]


def run_config_script(argv, config_path):
    stdout = io.StringIO()
    with mock.patch.object(sys, "argv", ["spe_config.py", *argv]), \
            mock.patch.dict(os.environ, {CONFIG_ENV: config_path}), contextlib.redirect_stdout(stdout):
        runpy.run_path(CONFIG_SCRIPT, run_name="__main__")
    return stdout.getvalue()


def test_config_import_and_reset_actions():
    with tempfile.TemporaryDirectory() as tmp:
        target = write_text(tmp, "spe.json", "{}")
        source = write_text(tmp, "team.json", json.dumps({"inference_settings": {"samples": 64}}))

        assert "Import successful" in run_config_script(["import", source], target)
        assert SPEConfigManager(target).get_setting("inference_settings.samples") == 64
        assert SPEConfigManager(target).get_setting("inference_settings.starts") == 10

        assert "reset" in run_config_script(["reset"], target)
        with open(target) as f:
            assert json.load(f) == SPEConfigManager().default_config


def test_config_import_and_reset_methods():
    with tempfile.TemporaryDirectory() as tmp:
        source = write_text(tmp, "team.json", json.dumps({"report_settings": {"grid_size": 51}}))
        manager = SPEConfigManager()
        assert manager.import_config(source)
        assert manager.get_setting("report_settings.grid_size") == 51
        with contextlib.redirect_stdout(io.StringIO()):
            assert not manager.import_config(os.path.join(tmp, "absent.json"))
    manager.reset_to_defaults()
    assert manager.get_setting("report_settings.grid_size") == 200


# -- experiment harness -----------------------------------------------------

def test_aggregate_trials_folds_per_budget_and_method():
    rows = [
        {"budget": 10, "trial": 0, "method": "spe", "area_error": 0.1, "failure": None},
        {"budget": 10, "trial": 1, "method": "spe", "area_error": 0.3, "failure": None},
        {"budget": 10, "trial": 0, "method": "naive", "area_error": 0.2, "failure": None},
        {"budget": 10, "trial": 1, "method": "naive", "area_error": None, "failure": "curve_error: no positives"},
    ]
    naive, spe = aggregate_trials(rows)
    assert (spe["method"], spe["trials"], spe["failed"]) == ("spe", 2, 0)
    assert spe["mean"] == pytest.approx(0.2)
    assert spe["std_error"] == pytest.approx(0.1)
    assert spe["median"] == pytest.approx(0.2)
    assert spe["q0.05"] == pytest.approx(0.11)
    assert spe["q0.95"] == pytest.approx(0.29)
    assert (naive["method"], naive["failed"]) == ("naive", 1)
    assert naive["mean"] == pytest.approx(0.2)
    assert math.isnan(naive["std_error"])
    assert naive["q0.05"] == naive["q0.95"] == pytest.approx(0.2)


def test_experiment_with_every_label_has_no_error():
    data = generate_synthetic_dataset(200, reference_theta(0.3), np.random.default_rng(6))
    results = run_experiment(data, [200], 1, seed=3, pair=(GAMMA, TNORM), settings=FAST,
                             recall_grid=np.linspace(0.0, 1.0, 21))
    assert len(results["trials"]) == 2
    for row in results["trials"]:
        assert row["failure"] is None
        assert row["area_error"] < 1e-9


def test_experiment_is_deterministic_per_trial():
    data = generate_synthetic_dataset(300, reference_theta(0.3), np.random.default_rng(7))
    options = dict(pair=(GAMMA, TNORM), settings=FAST, recall_grid=np.linspace(0.0, 1.0, 21))
    one = run_experiment(data, [20], 1, seed=11, **options)
    again = run_experiment(data, [20], 1, seed=11, **options)
    two = run_experiment(data, [20], 2, seed=11, **options)
    assert one["trials"] == again["trials"]
    assert two["trials"][:2] == one["trials"]


def test_experiment_requires_ground_truth():
    data = ScoreDataset([0.1, 0.5, 0.9], [0, UNLABELED, 1])
    with pytest.raises(ContractViolationError):
        run_experiment(data, [2], 1, seed=1)


@pytest.mark.slow
def test_spe_beats_naive_at_small_budgets():
    data = generate_synthetic_dataset(2000, reference_theta(), np.random.default_rng(8))
    results = run_experiment(data, [10, 20], 10, seed=9, pair=(GAMMA, TNORM))
    summary = {(row["budget"], row["method"]): row for row in results["aggregates"]}
    spe, naive = summary[(20, "spe")], summary[(20, "naive")]
    assert spe["failed"] == 0
    assert spe["mean"] < naive["median"]
    assert spe["mean"] < 0.10

    ten_labels = [row["area_error"] for row in results["trials"]
                  if row["budget"] == 10 and row["method"] == "spe"]
    assert sum(error is not None and error < 0.15 for error in ten_labels) >= 8


# -- command line -----------------------------------------------------------

def test_cli_missing_seed_is_a_usage_error():
    with pytest.raises(SystemExit) as excinfo:
        with contextlib.redirect_stderr(io.StringIO()):
            cli_main(["fit", "--scores", "scores.csv"])
    assert excinfo.value.code == 2


def test_cli_exit_codes_for_failures():
    with tempfile.TemporaryDirectory() as tmp:
        code, _ = run_cli(["fit", "--scores", os.path.join(tmp, "absent.csv"), "--seed", "1"])
        assert code == EXIT_IO_ERROR

        constant = write_text(tmp, "constant.csv", "id,score\na,0.5\nb,0.5\n")
        code, stderr = run_cli(["fit", "--scores", constant, "--seed", "1"])
        assert code == EXIT_SPE_ERROR
        assert json.loads(stderr.strip().splitlines()[-1])["error_class"] == "normalization_error"

        plain = write_text(tmp, "plain.csv", "id,score\na,0.1\nb,0.5\nc,0.9\n")
        code, stderr = run_cli(["recalibrate", "--scores", plain, "--seed", "1"])
        assert code == EXIT_SPE_ERROR
        assert json.loads(stderr.strip().splitlines()[-1])["error_class"] == "config_error"


def test_cli_rank_dists_report():
    data = generate_synthetic_dataset(200, reference_theta(0.3), np.random.default_rng(10))
    with tempfile.TemporaryDirectory() as tmp:
        scores = write_dataset(tmp, "labeled.csv", data)
        out = os.path.join(tmp, "ranks.json")
        code, _ = run_cli(["rank-dists", "--scores", scores, "--seed", "4", "--out", out])
        assert code == EXIT_OK
        report = load_report(out)
    assert report["command"] == "rank-dists"
    assert set(report["rankings"]) == {"0", "1"}
    assert len(report["rankings"]["1"]) == len(FamilyTag)


def test_cli_evaluate_csv_tables():
    rng = np.random.default_rng(11)
    data = sample_label_budget(generate_synthetic_dataset(150, reference_theta(0.3), rng), 20, rng)
    with tempfile.TemporaryDirectory() as tmp:
        scores = write_dataset(tmp, "partial.csv", data)
        out = os.path.join(tmp, "eval.csv")
        code, _ = run_cli(["evaluate", "--scores", scores, "--seed", "5", "--samples", "30",
                           "--starts", "1", "--grid", "11", "--format", "csv", "--out", out])
        assert code == EXIT_OK
        band = pd.read_csv(out, dtype=str, keep_default_na=False)
        population = pd.read_csv(os.path.join(tmp, "eval.population_band.csv"), dtype=str,
                                 keep_default_na=False)
        items = pd.read_csv(os.path.join(tmp, "eval.items.csv"))
        densities = pd.read_csv(os.path.join(tmp, "eval.density_band.csv"))
    assert len(band) == 11
    assert population.loc[0, "q0.5"] == NULL_MARKER
    assert len(items) == 150
    assert items["p_positive"].between(0.0, 1.0).all()
    assert len(densities) == 11
    assert densities["score"].iloc[-1] == 1.0
    interior = densities[densities["score"] > 0.0]
    assert (interior["positive_q0.05"] <= interior["positive_q0.95"]).all()
    assert (interior["negative_mean"] >= 0.0).all()


def test_cli_experiment_full_budget():
    data = generate_synthetic_dataset(200, reference_theta(0.3), np.random.default_rng(12))
    with tempfile.TemporaryDirectory() as tmp:
        scores = write_dataset(tmp, "truth.csv", data)
        out = os.path.join(tmp, "experiment.json")
        code, _ = run_cli(["experiment", "--scores", scores, "--seed", "6", "--budget", "200",
                           "--trials", "1", "--samples", "20", "--starts", "1", "--grid", "11",
                           "--out", out])
        assert code == EXIT_OK
        report = load_report(out)
    for row in report["experiment"]["aggregates"]:
        assert row["failed"] == 0
        assert row["mean"] < 1e-9


def test_cli_error_payload_carries_context():
    with tempfile.TemporaryDirectory() as tmp:
        bad = write_text(tmp, "bad.csv", "id,score\na,0.1\nb,abc\n")
        code, stderr = run_cli(["fit", "--scores", bad, "--seed", "1"])
    payload = json.loads(stderr.strip().splitlines()[-1])
    assert code == EXIT_SPE_ERROR
    assert (payload["error_class"], payload["line"]) == ("parse_error", 3)
    assert payload["message"].startswith("line 3")


def test_cli_rank_dists_csv_flattens_params():
    data = generate_synthetic_dataset(200, reference_theta(0.3), np.random.default_rng(13))
    with tempfile.TemporaryDirectory() as tmp:
        scores = write_dataset(tmp, "labeled.csv", data)
        out = os.path.join(tmp, "ranks.csv")
        code, _ = run_cli(["rank-dists", "--scores", scores, "--seed", "4", "--format", "csv", "--out", out])
        assert code == EXIT_OK
        table = pd.read_csv(out)
    assert "params" not in table.columns
    assert {"param_shape", "param_scale", "param_loc"} <= set(table.columns)
    gamma = table[(table["family"] == "gamma") & (table["class"] == 1)].iloc[0]
    assert gamma["param_shape"] > 0 and gamma["param_scale"] > 0
    assert math.isnan(gamma["param_loc"])


def test_cli_recalibrate_csv_threshold_band():
    rng = np.random.default_rng(14)
    data = sample_label_budget(generate_synthetic_dataset(120, reference_theta(0.3), rng), 20, rng)
    with tempfile.TemporaryDirectory() as tmp:
        scores = write_dataset(tmp, "partial.csv", data)
        out = os.path.join(tmp, "recal.csv")
        code, _ = run_cli(["recalibrate", "--scores", scores, "--seed", "7", "--samples", "20",
                           "--starts", "1", "--grid", "11", "--condition", "0.3,0.5",
                           "--format", "csv", "--out", out])
        assert code == EXIT_OK
        conditions = pd.read_csv(out)
        performance = pd.read_csv(os.path.join(tmp, "recal.threshold_band.csv"))
        densities = pd.read_csv(os.path.join(tmp, "recal.density_band.csv"))
    assert len(performance) == len(conditions) == 121
    np.testing.assert_array_equal(performance["raw_tau"], conditions["raw_tau"])
    assert (performance["recall_q0.05"] <= performance["recall_q0.95"] + 1e-12).all()
    assert performance["recall_mean"].iloc[0] == pytest.approx(1.0)
    assert len(densities) == 11


def test_cli_reports_repeat_exactly_for_a_seed():
    rng = np.random.default_rng(15)
    data = sample_label_budget(generate_synthetic_dataset(100, reference_theta(0.3), rng), 20, rng)
    with tempfile.TemporaryDirectory() as tmp:
        scores = write_dataset(tmp, "partial.csv", data)
        texts = []
        for name in ("first.json", "second.json"):
            out = os.path.join(tmp, name)
            code, _ = run_cli(["recalibrate", "--scores", scores, "--seed", "8", "--samples", "20",
                               "--starts", "2", "--grid", "11", "--condition", "0.3,0.5", "--out", out])
            assert code == EXIT_OK
            with open(out) as f:
                texts.append([line for line in f.read().splitlines() if '"generated_at"' not in line])
    assert texts[0] == texts[1]



def main():
    """Run all tests"""
    print("=" * 60)
    print("SPE Command Line - Tests")
    print("=" * 60)

    run_slow = "--slow" in sys.argv
    results = {}
    for name, test in list(globals().items()):
        if not name.startswith("test_") or not callable(test):
            continue
        if not run_slow and any(mark.name == "slow" for mark in getattr(test, "pytestmark", [])):
            continue
        try:
            test()
            results[name] = True
            print(f"  ✓ {name}")
        except Exception as e:
            results[name] = False
            print(f"  ✗ {name}: {e}")

    passed = sum(results.values())
    print(f"\nTotal: {passed}/{len(results)} tests passed")
    return 0 if passed == len(results) else 1


if __name__ == "__main__":
    sys.exit(main())
