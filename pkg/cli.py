#!/usr/bin/env python3

"""
Command-line entry point for semisupervised performance evaluation.

Commands: rank-dists, fit, evaluate, recalibrate, experiment. Every command
writes a report (JSON by default). Errors go to stderr as
{"error_class", "message"}; exit status 2 for evaluation errors, 3 for I/O.
"""

import argparse
import json
import logging
import os
import sys
from typing import Any, Callable, Dict, List, Optional

import numpy as np
from dotenv import load_dotenv

from configs.spe_config import LOG_LEVEL_ENV, RunConfig, build_run_config, load_manager
from tools.experiment_harness import run_experiment
from tools.mixture_model import PriorSpec, ScoreDataset, candidate_pairs, select_family_pair
from tools.performance_estimation import (
    ConditionSpec,
    condition_probability,
    default_recall_grid,
    default_score_grid,
    density_band,
    ensemble_curve_band,
    population_curve_band,
    recalibrate_threshold,
    threshold_band,
    threshold_grid,
)
from tools.posterior_inference import InferenceSettings, posterior_label_probability, run_spe
from tools.score_distributions import FamilyTag, rank_families
from tools.score_io import load_scores, normalize_dataset, subsample_dataset
from tools.spe_errors import ConfigError, ReportError, SPEError, ValidationError
from tools.spe_report import (
    band_table,
    condition_entry,
    density_table,
    emit_report,
    items_table,
    new_report,
    threshold_band_table,
)

logger = logging.getLogger("spe")

EXIT_OK = 0
EXIT_SPE_ERROR = 2
EXIT_IO_ERROR = 3


def _float_list(text: str) -> List[float]:
    try:
        return [float(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise ConfigError(f"expected a comma-separated list of numbers, got '{text}'")


def _int_list(values: Optional[List[str]]) -> Optional[List[int]]:
    if not values:
        return None
    try:
        return [int(part) for text in values for part in text.split(",") if part.strip()]
    except ValueError:
        raise ConfigError(f"budgets must be integers, got {values}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cli.py",
                                     description="Estimate precision-recall curves from scores and few labels")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--scores", required=True, help="score file with header id,score[,label]")
    common.add_argument("--seed", type=int, required=True, help="random seed (required)")
    common.add_argument("--families", help="comma-separated candidate families")
    common.add_argument("--samples", type=int, help="number of importance samples M")
    common.add_argument("--starts", type=int, help="MAP optimizer starts")
    common.add_argument("--quantiles", help="band quantile levels, e.g. 0.05,0.5,0.95")
    common.add_argument("--grid", type=int, help="recall grid size")
    common.add_argument("--out", help="output path (JSON to stdout when omitted)")
    common.add_argument("--format", choices=("json", "csv"), help="report format")
    common.add_argument("--config", help="JSON config file (default: $SPE_CONFIG)")
    common.add_argument("-v", "--verbose", action="count", default=0)

    subparsers = parser.add_subparsers(dest="command", required=True)
    subparsers.add_parser("rank-dists", parents=[common], help="rank score families per labeled class")
    subparsers.add_parser("fit", parents=[common], help="MAP estimate with family-pair selection")
    subparsers.add_parser("evaluate", parents=[common], help="full evaluation with curve bands")

    recal = subparsers.add_parser("recalibrate", parents=[common],
                                  help="condition probabilities and a recommended threshold")
    recal.add_argument("--condition", action="append", default=[], metavar="R,P",
                       help="require recall > R and precision > P (repeatable)")
    recal.add_argument("--confidence", type=float, help="required condition probability")

    experiment = subparsers.add_parser("experiment", parents=[common],
                                       help="SPE versus naive estimation across label budgets")
    experiment.add_argument("--budget", action="append", metavar="T[,T...]", help="label budget(s)")
    experiment.add_argument("--trials", type=int, help="trials per budget")
    experiment.add_argument("--subsample", type=int, help="subsample the dataset to this many items")
    return parser


def configure_logging(verbosity: int):
    if verbosity >= 2:
        level = logging.DEBUG
    elif verbosity == 1:
        level = logging.INFO
    else:
        level = getattr(logging, os.environ.get(LOG_LEVEL_ENV, "WARNING").upper(), logging.WARNING)
    logging.basicConfig(level=level, stream=sys.stderr,
                        format="%(asctime)s %(name)s %(levelname)s: %(message)s")


def resolve_run_config(args: argparse.Namespace) -> RunConfig:
    manager = load_manager(args.config)
    families = [f.strip() for f in args.families.split(",")] if args.families else None
    if families is None and args.command == "rank-dists":
        families = [tag.value for tag in FamilyTag]
    overrides: Dict[str, Any] = {
        "model_settings.families": families,
        "inference_settings.samples": args.samples,
        "inference_settings.starts": args.starts,
        "report_settings.quantile_levels": _float_list(args.quantiles) if args.quantiles else None,
        "report_settings.grid_size": args.grid,
        "report_settings.format": args.format,
        "report_settings.confidence": getattr(args, "confidence", None),
        "experiment_settings.budgets": _int_list(getattr(args, "budget", None)),
        "experiment_settings.trials": getattr(args, "trials", None),
        "experiment_settings.subsample": getattr(args, "subsample", None),
    }
    conditions = []
    for text in getattr(args, "condition", []):
        spec = ConditionSpec.parse(text)
        conditions.append((spec.min_recall, spec.min_precision))
    return build_run_config(manager, args.scores, args.seed, overrides, args.out, conditions)


def _settings(run: RunConfig) -> InferenceSettings:
    return InferenceSettings.from_dict(run.inference)


def _fit(run: RunConfig, data: ScoreDataset, rng: np.random.Generator):
    settings = _settings(run)
    return select_family_pair(data, PriorSpec.from_dict(run.priors), candidate_pairs(run.families),
                              settings.starts, rng, max_iterations=settings.max_iterations,
                              gradient_tolerance=settings.gradient_tolerance)


def _evaluate(run: RunConfig, data: ScoreDataset, rng: np.random.Generator):
    settings = _settings(run)
    selection = _fit(run, data, rng)
    ensemble = run_spe(data, PriorSpec.from_dict(run.priors), (selection.family0, selection.family1),
                       settings.samples, settings.starts, rng, settings, estimate=selection.estimate)
    return selection, ensemble


def _model_section(selection) -> Dict[str, Any]:
    return {
        "families": [selection.family0.value, selection.family1.value],
        "map": selection.estimate.to_dict(),
        "pairs": selection.table,
    }


def command_rank_dists(run: RunConfig, raw: ScoreDataset, rng: np.random.Generator) -> Dict[str, Any]:
    data, mapping = normalize_dataset(raw)
    if data.labeled_idx.size == 0:
        raise ValidationError("rank-dists needs labeled items")
    report = new_report("rank-dists", run.to_dict())
    report["normalization"] = mapping.to_dict()
    report["rankings"] = {}
    for label in (0, 1):
        scores = data.scores_with_label(label)
        if scores.size == 0:
            continue
        ranked = rank_families(scores, run.holdout_fraction, rng, run.families)
        report["rankings"][str(label)] = [row.to_dict() for row in ranked]
        print(f"class {label}: " + ", ".join(row.family.value for row in ranked if not row.failed),
              file=sys.stderr)
    return report


def command_fit(run: RunConfig, raw: ScoreDataset, rng: np.random.Generator) -> Dict[str, Any]:
    data, mapping = normalize_dataset(raw)
    selection = _fit(run, data, rng)
    report = new_report("fit", run.to_dict())
    report["normalization"] = mapping.to_dict()
    report["model"] = _model_section(selection)
    return report


def _evaluation_report(command: str, run: RunConfig, raw: ScoreDataset, rng: np.random.Generator):
    data, mapping = normalize_dataset(raw)
    selection, ensemble = _evaluate(run, data, rng)
    grid = default_recall_grid(run.grid_size)
    band, expected = ensemble_curve_band(ensemble, data, grid, run.quantile_levels)
    population_band, population_expected = population_curve_band(ensemble, grid, run.quantile_levels)
    densities = density_band(ensemble, default_score_grid(run.grid_size), run.quantile_levels)

    report = new_report(command, run.to_dict())
    report["normalization"] = mapping.to_dict()
    report["model"] = _model_section(selection)
    report["ensemble"] = ensemble.diagnostics()
    report["expected_curve"] = expected.to_dict()
    report["band"] = {**band.to_dict(), "rows": band_table(band, expected)}
    report["population_band"] = {**population_band.to_dict(),
                                 "rows": band_table(population_band, population_expected)}
    report["density_band"] = {**densities.to_dict(), "rows": density_table(densities)}
    report["items"] = items_table(raw, data, posterior_label_probability(ensemble))
    return report, data, mapping, ensemble


def command_evaluate(run: RunConfig, raw: ScoreDataset, rng: np.random.Generator) -> Dict[str, Any]:
    report, _, _, ensemble = _evaluation_report("evaluate", run, raw, rng)
    print(f"ESS {ensemble.ess:.1f} of {ensemble.size} samples", file=sys.stderr)
    return report


def command_recalibrate(run: RunConfig, raw: ScoreDataset, rng: np.random.Generator) -> Dict[str, Any]:
    if not run.conditions:
        raise ConfigError("recalibrate needs at least one --condition R,P")
    report, data, mapping, ensemble = _evaluation_report("recalibrate", run, raw, rng)
    taus = threshold_grid(data.scores)
    raw_taus = mapping.raw_thresholds(taus, raw.scores, data.scores)
    performance = threshold_band(ensemble, data, taus, run.quantile_levels)
    report["threshold_band"] = {**performance.to_dict(), "raw_tau": list(raw_taus),
                                "rows": threshold_band_table(performance, raw_taus)}
    report["conditions"] = []
    for min_recall, min_precision in run.conditions:
        condition = ConditionSpec(min_recall, min_precision)
        probabilities = condition_probability(ensemble, data, condition, taus)
        recommendation = recalibrate_threshold(taus, probabilities, run.confidence)
        raw_tau = float(raw_taus[recommendation.index])
        report["conditions"].append(condition_entry(condition.to_dict(), taus, raw_taus, probabilities,
                                                    recommendation, raw_tau, run.confidence))
        status = "met" if recommendation.met else "NOT met"
        print(f"R>{min_recall:g}, P>{min_precision:g}: tau={raw_tau:g} "
              f"p={recommendation.probability:.3f} ({status} at {run.confidence:g})", file=sys.stderr)
    return report


def command_experiment(run: RunConfig, raw: ScoreDataset, rng: np.random.Generator) -> Dict[str, Any]:
    if not raw.is_fully_labeled:
        raise ValidationError("experiment needs a label for every item")
    if not run.budgets:
        raise ConfigError("experiment needs at least one --budget")
    data, mapping = normalize_dataset(subsample_dataset(raw, run.subsample, rng))
    results = run_experiment(data, run.budgets, run.trials, run.seed, PriorSpec.from_dict(run.priors),
                             families=run.families, settings=_settings(run),
                             recall_grid=default_recall_grid(run.grid_size))
    report = new_report("experiment", run.to_dict())
    report["normalization"] = mapping.to_dict()
    report["experiment"] = results
    for row in results["aggregates"]:
        print(f"budget {row['budget']:>5} {row['method']:<6} mean {row['mean']:.4f} "
              f"se {row['std_error']:.4f} ({row['failed']} failed)", file=sys.stderr)
    return report


COMMANDS: Dict[str, Callable[[RunConfig, ScoreDataset, np.random.Generator], Dict[str, Any]]] = {
    "rank-dists": command_rank_dists,
    "fit": command_fit,
    "evaluate": command_evaluate,
    "recalibrate": command_recalibrate,
    "experiment": command_experiment,
}


def _fail(payload: Dict[str, Any], code: int) -> int:
    print(json.dumps(payload), file=sys.stderr)
    return code


def main(argv: Optional[List[str]] = None) -> int:
    load_dotenv()
    args = build_parser().parse_args(argv)
    configure_logging(args.verbose)
    try:
        run = resolve_run_config(args)
        raw = load_scores(run.scores_path)
        rng = np.random.default_rng(run.seed)
        report = COMMANDS[args.command](run, raw, rng)
        written = emit_report(report, run.output_format, run.output_path)
    except ReportError as e:
        return _fail(e.to_dict(), EXIT_IO_ERROR)
    except SPEError as e:
        logger.debug("command failed", exc_info=True)
        return _fail(e.to_dict(), EXIT_SPE_ERROR)
    except OSError as e:
        return _fail({"error_class": "io_error", "message": str(e)}, EXIT_IO_ERROR)
    for path in written:
        print(f"Report written to {path}", file=sys.stderr)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
