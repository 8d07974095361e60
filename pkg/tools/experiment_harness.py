#!/usr/bin/env python3

"""
SPE versus naive estimation across label budgets.

Each (budget, trial) pair draws its own label subset from a derived seed, so
trials are independent and any single one can be rerun in isolation.
"""

import logging
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from tools.mixture_model import PriorSpec, ScoreDataset, candidate_pairs, select_family_pair
from tools.performance_estimation import (
    area_between_curves,
    default_recall_grid,
    empirical_pr_curve,
    ensemble_curve_band,
    naive_estimate,
    project_curve,
)
from tools.posterior_inference import InferenceSettings, run_spe
from tools.score_distributions import FamilyTag
from tools.score_io import sample_label_budget
from tools.spe_errors import ContractViolationError, DomainError, SPEError

logger = logging.getLogger(__name__)

METHODS = ("spe", "naive")


def trial_rng(seed: int, budget_index: int, trial: int) -> np.random.Generator:
    return np.random.default_rng([seed, budget_index, trial])


def _spe_curve(labeled: ScoreDataset, priors: PriorSpec, pairs: Sequence[Tuple[FamilyTag, FamilyTag]],
               settings: InferenceSettings, rng: np.random.Generator, grid: np.ndarray):
    options = {"max_iterations": settings.max_iterations, "gradient_tolerance": settings.gradient_tolerance}
    if len(pairs) == 1:
        ensemble = run_spe(labeled, priors, pairs[0], settings.samples, settings.starts, rng, settings)
    else:
        chosen = select_family_pair(labeled, priors, pairs, settings.starts, rng, **options)
        ensemble = run_spe(labeled, priors, (chosen.family0, chosen.family1), settings.samples,
                           settings.starts, rng, settings, estimate=chosen.estimate)
    _, expected = ensemble_curve_band(ensemble, recall_grid=grid)
    return expected, ensemble


def run_experiment(data: ScoreDataset, budgets: Sequence[int], trials: int, seed: int,
                   priors: Optional[PriorSpec] = None,
                   families: Sequence[FamilyTag] = (FamilyTag.GAMMA, FamilyTag.TRUNCATED_NORMAL),
                   pair: Optional[Tuple[FamilyTag, FamilyTag]] = None,
                   settings: Optional[InferenceSettings] = None,
                   recall_grid: Optional[np.ndarray] = None) -> Dict[str, Any]:
    """
    For every budget and trial: reveal that many labels, estimate the PR curve
    with SPE and with the labeled items alone, and score both by their area
    against the ground-truth curve. A fixed `pair` skips family-pair
    selection over the candidates. All three curves are compared on the same
    recall grid. Failed trials are recorded, never fatal.
    """
    if not data.is_fully_labeled:
        raise ContractViolationError("experiments need ground-truth labels for every item")
    if trials < 1:
        raise DomainError(f"trials must be >= 1, got {trials}")
    if not budgets:
        raise DomainError("experiments need at least one label budget")
    priors = priors or PriorSpec()
    settings = settings or InferenceSettings()
    grid = default_recall_grid() if recall_grid is None else np.asarray(recall_grid, dtype=float)
    pairs = [pair] if pair is not None else candidate_pairs(families)
    truth = project_curve(empirical_pr_curve(data.scores, data.labels), grid)

    rows: List[Dict[str, Any]] = []
    for budget_index, budget in enumerate(budgets):
        for trial in range(trials):
            rng = trial_rng(seed, budget_index, trial)
            labeled = sample_label_budget(data, int(budget), rng)
            estimators = (
                ("spe", lambda: _spe_curve(labeled, priors, pairs, settings, rng, grid)[0]),
                ("naive", lambda: naive_estimate(labeled)),
            )
            for method, estimate in estimators:
                row = {"budget": int(budget), "trial": trial, "method": method,
                       "area_error": None, "failure": None}
                try:
                    curve = project_curve(estimate(), grid)
                    row["area_error"] = area_between_curves(truth, curve)
                except SPEError as e:
                    row["failure"] = f"{e.error_class}: {e}"
                    logger.warning("budget %d trial %d %s failed: %s", budget, trial, method, e)
                rows.append(row)
            logger.info("budget %d trial %d: %s", budget, trial,
                        {r["method"]: r["area_error"] for r in rows[-len(METHODS):]})

    return {"trials": rows, "aggregates": aggregate_trials(rows)}


def aggregate_trials(rows: Sequence[Dict[str, Any]]) -> List[Dict[str, Any]]:
    """Mean, standard error, median and 5%/95% quantiles of area_error per (budget, method); failures counted apart"""
    groups: Dict[Tuple[int, str], List[Dict[str, Any]]] = {}
    for row in rows:
        groups.setdefault((int(row["budget"]), row["method"]), []).append(row)

    aggregates = []
    for (budget, method), members in sorted(groups.items()):
        errors = np.array([r["area_error"] for r in members if r["area_error"] is not None], dtype=float)
        n = int(errors.size)
        aggregates.append({
            "budget": budget,
            "method": method,
            "trials": len(members),
            "failed": len(members) - n,
            "mean": float(np.mean(errors)) if n else float("nan"),
            "std_error": float(np.std(errors, ddof=1) / np.sqrt(n)) if n > 1 else float("nan"),
            "median": float(np.median(errors)) if n else float("nan"),
            "q0.05": float(np.quantile(errors, 0.05)) if n else float("nan"),
            "q0.95": float(np.quantile(errors, 0.95)) if n else float("nan"),
        })
    return aggregates
