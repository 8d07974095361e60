#!/usr/bin/env python3

"""
Precision-recall performance from model parameters and from completed labelings.

Population performance comes straight from theta. Sample performance sweeps
the observed scores with labels completed by the posterior ensemble, which is
what bands, condition probabilities and recalibration are built on.
Undefined precision (nothing predicted positive) is NaN throughout.
"""

import logging
from dataclasses import dataclass
from typing import Any, Dict, Optional, Sequence, Tuple

import numpy as np

from tools.mixture_model import UNLABELED, MixtureParams, ScoreDataset
from tools.posterior_inference import PosteriorEnsemble
from tools.spe_errors import ContractViolationError, CurveError, DomainError, MetricError

logger = logging.getLogger(__name__)

DEFAULT_LEVELS = (0.05, 0.5, 0.95)
DEFAULT_GRID_SIZE = 200
_RECALL_TOLERANCE = 1e-12


@dataclass
class PerformanceCurve:
    """Recall-indexed precision values, optionally annotated with thresholds"""
    recall: np.ndarray
    precision: np.ndarray
    thresholds: Optional[np.ndarray] = None

    def __post_init__(self):
        self.recall = np.asarray(self.recall, dtype=float)
        self.precision = np.asarray(self.precision, dtype=float)
        if self.thresholds is not None:
            self.thresholds = np.asarray(self.thresholds, dtype=float)

    def __len__(self) -> int:
        return int(self.recall.size)

    def to_dict(self) -> Dict[str, Any]:
        out = {"recall": self.recall.tolist(), "precision": self.precision.tolist()}
        if self.thresholds is not None:
            out["thresholds"] = self.thresholds.tolist()
        return out


@dataclass
class CurveBand:
    """Pointwise weighted quantiles of precision on a recall grid"""
    recall_grid: np.ndarray
    levels: Tuple[float, ...]
    quantiles: np.ndarray
    mean: np.ndarray
    excluded: np.ndarray

    @property
    def lower(self) -> np.ndarray:
        return self.quantiles[0]

    @property
    def upper(self) -> np.ndarray:
        return self.quantiles[-1]

    def width(self) -> np.ndarray:
        return self.upper - self.lower

    def to_dict(self) -> Dict[str, Any]:
        return {
            "levels": list(self.levels),
            "recall": self.recall_grid.tolist(),
            "quantiles": {f"{level:g}": row.tolist() for level, row in zip(self.levels, self.quantiles)},
            "mean": self.mean.tolist(),
            "excluded": self.excluded.tolist(),
        }


@dataclass(frozen=True)
class ConditionSpec:
    """C(tau) = [R(tau) > min_recall and P(tau) > min_precision]"""
    min_recall: float
    min_precision: float

    def __post_init__(self):
        for name in ("min_recall", "min_precision"):
            value = float(getattr(self, name))
            if not 0.0 <= value <= 1.0:
                raise DomainError(f"condition {name} must lie in [0, 1], got {value}")
            object.__setattr__(self, name, value)

    @classmethod
    def parse(cls, text: str) -> "ConditionSpec":
        """Parse 'r,p' as given on the command line"""
        try:
            recall, precision = (float(part) for part in text.split(","))
        except ValueError:
            raise DomainError(f"condition must look like 'recall,precision', got '{text}'")
        return cls(recall, precision)

    def satisfied(self, recall: np.ndarray, precision: np.ndarray) -> np.ndarray:
        with np.errstate(invalid="ignore"):
            met = (np.asarray(recall) > self.min_recall) & (np.asarray(precision) > self.min_precision)
        return met & ~np.isnan(recall) & ~np.isnan(precision)

    def to_dict(self) -> Dict[str, float]:
        return {"min_recall": self.min_recall, "min_precision": self.min_precision}


@dataclass
class ThresholdRecommendation:
    tau: float
    probability: float
    met: bool
    index: int

    def to_dict(self) -> Dict[str, Any]:
        return {"tau": self.tau, "probability": self.probability, "met": self.met}


@dataclass
class ThresholdBand:
    """Weighted quantiles of sample recall and precision at fixed thresholds"""
    tau_grid: np.ndarray
    levels: Tuple[float, ...]
    recall_quantiles: np.ndarray
    precision_quantiles: np.ndarray
    recall_mean: np.ndarray
    precision_mean: np.ndarray

    def to_dict(self) -> Dict[str, Any]:
        return {
            "levels": list(self.levels),
            "tau": self.tau_grid.tolist(),
            "recall_quantiles": {f"{l:g}": row.tolist() for l, row in zip(self.levels, self.recall_quantiles)},
            "precision_quantiles": {f"{l:g}": row.tolist() for l, row in zip(self.levels, self.precision_quantiles)},
            "recall_mean": self.recall_mean.tolist(),
            "precision_mean": self.precision_mean.tolist(),
        }


@dataclass
class DensityBand:
    """Weighted quantiles of (1 - pi) p0(s) and pi p1(s) on a score grid"""
    score_grid: np.ndarray
    levels: Tuple[float, ...]
    negative_quantiles: np.ndarray
    positive_quantiles: np.ndarray
    negative_mean: np.ndarray
    positive_mean: np.ndarray

    def width(self) -> Tuple[np.ndarray, np.ndarray]:
        return (self.negative_quantiles[-1] - self.negative_quantiles[0],
                self.positive_quantiles[-1] - self.positive_quantiles[0])

    def to_dict(self) -> Dict[str, Any]:
        return {
            "levels": list(self.levels),
            "score": self.score_grid.tolist(),
            "negative_quantiles": {f"{l:g}": row.tolist() for l, row in zip(self.levels, self.negative_quantiles)},
            "positive_quantiles": {f"{l:g}": row.tolist() for l, row in zip(self.levels, self.positive_quantiles)},
            "negative_mean": self.negative_mean.tolist(),
            "positive_mean": self.positive_mean.tolist(),
        }


def default_recall_grid(size: int = DEFAULT_GRID_SIZE) -> np.ndarray:
    if size < 2:
        raise DomainError(f"recall grid needs at least 2 points, got {size}")
    return np.linspace(0.0, 1.0, size)


def validate_levels(levels: Sequence[float]) -> Tuple[float, ...]:
    values = tuple(float(level) for level in levels)
    if not values or any(not 0.0 < v < 1.0 for v in values) or any(
            b <= a for a, b in zip(values, values[1:])):
        raise DomainError(f"quantile levels must be strictly increasing in (0, 1), got {list(levels)}")
    return values


# -- population performance -------------------------------------------------

def recall_population(tau, theta: MixtureParams):
    """R(tau; theta): mass of the positive component above tau"""
    return theta.component1.survival(tau)


def precision_population(tau, theta: MixtureParams):
    """P(tau; theta); NaN where no mass of either component lies above tau"""
    pos = theta.pi * np.asarray(theta.component1.survival(tau), dtype=float)
    neg = (1.0 - theta.pi) * np.asarray(theta.component0.survival(tau), dtype=float)
    denominator = pos + neg
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.where(denominator > 0.0, pos / denominator, np.nan)
    return float(out) if np.ndim(tau) == 0 else out


def precision_at_recall(r, theta: MixtureParams):
    """P_r(r; theta) = P(R^-1(r; theta); theta); NaN at r = 0"""
    recall = np.asarray(r, dtype=float)
    if np.any(np.isnan(recall)) or np.any((recall < 0.0) | (recall > 1.0)):
        raise DomainError(f"recall must lie in [0, 1], got {r}")
    tau = np.asarray(theta.component1.quantile(np.clip(1.0 - recall, 0.0, 1.0)), dtype=float)
    out = np.asarray(precision_population(tau, theta), dtype=float)
    out = np.where(recall == 0.0, np.nan, out)
    return float(out) if np.ndim(r) == 0 else out


def population_curve(theta: MixtureParams, recall_grid: Optional[np.ndarray] = None) -> PerformanceCurve:
    grid = default_recall_grid() if recall_grid is None else np.asarray(recall_grid, dtype=float)
    tau = np.asarray(theta.component1.quantile(np.clip(1.0 - grid, 0.0, 1.0)), dtype=float)
    return PerformanceCurve(grid, precision_at_recall(grid, theta), tau)


# -- sample performance -----------------------------------------------------

def _sweep(scores: np.ndarray, label_matrix: np.ndarray):
    """
    Descending threshold sweep over the observed scores, tied scores grouped.

    Returns distinct thresholds, predicted-positive counts and true-positive
    counts (one row per labeling) at each step s >= threshold.
    """
    order = np.argsort(-scores, kind="mergesort")
    ordered = scores[order]
    last_of_group = np.r_[ordered[1:] != ordered[:-1], True]
    true_pos = np.cumsum(label_matrix[:, order], axis=1)[:, last_of_group]
    predicted = np.flatnonzero(last_of_group) + 1
    return ordered[last_of_group], predicted, true_pos


def _step_values(recall: np.ndarray, precision: np.ndarray, grid: np.ndarray) -> np.ndarray:
    """
    Step interpolation: the rightmost point of each recall level holds on
    (previous level, level]; values below the first level carry the first.
    """
    keep = np.r_[recall[1:] != recall[:-1], True]
    levels, values = recall[keep], precision[keep]
    index = np.searchsorted(levels, np.asarray(grid, dtype=float) - _RECALL_TOLERANCE, side="left")
    inside = index < levels.size
    return np.where(inside, values[np.minimum(index, levels.size - 1)], np.nan)


def empirical_pr_curve(scores: Sequence[float], labels: Sequence[int]) -> PerformanceCurve:
    s = np.asarray(scores, dtype=float)
    y = np.asarray(labels)
    if s.shape != y.shape:
        raise ContractViolationError(f"{s.size} scores but {y.size} labels")
    if np.any(y == UNLABELED):
        raise ContractViolationError("empirical curve needs a label for every item")
    positives = int(np.sum(y == 1))
    if positives == 0:
        raise CurveError("precision-recall curve needs at least one positive label")
    thresholds, predicted, true_pos = _sweep(s, (y == 1).astype(np.int64)[None, :])
    tp = true_pos[0].astype(float)
    return PerformanceCurve(tp / positives, tp / predicted, thresholds)


def project_curve(curve: PerformanceCurve, recall_grid: np.ndarray) -> PerformanceCurve:
    """Step-interpolate a curve onto a recall grid, dropping undefined points"""
    order = np.argsort(curve.recall, kind="mergesort")
    values = _step_values(curve.recall[order], curve.precision[order], recall_grid)
    defined = ~np.isnan(values)
    return PerformanceCurve(np.asarray(recall_grid, dtype=float)[defined], values[defined])


def weighted_quantile(values: Sequence[float], weights: Sequence[float],
                      levels: Sequence[float]) -> np.ndarray:
    """Inverted weighted cdf: the smallest value whose cumulative weight reaches each level"""
    v = np.asarray(values, dtype=float)
    w = np.asarray(weights, dtype=float)
    order = np.argsort(v, kind="mergesort")
    cumulative = np.cumsum(w[order])
    cumulative /= cumulative[-1]
    index = np.searchsorted(cumulative, np.asarray(levels, dtype=float), side="left")
    return v[order][np.minimum(index, v.size - 1)]


def _weighted_columns(values: np.ndarray, weights: np.ndarray, levels: Tuple[float, ...]):
    """Per-column weighted quantiles and mean, ignoring NaN entries"""
    n_points = values.shape[1]
    quantiles = np.full((len(levels), n_points), np.nan)
    means = np.full(n_points, np.nan)
    excluded = np.isnan(values).sum(axis=0)
    for g in range(n_points):
        column = values[:, g]
        defined = ~np.isnan(column)
        w = weights[defined]
        if not defined.any() or w.sum() <= 0.0:
            continue
        quantiles[:, g] = weighted_quantile(column[defined], w, levels)
        means[g] = float(np.dot(w, column[defined]) / w.sum())
    return quantiles, means, excluded


def ensemble_curve_band(ensemble: PosteriorEnsemble, data: Optional[ScoreDataset] = None,
                        recall_grid: Optional[np.ndarray] = None,
                        levels: Sequence[float] = DEFAULT_LEVELS) -> Tuple[CurveBand, PerformanceCurve]:
    """
    Weighted pointwise band of sample PR curves across the completed labelings,
    plus the weighted expected curve.
    """
    if ensemble.size == 0:
        raise DomainError("curve band needs a nonempty ensemble")
    data = data or ensemble.dataset
    levels = validate_levels(levels)
    grid = default_recall_grid() if recall_grid is None else np.asarray(recall_grid, dtype=float)

    _, predicted, true_pos = _sweep(data.scores, ensemble.label_matrix().astype(np.int64))
    positives = true_pos[:, -1]
    values = np.full((ensemble.size, grid.size), np.nan)
    for m in range(ensemble.size):
        if positives[m] == 0:
            continue
        tp = true_pos[m].astype(float)
        values[m] = _step_values(tp / positives[m], tp / predicted, grid)

    quantiles, means, excluded = _weighted_columns(values, ensemble.weights, levels)
    if excluded.any():
        logger.info("band: %d member-points with undefined precision excluded", int(excluded.sum()))
    band = CurveBand(grid, levels, quantiles, means, excluded)
    return band, PerformanceCurve(grid, means)


def population_curve_band(ensemble: PosteriorEnsemble, recall_grid: Optional[np.ndarray] = None,
                          levels: Sequence[float] = DEFAULT_LEVELS) -> Tuple[CurveBand, PerformanceCurve]:
    """Weighted band of P_r(r; theta_m) across the parameter draws"""
    if ensemble.size == 0:
        raise DomainError("curve band needs a nonempty ensemble")
    levels = validate_levels(levels)
    grid = default_recall_grid() if recall_grid is None else np.asarray(recall_grid, dtype=float)
    values = np.vstack([precision_at_recall(grid, theta) for theta in ensemble.params])
    quantiles, means, excluded = _weighted_columns(values, ensemble.weights, levels)
    return CurveBand(grid, levels, quantiles, means, excluded), PerformanceCurve(grid, means)


def _threshold_performance(ensemble: PosteriorEnsemble, data: ScoreDataset,
                           tau_grid: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Sample recall and precision (M x T) of the rule s > tau for every completed labeling"""
    matrix = ensemble.label_matrix().astype(np.int64)
    order = np.argsort(-data.scores, kind="mergesort")
    cumulative_tp = np.cumsum(matrix[:, order], axis=1)
    positives = cumulative_tp[:, -1].astype(float)
    ascending = np.sort(data.scores)
    n_above = data.n_items - np.searchsorted(ascending, tau_grid, side="right")
    tp_above = np.where(n_above > 0, cumulative_tp[:, np.maximum(n_above - 1, 0)], 0).astype(float)
    with np.errstate(invalid="ignore", divide="ignore"):
        recall = np.where(positives[:, None] > 0, tp_above / positives[:, None], np.nan)
        precision = np.where(n_above > 0, tp_above / np.maximum(n_above, 1), np.nan)
    return recall, precision


def threshold_band(ensemble: PosteriorEnsemble, data: Optional[ScoreDataset] = None,
                   tau_grid: Optional[Sequence[float]] = None,
                   levels: Sequence[float] = DEFAULT_LEVELS) -> ThresholdBand:
    if ensemble.size == 0:
        raise DomainError("threshold band needs a nonempty ensemble")
    data = data or ensemble.dataset
    levels = validate_levels(levels)
    taus = np.asarray(threshold_grid(data.scores) if tau_grid is None else tau_grid, dtype=float)
    recall, precision = _threshold_performance(ensemble, data, taus)
    r_q, r_mean, _ = _weighted_columns(recall, ensemble.weights, levels)
    p_q, p_mean, _ = _weighted_columns(precision, ensemble.weights, levels)
    return ThresholdBand(taus, levels, r_q, p_q, r_mean, p_mean)


def weighted_component_densities(theta: MixtureParams, scores: Sequence[float]) -> Tuple[np.ndarray, np.ndarray]:
    """(1 - pi) p0(s) and pi p1(s); their sum is the mixture density"""
    s = np.asarray(scores, dtype=float)
    negative = (1.0 - theta.pi) * np.exp(theta.component0.log_pdf(s))
    positive = theta.pi * np.exp(theta.component1.log_pdf(s))
    return negative, positive


def default_score_grid(size: int = DEFAULT_GRID_SIZE) -> np.ndarray:
    if size < 2:
        raise DomainError(f"score grid needs at least 2 points, got {size}")
    return np.linspace(0.0, 1.0, size)


def density_band(ensemble: PosteriorEnsemble, score_grid: Optional[Sequence[float]] = None,
                 levels: Sequence[float] = DEFAULT_LEVELS) -> DensityBand:
    """Weighted band of the fitted class-conditional score densities across the parameter draws"""
    if ensemble.size == 0:
        raise DomainError("density band needs a nonempty ensemble")
    levels = validate_levels(levels)
    grid = default_score_grid() if score_grid is None else np.asarray(score_grid, dtype=float)
    densities = [weighted_component_densities(theta, grid) for theta in ensemble.params]
    negative = np.vstack([d[0] for d in densities])
    positive = np.vstack([d[1] for d in densities])
    n_q, n_mean, _ = _weighted_columns(negative, ensemble.weights, levels)
    p_q, p_mean, _ = _weighted_columns(positive, ensemble.weights, levels)
    return DensityBand(grid, levels, n_q, p_q, n_mean, p_mean)


def threshold_grid(scores: Sequence[float]) -> np.ndarray:
    """0 followed by every distinct observed score"""
    return np.unique(np.r_[0.0, np.asarray(scores, dtype=float)])


def area_between_curves(curve_a: PerformanceCurve, curve_b: PerformanceCurve) -> float:
    """Integral of |P_a(r) - P_b(r)| dr over the common recall range of two step curves"""
    curves = []
    for curve in (curve_a, curve_b):
        defined = ~(np.isnan(curve.recall) | np.isnan(curve.precision))
        recall, precision = curve.recall[defined], curve.precision[defined]
        if recall.size == 0:
            raise MetricError("curve has no defined points")
        order = np.argsort(recall, kind="mergesort")
        curves.append((recall[order], precision[order]))
    (ra, pa), (rb, pb) = curves
    lo, hi = max(ra[0], rb[0]), min(ra[-1], rb[-1])
    if lo > hi:
        raise MetricError(f"recall ranges [{ra[0]:g}, {ra[-1]:g}] and [{rb[0]:g}, {rb[-1]:g}] do not overlap")
    breaks = np.union1d(ra, rb)
    breaks = np.r_[breaks[(breaks > lo) & (breaks < hi)], hi]
    if hi == lo:
        return 0.0
    widths = np.diff(np.r_[lo, breaks])
    gap = np.abs(_step_values(ra, pa, breaks) - _step_values(rb, pb, breaks))
    return float(np.sum(widths * gap))


def naive_estimate(data: ScoreDataset) -> PerformanceCurve:
    """PR curve from the labeled items alone, ignoring every unlabeled score"""
    subset = data.labeled_subset()
    if not np.any(subset.labels == 1):
        raise CurveError("naive estimate needs at least one labeled positive")
    return empirical_pr_curve(subset.scores, subset.labels)


def condition_probability(ensemble: PosteriorEnsemble, data: Optional[ScoreDataset],
                          condition: ConditionSpec, tau_grid: Sequence[float]) -> np.ndarray:
    """p(C(tau) = 1) = sum_m w_m [R_m(tau) > r and P_m(tau) > p] for each tau"""
    if ensemble.size == 0:
        raise DomainError("condition probability needs a nonempty ensemble")
    data = data or ensemble.dataset
    taus = np.asarray(tau_grid, dtype=float)
    recall, precision = _threshold_performance(ensemble, data, taus)
    met = condition.satisfied(recall, precision).astype(float)
    return np.clip(ensemble.weights @ met, 0.0, 1.0)


def recalibrate_threshold(tau_grid: Sequence[float], probabilities: Sequence[float],
                          confidence: float) -> ThresholdRecommendation:
    """
    Lowest tau (so highest recall) whose condition probability reaches the
    confidence level; otherwise the most probable tau, flagged as not met.
    """
    taus = np.asarray(tau_grid, dtype=float)
    probs = np.asarray(probabilities, dtype=float)
    if taus.size == 0:
        raise DomainError("recalibration needs a nonempty threshold grid")
    if taus.shape != probs.shape:
        raise DomainError(f"{taus.size} thresholds but {probs.size} probabilities")
    if not 0.0 <= confidence <= 1.0:
        raise DomainError(f"confidence must lie in [0, 1], got {confidence}")
    order = np.argsort(taus, kind="mergesort")
    qualifying = order[probs[order] >= confidence]
    if qualifying.size:
        index = int(qualifying[0])
        return ThresholdRecommendation(float(taus[index]), float(probs[index]), True, index)
    index = int(np.argmax(probs))
    return ThresholdRecommendation(float(taus[index]), float(probs[index]), False, index)
