#!/usr/bin/env python3

"""
Two-component generative model p(S, Y | theta) for classifier scores.

Component 0 models the scores of negatives, component 1 the scores of
positives, and pi is the prior probability that an item is positive.
Unlabeled items are marginalized out of the likelihood.
"""

import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from scipy import optimize, special, stats

from tools.score_distributions import (
    FAMILIES,
    DistributionSpec,
    FamilyTag,
    from_unconstrained,
    log_jacobian,
    mle_fit,
    param_names,
    to_unconstrained,
    unconstrained_bounds,
)
from tools.spe_errors import (
    ContractViolationError,
    DomainError,
    EstimationError,
    FitError,
    ParameterDomainError,
    ValidationError,
)

logger = logging.getLogger(__name__)

UNLABELED = -1
LOGIT_PI_BOUNDS = (-15.0, 15.0)
INITIAL_SPLIT_QUANTILES = (0.5, 0.75, 0.9)
START_PERTURBATION = 0.3

_PENALTY = 1e100


@dataclass
class ScoreDataset:
    """
    All scores plus the labels revealed so far.

    labels holds 0/1 for labeled items and UNLABELED (-1) for the rest, so the
    labeled and unlabeled index sets always partition the items.
    """
    scores: np.ndarray
    labels: np.ndarray
    ids: Optional[List[str]] = None

    def __post_init__(self):
        self.scores = np.asarray(self.scores, dtype=float).ravel()
        self.labels = np.asarray(self.labels, dtype=np.int8).ravel()
        if self.scores.shape != self.labels.shape:
            raise ValidationError(
                f"{self.scores.size} scores but {self.labels.size} label slots"
            )
        if not np.all(np.isfinite(self.scores)):
            raise ValidationError("scores must be finite")
        if not np.all(np.isin(self.labels, (UNLABELED, 0, 1))):
            raise ValidationError("labels must be 0, 1 or unlabeled")
        if self.ids is not None:
            self.ids = [str(i) for i in self.ids]
            if len(self.ids) != self.scores.size:
                raise ValidationError(f"{len(self.ids)} ids for {self.scores.size} scores")

    @classmethod
    def from_partial(cls, scores: Sequence[float], known: Mapping[int, int],
                     ids: Optional[List[str]] = None) -> "ScoreDataset":
        labels = np.full(len(scores), UNLABELED, dtype=np.int8)
        for index, label in known.items():
            labels[index] = label
        return cls(np.asarray(scores, dtype=float), labels, ids)

    @property
    def n_items(self) -> int:
        return int(self.scores.size)

    @property
    def labeled_idx(self) -> np.ndarray:
        return np.flatnonzero(self.labels != UNLABELED)

    @property
    def unlabeled_idx(self) -> np.ndarray:
        return np.flatnonzero(self.labels == UNLABELED)

    @property
    def is_fully_labeled(self) -> bool:
        return bool(np.all(self.labels != UNLABELED))

    def scores_with_label(self, label: int) -> np.ndarray:
        return self.scores[self.labels == label]

    def with_labels(self, labels: np.ndarray) -> "ScoreDataset":
        return ScoreDataset(self.scores.copy(), labels, self.ids)

    def labeled_subset(self) -> "ScoreDataset":
        idx = self.labeled_idx
        ids = [self.ids[i] for i in idx] if self.ids is not None else None
        return ScoreDataset(self.scores[idx], self.labels[idx], ids)


@dataclass(frozen=True)
class MixtureParams:
    """theta = {pi, theta_0, theta_1} with the family of each component"""
    pi: float
    component0: DistributionSpec
    component1: DistributionSpec

    def __post_init__(self):
        pi = float(self.pi)
        if not 0.0 <= pi <= 1.0:
            raise ParameterDomainError(f"mixture weight must lie in [0, 1], got {pi}")
        object.__setattr__(self, "pi", pi)

    @property
    def families(self) -> Tuple[FamilyTag, FamilyTag]:
        return (self.component0.family, self.component1.family)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "pi": self.pi,
            "component0": self.component0.to_dict(),
            "component1": self.component1.to_dict(),
        }


@dataclass(frozen=True)
class ComponentPrior:
    """Normal prior on location-like parameters, gamma prior on positive ones"""
    location_mean: float = 0.5
    location_scale: float = 1.0
    positive_shape: float = 2.0
    positive_scale: float = 1.0

    def __post_init__(self):
        for name in ("location_mean", "location_scale", "positive_shape", "positive_scale"):
            value = float(getattr(self, name))
            if not math.isfinite(value):
                raise DomainError(f"prior hyperparameter {name} must be finite")
            if name != "location_mean" and value <= 0.0:
                raise DomainError(f"prior hyperparameter {name} must be > 0")

    def log_density(self, spec: DistributionSpec) -> float:
        total = 0.0
        for value, positive in zip(spec.params, FAMILIES[spec.family].positive):
            if positive:
                total += stats.gamma.logpdf(value, self.positive_shape, scale=self.positive_scale)
            else:
                total += stats.norm.logpdf(value, loc=self.location_mean, scale=self.location_scale)
        return float(total)


@dataclass(frozen=True)
class PriorSpec:
    pi_alpha: float = 1.0
    pi_beta: float = 1.0
    component0: ComponentPrior = field(default_factory=ComponentPrior)
    component1: ComponentPrior = field(default_factory=ComponentPrior)

    def __post_init__(self):
        for name in ("pi_alpha", "pi_beta"):
            value = float(getattr(self, name))
            if not math.isfinite(value) or value <= 0.0:
                raise DomainError(f"beta prior {name} must be finite and > 0, got {value}")

    @classmethod
    def from_dict(cls, settings: Mapping[str, Any]) -> "PriorSpec":
        """Build from the model_settings.priors config section"""
        shared = {k: settings[k] for k in
                  ("location_mean", "location_scale", "positive_shape", "positive_scale")
                  if k in settings}
        comp0 = ComponentPrior(**{**shared, **settings.get("component0", {})})
        comp1 = ComponentPrior(**{**shared, **settings.get("component1", {})})
        return cls(pi_alpha=settings.get("pi_alpha", 1.0), pi_beta=settings.get("pi_beta", 1.0),
                   component0=comp0, component1=comp1)


def _component_log_terms(theta: MixtureParams, scores: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """log((1-pi) p0(s)) and log(pi p1(s)) per score"""
    with np.errstate(divide="ignore"):
        log_neg = np.log1p(-theta.pi) + theta.component0.log_pdf(scores)
        log_pos = np.log(theta.pi) + theta.component1.log_pdf(scores)
    return np.asarray(log_neg, dtype=float), np.asarray(log_pos, dtype=float)


def _labeled_term(theta: MixtureParams, scores: np.ndarray, labels: np.ndarray) -> float:
    if scores.size == 0:
        return 0.0
    log_neg, log_pos = _component_log_terms(theta, scores)
    return float(np.sum(np.where(labels == 1, log_pos, log_neg)))


def log_likelihood_supervised(theta: MixtureParams, data: ScoreDataset) -> float:
    if not data.is_fully_labeled:
        raise ContractViolationError(
            f"supervised likelihood needs every item labeled; {data.unlabeled_idx.size} are not"
        )
    return _labeled_term(theta, data.scores, data.labels)


def log_likelihood_semisupervised(theta: MixtureParams, data: ScoreDataset) -> float:
    labeled, unlabeled = data.labeled_idx, data.unlabeled_idx
    total = _labeled_term(theta, data.scores[labeled], data.labels[labeled])
    if unlabeled.size:
        log_neg, log_pos = _component_log_terms(theta, data.scores[unlabeled])
        total += float(np.sum(np.logaddexp(log_neg, log_pos)))
    return total


def log_prior(theta: MixtureParams, priors: PriorSpec) -> float:
    total = float(stats.beta.logpdf(theta.pi, priors.pi_alpha, priors.pi_beta))
    total += priors.component0.log_density(theta.component0)
    total += priors.component1.log_density(theta.component1)
    return total if not math.isnan(total) else -math.inf


def log_posterior(theta: MixtureParams, data: ScoreDataset, priors: PriorSpec) -> float:
    """Unnormalized log p(theta | S, Y_t)"""
    prior = log_prior(theta, priors)
    if prior == -math.inf:
        return -math.inf
    value = log_likelihood_semisupervised(theta, data) + prior
    return value if not math.isnan(value) else -math.inf


def responsibilities(theta: MixtureParams, scores: np.ndarray) -> np.ndarray:
    """p(y=1 | s, theta) per score; NaN where both components have zero density"""
    log_neg, log_pos = _component_log_terms(theta, np.asarray(scores, dtype=float))
    norm = np.logaddexp(log_neg, log_pos)
    with np.errstate(invalid="ignore"):
        resp = np.exp(log_pos - norm)
    return np.where(np.isneginf(norm), np.nan, resp)


def generate_synthetic_dataset(n_items: int, theta: MixtureParams,
                               rng: np.random.Generator) -> ScoreDataset:
    """Draw a fully labeled dataset (S, Y) from p(S, Y | theta)"""
    positive = rng.random(n_items) < theta.pi
    scores = np.empty(n_items, dtype=float)
    n_pos = int(positive.sum())
    scores[positive] = theta.component1.sample(rng, size=n_pos)
    scores[~positive] = theta.component0.sample(rng, size=n_items - n_pos)
    return ScoreDataset(scores, positive.astype(np.int8))


class MixtureParameterization:
    """
    Unconstrained coordinates for theta: logit(pi) followed by each
    component's parameters with positive entries on the log scale.
    """

    def __init__(self, family0: FamilyTag, family1: FamilyTag):
        self.family0 = FamilyTag.parse(family0)
        self.family1 = FamilyTag.parse(family1)
        self.size0 = len(param_names(self.family0))
        self.size1 = len(param_names(self.family1))

    @property
    def dimension(self) -> int:
        return 1 + self.size0 + self.size1

    @property
    def names(self) -> List[str]:
        return (["logit_pi"]
                + [f"component0.{n}" for n in param_names(self.family0)]
                + [f"component1.{n}" for n in param_names(self.family1)])

    @property
    def bounds(self) -> List[Tuple[float, float]]:
        return [LOGIT_PI_BOUNDS] + unconstrained_bounds(self.family0) + unconstrained_bounds(self.family1)

    def clip(self, u: np.ndarray) -> np.ndarray:
        lower, upper = np.array(self.bounds).T
        return np.clip(u, lower, upper)

    def to_vector(self, theta: MixtureParams) -> np.ndarray:
        lo, hi = LOGIT_PI_BOUNDS
        logit_pi = float(np.clip(special.logit(theta.pi), lo, hi))
        return np.concatenate([
            [logit_pi],
            to_unconstrained(self.family0, theta.component0.params),
            to_unconstrained(self.family1, theta.component1.params),
        ])

    def from_vector(self, u: Sequence[float]) -> MixtureParams:
        u = np.asarray(u, dtype=float)
        split = 1 + self.size0
        return MixtureParams(
            pi=float(special.expit(u[0])),
            component0=DistributionSpec(self.family0, from_unconstrained(self.family0, u[1:split])),
            component1=DistributionSpec(self.family1, from_unconstrained(self.family1, u[split:])),
        )

    def log_jacobian(self, u: Sequence[float]) -> float:
        u = np.asarray(u, dtype=float)
        split = 1 + self.size0
        # d pi / d logit = pi (1 - pi)
        log_pi_term = -np.logaddexp(0.0, -u[0]) - np.logaddexp(0.0, u[0])
        return float(log_pi_term + log_jacobian(self.family0, u[1:split])
                     + log_jacobian(self.family1, u[split:]))


def unconstrained_log_posterior(u: Sequence[float], data: ScoreDataset, priors: PriorSpec,
                                parameterization: MixtureParameterization,
                                include_jacobian: bool = False) -> float:
    """
    log posterior at the unconstrained point u. With include_jacobian the
    value is the log density of u itself, which is what sampling needs.
    """
    try:
        theta = parameterization.from_vector(u)
    except ParameterDomainError:
        return -math.inf
    value = log_posterior(theta, data, priors)
    if include_jacobian and value > -math.inf:
        value += parameterization.log_jacobian(u)
    return value


@dataclass
class MapEstimate:
    params: MixtureParams
    log_posterior: float
    vector: np.ndarray
    starts: List[Dict[str, Any]]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "params": self.params.to_dict(),
            "log_posterior": self.log_posterior,
            "starts": self.starts,
        }


def _initial_from_split(data: ScoreDataset, families: Tuple[FamilyTag, FamilyTag],
                        threshold: float) -> Optional[MixtureParams]:
    above = data.scores > threshold
    try:
        comp0 = DistributionSpec(families[0], mle_fit(families[0], data.scores[~above]))
        comp1 = DistributionSpec(families[1], mle_fit(families[1], data.scores[above]))
    except (FitError, ParameterDomainError) as e:
        logger.debug("split at %.4f gives no initializer: %s", threshold, e)
        return None
    pi = float(np.clip(np.mean(above), 0.01, 0.99))
    return MixtureParams(pi, comp0, comp1)


def _initial_from_labels(data: ScoreDataset,
                         families: Tuple[FamilyTag, FamilyTag]) -> Optional[MixtureParams]:
    neg, pos = data.scores_with_label(0), data.scores_with_label(1)
    try:
        comp0 = DistributionSpec(families[0], mle_fit(families[0], neg))
        comp1 = DistributionSpec(families[1], mle_fit(families[1], pos))
    except (FitError, ParameterDomainError):
        return None
    pi = float(np.clip(pos.size / (pos.size + neg.size), 0.01, 0.99))
    return MixtureParams(pi, comp0, comp1)


def _component_mean(spec: DistributionSpec) -> float:
    try:
        return spec.mean()
    except Exception:
        return math.nan


def initial_estimates(data: ScoreDataset,
                      families: Tuple[FamilyTag, FamilyTag]) -> List[MixtureParams]:
    """
    Moment-based initializers: per-class fits of the labeled scores, a split
    at the labeled-data boundary, then splits at upper score quantiles.
    Component 1 always takes the upper part of a split, which anchors it as
    the positive class when there are no labels.
    """
    candidates: List[Optional[MixtureParams]] = [_initial_from_labels(data, families)]
    neg, pos = data.scores_with_label(0), data.scores_with_label(1)
    thresholds = []
    if neg.size and pos.size:
        thresholds.append(0.5 * (float(np.mean(neg)) + float(np.mean(pos))))
    thresholds.extend(float(np.quantile(data.scores, q)) for q in INITIAL_SPLIT_QUANTILES)
    candidates.extend(_initial_from_split(data, families, t) for t in thresholds)

    initials = []
    for theta in candidates:
        if theta is None:
            continue
        m0, m1 = _component_mean(theta.component0), _component_mean(theta.component1)
        if data.labeled_idx.size == 0 and m1 < m0:
            continue
        initials.append(theta)
    return initials


def map_estimate(data: ScoreDataset, priors: PriorSpec, families: Tuple[FamilyTag, FamilyTag],
                 n_starts: int, rng: np.random.Generator, initial: Optional[MixtureParams] = None,
                 max_iterations: int = 200, gradient_tolerance: float = 1e-6) -> MapEstimate:
    """
    Multi-start bounded quasi-Newton search for argmax log p(theta | S, Y_t).

    Starts cycle through the initializers, perturbing every pass after the
    first. The best start wins; ties go to the lowest start index.
    """
    if n_starts < 1:
        raise DomainError(f"n_starts must be >= 1, got {n_starts}")
    parameterization = MixtureParameterization(*families)
    families = (parameterization.family0, parameterization.family1)
    bases = [initial] if initial is not None else initial_estimates(data, families)
    if not bases:
        raise EstimationError(
            f"no feasible initializer for families {families[0].value}/{families[1].value}"
        )

    def objective(u: np.ndarray) -> float:
        value = unconstrained_log_posterior(u, data, priors, parameterization)
        return -value / max(data.n_items, 1) if math.isfinite(value) else _PENALTY

    best: Optional[MapEstimate] = None
    starts: List[Dict[str, Any]] = []
    for index in range(n_starts):
        base = parameterization.to_vector(bases[index % len(bases)])
        if index >= len(bases):
            base = base + rng.normal(0.0, START_PERTURBATION, size=base.size)
        u0 = parameterization.clip(base)
        initial_value = objective(u0)
        result = optimize.minimize(objective, u0, method="L-BFGS-B", bounds=parameterization.bounds,
                                   options={"maxiter": max_iterations, "gtol": gradient_tolerance,
                                            "ftol": 1e-12})
        u_best, value = (result.x, result.fun) if result.fun <= initial_value else (u0, initial_value)
        final = unconstrained_log_posterior(u_best, data, priors, parameterization)
        diagnostic = {
            "start": index,
            "initial_log_posterior": -initial_value * data.n_items if initial_value < _PENALTY else None,
            "final_log_posterior": final if math.isfinite(final) else None,
            "converged": bool(result.success),
            "iterations": int(result.nit),
            "message": str(result.message),
        }
        starts.append(diagnostic)
        logger.debug("MAP start %d: %s", index, diagnostic)
        if not math.isfinite(final):
            continue
        if best is None or final > best.log_posterior:
            best = MapEstimate(parameterization.from_vector(u_best), final, np.asarray(u_best), starts)

    if best is None:
        raise EstimationError("every MAP start failed to reach a finite log posterior", starts)
    best.starts = starts
    return best


def candidate_pairs(families: Sequence[FamilyTag]) -> List[Tuple[FamilyTag, FamilyTag]]:
    """Every ordered (p0, p1) combination of the candidate families"""
    tags = [FamilyTag.parse(f) for f in families]
    return list(itertools.product(tags, tags))


@dataclass
class FamilyPairSelection:
    family0: FamilyTag
    family1: FamilyTag
    estimate: MapEstimate
    table: List[Dict[str, Any]]

    def to_dict(self) -> Dict[str, Any]:
        return {"family0": self.family0.value, "family1": self.family1.value, "pairs": self.table}


def select_family_pair(data: ScoreDataset, priors: PriorSpec,
                       candidates: Sequence[Tuple[FamilyTag, FamilyTag]],
                       n_starts: int, rng: np.random.Generator, **map_options) -> FamilyPairSelection:
    """Run a MAP search per (p0, p1) pair and keep the pair with the highest attained posterior"""
    if not candidates:
        raise DomainError("select_family_pair needs at least one candidate pair")
    best: Optional[FamilyPairSelection] = None
    table = []
    for family0, family1 in candidates:
        pair = (FamilyTag.parse(family0), FamilyTag.parse(family1))
        try:
            estimate = map_estimate(data, priors, pair, n_starts, rng, **map_options)
        except EstimationError as e:
            logger.info("family pair %s/%s failed: %s", pair[0].value, pair[1].value, e)
            table.append({"family0": pair[0].value, "family1": pair[1].value,
                          "log_posterior": None, "failure": str(e)})
            continue
        table.append({"family0": pair[0].value, "family1": pair[1].value,
                      "log_posterior": estimate.log_posterior, "failure": None})
        if best is None or estimate.log_posterior > best.estimate.log_posterior:
            best = FamilyPairSelection(pair[0], pair[1], estimate, table)
    if best is None:
        raise EstimationError("no family pair produced a MAP estimate", table)
    best.table = table
    return best
