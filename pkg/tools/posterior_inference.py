#!/usr/bin/env python3

"""
Importance sampling of p(theta | S, Y_t) and completion of the unknown labels.

run_spe chains the whole procedure: MAP estimate, diagonal Gaussian proposal
fitted around it, M weighted theta draws, and one completed label vector per
draw. Performance curves are then computed from the completed labelings.
"""

import logging
import math
from dataclasses import dataclass, field
from functools import partial
from typing import Any, Callable, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from scipy import special, stats

from tools.mixture_model import (
    MapEstimate,
    MixtureParameterization,
    MixtureParams,
    PriorSpec,
    ScoreDataset,
    map_estimate,
    responsibilities,
    unconstrained_log_posterior,
)
from tools.score_distributions import FamilyTag
from tools.spe_errors import DomainError, InferenceError, ParameterDomainError, ProposalError

logger = logging.getLogger(__name__)

LogDensity = Callable[[np.ndarray], float]


@dataclass
class InferenceSettings:
    samples: int = 500
    starts: int = 10
    proposal_inflation: float = 1.2
    curvature_step: float = 1e-4
    ess_warning_fraction: float = 0.1
    ess_retry_factor: float = 2.0
    max_iterations: int = 200
    gradient_tolerance: float = 1e-6

    @classmethod
    def from_dict(cls, settings: Mapping[str, Any]) -> "InferenceSettings":
        known = {k: v for k, v in settings.items() if k in cls.__dataclass_fields__}
        return cls(**known)


@dataclass
class ProposalSpec:
    """Diagonal Gaussian q(theta) in unconstrained coordinates"""
    mean: np.ndarray
    scales: np.ndarray

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=float).ravel()
        self.scales = np.asarray(self.scales, dtype=float).ravel()
        if self.mean.shape != self.scales.shape:
            raise ProposalError("proposal mean and scales differ in dimension")
        bad = np.flatnonzero(~np.isfinite(self.scales) | (self.scales <= 0.0))
        if bad.size:
            raise ProposalError(f"proposal scale along dimension {bad[0]} is not positive and finite",
                                int(bad[0]))

    @property
    def dimension(self) -> int:
        return int(self.mean.size)

    def inflated(self, factor: float) -> "ProposalSpec":
        return ProposalSpec(self.mean.copy(), self.scales * factor)

    def log_density(self, u: np.ndarray) -> float:
        return float(np.sum(stats.norm.logpdf(u, loc=self.mean, scale=self.scales)))

    def draw(self, rng: np.random.Generator, count: int) -> np.ndarray:
        return self.mean + self.scales * rng.standard_normal((count, self.dimension))

    def to_dict(self) -> Dict[str, Any]:
        return {"mean": self.mean.tolist(), "scales": self.scales.tolist()}


def fit_proposal(log_posterior_fn: LogDensity, theta_map: Sequence[float],
                 step: float = 1e-4) -> ProposalSpec:
    """
    Fit a univariate Normal along each dimension with the others held at the MAP.

    The scale is (-d2/dx2 log p)^(-1/2) from a central second difference; a
    non-finite evaluation halves the step once before giving up.
    """
    center = np.asarray(theta_map, dtype=float).ravel()
    f0 = log_posterior_fn(center)
    if not math.isfinite(f0):
        raise ProposalError("log posterior is not finite at the MAP estimate")
    scales = np.empty(center.size)
    for d in range(center.size):
        h = step
        for _ in range(2):
            offset = np.zeros(center.size)
            offset[d] = h
            f_plus, f_minus = log_posterior_fn(center + offset), log_posterior_fn(center - offset)
            if math.isfinite(f_plus) and math.isfinite(f_minus):
                break
            h /= 2.0
        else:
            raise ProposalError(f"log posterior is not finite around the MAP along dimension {d}", d)
        curvature = (f_plus - 2.0 * f0 + f_minus) / (h * h)
        if not curvature < 0.0:
            raise ProposalError(
                f"curvature {curvature:.3g} along dimension {d} is not negative; the MAP is not a maximum there",
                d,
            )
        scales[d] = 1.0 / math.sqrt(-curvature)
    return ProposalSpec(center.copy(), scales)


def normalize_log_weights(log_weights: Sequence[float]) -> np.ndarray:
    """Stable w_m = exp(l_m) / sum_l exp(l_l)"""
    log_w = np.asarray(log_weights, dtype=float)
    log_w = np.where(np.isnan(log_w), -np.inf, log_w)
    total = special.logsumexp(log_w)
    if not math.isfinite(total):
        raise InferenceError("all importance weights are numerically zero; the proposal misses the posterior")
    return np.exp(log_w - total)


def effective_sample_size(weights: Sequence[float]) -> float:
    w = np.asarray(weights, dtype=float)
    return float(1.0 / np.sum(w * w))


@dataclass
class ImportanceSample:
    points: np.ndarray
    log_ratios: np.ndarray
    weights: np.ndarray
    ess: float


def importance_sample(log_posterior_fn: LogDensity, proposal: ProposalSpec, count: int,
                      rng: np.random.Generator) -> ImportanceSample:
    if count < 1:
        raise DomainError(f"importance sampling needs at least one draw, got {count}")
    points = proposal.draw(rng, count)
    log_target = np.array([log_posterior_fn(u) for u in points], dtype=float)
    log_q = np.array([proposal.log_density(u) for u in points], dtype=float)
    log_ratios = log_target - log_q
    weights = normalize_log_weights(log_ratios)
    return ImportanceSample(points, log_ratios, weights, effective_sample_size(weights))


def sample_unlabeled_labels(theta: MixtureParams, data: ScoreDataset,
                            rng: np.random.Generator) -> np.ndarray:
    """One Bernoulli draw per unlabeled item with p(y=1 | s, theta)"""
    idx = data.unlabeled_idx
    if idx.size == 0:
        return np.zeros(0, dtype=np.int8)
    resp = responsibilities(theta, data.scores[idx])
    undefined = np.flatnonzero(np.isnan(resp))
    if undefined.size:
        item = int(idx[undefined[0]])
        raise InferenceError(f"item {item} (score {data.scores[item]}) has zero density under both components",
                             item)
    return (rng.random(idx.size) < resp).astype(np.int8)


@dataclass
class PosteriorEnsemble:
    """M weighted parameter draws, each with a completed labeling of U_t"""
    dataset: ScoreDataset
    params: List[MixtureParams]
    weights: np.ndarray
    completed_labels: np.ndarray
    ess: float
    map_estimate: Optional[MapEstimate] = None
    proposal: Optional[ProposalSpec] = None
    warnings: List[str] = field(default_factory=list)

    @property
    def size(self) -> int:
        return int(self.weights.size)

    @property
    def unlabeled_idx(self) -> np.ndarray:
        return self.dataset.unlabeled_idx

    def label_matrix(self) -> np.ndarray:
        """M x N labels with Y_t on labeled items and the completions elsewhere"""
        matrix = np.tile(self.dataset.labels, (self.size, 1))
        matrix[:, self.unlabeled_idx] = self.completed_labels
        return matrix

    def weighted_pi(self) -> float:
        return float(np.dot(self.weights, [theta.pi for theta in self.params]))

    def diagnostics(self) -> Dict[str, Any]:
        return {
            "samples": self.size,
            "ess": self.ess,
            "weighted_pi": self.weighted_pi(),
            "warnings": list(self.warnings),
            "proposal": self.proposal.to_dict() if self.proposal is not None else None,
        }


def run_spe(data: ScoreDataset, priors: PriorSpec, families: Tuple[FamilyTag, FamilyTag],
            samples: int, n_starts: int, rng: np.random.Generator,
            settings: Optional[InferenceSettings] = None,
            estimate: Optional[MapEstimate] = None) -> PosteriorEnsemble:
    """
    MAP -> proposal -> weighted theta draws -> label completion.

    A precomputed MAP estimate (e.g. from family-pair selection) skips step 1.
    """
    settings = settings or InferenceSettings()
    families = (FamilyTag.parse(families[0]), FamilyTag.parse(families[1]))
    parameterization = MixtureParameterization(*families)
    if estimate is None:
        estimate = map_estimate(data, priors, families, n_starts, rng,
                                max_iterations=settings.max_iterations,
                                gradient_tolerance=settings.gradient_tolerance)
    map_fn = partial(unconstrained_log_posterior, data=data, priors=priors,
                     parameterization=parameterization)
    target_fn = partial(map_fn, include_jacobian=True)

    proposal = fit_proposal(map_fn, estimate.vector, settings.curvature_step)
    proposal = proposal.inflated(settings.proposal_inflation)
    drawn = importance_sample(target_fn, proposal, samples, rng)

    warnings = []
    if drawn.ess < settings.ess_warning_fraction * samples:
        message = (f"effective sample size {drawn.ess:.1f} below {settings.ess_warning_fraction:g} x {samples}; "
                   f"retrying with proposal scales x{settings.ess_retry_factor:g}")
        logger.warning(message)
        warnings.append(message)
        proposal = proposal.inflated(settings.ess_retry_factor)
        drawn = importance_sample(target_fn, proposal, samples, rng)
        if drawn.ess < settings.ess_warning_fraction * samples:
            message = f"effective sample size still {drawn.ess:.1f} after proposal rescale"
            logger.warning(message)
            warnings.append(message)

    thetas, labels = [], []
    for u, weight in zip(drawn.points, drawn.weights):
        try:
            theta = parameterization.from_vector(u)
            completed = sample_unlabeled_labels(theta, data, rng)
        except (ParameterDomainError, InferenceError):
            if weight > 0.0:
                raise
            # zero-weight draw outside the model's support; keep the slot with MAP labels
            theta = estimate.params
            completed = sample_unlabeled_labels(theta, data, rng)
        thetas.append(theta)
        labels.append(completed)

    completed_labels = np.vstack(labels) if labels else np.zeros((0, data.unlabeled_idx.size), dtype=np.int8)
    logger.info("SPE ensemble: M=%d ESS=%.1f", samples, drawn.ess)
    return PosteriorEnsemble(
        dataset=data,
        params=thetas,
        weights=drawn.weights,
        completed_labels=completed_labels.astype(np.int8),
        ess=drawn.ess,
        map_estimate=estimate,
        proposal=proposal,
        warnings=warnings,
    )


def posterior_label_probability(ensemble: PosteriorEnsemble) -> np.ndarray:
    """E[y_i = 1 | S, Y_t]; labeled items keep their known label"""
    if ensemble.size == 0:
        raise DomainError("posterior_label_probability needs a nonempty ensemble")
    probability = ensemble.dataset.labels.astype(float)
    idx = ensemble.unlabeled_idx
    if idx.size:
        probability[idx] = ensemble.weights @ ensemble.completed_labels
    return probability
