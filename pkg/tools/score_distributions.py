#!/usr/bin/env python3

"""
Parametric score distributions used as class-conditional score models.

Families whose natural support is the whole real line are truncated at s=0,
so every family lives on the nonnegative half-line. Each family is a thin
layer over a frozen scipy.stats distribution plus the truncation mass.
"""

import json
import logging
import math
import os
import sys
from dataclasses import dataclass
from enum import Enum
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import optimize, stats

sys.path.insert(0, os.path.join(os.path.dirname(os.path.abspath(__file__)), ".."))

from tools.spe_errors import DomainError, FitError, ParameterDomainError, SPEError

logger = logging.getLogger(__name__)

TRUNCATION_POINT = 0.0
QUANTILE_TOLERANCE = 1e-9
EULER_GAMMA = 0.5772156649015329
GOMPERTZ_UNIT_MEAN = 0.5963473623231940  # mean of gompertz(c=1, scale=1)

# Box constraints in unconstrained coordinates (log for positive parameters)
LOG_PARAM_BOUNDS = (-16.0, 9.0)
REAL_PARAM_BOUNDS = (-50.0, 50.0)

_PENALTY = 1e100

ScoreLike = Union[float, Sequence[float], np.ndarray]


class FamilyTag(Enum):
    """Supported class-conditional score families"""
    TRUNCATED_NORMAL = "truncated-normal"
    GAMMA = "gamma"
    LOG_NORMAL = "log-normal"
    GUMBEL_LEFT = "gumbel-left"
    GUMBEL_RIGHT = "gumbel-right"
    TRUNCATED_STUDENT_T = "truncated-student-t"
    GOMPERTZ = "gompertz"
    FRECHET_RIGHT = "frechet-right"

    @classmethod
    def parse(cls, name: Union[str, "FamilyTag"]) -> "FamilyTag":
        if isinstance(name, FamilyTag):
            return name
        try:
            return cls(str(name).strip().lower())
        except ValueError:
            known = ", ".join(tag.value for tag in cls)
            raise DomainError(f"Unknown distribution family '{name}' (known: {known})")


@dataclass(frozen=True)
class FamilyInfo:
    param_names: Tuple[str, ...]
    positive: Tuple[bool, ...]
    truncated: bool
    build: Callable[[Tuple[float, ...]], Any]
    moment_init: Callable[[np.ndarray], Tuple[float, ...]]


def _gumbel_scale(x: np.ndarray) -> float:
    return float(np.std(x) * math.sqrt(6.0) / math.pi)


def _gamma_init(x: np.ndarray) -> Tuple[float, ...]:
    m, v = float(np.mean(x)), float(np.var(x))
    return (m * m / v, v / m)


def _lognormal_init(x: np.ndarray) -> Tuple[float, ...]:
    logs = np.log(x)
    return (float(np.mean(logs)), float(np.std(logs)))


FAMILIES: Dict[FamilyTag, FamilyInfo] = {
    FamilyTag.TRUNCATED_NORMAL: FamilyInfo(
        param_names=("loc", "scale"),
        positive=(False, True),
        truncated=True,
        build=lambda p: stats.norm(loc=p[0], scale=p[1]),
        moment_init=lambda x: (float(np.mean(x)), float(np.std(x))),
    ),
    FamilyTag.GAMMA: FamilyInfo(
        param_names=("shape", "scale"),
        positive=(True, True),
        truncated=False,
        build=lambda p: stats.gamma(p[0], scale=p[1]),
        moment_init=_gamma_init,
    ),
    FamilyTag.LOG_NORMAL: FamilyInfo(
        param_names=("log_loc", "log_scale"),
        positive=(False, True),
        truncated=False,
        build=lambda p: stats.lognorm(p[1], scale=math.exp(p[0])),
        moment_init=_lognormal_init,
    ),
    FamilyTag.GUMBEL_LEFT: FamilyInfo(
        param_names=("loc", "scale"),
        positive=(False, True),
        truncated=True,
        build=lambda p: stats.gumbel_l(loc=p[0], scale=p[1]),
        moment_init=lambda x: (float(np.mean(x)) + EULER_GAMMA * _gumbel_scale(x), _gumbel_scale(x)),
    ),
    FamilyTag.GUMBEL_RIGHT: FamilyInfo(
        param_names=("loc", "scale"),
        positive=(False, True),
        truncated=True,
        build=lambda p: stats.gumbel_r(loc=p[0], scale=p[1]),
        moment_init=lambda x: (float(np.mean(x)) - EULER_GAMMA * _gumbel_scale(x), _gumbel_scale(x)),
    ),
    FamilyTag.TRUNCATED_STUDENT_T: FamilyInfo(
        param_names=("df", "loc", "scale"),
        positive=(True, False, True),
        truncated=True,
        build=lambda p: stats.t(p[0], loc=p[1], scale=p[2]),
        moment_init=lambda x: (5.0, float(np.median(x)), float(np.std(x))),
    ),
    FamilyTag.GOMPERTZ: FamilyInfo(
        param_names=("shape", "scale"),
        positive=(True, True),
        truncated=False,
        build=lambda p: stats.gompertz(p[0], scale=p[1]),
        moment_init=lambda x: (1.0, float(np.mean(x)) / GOMPERTZ_UNIT_MEAN),
    ),
    FamilyTag.FRECHET_RIGHT: FamilyInfo(
        param_names=("shape", "scale"),
        positive=(True, True),
        truncated=False,
        build=lambda p: stats.invweibull(p[0], scale=p[1]),
        moment_init=lambda x: (3.0, float(np.median(x)) * math.log(2.0) ** (1.0 / 3.0)),
    ),
}


def param_names(family: FamilyTag) -> Tuple[str, ...]:
    return FAMILIES[FamilyTag.parse(family)].param_names


def validate_params(family: FamilyTag, params: Sequence[float]) -> Tuple[float, ...]:
    """Check a parameter vector against its family and return it as floats"""
    family = FamilyTag.parse(family)
    info = FAMILIES[family]
    values = tuple(float(p) for p in params)
    if len(values) != len(info.param_names):
        raise ParameterDomainError(
            f"{family.value} expects {len(info.param_names)} parameters "
            f"{info.param_names}, got {len(values)}"
        )
    for name, value, positive in zip(info.param_names, values, info.positive):
        if not math.isfinite(value):
            raise ParameterDomainError(f"{family.value} parameter {name} is not finite: {value}")
        if positive and value <= 0.0:
            raise ParameterDomainError(f"{family.value} parameter {name} must be > 0, got {value}")
    return values


def _frozen(family: FamilyTag, params: Sequence[float]):
    """Return (base scipy distribution, log of its mass above the truncation point)"""
    family = FamilyTag.parse(family)
    info = FAMILIES[family]
    values = validate_params(family, params)
    base = info.build(values)
    if not info.truncated:
        return base, 0.0, False
    log_mass = float(base.logsf(TRUNCATION_POINT))
    if not math.isfinite(log_mass):
        raise ParameterDomainError(f"{family.value}{values} has no mass above s={TRUNCATION_POINT}")
    return base, log_mass, True


def _like_input(values: np.ndarray, reference: ScoreLike):
    if np.ndim(reference) == 0:
        return float(values)
    return values


def log_pdf(family: FamilyTag, params: Sequence[float], s: ScoreLike):
    """Natural log of the normalized density; -inf outside the support"""
    base, log_mass, _ = _frozen(family, params)
    x = np.asarray(s, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = base.logpdf(x) - log_mass
    out = np.where((x >= TRUNCATION_POINT) & ~np.isnan(out), out, -np.inf)
    return _like_input(out, s)


def _cdf_and_survival(family: FamilyTag, params: Sequence[float], s: ScoreLike):
    base, log_mass, truncated = _frozen(family, params)
    x = np.asarray(s, dtype=float)
    below = x < TRUNCATION_POINT
    xc = np.where(below, TRUNCATION_POINT, x)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        if truncated:
            log_tail = base.logsf(xc) - log_mass
            surv = np.exp(log_tail)
            cdf_values = -np.expm1(log_tail)
        else:
            surv = base.sf(xc)
            cdf_values = base.cdf(xc)
    surv = np.clip(surv, 0.0, 1.0)
    cdf_values = np.clip(cdf_values, 0.0, 1.0)
    # the smaller tail is the accurate one; the other is its complement
    small_tail = surv <= 0.5
    cdf_values = np.where(small_tail, 1.0 - surv, cdf_values)
    surv = np.where(small_tail, surv, 1.0 - cdf_values)
    cdf_values = np.where(below, 0.0, cdf_values)
    surv = np.where(below, 1.0, surv)
    return cdf_values, surv


def cdf(family: FamilyTag, params: Sequence[float], s: ScoreLike):
    values, _ = _cdf_and_survival(family, params, s)
    return _like_input(values, s)


def survival(family: FamilyTag, params: Sequence[float], s: ScoreLike):
    _, values = _cdf_and_survival(family, params, s)
    return _like_input(values, s)


def _polish_quantile(family: FamilyTag, params: Sequence[float], p: float, guess: float) -> float:
    """Bracket and solve cdf(x) = p when the closed-form inverse is not accurate enough"""
    lo, hi = TRUNCATION_POINT, max(guess, 1.0)
    for _ in range(200):
        if cdf(family, params, hi) >= p:
            break
        lo, hi = hi, hi * 2.0
    else:
        return guess
    return float(optimize.brentq(lambda t: cdf(family, params, t) - p, lo, hi,
                                 xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=500))


def quantile(family: FamilyTag, params: Sequence[float], p: ScoreLike):
    """Inverse cdf; quantile(0) is the support infimum and quantile(1) its supremum"""
    probs = np.asarray(p, dtype=float)
    if np.any(np.isnan(probs)) or np.any((probs < 0.0) | (probs > 1.0)):
        raise DomainError(f"quantile probabilities must lie in [0, 1], got {p}")
    base, log_mass, truncated = _frozen(family, params)
    flat = probs.ravel()
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        if truncated:
            mass = math.exp(log_mass)
            below_mass = -math.expm1(log_mass)
            q = base.isf((1.0 - flat) * mass)
            if below_mass <= 0.5:
                q = np.where(flat < 0.5, base.ppf(below_mass + flat * mass), q)
        else:
            q = np.where(flat < 0.5, base.ppf(flat), base.isf(1.0 - flat))
        q = np.maximum(np.asarray(q, dtype=float), TRUNCATION_POINT)
    q = np.where(flat == 0.0, TRUNCATION_POINT, q)
    q = np.where(flat == 1.0, np.inf, q)

    interior = (flat > 0.0) & (flat < 1.0)
    if np.any(interior):
        achieved = np.asarray(cdf(family, params, np.where(np.isfinite(q), q, 0.0)))
        bad = interior & (~np.isfinite(q) | (np.abs(achieved - flat) > QUANTILE_TOLERANCE))
        for i in np.flatnonzero(bad):
            guess = q[i] if math.isfinite(q[i]) else 1.0
            q[i] = _polish_quantile(family, params, float(flat[i]), guess)
    return _like_input(q.reshape(probs.shape), p)


def sample(family: FamilyTag, params: Sequence[float], rng: np.random.Generator,
           size: Optional[Union[int, Tuple[int, ...]]] = None):
    """Draw scores; deterministic given the state of rng"""
    base, log_mass, truncated = _frozen(family, params)
    if truncated:
        u = rng.random(size)
        draws = np.maximum(base.isf((1.0 - u) * math.exp(log_mass)), TRUNCATION_POINT)
    else:
        draws = base.rvs(size=size, random_state=rng)
    if size is None:
        return float(draws)
    return np.asarray(draws, dtype=float)


def mean(family: FamilyTag, params: Sequence[float]) -> float:
    base, _, truncated = _frozen(family, params)
    if truncated:
        return float(base.expect(lambda t: t, lb=TRUNCATION_POINT, conditional=True))
    return float(base.mean())


def log_likelihood(family: FamilyTag, params: Sequence[float], scores: ScoreLike) -> float:
    return float(np.sum(log_pdf(family, params, np.asarray(scores, dtype=float))))


def to_unconstrained(family: FamilyTag, params: Sequence[float]) -> np.ndarray:
    family = FamilyTag.parse(family)
    info = FAMILIES[family]
    values = validate_params(family, params)
    return np.array([math.log(v) if pos else v for v, pos in zip(values, info.positive)])


def from_unconstrained(family: FamilyTag, u: Sequence[float]) -> Tuple[float, ...]:
    info = FAMILIES[FamilyTag.parse(family)]
    with np.errstate(over="ignore"):
        return tuple(float(np.exp(v)) if pos else float(v) for v, pos in zip(u, info.positive))


def unconstrained_bounds(family: FamilyTag) -> List[Tuple[float, float]]:
    info = FAMILIES[FamilyTag.parse(family)]
    return [LOG_PARAM_BOUNDS if pos else REAL_PARAM_BOUNDS for pos in info.positive]


def log_jacobian(family: FamilyTag, u: Sequence[float]) -> float:
    """log |d params / d u| of the unconstrained map"""
    info = FAMILIES[FamilyTag.parse(family)]
    return float(sum(v for v, pos in zip(u, info.positive) if pos))


def mle_fit(family: FamilyTag, scores: ScoreLike) -> Tuple[float, ...]:
    """
    Maximum-likelihood fit of one family.

    Starts from a moment-matched initializer and runs bounded L-BFGS-B on the
    log-parameterized positive parameters. Never returns a point with lower
    likelihood than the initializer.
    """
    family = FamilyTag.parse(family)
    info = FAMILIES[family]
    x = np.asarray(scores, dtype=float).ravel()
    diagnostics = {"family": family.value, "n_scores": int(x.size)}
    n_params = len(info.param_names)
    if x.size < n_params:
        raise FitError(f"{family.value} needs at least {n_params} scores, got {x.size}", diagnostics)
    if not np.all(np.isfinite(x)):
        raise FitError("scores contain non-finite values", diagnostics)
    if np.ptp(x) == 0.0:
        raise FitError(f"degenerate data: all {x.size} scores equal {x[0]}", diagnostics)
    if np.any(x < TRUNCATION_POINT):
        raise FitError(f"scores below the support of {family.value}", diagnostics)

    try:
        with np.errstate(divide="ignore", invalid="ignore"):
            start = validate_params(family, info.moment_init(x))
    except ParameterDomainError as e:
        raise FitError(f"moment initializer failed: {e}", diagnostics)
    start_ll = log_likelihood(family, start, x)
    diagnostics["initial_log_likelihood"] = start_ll
    if not math.isfinite(start_ll):
        raise FitError(f"scores fall outside the support of {family.value}", diagnostics)

    def objective(u: np.ndarray) -> float:
        try:
            ll = log_likelihood(family, from_unconstrained(family, u), x)
        except ParameterDomainError:
            return _PENALTY
        return -ll / x.size if math.isfinite(ll) else _PENALTY

    u0 = np.clip(to_unconstrained(family, start),
                 [b[0] for b in unconstrained_bounds(family)],
                 [b[1] for b in unconstrained_bounds(family)])
    result = optimize.minimize(objective, u0, method="L-BFGS-B",
                               bounds=unconstrained_bounds(family),
                               options={"maxiter": 500, "ftol": 1e-12, "gtol": 1e-8})
    try:
        fitted = validate_params(family, from_unconstrained(family, result.x))
        fitted_ll = log_likelihood(family, fitted, x)
    except ParameterDomainError:
        fitted_ll = -math.inf
    if not math.isfinite(fitted_ll) or fitted_ll < start_ll:
        logger.debug("%s fit did not improve on moment initializer (%s)", family.value, result.message)
        return start
    return fitted


@dataclass(frozen=True)
class DistributionSpec:
    """A family tag together with a validated parameter vector"""
    family: FamilyTag
    params: Tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "family", FamilyTag.parse(self.family))
        object.__setattr__(self, "params", validate_params(self.family, self.params))

    def log_pdf(self, s: ScoreLike):
        return log_pdf(self.family, self.params, s)

    def cdf(self, s: ScoreLike):
        return cdf(self.family, self.params, s)

    def survival(self, s: ScoreLike):
        return survival(self.family, self.params, s)

    def quantile(self, p: ScoreLike):
        return quantile(self.family, self.params, p)

    def sample(self, rng: np.random.Generator, size=None):
        return sample(self.family, self.params, rng, size)

    def mean(self) -> float:
        return mean(self.family, self.params)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "family": self.family.value,
            "params": dict(zip(param_names(self.family), self.params)),
        }


@dataclass
class FamilyRanking:
    family: FamilyTag
    params: Optional[Tuple[float, ...]]
    holdout_log_likelihood: float
    relative_log_likelihood: float = 0.0
    failure: Optional[str] = None

    @property
    def failed(self) -> bool:
        return self.failure is not None

    def to_dict(self) -> Dict[str, Any]:
        return {
            "family": self.family.value,
            "params": dict(zip(param_names(self.family), self.params)) if self.params else None,
            "holdout_log_likelihood": self.holdout_log_likelihood if not self.failed else None,
            "relative_log_likelihood": self.relative_log_likelihood if not self.failed else None,
            "failed": self.failed,
            "failure": self.failure,
        }


def rank_families(scores: ScoreLike, holdout_fraction: float, rng: np.random.Generator,
                  families: Optional[Sequence[FamilyTag]] = None) -> List[FamilyRanking]:
    """
    Fit every family on a random training split and rank by held-out log likelihood.

    Families that fail to fit are listed last with their failure reason.
    """
    x = np.asarray(scores, dtype=float).ravel()
    if x.size == 0:
        raise DomainError("cannot rank families on an empty score list")
    if not 0.0 < holdout_fraction < 1.0:
        raise DomainError(f"holdout_fraction must lie in (0, 1), got {holdout_fraction}")
    n_holdout = int(round(x.size * holdout_fraction))
    if n_holdout < 1 or n_holdout >= x.size:
        raise DomainError(f"{x.size} scores leave an empty holdout or training split at fraction {holdout_fraction}")

    order = rng.permutation(x.size)
    holdout, train = x[order[:n_holdout]], x[order[n_holdout:]]

    fitted, failed = [], []
    for family in families or list(FamilyTag):
        family = FamilyTag.parse(family)
        try:
            params = mle_fit(family, train)
            ll = log_likelihood(family, params, holdout)
            if not math.isfinite(ll):
                raise FitError("held-out scores fall outside the fitted support")
            fitted.append(FamilyRanking(family, params, ll))
        except (FitError, ParameterDomainError) as e:
            logger.info("family %s failed to fit: %s", family.value, e)
            failed.append(FamilyRanking(family, None, -math.inf, failure=str(e)))

    fitted.sort(key=lambda row: -row.holdout_log_likelihood)
    if fitted:
        best = fitted[0].holdout_log_likelihood
        for row in fitted:
            row.relative_log_likelihood = row.holdout_log_likelihood - best
    return fitted + failed


def _file_scores(path: str, label: Optional[str]) -> np.ndarray:
    """Normalized scores from a score file, optionally restricted to one class"""
    from tools.score_io import load_scores, normalize_dataset

    data, _ = normalize_dataset(load_scores(path))
    return data.scores if label is None else data.scores_with_label(int(label))


def main(argv: Optional[List[str]] = None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    if not argv:
        print("Usage: python score_distributions.py <action> [args...]")
        print("Actions: families, rank <scores_file> [label] [seed], fit <family> <scores_file> [label]")
        return 1

    action = argv[0]
    try:
        if action == "families":
            for family in FamilyTag:
                print(f"{family.value}: {', '.join(param_names(family))}")

        elif action == "rank":
            if len(argv) < 2:
                print("Usage: python score_distributions.py rank <scores_file> [label] [seed]")
                return 1
            scores = _file_scores(argv[1], argv[2] if len(argv) > 2 else None)
            rng = np.random.default_rng(int(argv[3]) if len(argv) > 3 else 0)
            rows = rank_families(scores, 0.2, rng)
            print(json.dumps([row.to_dict() for row in rows], indent=2))

        elif action == "fit":
            if len(argv) < 3:
                print("Usage: python score_distributions.py fit <family> <scores_file> [label]")
                return 1
            family = FamilyTag.parse(argv[1])
            params = mle_fit(family, _file_scores(argv[2], argv[3] if len(argv) > 3 else None))
            print(json.dumps(DistributionSpec(family, params).to_dict(), indent=2))

        else:
            print(f"Unknown action: {action}")
            return 1
    except (SPEError, OSError, ValueError) as e:
        print(f"Error: {e}")
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
