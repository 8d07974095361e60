#!/usr/bin/env python3

"""
Tests for the importance-sampling posterior and label completion.
Run with: python test_posterior_inference.py  (or pytest)
"""

import math
import sys

import numpy as np
import pytest
from scipy import special, stats

from tools.mixture_model import (
    UNLABELED,
    MixtureParams,
    PriorSpec,
    ScoreDataset,
    generate_synthetic_dataset,
    log_likelihood_supervised,
    responsibilities,
)
from tools.posterior_inference import (
    InferenceSettings,
    ProposalSpec,
    effective_sample_size,
    fit_proposal,
    importance_sample,
    normalize_log_weights,
    posterior_label_probability,
    run_spe,
    sample_unlabeled_labels,
)
from tools.score_distributions import DistributionSpec, FamilyTag
from tools.score_io import sample_label_budget
from tools.spe_errors import InferenceError, ProposalError

GAMMA = FamilyTag.GAMMA
TNORM = FamilyTag.TRUNCATED_NORMAL


def reference_theta(pi: float = 0.1) -> MixtureParams:
    return MixtureParams(pi, DistributionSpec(GAMMA, (2.0, 0.05)), DistributionSpec(TNORM, (0.7, 0.1)))


def test_fit_proposal_gaussian_curvature():
    proposal = fit_proposal(lambda u: -0.5 * float(u[0] / 0.3) ** 2, [0.0])
    assert proposal.scales[0] == pytest.approx(0.3, abs=1e-4)
    assert proposal.mean.tolist() == [0.0]


def test_fit_proposal_isotropic_quadratic():
    center = np.array([1.0, -2.0, 0.5, 3.0])
    proposal = fit_proposal(lambda u: -2.0 * float(np.sum((u - center) ** 2)), center)
    np.testing.assert_allclose(proposal.scales, np.full(4, 0.5), rtol=1e-6)


def test_fit_proposal_flat_direction():
    with pytest.raises(ProposalError) as excinfo:
        fit_proposal(lambda u: -float(u[0] ** 2), [0.0, 0.0])
    assert excinfo.value.dimension == 1


def test_proposal_spec_validation():
    with pytest.raises(ProposalError):
        ProposalSpec([0.0, 0.0], [1.0, -1.0])
    with pytest.raises(ProposalError):
        ProposalSpec([0.0], [1.0, 1.0])


def test_normalize_log_weights():
    np.testing.assert_allclose(normalize_log_weights([0.0, math.log(3.0)]), [0.25, 0.75])
    np.testing.assert_allclose(normalize_log_weights([1000.0, 1000.0]), [0.5, 0.5])
    with pytest.raises(InferenceError):
        normalize_log_weights([-np.inf, -np.inf])


def test_effective_sample_size_bounds():
    assert effective_sample_size(np.full(8, 1.0 / 8)) == pytest.approx(8.0)
    assert effective_sample_size([1.0, 0.0, 0.0]) == pytest.approx(1.0)


def test_importance_sample_target_equals_proposal():
    proposal = ProposalSpec([0.5, -1.0], [0.2, 2.0])
    drawn = importance_sample(proposal.log_density, proposal, 64, np.random.default_rng(1))
    np.testing.assert_allclose(drawn.weights, np.full(64, 1.0 / 64), rtol=1e-9)
    assert drawn.ess == pytest.approx(64.0)


def test_importance_sample_conjugate_beta_posterior():
    alpha, beta = 2.0, 3.0
    data = generate_synthetic_dataset(50, reference_theta(0.3), np.random.default_rng(2))
    positives = int(data.labels.sum())
    c0, c1 = reference_theta().component0, reference_theta().component1

    def log_target(u, jacobian=True):
        pi = float(special.expit(u[0]))
        value = (log_likelihood_supervised(MixtureParams(pi, c0, c1), data)
                 + stats.beta.logpdf(pi, alpha, beta))
        if jacobian:
            value += math.log(pi) + math.log1p(-pi)
        return value

    center = [special.logit((alpha + positives - 1) / (alpha + beta + data.n_items - 2))]
    proposal = fit_proposal(lambda u: log_target(u, jacobian=False), center).inflated(1.2)
    drawn = importance_sample(log_target, proposal, 10_000, np.random.default_rng(3))
    weighted_pi = float(np.dot(drawn.weights, special.expit(drawn.points[:, 0])))
    closed_form = (alpha + positives) / (alpha + beta + data.n_items)
    assert abs(weighted_pi - closed_form) < 1e-2


def test_sample_unlabeled_labels_examples():
    rng = np.random.default_rng(4)
    # log-normal has no density at s = 0, the truncated normal does
    theta = MixtureParams(0.5, DistributionSpec(FamilyTag.LOG_NORMAL, (-1.0, 0.5)),
                          DistributionSpec(TNORM, (0.5, 0.2)))
    data = ScoreDataset([0.0, 0.0, 0.0], [UNLABELED] * 3)
    assert sample_unlabeled_labels(theta, data, rng).tolist() == [1, 1, 1]

    no_positives = MixtureParams(0.0, reference_theta().component0, reference_theta().component1)
    data = ScoreDataset(np.linspace(0.05, 0.95, 20), [UNLABELED] * 20)
    assert sample_unlabeled_labels(no_positives, data, rng).sum() == 0


def test_sample_unlabeled_labels_frequency():
    component = DistributionSpec(GAMMA, (2.0, 0.1))
    theta = MixtureParams(0.7, component, component)
    data = ScoreDataset(np.full(10_000, 0.3), [UNLABELED] * 10_000)
    assert responsibilities(theta, np.array([0.3]))[0] == pytest.approx(0.7)
    labels = sample_unlabeled_labels(theta, data, np.random.default_rng(5))
    assert abs(labels.mean() - 0.7) < 0.015


def test_sample_unlabeled_labels_zero_density_everywhere():
    component = DistributionSpec(FamilyTag.LOG_NORMAL, (-1.0, 0.5))
    theta = MixtureParams(0.5, component, component)
    data = ScoreDataset([0.2, 0.0], [UNLABELED, UNLABELED])
    with pytest.raises(InferenceError) as excinfo:
        sample_unlabeled_labels(theta, data, np.random.default_rng(6))
    assert excinfo.value.item == 1


def test_run_spe_fully_labeled():
    data = generate_synthetic_dataset(300, reference_theta(0.2), np.random.default_rng(7))
    ensemble = run_spe(data, PriorSpec(), (GAMMA, TNORM), 50, 2, np.random.default_rng(8))
    assert ensemble.completed_labels.shape == (50, 0)
    assert ensemble.weights.sum() == pytest.approx(1.0)
    assert 1.0 <= ensemble.ess <= 50.0 + 1e-9
    matrix = ensemble.label_matrix()
    assert all((row == data.labels).all() for row in matrix)
    np.testing.assert_array_equal(posterior_label_probability(ensemble), data.labels.astype(float))


def test_run_spe_recovers_pi_from_twenty_labels():
    rng = np.random.default_rng(9)
    full = generate_synthetic_dataset(2000, reference_theta(), rng)
    data = sample_label_budget(full, 20, rng)
    ensemble = run_spe(data, PriorSpec(), (GAMMA, TNORM), 500, 4, rng)
    assert abs(ensemble.weighted_pi() - 0.1) < 0.05
    assert ensemble.completed_labels.shape == (500, data.unlabeled_idx.size)
    assert 1.0 <= ensemble.ess <= 500.0 + 1e-9

    probability = posterior_label_probability(ensemble)
    labeled = data.labeled_idx
    np.testing.assert_array_equal(probability[labeled], data.labels[labeled].astype(float))
    assert np.all((probability >= 0.0) & (probability <= 1.0))


def test_run_spe_is_deterministic():
    full = generate_synthetic_dataset(400, reference_theta(0.2), np.random.default_rng(10))
    data = sample_label_budget(full, 20, np.random.default_rng(11))
    first = run_spe(data, PriorSpec(), (GAMMA, TNORM), 40, 2, np.random.default_rng(12))
    second = run_spe(data, PriorSpec(), (GAMMA, TNORM), 40, 2, np.random.default_rng(12))
    np.testing.assert_array_equal(first.weights, second.weights)
    np.testing.assert_array_equal(first.completed_labels, second.completed_labels)
    assert [t.to_dict() for t in first.params] == [t.to_dict() for t in second.params]


def test_run_spe_records_low_ess_retry():
    data = generate_synthetic_dataset(200, reference_theta(0.3), np.random.default_rng(13))
    settings = InferenceSettings(ess_warning_fraction=1.5)
    ensemble = run_spe(data, PriorSpec(), (GAMMA, TNORM), 20, 1, np.random.default_rng(14), settings)
    assert len(ensemble.warnings) == 2
    assert ensemble.diagnostics()["warnings"] == ensemble.warnings


@pytest.mark.slow
def test_posterior_label_probability_tracks_responsibilities():
    rng = np.random.default_rng(15)
    theta = reference_theta()
    data = sample_label_budget(generate_synthetic_dataset(2000, theta, rng), 20, rng)
    ensemble = run_spe(data, PriorSpec(), (GAMMA, TNORM), 2000, 4, rng)
    unlabeled = data.unlabeled_idx
    estimated = posterior_label_probability(ensemble)[unlabeled]
    exact = responsibilities(theta, data.scores[unlabeled])
    assert math.sqrt(float(np.mean((estimated - exact) ** 2))) < 0.05


def main():
    """Run all tests"""
    print("=" * 60)
    print("Posterior Inference - Tests")
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
