import numpy as np
import pytest

from shapdec.core import Coalition, FeatureMatrix, RngStream
from shapdec.distributions import (
    CopulaSampler,
    DiscreteJoint,
    DiscreteSampler,
    GaussianModel,
    GaussianSampler,
    MarginalSampler,
    condition_gaussian,
    fit_copula,
    fit_gaussian,
    sampler_from_json,
)
from shapdec.errors import ConditioningError, DegenerateMarginalError, IngestionError


def _toy_gaussian():
    mu = np.array([1.0, -2.0, 0.5])
    cov = np.array(
        [
            [2.0, 0.8, -0.4],
            [0.8, 1.5, 0.3],
            [-0.4, 0.3, 1.0],
        ]
    )
    return GaussianModel(mu, cov)


def test_condition_gaussian_matches_hand_solve():
    model = _toy_gaussian()
    x = np.array([2.0, 0.0, 0.0])
    known = Coalition.from_indices([0], 3)
    cond = condition_gaussian(model, known, x)
    # mu_m + Sigma_ms Sigma_ss^-1 (x_s - mu_s), known block is feature 0
    gain = model.cov[1:, 0] / model.cov[0, 0]
    expected_mean = model.mean[1:] + gain * (x[0] - model.mean[0])
    expected_cov = model.cov[1:, 1:] - np.outer(gain, model.cov[0, 1:])
    assert np.allclose(cond.cond_mean, expected_mean, atol=1e-12)
    assert np.allclose(cond.cond_cov, expected_cov, atol=1e-12)


def test_condition_gaussian_empty_coalition_is_marginal():
    model = _toy_gaussian()
    cond = condition_gaussian(model, Coalition.empty(3), np.zeros(3))
    assert np.allclose(cond.cond_mean, model.mean)
    assert np.allclose(cond.cond_cov, model.cov)


def test_conditional_moments_by_monte_carlo():
    model = _toy_gaussian()
    sampler = GaussianSampler(model)
    known = Coalition.from_indices([1], 3)
    x = np.array([0.0, -1.0, 0.0])
    draws = sampler.sample_conditional(known, x, 200_000, RngStream(5))
    cond = condition_gaussian(model, known, x)
    assert draws.shape == (200_000, 2)
    assert np.allclose(draws.mean(axis=0), cond.cond_mean, atol=0.02)
    assert np.allclose(np.cov(draws.T), cond.cond_cov, atol=0.05)
    assert np.allclose(sampler.conditional_mean(known, x), cond.cond_mean, atol=1e-12)


def test_fit_gaussian_recovers_moments():
    gen = RngStream(11).generator()
    rows = gen.multivariate_normal([0.0, 3.0], [[1.0, 0.6], [0.6, 2.0]], size=50_000)
    model = fit_gaussian(FeatureMatrix(("a", "b"), rows))
    assert np.allclose(model.mean, [0.0, 3.0], atol=0.05)
    assert np.allclose(model.cov, [[1.0, 0.6], [0.6, 2.0]], atol=0.1)


def test_gaussian_sampler_full_coalition_returns_x():
    sampler = GaussianSampler(_toy_gaussian())
    x = np.array([1.0, 2.0, 3.0])
    draws = sampler.sample_conditional(Coalition.full(3), x, 4, RngStream(0))
    assert draws.shape == (4, 0)


def test_copula_marginals_roundtrip_on_observed_points():
    gen = RngStream(2).generator()
    rows = np.column_stack(
        [gen.exponential(2.0, 500), gen.normal(5.0, 2.0, 500)]
    )
    model = fit_copula(FeatureMatrix(("e", "n"), rows))
    for j, marg in enumerate(model.marginals):
        u = marg.to_uniform(rows[:, j])
        back = marg.from_uniform(u)
        assert np.allclose(back, rows[:, j], atol=1e-9)


def test_copula_latent_correlation_tracks_rank_correlation():
    gen = RngStream(3).generator()
    z = gen.multivariate_normal([0, 0], [[1.0, 0.8], [0.8, 1.0]], size=4000)
    # monotone marginal transforms leave the copula untouched
    rows = np.column_stack([np.exp(z[:, 0]), z[:, 1] ** 3])
    model = fit_copula(FeatureMatrix(("a", "b"), rows))
    assert abs(model.latent_corr[0, 1] - 0.8) < 0.05


def test_copula_conditional_sampling_respects_support():
    gen = RngStream(4).generator()
    rows = np.column_stack([gen.uniform(0, 1, 300), gen.uniform(10, 20, 300)])
    sampler = CopulaSampler(fit_copula(FeatureMatrix(("u", "v"), rows)))
    draws = sampler.sample_conditional(
        Coalition.from_indices([0], 2), np.array([0.5, 0.0]), 500, RngStream(9)
    )
    assert draws.shape == (500, 1)
    assert draws.min() >= 10.0 - 1e-9
    assert draws.max() <= 20.0 + 1e-9


def test_copula_rejects_constant_column():
    rows = np.column_stack([np.ones(50), np.arange(50.0)])
    with pytest.raises(DegenerateMarginalError):
        fit_copula(FeatureMatrix(("c", "x"), rows))


def _xor_joint():
    support = np.array(
        [[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0]]
    )
    return DiscreteJoint(support, np.array([0.35, 0.15, 0.15, 0.35]))


def test_discrete_joint_restrict_renormalizes():
    joint = _xor_joint()
    rows, probs = joint.restrict(Coalition.from_indices([0], 2), np.array([1.0, 0.0]))
    assert np.allclose(probs.sum(), 1.0)
    assert np.allclose(probs, [0.3, 0.7])
    assert np.allclose(rows[:, 0], 1.0)


def test_discrete_joint_restrict_off_support_errors():
    joint = _xor_joint()
    with pytest.raises(ConditioningError):
        joint.restrict(Coalition.from_indices([0], 2), np.array([2.0, 0.0]))


def test_discrete_joint_probability_validation():
    support = np.array([[0.0], [1.0]])
    with pytest.raises(IngestionError):
        DiscreteJoint(support, np.array([0.6, 0.5]))


def test_discrete_sampler_conditional_mean_is_exact():
    joint = _xor_joint()
    sampler = DiscreteSampler(joint)
    mean = sampler.conditional_mean(
        Coalition.from_indices([0], 2), np.array([1.0, 0.0])
    )
    # P(X2=1 | X1=1) = 0.7
    assert np.allclose(mean, [0.7], atol=1e-12)


def test_discrete_sampler_frequencies_converge():
    sampler = DiscreteSampler(_xor_joint())
    draws = sampler.sample_conditional(
        Coalition.from_indices([0], 2), np.array([1.0, 0.0]), 50_000, RngStream(6)
    )
    assert abs(draws.mean() - 0.7) < 0.01


def test_marginal_sampler_ignores_conditioning():
    data = FeatureMatrix(("a", "b"), np.array([[0.0, 10.0], [1.0, 20.0]]))
    sampler = MarginalSampler(data)
    draws = sampler.sample_conditional(
        Coalition.from_indices([0], 2), np.array([555.0, 0.0]), 2000, RngStream(8)
    )
    assert set(np.unique(draws)) <= {10.0, 20.0}
    mean = sampler.conditional_mean(Coalition.from_indices([0], 2), np.zeros(2))
    assert np.allclose(mean, [15.0])


@pytest.mark.parametrize("kind", ["gaussian", "copula", "discrete", "marginal"])
def test_sampler_json_roundtrip(kind):
    gen = RngStream(13).generator()
    rows = np.round(gen.normal(size=(60, 2)), 3)
    data = FeatureMatrix(("a", "b"), rows)
    if kind == "gaussian":
        sampler = GaussianSampler(fit_gaussian(data))
    elif kind == "copula":
        sampler = CopulaSampler(fit_copula(data))
    elif kind == "discrete":
        uniq, counts = np.unique(rows, axis=0, return_counts=True)
        sampler = DiscreteSampler(DiscreteJoint(uniq, counts / counts.sum()))
    else:
        sampler = MarginalSampler(data)
    clone = sampler_from_json(sampler.to_json_dict())
    known = Coalition.from_indices([1], 2)
    x = rows[0]
    a = sampler.sample_conditional(known, x, 32, RngStream(77))
    b = clone.sample_conditional(known, x, 32, RngStream(77))
    assert np.allclose(a, b)


def test_sampler_from_json_unknown_kind():
    with pytest.raises(IngestionError):
        sampler_from_json({"kind": "wishful"})
