import numpy as np
import pytest
from scipy.stats import multivariate_normal

from gpdiscrepancy.dynamics import (
    ShearBuildingModel,
    ShearFamily,
    StructuralParameter,
    ViscousRatio,
    simulate_response,
    synthesize_dataset,
)
from gpdiscrepancy.inference import ModelClass, PriorSpec, Problem, Uniform, kernel_priors, laplace_covariance
from gpdiscrepancy.kernels import KernelConfig
from gpdiscrepancy.prediction import (
    conditional_predict,
    gap_mask,
    log_posterior_predictive_score,
    map_predict,
    mixture_predict,
    reconstruct_missing,
)
from gpdiscrepancy.sampler import PosteriorSamples
from oracles import brute_condition, random_instance, reference_for

SDOF = ShearBuildingModel([1.0], [5.0], ViscousRatio(0.05), (0,), 0)
BOUNDS = dict(sigma_f2=(1e-8, 10), inv_ell2=(1e-4, 1e3), omega=(0.1, 50), sigma_n2=(1e-8, 10))


def _rel(a, b):
    return np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300)


def _predict(ds, model, cfg, mode, extra):
    if mode == "forecast":
        return conditional_predict(ds, model, cfg, pred_input=extra)
    if mode == "gap":
        return conditional_predict(ds, model, cfg, mask=extra)
    return conditional_predict(ds, model, cfg)


@pytest.mark.parametrize("seed", range(20))
def test_conditioning_matches_joint_gaussian(seed):
    rng = np.random.default_rng(1000 + seed)
    for _ in range(5):
        ds, model, cfg, mode, extra = random_instance(rng)
        pd = _predict(ds, model, cfg, mode, extra)
        mean, cov = reference_for(ds, model, cfg, mode, extra)
        assert _rel(pd.mean, mean) <= 1e-10
        assert _rel(pd.covariance, cov) <= 1e-10
        np.testing.assert_allclose(pd.variance.reshape(-1), np.diag(cov), rtol=1e-9)


def _sdof_problem(kernel="SE", n=200, seed=5):
    ds = synthesize_dataset(SDOF, 1.0, seed, 0.01, n * 0.01, noise_std=0.1)
    fam = ShearFamily(ShearBuildingModel([1.0], [5.0], ViscousRatio(0.04), (0,), 0),
                      (StructuralParameter("k", "stiffness", 0),))
    order = 1 if kernel == "MMTE" else None
    prior = PriorSpec(["k"], [Uniform(1, 10)]) + kernel_priors(kernel, order, BOUNDS)
    return Problem(ModelClass(fam, kernel, prior, order), ds)


def test_prediction_on_training_grid_keeps_noise():
    pb = _sdof_problem("GWN")
    pd = conditional_predict(pb.dataset, SDOF, KernelConfig("GWN", (), 0.04))
    # white noise carries no information about other samples: posterior = prior
    np.testing.assert_allclose(pd.variance, 0.04, rtol=1e-12)
    np.testing.assert_allclose(pd.mean, simulate_response(SDOF, pb.dataset.input, 0.01), atol=1e-12)


def test_large_prediction_keeps_variance_only():
    ds = synthesize_dataset(SDOF, 1.0, 0, 0.01, 3.0, noise_std=0.1)
    u = np.random.default_rng(0).standard_normal((2100, 1))
    pd = conditional_predict(ds, SDOF, KernelConfig("SE", (0.01, 4.0), 0.01), pred_input=u)
    assert pd.covariance is None
    assert pd.variance.shape == (2100, 1)


def test_table_columns():
    ds = synthesize_dataset(SDOF, 1.0, 0, 0.01, 1.0, noise_std=0.1)
    pd = conditional_predict(ds, SDOF, KernelConfig("SE", (0.01, 4.0), 0.01))
    cols, data = pd.table(2.0)
    assert cols == ["t", "mean_0", "sd_0", "lower_0", "upper_0"]
    np.testing.assert_allclose(data[:, 3], data[:, 1] - 2 * data[:, 2])


def test_gap_mask_half_open():
    ds = synthesize_dataset(SDOF, 1.0, 0, 0.1, 5.0, noise_std=0.0)
    m = gap_mask(ds, 1.0, 2.0)
    assert np.sum(~m) == 10
    assert m[9] and not m[10] and not m[19] and m[20]


def test_reconstruct_ignores_gap_values():
    ds = synthesize_dataset(SDOF, 1.0, 2, 0.05, 4.0, noise_std=0.05)
    cfg = KernelConfig("MMTE", (0.01, 2.2, 0.1), 0.0025)
    a = reconstruct_missing(ds, (1.0, 2.0), SDOF, cfg)
    m = gap_mask(ds, 1.0, 2.0)
    ds.output[~m] = 1e6
    b = reconstruct_missing(ds, (1.0, 2.0), SDOF, cfg)
    np.testing.assert_array_equal(a.mean, b.mean)
    with pytest.raises(ValueError):
        reconstruct_missing(ds, (-1.0, 10.0), SDOF, cfg)


def _samples(X):
    X = np.asarray(X, float)
    return PosteriorSamples(X, np.zeros(len(X)), 0.0, np.array([0.0, 1.0]), np.array([1.0]))


def test_mixture_of_one_equals_conditional():
    pb = _sdof_problem("SE", n=60)
    x = np.array([5.0, 0.01, 4.0, 0.01])
    u = np.random.default_rng(1).standard_normal((10, 1))
    mix = mixture_predict(_samples([x, x, x]), pb, pred_input=u)
    single = conditional_predict(pb.dataset, pb.model_class.structure.build([5.0]), pb.model_class.kernel(x[1:]),
                                 pred_input=u)
    np.testing.assert_allclose(mix.mean, single.mean, rtol=1e-12)
    np.testing.assert_allclose(mix.covariance, single.covariance, rtol=1e-12, atol=1e-15)
    assert mix.n_components == 3


def test_mixture_total_variance():
    pb = _sdof_problem("SE", n=60)
    xs = [np.array([4.8, 0.01, 4.0, 0.01]), np.array([5.2, 0.02, 2.0, 0.02]), np.array([5.2, 0.02, 2.0, 0.02])]
    u = np.random.default_rng(1).standard_normal((8, 1))
    mix = mixture_predict(_samples(xs), pb, pred_input=u)
    comps = []
    for x in xs:
        model = pb.model_class.structure.build(x[:1])
        comps.append(conditional_predict(pb.dataset, model, pb.model_class.kernel(x[1:]), pred_input=u))
    means = np.stack([c.mean[:, 0] for c in comps])
    mu = means.mean(axis=0)
    cov = np.mean([c.covariance for c in comps], axis=0) + np.cov(means.T, bias=True)
    np.testing.assert_allclose(mix.mean[:, 0], mu, rtol=1e-12)
    np.testing.assert_allclose(mix.covariance, cov, rtol=1e-10, atol=1e-14)
    np.testing.assert_allclose(mix.variance[:, 0], np.diag(cov), rtol=1e-10)


def test_posterior_predictive_score_single_component():
    pb = _sdof_problem("SE", n=60)
    x = np.array([5.0, 0.01, 4.0, 0.01])
    u = np.random.default_rng(1).standard_normal((6, 1))
    y = np.random.default_rng(2).standard_normal((6, 1)) * 0.1
    single = conditional_predict(pb.dataset, pb.model_class.structure.build([5.0]), pb.model_class.kernel(x[1:]),
                                 pred_input=u)
    ref = multivariate_normal(single.mean[:, 0], single.covariance).logpdf(y[:, 0])
    assert log_posterior_predictive_score(_samples([x, x]), pb, u, y) == pytest.approx(ref, rel=1e-10)


def test_posterior_predictive_score_is_log_mean_density():
    pb = _sdof_problem("SE", n=60)
    xs = [np.array([4.8, 0.01, 4.0, 0.01]), np.array([5.2, 0.02, 2.0, 0.02])]
    u = np.random.default_rng(1).standard_normal((6, 1))
    y = np.random.default_rng(2).standard_normal((6, 1)) * 0.1
    dens = []
    for x in xs:
        c = conditional_predict(pb.dataset, pb.model_class.structure.build(x[:1]), pb.model_class.kernel(x[1:]),
                                pred_input=u)
        dens.append(multivariate_normal(c.mean[:, 0], c.covariance).pdf(y[:, 0]))
    got = log_posterior_predictive_score(_samples(xs), pb, u, y)
    assert got == pytest.approx(np.log(np.mean(dens)), rel=1e-10)


def test_map_predict_uses_mpv():
    pb = _sdof_problem("SE", n=60)
    la = laplace_covariance(pb, [5.0, 0.01, 4.0, 0.01])
    u = np.zeros((3, 1))
    pd = map_predict(la, pb, pred_input=u)
    ref = conditional_predict(pb.dataset, pb.model_class.structure.build([5.0]), la.kernel(), pred_input=u)
    np.testing.assert_array_equal(pd.mean, ref.mean)


def test_brute_condition_sanity():
    # the oracle itself: conditioning on a far-away point leaves the prior unchanged
    cfg = KernelConfig("SE", (1.0, 10.0), 0.1)
    mean, cov = brute_condition(np.zeros((1, 1)), np.ones((1, 1)), np.array([0.0]), np.zeros((1, 1)),
                                np.array([100.0]), cfg)
    assert mean[0, 0] == pytest.approx(0.0, abs=1e-12)
    assert cov[0, 0] == pytest.approx(1.1)
