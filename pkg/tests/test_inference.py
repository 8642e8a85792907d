import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad
from scipy.stats import multivariate_normal

from gpdiscrepancy.dynamics import TimeSeriesDataset
from gpdiscrepancy.errors import InitializationError
from gpdiscrepancy.inference import (
    LogUniform,
    ModelClass,
    PriorSpec,
    Problem,
    TruncationPolicy,
    Uniform,
    find_mpv,
    kernel_priors,
    laplace_covariance,
    laplace_from_objective,
    log_likelihood,
)
from gpdiscrepancy.kernels import KernelConfig, temporal_matrix

BOUNDS = dict(sigma_f2=(1e-6, 1e2), inv_ell2=(1e-3, 1e3), omega=(0.1, 50), sigma_n2=(1e-8, 1e2))


class LinearStructure:
    """Output = input @ theta; a linear-Gaussian test bed."""

    names = ["a", "b"]

    def response(self, theta, u, dt):
        return (np.asarray(u) @ np.asarray(theta, dtype=float))[:, None]


def _linear_problem(n=80, seed=0, family="GWN", order=None, mask=None, truncation=None):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, 2))
    y = X @ np.array([1.5, -0.7]) + 0.3 * rng.standard_normal(n)
    ds = TimeSeriesDataset(0.1, X, y)
    prior = PriorSpec(["a", "b"], [Uniform(-10, 10), Uniform(-10, 10)]) + kernel_priors(family, order, BOUNDS)
    return Problem(ModelClass(LinearStructure(), family, prior, order), ds, mask=mask, truncation=truncation), X, y


# ---------------------------------------------------------------- priors


def test_uniform_logpdf():
    p = Uniform(1.0, 3.0)
    assert p.logpdf(2.0) == pytest.approx(-np.log(2.0))
    assert p.logpdf(3.5) == -np.inf


def test_loguniform_logpdf_normalized():
    p = LogUniform(0.1, 10.0)
    total, _ = quad(lambda x: np.exp(p.logpdf(x)), 0.1, 10.0, points=[1.0])
    assert total == pytest.approx(1.0, rel=1e-8)


@pytest.mark.parametrize("lo,hi", [(1.0, 1.0), (2.0, 1.0)])
def test_bad_bounds(lo, hi):
    with pytest.raises(ValueError):
        Uniform(lo, hi)
    with pytest.raises(ValueError):
        LogUniform(lo, hi)
    with pytest.raises(ValueError):
        LogUniform(0.0, 1.0)


@settings(max_examples=50, deadline=None)
@given(x=st.floats(1e-3, 1e3))
def test_transform_round_trip(x):
    spec = PriorSpec(["u", "l"], [Uniform(1e-3, 1e3), LogUniform(1e-3, 1e3)])
    v = np.array([x, x])
    np.testing.assert_allclose(spec.from_z(spec.to_z(v)), v, rtol=1e-12)


def test_logpdf_z_includes_jacobian():
    spec = PriorSpec(["l"], [LogUniform(0.1, 10.0)])
    z = np.linspace(np.log(0.1), np.log(10.0), 2001)[1:-1]
    dens = np.exp([spec.logpdf_z([v]) for v in z])
    np.testing.assert_allclose(dens, 1.0 / np.log(100.0), rtol=1e-12)


def test_kernel_priors_names_and_overrides():
    spec = kernel_priors("MMTE", 2, {**BOUNDS, "omega_2": (3.0, 4.0)})
    assert spec.names == ["sigma_f2_1", "omega_1", "inv_ell2_1", "sigma_f2_2", "omega_2", "inv_ell2_2", "sigma_n2"]
    assert spec.priors[4] == LogUniform(3.0, 4.0)
    assert spec.priors[1] == LogUniform(0.1, 50)
    with pytest.raises(ValueError):
        kernel_priors("SE", None, {"sigma_f2": (1, 2)})


def test_model_class_checks_prior_length():
    prior = PriorSpec(["a"], [Uniform(0, 1)])
    with pytest.raises(ValueError):
        ModelClass(LinearStructure(), "GWN", prior)
    with pytest.raises(ValueError):
        ModelClass(LinearStructure(), "MMTE", prior)


def test_model_class_defaults():
    pb, _, _ = _linear_problem(family="MMTE", order=2)
    mc = pb.model_class
    assert mc.model_id == "MMTE2"
    assert mc.n_theta == 2 and mc.n_phi == 7
    split = mc.split(np.arange(9.0))
    np.testing.assert_array_equal(split.theta, [0, 1])
    assert split.phi_names[-1] == "sigma_n2"


# ---------------------------------------------------------------- likelihood


@pytest.mark.parametrize("family,order,phi", [
    ("GWN", None, [0.2]),
    ("SE", None, [0.5, 4.0, 0.1]),
    ("PE", None, [0.5, 2.0, 3.0, 0.1]),
    ("MMTE", 2, [0.3, 2.0, 0.5, 0.2, 5.0, 1.0, 0.05]),
])
def test_likelihood_matches_dense_gaussian(family, order, phi):
    pb, X, y = _linear_problem(n=60, family=family, order=order)
    theta = np.array([1.0, -0.5])
    cfg = KernelConfig.from_vector(family, phi, order)
    K = temporal_matrix(cfg, pb.times) + cfg.noise_floor * np.eye(60)
    ref = multivariate_normal(X @ theta, K).logpdf(y)
    assert pb.log_likelihood(theta, phi) == pytest.approx(ref, rel=1e-10)
    # the masked (non-uniform grid) path uses the dense factorization
    mask = np.ones(60, bool)
    mask[[5, 17]] = False
    pm, _, _ = _linear_problem(n=60, family=family, order=order, mask=mask)
    Km = K[np.ix_(mask, mask)]
    ref_m = multivariate_normal((X @ theta)[mask], Km).logpdf(y[mask])
    assert pm.log_likelihood(theta, phi) == pytest.approx(ref_m, rel=1e-10)


def test_truncated_likelihood_converges_to_dense():
    phi = [0.5, 4.0, 0.1]
    dense, _, _ = _linear_problem(n=100, family="SE")
    trunc, _, _ = _linear_problem(n=100, family="SE", truncation=TruncationPolicy(1e-3))
    theta = [1.4, -0.7]
    a, b = dense.log_likelihood(theta, phi), trunc.log_likelihood(theta, phi)
    assert abs(a - b) < 1e-3 * abs(a)


def test_conditional_objectives_share_constant():
    pb, _, _ = _linear_problem(family="SE")
    theta = np.array([1.2, -0.4])
    lp_theta = pb.prior[:2].logpdf(theta)
    diffs = []
    for phi in ([0.5, 4.0, 0.1], [0.1, 1.0, 0.3]):
        x = np.concatenate([theta, phi])
        diffs.append(pb.neg_log_posterior(x) - pb.neg_log_conditional_phi(phi, theta))
    assert diffs[0] == pytest.approx(diffs[1], rel=1e-12)
    assert diffs[0] == pytest.approx(0.5 * pb.n_data * np.log(2 * np.pi) - lp_theta, rel=1e-12)


def test_outside_prior_is_infinite():
    pb, _, _ = _linear_problem()
    assert pb.neg_log_posterior([20.0, 0.0, 0.1]) == np.inf
    assert pb.neg_log_conditional_theta([20.0, 0.0], [0.1]) == np.inf


def test_module_level_log_likelihood_matches_problem():
    from gpdiscrepancy.dynamics import ShearBuildingModel, ViscousRatio, synthesize_dataset

    model = ShearBuildingModel([1.0], [5.0], ViscousRatio(0.05), (0,), 0)
    ds = synthesize_dataset(model, 1.0, 3, 0.01, 2.0, noise_std=0.1)
    cfg = KernelConfig("SE", (0.01, 10.0), 0.01)
    from gpdiscrepancy.dynamics import simulate_response
    R = ds.output - simulate_response(model, ds.input, ds.dt)
    K = temporal_matrix(cfg, ds.times) + 0.01 * np.eye(ds.n)
    ref = multivariate_normal(np.zeros(ds.n), K).logpdf(R[:, 0])
    assert log_likelihood(ds, model, cfg) == pytest.approx(ref, rel=1e-10)


# ---------------------------------------------------------------- MPV and Laplace


def _analytic(X, y):
    n = len(y)
    beta = np.linalg.solve(X.T @ X, X.T @ y)
    rss = float(np.sum((y - X @ beta) ** 2))
    s2 = rss / (n + 2)  # log-uniform prior on the noise variance adds one power of s2
    return beta, s2, s2 * np.linalg.inv(X.T @ X), 2.0 * s2**2 / (n + 2)


def test_find_mpv_linear_gaussian():
    pb, X, y = _linear_problem()
    beta, s2, _, _ = _analytic(X, y)
    s = find_mpv(pb, [0.0, 0.0, 1.0], tol=1e-9, max_iter=200)
    np.testing.assert_allclose(s.mpv.theta, beta, rtol=1e-4)
    assert s.mpv.phi[0] == pytest.approx(s2, rel=1e-4)
    assert s.converged
    assert all(b <= a + 1e-9 for a, b in zip(s.trace, s.trace[1:]))


def test_laplace_matches_linear_gaussian_posterior():
    pb, X, y = _linear_problem()
    beta, s2, cov_theta, var_s2 = _analytic(X, y)
    la = laplace_covariance(pb, np.concatenate([beta, [s2]]))
    assert la.identifiable
    np.testing.assert_allclose(la.covariance[:2, :2], cov_theta, rtol=1e-4)
    assert la.covariance[2, 2] == pytest.approx(var_s2, rel=1e-4)
    np.testing.assert_allclose(la.covariance[:2, 2], 0.0, atol=1e-8 * s2)


def test_laplace_on_quadratic_is_exact():
    A = np.array([[2.0, 0.3], [0.3, 1.0]])
    cov, H, ok = laplace_from_objective(lambda z: 0.5 * z @ A @ z, np.zeros(2), steps=[1e-3, 1e-3])
    assert ok
    np.testing.assert_allclose(cov, np.linalg.inv(A), rtol=1e-6)


def test_laplace_flags_flat_direction():
    cov, H, ok = laplace_from_objective(lambda z: z[0] ** 2, np.zeros(2), steps=[1e-3, 1e-3])
    assert not ok


def test_find_mpv_bad_init():
    pb, _, _ = _linear_problem()
    with pytest.raises(InitializationError):
        find_mpv(pb, [50.0, 0.0, 1.0])
    with pytest.raises(ValueError):
        find_mpv(pb, [0.0, 1.0])


def test_find_mpv_is_deterministic():
    pb, _, _ = _linear_problem(family="SE")
    a = find_mpv(pb, [1.0, -0.5, 0.1, 1.0, 0.1], max_iter=3)
    b = find_mpv(pb, [1.0, -0.5, 0.1, 1.0, 0.1], max_iter=3)
    np.testing.assert_array_equal(a.mpv.vector, b.mpv.vector)
