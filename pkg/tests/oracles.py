"""Independent reference computations shared by unit and acceptance tests."""

import numpy as np

from gpdiscrepancy.dynamics import Rayleigh, ShearBuildingModel, TimeSeriesDataset, ViscousRatio, simulate_response
from gpdiscrepancy.kernels import KernelConfig, kernel_value


def joint_kernel(cfg, ta, tb, channels, same_points):
    """Covariance of stacked (time-major) channel vectors, built entry by entry."""
    K = np.zeros((ta.size * channels, tb.size * channels))
    for i, a in enumerate(ta):
        for j, b in enumerate(tb):
            v = float(kernel_value(cfg, abs(a - b)))
            if same_points and i == j:
                v += cfg.noise_floor
            for c in range(channels):
                K[i * channels + c, j * channels + c] = v
    return K


def brute_condition(f_train, Y, t_train, f_pred, t_pred, cfg):
    """Mean and covariance of y_pred | y_train for the stacked joint Gaussian."""
    ch = Y.shape[1]
    K11 = joint_kernel(cfg, t_train, t_train, ch, True)
    K12 = joint_kernel(cfg, t_train, t_pred, ch, False)
    K22 = joint_kernel(cfg, t_pred, t_pred, ch, True)
    r = (Y - f_train).reshape(-1)
    A = np.linalg.solve(K11, K12).T
    mean = f_pred.reshape(-1) + A @ r
    cov = K22 - A @ K12
    return mean.reshape(-1, ch), 0.5 * (cov + cov.T)


def random_kernel(rng):
    fam = rng.choice(["GWN", "SE", "PE", "MMTE"])
    noise = float(rng.uniform(0.05, 0.5))
    if fam == "GWN":
        return KernelConfig("GWN", (), noise)
    if fam == "SE":
        return KernelConfig("SE", (rng.uniform(0.1, 2), rng.uniform(0.5, 20)), noise)
    if fam == "PE":
        return KernelConfig("PE", (rng.uniform(0.1, 2), rng.uniform(0.5, 5), rng.uniform(0.5, 5)), noise)
    m = int(rng.integers(1, 4))
    params = []
    for _ in range(m):
        params += [rng.uniform(0.1, 1), rng.uniform(0.5, 8), rng.uniform(0.1, 10)]
    return KernelConfig("MMTE", params, noise)


def random_instance(rng):
    """(dataset, model, kernel, mode, extra) with n*N_o + n'*N_o <= 40."""
    dofs = int(rng.integers(1, 4))
    damping = ViscousRatio(0.05) if dofs == 1 else Rayleigh(0.02, 0.01)
    n_obs = int(rng.integers(1, dofs + 1))
    observed = tuple(sorted(rng.choice(dofs, n_obs, replace=False).tolist()))
    model = ShearBuildingModel(rng.uniform(0.5, 2, dofs), rng.uniform(2, 20, dofs), damping, observed,
                               int(rng.integers(0, dofs)))
    budget = 40 // n_obs
    mode = rng.choice(["forecast", "gap", "same"])
    dt = float(rng.choice([0.05, 0.1, 0.2]))
    if mode == "same":
        n = budget // 2
    else:
        n = int(rng.integers(2, budget - 1))
    u = rng.standard_normal((n, 1))
    y = simulate_response(model, u, dt) + 0.3 * rng.standard_normal((n, n_obs))
    ds = TimeSeriesDataset(dt, u, y, observed, t0=float(rng.uniform(0, 3)))
    cfg = random_kernel(rng)
    if mode == "forecast":
        n_pred = int(rng.integers(1, budget - n + 1))
        return ds, model, cfg, mode, rng.standard_normal((n_pred, 1))
    if mode == "gap":
        mask = np.ones(n, bool)
        k = int(rng.integers(1, n))
        mask[rng.choice(n, k, replace=False)] = False
        return ds, model, cfg, mode, mask
    return ds, model, cfg, mode, None


def reference_for(ds, model, cfg, mode, extra):
    t = ds.times
    if mode == "forecast":
        f = simulate_response(model, np.vstack([ds.input, extra]), ds.dt)
        t_pred = ds.t0 + ds.dt * (ds.n + np.arange(extra.shape[0]))
        return brute_condition(f[: ds.n], ds.output, t, f[ds.n:], t_pred, cfg)
    f = simulate_response(model, ds.input, ds.dt)
    if mode == "gap":
        m = extra
        return brute_condition(f[m], ds.output[m], t[m], f[~m], t[~m], cfg)
    return brute_condition(f, ds.output, t, f, t, cfg)
