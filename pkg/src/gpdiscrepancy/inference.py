"""
Likelihood, conditional objectives, two-stage MPV search and Laplace approximation.

Parameters live in two coordinate systems: natural units (what priors,
summaries and the model see) and transformed coordinates (identity for
Uniform priors, natural log for LogUniform priors) used by the optimizers
and the finite-difference Hessian.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .dynamics import ShearBuildingModel, TimeSeriesDataset, simulate_response
from .errors import InitializationError, NumericalError
from .kernels import KernelConfig, _evaluate, _uniform_step, n_kernel_params, param_names, temporal_matrix
from .linalg import (
    CholeskyFactor,
    SpectralFactor,
    TruncationPolicy,
    cholesky_factor,
    spectral_truncation,
    toeplitz_logdet_quad,
)

__all__ = [
    "Uniform",
    "LogUniform",
    "PriorSpec",
    "ParameterSplit",
    "ModelClass",
    "Problem",
    "LaplaceSummary",
    "TruncationPolicy",
    "kernel_priors",
    "log_likelihood",
    "truncated_spectral_form",
    "find_mpv",
    "laplace_covariance",
    "fd_hessian",
    "laplace_from_objective",
]

log = logging.getLogger(__name__)
LOG_2PI = math.log(2.0 * math.pi)


# --------------------------------------------------------------------------
# priors
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Uniform:
    lo: float
    hi: float
    transform = "identity"

    def __post_init__(self):
        if not self.lo < self.hi:
            raise ValueError(f"prior bounds need lo < hi, got ({self.lo}, {self.hi})")

    def contains(self, x):
        return (x >= self.lo) & (x <= self.hi)

    def logpdf(self, x):
        return np.where(self.contains(x), -math.log(self.hi - self.lo), -np.inf)

    def to_z(self, x):
        return np.asarray(x, dtype=float)

    def from_z(self, z):
        return np.asarray(z, dtype=float)

    def log_jacobian(self, z):
        return np.zeros_like(np.asarray(z, dtype=float))

    def sample(self, rng, n):
        return rng.uniform(self.lo, self.hi, n)

    def to_dict(self):
        return {"type": "uniform", "lo": self.lo, "hi": self.hi}


@dataclass(frozen=True)
class LogUniform:
    lo: float
    hi: float
    transform = "log"

    def __post_init__(self):
        if not 0 < self.lo < self.hi:
            raise ValueError(f"log-uniform bounds need 0 < lo < hi, got ({self.lo}, {self.hi})")

    def contains(self, x):
        return (x >= self.lo) & (x <= self.hi)

    def logpdf(self, x):
        x = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            val = -np.log(x) - math.log(math.log(self.hi / self.lo))
        return np.where(self.contains(x), val, -np.inf)

    def to_z(self, x):
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.log(np.asarray(x, dtype=float))

    def from_z(self, z):
        return np.exp(np.asarray(z, dtype=float))

    def log_jacobian(self, z):
        return np.asarray(z, dtype=float)

    def sample(self, rng, n):
        return np.exp(rng.uniform(math.log(self.lo), math.log(self.hi), n))

    def to_dict(self):
        return {"type": "loguniform", "lo": self.lo, "hi": self.hi}


def prior_from_dict(d: dict):
    kind = d["type"].lower()
    if kind == "uniform":
        return Uniform(float(d["lo"]), float(d["hi"]))
    if kind in ("loguniform", "log_uniform", "log-uniform"):
        return LogUniform(float(d["lo"]), float(d["hi"]))
    raise ValueError(f"unknown prior type {d['type']!r}")


class PriorSpec:
    """Independent per-parameter priors in a fixed order."""

    def __init__(self, names, priors):
        self.names = list(names)
        self.priors = list(priors)
        if len(self.names) != len(self.priors):
            raise ValueError("one prior per parameter name required")

    def __len__(self):
        return len(self.priors)

    def __getitem__(self, idx):
        if isinstance(idx, slice):
            return PriorSpec(self.names[idx], self.priors[idx])
        return self.priors[idx]

    def __add__(self, other):
        return PriorSpec(self.names + other.names, self.priors + other.priors)

    @property
    def transforms(self):
        return [p.transform for p in self.priors]

    def contains(self, x) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(all(p.contains(v) for p, v in zip(self.priors, x)))

    def logpdf(self, x) -> float:
        x = np.asarray(x, dtype=float)
        total = 0.0
        for p, v in zip(self.priors, x):
            total += float(p.logpdf(v))
            if total == -np.inf:
                return -np.inf
        return total

    def to_z(self, x):
        return np.array([float(p.to_z(v)) for p, v in zip(self.priors, np.asarray(x, float))])

    def from_z(self, z):
        return np.array([float(p.from_z(v)) for p, v in zip(self.priors, np.asarray(z, float))])

    def dx_dz(self, x):
        """Diagonal Jacobian of the natural-from-transformed map."""
        return np.array([v if p.transform == "log" else 1.0 for p, v in zip(self.priors, np.asarray(x, float))])

    def logpdf_z(self, z) -> float:
        """Log density of the transformed coordinates (prior plus log-Jacobian)."""
        x = self.from_z(z)
        lp = self.logpdf(x)
        if lp == -np.inf:
            return lp
        return lp + float(sum(p.log_jacobian(v) for p, v in zip(self.priors, np.asarray(z, float))))

    def sample(self, rng, n):
        return np.column_stack([p.sample(rng, n) for p in self.priors])

    def to_dict(self):
        return {name: p.to_dict() for name, p in zip(self.names, self.priors)}


def kernel_priors(family: str, order: int | None, bounds: dict) -> PriorSpec:
    """Log-uniform priors for a kernel's hyperparameters plus sigma_n2.

    ``bounds`` maps base names (sigma_f2, inv_ell2, omega, sigma_n2) to
    (lo, hi); MMTE components share the bounds of their base name unless a
    numbered key (e.g. ``omega_2``) is given.
    """
    names = param_names(family, order)
    priors = []
    for name in names:
        key = name if name in bounds else name.rsplit("_", 1)[0] if name[-1].isdigit() else name
        if key not in bounds:
            raise ValueError(f"no prior bounds for kernel parameter {name!r}")
        lo, hi = bounds[key]
        priors.append(LogUniform(float(lo), float(hi)))
    return PriorSpec(names, priors)


# --------------------------------------------------------------------------
# parameter containers
# --------------------------------------------------------------------------


@dataclass
class ParameterSplit:
    theta: np.ndarray
    phi: np.ndarray
    theta_names: list = field(default_factory=list)
    phi_names: list = field(default_factory=list)
    units: list = field(default_factory=list)
    transforms: list = field(default_factory=list)

    def __post_init__(self):
        self.theta = np.atleast_1d(np.asarray(self.theta, dtype=float))
        self.phi = np.atleast_1d(np.asarray(self.phi, dtype=float))
        if self.theta_names and len(self.theta_names) != self.theta.size:
            raise ValueError("theta names/values length mismatch")
        if self.phi_names and len(self.phi_names) != self.phi.size:
            raise ValueError("phi names/values length mismatch")

    @property
    def vector(self) -> np.ndarray:
        return np.concatenate([self.theta, self.phi])

    @property
    def names(self) -> list:
        return list(self.theta_names) + list(self.phi_names)


@dataclass
class ModelClass:
    """Structural family + kernel family + prior: one candidate model class."""

    structure: object  # needs .names and .response(theta, u, dt)
    kernel_family: str
    prior: PriorSpec
    mmte_order: int | None = None
    model_id: str = ""

    def __post_init__(self):
        self.kernel_family = self.kernel_family.upper()
        if self.kernel_family == "MMTE" and not self.mmte_order:
            raise ValueError("MMTE model class needs mmte_order")
        if len(self.prior) != self.n_theta + self.n_phi:
            raise ValueError(f"prior has {len(self.prior)} entries, model class needs {self.n_theta + self.n_phi}")
        if not self.model_id:
            self.model_id = self.kernel_family + (str(self.mmte_order) if self.kernel_family == "MMTE" else "")

    @property
    def n_theta(self) -> int:
        return len(self.structure.names)

    @property
    def n_phi(self) -> int:
        return n_kernel_params(self.kernel_family, self.mmte_order) + 1

    @property
    def names(self) -> list:
        return list(self.structure.names) + param_names(self.kernel_family, self.mmte_order)

    def kernel(self, phi) -> KernelConfig:
        return KernelConfig.from_vector(self.kernel_family, phi, self.mmte_order)

    def split(self, x) -> ParameterSplit:
        x = np.asarray(x, dtype=float)
        units = [getattr(p, "unit", "-") for p in getattr(self.structure, "parameters", [])]
        units += ["-"] * (len(x) - len(units))
        return ParameterSplit(x[: self.n_theta], x[self.n_theta:], list(self.structure.names),
                              param_names(self.kernel_family, self.mmte_order), units, self.prior.transforms)


# --------------------------------------------------------------------------
# likelihood evaluation bound to data
# --------------------------------------------------------------------------


class Problem:
    """A model class conditioned on a dataset.

    ``mask`` selects the observed samples (the model is still simulated over
    the whole record, so gaps keep the structural state continuous).
    """

    def __init__(self, model_class: ModelClass, dataset: TimeSeriesDataset, mask=None,
                 truncation: TruncationPolicy | None = None):
        self.model_class = model_class
        self.dataset = dataset
        self.mask = None if mask is None else np.asarray(mask, dtype=bool)
        self.truncation = truncation if truncation is not None and truncation.enabled else None
        t = dataset.times
        self.times = t if self.mask is None else t[self.mask]
        self.Y = dataset.output if self.mask is None else dataset.output[self.mask]
        if self.Y.shape[0] == 0:
            raise ValueError("no observed samples")
        self.channels = dataset.n_channels
        self.n_data = self.Y.size
        self._toeplitz = self.truncation is None and (self.times.size < 3 or _uniform_step(self.times) is not None)

    # structural side
    @property
    def n_theta(self):
        return self.model_class.n_theta

    @property
    def prior(self) -> PriorSpec:
        return self.model_class.prior

    def response(self, theta) -> np.ndarray:
        f = self.model_class.structure.response(theta, self.dataset.input, self.dataset.dt)
        return f if self.mask is None else f[self.mask]

    def residual(self, theta) -> np.ndarray:
        return self.Y - self.response(theta)

    # covariance side
    def temporal(self, phi) -> np.ndarray:
        cfg = self.model_class.kernel(phi)
        T = temporal_matrix(cfg, self.times)
        T[np.diag_indices_from(T)] += cfg.noise_floor
        return T

    def factor(self, phi) -> CholeskyFactor | SpectralFactor:
        T = self.temporal(phi)
        if self.truncation is not None:
            return spectral_truncation(T, self.truncation.relative_threshold,
                                       self.model_class.kernel(phi).noise_floor, self.channels)
        return cholesky_factor(T, self.channels)

    def logdet_quad(self, phi, R):
        if self._toeplitz and self.times.size >= 3:
            cfg = self.model_class.kernel(phi)
            h = self.times[1] - self.times[0]
            col = _evaluate(cfg, h * np.arange(self.times.size))
            col[0] += cfg.noise_floor
            return toeplitz_logdet_quad(col, R)
        f = self.factor(phi)
        return f.logdet, f.quad(R)

    def log_likelihood(self, theta, phi, R=None) -> float:
        R = self.residual(theta) if R is None else R
        logdet, quad = self.logdet_quad(phi, R)
        return -0.5 * quad - 0.5 * logdet - 0.5 * self.n_data * LOG_2PI

    # objectives
    def neg_log_conditional_theta(self, theta, phi, factor=None) -> float:
        """L(theta | phi) = 1/2 r^T K^-1 r - ln p(theta) (determinant term dropped)."""
        lp = self.prior[: self.n_theta].logpdf(theta)
        if lp == -np.inf:
            return np.inf
        try:
            R = self.residual(theta)
            quad = factor.quad(R) if factor is not None else self.logdet_quad(phi, R)[1]
        except (NumericalError, ValueError):
            return np.inf
        return 0.5 * quad - lp

    def neg_log_conditional_phi(self, phi, theta, R=None) -> float:
        """L(phi | theta) = 1/2 ln|K| + 1/2 r^T K^-1 r - ln p(phi)."""
        lp = self.prior[self.n_theta:].logpdf(phi)
        if lp == -np.inf:
            return np.inf
        try:
            R = self.residual(theta) if R is None else R
            logdet, quad = self.logdet_quad(phi, R)
        except (NumericalError, ValueError):
            return np.inf
        return 0.5 * logdet + 0.5 * quad - lp

    def neg_log_posterior(self, x) -> float:
        """L(theta, phi) = -ln p(Y | theta, phi) - ln p(theta, phi) (evidence omitted)."""
        x = np.asarray(x, dtype=float)
        lp = self.prior.logpdf(x)
        if lp == -np.inf:
            return np.inf
        try:
            return -self.log_likelihood(x[: self.n_theta], x[self.n_theta:]) - lp
        except (NumericalError, ValueError):
            return np.inf

    def log_likelihood_safe(self, x) -> float:
        x = np.asarray(x, dtype=float)
        try:
            return self.log_likelihood(x[: self.n_theta], x[self.n_theta:])
        except (NumericalError, ValueError):
            return -np.inf


def log_likelihood(dataset: TimeSeriesDataset, model: ShearBuildingModel, kernel: KernelConfig,
                   truncation: TruncationPolicy | None = None) -> float:
    """ln N(Y | f(X; theta), K) for a fully specified model and kernel."""
    R = dataset.output - simulate_response(model, dataset.input, dataset.dt)
    T = temporal_matrix(kernel, dataset.times)
    T[np.diag_indices_from(T)] += kernel.noise_floor
    if truncation is not None and truncation.enabled:
        fac = spectral_truncation(T, truncation.relative_threshold, kernel.noise_floor, dataset.n_channels)
    else:
        fac = cholesky_factor(T, dataset.n_channels)
    return -0.5 * fac.quad(R) - 0.5 * fac.logdet - 0.5 * R.size * LOG_2PI


def truncated_spectral_form(K: np.ndarray, policy: TruncationPolicy, noise_floor: float) -> SpectralFactor:
    """Eigen-truncation of ``K`` at ``policy.relative_threshold`` of its largest eigenvalue."""
    return spectral_truncation(K, policy.relative_threshold, noise_floor)


# --------------------------------------------------------------------------
# two-stage MPV search
# --------------------------------------------------------------------------


def _local_min(fun, z0, budget=500, restarts=2, rng=None, step=0.05):
    """Nelder-Mead from ``z0`` plus restarts from perturbed copies of the best point.

    All runs share ``budget`` function evaluations. The returned point is
    never worse than ``z0``.
    """
    z0 = np.asarray(z0, dtype=float)
    dim = z0.size
    best_z, best_f = z0.copy(), fun(z0)
    used = 1
    opts = {"xatol": 1e-9, "fatol": 1e-9}

    def simplex(center, scale):
        S = np.tile(center, (dim + 1, 1))
        for i in range(dim):
            delta = scale * max(abs(center[i]), 1.0)
            if rng is not None:
                delta *= rng.choice((-1.0, 1.0)) * rng.uniform(0.5, 1.5)
            S[i + 1, i] += delta
        return S

    for attempt in range(restarts + 1):
        left = budget - used
        if left < dim + 2:
            break
        scale = step if attempt == 0 else step / (3.0 * attempt)
        res = minimize(fun, best_z, method="Nelder-Mead",
                       options={**opts, "maxfev": left, "initial_simplex": simplex(best_z, scale),
                                "adaptive": dim > 4})
        used += res.nfev
        if np.isfinite(res.fun) and res.fun < best_f:
            best_z, best_f = np.asarray(res.x, dtype=float), float(res.fun)
    return best_z, best_f, used


@dataclass
class LaplaceSummary:
    mpv: ParameterSplit
    covariance: np.ndarray | None
    converged: bool
    iterations: int
    neg_log_posterior_at_mpv: float
    log_likelihood_at_mpv: float = float("nan")
    identifiable: bool = True
    log_evidence: float | None = None
    trace: list = field(default_factory=list)
    model_id: str = ""
    kernel_family: str = ""
    mmte_order: int | None = None
    n_data: int = 0

    @property
    def names(self) -> list:
        return self.mpv.names

    @property
    def std(self) -> np.ndarray | None:
        if self.covariance is None:
            return None
        return np.sqrt(np.clip(np.diag(self.covariance), 0.0, None))

    def kernel(self) -> KernelConfig:
        return KernelConfig.from_vector(self.kernel_family, self.mpv.phi, self.mmte_order)


def find_mpv(problem: Problem, init, tol: float = 1e-6, max_iter: int = 100, budget: int = 500,
             restarts: int = 2, seed: int = 0) -> LaplaceSummary:
    """Alternate argmin L(theta | phi) and argmin L(phi | theta) until the relative change is <= tol."""
    mc = problem.model_class
    x = np.asarray(init.vector if isinstance(init, ParameterSplit) else init, dtype=float)
    nt = mc.n_theta
    if x.size != nt + mc.n_phi:
        raise ValueError(f"init has {x.size} entries, expected {nt + mc.n_phi}")
    L0 = problem.neg_log_posterior(x)
    if not np.isfinite(L0):
        raise InitializationError("objective is not finite at the initial point", {"init": x.tolist()})
    prior_t, prior_p = mc.prior[:nt], mc.prior[nt:]
    rng = np.random.Generator(np.random.PCG64(seed))
    trace = [L0]
    converged = False
    j = 0
    while j < max_iter:
        theta, phi = x[:nt], x[nt:]
        if nt:
            fac = problem.factor(phi)

            def f_theta(z):
                return problem.neg_log_conditional_theta(prior_t.from_z(z), phi, factor=fac)

            zt, _, _ = _local_min(f_theta, prior_t.to_z(theta), budget, restarts, rng)
            theta_new = prior_t.from_z(zt)
        else:
            theta_new = theta
        R = problem.residual(theta_new)

        def f_phi(z):
            return problem.neg_log_conditional_phi(prior_p.from_z(z), theta_new, R=R)

        zp, _, _ = _local_min(f_phi, prior_p.to_z(phi), budget, restarts, rng)
        phi_new = prior_p.from_z(zp)
        x_new = np.concatenate([theta_new, phi_new])
        trace.append(problem.neg_log_posterior(x_new))
        denom = np.linalg.norm(x)
        conv = np.linalg.norm(x_new - x) / denom if denom > 0 else np.nan
        x = x_new
        j += 1
        log.debug("mpv iter %d: L=%.6g conv=%.3g", j, trace[-1], conv)
        if np.isfinite(conv) and conv <= tol:
            converged = True
            break
    # canonical MMTE ordering
    kcfg = mc.kernel(x[nt:])
    x = np.concatenate([x[:nt], kcfg.to_vector()])
    loglik = problem.log_likelihood_safe(x)
    return LaplaceSummary(
        mpv=mc.split(x), covariance=None, converged=converged, iterations=j,
        neg_log_posterior_at_mpv=problem.neg_log_posterior(x), log_likelihood_at_mpv=loglik,
        trace=trace, model_id=mc.model_id, kernel_family=mc.kernel_family, mmte_order=mc.mmte_order,
        n_data=problem.n_data,
    )


# --------------------------------------------------------------------------
# Laplace approximation
# --------------------------------------------------------------------------


def fd_hessian(fun, z, steps=None) -> np.ndarray:
    """Central-difference Hessian, symmetrized."""
    z = np.asarray(z, dtype=float)
    d = z.size
    h = np.maximum(1e-4 * np.abs(z), 1e-6) if steps is None else np.asarray(steps, dtype=float)
    f0 = fun(z)
    H = np.empty((d, d))
    E = np.diag(h)
    for i in range(d):
        fp, fm = fun(z + E[i]), fun(z - E[i])
        H[i, i] = (fp - 2.0 * f0 + fm) / h[i] ** 2
        for k in range(i):
            fpp = fun(z + E[i] + E[k])
            fpm = fun(z + E[i] - E[k])
            fmp = fun(z - E[i] + E[k])
            fmm = fun(z - E[i] - E[k])
            H[i, k] = H[k, i] = (fpp - fpm - fmp + fmm) / (4.0 * h[i] * h[k])
    return 0.5 * (H + H.T)


def laplace_from_objective(fun, z_hat, dx_dz=None, steps=None):
    """Covariance from the inverse Hessian of ``fun`` at ``z_hat``.

    Returns ``(covariance in natural units, hessian, identifiable)``; the
    delta method maps through the diagonal Jacobian ``dx_dz``.
    """
    H = fd_hessian(fun, z_hat, steps)
    identifiable = bool(np.all(np.isfinite(H)))
    if identifiable:
        try:
            np.linalg.cholesky(H)
            cov_z = np.linalg.inv(H)
        except np.linalg.LinAlgError:
            identifiable = False
    if not identifiable:
        cov_z = np.linalg.pinv(np.where(np.isfinite(H), H, 0.0))
    cov_z = 0.5 * (cov_z + cov_z.T)
    J = np.ones(len(z_hat)) if dx_dz is None else np.asarray(dx_dz, dtype=float)
    return cov_z * np.outer(J, J), H, identifiable


def laplace_covariance(problem: Problem, at) -> LaplaceSummary:
    """Gaussian approximation at the MPV: inverse Hessian of L(theta, phi) in transformed coordinates."""
    mc = problem.model_class
    if isinstance(at, LaplaceSummary):
        base = at
        x = at.mpv.vector
    else:
        base = None
        x = np.asarray(at.vector if isinstance(at, ParameterSplit) else at, dtype=float)
    prior = mc.prior
    z_hat = prior.to_z(x)

    def fun(z):
        return problem.neg_log_posterior(prior.from_z(z))

    cov, _, identifiable = laplace_from_objective(fun, z_hat, prior.dx_dz(x))
    if not identifiable:
        log.warning("Hessian at the MPV is not positive definite; using pseudo-inverse")
    L_hat = problem.neg_log_posterior(x)
    loglik = problem.log_likelihood_safe(x)
    sign, logdet = np.linalg.slogdet(cov)
    evidence = None
    if identifiable and sign > 0:
        evidence = loglik + prior.logpdf(x) + 0.5 * x.size * LOG_2PI + 0.5 * logdet
    return LaplaceSummary(
        mpv=mc.split(x), covariance=cov,
        converged=base.converged if base else True,
        iterations=base.iterations if base else 0,
        neg_log_posterior_at_mpv=L_hat, log_likelihood_at_mpv=loglik,
        identifiable=identifiable, log_evidence=evidence,
        trace=list(base.trace) if base else [], model_id=mc.model_id,
        kernel_family=mc.kernel_family, mmte_order=mc.mmte_order, n_data=problem.n_data,
    )
