"""
Posterior-predictive responses: Gaussian conditioning of the discrepancy
process on training residuals, a plug-in version at the MPV, posterior
mixtures over samples, and gap infill.

Prediction targets are described in one of two ways:

* ``pred_input`` given: the samples that follow the training record, driven
  by ``pred_input``. The structural model is simulated over the training and
  prediction inputs back to back so its state is continuous.
* ``mask`` given (and no ``pred_input``): the unobserved samples of the
  record itself, i.e. a missing segment.

If neither is given the prediction grid is the training grid.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
from scipy.special import logsumexp

from .dynamics import ShearBuildingModel, TimeSeriesDataset, simulate_response
from .errors import NumericalError
from .kernels import KernelConfig, temporal_matrix
from .linalg import cholesky_factor

__all__ = [
    "PredictiveDistribution",
    "conditional_predict",
    "map_predict",
    "mixture_predict",
    "reconstruct_missing",
    "log_posterior_predictive_score",
    "gap_mask",
]

log = logging.getLogger(__name__)
LOG_2PI = math.log(2.0 * math.pi)
FULL_COVARIANCE_LIMIT = 2000  # n' * N_o above which only variances are kept


@dataclass
class PredictiveDistribution:
    times: np.ndarray  # (n',)
    mean: np.ndarray  # (n', N_o)
    variance: np.ndarray  # (n', N_o)
    covariance: np.ndarray | None = None  # (n' N_o)^2, time-major
    provenance: str = "MAP"
    n_components: int = 1
    channel_labels: tuple = ()
    component_moments: list | None = field(default=None, repr=False)

    @property
    def n(self) -> int:
        return self.times.size

    @property
    def sd(self) -> np.ndarray:
        return np.sqrt(np.clip(self.variance, 0.0, None))

    def band(self, k: float = 2.0):
        return self.mean - k * self.sd, self.mean + k * self.sd

    def table(self, k: float | None = 2.0):
        """Column names and rows: t, mean per channel, SD per channel, optional k-SD bands."""
        labels = self.channel_labels or tuple(f"y{j}" for j in range(self.mean.shape[1]))
        cols = ["t"] + [f"mean_{c}" for c in labels] + [f"sd_{c}" for c in labels]
        data = [self.times[:, None], self.mean, self.sd]
        if k is not None:
            lo, hi = self.band(k)
            cols += [f"lower_{c}" for c in labels] + [f"upper_{c}" for c in labels]
            data += [lo, hi]
        return cols, np.hstack(data)


# --------------------------------------------------------------------------
# targets and the conditioning core
# --------------------------------------------------------------------------


def _targets(dataset: TimeSeriesDataset, model: ShearBuildingModel, pred_input=None, mask=None):
    """(f_train, Y_train, t_train, f_pred, t_pred) for one structural model."""
    n = dataset.n
    t = dataset.times
    obs = np.ones(n, dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
    if pred_input is not None:
        u_pred = np.asarray(pred_input, dtype=float).reshape(-1, dataset.input.shape[1])
        f = simulate_response(model, np.vstack([dataset.input, u_pred]), dataset.dt)
        t_pred = dataset.t0 + dataset.dt * (n + np.arange(u_pred.shape[0]))
        return f[:n][obs], dataset.output[obs], t[obs], f[n:], t_pred
    f = simulate_response(model, dataset.input, dataset.dt)
    if mask is None:
        return f, dataset.output, t, f, t
    return f[obs], dataset.output[obs], t[obs], f[~obs], t[~obs]


def _condition(f_train, Y, t_train, f_pred, t_pred, kernel: KernelConfig):
    """Mean (n', N_o) and temporal covariance (n', n') of the prediction samples."""
    T = temporal_matrix(kernel, t_train)
    T[np.diag_indices_from(T)] += kernel.noise_floor
    fac = cholesky_factor(T)
    Tc = temporal_matrix(kernel, t_train, t_pred)
    Tp = temporal_matrix(kernel, t_pred)
    Tp[np.diag_indices_from(Tp)] += kernel.noise_floor
    R = np.asarray(Y, float) - f_train
    mean = f_pred + Tc.T @ fac.solve(R)
    W = sla.solve_triangular(fac.lower, Tc, lower=True)
    S = Tp - W.T @ W
    return mean, 0.5 * (S + S.T)


def _distribution(times, mean, S, channels, provenance, labels, full=None):
    n_pred = times.size
    var = np.repeat(np.diag(S)[:, None], channels, axis=1)
    if full is None:
        full = n_pred * channels <= FULL_COVARIANCE_LIMIT
    cov = (S if channels == 1 else np.kron(S, np.eye(channels))) if full else None
    return PredictiveDistribution(times, mean, var, cov, provenance, 1, tuple(labels))


def conditional_predict(dataset: TimeSeriesDataset, model: ShearBuildingModel, kernel: KernelConfig,
                        pred_input=None, pred_times=None, mask=None,
                        full_covariance: bool | None = None) -> PredictiveDistribution:
    """Gaussian conditioning of the prediction samples on the training residuals.

    ``pred_times`` overrides the time stamps of the prediction samples (the
    structural response is still taken from ``pred_input``).
    """
    f_tr, Y, t_tr, f_pr, t_pr = _targets(dataset, model, pred_input, mask)
    if Y.shape[0] == 0:
        raise ValueError("no observed training samples")
    if pred_times is not None:
        t_pr = np.asarray(pred_times, dtype=float).ravel()
        if t_pr.size != f_pr.shape[0]:
            raise ValueError("pred_times must match the number of prediction samples")
    if t_pr.size == 0:
        empty = np.empty((0, dataset.n_channels))
        return PredictiveDistribution(t_pr, empty, empty, np.empty((0, 0)), "MAP", 1, dataset.channel_labels)
    mean, S = _condition(f_tr, Y, t_tr, f_pr, t_pr, kernel)
    return _distribution(t_pr, mean, S, dataset.n_channels, "MAP", dataset.channel_labels, full_covariance)


def map_predict(laplace, problem, pred_input=None, full_covariance: bool | None = None) -> PredictiveDistribution:
    """Plug-in prediction at the MPV; parameter uncertainty is ignored."""
    if not laplace.converged:
        log.warning("predicting from an MPV search that did not converge")
    mc = problem.model_class
    model = mc.structure.build(laplace.mpv.theta)
    return conditional_predict(problem.dataset, model, laplace.kernel(), pred_input,
                               mask=problem.mask, full_covariance=full_covariance)


def gap_mask(dataset: TimeSeriesDataset, start: float, stop: float) -> np.ndarray:
    """Boolean mask of observed samples: False for start <= t < stop."""
    t = dataset.times
    eps = 1e-9 * dataset.dt
    return ~((t >= start - eps) & (t < stop - eps))


def reconstruct_missing(dataset: TimeSeriesDataset, gap, model: ShearBuildingModel, kernel: KernelConfig,
                        full_covariance: bool | None = None) -> PredictiveDistribution:
    """Infill of the samples in ``gap = (start, stop)`` from the rest of the record.

    The input is assumed known over the gap; ``dataset.output`` there is ignored.
    """
    mask = gap_mask(dataset, *gap)
    if not mask.any():
        raise ValueError("no observed samples outside the gap")
    return conditional_predict(dataset, model, kernel, mask=mask, full_covariance=full_covariance)


# --------------------------------------------------------------------------
# posterior mixtures
# --------------------------------------------------------------------------


def _unique_components(samples, max_components):
    X = samples.samples
    if max_components is not None and X.shape[0] > max_components:
        X = X[np.linspace(0, X.shape[0] - 1, max_components).round().astype(int)]
    uniq, counts = np.unique(X, axis=0, return_counts=True)
    return uniq, counts, X.shape[0]


def _component(problem, x, pred_input):
    mc = problem.model_class
    split = mc.split(x)
    model = mc.structure.build(split.theta)
    kernel = mc.kernel(split.phi)
    f_tr, Y, t_tr, f_pr, t_pr = _targets(problem.dataset, model, pred_input, problem.mask)
    mean, S = _condition(f_tr, Y, t_tr, f_pr, t_pr, kernel)
    return t_pr, mean, S


def _check_failures(failed, total):
    if failed:
        log.warning("%d of %d mixture components failed and were skipped", failed, total)
    if failed > 0.1 * total:
        raise NumericalError("more than 10% of mixture components failed", {"failed": failed, "total": total})


def mixture_predict(samples, problem, pred_input=None, max_components: int | None = None,
                    full_covariance: bool | None = None) -> PredictiveDistribution:
    """Moments of the equal-weight mixture of per-sample conditional Gaussians.

    Repeated samples are evaluated once and weighted by multiplicity.
    ``max_components`` thins the sample set at evenly spaced indices.
    """
    uniq, counts, total = _unique_components(samples, max_components)
    channels = problem.dataset.n_channels
    means, covs, weights = [], [], []
    times = None
    failed = 0
    for x, c in zip(uniq, counts):
        try:
            times, m, S = _component(problem, x, pred_input)
        except (NumericalError, ValueError, np.linalg.LinAlgError):
            failed += int(c)
            continue
        means.append(m)
        covs.append(S)
        weights.append(float(c))
    _check_failures(failed, total)
    w = np.asarray(weights) / np.sum(weights)
    M = np.stack(means)  # (K, n', N_o)
    n_pred = times.size
    mu = np.tensordot(w, M, axes=1)
    D = (M - mu).reshape(len(w), -1)
    full = n_pred * channels <= FULL_COVARIANCE_LIMIT if full_covariance is None else full_covariance
    S_avg = np.tensordot(w, np.stack(covs), axes=1)
    var = np.repeat(np.diag(S_avg)[:, None], channels, axis=1) + (w @ (D * D)).reshape(n_pred, channels)
    cov = None
    if full:
        cov = (S_avg if channels == 1 else np.kron(S_avg, np.eye(channels))) + (D * w[:, None]).T @ D
        cov = 0.5 * (cov + cov.T)
    provenance = f"mixture of {total - failed} components" + ("" if full else " (diagonal only)")
    moments = [(m, np.diag(S)) for m, S in zip(means, covs)]
    return PredictiveDistribution(times, mu, var, cov, provenance, total - failed,
                                  tuple(problem.dataset.channel_labels), moments)


def _gaussian_logpdf(Y, mean, S):
    fac = cholesky_factor(S, channels=Y.shape[1])
    return -0.5 * fac.quad(Y - mean) - 0.5 * fac.logdet - 0.5 * Y.size * LOG_2PI


def log_posterior_predictive_score(samples, problem, pred_input, pred_output,
                                   max_components: int | None = None) -> float:
    """ln of the sample average of the held-out Gaussian densities."""
    Yp = np.asarray(pred_output, dtype=float)
    Yp = Yp.reshape(Yp.shape[0], -1)
    uniq, counts, total = _unique_components(samples, max_components)
    terms = []
    failed = 0
    for x, c in zip(uniq, counts):
        try:
            _, m, S = _component(problem, x, pred_input)
            terms.append(_gaussian_logpdf(Yp, m, S) + math.log(c))
        except (NumericalError, ValueError, np.linalg.LinAlgError):
            failed += int(c)
    _check_failures(failed, total)
    terms = np.asarray(terms)
    if not np.any(np.isfinite(terms)):
        log.warning("all predictive densities underflow")
        return -np.inf
    return float(logsumexp(terms) - math.log(total - failed))
