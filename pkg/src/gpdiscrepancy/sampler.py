"""
Transitional MCMC over the joint posterior of structural and kernel parameters.

Sampling happens in the transformed coordinates of the prior (log for
LogUniform entries) and samples are reported in natural units. Any prior
object exposing ``sample(rng, n)``, ``to_z``, ``from_z`` and ``logpdf_z``
can be used, which keeps the sampler testable on toy targets.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .errors import TmcmcError

__all__ = [
    "TmcmcConfig",
    "PosteriorSamples",
    "tmcmc",
    "tmcmc_sample",
    "sample_moments",
    "evidence_naive",
    "next_beta",
    "resample_indices",
]

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TmcmcConfig:
    n_samples: int = 1000
    target_weight_cov: float = 1.0
    proposal_scale: float = 0.2
    max_stages: int = 60
    seed: int | None = None

    def __post_init__(self):
        if self.seed is None:
            raise TypeError("TmcmcConfig needs an explicit seed")
        if self.n_samples < 100:
            raise ValueError("n_samples must be >= 100")
        if not 0 < self.proposal_scale <= 1:
            raise ValueError("proposal_scale must lie in (0, 1]")
        if not self.target_weight_cov > 0:
            raise ValueError("target_weight_cov must be positive")
        if self.max_stages < 1:
            raise ValueError("max_stages must be >= 1")


@dataclass
class PosteriorSamples:
    samples: np.ndarray  # (N_s, dim), natural units
    log_likelihoods: np.ndarray
    log_evidence: float
    stage_betas: np.ndarray
    acceptance_rates: np.ndarray
    names: list = field(default_factory=list)

    @property
    def n_samples(self) -> int:
        return self.samples.shape[0]

    @property
    def n_stages(self) -> int:
        return len(self.stage_betas) - 1

    def moments(self):
        return sample_moments(self)


def sample_moments(samples):
    """Plug-in mean and covariance with the 1/N convention."""
    X = samples.samples if isinstance(samples, PosteriorSamples) else np.asarray(samples, dtype=float)
    X = X.reshape(X.shape[0], -1)
    if X.shape[0] < 2:
        raise ValueError("need at least two samples")
    mean = X.mean(axis=0)
    D = X - mean
    cov = D.T @ D / X.shape[0]
    return mean, 0.5 * (cov + cov.T)


def evidence_naive(log_likelihoods) -> float:
    """ln of the prior-sample average of the likelihood.

    Biased low when the likelihood is much narrower than the prior; kept for
    comparison with the tempered estimate.
    """
    ll = np.asarray(log_likelihoods, dtype=float)
    if not np.any(np.isfinite(ll)):
        log.warning("all likelihoods underflow; naive evidence is -inf")
        return -np.inf
    return float(logsumexp(ll) - math.log(ll.size))


def _weight_cov(dlogl, dbeta):
    a = dbeta * dlogl
    w = np.exp(a - a.max())
    m = w.mean()
    return w.std() / m if m > 0 else np.inf


def next_beta(log_likelihoods, beta: float, target_cov: float = 1.0) -> float:
    """Largest step whose plausibility weights have coefficient of variation ``target_cov``."""
    ll = np.asarray(log_likelihoods, dtype=float)
    finite = np.isfinite(ll)
    # -inf likelihoods get zero weight; substitute a very low value for the cov test
    dl = np.where(finite, ll, ll[finite].min() - 1e6) if finite.any() else None
    if dl is None:
        raise TmcmcError("all likelihoods are -inf", diagnostics={"beta": beta})
    dl = dl - dl.max()
    span = 1.0 - beta
    if _weight_cov(dl, span) <= target_cov:
        return 1.0
    lo, hi = 0.0, span
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if _weight_cov(dl, mid) > target_cov:
            hi = mid
        else:
            lo = mid
        if hi - lo <= 1e-12 * max(span, 1e-300):
            break
    step = lo if lo > 0 else hi
    return min(beta + step, 1.0)


def resample_indices(rng: np.random.Generator, weights, n: int) -> np.ndarray:
    """Multinomial resampling by normalized weights."""
    w = np.asarray(weights, dtype=float)
    p = w / w.sum()
    counts = rng.multinomial(n, p)
    return np.repeat(np.arange(p.size), counts)


def _evaluate(fun, points, workers):
    if workers > 1 and len(points) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return np.fromiter(pool.map(fun, points), dtype=float, count=len(points))
    return np.fromiter((fun(p) for p in points), dtype=float, count=len(points))


def tmcmc(log_likelihood, prior, config: TmcmcConfig, names=None, workers: int = 1) -> PosteriorSamples:
    """Tempered sampling from ``prior * exp(log_likelihood)``.

    ``log_likelihood`` takes a natural-unit vector and returns a float
    (-inf for invalid points). Every random draw of a stage is made before
    any likelihood is evaluated, so the result does not depend on the
    evaluation order or on ``workers``.
    """
    N = config.n_samples
    streams = [np.random.Generator(np.random.PCG64(s))
               for s in np.random.SeedSequence(config.seed).spawn(config.max_stages + 1)]

    X = np.asarray(prior.sample(streams[0], N), dtype=float).reshape(N, -1)
    Z = np.array([prior.to_z(x) for x in X]).reshape(N, -1)
    dim = Z.shape[1]
    logp = np.array([prior.logpdf_z(z) for z in Z])

    def loglik_z(z):
        return float(log_likelihood(prior.from_z(z)))

    logl = _evaluate(loglik_z, list(Z), workers)
    beta = 0.0
    betas = [0.0]
    rates = []
    log_evidence = 0.0
    stage = 0
    while beta < 1.0:
        stage += 1
        if stage > config.max_stages:
            partial = PosteriorSamples(np.array([prior.from_z(z) for z in Z]), logl, log_evidence,
                                       np.array(betas), np.array(rates), list(names or []))
            raise TmcmcError(f"beta reached only {beta:.4g} after {config.max_stages} stages",
                             partial=partial, diagnostics={"beta": beta, "stages": config.max_stages})
        new_beta = next_beta(logl, beta, config.target_weight_cov)
        dbeta = new_beta - beta
        a = np.where(np.isfinite(logl), dbeta * logl, -np.inf)
        amax = a.max()
        w = np.exp(a - amax)
        log_evidence += float(amax + math.log(np.sum(w) / N))
        wn = w / w.sum()

        mean = wn @ Z
        D = Z - mean
        cov = (D * wn[:, None]).T @ D
        cov = 0.5 * (cov + cov.T) * config.proposal_scale**2
        cov += 1e-12 * np.trace(cov) / dim * np.eye(dim) if np.trace(cov) > 0 else 1e-12 * np.eye(dim)
        chol = np.linalg.cholesky(cov)

        rng = streams[stage]
        idx = resample_indices(rng, w, N)
        steps = rng.standard_normal((N, dim)) @ chol.T
        log_u = np.log(rng.random(N))

        Z0, lp0, ll0 = Z[idx], logp[idx], logl[idx]
        Zc = Z0 + steps
        lpc = np.array([prior.logpdf_z(z) for z in Zc])
        inside = np.isfinite(lpc)
        llc = np.full(N, -np.inf)
        if inside.any():
            llc[inside] = _evaluate(loglik_z, list(Zc[inside]), workers)
        with np.errstate(invalid="ignore"):
            log_ratio = (lpc + new_beta * llc) - (lp0 + new_beta * ll0)
        accept = inside & np.isfinite(llc) & (log_u < log_ratio)
        Z = np.where(accept[:, None], Zc, Z0)
        logp = np.where(accept, lpc, lp0)
        logl = np.where(accept, llc, ll0)
        rates.append(float(accept.mean()))
        beta = new_beta
        betas.append(beta)
        log.debug("tmcmc stage %d: beta=%.4g accept=%.2f logZ=%.6g", stage, beta, rates[-1], log_evidence)

    samples = np.array([prior.from_z(z) for z in Z])
    return PosteriorSamples(samples, logl, log_evidence, np.array(betas), np.array(rates), list(names or []))


def tmcmc_sample(problem, config: TmcmcConfig, workers: int = 1) -> PosteriorSamples:
    """TMCMC on a :class:`~gpdiscrepancy.inference.Problem` with its own prior."""
    prior = problem.prior
    for p in prior.priors:
        if not (np.isfinite(p.lo) and np.isfinite(p.hi)):
            raise ValueError("TMCMC needs a proper prior with bounded support")
    return tmcmc(problem.log_likelihood_safe, prior, config, names=problem.model_class.names, workers=workers)
