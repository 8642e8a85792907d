"""Model-class ranking and MMTE order selection."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .diagnostics import periodogram, peak_pick
from .dynamics import ShearFamily, TimeSeriesDataset
from .errors import NumericalError
from .inference import ModelClass, PriorSpec, Problem, find_mpv, kernel_priors

__all__ = [
    "ModelClassScore",
    "OrderSelection",
    "model_posterior_probabilities",
    "bic_score",
    "mmte_initial_guess",
    "initial_point",
    "select_mmte_order",
    "score_table",
]

log = logging.getLogger(__name__)


@dataclass
class ModelClassScore:
    model_id: str
    log_evidence: float
    log_posterior_predictive: float | None = None
    log_prior_prob: float | None = None  # None means equal priors
    bic: float | None = None
    evidence_source: str = "TMCMC"

    @property
    def total(self) -> float:
        """Predictive plus evidence term, plus the log prior when priors are unequal."""
        t = self.log_evidence
        if self.log_posterior_predictive is not None:
            t += self.log_posterior_predictive
        if self.log_prior_prob is not None:
            t += self.log_prior_prob
        return t


def model_posterior_probabilities(scores, use_predictive: bool = False) -> np.ndarray:
    """Normalized probabilities from evidence (optionally times the held-out predictive)."""
    if not scores:
        raise ValueError("need at least one score")
    terms = []
    for s in scores:
        t = s.log_evidence
        if use_predictive:
            if s.log_posterior_predictive is None:
                raise ValueError(f"{s.model_id}: no posterior-predictive term")
            t += s.log_posterior_predictive
        if s.log_prior_prob is not None:
            t += s.log_prior_prob
        terms.append(t)
    terms = np.asarray(terms, dtype=float)
    if np.any(np.isnan(terms)) or np.any(terms == np.inf):
        raise ValueError("log terms must be finite or -inf")
    if not np.any(np.isfinite(terms)):
        raise ValueError("all log terms are -inf")
    return np.exp(terms - logsumexp(terms))


def bic_score(log_lik_at_mpv: float, n_params: int, n_data: int) -> float:
    """ln p(Y | MPV) - n_params/2 * ln(n_data)."""
    if n_data < 2:
        raise ValueError("n_data must be >= 2")
    return float(log_lik_at_mpv) - 0.5 * n_params * math.log(n_data)


def score_table(scores, use_predictive: bool | None = None):
    """Column names and rows (model_id, log_evidence, log_posterior_predictive, bic, probability)."""
    if use_predictive is None:
        use_predictive = all(s.log_posterior_predictive is not None for s in scores)
    probs = model_posterior_probabilities(scores, use_predictive)
    cols = ["model_id", "log_evidence", "log_posterior_predictive", "total", "bic", "probability", "evidence_source"]
    rows = [[s.model_id, s.log_evidence, s.log_posterior_predictive, s.total, s.bic, float(p), s.evidence_source]
            for s, p in zip(scores, probs)]
    return cols, rows


# --------------------------------------------------------------------------
# MMTE order selection
# --------------------------------------------------------------------------


def mmte_initial_guess(residual, dt: float, modal_frequencies, order: int, inv_ell2: float = 3e-3,
                       noise_fraction: float = 0.5) -> np.ndarray:
    """Starting hyperparameters [sigma_f2_k, omega_k, inv_ell2_k]*m + [sigma_n2].

    Frequencies start at the modal frequencies around which the residual
    carries the most spectral power. If the order exceeds the number of
    modes, extra frequencies come from the strongest residual peaks not
    already within 10% of a chosen frequency.
    """
    r = np.asarray(residual, dtype=float)
    r = r.reshape(r.shape[0], -1)
    var = float(np.mean(r.var(axis=0)))
    modal = np.sort(np.asarray(modal_frequencies, dtype=float))
    specs = [periodogram(r[:, j], dt) for j in range(r.shape[1])]
    w_axis = 2 * np.pi * specs[0].frequencies
    power = np.sum([sp.power for sp in specs], axis=0)
    band_power = []
    for w in modal:
        near = np.abs(w_axis - w) <= max(0.05 * w, w_axis[1])
        band_power.append(power[near].max() if near.any() else 0.0)
    ranked = modal[np.argsort(band_power, kind="stable")[::-1]]
    omegas = [float(w) for w in ranked[:order]]
    if len(omegas) < order:
        peaks = []
        for sp in specs:
            peaks.extend(2 * np.pi * peak_pick(sp))
        for w in peaks:
            if len(omegas) == order:
                break
            if w > 0 and all(abs(w - o) > 0.1 * o for o in omegas):
                omegas.append(float(w))
        top = max(omegas) if omegas else 1.0
        while len(omegas) < order:
            top *= 1.5
            omegas.append(top)
    phi = []
    for w in sorted(omegas):
        phi += [(1 - noise_fraction) * var / order, w, inv_ell2]
    return np.array(phi + [noise_fraction * var])


def initial_point(problem: Problem, theta_init, inv_ell2: float = 3e-3) -> np.ndarray:
    """Starting vector [theta, phi] with phi read off the residual at ``theta_init``.

    The residual variance sets the signal and noise scales; SE starts at unit
    inverse squared length, PE at the fundamental nominal frequency, MMTE via
    :func:`mmte_initial_guess`. The result is clipped to the prior support.
    """
    mc = problem.model_class
    theta = np.asarray(theta_init, dtype=float)
    r = problem.residual(theta)
    var = float(np.mean(r.var(axis=0)))
    fam = mc.kernel_family
    if fam == "GWN":
        phi = [var]
    elif fam == "SE":
        phi = [var, 1.0, 0.5 * var]
    elif fam == "PE":
        phi = [var, 1.0, float(mc.structure.nominal_frequencies()[0]), 0.5 * var]
    else:
        phi = mmte_initial_guess(r, problem.dataset.dt, mc.structure.nominal_frequencies(), mc.mmte_order, inv_ell2)
    lo = [p.lo for p in mc.prior.priors[mc.n_theta:]]
    hi = [p.hi for p in mc.prior.priors[mc.n_theta:]]
    return np.concatenate([theta, np.clip(phi, lo, hi)])


@dataclass
class OrderSelection:
    summaries: dict  # m -> LaplaceSummary
    bic: dict  # m -> float
    chosen: int
    failures: dict = field(default_factory=dict)


def select_mmte_order(dataset: TimeSeriesDataset, structure: ShearFamily, theta_prior: PriorSpec,
                      kernel_bounds: dict, orders, theta_init, mask=None, inv_ell2_init: float = 3e-3,
                      **mpv_options) -> OrderSelection:
    """MPV per MMTE order and the order with the largest BIC (ties go to the smaller order)."""
    orders = sorted(set(int(m) for m in orders))
    if not orders:
        raise ValueError("orders must be non-empty")
    theta_init = np.asarray(theta_init, dtype=float)
    summaries, bics, failures = {}, {}, {}
    for m in orders:
        prior = theta_prior + kernel_priors("MMTE", m, kernel_bounds)
        mc = ModelClass(structure, "MMTE", prior, m, model_id=f"MMTE(m={m})")
        problem = Problem(mc, dataset, mask=mask)
        try:
            s = find_mpv(problem, initial_point(problem, theta_init, inv_ell2_init), **mpv_options)
        except NumericalError as err:
            failures[m] = str(err)
            log.warning("order %d failed: %s", m, err)
            continue
        summaries[m] = s
        bics[m] = bic_score(s.log_likelihood_at_mpv, mc.n_theta + mc.n_phi, problem.n_data)
        log.info("MMTE order %d: loglik %.6g, BIC %.6g", m, s.log_likelihood_at_mpv, bics[m])
    if not bics:
        raise NumericalError("every candidate order failed", failures)
    best = max(bics.values())
    chosen = min(m for m, b in bics.items() if b == best)
    return OrderSelection(summaries, bics, chosen, failures)
