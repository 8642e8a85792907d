"""
Reference problems: a damped single-degree-of-freedom oscillator and a
five-story shear frame, each with a damping discrepancy between the data
generator and the model.

Both records are synthesized from a seeded white-noise force; the first
half of each record is used for training.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dynamics import (
    Rayleigh,
    ShearBuildingModel,
    ShearFamily,
    StructuralParameter,
    TimeSeriesDataset,
    ViscousRatio,
    synthesize_dataset,
)
from .inference import ModelClass, PriorSpec, Problem, TruncationPolicy, Uniform, kernel_priors
from .selection import initial_point

__all__ = ["Benchmark", "sdof", "five_story", "SENSORS", "CASES"]

SDOF_BOUNDS = dict(sigma_f2=(1e-8, 10.0), inv_ell2=(1e-4, 1e3), omega=(0.1, 50.0), sigma_n2=(1e-12, 10.0))
FRAME_BOUNDS = dict(sigma_f2=(1e-10, 10.0), inv_ell2=(1e-4, 1e2), omega=(0.1, 20.0), sigma_n2=(1e-10, 10.0))

SENSORS = {"A": (1,), "B": (1, 3)}  # observed floors (0-based): 2nd, and 2nd + 4th
CASES = {"I": (0,), "II": (0, 3), "III": (0, 3, 4)}  # unknown story stiffness ratios


@dataclass
class Benchmark:
    dataset: TimeSeriesDataset  # full noisy record
    clean: TimeSeriesDataset  # same record without measurement noise
    n_train: int
    structure: ShearFamily
    theta_prior: PriorSpec
    theta_init: np.ndarray
    theta_true: np.ndarray
    kernel_bounds: dict

    @property
    def train(self) -> TimeSeriesDataset:
        return self.dataset.segment(0, self.n_train)

    @property
    def heldout(self) -> TimeSeriesDataset:
        return self.dataset.segment(self.n_train, self.dataset.n)

    def problem(self, family: str, order: int | None = None, truncation: TruncationPolicy | None = None,
                dataset: TimeSeriesDataset | None = None) -> Problem:
        if family.upper() == "MMTE" and order is None:
            order = 1
        prior = self.theta_prior + kernel_priors(family, order, self.kernel_bounds)
        mc = ModelClass(self.structure, family, prior, order)
        return Problem(mc, self.train if dataset is None else dataset, truncation=truncation)

    def initial_point(self, problem: Problem) -> np.ndarray:
        return initial_point(problem, self.theta_init)


def sdof(noise_std: float = 0.1, seed: int = 2023, duration: float = 40.0, dt: float = 0.01) -> Benchmark:
    """m = 1 kg, k = 5 N/m; data with 5% damping, model with 4%; k unknown."""
    truth = ShearBuildingModel([1.0], [5.0], ViscousRatio(0.05), (0,), 0)
    template = ShearBuildingModel([1.0], [5.0], ViscousRatio(0.04), (0,), 0)
    ds = synthesize_dataset(truth, 1.0, seed, dt, duration, noise_std=noise_std)
    clean = synthesize_dataset(truth, 1.0, seed, dt, duration)
    fam = ShearFamily(template, (StructuralParameter("k", "stiffness", 0),))
    return Benchmark(ds, clean, int(round(0.5 * duration / dt)), fam, PriorSpec(["k"], [Uniform(1.0, 10.0)]),
                     np.array([4.8]), np.array([5.0]), dict(SDOF_BOUNDS))


def five_story(sensors: str = "A", case: str = "I", noise_std: float = 0.02, seed: int = 7,
               duration: float = 60.0, dt: float = 0.01) -> Benchmark:
    """Unit masses, 10 N/m stories, force at the roof; Rayleigh alpha 0.02 (data) vs 0.03 (model)."""
    obs = SENSORS[sensors]
    idx = CASES[case]
    truth = ShearBuildingModel(np.ones(5), 10.0 * np.ones(5), Rayleigh(0.02, 2e-5), obs, 4)
    template = ShearBuildingModel(np.ones(5), 10.0 * np.ones(5), Rayleigh(0.03, 2e-5), obs, 4)
    ds = synthesize_dataset(truth, 1.0, seed, dt, duration, noise_std=noise_std)
    clean = synthesize_dataset(truth, 1.0, seed, dt, duration)
    params = tuple(StructuralParameter(f"theta{i + 1}", "stiffness_ratio", i) for i in idx)
    fam = ShearFamily(template, params)
    prior = PriorSpec(fam.names, [Uniform(0.5, 1.5)] * len(idx))
    return Benchmark(ds, clean, int(round(0.5 * duration / dt)), fam, prior, np.full(len(idx), 1.05),
                     np.ones(len(idx)), dict(FRAME_BOUNDS))
