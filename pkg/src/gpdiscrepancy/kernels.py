"""
Stationary kernel covariance functions over time stamps.

Hyperparameter vectors use the canonical orders

    SE   : [sigma_f2, inv_ell2]
    PE   : [sigma_f2, inv_ell2, omega]
    MMTE : [sigma_f2_1, omega_1, inv_ell2_1, ..., sigma_f2_m, omega_m, inv_ell2_m]
    GWN  : []

and the isotropic noise variance ``sigma_n2`` is carried separately as
``noise_floor``. SE and PE keep the factor 1/2 in the exponent; MMTE has none.
Multiple channels are a-priori uncorrelated and share one parameter set, so
the full covariance is ``T kron I_{N_o}`` with samples ordered time-major.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import toeplitz

__all__ = [
    "FAMILIES",
    "KernelConfig",
    "AuxiliaryGrid",
    "param_names",
    "n_kernel_params",
    "se_kernel",
    "pe_kernel",
    "mmte_kernel",
    "kernel_value",
    "temporal_matrix",
    "assemble_covariance",
    "assemble_cross_covariance",
]

FAMILIES = ("GWN", "SE", "PE", "MMTE")


def n_kernel_params(family: str, order: int | None = None) -> int:
    if family == "GWN":
        return 0
    if family == "SE":
        return 2
    if family == "PE":
        return 3
    if family == "MMTE":
        if not order or order < 1:
            raise ValueError("MMTE needs an order m >= 1")
        return 3 * order
    raise ValueError(f"unknown kernel family {family!r}")


def param_names(family: str, order: int | None = None, with_noise: bool = True) -> list:
    if family == "GWN":
        names = []
    elif family == "SE":
        names = ["sigma_f2", "inv_ell2"]
    elif family == "PE":
        names = ["sigma_f2", "inv_ell2", "omega"]
    elif family == "MMTE":
        n_kernel_params(family, order)
        names = [f"{p}_{k}" for k in range(1, order + 1) for p in ("sigma_f2", "omega", "inv_ell2")]
    else:
        raise ValueError(f"unknown kernel family {family!r}")
    return names + ["sigma_n2"] if with_noise else names


@dataclass(frozen=True)
class KernelConfig:
    family: str
    params: tuple = ()
    noise_floor: float = 0.0
    mmte_order: int | None = None

    def __post_init__(self):
        fam = self.family.upper()
        object.__setattr__(self, "family", fam)
        p = np.asarray(self.params, dtype=float).ravel()
        order = self.mmte_order
        if fam == "MMTE" and order is None:
            order = p.size // 3
            object.__setattr__(self, "mmte_order", order)
        if p.size != n_kernel_params(fam, order):
            raise ValueError(f"{fam} expects {n_kernel_params(fam, order)} parameters, got {p.size}")
        if not np.all(np.isfinite(p)) or np.any(p <= 0):
            raise ValueError(f"{fam} parameters must be finite and positive: {p.tolist()}")
        if not np.isfinite(self.noise_floor) or self.noise_floor < 0:
            raise ValueError("noise_floor must be >= 0")
        if fam == "GWN" and not self.noise_floor > 0:
            raise ValueError("GWN kernel needs a positive noise variance")
        if fam == "MMTE":
            comps = p.reshape(order, 3)
            comps = comps[np.argsort(comps[:, 1], kind="stable")]
            p = comps.ravel()
        object.__setattr__(self, "params", tuple(float(v) for v in p))

    @classmethod
    def from_vector(cls, family: str, phi, order: int | None = None) -> "KernelConfig":
        """Build from a hyperparameter vector whose last entry is sigma_n2."""
        phi = np.asarray(phi, dtype=float).ravel()
        return cls(family, tuple(phi[:-1]), float(phi[-1]), order)

    def to_vector(self) -> np.ndarray:
        return np.append(np.asarray(self.params), self.noise_floor)

    @property
    def names(self) -> list:
        return param_names(self.family, self.mmte_order)

    @property
    def variance(self) -> float:
        """Kernel value at zero distance (noise excluded)."""
        p = np.asarray(self.params)
        if self.family == "GWN":
            return 0.0
        if self.family == "MMTE":
            return float(p[0::3].sum())
        return float(p[0])

    def to_dict(self) -> dict:
        return {
            "family": self.family,
            "mmte_order": self.mmte_order,
            "params": dict(zip(param_names(self.family, self.mmte_order, with_noise=False), self.params)),
            "noise_floor": self.noise_floor,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "KernelConfig":
        fam = d["family"].upper()
        order = d.get("mmte_order")
        names = param_names(fam, order, with_noise=False)
        return cls(fam, tuple(float(d["params"][k]) for k in names), float(d["noise_floor"]), order)


@dataclass(frozen=True)
class AuxiliaryGrid:
    zeta: np.ndarray
    channels: int = 1

    def __post_init__(self):
        z = np.atleast_1d(np.asarray(self.zeta, dtype=float))
        object.__setattr__(self, "zeta", z)
        if z.size and np.any(np.diff(z) <= 0):
            raise ValueError("auxiliary grid must be strictly increasing")
        if self.channels < 1:
            raise ValueError("channels must be >= 1")

    def __len__(self):
        return self.zeta.size


def se_kernel(d, sigma_f2, inv_ell2):
    return sigma_f2 * np.exp(-0.5 * np.square(d) * inv_ell2)


def pe_kernel(d, sigma_f2, inv_ell2, omega):
    return sigma_f2 * np.exp(-0.5 * np.square(np.sin(omega * d)) * inv_ell2)


def mmte_kernel(d, components):
    """Sum of sigma_f2 * exp(-d^2 inv_ell2) * cos(omega d) over (sigma_f2, omega, inv_ell2) rows."""
    d = np.asarray(d, dtype=float)
    d2 = np.square(d)
    out = np.zeros_like(d)
    for sf2, om, il2 in np.asarray(components, dtype=float).reshape(-1, 3):
        out += sf2 * np.exp(-d2 * il2) * np.cos(om * d)
    return out


def _evaluate(config: KernelConfig, d):
    p = config.params
    if config.family == "GWN":
        return np.zeros_like(d)
    if config.family == "SE":
        return se_kernel(d, p[0], p[1])
    if config.family == "PE":
        return pe_kernel(d, p[0], p[1], p[2])
    return mmte_kernel(d, p)


def kernel_value(config: KernelConfig, d):
    """Covariance at distance ``d >= 0`` without the noise term."""
    d_arr = np.asarray(d, dtype=float)
    if np.any(d_arr < 0) or not np.all(np.isfinite(d_arr)):
        raise ValueError("distance must be finite and non-negative")
    out = _evaluate(config, d_arr)
    return float(out) if out.ndim == 0 else out


def _uniform_step(t: np.ndarray):
    if t.size < 3:
        return None
    dt = np.diff(t)
    h = dt.mean()
    if np.max(np.abs(dt - h)) <= 1e-9 * h:
        return h
    return None


def temporal_matrix(config: KernelConfig, t1, t2=None) -> np.ndarray:
    """Kernel matrix between time stamps (single channel, no noise)."""
    t1 = np.asarray(t1, dtype=float)
    if t2 is None:
        h = _uniform_step(t1)
        if h is not None:
            return toeplitz(_evaluate(config, h * np.arange(t1.size)))
        t2 = t1
    t2 = np.asarray(t2, dtype=float)
    return _evaluate(config, np.abs(np.subtract.outer(t1, t2)))


def _expand(T: np.ndarray, channels: int) -> np.ndarray:
    return T if channels == 1 else np.kron(T, np.eye(channels))


def assemble_covariance(config: KernelConfig, grid: AuxiliaryGrid) -> np.ndarray:
    """Full ``(n N_o) x (n N_o)`` covariance including ``sigma_n2 I``."""
    if len(grid) == 0:
        raise ValueError("grid must be non-empty")
    T = temporal_matrix(config, grid.zeta)
    T[np.diag_indices_from(T)] += config.noise_floor
    return _expand(T, grid.channels)


def assemble_cross_covariance(config: KernelConfig, train_grid: AuxiliaryGrid, pred_grid: AuxiliaryGrid) -> np.ndarray:
    """Cross covariance between training and prediction samples (no noise term)."""
    if len(train_grid) == 0 or len(pred_grid) == 0:
        raise ValueError("grids must be non-empty")
    if train_grid.channels != pred_grid.channels:
        raise ValueError("grids must have the same channel count")
    T = temporal_matrix(config, train_grid.zeta, pred_grid.zeta)
    return _expand(T, train_grid.channels)
