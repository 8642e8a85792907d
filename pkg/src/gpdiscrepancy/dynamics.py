"""
Linear lumped-mass shear-building models.

Matrix assembly, modal analysis and exact zero-order-hold simulation of the
acceleration response at the observed stories. Stories are indexed from 0
(ground floor) upward; story ``i`` connects floor ``i`` to floor ``i - 1``
(or to the ground for ``i = 0``).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Sequence, Union

import numpy as np
import scipy.linalg as sla
from scipy.signal import lfilter

from .errors import InvalidModelError, NumericalError

__all__ = [
    "Rayleigh",
    "ModalRatios",
    "ViscousRatio",
    "ShearBuildingModel",
    "TimeSeriesDataset",
    "StructuralParameter",
    "ShearFamily",
    "assemble_matrices",
    "modal_analysis",
    "simulate_states",
    "simulate_response",
    "synthesize_dataset",
    "make_rng",
]

BASE = "base"


# --------------------------------------------------------------------------
# damping specifications
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Rayleigh:
    """C = alpha * K + beta * M (alpha multiplies K, beta multiplies M)."""

    alpha: float
    beta: float

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0:
            raise InvalidModelError("Rayleigh coefficients must be non-negative")


@dataclass(frozen=True)
class ModalRatios:
    """Per-mode damping ratios assembled as sum_i 2 zeta_i w_i M p_i p_i^T M / (p_i^T M p_i).

    ``nominal`` optionally fixes the modal frequencies (rad/s) and shapes
    (columns) used in the assembly; otherwise the model's own modes are used.
    """

    zeta: tuple
    nominal: tuple | None = None

    def __post_init__(self):
        z = np.asarray(self.zeta, dtype=float)
        if np.any(z < 0) or np.any(z >= 1):
            raise InvalidModelError("modal damping ratios must lie in [0, 1)")
        object.__setattr__(self, "zeta", tuple(float(v) for v in z))


@dataclass(frozen=True)
class ViscousRatio:
    """A single damping ratio applied to every mode (c = 2 zeta sqrt(k m) for one story)."""

    zeta: float

    def __post_init__(self):
        if not 0 <= self.zeta < 1:
            raise InvalidModelError("damping ratio must lie in [0, 1)")


DampingSpec = Union[Rayleigh, ModalRatios, ViscousRatio]


# --------------------------------------------------------------------------
# model and dataset containers
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class ShearBuildingModel:
    masses: np.ndarray
    story_stiffnesses: np.ndarray
    damping: DampingSpec
    observed_dofs: tuple = (0,)
    input_dof: int | str = 0  # story index, or "base" for ground acceleration

    def __post_init__(self):
        m = np.atleast_1d(np.asarray(self.masses, dtype=float))
        k = np.atleast_1d(np.asarray(self.story_stiffnesses, dtype=float))
        object.__setattr__(self, "masses", m)
        object.__setattr__(self, "story_stiffnesses", k)
        object.__setattr__(self, "observed_dofs", tuple(int(i) for i in np.atleast_1d(self.observed_dofs)))
        if m.ndim != 1 or m.shape != k.shape:
            raise InvalidModelError("masses and story_stiffnesses must be 1-D of equal length")
        if not (np.all(np.isfinite(m)) and np.all(m > 0)):
            raise InvalidModelError("all masses must be positive")
        if not (np.all(np.isfinite(k)) and np.all(k > 0)):
            raise InvalidModelError("all story stiffnesses must be positive")
        obs = self.observed_dofs
        if len(obs) == 0 or len(set(obs)) != len(obs) or min(obs) < 0 or max(obs) >= m.size:
            raise InvalidModelError(f"observed_dofs {obs} must be distinct indices in [0, {m.size})")
        if self.input_dof != BASE:
            if not isinstance(self.input_dof, (int, np.integer)) or not 0 <= self.input_dof < m.size:
                raise InvalidModelError(f"input_dof {self.input_dof!r} is not a valid story index or 'base'")
        if isinstance(self.damping, ModalRatios) and len(self.damping.zeta) != m.size:
            raise InvalidModelError("ModalRatios needs one ratio per mode")

    @property
    def n_dof(self) -> int:
        return self.masses.size

    def with_stiffnesses(self, k) -> "ShearBuildingModel":
        return replace(self, story_stiffnesses=np.asarray(k, dtype=float))

    def describe(self) -> dict:
        d = self.damping
        if isinstance(d, Rayleigh):
            damping = {"type": "rayleigh", "alpha": d.alpha, "beta": d.beta}
        elif isinstance(d, ViscousRatio):
            damping = {"type": "viscous", "zeta": d.zeta}
        else:
            damping = {"type": "modal", "zeta": list(d.zeta)}
        return {
            "masses": self.masses.tolist(),
            "story_stiffnesses": self.story_stiffnesses.tolist(),
            "damping": damping,
            "observed_dofs": list(self.observed_dofs),
            "input_dof": self.input_dof,
        }


@dataclass
class TimeSeriesDataset:
    """Sampled input/output histories; row ``i`` is time ``t0 + i * dt``."""

    dt: float
    input: np.ndarray  # (n, N_x) forces [N] or ground acceleration [m/s^2]
    output: np.ndarray  # (n, N_o) accelerations [m/s^2]
    channel_labels: tuple = (0,)
    t0: float = 0.0

    def __post_init__(self):
        self.input = np.asarray(self.input, dtype=float)
        self.output = np.asarray(self.output, dtype=float)
        if self.input.ndim == 1:
            self.input = self.input[:, None]
        if self.output.ndim == 1:
            self.output = self.output[:, None]
        self.channel_labels = tuple(int(c) for c in self.channel_labels)
        if not self.dt > 0:
            raise InvalidModelError("dt must be positive")
        if self.input.shape[0] != self.output.shape[0]:
            raise InvalidModelError("input and output must share the number of samples")
        if len(self.channel_labels) != self.output.shape[1]:
            raise InvalidModelError("one channel label per output column required")
        if not (np.all(np.isfinite(self.input)) and np.all(np.isfinite(self.output))):
            raise InvalidModelError("dataset contains non-finite values")

    @property
    def n(self) -> int:
        return self.output.shape[0]

    @property
    def n_channels(self) -> int:
        return self.output.shape[1]

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.n)

    def index_of(self, t: float, side: str = "left") -> int:
        """Sample index for time ``t``; ``side`` picks the rounding direction."""
        x = (t - self.t0) / self.dt
        i = int(np.floor(x + 1e-9)) if side == "left" else int(np.ceil(x - 1e-9))
        return min(max(i, 0), self.n)

    def segment(self, start: int, stop: int) -> "TimeSeriesDataset":
        return TimeSeriesDataset(
            self.dt,
            self.input[start:stop],
            self.output[start:stop],
            self.channel_labels,
            self.t0 + start * self.dt,
        )


# --------------------------------------------------------------------------
# assembly and modal analysis
# --------------------------------------------------------------------------


def _stiffness(k: np.ndarray) -> np.ndarray:
    n = k.size
    K = np.zeros((n, n))
    for i in range(n):
        K[i, i] += k[i]
        if i > 0:
            K[i - 1, i - 1] += k[i]
            K[i - 1, i] -= k[i]
            K[i, i - 1] -= k[i]
    return K


def _modal_damping(M, zeta, omegas, shapes):
    C = np.zeros_like(M)
    for z, w, p in zip(zeta, omegas, shapes.T):
        Mp = M @ p
        C += 2.0 * z * w * np.outer(Mp, Mp) / (p @ Mp)
    return C


def assemble_matrices(model: ShearBuildingModel):
    """Return ``(M, K, C)`` for the shear frame."""
    M = np.diag(model.masses)
    K = _stiffness(model.story_stiffnesses)
    d = model.damping
    if isinstance(d, Rayleigh):
        C = d.alpha * K + d.beta * M
    else:
        if isinstance(d, ViscousRatio):
            zeta = np.full(model.n_dof, d.zeta)
            nominal = None
        else:
            zeta = np.asarray(d.zeta)
            nominal = d.nominal
        if nominal is None:
            omegas, shapes = _eig(M, K)
        else:
            omegas, shapes = np.asarray(nominal[0], float), np.asarray(nominal[1], float)
        C = _modal_damping(M, zeta, omegas, shapes)
        C = 0.5 * (C + C.T)
    return M, K, C


def _eig(M, K):
    try:
        w2, shapes = sla.eigh(K, M)
    except (sla.LinAlgError, ValueError) as exc:
        raise NumericalError(f"generalized eigenproblem failed: {exc}") from exc
    if np.any(w2 <= 0):
        raise NumericalError("non-positive eigenvalue in K phi = w^2 M phi", {"eigenvalues": w2.tolist()})
    return np.sqrt(w2), shapes


def modal_analysis(model: ShearBuildingModel):
    """Natural frequencies (rad/s, ascending) and mass-normalized mode shapes (columns)."""
    M, K, _ = assemble_matrices(model)
    omegas, shapes = _eig(M, K)
    # fix sign so each shape has a positive top-floor component
    signs = np.sign(shapes[-1, :])
    signs[signs == 0] = 1.0
    return omegas, shapes * signs


# --------------------------------------------------------------------------
# simulation
# --------------------------------------------------------------------------


def _state_space(model: ShearBuildingModel):
    M, K, C = assemble_matrices(model)
    n = model.n_dof
    Minv = np.diag(1.0 / model.masses)
    A = np.zeros((2 * n, 2 * n))
    A[:n, n:] = np.eye(n)
    A[n:, :n] = -Minv @ K
    A[n:, n:] = -Minv @ C
    if model.input_dof == BASE:
        load = -np.ones((n, 1))  # M^-1 (-M 1 a_g)
        feedthrough = np.zeros((n, 1))  # absolute acceleration = relative + a_g
    else:
        load = np.zeros((n, 1))
        load[model.input_dof, 0] = 1.0 / model.masses[model.input_dof]
        feedthrough = load
    B = np.vstack([np.zeros((n, 1)), load])
    Cy = np.hstack([-Minv @ K, -Minv @ C])
    return A, B, Cy, feedthrough


def _discretize(A, B, dt):
    ns, ni = B.shape
    aug = np.zeros((ns + ni, ns + ni))
    aug[:ns, :ns] = A * dt
    aug[:ns, ns:] = B * dt
    E = sla.expm(aug)
    return E[:ns, :ns], E[:ns, ns:]


def _propagate(Ad, Bd, u, s0):
    """States s_k for k = 0..n-1 with s_{k+1} = Ad s_k + Bd u_k."""
    n = u.shape[0]
    lam, V = np.linalg.eig(Ad)
    if np.linalg.cond(V) < 1e8:
        Vinv = np.linalg.inv(V)
        g = (Vinv @ Bd) @ u.T  # (ns, n)
        z = np.empty((lam.size, n), dtype=complex)
        powers = np.arange(n)
        z0 = Vinv @ s0
        for j, lj in enumerate(lam):
            forced = lfilter([0.0, 1.0], [1.0, -lj], g[j])
            z[j] = forced + z0[j] * lj**powers
        return np.real(V @ z).T
    # defective or badly conditioned modal basis: plain recursion
    s = np.empty((n, s0.size))
    s[0] = s0
    for k in range(n - 1):
        s[k + 1] = Ad @ s[k] + Bd @ u[k]
    return s


def simulate_states(model: ShearBuildingModel, u, dt: float, x0=None, v0=None):
    """Displacements and velocities, each of shape ``(n, n_dof)``."""
    if not dt > 0:
        raise InvalidModelError("dt must be positive")
    u = np.asarray(u, dtype=float).reshape(-1, 1)
    if u.shape[0] < 1:
        raise InvalidModelError("input must contain at least one sample")
    nd = model.n_dof
    x0 = np.zeros(nd) if x0 is None else np.asarray(x0, float)
    v0 = np.zeros(nd) if v0 is None else np.asarray(v0, float)
    A, B, _, _ = _state_space(model)
    Ad, Bd = _discretize(A, B, dt)
    s = _propagate(Ad, Bd, u, np.concatenate([x0, v0]))
    if not np.all(np.isfinite(s)):
        raise NumericalError("non-finite state in discretized simulation")
    return s[:, :nd], s[:, nd:]


def simulate_response(model: ShearBuildingModel, u, dt: float, x0=None, v0=None) -> np.ndarray:
    """Absolute accelerations at ``model.observed_dofs``, shape ``(n, N_o)``.

    ``u`` is the force at ``input_dof`` or the ground acceleration when
    ``input_dof == "base"``. Integration is the exact zero-order-hold
    discretization of the first-order state-space form.
    """
    u = np.asarray(u, dtype=float).reshape(-1, 1)
    x, v = simulate_states(model, u, dt, x0, v0)
    _, _, Cy, D = _state_space(model)
    acc = np.hstack([x, v]) @ Cy.T + u @ D.T
    if not np.all(np.isfinite(acc)):
        raise NumericalError("non-finite acceleration output")
    return acc[:, list(model.observed_dofs)]


def make_rng(seed) -> np.random.Generator:
    """PCG64 generator from a required 64-bit seed."""
    if seed is None:
        raise TypeError("a 64-bit integer seed is required")
    seed = int(seed)
    if not 0 <= seed < 2**64:
        raise ValueError("seed must fit in an unsigned 64-bit integer")
    return np.random.Generator(np.random.PCG64(seed))


def synthesize_dataset(
    model: ShearBuildingModel,
    std: float,
    seed: int,
    dt: float,
    duration: float,
    noise_std: float | None = None,
) -> TimeSeriesDataset:
    """Simulate the response to zero-mean Gaussian white-noise input.

    The input and the optional i.i.d. output noise come from two independent
    children of ``seed``, so the input does not depend on ``noise_std``.
    """
    if seed is None:
        raise TypeError("synthesize_dataset requires a seed")
    ratio = duration / dt
    n = int(round(ratio))
    if abs(ratio - n) > 1e-6 * max(1.0, ratio) or n < 2:
        raise InvalidModelError(f"duration/dt = {ratio} must be an integer >= 2")
    s_in, s_noise = np.random.SeedSequence(int(seed)).spawn(2)
    u = std * np.random.Generator(np.random.PCG64(s_in)).standard_normal(n)
    y = simulate_response(model, u, dt)
    if noise_std:
        y = y + noise_std * np.random.Generator(np.random.PCG64(s_noise)).standard_normal(y.shape)
    return TimeSeriesDataset(dt, u[:, None], y, model.observed_dofs)


# --------------------------------------------------------------------------
# parameterized model families (theta -> model)
# --------------------------------------------------------------------------

_KINDS = ("stiffness", "stiffness_ratio", "modal_damping")


@dataclass(frozen=True)
class StructuralParameter:
    """One unknown structural parameter.

    kind: ``stiffness`` (N/m, replaces story ``index``), ``stiffness_ratio``
    (dimensionless multiplier of the nominal story stiffness) or
    ``modal_damping`` (ratio of mode ``index``; needs ModalRatios damping).
    """

    name: str
    kind: str
    index: int

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise InvalidModelError(f"unknown structural parameter kind {self.kind!r}")

    @property
    def unit(self) -> str:
        return "N/m" if self.kind == "stiffness" else "-"


@dataclass(frozen=True)
class ShearFamily:
    """Maps a structural parameter vector theta onto a ShearBuildingModel."""

    template: ShearBuildingModel
    parameters: tuple = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "parameters", tuple(self.parameters))
        for p in self.parameters:
            if not 0 <= p.index < self.template.n_dof:
                raise InvalidModelError(f"parameter {p.name!r} refers to missing story/mode {p.index}")
            if p.kind == "modal_damping" and not isinstance(self.template.damping, ModalRatios):
                raise InvalidModelError("modal_damping parameters need a ModalRatios template")

    @property
    def names(self) -> list:
        return [p.name for p in self.parameters]

    @property
    def observed_dofs(self) -> tuple:
        return self.template.observed_dofs

    def build(self, theta) -> ShearBuildingModel:
        theta = np.atleast_1d(np.asarray(theta, dtype=float))
        if theta.size != len(self.parameters):
            raise InvalidModelError(f"expected {len(self.parameters)} structural parameters, got {theta.size}")
        k = self.template.story_stiffnesses.copy()
        damping = self.template.damping
        zeta = list(damping.zeta) if isinstance(damping, ModalRatios) else None
        for p, value in zip(self.parameters, theta):
            if p.kind == "stiffness":
                k[p.index] = value
            elif p.kind == "stiffness_ratio":
                k[p.index] = value * self.template.story_stiffnesses[p.index]
            else:
                zeta[p.index] = value
        if zeta is not None:
            damping = ModalRatios(tuple(zeta), damping.nominal)
        return replace(self.template, story_stiffnesses=k, damping=damping)

    def response(self, theta, u, dt) -> np.ndarray:
        return simulate_response(self.build(theta), u, dt)

    def nominal_frequencies(self) -> np.ndarray:
        return modal_analysis(self.template)[0]


def shear_frame(masses: Sequence[float], stiffnesses: Sequence[float], damping, observed_dofs, input_dof=0):
    """Convenience constructor."""
    return ShearBuildingModel(np.asarray(masses, float), np.asarray(stiffnesses, float), damping,
                              tuple(observed_dofs), input_dof)
