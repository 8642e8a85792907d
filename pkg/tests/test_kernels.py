import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gpdiscrepancy.kernels import (
    AuxiliaryGrid,
    KernelConfig,
    assemble_covariance,
    assemble_cross_covariance,
    kernel_value,
    mmte_kernel,
    param_names,
    pe_kernel,
    se_kernel,
    temporal_matrix,
)


# ---------------------------------------------------------------- closed forms


def test_se_values():
    cfg = KernelConfig("SE", (2.0, 4.0), 0.0)
    assert kernel_value(cfg, 0.0) == 2.0
    assert kernel_value(cfg, 0.5) == pytest.approx(2.0 * np.exp(-0.5 * 0.25 * 4.0), rel=1e-15)


def test_pe_values():
    cfg = KernelConfig("PE", (1.5, 2.0, 3.0), 0.0)
    d = 0.7
    assert kernel_value(cfg, d) == pytest.approx(1.5 * np.exp(-0.5 * np.sin(3.0 * d) ** 2 * 2.0), rel=1e-15)
    # periodic with period pi / omega
    assert kernel_value(cfg, d + np.pi / 3.0) == pytest.approx(kernel_value(cfg, d), rel=1e-12)


def test_mmte_has_no_half_in_exponent():
    cfg = KernelConfig("MMTE", (1.0, 2.0, 1.0), 0.0)
    assert kernel_value(cfg, 1.0) == pytest.approx(np.exp(-1.0) * np.cos(2.0), rel=1e-15)


def test_mmte_sum_of_components():
    comps = [(0.5, 1.0, 0.1), (0.2, 4.0, 0.3)]
    cfg = KernelConfig("MMTE", np.ravel(comps), 0.0)
    d = np.linspace(0, 3, 7)
    expected = sum(s * np.exp(-d**2 * a) * np.cos(w * d) for s, w, a in comps)
    np.testing.assert_allclose(kernel_value(cfg, d), expected, rtol=1e-14)
    assert cfg.variance == pytest.approx(0.7)


def test_gwn_is_zero_off_diagonal():
    cfg = KernelConfig("GWN", (), 0.3)
    assert kernel_value(cfg, 0.5) == 0.0
    K = assemble_covariance(cfg, AuxiliaryGrid(np.arange(4.0)))
    np.testing.assert_array_equal(K, 0.3 * np.eye(4))


def test_noise_only_on_diagonal():
    cfg = KernelConfig("SE", (1.0, 1.0), 0.25)
    K = assemble_covariance(cfg, AuxiliaryGrid([0.0, 1.0]))
    assert K[0, 0] == pytest.approx(1.25)
    assert K[0, 1] == pytest.approx(np.exp(-0.5))


def test_multichannel_is_kronecker_time_major():
    cfg = KernelConfig("SE", (1.0, 1.0), 0.1)
    K = assemble_covariance(cfg, AuxiliaryGrid([0.0, 1.0, 3.0], channels=2))
    T = assemble_covariance(cfg, AuxiliaryGrid([0.0, 1.0, 3.0]))
    np.testing.assert_array_equal(K, np.kron(T, np.eye(2)))
    assert K[0, 1] == 0.0  # different channels, same time
    assert K[0, 2] == T[0, 1]  # same channel, next time


def test_cross_covariance_has_no_noise():
    cfg = KernelConfig("SE", (1.0, 1.0), 5.0)
    C = assemble_cross_covariance(cfg, AuxiliaryGrid([0.0, 1.0]), AuxiliaryGrid([0.0]))
    np.testing.assert_allclose(C[:, 0], [1.0, np.exp(-0.5)])


def test_toeplitz_path_matches_dense():
    t = 0.01 * np.arange(300)
    for cfg in [KernelConfig("SE", (1.0, 3.0)), KernelConfig("PE", (1.0, 2.0, 2.2)),
                KernelConfig("MMTE", (1.0, 2.2, 0.1, 0.3, 5.0, 1.0))]:
        dense = cfg and _dense(cfg, t)
        np.testing.assert_allclose(temporal_matrix(cfg, t), dense, rtol=1e-13, atol=1e-15)


def _dense(cfg, t):
    d = np.abs(t[:, None] - t[None, :])
    return kernel_value(cfg, d)


# ---------------------------------------------------------------- validation


def test_mmte_components_sorted_by_frequency():
    cfg = KernelConfig("MMTE", (0.1, 5.0, 1.0, 0.2, 1.0, 2.0))
    assert cfg.params == (0.2, 1.0, 2.0, 0.1, 5.0, 1.0)


@pytest.mark.parametrize("family,params,noise", [
    ("SE", (1.0, -1.0), 0.0),
    ("SE", (1.0,), 0.0),
    ("PE", (1.0, 1.0, 0.0), 0.0),
    ("GWN", (), 0.0),
    ("MMTE", (1.0, 1.0), 0.0),
    ("SE", (1.0, 1.0), -1.0),
    ("XYZ", (), 1.0),
])
def test_invalid_configs(family, params, noise):
    with pytest.raises(ValueError):
        KernelConfig(family, params, noise)


def test_negative_distance_rejected():
    with pytest.raises(ValueError):
        kernel_value(KernelConfig("SE", (1.0, 1.0)), -0.1)


def test_grid_must_increase():
    with pytest.raises(ValueError):
        AuxiliaryGrid([0.0, 0.0, 1.0])


def test_param_names():
    assert param_names("MMTE", 2) == ["sigma_f2_1", "omega_1", "inv_ell2_1", "sigma_f2_2", "omega_2",
                                      "inv_ell2_2", "sigma_n2"]
    assert param_names("GWN") == ["sigma_n2"]


def test_dict_round_trip():
    cfg = KernelConfig("MMTE", (0.1, 5.0, 1.0, 0.2, 1.0, 2.0), 0.01)
    assert KernelConfig.from_dict(cfg.to_dict()) == cfg
    assert KernelConfig.from_vector("MMTE", cfg.to_vector(), 2) == cfg


# ---------------------------------------------------------------- properties

pos = st.floats(1e-3, 1e2)


def _configs():
    return st.one_of(
        st.builds(lambda a, b, n: KernelConfig("SE", (a, b), n), pos, pos, st.floats(0, 1)),
        st.builds(lambda a, b, w, n: KernelConfig("PE", (a, b, w), n), pos, pos, st.floats(0.1, 10), st.floats(0, 1)),
        st.builds(lambda a, w, b, a2, w2, b2, n: KernelConfig("MMTE", (a, w, b, a2, w2, b2), n),
                  pos, st.floats(0.1, 10), pos, pos, st.floats(0.1, 10), pos, st.floats(0, 1)),
        st.builds(lambda n: KernelConfig("GWN", (), n), st.floats(1e-3, 1)),
    )


@settings(max_examples=60, deadline=None)
@given(cfg=_configs(), seed=st.integers(0, 2**32 - 1))
def test_covariance_symmetric_psd(cfg, seed):
    t = np.sort(np.random.default_rng(seed).uniform(0, 5, 12))
    t = t[np.concatenate([[True], np.diff(t) > 1e-9])]
    K = assemble_covariance(cfg, AuxiliaryGrid(t))
    np.testing.assert_array_equal(K, K.T)
    lam = np.linalg.eigvalsh(K)
    assert lam.min() >= -1e-9 * max(1.0, lam.max())


@settings(max_examples=60, deadline=None)
@given(cfg=_configs(), d=st.floats(0, 50))
def test_bounded_by_variance(cfg, d):
    assert abs(kernel_value(cfg, d)) <= cfg.variance * (1 + 1e-12) + 1e-300


@settings(max_examples=30, deadline=None)
@given(cfg=_configs(), shift=st.floats(-100, 100))
def test_stationarity(cfg, shift):
    # dyadic grid and shift keep time differences exact in floating point
    t = np.arange(8) * 0.25
    s = np.round(shift * 4) / 4
    np.testing.assert_array_equal(temporal_matrix(cfg, t, t), temporal_matrix(cfg, t + s, t + s))


def test_raw_kernels_vectorize():
    d = np.array([0.0, 1.0])
    assert se_kernel(d, 1.0, 1.0).shape == (2,)
    assert pe_kernel(d, 1.0, 1.0, 1.0).shape == (2,)
    assert mmte_kernel(d, [1.0, 1.0, 1.0]).shape == (2,)
