import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qdotlab.coupling import (GridMismatch, TooFewStates, extract_dot_states,
                              exchange_coupling_proxy, interdot_profile, overlap_integral,
                              pair_density, sd_leakage_fraction, under_gate_fraction,
                              well_metrics, window_weight)
from qdotlab.device import DeviceSpec
from qdotlab.grid import Profile1D
from qdotlab.schrodinger1d import solve_bound_states

M = 0.19


def synthetic_band(dev: DeviceSpec, well=-0.1, barrier=0.15, outer=0.2, bottom_drop=0.0):
    """Square double well on the device's slice: wells under the plungers."""
    x = np.linspace(0.0, dev.total_length, int(dev.total_length / 0.25) + 1)
    u = np.full_like(x, outer)
    u[(x < dev.l_sd) | (x > dev.total_length - dev.l_sd)] = -0.07
    (a1, b1), (a2, b2) = dev.plunger_windows()
    u[(x >= b1) & (x <= a2)] = barrier
    u[(x >= a1) & (x <= b1)] = well
    u[(x >= a2) & (x <= b2)] = well - bottom_drop
    return Profile1D(x, u)


def _pair(dev, band, method="pm"):
    eig = solve_bound_states(band, M, 12)
    return extract_dot_states(eig, dev, method, band)


def test_symmetric_double_well_localizes():
    dev = DeviceSpec()
    pair = _pair(dev, synthetic_band(dev))
    assert min(pair.localization_quality) > 0.8 and pair.well_localized


def test_merged_well_is_flagged():
    dev = DeviceSpec(l_gap=1.0, l_bg=1.0)
    band = synthetic_band(dev, barrier=-0.1)     # no inter-dot barrier left
    pair = _pair(dev, band)
    assert not pair.well_localized


def test_mirror_symmetry():
    dev = DeviceSpec()
    pair = _pair(dev, synthetic_band(dev))
    assert np.max(np.abs(pair.psi_left.values - pair.psi_right.values[::-1])) < 1e-6


def test_pm_pair_normalized_and_orthogonal():
    dev = DeviceSpec()
    pair = _pair(dev, synthetic_band(dev))
    for p in (pair.psi_left, pair.psi_right):
        assert overlap_integral(p, p) == pytest.approx(1.0, abs=1e-8)
    assert exchange_coupling_proxy(pair) < 1e-10


def test_window_pair_overlap_drops_with_barrier():
    dev = DeviceSpec(l_bg=20.0)
    vals = [exchange_coupling_proxy(_pair(dev, synthetic_band(dev, barrier=b), "window"))
            for b in (0.0, 0.05, 0.1, 0.15)]
    assert np.all(np.diff(vals) < 0)
    assert 0 < vals[-1] < vals[0] < 1


def test_window_pair_handles_asymmetry():
    dev = DeviceSpec()
    band = synthetic_band(dev, bottom_drop=0.02)
    pair = _pair(dev, band, "window")
    assert pair.well_localized
    assert 0 < exchange_coupling_proxy(pair) < 1e-3


def test_too_few_states():
    dev = DeviceSpec()
    eig = solve_bound_states(synthetic_band(dev), M, 1)
    with pytest.raises(TooFewStates):
        extract_dot_states(eig, dev)


# -- overlap -----------------------------------------------------------------

def _norm(x, v):
    p = Profile1D(x, v, "wavefunction")
    return Profile1D(x, v / np.sqrt(overlap_integral(p, p)), "wavefunction")


def test_self_overlap_and_parity():
    x = np.linspace(-20, 20, 2001)
    even = _norm(x, np.exp(-x**2 / 8))
    odd = _norm(x, x * np.exp(-x**2 / 8))
    assert overlap_integral(even, even) == pytest.approx(1.0, abs=1e-8)
    assert overlap_integral(even, odd) < 1e-10


@pytest.mark.parametrize("w,d", [(2.0, 1.0), (3.0, 4.0), (1.5, 5.0)])
def test_gaussian_overlap(w, d):
    x = np.linspace(-40, 40, 8001)
    a = _norm(x, np.exp(-(x + d / 2) ** 2 / (2 * w**2)))
    b = _norm(x, np.exp(-(x - d / 2) ** 2 / (2 * w**2)))
    assert overlap_integral(a, b) == pytest.approx(np.exp(-d**2 / (4 * w**2)), rel=1e-3)


@settings(max_examples=30)
@given(st.integers(0, 2**31 - 1))
def test_overlap_symmetric_bounded_and_sign_invariant(seed):
    rng = np.random.default_rng(seed)
    x = np.linspace(0, 10, 101)
    a = _norm(x, rng.normal(size=101))
    b = _norm(x, rng.normal(size=101))
    ab, ba = overlap_integral(a, b), overlap_integral(b, a)
    assert abs(ab - ba) < 1e-12
    assert ab <= 1 + 1e-10
    flipped = Profile1D(x, -b.values)
    phased = Profile1D(x, np.exp(1j * 0.7) * a.values)
    assert overlap_integral(a, flipped) == pytest.approx(ab, abs=1e-14)
    assert overlap_integral(phased, b) == pytest.approx(ab, abs=1e-14)


def test_grid_mismatch():
    a = Profile1D(np.linspace(0, 1, 10), np.ones(10))
    b = Profile1D(np.linspace(0, 1, 11), np.ones(11))
    with pytest.raises(GridMismatch):
        overlap_integral(a, b)


# -- leakage -----------------------------------------------------------------

def test_leakage_zero_under_gates():
    dev = DeviceSpec()
    x = np.linspace(0, dev.total_length, 1121)
    g0 = dev.l_sd + dev.l_sp
    v = np.where((x > g0 + 5) & (x < g0 + dev.stack_length - 5), 1.0, 0.0)
    psi = _norm(x, v)
    assert sd_leakage_fraction(psi, dev) == 0.0


@settings(max_examples=30)
@given(st.integers(0, 2**31 - 1))
def test_leakage_plus_under_gate_is_one(seed):
    dev = DeviceSpec(l_sp=15.0)
    rng = np.random.default_rng(seed)
    x = np.sort(np.concatenate([[0, dev.total_length], rng.uniform(0, dev.total_length, 400)]))
    psi = _norm(x, rng.normal(size=len(x)))
    assert sd_leakage_fraction(psi, dev) + under_gate_fraction(psi, dev) == pytest.approx(1.0, abs=1e-8)


def test_window_weights_add_up():
    x = np.linspace(0, 10, 37)
    psi = Profile1D(x, np.sin(x))
    parts = window_weight(psi, 0, 3.3) + window_weight(psi, 3.3, 7.1) + window_weight(psi, 7.1, 10)
    assert parts == pytest.approx(window_weight(psi, 0, 10), rel=1e-13)


def test_pair_density_is_normalized():
    dev = DeviceSpec()
    pair = _pair(dev, synthetic_band(dev))
    rho = pair_density(pair)
    assert overlap_integral(rho, rho) == pytest.approx(1.0, abs=1e-8)


# -- band figures --------------------------------------------------------------

def test_well_metrics_on_square_wells():
    dev = DeviceSpec()
    m = well_metrics(synthetic_band(dev, well=-0.1, barrier=0.15, outer=0.2), dev)
    assert m.well_bottoms == pytest.approx((-0.1, -0.1))
    assert m.barrier_top == pytest.approx(0.15)
    # the lower confining side (the inter-dot barrier) sets the depth
    assert m.well_depths == pytest.approx((0.25, 0.25))
    assert m.barrier_height == pytest.approx(0.25)


def test_interdot_profile_spans_plunger_centres():
    dev = DeviceSpec()
    band = synthetic_band(dev)
    ib = interdot_profile(band, dev)
    (a1, b1), (a2, b2) = dev.plunger_windows()
    assert ib.x[0] == pytest.approx(0.5 * (a1 + b1))
    assert ib.x[-1] == pytest.approx(0.5 * (a2 + b2))
