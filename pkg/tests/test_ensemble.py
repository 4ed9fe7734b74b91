import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate, special

from cribsim.ensemble import (BroadeningControl, LineShape, apply_broadening, build_line_shape,
                              build_medium, discretize, flip_detunings, mhz, prepare_spike,
                              spike_decay_envelope)
from cribsim.errors import InvalidParameter, InvariantViolation

KINDS = ["gaussian", "lorentzian", "flat_top"]


def _spike(width=0.2, pit=4.0, base=4.0):
    return prepare_spike(build_line_shape("gaussian", 0.0, mhz(base)), mhz(pit), mhz(width))


# build_line_shape

def test_gaussian_normalized_and_peaked_at_center():
    line = build_line_shape("gaussian", 0.0, mhz(1000.0))
    total, _ = integrate.quad(line.pdf, -np.inf, np.inf)
    assert total == pytest.approx(1.0, abs=1e-9)
    x = np.linspace(-mhz(500), mhz(500), 2001)
    assert x[np.argmax(line.pdf(x))] == pytest.approx(0.0, abs=1e-6)


def test_flat_top_is_a_rectangle():
    w = mhz(1.0)
    line = build_line_shape("flat_top", 0.0, w)
    assert line.pdf(0.3 * w) == pytest.approx(1.0 / w)
    assert line.pdf(0.51 * w) == 0.0
    assert line.pdf(-0.51 * w) == 0.0


def test_lorentzian_peak_density():
    gamma = 3.0
    line = build_line_shape("lorentzian", 0.0, 2 * gamma)
    assert line.pdf(0.0) == pytest.approx(1.0 / (np.pi * gamma), rel=1e-14)


@pytest.mark.parametrize("width", [0.0, -1.0, np.nan])
def test_non_positive_width_rejected(width):
    with pytest.raises(InvalidParameter):
        build_line_shape("gaussian", 0.0, width)


def test_unknown_kind_rejected():
    with pytest.raises(InvalidParameter):
        build_line_shape("voigt", 0.0, 1.0)


# prepare_spike

def test_spike_fwhm_and_empty_pit():
    s = _spike()
    assert s.width == pytest.approx(mhz(0.2))
    # half maximum of the surviving density sits at +-100 kHz (base is nearly flat there)
    peak = s.pdf(0.0)
    assert s.pdf(mhz(0.1)) / peak == pytest.approx(0.5, rel=2e-3)
    # nothing survives outside the pit
    assert s.pdf(mhz(2.01)) == 0.0 and s.pdf(-mhz(2.5)) == 0.0


def test_spike_wider_than_pit_rejected():
    base = build_line_shape("gaussian", 0.0, mhz(4))
    with pytest.raises(InvalidParameter):
        prepare_spike(base, mhz(1.0), mhz(1.5))


def test_spike_below_homogeneous_width_rejected():
    base = build_line_shape("gaussian", 0.0, mhz(4))
    with pytest.raises(InvalidParameter):
        prepare_spike(base, mhz(1.0), mhz(0.01), homogeneous_width=mhz(0.05))


def test_spike_as_wide_as_pit_is_near_identity_inside():
    base = build_line_shape("flat_top", 0.0, mhz(10))
    pit = mhz(1.0)
    s = prepare_spike(base, pit, pit / 1.0001)
    x = np.linspace(-0.5 * pit, 0.5 * pit, 101)
    # absolute surviving density stays within a Lorentzian factor of the base
    ratio = s.pdf(x) * s.surviving_area / base.pdf(x)
    assert ratio.min() >= 0.5 - 1e-3 and ratio.max() == pytest.approx(1.0)


@pytest.mark.parametrize("tau,frozen", [
    (1 / (np.pi * 0.2), 0.3885867643668307),
    (1.5, 0.4107157107802584),
    (2.5, 0.21913714972977288),
    (4.0, 0.08538898549038838),
])
def test_spike_decay_envelope_matches_quadrature(tau, frozen):
    # frozen values: adaptive quadrature of base * Lorentzian * cos(delta tau) over the pit
    assert spike_decay_envelope(_spike(), tau) == pytest.approx(frozen, rel=2e-3)


def test_spike_dephasing_time_scale():
    # near the pure-Lorentzian e^-1 point at tau = 1 / (pi * 200 kHz) = 1.59 us
    env = spike_decay_envelope(_spike(), 1 / (np.pi * 0.2))
    assert env == pytest.approx(math.exp(-1), rel=0.1)


def test_envelope_is_one_for_plain_lines():
    assert spike_decay_envelope(build_line_shape("gaussian", 0, 1.0), 5.0) == 1.0


@settings(max_examples=30, deadline=None)
@given(spike=st.floats(0.01, 0.9), pit=st.floats(0.5, 6.0), x=st.floats(-4, 4))
def test_hole_burning_only_removes_population(spike, pit, x):
    base = build_line_shape("gaussian", 0.0, mhz(4.0))
    s = prepare_spike(base, mhz(pit), mhz(spike * pit))
    assert s.pdf(mhz(x)) * s.surviving_area <= base.pdf(mhz(x)) * (1 + 1e-12)


# apply_broadening

def test_transverse_broadening_of_spike():
    s = _spike(pit=4.0)
    smap = apply_broadening(s, BroadeningControl("transverse", mhz(1.0)))
    assert smap.width == pytest.approx(mhz(1.2))
    x = np.linspace(-mhz(1), mhz(1), 4001)
    g = smap.pdf(x)
    above = x[g >= 0.5 * g.max()]
    assert above[-1] - above[0] == pytest.approx(mhz(1.0), rel=0.05)
    # Lorentzian peak 1/(pi g) over flat-kernel peak (2/pi) atan(0.5/g), g = 0.1 MHz
    expected = (1 / (np.pi * 0.1)) / ((2 / np.pi) * np.arctan(0.5 / 0.1))
    assert s.pdf(0.0) / g.max() == pytest.approx(expected, rel=0.02)


def test_zero_broadening_is_identity():
    line = build_line_shape("lorentzian", 0.3, 2.0)
    smap = apply_broadening(line, BroadeningControl("transverse", 0.0))
    x = np.linspace(-10, 10, 101)
    np.testing.assert_array_equal(smap.pdf(x), line.pdf(x))


def test_longitudinal_slice_centres():
    smap = apply_broadening(_spike(), BroadeningControl("longitudinal", mhz(1.0)))
    off = smap.slice_offsets(201)
    assert off[0] == pytest.approx(-mhz(0.5)) and off[-1] == pytest.approx(mhz(0.5))
    assert np.all(np.diff(off) > 0)


def test_narrow_broadening_warns():
    with pytest.warns(RuntimeWarning):
        apply_broadening(_spike(width=0.2), BroadeningControl("transverse", mhz(0.1)))


@pytest.mark.parametrize("kind,kernel", [(k, "flat") for k in KINDS]
                         + [("gaussian", "gaussian"), ("flat_top", "gaussian")])
def test_broadening_conserves_weight(kind, kernel):
    line = build_line_shape(kind, 0.0, 2.0)
    smap = apply_broadening(line, BroadeningControl("transverse", 5.0, kernel=kernel))
    pts = [-3.5, -2.5, -1, 1, 2.5, 3.5]
    core, _ = integrate.quad(smap.pdf, -50.0, 50.0, points=pts, limit=400)
    left, _ = integrate.quad(smap.pdf, -np.inf, -50.0, limit=400)
    right, _ = integrate.quad(smap.pdf, 50.0, np.inf, limit=400)
    assert core + left + right == pytest.approx(1.0, abs=1e-4)


def test_gaussian_kernel_on_lorentzian_is_voigt():
    line = build_line_shape("lorentzian", 0.0, 2.0)
    smap = apply_broadening(line, BroadeningControl("transverse", 5.0, kernel="gaussian"))
    x = np.linspace(-15, 15, 61)
    exact = special.voigt_profile(x, 5.0 / (2 * math.sqrt(2 * math.log(2))), 1.0)
    np.testing.assert_allclose(smap.pdf(x), exact, rtol=0, atol=1e-3 * exact.max())
    assert smap._kernel_nodes[1].sum() == pytest.approx(1.0, abs=1e-14)


def test_negative_transverse_magnitude_rejected():
    with pytest.raises(InvalidParameter):
        BroadeningControl("transverse", -1.0)


def test_transfer_efficiency_range():
    with pytest.raises(InvalidParameter):
        BroadeningControl("transverse", 1.0, transfer_efficiency=1.2)


# discretize

@pytest.mark.parametrize("kind", KINDS)
def test_grid_normalization(kind):
    line = build_line_shape(kind, 0.0, 1.0)
    grid = discretize(line, 400, 5.0)
    assert grid.integrate(line.pdf(grid.nodes)) == pytest.approx(1.0, abs=1e-4)
    assert grid.symmetric


def test_prepared_spike_grid_normalization():
    s = _spike()
    grid = discretize(s, 400, 5.0)
    assert grid.integrate(s.pdf(grid.nodes)) == pytest.approx(1.0, abs=1e-4)


def test_flat_top_grid_is_exact():
    line = build_line_shape("flat_top", 0.0, mhz(1.0))
    grid = discretize(line, 64, 5.0)
    assert grid.captured_mass == pytest.approx(1.0, abs=1e-14)
    assert grid.integrate(line.pdf(grid.nodes)) == pytest.approx(1.0, abs=1e-14)


def test_gaussian_second_moment():
    line = build_line_shape("gaussian", 0.0, 2.0)
    grid = discretize(line, 400, 5.0)
    var = grid.integrate(line.pdf(grid.nodes) * grid.nodes ** 2)
    sigma2 = (2.0 / (2 * math.sqrt(2 * math.log(2)))) ** 2
    assert var == pytest.approx(sigma2, rel=1e-3)


@pytest.mark.parametrize("n_bins,cutoff", [(8, 5.0), (15, 5.0), (400, 2.0)])
def test_bad_grid_parameters(n_bins, cutoff):
    with pytest.raises(InvalidParameter):
        discretize(build_line_shape("gaussian", 0, 1.0), n_bins, cutoff)


@settings(max_examples=40, deadline=None)
@given(kind=st.sampled_from(KINDS), width=st.floats(0.1, 50.0),
       n=st.integers(8, 300), cutoff=st.floats(3.0, 8.0))
def test_grid_symmetric_and_normalized(kind, width, n, cutoff):
    line = build_line_shape(kind, 0.0, width)
    grid = discretize(line, 2 * n, cutoff)
    assert grid.symmetric
    assert np.all(grid.weights > 0)
    assert grid.integrate(line.pdf(grid.nodes)) == pytest.approx(1.0, abs=1e-9)


# Medium and flip_detunings

def _medium(mode="transverse", magnitude=mhz(1.0), **kw):
    return build_medium(_spike(width=5e-5, pit=0.4), BroadeningControl(mode, magnitude), 2.0,
                        n_bins=64, nz=20, **kw)


def test_flip_is_involution():
    m = _medium()
    mm = flip_detunings(flip_detunings(m))
    assert mm == m
    assert mm.grid == m.grid
    np.testing.assert_array_equal(mm.detunings, m.detunings)


def test_flip_preserves_node_multiset():
    m = _medium()
    f = flip_detunings(m)
    np.testing.assert_array_equal(np.sort(f.detunings), np.sort(m.detunings))
    np.testing.assert_array_equal(f.detunings, -m.detunings)
    # populations stay attached to their atoms
    np.testing.assert_array_equal(f.populations, m.populations)


def test_flip_longitudinal_reverses_slice_map():
    m = _medium("longitudinal")
    f = flip_detunings(m)
    # slice centre (population-weighted detuning) maps to its negative
    centre = (m.populations * m.detunings).sum(axis=1)
    centre_f = (f.populations * f.detunings).sum(axis=1)
    np.testing.assert_allclose(centre_f, -centre, atol=1e-12)
    assert centre[0] < 0 < centre[-1]


def test_flip_rejects_off_centre_grid():
    line = build_line_shape("gaussian", 1.0, 2.0)
    m = build_medium(line, BroadeningControl(), 1.0, n_bins=32, nz=4)
    with pytest.raises(InvariantViolation):
        flip_detunings(m)


@pytest.mark.parametrize("kw", [dict(resonant_depth=-1.0), dict(nz=1), dict(length=0.0)])
def test_medium_preconditions(kw):
    args = dict(line=build_line_shape("gaussian", 0, 1.0), broadening=BroadeningControl(),
                resonant_depth=1.0, length=1.0, n_bins=32, nz=4)
    args.update(kw)
    with pytest.raises(InvalidParameter):
        build_medium(**args)


def test_populations_rows_normalized_and_readonly():
    for mode in ("transverse", "longitudinal"):
        p = _medium(mode).populations
        np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-12)
        assert not p.flags.writeable


def test_line_shape_is_hashable_value():
    a = build_line_shape("gaussian", 0.0, 1.0)
    assert a == LineShape("gaussian", 0.0, 1.0)
