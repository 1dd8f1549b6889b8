import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from lobefit import presets
from lobefit.errors import BranchRejected, DegenerateEngagementError, LobefitError, SpeedRangeError
from lobefit.model import CuttingParams, DirectionalDynamics, Mode
from lobefit.oracle import depth_limit_bisect, find_bracket
from lobefit.zoa import (
    build_sld,
    characteristic_eigenvalues,
    directional_factors,
    frf,
    lobe_point,
    sample_at_speeds,
)


def test_frf_matches_mpmath():
    modes = [Mode(903.0, 12.53e6, 0.0169), Mode(1500.0, 40e6, 0.05)]
    for w in [0.0, 1000.0, 2 * math.pi * 903, 2 * math.pi * 903 * 1.0001, 3e4, 1e5]:
        ref = mpmath.mpc(0)
        for m in modes:
            wn = 2 * mpmath.pi * m.natural_frequency
            ref += (wn**2 / m.stiffness) / (wn**2 - w**2 + 2j * m.damping_ratio * wn * w)
        got = frf(modes, w)
        assert abs(got - complex(ref)) <= 1e-12 * abs(complex(ref))


def test_frf_vectorised():
    modes = [Mode(903.0, 12.53e6, 0.0169)]
    w = np.linspace(0, 1e4, 7)
    assert np.allclose(frf(modes, w), [frf(modes, x) for x in w], rtol=0, atol=0)


_INTEGRANDS = (
    lambda p, kr: -math.sin(2 * p) - kr * (1 - math.cos(2 * p)),
    lambda p, kr: -(1 + math.cos(2 * p)) - kr * math.sin(2 * p),
    lambda p, kr: (1 - math.cos(2 * p)) - kr * math.sin(2 * p),
    lambda p, kr: math.sin(2 * p) - kr * (1 + math.cos(2 * p)),
)


@settings(max_examples=200, deadline=None)
@given(st.floats(0.0, 2.0), st.floats(0.0, math.pi), st.floats(0.01, math.pi))
def test_directional_factors_match_quadrature(kr, start, width):
    exit_ = min(start + width, math.pi)
    got = directional_factors(kr, start, exit_)
    for g, f in zip(got, _INTEGRANDS):
        ref, _ = quad(f, start, exit_, args=(kr,), epsabs=1e-13, epsrel=1e-13)
        assert g == pytest.approx(ref, abs=1e-11)


def test_slot_factors():
    kr = 0.3
    got = directional_factors(kr, 0.0, math.pi)
    assert np.allclose(got, (-math.pi * kr, -math.pi, math.pi, -math.pi * kr), atol=1e-14)


# compliances between 1e-10 and 1e-5 m/N at any phase
finite_complex = st.builds(lambda mag, ang: 10.0**mag * complex(math.cos(ang), math.sin(ang)),
                           st.floats(-10, -5), st.floats(-math.pi, math.pi))


@settings(max_examples=500, deadline=None)
@given(finite_complex, finite_complex, st.floats(0, 1), st.floats(0, 3), st.floats(0.1, 3))
def test_eigenvalues_match_matrix_eigenvalues(px, py, kr, start, width):
    factors = directional_factors(kr, start, min(start + width, math.pi))
    axx, axy, ayx, ayy = factors
    m = np.array([[axx * px, axy * py], [ayx * px, ayy * py]])
    mu = np.linalg.eigvals(m)
    if np.min(np.abs(mu)) < 1e-6 * np.max(np.abs(mu)):
        return  # one eigenvalue is numerically zero; no finite root to compare
    got = characteristic_eigenvalues(px, py, factors)
    ref = -1 / mu
    for g in got:
        assert np.min(np.abs(ref - g)) <= 1e-7 * abs(g)
    assert abs(got[0] - got[1]) > 0 or abs(ref[0] - ref[1]) <= 1e-7 * abs(ref[0])


def test_degenerate_engagement():
    with pytest.raises(DegenerateEngagementError):
        characteristic_eigenvalues(0j, 0j, directional_factors(0.3, 0, math.pi))


def test_lobe_point_formulae():
    cut = presets.EX1.cutting
    lam = complex(-2e-7, 1e-7)
    wc = 2 * math.pi * 950
    kappa = lam.imag / lam.real
    eps = math.pi - 2 * math.atan(kappa)
    p = lobe_point(lam, wc, 2, cut)
    assert p.depth_limit == pytest.approx(-2 * math.pi * lam.real * (1 + kappa**2) / (cut.flute_count * cut.kt_si) * 1e3)
    assert p.spindle_speed == pytest.approx(60 * wc / (cut.flute_count * (eps + 4 * math.pi)))
    assert p.depth_limit > 0
    assert lobe_point(complex(1e-7, 0), wc, 0, cut) is None
    with pytest.raises(BranchRejected):
        lobe_point(complex(0, 1e-7), wc, 0, cut)
    with pytest.raises(LobefitError):
        lobe_point(lam, -1.0, 0, cut)


def _naive_minimum(curve, grid):
    naive = np.full(grid.size, np.inf)
    for b in curve.branches:
        s0, s1 = b.speeds[:-1], b.speeds[1:]
        d0, d1 = b.depths[:-1], b.depths[1:]
        ok = np.isfinite(s0 + s1 + d0 + d1) & (s0 != s1)
        s0, s1, d0, d1 = s0[ok], s1[ok], d0[ok], d1[ok]
        lo, hi = np.minimum(s0, s1), np.maximum(s0, s1)
        inside = (grid[:, None] >= lo) & (grid[:, None] <= hi)
        t = (grid[:, None] - s0) / (s1 - s0)
        d = np.where(inside, d0 + t * (d1 - d0), np.inf)
        naive = np.minimum(naive, d.min(axis=1))
    return naive


@pytest.mark.parametrize("name", sorted(presets.CASES))
def test_envelope_is_minimum_of_branches(name):
    case = presets.CASES[name]
    curve = build_sld(case.target, case.cutting, case.speed_range, grid_points=300)
    grid = np.linspace(*case.speed_range, 300)
    got = sample_at_speeds(curve, grid).depths
    assert np.allclose(got, _naive_minimum(curve, grid), rtol=1e-9)
    env = curve.envelope
    assert np.all(np.diff(env.speeds) > 0) and np.all(env.depths > 0)


@pytest.mark.parametrize("spacing", ["even", "uneven"])
def test_envelope_at_requested_speeds(spacing):
    case = presets.EX3
    lo, hi = case.speed_range
    if spacing == "even":
        speeds = np.linspace(lo, hi, 37)
    else:
        speeds = np.sort(np.random.default_rng(4).uniform(lo, hi, 37))
    curve = build_sld(case.target, case.cutting, case.speed_range, speeds=speeds)
    got = sample_at_speeds(curve, speeds).depths
    assert np.allclose(got, _naive_minimum(curve, speeds), rtol=1e-9)
    dense = sample_at_speeds(build_sld(case.target, case.cutting, case.speed_range), speeds).depths
    assert np.allclose(got, dense, rtol=2e-3)
    with pytest.raises(LobefitError):
        build_sld(case.target, case.cutting, case.speed_range, speeds=[lo - 1, hi])


@pytest.mark.parametrize("name", sorted(presets.CASES))
def test_boundary_agrees_with_oracle(name):
    case = presets.CASES[name]
    curve = build_sld(case.target, case.cutting, case.speed_range)
    for speed in np.linspace(*case.speed_range, 5):
        b = find_bracket(case.target, case.cutting, speed)
        ref = depth_limit_bisect(case.target, case.cutting, speed, b, tol=1e-5)
        got = sample_at_speeds(curve, [speed]).depths[0]
        assert got == pytest.approx(ref, rel=0.01)


@settings(max_examples=30, deadline=None)
@given(st.floats(1e-3, 1e3))
def test_scaling_invariance(c):
    case = presets.EX1
    a = build_sld(case.target, case.cutting, case.speed_range)
    b = build_sld(case.target.scaled_stiffness(c), case.cutting.scaled_kt(c), case.speed_range)
    assert np.allclose(a.grid_speeds, b.grid_speeds, rtol=1e-9, atol=0)
    assert np.allclose(a.grid_depths, b.grid_depths, rtol=1e-9, atol=0)


def test_slot_symmetric_under_axis_swap():
    cut, rng = presets.SLOT_CUTTING, presets.SLOT_SPEED_RANGE
    a = build_sld(presets.SLOT_STATIC, cut, rng)
    b = build_sld(presets.SLOT_STATIC.swapped(), cut, rng)
    s = np.linspace(*rng, 40)
    assert np.allclose(sample_at_speeds(a, s).depths, sample_at_speeds(b, s).depths, rtol=1e-9)


def test_deterministic():
    case = presets.EX2
    a = build_sld(case.target, case.cutting, case.speed_range)
    b = build_sld(case.target, case.cutting, case.speed_range)
    assert np.array_equal(a.grid_depths, b.grid_depths)


def test_speed_range_errors():
    case = presets.EX1
    with pytest.raises(LobefitError):
        build_sld(case.target, case.cutting, (5000, 4000))
    curve = build_sld(case.target, case.cutting, case.speed_range)
    with pytest.raises(SpeedRangeError) as info:
        sample_at_speeds(curve, [case.speed_range[0] - 10, case.speed_range[1]])
    assert len(info.value.speeds) == 1


def test_higher_stiffness_raises_boundary():
    case = presets.EX1
    s = np.linspace(*case.speed_range, 30)
    base = sample_at_speeds(build_sld(case.target, case.cutting, case.speed_range), s).depths
    stiff = sample_at_speeds(build_sld(case.target.scaled_stiffness(2.0), case.cutting, case.speed_range), s).depths
    assert np.allclose(stiff, 2 * base, rtol=1e-9)


def test_ex1_frf_and_roots_match_multiprecision():
    mpmath.mp.dps = 40
    case = presets.EX1
    mode = case.target.x_modes[0]
    wn = 2 * mpmath.pi * mpmath.mpf(mode.natural_frequency)

    def mp_frf(w):
        return (wn**2 / mode.stiffness) / (wn**2 - w**2 + 2j * mpmath.mpf(mode.damping_ratio) * wn * w)

    w800 = 2 * mpmath.pi * 800
    assert abs(frf([mode], float(w800)) - complex(mp_frf(w800))) <= 1e-13 * abs(complex(mp_frf(w800)))

    cut = case.cutting
    axx, axy, ayx, ayy = (mpmath.mpf(f) for f in directional_factors(cut.radial_ratio, cut.start_rad, cut.exit_rad))
    w920 = 2 * mpmath.pi * 920
    px = py = mp_frf(w920)
    a0 = px * py * (axx * ayy - axy * ayx)
    a1 = axx * px + ayy * py
    disc = mpmath.sqrt(a1**2 - 4 * a0)
    ref = [(-a1 + disc) / (2 * a0), (-a1 - disc) / (2 * a0)]
    got = characteristic_eigenvalues(frf([mode], float(w920)), frf([mode], float(w920)),
                                     directional_factors(cut.radial_ratio, cut.start_rad, cut.exit_rad))
    for g in got:
        assert min(abs(g - complex(r)) for r in ref) <= 1e-10 * abs(g)
