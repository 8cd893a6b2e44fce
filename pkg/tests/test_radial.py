"""Tests for the hand-rolled Bessel functions and the radial nutrient oracle."""

import math

import numpy as np
import pytest
import scipy.linalg as sla
import scipy.special as ss

from chdsim import radial
from chdsim.radial import (
    bessel_i0,
    bessel_i0_k0,
    bessel_i1,
    bessel_k0,
    bessel_k1,
    solve_radial,
)

# values frozen before the build from an independent 1D finite-difference
# solve of the radial ODE (2e5 and 4e5 point grids, Richardson extrapolated);
# agreement with the closed form is limited by the FD kink treatment (~5e-9)
FD_ORACLE = {0.5: 0.88014894711873, 1.5: 1.08132836490232, 2.5: 2.51158257699435}
# integral representation (1/pi) int_0^pi cosh(cos t) dt, high-order quadrature
I0_AT_ONE = 1.2660658777520086


# ------------------------------------------------------------ Bessel values

def test_i0_at_zero_and_one():
    assert bessel_i0(0.0) == 1.0
    assert abs(bessel_i0(1.0) - I0_AT_ONE) <= 1e-13 * I0_AT_ONE


def test_bessel_against_scipy_across_range():
    xs = [1e-3, 0.1, 0.5, 1.0, 2.0, 5.0, 7.5, 8.0, 10.0, 12.0,
          15.999, 16.0, 16.001, 20.0, 50.0, 100.0]
    for x in xs:
        assert abs(bessel_i0(x) - ss.i0(x)) <= 1e-10 * ss.i0(x)
        assert abs(bessel_i1(x) - ss.i1(x)) <= 1e-10 * max(ss.i1(x), 1e-300)
        assert abs(bessel_k0(x) - ss.k0(x)) <= 1e-10 * ss.k0(x)
        assert abs(bessel_k1(x) - ss.k1(x)) <= 1e-10 * ss.k1(x)


def test_wronskian_identity():
    for x in (0.5, 2.0, 10.0, 0.05, 7.9, 16.0, 25.0):
        w = bessel_i0(x) * bessel_k1(x) + bessel_i1(x) * bessel_k0(x)
        assert abs(w - 1.0 / x) <= 1e-10 / x


def test_bessel_pair_helper():
    i0, k0 = bessel_i0_k0(2.0)
    assert i0 == bessel_i0(2.0)
    assert k0 == bessel_k0(2.0)


def test_bessel_domain_errors():
    with pytest.raises(ValueError):
        bessel_k0(0.0)
    with pytest.raises(ValueError):
        bessel_k1(-1.0)
    with pytest.raises(ValueError):
        bessel_i0(-0.5)
    with pytest.raises(ValueError):
        bessel_i1(-2.0)


def test_bessel_recurrence_consistency():
    # d/dx I1 = I0 - I1/x and d/dx K1 = -K0 - K1/x, via central differences
    for x in (1.0, 3.0, 9.0, 18.0):
        h = 1e-6 * max(x, 1.0)
        d_i1 = (bessel_i1(x + h) - bessel_i1(x - h)) / (2 * h)
        assert abs(d_i1 - (bessel_i0(x) - bessel_i1(x) / x)) <= 1e-7 * bessel_i0(x)
        d_k1 = (bessel_k1(x + h) - bessel_k1(x - h)) / (2 * h)
        assert abs(d_k1 + bessel_k0(x) + bessel_k1(x) / x) <= 1e-7 * bessel_k0(x)


# ------------------------------------------------------------ radial profile

def fd_radial(r3, r2, r_out, consumption, sigma_b, n, diffusivity=1.0):
    """Independent 1D finite-difference solve of the radial nutrient ODE."""
    h = r_out / n
    r = np.arange(n + 1) * h
    chi = ((r > r3) & (r < r2)).astype(float)
    chi[np.isclose(r, r3)] = 0.5
    chi[np.isclose(r, r2)] = 0.5
    d = diffusivity
    ab = np.zeros((3, n + 1))
    rhs = np.zeros(n + 1)
    # r = 0: radial Laplacian limit 4 D (s1 - s0)/h^2 = C chi s0
    ab[1, 0] = -4.0 * d / h ** 2 - consumption * chi[0]
    ab[0, 1] = 4.0 * d / h ** 2
    for j in range(1, n):
        ab[1, j] = -2.0 * d / h ** 2 - consumption * chi[j]
        ab[0, j + 1] = d / h ** 2 + d / (2.0 * r[j] * h)
        ab[2, j - 1] = d / h ** 2 - d / (2.0 * r[j] * h)
    ab[1, n] = 1.0
    ab[2, n - 1] = 0.0
    rhs[n] = sigma_b
    sol = sla.solve_banded((1, 1), ab, rhs)
    return r, sol


def test_profile_matches_frozen_fd_values():
    prof = solve_radial(1.0, 2.0, 5.0, 2.0, 5.0)
    for r, v in FD_ORACLE.items():
        assert abs(prof(r) - v) <= 1e-7 * v


def test_profile_matches_inline_fd_rerun():
    prof = solve_radial(1.0, 2.0, 5.0, 2.0, 5.0)
    r, sol = fd_radial(1.0, 2.0, 5.0, 2.0, 5.0, 20000)
    for probe in (0.5, 1.5, 2.5):
        j = int(round(probe / (5.0 / 20000)))
        assert abs(sol[j] - prof(probe)) <= 2e-6 * prof(probe)


def test_profile_matches_scipy_built_system():
    # same matching system assembled from scipy's Bessel functions
    r3, r2, r_out, c, sb = 0.7, 1.9, 6.0, 3.0, 4.0
    s = math.sqrt(c)
    m = np.array([
        [ss.i1(s * r3), -ss.k1(s * r3), 0.0, 0.0],
        [ss.i0(s * r2), ss.k0(s * r2), -1.0, -math.log(r2)],
        [s * ss.i1(s * r2), -s * ss.k1(s * r2), 0.0, -1.0 / r2],
        [0.0, 0.0, 1.0, math.log(r_out)],
    ])
    c1, c2, a, b = np.linalg.solve(m, [0.0, 0.0, 0.0, sb])
    prof = solve_radial(r3, r2, r_out, c, sb)
    for mine, ref in ((prof.c1, c1), (prof.c2, c2), (prof.a, a), (prof.b, b)):
        assert abs(mine - ref) <= 1e-11 * max(abs(ref), 1.0)


def test_profile_continuity_and_flux_matching():
    prof = solve_radial(1.0, 2.0, 5.0, 2.0, 5.0)
    s = prof.s
    # value continuity at R3 (annulus formula against the stored core value)
    annulus_r3 = prof.c1 * bessel_i0(s * 1.0) + prof.c2 * bessel_k0(s * 1.0)
    assert abs(annulus_r3 - prof.core_value) <= 1e-12 * abs(prof.core_value)
    # zero flux at R3
    assert abs(prof.derivative(1.0)) <= 1e-12
    # value and flux continuity at R2, both closed forms evaluated exactly there
    annulus_r2 = prof.c1 * bessel_i0(s * 2.0) + prof.c2 * bessel_k0(s * 2.0)
    log_r2 = prof.sigma_b + prof.b * math.log(2.0 / 5.0)
    assert abs(annulus_r2 - log_r2) <= 1e-12 * abs(log_r2)
    flux_in = s * (prof.c1 * bessel_i1(s * 2.0) - prof.c2 * bessel_k1(s * 2.0))
    assert abs(flux_in - prof.b / 2.0) <= 1e-12 * abs(prof.b / 2.0)


def test_profile_dirichlet_exact_and_monotone():
    prof = solve_radial(1.0, 2.0, 5.0, 2.0, 5.0)
    assert prof(5.0) == 5.0
    rr = np.linspace(0.001, 5.0, 2000)
    assert prof.derivative(rr).min() >= -1e-12
    vals = prof(rr)
    assert (np.diff(vals) >= -1e-12).all()


def test_profile_ode_residual_in_annulus():
    prof = solve_radial(1.0, 2.0, 5.0, 2.0, 5.0)
    rr = np.linspace(1.0, 2.0, 100)
    resid = prof.second_derivative(rr) + prof.derivative(rr) / rr \
        - 2.0 * prof(rr)
    scale = np.abs(2.0 * prof(rr)).max()
    assert np.abs(resid).max() <= 1e-9 * scale


def test_profile_trivial_cases():
    p0 = solve_radial(1.0, 2.0, 5.0, 0.0, 5.0)
    assert np.allclose(p0(np.linspace(0, 5, 30)), 5.0, atol=0)
    pz = solve_radial(1.0, 2.0, 5.0, 2.0, 0.0)
    assert np.allclose(pz(np.linspace(0, 5, 30)), 0.0, atol=0)


def test_profile_invalid_arguments():
    with pytest.raises(ValueError):
        solve_radial(2.0, 1.0, 5.0, 2.0, 5.0)
    with pytest.raises(ValueError):
        solve_radial(0.0, 1.0, 5.0, 2.0, 5.0)
    with pytest.raises(ValueError):
        solve_radial(1.0, 2.0, 1.5, 2.0, 5.0)
    with pytest.raises(ValueError):
        solve_radial(1.0, 2.0, 5.0, -2.0, 5.0)
    with pytest.raises(ValueError):
        solve_radial(1.0, 2.0, 5.0, 2.0, -5.0)
    with pytest.raises(ValueError):
        solve_radial(1.0, 2.0, 5.0, 2.0, 5.0, diffusivity=0.0)


def test_profile_scales_with_boundary_value():
    p1 = solve_radial(1.0, 2.0, 5.0, 2.0, 1.0)
    p5 = solve_radial(1.0, 2.0, 5.0, 2.0, 5.0)
    rr = np.linspace(0.2, 4.8, 40)
    assert np.abs(5.0 * p1(rr) - p5(rr)).max() <= 1e-12 * np.abs(p5(rr)).max()
