"""Semi-analytic radially symmetric quasi-static nutrient profile.

For a circular tumour with necrotic core radius R3, proliferating annulus up
to R2 and host tissue out to an outer boundary at R_out held at sigma_B, the
sharp-interface nutrient problem is piecewise explicit: constant in the core
(bounded harmonic), a modified-Bessel combination c1*I0(s r) + c2*K0(s r)
with s = sqrt(C/D) in the consuming annulus, and a + b*ln r outside.  The
four coefficients follow from zero flux at R3, value and flux continuity at
R2 and the Dirichlet value at R_out.

The modified Bessel functions are evaluated from scratch: power series up to
x = 16 and asymptotic expansions beyond.  The K series suffer cancellation
that grows like exp(2x), wiping out up to 14 of 16 digits at the switch
point, so they are summed in double-double arithmetic (pairs of floats
carrying roughly 31 significant digits).
"""

import math
from dataclasses import dataclass

import numpy as np

# ------------------------------------------------------------ double-double

_SPLITTER = 134217729.0  # 2**27 + 1, Dekker splitting constant

# high/low parts of Euler's constant and ln 2
_GAMMA = (0.5772156649015329, -4.942915152430645e-18)
_LN2 = (0.6931471805599453, 2.3190468138462996e-17)

_SERIES_CUTOFF = 16.0


def _two_sum(a, b):
    s = a + b
    bb = s - a
    return s, (a - (s - bb)) + (b - bb)


def _quick_two_sum(a, b):
    s = a + b
    return s, b - (s - a)


def _two_prod(a, b):
    p = a * b
    t = _SPLITTER * a
    ahi = t - (t - a)
    alo = a - ahi
    t = _SPLITTER * b
    bhi = t - (t - b)
    blo = b - bhi
    err = ((ahi * bhi - p) + ahi * blo + alo * bhi) + alo * blo
    return p, err


def _dd(x):
    return (float(x), 0.0)


def _dd_add(x, y):
    s1, s2 = _two_sum(x[0], y[0])
    t1, t2 = _two_sum(x[1], y[1])
    s2 += t1
    s1, s2 = _quick_two_sum(s1, s2)
    s2 += t2
    return _quick_two_sum(s1, s2)


def _dd_neg(x):
    return (-x[0], -x[1])


def _dd_sub(x, y):
    return _dd_add(x, _dd_neg(y))


def _dd_mul(x, y):
    p1, p2 = _two_prod(x[0], y[0])
    p2 += x[0] * y[1] + x[1] * y[0]
    return _quick_two_sum(p1, p2)


def _dd_div(x, y):
    q1 = x[0] / y[0]
    r = _dd_sub(x, _dd_mul(_dd(q1), y))
    q2 = r[0] / y[0]
    r = _dd_sub(r, _dd_mul(_dd(q2), y))
    q3 = r[0] / y[0]
    s, e = _quick_two_sum(q1, q2)
    return _dd_add((s, e), _dd(q3))


def _dd_scale_pow2(x, c):
    """Multiply by an exact power of two."""
    return (x[0] * c, x[1] * c)


def _dd_log(x):
    """Natural log of a positive float in double-double precision.

    Reduces x = 2^e * m with m in [sqrt(1/2), sqrt(2)), then uses
    ln m = 2 atanh t with t = (m - 1)/(m + 1), |t| <= 0.172.
    """
    if x <= 0.0:
        raise ValueError("log argument must be positive")
    m, e = math.frexp(x)           # m in [0.5, 1)
    if m < 0.7071067811865476:
        m *= 2.0
        e -= 1
    t = _dd_div(_dd(m - 1.0), _dd_add(_dd(m), _dd(1.0)))
    t2 = _dd_mul(t, t)
    term = t
    total = t
    for k in range(1, 60):
        term = _dd_mul(term, t2)
        contrib = _dd_div(term, _dd(2.0 * k + 1.0))
        total = _dd_add(total, contrib)
        if abs(contrib[0]) < 1e-35 * abs(total[0]):
            break
    total = _dd_scale_pow2(total, 2.0)
    return _dd_add(total, _dd_mul(_LN2, _dd(float(e))))


# ------------------------------------------------------------ Bessel I and K

def _i0_series_dd(u):
    """Sum_k u^k / (k!)^2 with u = x^2/4, in double-double."""
    term = _dd(1.0)
    total = _dd(1.0)
    for k in range(1, 200):
        term = _dd_div(_dd_mul(term, u), _dd(float(k * k)))
        total = _dd_add(total, term)
        if abs(term[0]) < 1e-35 * abs(total[0]):
            return total
    raise RuntimeError("I0 series did not converge")


def _i1_series_dd(u):
    """Sum_k u^k / (k! (k+1)!); I1 = (x/2) times this."""
    term = _dd(1.0)
    total = _dd(1.0)
    for k in range(1, 200):
        term = _dd_div(_dd_mul(term, u), _dd(float(k * (k + 1))))
        total = _dd_add(total, term)
        if abs(term[0]) < 1e-35 * abs(total[0]):
            return total
    raise RuntimeError("I1 series did not converge")


def _asymptotic_sum(nu, x, alternating):
    """Sum_k a_k(nu)/x^k with a_k = a_{k-1} (4 nu^2 - (2k-1)^2)/(8k)."""
    four_nu2 = 4.0 * nu * nu
    term = 1.0
    total = 1.0
    prev = math.inf
    for k in range(1, 60):
        term *= (four_nu2 - (2.0 * k - 1.0) ** 2) / (8.0 * k * x)
        t = -term if (alternating and k % 2 == 1) else term
        if abs(term) >= prev:
            break  # asymptotic tail started to diverge
        total += t
        prev = abs(term)
        if abs(term) < 1e-17 * abs(total):
            break
    return total


def bessel_i0(x):
    """Modified Bessel function I0 for x >= 0, relative error <= 1e-10."""
    if x < 0.0:
        raise ValueError("I0 implemented for nonnegative arguments")
    if x <= _SERIES_CUTOFF:
        u = _dd_scale_pow2(_dd_mul(_dd(x), _dd(x)), 0.25)
        total = _i0_series_dd(u)
        return total[0] + total[1]
    s = _asymptotic_sum(0.0, x, alternating=True)
    return math.exp(x) / math.sqrt(2.0 * math.pi * x) * s


def bessel_i1(x):
    """Modified Bessel function I1 for x >= 0, relative error <= 1e-10."""
    if x < 0.0:
        raise ValueError("I1 implemented for nonnegative arguments")
    if x <= _SERIES_CUTOFF:
        u = _dd_scale_pow2(_dd_mul(_dd(x), _dd(x)), 0.25)
        total = _i1_series_dd(u)
        return 0.5 * x * (total[0] + total[1])
    s = _asymptotic_sum(1.0, x, alternating=True)
    return math.exp(x) / math.sqrt(2.0 * math.pi * x) * s


def bessel_k0(x):
    """Modified Bessel function K0 for x > 0, relative error <= 1e-10."""
    if x <= 0.0:
        raise ValueError("K0 needs a positive argument")
    if x > _SERIES_CUTOFF:
        s = _asymptotic_sum(0.0, x, alternating=False)
        return math.sqrt(0.5 * math.pi / x) * math.exp(-x) * s
    # K0 = -(ln(x/2) + gamma) I0 + sum_{k>=1} u^k/(k!)^2 H_k, u = x^2/4
    u = _dd_scale_pow2(_dd_mul(_dd(x), _dd(x)), 0.25)
    i0_dd = _i0_series_dd(u)
    log_half_x = _dd_log(0.5 * x)
    total = _dd_neg(_dd_mul(_dd_add(log_half_x, _GAMMA), i0_dd))
    term = _dd(1.0)
    harmonic = _dd(0.0)
    for k in range(1, 200):
        term = _dd_div(_dd_mul(term, u), _dd(float(k * k)))
        harmonic = _dd_add(harmonic, _dd_div(_dd(1.0), _dd(float(k))))
        contrib = _dd_mul(term, harmonic)
        total = _dd_add(total, contrib)
        if abs(contrib[0]) < 1e-35 * max(abs(total[0]), abs(i0_dd[0])):
            return total[0] + total[1]
    raise RuntimeError("K0 series did not converge")


def bessel_k1(x):
    """Modified Bessel function K1 for x > 0, relative error <= 1e-10."""
    if x <= 0.0:
        raise ValueError("K1 needs a positive argument")
    if x > _SERIES_CUTOFF:
        s = _asymptotic_sum(1.0, x, alternating=False)
        return math.sqrt(0.5 * math.pi / x) * math.exp(-x) * s
    # K1 = 1/x + ln(x/2) I1 - (x/4) sum_k (H_k + H_{k+1} - 2 gamma) s_k,
    # s_k = u^k/(k! (k+1)!), u = x^2/4
    u = _dd_scale_pow2(_dd_mul(_dd(x), _dd(x)), 0.25)
    i1_dd = _dd_scale_pow2(_dd_mul(_dd(x), _i1_series_dd(u)), 0.5)
    log_half_x = _dd_log(0.5 * x)
    total = _dd_add(_dd_div(_dd(1.0), _dd(x)), _dd_mul(log_half_x, i1_dd))
    term = _dd(1.0)
    h_k = _dd(0.0)
    h_k1 = _dd(1.0)
    quarter_x = _dd(0.25 * x)
    sum_scale = abs(i1_dd[0]) + 1.0
    for k in range(0, 200):
        if k > 0:
            term = _dd_div(_dd_mul(term, u), _dd(float(k * (k + 1))))
            h_k = _dd_add(h_k, _dd_div(_dd(1.0), _dd(float(k))))
            h_k1 = _dd_add(h_k1, _dd_div(_dd(1.0), _dd(float(k + 1))))
        bracket = _dd_sub(_dd_add(h_k, h_k1), _dd_scale_pow2(_GAMMA, 2.0))
        contrib = _dd_mul(_dd_mul(quarter_x, term), bracket)
        total = _dd_sub(total, contrib)
        if abs(contrib[0]) < 1e-35 * max(abs(total[0]), sum_scale):
            return total[0] + total[1]
    raise RuntimeError("K1 series did not converge")


def bessel_i0_k0(x):
    """Convenience pair (I0(x), K0(x))."""
    return bessel_i0(x), bessel_k0(x)


# ------------------------------------------------------------ radial profile

@dataclass(frozen=True)
class RadialNutrientProfile:
    """Piecewise nutrient profile: core constant, Bessel annulus, log exterior."""

    r3: float
    r2: float
    r_out: float
    consumption: float
    sigma_b: float
    diffusivity: float
    core_value: float
    c1: float
    c2: float
    a: float
    b: float

    @property
    def s(self):
        return math.sqrt(self.consumption / self.diffusivity)

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        scalar = r.ndim == 0
        r = np.atleast_1d(r)
        out = np.empty_like(r)
        for i, ri in enumerate(r):
            if ri < self.r3:
                out[i] = self.core_value
            elif ri <= self.r2:
                if self.consumption == 0.0:
                    out[i] = self.sigma_b
                else:
                    sr = self.s * ri
                    out[i] = self.c1 * bessel_i0(sr) + self.c2 * bessel_k0(sr)
            else:
                # anchored at the boundary so sigma(r_out) = sigma_b exactly
                out[i] = self.sigma_b + self.b * math.log(ri / self.r_out)
        return out[0] if scalar else out

    def derivative(self, r):
        r = np.asarray(r, dtype=float)
        scalar = r.ndim == 0
        r = np.atleast_1d(r)
        out = np.zeros_like(r)
        for i, ri in enumerate(r):
            if ri < self.r3 or self.consumption == 0.0:
                out[i] = 0.0
            elif ri <= self.r2:
                sr = self.s * ri
                out[i] = self.s * (self.c1 * bessel_i1(sr)
                                   - self.c2 * bessel_k1(sr))
            else:
                out[i] = self.b / ri
        return out[0] if scalar else out

    def second_derivative(self, r):
        """Annulus-region second derivative from Bessel identities."""
        r = np.asarray(r, dtype=float)
        scalar = r.ndim == 0
        r = np.atleast_1d(r)
        out = np.zeros_like(r)
        for i, ri in enumerate(r):
            if self.r3 <= ri <= self.r2 and self.consumption > 0.0:
                sr = self.s * ri
                d_i1 = bessel_i0(sr) - bessel_i1(sr) / sr
                d_k1 = -bessel_k0(sr) - bessel_k1(sr) / sr
                out[i] = self.s ** 2 * (self.c1 * d_i1 - self.c2 * d_k1)
            elif ri > self.r2:
                out[i] = -self.b / ri ** 2
        return out[0] if scalar else out


def solve_radial(r3, r2, r_out, consumption, sigma_b, diffusivity=1.0):
    """Coefficients of the radial profile for given radii and rates.

    Rows of the 4x4 system: zero flux at r3 (bounded core), value and flux
    continuity at r2 against the logarithmic exterior, Dirichlet at r_out.
    """
    if not 0.0 < r3 < r2 < r_out:
        raise ValueError("radii must satisfy 0 < r3 < r2 < r_out")
    if consumption < 0.0 or sigma_b < 0.0:
        raise ValueError("consumption and boundary value must be nonnegative")
    if diffusivity <= 0.0:
        raise ValueError("diffusivity must be positive")
    if consumption == 0.0 or sigma_b == 0.0:
        value = sigma_b
        return RadialNutrientProfile(r3, r2, r_out, consumption, sigma_b,
                                     diffusivity, value, 0.0, 0.0, value, 0.0)
    s = math.sqrt(consumption / diffusivity)
    m = np.array([
        [bessel_i1(s * r3), -bessel_k1(s * r3), 0.0, 0.0],
        [bessel_i0(s * r2), bessel_k0(s * r2), -1.0, -math.log(r2)],
        [s * bessel_i1(s * r2), -s * bessel_k1(s * r2), 0.0, -1.0 / r2],
        [0.0, 0.0, 1.0, math.log(r_out)],
    ])
    rhs = np.array([0.0, 0.0, 0.0, sigma_b])
    if np.linalg.cond(m) > 1e12:
        raise RuntimeError("radial matching system is ill conditioned")
    c1, c2, a, b = np.linalg.solve(m, rhs)
    core = c1 * bessel_i0(s * r3) + c2 * bessel_k0(s * r3)
    return RadialNutrientProfile(r3, r2, r_out, consumption, sigma_b,
                                 diffusivity, core, c1, c2, a, b)
