"""Modified Bessel function of the second kind, K_nu, for radial profiles.

Only the orders that occur as radial profiles of screened Green's functions
are needed: half integers (closed form) and non-negative integers (power
series for small argument, an exponentially convergent integral rule in the
middle range, asymptotic expansion for large argument).  Target accuracy is
1e-10 relative across the full range.
"""

from __future__ import annotations

import math

import numpy as np

_EULER_GAMMA = 0.5772156649015328606

# Regime switch points for integer orders.
_Z_SERIES = 1.5
_Z_ASYMP = 13.0


def _k0_k1_series(z):
    """Ascending series for K0 and K1, accurate for z <= ~2."""
    z = np.asarray(z, dtype=float)
    q = z * z / 4.0
    lg = np.log(z / 2.0)

    i0 = np.ones_like(z)
    k0 = np.zeros_like(z)
    term0 = np.ones_like(z)
    h = 0.0  # harmonic number H_k
    for k in range(1, 40):
        term0 = term0 * q / (k * k)
        i0 = i0 + term0
        h += 1.0 / k
        k0 = k0 + term0 * h
        if np.all(term0 * max(h, 1.0) < 1e-18 * np.maximum(i0, 1.0)):
            break
    k0 = -(lg + _EULER_GAMMA) * i0 + k0

    # K1(z) = 1/z + ln(z/2) I1(z) - (z/4) sum_k (psi(k+1)+psi(k+2)) q^k / (k!(k+1)!)
    i1 = np.ones_like(z)  # I1 / (z/2)
    term1 = np.ones_like(z)
    for k in range(1, 40):
        term1 = term1 * q / (k * (k + 1))
        i1 = i1 + term1
    sum1 = np.zeros_like(z)
    term1 = np.ones_like(z)
    h = 0.0
    for k in range(0, 40):
        psi_k1 = -_EULER_GAMMA + h
        psi_k2 = -_EULER_GAMMA + h + 1.0 / (k + 1)
        sum1 = sum1 + term1 * (psi_k1 + psi_k2)
        term1 = term1 * q / ((k + 1) * (k + 2))
        h += 1.0 / (k + 1)
    k1 = 1.0 / z + lg * (z / 2.0) * i1 - (z / 4.0) * sum1
    return k0, k1


def _kn_integral(n, z):
    """K_n(z) = int_0^inf exp(-z cosh t) cosh(n t) dt by the trapezoid rule.

    The integrand decays doubly exponentially in t, so a plain trapezoid
    with modest spacing converges geometrically.  Used in the middle range
    where neither the series nor the asymptotic expansion reaches 1e-10.
    """
    z = np.asarray(z, dtype=float)
    h = 0.10
    # exp(-z cosh T) below 1e-22 relative to K_n(z) ~ exp(-z): z(cosh T - 1) > 55
    tmax = np.arccosh(1.0 + 55.0 / np.min(z)) + 1.0
    t = np.arange(0.0, tmax + h, h)
    w = np.full(t.shape, h)
    w[0] = h / 2.0
    ct = np.cosh(t)
    chn = np.cosh(n * t)
    return np.exp(-np.outer(z, ct)) @ (w * chn)


def _kn_asymptotic(n, z):
    """Large-argument expansion, truncated at the smallest term."""
    z = np.asarray(z, dtype=float)
    mu = 4.0 * n * n
    total = np.ones_like(z)
    term = np.ones_like(z)
    for k in range(1, 30):
        term = term * (mu - (2 * k - 1) ** 2) / (k * 8.0 * z)
        if np.all(np.abs(term) < 1e-16):
            break
        total = total + term
    return np.sqrt(np.pi / (2.0 * z)) * np.exp(-z) * total


def _k_half_integer(n, z):
    """K_{n+1/2}(z) closed form, n >= 0 integer."""
    z = np.asarray(z, dtype=float)
    s = np.zeros_like(z)
    for k in range(0, n + 1):
        c = math.factorial(n + k) / (math.factorial(k) * math.factorial(n - k))
        s = s + c / (2.0 * z) ** k
    return np.sqrt(np.pi / (2.0 * z)) * np.exp(-z) * s


def kv(nu: float, z):
    """K_nu(z) for nu a non-negative half-integer or integer, z > 0.

    Vectorized over z (scalar in, scalar out).  Raises for unsupported
    orders; the package only ever needs nu = d/2 - 1 for small space
    dimensions d.
    """
    scalar = np.ndim(z) == 0
    z = np.atleast_1d(np.asarray(z, dtype=float))
    if np.any(z <= 0.0):
        raise ValueError("kv requires z > 0")
    nu = abs(float(nu))
    two_nu = round(2 * nu)
    if abs(2 * nu - two_nu) > 1e-12:
        raise ValueError(f"unsupported order nu={nu}")

    if two_nu % 2 == 1:  # half integer: closed form
        out = _k_half_integer((two_nu - 1) // 2, z)
        return float(out[0]) if scalar else out

    n = two_nu // 2
    out = np.empty_like(z)
    small = z <= _Z_SERIES
    large = z >= _Z_ASYMP
    mid = ~small & ~large
    if np.any(small):
        k0, k1 = _k0_k1_series(z[small])
        out[small] = _recurrence(n, z[small], k0, k1)
    if np.any(mid):
        zm = z[mid]
        k0 = _kn_integral(0, zm)
        k1 = _kn_integral(1, zm)
        out[mid] = _recurrence(n, zm, k0, k1)
    if np.any(large):
        zl = z[large]
        out[large] = _recurrence(n, zl, _kn_asymptotic(0, zl), _kn_asymptotic(1, zl))
    return float(out[0]) if scalar else out


def _recurrence(n, z, k0, k1):
    """Upward recurrence K_{m+1} = K_{m-1} + (2m/z) K_m (stable for K)."""
    if n == 0:
        return k0
    if n == 1:
        return k1
    km, k = k0, k1
    for m in range(1, n):
        km, k = k, km + (2.0 * m / z) * k
    return k
