"""Tests for the in-house modified Bessel K_nu radial profile."""

import numpy as np
import pytest
from scipy import special

from fieldgas.bessel import kv


def test_k0_k1_against_scipy():
    z = np.logspace(-8, 2, 400)
    for nu in (0, 1):
        ours = kv(nu, z)
        ref = special.kv(nu, z)
        assert np.all(np.abs(ours - ref) <= 1e-12 * np.abs(ref))


def test_half_integer_orders():
    # K_{1/2}(z) = sqrt(pi/(2z)) e^{-z} exactly
    z = np.logspace(-6, 1.8, 200)
    ref = np.sqrt(np.pi / (2.0 * z)) * np.exp(-z)
    assert np.allclose(kv(0.5, z), ref, rtol=1e-13)

    # recurrence orders against scipy
    for nu in (1.5, 2.5, 3.5):
        ref = special.kv(nu, z)
        assert np.allclose(kv(nu, z), ref, rtol=5e-12)


def test_integer_recurrence_orders():
    z = np.logspace(-4, 2, 250)
    for nu in (2, 3, 4):
        assert np.allclose(kv(nu, z), special.kv(nu, z), rtol=5e-12)


def test_region_boundaries_are_seamless():
    """The series/integral and integral/asymptotic switch points must agree."""
    for z0 in (1.5, 13.0):
        z = np.array([z0 * (1 - 1e-9), z0, z0 * (1 + 1e-9)])
        for nu in (0, 1, 2):
            vals = kv(nu, z)
            assert np.all(np.diff(vals) < 0.0)  # monotone through the seam
            assert np.allclose(vals, special.kv(nu, z), rtol=5e-12)


def test_scalar_and_array_inputs():
    assert np.isclose(float(kv(0, 2.0)), float(special.kv(0, 2.0)), rtol=1e-12)
    out = kv(1, np.array([0.5, 5.0, 50.0]))
    assert out.shape == (3,)


def test_invalid_arguments():
    with pytest.raises(ValueError):
        kv(0, np.array([-1.0]))
    with pytest.raises(ValueError):
        kv(0.25, np.array([1.0]))  # only integer/half-integer orders
