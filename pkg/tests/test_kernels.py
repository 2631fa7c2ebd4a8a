"""Kernel evaluation, norms, pair potentials, and decay bounds."""

import math
import os

import numpy as np
import pytest
from scipy import special

from fieldgas.kernels import (
    KernelSpec,
    get_kernel,
    eval_kernel,
    l1_norm,
    pair_potential,
    pair_potential_object,
    power_bound_constant,
    decay_bound_check,
    radial_convolution,
    constituent,
    _spectral_eval,
)


def closed_form_g_beta(beta, m0, rho, d):
    """Bessel-profile closed form for the order-beta kernel, as oracle."""
    z = m0 * rho
    return (
        (2.0 * math.pi) ** (-d / 2.0)
        * m0 ** (d - 2.0 * beta)
        * z ** (beta - d / 2.0)
        * special.kv(abs(d / 2.0 - beta), z)
        / (2.0 ** (beta - 1.0) * math.gamma(beta))
    )


# ---------------------------------------------------------------- evaluation

def test_yukawa_value():
    spec = KernelSpec(variant="yukawa", dim=3, m0=3.0)
    got = eval_kernel(spec, 1.0)
    assert np.isclose(got, math.exp(-3.0), rtol=1e-10)


def test_indicator_ball_values():
    spec = KernelSpec(variant="indicator_ball", dim=2, radius=1.0)
    assert eval_kernel(spec, 0.5) == 1.0
    assert eval_kernel(spec, 1.5) == 0.0


def test_spectral_matches_bessel_closed_form():
    worst = 0.0
    for beta in (0.25, 0.5, 0.75, 0.9):
        for d in (1, 2, 3):
            for rho in (0.05, 0.4, 1.3, 5.0):
                ref = closed_form_g_beta(beta, 1.0, rho, d)
                got = _spectral_eval(beta, 1.0, rho, d)
                worst = max(worst, abs(got - ref) / ref)
    assert worst < 1e-8


def test_scaling_identity():
    """lambda^{d-2a} G_{a,m0}(lambda rho) == G_{a,lambda m0}(rho)."""
    for alpha in (0.25, 0.5, 0.75):
        for d in (2, 3):
            for lam in (0.5, 2.0, 4.0):
                for rho in (0.3, 1.0, 2.5):
                    left = lam ** (d - 2 * alpha) * eval_kernel(
                        KernelSpec(variant="bessel_alpha", dim=d, alpha=alpha, m0=1.0),
                        lam * rho,
                        method="direct",
                    )
                    right = eval_kernel(
                        KernelSpec(variant="bessel_alpha", dim=d, alpha=alpha, m0=lam),
                        rho,
                        method="direct",
                    )
                    assert abs(left - right) < 1e-9 * abs(right)


def test_positivity_on_grid():
    spec = KernelSpec(variant="bessel_alpha", dim=2, alpha=0.6, m0=1.0)
    ker = get_kernel(spec)
    rho = np.linspace(1e-6, ker.truncation_radius, 500)
    assert np.all(ker(rho) > 0.0)


def test_value_at_zero_branches():
    # 2*alpha > d/2 (as 2*beta > d with beta = alpha): finite iff 2 alpha > d
    fin = get_kernel(KernelSpec(variant="bessel_alpha", dim=1, alpha=0.8, m0=1.0))
    assert np.isfinite(fin.value_at_zero)
    div = get_kernel(KernelSpec(variant="bessel_alpha", dim=2, alpha=0.5, m0=1.0))
    assert div.value_at_zero == math.inf
    assert div(0.0) == math.inf


def test_beyond_truncation_is_zero():
    spec = KernelSpec(variant="bessel_alpha", dim=3, alpha=0.5, m0=1.0)
    ker = get_kernel(spec)
    assert ker(ker.truncation_radius * 1.01) == 0.0


def test_table_matches_direct():
    spec = KernelSpec(variant="bessel_alpha", dim=2, alpha=0.35, m0=0.7)
    ker = get_kernel(spec)
    rho = np.logspace(-6, np.log10(0.9 * ker.truncation_radius), 60)
    tab = ker(rho)
    direct = np.array([ker(r, method="direct") for r in rho])
    assert np.allclose(tab, direct, rtol=5e-6)


def test_invalid_specs():
    with pytest.raises(ValueError):
        KernelSpec(variant="bessel_alpha", dim=2, alpha=1.5, m0=1.0)
    with pytest.raises(ValueError):
        KernelSpec(variant="bessel_alpha", dim=2, alpha=0.5, m0=-1.0)
    with pytest.raises(ValueError):
        KernelSpec(variant="nope", dim=2)


# ---------------------------------------------------------------- L1 norms

def test_l1_yukawa():
    spec = KernelSpec(variant="yukawa", dim=3, m0=3.0)
    assert np.isclose(l1_norm(spec), 4.0 * math.pi / 9.0, rtol=1e-8)


def test_l1_indicator_disk():
    spec = KernelSpec(variant="indicator_ball", dim=2, radius=1.0)
    assert np.isclose(l1_norm(spec), math.pi, rtol=1e-12)


def test_l1_identity_bessel():
    """Positivity forces the L1 norm to equal the zero-frequency value m0^{-2a}."""
    for alpha, m0, d in ((0.5, 2.0, 2), (0.25, 1.0, 3), (0.75, 0.9, 1), (1.0, 1.5, 2)):
        spec = KernelSpec(variant="bessel_alpha", dim=d, alpha=alpha, m0=m0)
        assert np.isclose(l1_norm(spec), m0 ** (-2.0 * alpha), rtol=1e-7)


# ---------------------------------------------------------------- pair potential

def test_pair_is_double_order_kernel():
    """G*G for order alpha equals the order 2*alpha kernel (closed form)."""
    for alpha, d in ((0.5, 2), (0.5, 3), (0.75, 3)):
        spec = KernelSpec(variant="bessel_alpha", dim=d, alpha=alpha, m0=1.0)
        for rho in (0.2, 0.9, 2.4):
            got = pair_potential(spec, rho, method="direct")
            ref = closed_form_g_beta(2 * alpha, 1.0, rho, d)
            assert abs(got - ref) < 1e-8 * ref


def test_pair_closed_forms_alpha_one():
    # order-2 closed forms in each dimension
    m0 = 1.2
    rho = 0.7
    for d, ref in (
        (1, math.exp(-m0 * rho) * (1 + m0 * rho) / (4 * m0**3)),
        (2, rho / (4 * math.pi * m0) * special.kv(1, m0 * rho)),
        (3, math.exp(-m0 * rho) / (8 * math.pi * m0)),
    ):
        spec = KernelSpec(variant="bessel_alpha", dim=d, alpha=1.0, m0=m0)
        assert np.isclose(pair_potential(spec, rho, method="direct"), ref, rtol=1e-10)


def test_pair_by_convolution_oracle():
    """Radial convolution quadrature agrees with the spectral route."""
    for d in (1, 3):
        spec = KernelSpec(variant="bessel_alpha", dim=d, alpha=0.5, m0=1.3)
        ker = get_kernel(spec)
        conv = radial_convolution(
            lambda r: float(ker(r)), lambda u: ker(u), 1.1, d, ker.truncation_radius,
            tol=1e-7,
        )
        ref = pair_potential(spec, 1.1, method="direct")
        assert abs(conv - ref) < 1e-6 * abs(ref)
    # d=2 with a milder singularity
    spec = KernelSpec(variant="bessel_alpha", dim=2, alpha=0.75, m0=1.0)
    ker = get_kernel(spec)
    conv = radial_convolution(
        lambda r: float(ker(r)), lambda u: ker(u), 0.8, 2, ker.truncation_radius,
        tol=1e-7,
    )
    ref = pair_potential(spec, 0.8, method="direct")
    assert abs(conv - ref) < 1e-5 * abs(ref)


def test_pair_log_law_small_radius():
    """d=2 alpha=1/2 pair kernel behaves like -ln(rho)/(2 pi) near zero."""
    spec = KernelSpec(variant="bessel_alpha", dim=2, alpha=0.5, m0=1.0)
    vals = []
    for rho in (1e-2, 1e-3, 1e-4):
        vals.append(pair_potential(spec, rho, method="direct") + math.log(rho) / (2 * math.pi))
    vals = np.array(vals)
    # approaches a constant: successive differences shrink
    assert abs(vals[2] - vals[1]) < abs(vals[1] - vals[0])
    assert abs(vals[2] - vals[1]) < 2e-4


def test_pair_divergence_flag():
    div = pair_potential_object(KernelSpec(variant="bessel_alpha", dim=2, alpha=0.5, m0=1.0))
    assert div.diverges_at_zero and div.at_zero == math.inf
    fin = pair_potential_object(KernelSpec(variant="bessel_alpha", dim=3, alpha=0.9, m0=1.0))
    assert not fin.diverges_at_zero and np.isfinite(fin.at_zero)


def test_pair_indicator_disjoint_supports():
    spec = KernelSpec(variant="indicator_ball", dim=2, radius=0.8)
    assert pair_potential(spec, 1.6) == 0.0
    assert pair_potential(spec, 2.3) == 0.0
    # lens-area value inside
    got = pair_potential(spec, 0.0)
    assert np.isclose(got, math.pi * 0.8**2, rtol=1e-12)


def test_l2_divergence_trend():
    """Truncated L2 mass of the d=2, alpha=1/2 kernel grows like |ln delta|."""
    spec = KernelSpec(variant="bessel_alpha", dim=2, alpha=0.5, m0=1.0)
    ker = get_kernel(spec)
    masses = [ker.partial_l2_sq(delta) for delta in (1e-1, 1e-2, 1e-3, 1e-4)]
    diffs = np.diff(masses)
    assert np.all(diffs > 0.0)
    # increments per decade approach the 1/(2 pi) log slope
    incr = diffs * 1.0 / math.log(10.0)
    assert np.isclose(incr[-1], 1.0 / (2.0 * math.pi), rtol=0.05)


# ---------------------------------------------------------------- bounds

def test_power_bound_constant_quadrature_vs_gamma():
    for d, beta in ((2, 0.5), (3, 0.5), (3, 0.75), (1, 0.25)):
        quad = power_bound_constant(d, beta)
        closed = power_bound_constant(d, beta, method="closed")
        assert np.isclose(quad, closed, rtol=1e-10)


def test_decay_bound_check_exponential():
    spec = KernelSpec(variant="bessel_alpha", dim=3, alpha=0.5, m0=1.0)
    report = decay_bound_check(spec, [2.0, 4.0, 8.0])
    assert report.applicable
    assert all(rec.exp_ok for rec in report.records)


def test_decay_power_bound_ratio_near_zero():
    """The small-radius power bound is sharp: ratio tends to one."""
    spec = KernelSpec(variant="bessel_alpha", dim=3, alpha=0.5, m0=1.0)
    report = decay_bound_check(spec, [1e-2, 1e-4, 1e-6])
    ratios = np.array([rec.power_ratio for rec in report.records])
    assert np.all(ratios < 1.0)
    assert abs(ratios[-1] - 1.0) < 1e-3


def test_decay_bound_indicator_not_applicable():
    report = decay_bound_check(KernelSpec(variant="indicator_ball", dim=2, radius=1.0), [0.5])
    assert not report.applicable


# ---------------------------------------------------------------- mollified

def test_uv_regularized_small_epsilon_matches_base():
    base = KernelSpec(variant="bessel_alpha", dim=2, alpha=0.75, m0=1.0)
    reg = KernelSpec(variant="uv_regularized", dim=2, epsilon=1e-3, base=base)
    ker = get_kernel(reg)
    ref = get_kernel(base)
    for rho in (0.5, 1.0, 2.0):
        assert np.isclose(ker(rho, method="direct"), ref(rho, method="direct"), rtol=1e-3)


def test_uv_regularized_finite_at_zero_and_l1():
    base = KernelSpec(variant="bessel_alpha", dim=2, alpha=0.5, m0=1.0)
    reg = KernelSpec(variant="uv_regularized", dim=2, epsilon=0.05, base=base)
    ker = get_kernel(reg)
    assert np.isfinite(ker.value_at_zero)
    # mollifier integrates to one, so the L1 norm is preserved
    assert np.isclose(ker.l1_norm(), 1.0, rtol=2e-3)


# ---------------------------------------------------------------- export

def test_export_csv(tmp_path):
    spec = KernelSpec(variant="yukawa", dim=3, m0=2.0)
    path = os.path.join(tmp_path, "prof.csv")
    get_kernel(spec).export_csv(path)
    with open(path) as fh:
        header = fh.readline().strip()
        rows = fh.readlines()
    assert header == "radius,value"
    r0, v0 = map(float, rows[0].split(","))
    assert np.isclose(v0, math.exp(-2.0 * r0) / r0, rtol=1e-6)


def test_constituent_profiles():
    # alpha=1 kernels in closed form per dimension
    m, rho = 1.7, 0.6
    assert np.isclose(constituent(m, rho, 1), math.exp(-m * rho) / (2 * m), rtol=1e-12)
    assert np.isclose(constituent(m, rho, 2), special.k0(m * rho) / (2 * math.pi), rtol=1e-11)
    assert np.isclose(constituent(m, rho, 3), math.exp(-m * rho) / (4 * math.pi * rho), rtol=1e-12)
