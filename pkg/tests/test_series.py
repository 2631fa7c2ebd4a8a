"""Expansion coefficients, convergence constants, projection identity,
and the set-partition moment formula."""

import math

import numpy as np
import pytest
from scipy.integrate import quad

from fieldgas import gcmc
from fieldgas import series as S
from fieldgas.ensembles import (
    ChargeDistribution,
    InteractionMeasure,
    MarkedConfiguration,
    Region,
)
from fieldgas.kernels import KernelSpec, get_kernel
from fieldgas.potentials import EnergyDensity
from fieldgas.profiles import BumpProfile
from fieldgas.streams import stream

RADEMACHER = ChargeDistribution.rademacher()
NU = InteractionMeasure.rademacher(1.0, mass=1.0)
KER1 = KernelSpec("bessel_alpha", alpha=1.0, dim=1, m0=1.0)
BOX1 = Region((0.0,), (2.0,))
TRIG = EnergyDensity.trigonometric(NU)


def _params(**kw):
    base = dict(z=0.8, beta=0.0, region=BOX1, kernel=KER1, density=TRIG,
                r=RADEMACHER, seed=29, burn_in=800, thinning=6, mesh_cell=0.05)
    base.update(kw)
    return gcmc.GcmcParams(**base)


# ---------------------------------------------------------------------------
# convergence constants
# ---------------------------------------------------------------------------

class TestConvergenceDomain:
    def test_radii_are_reciprocals(self):
        dom = S.ConvergenceDomain(C1=0.5, C2=0.25)
        assert np.isclose(dom.z_radius, 1.0 / (math.e * 0.5))
        assert np.isclose(dom.beta_radius, 1.0 / (math.e * 0.25))

    def test_zero_constant_gives_infinite_radius(self):
        dom = S.ConvergenceDomain(C1=0.0, C2=1.0)
        assert dom.z_radius == math.inf

    def test_negative_constant_rejected(self):
        with pytest.raises(ValueError):
            S.ConvergenceDomain(C1=-1.0, C2=0.0)

    def test_c1_against_direct_quadrature(self):
        # sup over s of int |e^{i s a G(y)} - 1| d|nu| dy; Rademacher on
        # both sides makes this 2 int |sin(G(y)/2)| dy in d=1.
        kk = get_kernel(KER1)
        val, _ = quad(lambda y: 2.0 * abs(math.sin(0.5 * kk(np.array([abs(y)]))[0])),
                      0.0, KER1.truncation_radius or kk.truncation_radius,
                      limit=400, epsabs=1e-10)
        oracle = 2.0 * val   # both half-lines
        c1 = S.compute_C1(KER1, RADEMACHER, NU)
        assert abs(c1 - oracle) < 1e-6
        c2 = S.compute_C2(KER1, RADEMACHER, NU)
        assert np.isclose(c1, c2, rtol=1e-9)   # symmetric roles here

    def test_c1_majorant(self):
        # |e^{i theta} - 1| <= |theta| gives C1 <= c * b * ||G||_1
        kk = get_kernel(KER1)
        c1 = S.compute_C1(KER1, RADEMACHER, NU)
        bound = RADEMACHER.bound * NU.slope_bound * kk.l1_norm()
        assert c1 <= bound + 1e-9

    def test_small_kernel_limit(self):
        tiny = KernelSpec("indicator_ball", dim=1, radius=1e-4)
        c1 = S.compute_C1(tiny, RADEMACHER, NU)
        assert c1 < 5e-4

    def test_domain_wrapper(self):
        dom = S.convergence_domain(KER1, RADEMACHER, NU)
        assert dom.C1 > 0 and dom.C2 > 0
        assert np.isclose(dom.z_radius, 1.0 / (math.e * dom.C1))


# ---------------------------------------------------------------------------
# truncated power series arithmetic
# ---------------------------------------------------------------------------

class TestTruncatedSeries:
    def test_multiply_divide_round_trip(self):
        a = S.TruncatedSeries((1.0 + 0j, -0.3 + 0.1j, 0.05 + 0j),
                              (0.0, 1e-9, 1e-9))
        b = S.TruncatedSeries((2.0 + 0j, 0.4 + 0j, -0.1 + 0.2j),
                              (0.0, 1e-9, 1e-9))
        back = (a * b).divide(b)
        for k in range(3):
            assert abs(back.coefficients[k] - a.coefficients[k]) < 1e-12

    def test_horner_evaluation(self):
        a = S.TruncatedSeries((1.0 + 0j, -0.3 + 0.1j, 0.05 + 0j),
                              (0.0, 1e-9, 1e-9))
        direct = 1.0 + (-0.3 + 0.1j) * 0.2 + 0.05 * 0.04
        assert abs(a(0.2) - direct) < 1e-14

    def test_error_accumulates_with_powers(self):
        a = S.TruncatedSeries((1.0 + 0j, 0.0j), (0.1, 0.2))
        assert np.isclose(a.error_at(0.5), 0.1 + 0.2 * 0.5)

    def test_length_mismatch_rejected(self):
        with pytest.raises(ValueError):
            S.TruncatedSeries((1.0 + 0j,), (0.0, 0.0))

    def test_divide_by_zero_constant_rejected(self):
        a = S.TruncatedSeries((1.0 + 0j,), (0.0,))
        b = S.TruncatedSeries((0.0 + 0j,), (0.0,))
        with pytest.raises(ZeroDivisionError):
            a.divide(b)


# ---------------------------------------------------------------------------
# high-temperature expansion of the correlation functional
# ---------------------------------------------------------------------------

class TestHtSeries:
    ETA = MarkedConfiguration(np.array([[0.9]]), np.array([1.0]))

    def test_order_zero_is_one(self):
        ser = S.ht_series_rho(self.ETA, _params(), order=0)
        assert ser.coefficients[0] == 1.0 + 0j
        assert ser.errors[0] == 0.0

    def test_order_one_against_nested_quadrature(self):
        """The linear coefficient is a one-point cluster integral with an
        inner free-noise exponent; compare against an independent nested
        adaptive quadrature."""
        kk = get_kernel(KER1)
        z, y0 = 0.8, 0.9

        def g(x):
            return kk(np.array([abs(x)]))[0]

        def kappa(x):
            inner, _ = quad(lambda u: math.cos(g(u - x)) - 1.0, 0.0, 2.0,
                            points=[x], limit=200, epsabs=1e-12)
            return math.exp(z * inner)

        oracle, _ = quad(lambda x: (math.cos(g(x - y0)) - 1.0) * kappa(x),
                         0.0, 2.0, points=[y0], limit=200, epsabs=1e-11)
        assert np.isclose(oracle, -0.098353160487, atol=1e-9)

        ser = S.ht_series_rho(self.ETA, _params(), order=1, mesh_cell=0.00625)
        c1 = ser.coefficients[1].real
        assert abs(c1 - oracle) / abs(oracle) < 1e-6
        assert abs(ser.coefficients[1].imag) < 1e-12

    def test_series_matches_sampler_inside_domain(self):
        dom = S.convergence_domain(KER1, RADEMACHER, NU)
        beta = dom.beta_radius / 10.0
        params = _params(beta=beta)
        ser = S.ht_series_rho(self.ETA, params, order=2, mesh_cell=0.0125)
        val = ser(beta).real
        trunc = abs(ser.coefficients[-1]) * beta ** (ser.order + 1)
        err_series = ser.error_at(beta) + trunc
        est = gcmc.estimate_rho(self.ETA, params, budget=4000)
        assert abs(val - est.mean) < 3.0 * (est.stderr + err_series)

    def test_rejects_non_trigonometric_density(self):
        hard = EnergyDensity.hard_core(order=2)
        with pytest.raises(ValueError):
            S.ht_series_rho(self.ETA, _params(density=hard), order=1)

    def test_rejects_high_order(self):
        with pytest.raises(ValueError):
            S.ht_series_rho(self.ETA, _params(), order=4)


# ---------------------------------------------------------------------------
# projection onto the auxiliary marked Poisson process
# ---------------------------------------------------------------------------

class TestPottsProjection:
    def test_empty_probe(self):
        empty = MarkedConfiguration(np.empty((0, 1)), np.empty(0), 1)
        rep = S.potts_projection_check(empty, 0.7, NU, KER1, BOX1, budget=2000)
        assert rep["lhs"] == 1.0
        assert abs(rep["rhs"] - 1.0) < 3.0 * abs(rep["stderr"]) + 1e-12

    def test_one_point_closed_form(self):
        eta = MarkedConfiguration(np.array([[0.9]]), np.array([1.0]))
        kk = get_kernel(KER1)
        val, _ = quad(lambda y: 1.0 - math.cos(kk(np.array([abs(y - 0.9)]))[0]),
                      0.0, 2.0, limit=300, epsabs=1e-12, points=[0.9])
        oracle = math.exp(-0.7 * val)
        rep = S.potts_projection_check(eta, 0.7, NU, KER1, BOX1,
                                       budget=40000, seed=5, tol=1e-10)
        assert abs(rep["lhs"] - oracle) / oracle < 1e-8
        assert rep["method"] == "mc"
        assert rep["z_score"] < 3.0

    def test_randomized_probability_cases(self):
        rng = stream(2026, 6)
        for case in range(5):
            dim = 1 if case % 2 == 0 else 2
            m0 = float(rng.uniform(0.8, 2.0))
            side = float(rng.uniform(1.2, 2.2))
            reg = Region((0.0,) * dim, (side,) * dim)
            ker = KernelSpec("bessel_alpha", alpha=(1.0 if dim == 1 else 0.5),
                             dim=dim, m0=m0,
                             truncation_radius=float(rng.uniform(0.8, 1.6)))
            avals = rng.uniform(0.5, 2.0, 2)
            w = rng.uniform(0.2, 1.0, 2)
            w = w / (2.0 * w.sum())
            atoms = []
            for a, ww in zip(avals, w):
                atoms += [(float(a), float(ww)), (float(-a), float(ww))]
            nu = InteractionMeasure(tuple(atoms))
            assert nu.is_probability
            n_eta = int(rng.integers(1, 3))
            eta = MarkedConfiguration(reg.sample_uniform(rng, n_eta),
                                      rng.choice([-1.0, 1.0], n_eta), dim)
            beta = float(rng.uniform(0.2, 1.0))
            rep = S.potts_projection_check(eta, beta, nu, ker, reg,
                                           budget=20000, seed=1000 + case,
                                           tol=1e-6)
            assert rep["method"] == "mc"
            assert rep["z_score"] < 3.0

    def test_complex_measure_uses_exact_route(self):
        eta = MarkedConfiguration(np.array([[0.9]]), np.array([1.0]))
        cnu = InteractionMeasure(((1.0, 0.5 + 0.2j), (-1.0, 0.5 - 0.2j)))
        rep = S.potts_projection_check(eta, 0.4, cnu, KER1, BOX1)
        assert rep["method"] == "exact"
        assert rep["z_score"] < 3.0

    def test_signed_measure_2d_exact_route(self):
        ker2 = KernelSpec("bessel_alpha", alpha=0.5, dim=2, m0=2.0,
                          truncation_radius=1.5)
        reg2 = Region((0.0, 0.0), (2.0, 2.0))
        eta2 = MarkedConfiguration(np.array([[0.7, 0.8], [1.3, 1.1]]),
                                   np.array([1.0, -1.0]))
        signed = InteractionMeasure(((1.0, -0.5), (-1.0, -0.5)))
        assert not signed.is_probability
        rep = S.potts_projection_check(eta2, 0.3, signed, ker2, reg2)
        assert rep["method"] == "exact"
        assert rep["z_score"] < 3.0

    def test_negative_beta_rejected(self):
        eta = MarkedConfiguration(np.array([[0.9]]), np.array([1.0]))
        with pytest.raises(ValueError):
            S.potts_projection_check(eta, -0.1, NU, KER1, BOX1)


# ---------------------------------------------------------------------------
# moments via set partitions of the profile index set
# ---------------------------------------------------------------------------

class TestMomentsFromRho:
    F1 = BumpProfile("ball", 1, 0.5, height=1.0, center=(0.8,))
    F2 = BumpProfile("ball", 1, 0.4, height=1.0, center=(1.0,))
    BIASED = ChargeDistribution(((1.0, 0.7), (2.0, 0.3)))
    Z = 1.3

    def test_partition_count(self):
        assert len(list(S.set_partitions([1, 2, 3, 4]))) == 15   # Bell(4)

    def test_symmetric_first_moment_vanishes(self):
        val, _ = S.moments_from_rho(lambda c: 1.0, [self.F1], RADEMACHER,
                                    self.Z)
        assert abs(val) < 1e-10

    def test_first_moment_campbell(self):
        val, err = S.moments_from_rho(lambda c: 1.0, [self.F1], self.BIASED,
                                      self.Z)
        campbell = self.Z * self.BIASED.mean * self.F1.l1_norm
        assert abs(val - campbell) < 1e-8
        assert err < 1e-8

    def test_second_moment_campbell(self):
        val, _ = S.moments_from_rho(lambda c: 1.0, [self.F1, self.F2],
                                    self.BIASED, self.Z)
        overlap = min(1.3, 1.4) - max(0.3, 0.6)
        expect = (self.Z ** 2 * self.BIASED.mean ** 2
                  * self.F1.l1_norm * self.F2.l1_norm
                  + self.Z * self.BIASED.variance * overlap)
        assert abs(val - expect) < 1e-8

    def test_third_moment_campbell(self):
        val, _ = S.moments_from_rho(lambda c: 1.0, [self.F1] * 3, self.BIASED,
                                    self.Z)
        m1 = self.BIASED.mean
        m2 = self.BIASED.variance
        m3 = float(np.dot(self.BIASED.weights, self.BIASED.values ** 3))
        width = self.F1.l1_norm   # indicator: every power integrates the same
        expect = ((self.Z * m1 * width) ** 3
                  + 3.0 * (self.Z * m1 * width) * (self.Z * m2 * width)
                  + self.Z * m3 * width)
        assert abs(val - expect) < 1e-8

    def test_disjoint_profiles_drop_merged_blocks(self):
        far = BumpProfile("ball", 1, 0.2, height=1.0, center=(5.0,))
        val, _ = S.moments_from_rho(lambda c: 1.0, [self.F1, far],
                                    self.BIASED, self.Z)
        expect = (self.Z ** 2 * self.BIASED.mean ** 2
                  * self.F1.l1_norm * far.l1_norm)
        assert abs(val - expect) < 1e-8
