"""High-temperature expansions and convergence-domain constants.

The correlation functional of the trigonometric gas is the ratio of two
free-noise expectations; expanding both in beta reduces every coefficient
to cluster integrals of exp(int psi(sum_q alpha_q G(. - x_q))) over box
powers, which are computed here by deterministic panel quadrature (one
point) and replicated scrambled-Sobol integration (two and three points).
The module also evaluates the constants whose reciprocals bound the
convergence domain, the projection identity that turns the trigonometric
weight into an average over an auxiliary marked Poisson process, and the
set-partition formula expressing moments through the correlation
functional.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .ensembles import (
    ChargeDistribution,
    InteractionMeasure,
    MarkedConfiguration,
    Region,
    levy_psi,
)
from .kernels import KernelSpec, get_kernel
from .potentials import EnergyDensity, potential_U
from .quadrature import NodeMesh, radial_integral
from .streams import stream

__all__ = [
    "ConvergenceDomain",
    "TruncatedSeries",
    "compute_C1",
    "compute_C2",
    "convergence_domain",
    "ht_series_rho",
    "potts_projection_check",
    "moments_from_rho",
    "set_partitions",
]


# ---------------------------------------------------------------------------
# convergence-domain constants
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ConvergenceDomain:
    """Constants C1, C2 and the expansion radii 1/(e C) they certify."""

    C1: float
    C2: float

    def __post_init__(self):
        if self.C1 < 0.0 or self.C2 < 0.0:
            raise ValueError("constants must be nonnegative")

    @property
    def z_radius(self) -> float:
        return math.inf if self.C1 == 0.0 else 1.0 / (math.e * self.C1)

    @property
    def beta_radius(self) -> float:
        return math.inf if self.C2 == 0.0 else 1.0 / (math.e * self.C2)


def _phase_mismatch_integral(ker, product: float, tol: float) -> float:
    """integral over R^d of |e^{i p G(y)} - 1| dy  =  int 2|sin(p G/2)|.

    Only the combination p = s * alpha enters, and the integrand is even
    in p.  The integral lives on the truncation ball of the kernel.
    """
    p = abs(float(product))
    if p == 0.0:
        return 0.0
    res = radial_integral(
        lambda rho: 2.0 * np.abs(np.sin(0.5 * p * ker(rho))),
        ker.truncation_radius,
        ker.dim,
        tol=tol,
    )
    return float(res.require())


def compute_C1(kernel: KernelSpec, r: ChargeDistribution,
               nu: InteractionMeasure, *, tol: float = 1e-9) -> float:
    """sup over charges s of int int |e^{i s a G(y)} - 1| d|nu|(a) dy."""
    ker = get_kernel(kernel)
    cache: dict = {}

    def J(p):
        key = round(abs(p), 14)
        if key not in cache:
            cache[key] = _phase_mismatch_integral(ker, p, tol)
        return cache[key]

    best = 0.0
    for s in r.values:
        total = sum(
            abs(w) * J(s * a) for a, w in zip(nu.alphas, nu.weights)
        )
        best = max(best, total)
    return best


def compute_C2(kernel: KernelSpec, r: ChargeDistribution,
               nu: InteractionMeasure, *, tol: float = 1e-9) -> float:
    """sup over marks alpha of int int |e^{i s a G(y)} - 1| dr(s) dy."""
    ker = get_kernel(kernel)
    cache: dict = {}

    def J(p):
        key = round(abs(p), 14)
        if key not in cache:
            cache[key] = _phase_mismatch_integral(ker, p, tol)
        return cache[key]

    best = 0.0
    for a in nu.alphas:
        total = sum(w * J(s * a) for s, w in zip(r.values, r.weights))
        best = max(best, total)
    return best


def convergence_domain(kernel: KernelSpec, r: ChargeDistribution,
                       nu: InteractionMeasure, *,
                       tol: float = 1e-9) -> ConvergenceDomain:
    return ConvergenceDomain(
        compute_C1(kernel, r, nu, tol=tol),
        compute_C2(kernel, r, nu, tol=tol),
    )


# ---------------------------------------------------------------------------
# truncated power series with per-coefficient error estimates
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TruncatedSeries:
    """Power series in beta up to a fixed order, with coefficient errors."""

    coefficients: tuple
    errors: tuple

    def __post_init__(self):
        coeffs = tuple(complex(c) for c in self.coefficients)
        errs = tuple(float(e) for e in self.errors)
        if len(coeffs) != len(errs):
            raise ValueError("one error estimate per coefficient")
        if not coeffs:
            raise ValueError("series needs at least the constant term")
        object.__setattr__(self, "coefficients", coeffs)
        object.__setattr__(self, "errors", errs)

    @property
    def order(self) -> int:
        return len(self.coefficients) - 1

    def __call__(self, beta: float) -> complex:
        out = 0.0 + 0.0j
        for c in reversed(self.coefficients):
            out = out * beta + c
        return out

    def error_at(self, beta: float) -> float:
        b = abs(beta)
        return float(sum(e * b**k for k, e in enumerate(self.errors)))

    def __mul__(self, other: "TruncatedSeries") -> "TruncatedSeries":
        order = min(self.order, other.order)
        coeffs, errs = [], []
        for n in range(order + 1):
            c = sum(self.coefficients[k] * other.coefficients[n - k]
                    for k in range(n + 1))
            e = sum(
                abs(self.coefficients[k]) * other.errors[n - k]
                + self.errors[k] * abs(other.coefficients[n - k])
                for k in range(n + 1)
            )
            coeffs.append(c)
            errs.append(e)
        return TruncatedSeries(tuple(coeffs), tuple(errs))

    def divide(self, denominator: "TruncatedSeries") -> "TruncatedSeries":
        """Cauchy inversion: the series of self / denominator."""
        b0 = denominator.coefficients[0]
        if b0 == 0:
            raise ZeroDivisionError("denominator series starts at zero")
        order = min(self.order, denominator.order)
        coeffs, errs = [], []
        for n in range(order + 1):
            acc = self.coefficients[n]
            err = self.errors[n]
            for k in range(1, n + 1):
                acc -= denominator.coefficients[k] * coeffs[n - k]
                err += (abs(denominator.coefficients[k]) * errs[n - k]
                        + denominator.errors[k] * abs(coeffs[n - k]))
            coeffs.append(acc / b0)
            errs.append(err / abs(b0))
        return TruncatedSeries(tuple(coeffs), tuple(errs))


# ---------------------------------------------------------------------------
# the beta-expansion of the correlation functional
# ---------------------------------------------------------------------------


def _probe_field_fn(eta: MarkedConfiguration, ker):
    def f(pts: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        out = np.zeros(pts.shape[0])
        for y, s in zip(eta.positions, eta.charges):
            out += s * ker(np.linalg.norm(pts - y, axis=1))
        return out

    return f


def _cluster_pair(pts, k, mesh, ker, r, z, nu, f_eta):
    """For outer points pts (N, k*d): returns (with-probe, without-probe)
    values of the k-point cluster integrand

        sum_{alpha combos} prod w_q e^{i alpha_q f_eta(x_q)}
            * exp( int_Lambda psi_z(sum_q alpha_q G(u - x_q)) du ).
    """
    pts = np.asarray(pts, dtype=float)
    n = pts.shape[0]
    d = mesh.dim
    x = pts.reshape(n, k, d)
    diff = mesh.nodes[None, None, :, :] - x[:, :, None, :]
    dist = np.sqrt(np.sum(diff * diff, axis=3))
    K = ker(dist.ravel()).reshape(n, k, mesh.size)
    phases = f_eta(x.reshape(-1, d)).reshape(n, k)
    alphas = nu.alphas
    weights = nu.weights
    with_eta = np.zeros(n, dtype=complex)
    without = np.zeros(n, dtype=complex)
    for combo in itertools.product(range(len(alphas)), repeat=k):
        a = alphas[list(combo)]
        w = complex(np.prod(weights[list(combo)]))
        field = np.einsum("q,nqm->nm", a, K)
        psi = levy_psi(r, z, field.ravel()).reshape(n, mesh.size)
        core = w * np.exp(psi @ mesh.weights)
        without += core
        with_eta += core * np.exp(1j * (phases @ a))
    return with_eta, without


def _one_point_integrals(mesh, ker, r, z, nu, f_eta):
    """Deterministic panel quadrature of the one-point cluster integral,
    with and without the probe phase."""
    nodes = mesh.nodes
    out_eta = 0.0 + 0.0j
    out_free = 0.0 + 0.0j
    phases = f_eta(nodes)
    chunk = 512
    for start in range(0, mesh.size, chunk):
        sl = slice(start, min(start + chunk, mesh.size))
        diff = mesh.nodes[None, :, :] - nodes[sl][:, None, :]
        dist = np.sqrt(np.sum(diff * diff, axis=2))
        K = ker(dist.ravel()).reshape(dist.shape)
        for a, w in zip(nu.alphas, nu.weights):
            psi = levy_psi(r, z, (a * K).ravel()).reshape(K.shape)
            core = w * np.exp(psi @ mesh.weights)
            out_free += np.dot(mesh.weights[sl], core)
            out_eta += np.dot(mesh.weights[sl],
                              core * np.exp(1j * a * phases[sl]))
    return out_eta, out_free


def ht_series_rho(eta: MarkedConfiguration, params, order: int = 2, *,
                  points: int | None = None, reps: int = 8,
                  mesh_cell: float | None = None) -> TruncatedSeries:
    """Series in beta of the correlation functional at a fixed probe.

    Numerator and denominator coefficients (-1)^n/n! E[U(eta+F)^n] and
    (-1)^n/n! E[U(F)^n] over the free gas on the box reduce, after the
    charge-mark sums, to the cluster integrals handled above; the ratio
    series comes out by Cauchy division.  Coefficient error estimates
    combine panel-refinement differences (one-point) with replicated-Sobol
    spreads (higher clusters).
    """
    if params.density.variant != "trigonometric":
        raise ValueError("the expansion needs a trigonometric density")
    if params.region.periodic:
        raise ValueError("series expansion supports open boxes only")
    if order < 0 or order > 3:
        raise ValueError("supported orders are 0..3")
    from scipy.stats import qmc

    nu = params.density.nu
    region = params.region
    r, z = params.r, params.z
    ker = get_kernel(params.kernel)
    cell = mesh_cell if mesh_cell is not None else ker.scale / 3.0
    mesh = NodeMesh(region.lo, region.hi, cell)
    f_eta = _probe_field_fn(eta, ker)
    vol = region.volume
    m_nu = nu.total_mass

    # cluster integrals I_k with and without the probe, k = 0..order
    I_eta = [1.0 + 0.0j]
    I_free = [1.0 + 0.0j]
    I_err = [0.0]
    if order >= 1:
        v_eta, v_free = _one_point_integrals(mesh, ker, r, z, nu, f_eta)
        coarse = NodeMesh(region.lo, region.hi, 2.0 * cell)
        c_eta, c_free = _one_point_integrals(coarse, ker, r, z, nu, f_eta)
        I_eta.append(v_eta)
        I_free.append(v_free)
        I_err.append(max(abs(v_eta - c_eta), abs(v_free - c_free)))
    lo = np.asarray(region.lo, dtype=float)
    hi = np.asarray(region.hi, dtype=float)
    for k in range(2, order + 1):
        n_pts = points if points is not None else (2**12 if k == 2 else 2**11)
        m = max(1, int(round(math.log2(max(2, n_pts // reps)))))
        vals_eta, vals_free = [], []
        for rep in range(reps):
            eng = qmc.Sobol(k * region.dim, scramble=True,
                            seed=params.seed + 7919 * (31 * k + rep))
            u = eng.random_base2(m)
            pts = np.tile(lo, k) + u * (np.tile(hi, k) - np.tile(lo, k))
            we, wo = _cluster_pair(pts, k, mesh, ker, r, z, nu, f_eta)
            vals_eta.append(np.mean(we))
            vals_free.append(np.mean(wo))
        vals_eta = np.asarray(vals_eta)
        vals_free = np.asarray(vals_free)
        I_eta.append(complex(vals_eta.mean()) * vol**k)
        I_free.append(complex(vals_free.mean()) * vol**k)
        spread = max(np.abs(vals_eta - vals_eta.mean()).std(ddof=1),
                     np.abs(vals_free - vals_free.mean()).std(ddof=1))
        I_err.append(float(spread / math.sqrt(reps)) * vol**k)

    # E[U^n] = sum_k C(n,k) (m_nu vol)^{n-k} (-1)^k I_k
    def moment(n, table):
        return sum(
            math.comb(n, k) * (m_nu * vol) ** (n - k) * (-1) ** k * table[k]
            for k in range(n + 1)
        )

    def moment_err(n):
        return sum(
            math.comb(n, k) * abs(m_nu * vol) ** (n - k) * I_err[k]
            for k in range(n + 1)
        )

    num_c, num_e, den_c, den_e = [], [], [], []
    for n in range(order + 1):
        scale = (-1.0) ** n / math.factorial(n)
        num_c.append(scale * moment(n, I_eta))
        den_c.append(scale * moment(n, I_free))
        num_e.append(moment_err(n) / math.factorial(n))
        den_e.append(moment_err(n) / math.factorial(n))
    numerator = TruncatedSeries(tuple(num_c), tuple(num_e))
    denominator = TruncatedSeries(tuple(den_c), tuple(den_e))
    return numerator.divide(denominator)


# ---------------------------------------------------------------------------
# projection identity onto the auxiliary two-species gas
# ---------------------------------------------------------------------------


def potts_projection_check(eta: MarkedConfiguration, beta: float,
                           nu: InteractionMeasure, kernel: KernelSpec,
                           region: Region, budget: int = 20_000, *,
                           seed: int = 0, tol: float = 1e-7) -> dict:
    """Check e^{-beta U(eta)} against the marked-Poisson average of
    e^{i <marks, field-of-eta at positions>}.

    The auxiliary process has intensity beta * |Lambda| * nu-mass with
    positions uniform in the box and marks drawn from nu; probability
    measures are sampled, general complex nu falls back to the exact
    exponential formula (the mean of the phase average in closed form).
    """
    if beta < 0.0:
        raise ValueError("the auxiliary intensity needs beta >= 0")
    density = EnergyDensity.trigonometric(nu)
    ker = get_kernel(kernel)
    if len(eta):
        u = potential_U(eta, kernel, density, cutoff=region, tol=tol)
        lhs = math.exp(-beta * u.value)
        lhs_err = beta * lhs * (u.error + tol)
    else:
        lhs, lhs_err = 1.0, 0.0
    f_eta = _probe_field_fn(eta, ker)

    if nu.is_probability and budget > 0 and beta > 0.0:
        rng = stream(seed, 23)
        lam = beta * region.volume * nu.total_mass
        counts = rng.poisson(lam, size=budget)
        total = int(counts.sum())
        pos = region.sample_uniform(rng, total)
        marks = nu.sample(rng, total)
        u_flat = marks * f_eta(pos)
        splits = np.cumsum(counts)[:-1]
        u_sum = np.array([seg.sum() for seg in np.split(u_flat, splits)])
        vals = np.exp(1j * u_sum)
        rhs = complex(vals.mean())
        se = complex(vals.real.std(ddof=1), vals.imag.std(ddof=1)) / math.sqrt(
            budget
        )
        denom = math.hypot(se.real, se.imag) + lhs_err
        z_score = abs(rhs - lhs) / denom if denom > 0 else 0.0
        return {"lhs": lhs, "rhs": rhs, "stderr": se, "z_score": z_score,
                "n_samples": budget, "method": "mc"}

    # exact route: mean phase = exp( beta int sum_a w_a (e^{i a f_eta} - 1) )
    def mesh_exponent(cell: float) -> complex:
        mesh = NodeMesh(region.lo, region.hi, cell)
        phases = f_eta(mesh.nodes)
        out = 0.0 + 0.0j
        for a, w in zip(nu.alphas, nu.weights):
            out += w * mesh.integrate_complex(np.exp(1j * a * phases) - 1.0)
        return out

    # the probe field has kinks at the probe points, so the panel rule is
    # second order at best; a half-cell refinement supplies the error bar
    exp_fine = mesh_exponent(ker.scale / 8.0)
    exp_coarse = mesh_exponent(ker.scale / 4.0)
    rhs = complex(np.exp(beta * exp_fine))
    exp_err = abs(exp_fine - exp_coarse)
    se = abs(rhs) * beta * exp_err
    denom = lhs_err + se + 1e-14
    z_score = abs(rhs - lhs) / denom
    return {"lhs": lhs, "rhs": rhs, "stderr": se, "z_score": z_score,
            "n_samples": 0, "method": "exact"}


# ---------------------------------------------------------------------------
# moments through the correlation functional (set partitions)
# ---------------------------------------------------------------------------


def set_partitions(items):
    """All partitions of a finite collection into nonempty blocks."""
    items = list(items)
    if not items:
        yield []
        return
    first, rest = items[0], items[1:]
    for part in set_partitions(rest):
        for i in range(len(part)):
            yield part[:i] + [[first] + part[i]] + part[i + 1:]
        yield [[first]] + part


def _block_box(profiles):
    lo = np.max([np.asarray(f.center) - f.radius for f in profiles], axis=0)
    hi = np.min([np.asarray(f.center) + f.radius for f in profiles], axis=0)
    return lo, hi


def moments_from_rho(rho, profiles, r: ChargeDistribution, z: float, *,
                     points: int = 2**10, reps: int = 8, seed: int = 0):
    """E[prod_j <F, f_j>] from a correlation-functional evaluator.

    Sums over set partitions of the profile list; each partition with j
    blocks contributes z^j times the integral over block positions and
    charges of rho at the j-point probe, weighted by s_q^{#block} and the
    product of the block's profiles at the shared position.  Returns
    (value, error) with a replicated-Sobol error estimate.
    """
    profiles = list(profiles)
    l = len(profiles)
    if l == 0:
        raise ValueError("need at least one profile")
    if l > 4:
        raise ValueError("moment order above 4 is not supported")
    from scipy.stats import qmc

    d = profiles[0].dim
    atoms_s = r.values
    atoms_w = r.weights
    total = 0.0 + 0.0j
    err = 0.0
    for pidx, partition in enumerate(set_partitions(range(l))):
        j = len(partition)
        boxes = [_block_box([profiles[p] for p in block])
                 for block in partition]
        if any(np.any(b_lo >= b_hi) for b_lo, b_hi in boxes):
            continue
        lo = np.concatenate([b[0] for b in boxes])
        hi = np.concatenate([b[1] for b in boxes])
        vol = float(np.prod(hi - lo))
        m = max(1, int(round(math.log2(max(2, points // reps)))))
        rep_vals = []
        for rep in range(reps):
            eng = qmc.Sobol(j * d, scramble=True,
                            seed=seed + 104729 * (17 * pidx + rep))
            u = eng.random_base2(m)
            pts = (lo + u * (hi - lo)).reshape(-1, j, d)
            fprod = np.ones(pts.shape[0])
            for q, block in enumerate(partition):
                for p in block:
                    fprod *= profiles[p](pts[:, q, :])
            acc = np.zeros(pts.shape[0], dtype=complex)
            for combo in itertools.product(range(len(atoms_s)), repeat=j):
                s = atoms_s[list(combo)]
                w = float(np.prod(atoms_w[list(combo)]))
                power = float(
                    np.prod([s[q] ** len(partition[q]) for q in range(j)])
                )
                rho_vals = np.array([
                    rho(MarkedConfiguration(pts[i], s)) for i in range(len(pts))
                ], dtype=complex)
                acc += w * power * rho_vals
            rep_vals.append(np.mean(acc * fprod))
        rep_vals = np.asarray(rep_vals)
        total += z**j * vol * complex(rep_vals.mean())
        err += (z**j * vol
                * float(np.abs(rep_vals - rep_vals.mean()).std(ddof=1))
                / math.sqrt(reps))
    if abs(total.imag) < 1e-14 * max(1.0, abs(total.real)):
        return float(total.real), err
    return complex(total), err
