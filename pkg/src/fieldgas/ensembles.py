"""Charge distributions, marked configurations, and free-noise functionals.

The free gas is a marked Poisson point process: particle count Poisson with
mean ``z |Lambda|``, positions uniform, charges drawn from a distribution on
``[-c, c]`` with no mass at zero.  Superposing a kernel over such a
configuration produces the package's random static fields, whose
characteristic and Laplace functionals have exact integral expressions that
everything downstream is checked against.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .kernels import KernelSpec, get_kernel
from .quadrature import (
    QuadResult,
    adaptive_box_integral,
    outside_all_balls_predicate,
    radial_integral,
    union_bounding_box,
)

_ATOL = 1e-9


# ---------------------------------------------------------------------------
# charge distribution (the mark law of the free gas)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ChargeDistribution:
    """Probability distribution of particle charges, as weighted atoms.

    Continuous laws enter through :meth:`from_density`, which replaces the
    density by Gauss-Legendre nodes so every downstream integral over
    charges becomes a finite sum (exact in the atomic case).
    """

    atoms: tuple

    def __post_init__(self):
        if not self.atoms:
            raise ValueError("charge distribution needs at least one atom")
        clean = []
        total = 0.0
        for s, w in self.atoms:
            s, w = float(s), float(w)
            if w < 0.0:
                raise ValueError("negative charge weight")
            if w == 0.0:
                continue
            if s == 0.0:
                raise ValueError("charge distribution must not charge zero")
            clean.append((s, w))
            total += w
        if abs(total - 1.0) > 1e-8:
            raise ValueError(f"charge weights sum to {total}, expected 1")
        object.__setattr__(
            self, "atoms", tuple((s, w / total) for s, w in clean)
        )

    @classmethod
    def rademacher(cls, c: float = 1.0) -> "ChargeDistribution":
        return cls(((c, 0.5), (-c, 0.5)))

    @classmethod
    def from_density(cls, density, c: float, n: int = 64) -> "ChargeDistribution":
        """Discretize a density on [-c, c] by an (even) Gauss rule."""
        if n % 2:
            n += 1  # even count keeps the nodes away from zero
        x, w = np.polynomial.legendre.leggauss(n)
        s = c * x
        weights = c * w * np.asarray(density(s), dtype=float)
        if np.any(weights < -1e-12):
            raise ValueError("density must be nonnegative")
        weights = np.maximum(weights, 0.0)
        weights /= weights.sum()
        return cls(tuple(zip(s.tolist(), weights.tolist())))

    # -- derived constants --------------------------------------------------

    @property
    def values(self) -> np.ndarray:
        return np.array([s for s, _ in self.atoms])

    @property
    def weights(self) -> np.ndarray:
        return np.array([w for _, w in self.atoms])

    @property
    def bound(self) -> float:
        """The essential supremum c of |s|."""
        return float(np.max(np.abs(self.values)))

    @property
    def mean(self) -> float:
        return float(np.dot(self.weights, self.values))

    @property
    def abs_mean(self) -> float:
        return float(np.dot(self.weights, np.abs(self.values)))

    @property
    def variance(self) -> float:
        """The raw second moment: integral of s^2 dr."""
        return float(np.dot(self.weights, self.values**2))

    @property
    def is_symmetric(self) -> bool:
        table = {}
        for s, w in self.atoms:
            table[round(s, 12)] = table.get(round(s, 12), 0.0) + w
        return all(
            abs(w - table.get(round(-s, 12), 0.0)) < 1e-9 for s, w in table.items()
        )

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        if size == 0:
            return np.empty(0)
        idx = rng.choice(len(self.atoms), size=size, p=self.weights)
        return self.values[idx]


def levy_psi(r: ChargeDistribution, z: float, t):
    """The exponent psi(t) = z * integral (e^{ist} - 1) dr(s).

    Evaluated as ``z * sum w [ -2 sin^2(st/2) + i sin(st) ]`` which is exact
    and avoids cancellation near t = 0.  Vectorized over t; the imaginary
    part vanishes identically for symmetric r.
    """
    t = np.asarray(t, dtype=float)
    single = t.ndim == 0
    t = np.atleast_1d(t)
    s = r.values[:, None]
    w = r.weights[:, None]
    st = s * t[None, :]
    real = -2.0 * np.sum(w * np.sin(0.5 * st) ** 2, axis=0)
    imag = np.sum(w * np.sin(st), axis=0)
    out = z * (real + 1j * imag)
    if r.is_symmetric:
        out = out.real + 0.0j
    return complex(out[0]) if single else out


# ---------------------------------------------------------------------------
# interaction measure (defines trigonometric energy densities)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class InteractionMeasure:
    """Finite complex measure on charges, conjugate-symmetric.

    Conjugate symmetry -- every atom (a, w) is matched by (-a, conj(w)) --
    makes the induced energy density v(t) = integral (1 - e^{iat}) dnu real
    for real t.
    """

    atoms: tuple

    def __post_init__(self):
        clean = tuple((float(a), complex(w)) for a, w in self.atoms)
        object.__setattr__(self, "atoms", clean)
        table = {}
        for a, w in clean:
            table[round(a, 12)] = table.get(round(a, 12), 0.0) + w
        for a, w in table.items():
            mirror = table.get(round(-a, 12))
            if mirror is None or abs(np.conj(mirror) - w) > 1e-9 * max(1.0, abs(w)):
                raise ValueError("interaction measure must be conjugate-symmetric")

    @classmethod
    def rademacher(cls, b: float = 1.0, mass: float = 1.0) -> "InteractionMeasure":
        return cls(((b, 0.5 * mass), (-b, 0.5 * mass)))

    @property
    def alphas(self) -> np.ndarray:
        return np.array([a for a, _ in self.atoms])

    @property
    def weights(self) -> np.ndarray:
        return np.array([w for _, w in self.atoms], dtype=complex)

    @property
    def total_variation(self) -> float:
        return float(np.sum(np.abs(self.weights)))

    @property
    def total_mass(self) -> float:
        """nu(R); real by conjugate symmetry."""
        m = complex(np.sum(self.weights))
        return m.real

    @property
    def slope_bound(self) -> float:
        """b = integral |alpha| d|nu|, the Lipschitz constant of v."""
        return float(np.sum(np.abs(self.alphas) * np.abs(self.weights)))

    @property
    def bound(self) -> float:
        """Support bound c' = max |alpha|."""
        return float(np.max(np.abs(self.alphas)))

    @property
    def is_probability(self) -> bool:
        w = self.weights
        return bool(
            np.all(np.abs(w.imag) < 1e-12)
            and np.all(w.real >= -1e-12)
            and abs(np.sum(w.real) - 1.0) < 1e-9
        )

    def density_value(self, t):
        """v(t) = integral (1 - e^{i alpha t}) dnu(alpha), real for real t."""
        t = np.asarray(t, dtype=float)
        single = t.ndim == 0
        t = np.atleast_1d(t)
        a = self.alphas[:, None]
        w = self.weights[:, None]
        at = a * t[None, :]
        val = np.sum(w * (2.0 * np.sin(0.5 * at) ** 2 - 1j * np.sin(at)), axis=0)
        out = val.real
        return float(out[0]) if single else out

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        if not self.is_probability:
            raise ValueError("can only sample a probability interaction measure")
        if size == 0:
            return np.empty(0)
        p = np.maximum(self.weights.real, 0.0)
        p /= p.sum()
        idx = rng.choice(len(self.atoms), size=size, p=p)
        return self.alphas[idx]


# ---------------------------------------------------------------------------
# marked configurations and regions
# ---------------------------------------------------------------------------


class MarkedConfiguration:
    """A finite set of (position, charge) pairs in R^d."""

    __slots__ = ("positions", "charges", "dim")

    def __init__(self, positions, charges, dim: int | None = None):
        positions = np.array(positions, dtype=float, copy=True)
        charges = np.array(charges, dtype=float, copy=True).ravel()
        if positions.size == 0:
            if dim is None:
                raise ValueError("empty configuration needs an explicit dim")
            positions = positions.reshape(0, dim)
        positions = np.atleast_2d(positions)
        if positions.shape[0] != charges.shape[0]:
            raise ValueError("positions/charges length mismatch")
        if dim is not None and positions.shape[1] != dim:
            raise ValueError("dimension mismatch")
        if positions.shape[0] > 1:
            # positions must be pairwise distinct
            order = np.lexsort(positions.T)
            diffs = np.diff(positions[order], axis=0)
            if np.any(np.all(diffs == 0.0, axis=1)):
                raise ValueError("coincident particle positions")
        if not (np.all(np.isfinite(positions)) and np.all(np.isfinite(charges))):
            raise ValueError("non-finite configuration data")
        positions.setflags(write=False)
        charges.setflags(write=False)
        self.positions = positions
        self.charges = charges
        self.dim = positions.shape[1]

    @classmethod
    def empty(cls, dim: int) -> "MarkedConfiguration":
        return cls(np.empty((0, dim)), np.empty(0), dim)

    def __len__(self) -> int:
        return self.positions.shape[0]

    def __repr__(self) -> str:
        return f"MarkedConfiguration(n={len(self)}, dim={self.dim})"

    def union(self, other: "MarkedConfiguration") -> "MarkedConfiguration":
        if other.dim != self.dim:
            raise ValueError("dimension mismatch")
        return MarkedConfiguration(
            np.vstack([self.positions, other.positions]),
            np.concatenate([self.charges, other.charges]),
            self.dim,
        )

    def restrict(self, region: "Region") -> "MarkedConfiguration":
        mask = region.contains(self.positions)
        return MarkedConfiguration(self.positions[mask], self.charges[mask], self.dim)

    def negate(self) -> "MarkedConfiguration":
        return MarkedConfiguration(self.positions, -self.charges, self.dim)

    def scale_charges(self, factor: float) -> "MarkedConfiguration":
        return MarkedConfiguration(self.positions, factor * self.charges, self.dim)

    def to_rows(self):
        """CSV-style rows (x_1, ..., x_d, s)."""
        return np.hstack([self.positions, self.charges[:, None]])


@dataclass(frozen=True)
class Region:
    """An axis-aligned box, optionally with periodic boundary identification."""

    lo: tuple
    hi: tuple
    periodic: bool = False

    def __post_init__(self):
        lo = tuple(float(v) for v in np.atleast_1d(np.asarray(self.lo, dtype=float)))
        hi = tuple(float(v) for v in np.atleast_1d(np.asarray(self.hi, dtype=float)))
        if len(lo) != len(hi) or any(h <= l for l, h in zip(lo, hi)):
            raise ValueError("region must have positive extent in every axis")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @classmethod
    def cube(cls, side: float, dim: int, periodic: bool = False) -> "Region":
        h = 0.5 * side
        return cls((-h,) * dim, (h,) * dim, periodic)

    @property
    def dim(self) -> int:
        return len(self.lo)

    @property
    def volume(self) -> float:
        return float(np.prod(np.asarray(self.hi) - np.asarray(self.lo)))

    @property
    def sides(self) -> np.ndarray:
        return np.asarray(self.hi) - np.asarray(self.lo)

    def contains(self, points) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        lo = np.asarray(self.lo)
        hi = np.asarray(self.hi)
        return np.all((pts >= lo) & (pts <= hi), axis=1)

    def sample_uniform(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return rng.uniform(self.lo, self.hi, size=(n, self.dim))

    def expand(self, margin: float) -> "Region":
        lo = tuple(v - margin for v in self.lo)
        hi = tuple(v + margin for v in self.hi)
        return Region(lo, hi, self.periodic)

    def image_shifts(self, radius: float) -> np.ndarray:
        """Lattice translations needed to cover interactions up to ``radius``.

        For open boundaries this is just the zero shift; periodic regions
        include every image whose box can reach the base box within radius.
        """
        if not self.periodic:
            return np.zeros((1, self.dim))
        sides = self.sides
        reach = [int(math.ceil(radius / s)) for s in sides]
        grids = np.meshgrid(
            *[np.arange(-k, k + 1) * s for k, s in zip(reach, sides)], indexing="ij"
        )
        return np.stack([g.ravel() for g in grids], axis=-1)


def sample_free(
    region: Region,
    z: float,
    r: ChargeDistribution,
    rng: np.random.Generator,
) -> MarkedConfiguration:
    """One draw of the free marked Poisson gas on the region.

    Count Poisson(z |Lambda|), positions i.i.d. uniform, charges i.i.d. r.
    """
    if z < 0.0:
        raise ValueError("activity must be nonnegative")
    n = int(rng.poisson(z * region.volume))
    pts = region.sample_uniform(rng, n)
    charges = r.sample(rng, n)
    return MarkedConfiguration(pts, charges, region.dim)


# ---------------------------------------------------------------------------
# exact free-noise functionals
# ---------------------------------------------------------------------------


def probe_field_evaluator(kernel: KernelSpec, probe: MarkedConfiguration):
    """Vectorized x -> sum_j alpha_j G(x - y_j) for a fixed finite probe."""
    ker = get_kernel(kernel)

    def field(pts: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        out = np.zeros(pts.shape[0])
        for y, s in zip(probe.positions, probe.charges):
            rho = np.linalg.norm(pts - y, axis=1)
            out += s * ker(rho)
        return out

    return field


def _smoothstep(u):
    """Quintic 0 -> 1 ramp on [0, 1], C^2 at both ends."""
    t = np.clip(u, 0.0, 1.0)
    return t * t * t * (t * (6.0 * t - 15.0) + 10.0)


def _sphere_rule(d: int, n_polar: int = 24, n_azimuth: int = 48):
    """Nodes on S^{d-1} with weights summing to its surface area."""
    if d == 1:
        return np.array([[-1.0], [1.0]]), np.array([1.0, 1.0])
    if d == 2:
        phi = 2.0 * math.pi * (np.arange(n_azimuth) + 0.5) / n_azimuth
        nodes = np.stack([np.cos(phi), np.sin(phi)], axis=-1)
        w = np.full(n_azimuth, 2.0 * math.pi / n_azimuth)
        return nodes, w
    cth, wth = np.polynomial.legendre.leggauss(n_polar)
    phi = 2.0 * math.pi * (np.arange(n_azimuth) + 0.5) / n_azimuth
    sth = np.sqrt(1.0 - cth**2)
    nodes = np.stack(
        [
            np.outer(sth, np.cos(phi)).ravel(),
            np.outer(sth, np.sin(phi)).ravel(),
            np.repeat(cth, n_azimuth),
        ],
        axis=-1,
    )
    w = np.repeat(wth, n_azimuth) * (2.0 * math.pi / n_azimuth)
    return nodes, w


def _probe_clusters(positions: np.ndarray, cutoff: float):
    """Connected components of the probe under |y_i - y_j| < cutoff."""
    from scipy.sparse import csr_matrix
    from scipy.sparse.csgraph import connected_components
    from scipy.spatial import cKDTree

    n = positions.shape[0]
    pairs = cKDTree(positions).query_pairs(cutoff, output_type="ndarray")
    adj = csr_matrix(
        (np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])), shape=(n, n)
    )
    n_comp, labels = connected_components(adj, directed=False)
    return [np.flatnonzero(labels == k) for k in range(n_comp)]


def _char_exponent_cluster(ker, r, z, probe: MarkedConfiguration, tol: float) -> complex:
    """log C for one cluster of probe points with overlapping supports."""
    from .kernels import sphere_area

    d = probe.dim
    trunc = ker.truncation_radius
    pos = probe.positions
    spec = ker.spec

    if len(probe) == 1:
        # a one-point probe is exactly radial about that point
        area = sphere_area(d)
        s0 = float(probe.charges[0])

        def radial_f(pts):
            rho = pts[:, 0]
            return area * rho ** (d - 1) * levy_psi(r, z, s0 * ker(rho))

        res = adaptive_box_integral(
            radial_f, [0.0], [trunc], tol=tol, q=8,
            sup_bound=lambda a, b: 2.0 * z * area * b[0] ** (d - 1),
            singular_points=[[0.0]],
            singular_size=(0.125 * tol / (4.0 * z * area)) ** (1.0 / d),
            min_depth=3,
        )
        return res.require()

    field = probe_field_evaluator(spec, probe)
    lo, hi = union_bounding_box(pos, trunc)
    # initial cells no coarser than a quarter truncation radius, so the
    # error indicator cannot overlook the support structure
    box_depth = max(
        d, int(math.ceil(math.log2(float(np.max(hi - lo)) / (0.25 * trunc))))
    )
    exponent = 0.0 + 0.0j

    if ker.diverges_at_zero:
        from scipy.spatial.distance import pdist

        min_sep = float(np.min(pdist(pos)))
        R = min(0.45 * min_sep, 0.5 * trunc)
        omega, w_ang = _sphere_rule(d)
        area = float(np.sum(w_ang))
        tol_polar = 0.45 * tol / len(probe)
        # radius below which the certified bound 2 * (2z area rho^{d-1}) * rho
        # is far inside the polar error budget
        rho_star = (0.125 * tol_polar / (4.0 * z * area)) ** (1.0 / d)

        for y in pos:
            def ring(pts, y=y):
                rho = pts[:, 0]
                x = y[None, None, :] + rho[:, None, None] * omega[None, :, :]
                vals = levy_psi(r, z, field(x.reshape(-1, d))).reshape(
                    rho.size, -1
                )
                chi = 1.0 - _smoothstep(2.0 * rho / R - 1.0)
                return rho ** (d - 1) * chi * (vals @ w_ang)

            res = adaptive_box_integral(
                ring, [0.0], [R], tol=tol_polar, q=8,
                sup_bound=lambda a, b: 2.0 * z * area * b[0] ** (d - 1),
                singular_points=[[0.0]], singular_size=rho_star,
                min_depth=3,
            )
            exponent += res.require()

        def outer_integrand(pts):
            out = np.zeros(pts.shape[0], dtype=complex)
            blend = np.ones(pts.shape[0])
            for y in pos:
                rho = np.linalg.norm(pts - y, axis=1)
                blend *= _smoothstep(2.0 * rho / R - 1.0)
            live = blend > 0.0
            if np.any(live):
                out[live] = blend[live] * levy_psi(r, z, field(pts[live]))
            return out

        outside = outside_all_balls_predicate(pos, trunc)

        def skip(a, b):
            if outside(a, b):
                return True
            # cells buried inside a blended-out core contribute nothing:
            # the farthest corner must still be within R/2 of the centre
            far = np.maximum(np.abs(a - pos), np.abs(b - pos))
            return bool(np.any(np.sum(far * far, axis=1) < 0.25 * R * R))

        res = adaptive_box_integral(
            outer_integrand, lo, hi, tol=0.55 * tol, q=6,
            sup_bound=2.0 * z, skip_predicate=skip, min_depth=box_depth,
        )
        exponent += res.require()
    else:
        def integrand(pts):
            return levy_psi(r, z, field(pts))

        skip = outside_all_balls_predicate(pos, trunc)
        res = adaptive_box_integral(
            integrand, lo, hi, tol=tol, q=6,
            sup_bound=2.0 * z, skip_predicate=skip, min_depth=box_depth,
        )
        exponent = res.require()
    return exponent


def char_functional_free(
    kernel: KernelSpec,
    r: ChargeDistribution,
    z: float,
    probe: MarkedConfiguration,
    *,
    tol: float = 1e-9,
) -> complex:
    """Characteristic functional of the free field at a finite probe.

    Returns exp( integral over R^d of psi(sum_j alpha_j G(x - y_j)) dx );
    the integrand vanishes outside the union of truncation balls around the
    probe points, so the functional factorizes exactly over clusters of
    points whose truncation balls overlap, and each cluster is integrated
    over its own bounding box.

    Kernels that diverge at the origin make the integrand oscillate without
    bound near the probe points, which a box subdivision cannot resolve in
    dimension > 1.  Those neighbourhoods are therefore blended out with a
    smooth radial cutoff and integrated in spherical coordinates around each
    point, where the oscillation is one-dimensional and cheap; what remains
    for the box quadrature is smooth.
    """
    if len(probe) == 0:
        return 1.0 + 0.0j
    ker = get_kernel(kernel)
    clusters = _probe_clusters(probe.positions, 2.0 * ker.truncation_radius)
    exponent = 0.0 + 0.0j
    for idx in clusters:
        part = MarkedConfiguration(
            probe.positions[idx], probe.charges[idx], probe.dim
        )
        exponent += _char_exponent_cluster(ker, r, z, part, tol / len(clusters))
    return complex(np.exp(exponent))


@dataclass
class LaplaceResult:
    value: float
    upper_bound: float


def laplace_functional_free(
    f, r: ChargeDistribution, z: float, *, tol: float = 1e-10
) -> LaplaceResult:
    """E[e^{<|F|, f>}] for a nonnegative compactly supported profile f.

    Exact value exp( z * integral (e^{|s| f(y)} - 1) dr dy ) together with
    the closed-form upper bound exp( z c e^{c |f|_inf} |f|_1 ), from the
    pointwise estimate e^x - 1 <= x e^x.
    """
    if f.height < 0.0:
        raise ValueError("profile must be nonnegative")
    c = r.bound
    exponent = 0.0
    for s, w in r.atoms:
        res = radial_integral(
            lambda rho, s=s: np.expm1(abs(s) * f.radial(rho)),
            f.radius,
            f.dim,
            tol=tol,
            rtol=tol,
        )
        exponent += w * float(res.value)
    value = math.exp(z * exponent)
    sup = f.sup_norm
    bound = math.exp(z * c * math.exp(c * sup) * f.l1_norm)
    return LaplaceResult(value, bound)
