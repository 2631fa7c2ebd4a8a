"""Energy densities v and configuration potentials U(eta) = int v(G*eta) dx.

The potential of a finite charge configuration is the integral of a pointwise
energy density applied to the superposed field.  Supported densities:

* ``trigonometric`` - v(t) = int (1 - e^{i alpha t}) dnu(alpha), bounded and
  Lipschitz with slope b = int |alpha| d|nu|;
* ``threshold`` - the {0,1} indicator that the field passes a level test;
* ``hard_core`` - 0 below an integer overlap count l, +infinity at or above
  it, which with an indicator kernel is the hard-sphere gas;
* ``quadratic_renormalized`` - the self-energy-subtracted square, whose
  potential collapses to the pair sum over Phi = G*G;
* ``lipschitz_custom`` - any user evaluator with declared growth constants.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree
from scipy.spatial.distance import pdist

from .ensembles import (
    ChargeDistribution,
    InteractionMeasure,
    MarkedConfiguration,
    Region,
    _probe_clusters,
    probe_field_evaluator,
)
from .kernels import (
    Kernel,
    KernelSpec,
    PairPotential,
    get_kernel,
    pair_potential_object,
)
from .quadrature import (
    QuadratureError,
    adaptive_box_integral,
    outside_all_balls_predicate,
    union_bounding_box,
)

_VARIANTS = (
    "trigonometric",
    "threshold",
    "hard_core",
    "quadratic_renormalized",
    "lipschitz_custom",
)
_THRESHOLD_MODES = ("above", "abs_above", "band")


@dataclass(frozen=True)
class EnergyDensity:
    """A pointwise energy density with declared growth constants.

    ``growth_a`` and ``growth_b`` satisfy |v(t)| <= growth_a + growth_b*|t|
    where the variant admits such a bound; ``sup`` is a finite uniform bound
    on |v| where one exists (trigonometric and threshold variants).
    """

    variant: str
    nu: InteractionMeasure | None = None
    level: float = 0.0
    mode: str = "above"
    order: int = 2
    growth_a: float = 0.0
    growth_b: float = math.inf
    evaluator: object = None
    sup: float = math.inf

    def __post_init__(self):
        if self.variant not in _VARIANTS:
            raise ValueError(f"unknown density variant {self.variant!r}")
        if self.variant == "trigonometric":
            if not isinstance(self.nu, InteractionMeasure):
                raise ValueError("trigonometric density needs an InteractionMeasure")
            object.__setattr__(self, "growth_a", 0.0)
            object.__setattr__(self, "growth_b", self.nu.slope_bound)
            object.__setattr__(self, "sup", 2.0 * self.nu.total_variation)
        elif self.variant == "threshold":
            if self.mode not in _THRESHOLD_MODES:
                raise ValueError(f"mode must be one of {_THRESHOLD_MODES}")
            if self.level <= 0.0:
                raise ValueError("threshold level must be positive")
            object.__setattr__(self, "growth_a", 0.0)
            object.__setattr__(self, "growth_b", 1.0 / self.level)
            object.__setattr__(self, "sup", 1.0)
        elif self.variant == "hard_core":
            if int(self.order) != self.order or self.order < 2:
                raise ValueError("hard-core overlap order must be an integer >= 2")
        elif self.variant == "lipschitz_custom":
            if not callable(self.evaluator):
                raise ValueError("custom density needs a callable evaluator")
            if self.growth_a < 0.0 or self.growth_b < 0.0:
                raise ValueError("growth constants must be nonnegative")

    # -- constructors -------------------------------------------------------

    @classmethod
    def trigonometric(cls, nu: InteractionMeasure) -> "EnergyDensity":
        return cls("trigonometric", nu=nu)

    @classmethod
    def threshold(cls, level: float, mode: str = "above") -> "EnergyDensity":
        return cls("threshold", level=level, mode=mode)

    @classmethod
    def hard_core(cls, order: int = 2) -> "EnergyDensity":
        return cls("hard_core", order=int(order))

    @classmethod
    def quadratic_renormalized(cls) -> "EnergyDensity":
        return cls("quadratic_renormalized")

    @classmethod
    def lipschitz_custom(cls, a: float, b: float, evaluator,
                         sup: float = math.inf) -> "EnergyDensity":
        return cls("lipschitz_custom", growth_a=float(a), growth_b=float(b),
                   evaluator=evaluator, sup=float(sup))

    # -- evaluation ---------------------------------------------------------

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        single = t.ndim == 0
        tt = np.atleast_1d(t)
        if self.variant == "trigonometric":
            out = np.asarray(self.nu.density_value(tt.ravel())).reshape(tt.shape)
        elif self.variant == "threshold":
            if self.mode == "above":
                out = (tt >= self.level).astype(float)
            elif self.mode == "abs_above":
                out = (np.abs(tt) >= self.level).astype(float)
            else:
                out = (tt <= -self.level).astype(float)
        elif self.variant == "hard_core":
            out = np.where(tt < self.order, 0.0, np.inf)
        elif self.variant == "lipschitz_custom":
            out = np.asarray(self.evaluator(tt), dtype=float)
        else:
            raise TypeError(
                "the renormalized square has no pointwise form; "
                "use quadratic_renormalized_U"
            )
        return float(out[0]) if single else out


def trig_density_value(nu: InteractionMeasure, t):
    """v(t) = int (1 - e^{i alpha t}) dnu(alpha); real by conjugate symmetry."""
    return nu.density_value(t)


@dataclass(frozen=True)
class PotentialResult:
    """Value, quadrature error estimate, and per-term breakdown."""

    value: float
    error: float
    breakdown: dict | None = None

    @property
    def is_finite(self) -> bool:
        return math.isfinite(self.value)


# ---------------------------------------------------------------------------
# hard-core geometry
# ---------------------------------------------------------------------------


def _enclosing_ball(boundary):
    """Smallest ball through all boundary points: (center, radius^2)."""
    P = np.asarray(boundary, dtype=float)
    p0 = P[0]
    if len(P) == 1:
        return p0, 0.0
    A = 2.0 * (P[1:] - p0)
    rhs = np.sum(P[1:] ** 2, axis=1) - np.sum(p0**2)
    center = np.linalg.lstsq(A, rhs, rcond=None)[0]
    return center, float(np.sum((center - p0) ** 2))


def _welzl(points, boundary, dim):
    if not points or len(boundary) == dim + 1:
        if not boundary:
            return np.zeros(dim), -1.0
        return _enclosing_ball(boundary)
    p = points[-1]
    center, r2 = _welzl(points[:-1], boundary, dim)
    if np.sum((p - center) ** 2) <= r2 * (1.0 + 1e-12) + 1e-300:
        return center, r2
    return _welzl(points[:-1], boundary + [p], dim)


def min_enclosing_radius(points) -> float:
    """Radius of the smallest ball containing all the points (Welzl)."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    order = np.lexsort(pts.T[::-1])
    shuffled = [pts[i] for i in order]
    _, r2 = _welzl(shuffled, [], pts.shape[1])
    return math.sqrt(max(r2, 0.0))


def _iter_cliques(adjacency: dict, size: int):
    """Yield all cliques of the given size (vertices in increasing order)."""
    nodes = sorted(adjacency)

    def grow(clique, candidates):
        if len(clique) == size:
            yield tuple(clique)
            return
        for v in sorted(candidates):
            yield from grow(clique + [v],
                            {u for u in candidates & adjacency[v] if u > v})

    yield from grow([], set(nodes))


def _hard_core_overlaps(config: MarkedConfiguration, radius: float,
                        order: int) -> bool:
    """Whether some ``order`` balls of the given radius share interior points."""
    n = len(config)
    if n < order:
        return False
    tree = cKDTree(config.positions)
    pairs = [
        (i, j) for i, j in tree.query_pairs(2.0 * radius)
        if np.linalg.norm(config.positions[i] - config.positions[j]) < 2.0 * radius
    ]
    if order == 2:
        return bool(pairs)
    adjacency: dict = {}
    for i, j in pairs:
        adjacency.setdefault(i, set()).add(j)
        adjacency.setdefault(j, set()).add(i)
    adjacency = {v: nb for v, nb in adjacency.items() if len(nb) >= order - 1}
    for clique in _iter_cliques(adjacency, order):
        if min_enclosing_radius(config.positions[list(clique)]) < radius:
            return True
    return False


# ---------------------------------------------------------------------------
# potentials by quadrature
# ---------------------------------------------------------------------------


def _resolve_kernel(kernel) -> Kernel:
    if isinstance(kernel, Kernel):
        return kernel
    if isinstance(kernel, KernelSpec):
        return get_kernel(kernel)
    raise TypeError("kernel must be a Kernel or KernelSpec")


def _canonical(config: MarkedConfiguration) -> MarkedConfiguration:
    """Fixed particle order, so results do not depend on input ordering."""
    if len(config) < 2:
        return config
    idx = np.lexsort(config.positions.T[::-1])
    return MarkedConfiguration(config.positions[idx], config.charges[idx])


def _with_images(config: MarkedConfiguration, region: Region,
                 trunc: float) -> MarkedConfiguration:
    """Add periodic images whose truncation balls can reach the region box."""
    if not region.periodic or len(config) == 0:
        return config
    shifts = region.image_shifts(trunc)
    lo = np.asarray(region.lo) - trunc
    hi = np.asarray(region.hi) + trunc
    pos = (config.positions[None, :, :] + shifts[:, None, :]).reshape(-1, config.dim)
    charges = np.tile(config.charges, len(shifts))
    keep = np.all((pos >= lo) & (pos <= hi), axis=1)
    return MarkedConfiguration(pos[keep], charges[keep])


def _geometry_depth(lo, hi, trunc: float) -> int:
    side = float(np.max(np.asarray(hi) - np.asarray(lo)))
    return max(1, int(math.ceil(math.log2(max(side / (0.5 * trunc), 1.0)))))


def potential_U(config: MarkedConfiguration, kernel, density: EnergyDensity,
                *, cutoff: Region | None = None, tol: float = 1e-6,
                q: int = 6, max_evals: int = 4_000_000) -> PotentialResult:
    """U(eta) = int v(sum_l s_l G(x - y_l)) dx, over R^d or over a cutoff box.

    Without a cutoff the density must vanish at zero so the integrand has
    compact support inside the union of truncation balls; the integral then
    splits exactly over clusters of particles whose balls are connected.
    The hard-core variant skips quadrature entirely: it tests analytically
    whether ``order`` kernel balls share interior volume.
    """
    ker = _resolve_kernel(kernel)
    spec = ker.spec
    if density.variant == "quadratic_renormalized":
        raise ValueError(
            "the renormalized square is a pair sum; use quadratic_renormalized_U"
        )
    if density.variant == "hard_core":
        if spec.variant != "indicator_ball":
            raise ValueError("hard-core potentials need an indicator-ball kernel")
        if len(config) and not np.all(config.charges == 1.0):
            raise ValueError("hard-core potentials are defined for unit charges")
        hit = _hard_core_overlaps(config, spec.radius, density.order)
        return PotentialResult(math.inf if hit else 0.0, 0.0,
                               {"overlap": hit})

    v0 = float(density(0.0))
    if cutoff is None and v0 != 0.0:
        raise ValueError("densities with v(0) != 0 require an explicit cutoff")
    base = v0 * cutoff.volume if cutoff is not None else 0.0
    if len(config) == 0:
        return PotentialResult(base, 0.0, {"constant": base, "clusters": []})

    work = _canonical(config)
    trunc = ker.truncation_radius
    if cutoff is not None:
        work = _with_images(work, cutoff, trunc)
    clip_lo = cutoff.lo if cutoff is not None else None
    clip_hi = cutoff.hi if cutoff is not None else None

    def shifted(t):
        return density(t) - v0

    sup_w = density.sup + abs(v0)
    clusters = _probe_clusters(work.positions, 2.0 * trunc)
    total = base
    err = 0.0
    parts = []
    for idx in clusters:
        sub = MarkedConfiguration(work.positions[idx], work.charges[idx])
        lo, hi = union_bounding_box(sub.positions, trunc, clip_lo, clip_hi)
        if np.any(hi <= lo):
            parts.append(0.0)
            continue
        fld = probe_field_evaluator(spec, sub)
        res = adaptive_box_integral(
            lambda pts: shifted(fld(pts)),
            lo,
            hi,
            tol=tol / len(clusters),
            q=q,
            sup_bound=sup_w if math.isfinite(sup_w) else None,
            singular_points=sub.positions if ker.diverges_at_zero else None,
            skip_predicate=outside_all_balls_predicate(sub.positions, trunc),
            min_depth=_geometry_depth(lo, hi, trunc),
            max_evals=max_evals,
        )
        if not res.converged:
            raise QuadratureError(
                f"potential quadrature stalled at residual {res.error:.3e} "
                f"(cluster tolerance {tol / len(clusters):.3e})"
            )
        total += res.value.real
        err += res.error
        parts.append(res.value.real)
    return PotentialResult(total, err, {"constant": base, "clusters": parts})


def quadratic_renormalized_U(config: MarkedConfiguration,
                             pair) -> PotentialResult:
    """Pair-sum potential sum_{l != j} s_l s_j Phi(y_l - y_j), Phi = G*G.

    This is the zero-width limit of the self-energy-renormalized square.
    For an ultraviolet-regularized kernel the finite counterterm slope
    c_eps = Phi(0) / int G dx is reported in the breakdown.
    """
    phi = pair if isinstance(pair, PairPotential) else pair_potential_object(pair)
    work = _canonical(config)
    n = len(work)
    if n < 2:
        counter = _counterterm_or_none(phi)
        return PotentialResult(0.0, 0.0, {"pairs": np.empty(0),
                                          "counterterm": counter})
    dists = pdist(work.positions)
    if np.any(dists == 0.0):
        raise ValueError("coincident positions make the pair sum singular")
    i, j = np.triu_indices(n, k=1)
    terms = 2.0 * work.charges[i] * work.charges[j] * phi(dists)
    counter = _counterterm_or_none(phi)
    return PotentialResult(float(terms.sum()), 0.0,
                           {"pairs": terms, "counterterm": counter})


def _counterterm_or_none(phi: PairPotential):
    if phi.diverges_at_zero:
        return None
    return phi.at_zero / get_kernel(phi.base).l1_norm()


def self_energy_counterterm(spec: KernelSpec) -> float:
    """c_eps = Phi(0) / int G dx for a kernel with square-integrable profile."""
    phi = pair_potential_object(spec)
    if phi.diverges_at_zero:
        raise ValueError("counterterm undefined: the pair potential diverges at 0")
    return phi.at_zero / get_kernel(spec).l1_norm()


def mutual_energy_W(eta: MarkedConfiguration, gamma: MarkedConfiguration,
                    kernel, density: EnergyDensity, *,
                    cutoff: Region | None = None, tol: float = 1e-6,
                    q: int = 6, max_evals: int = 4_000_000) -> float:
    """Mutual energy W = int [v(G*(eta+gamma)) - v(G*eta) - v(G*gamma)] dx.

    The integrand vanishes wherever either field is zero, so the quadrature
    runs over the intersection of the two unions of truncation balls.
    """
    if density.variant in ("hard_core", "quadratic_renormalized"):
        raise ValueError("mutual energy is defined for pointwise densities")
    ker = _resolve_kernel(kernel)
    spec = ker.spec
    if len(eta) == 0 or len(gamma) == 0:
        return 0.0
    combined = eta.union(gamma)  # validates that positions are disjoint
    v0 = float(density(0.0))
    if cutoff is None and v0 != 0.0:
        raise ValueError("densities with v(0) != 0 require an explicit cutoff")
    base = -v0 * cutoff.volume if cutoff is not None else 0.0

    trunc = ker.truncation_radius
    a = _canonical(eta)
    b = _canonical(gamma)
    if cutoff is not None:
        a = _with_images(a, cutoff, trunc)
        b = _with_images(b, cutoff, trunc)
    lo_a, hi_a = union_bounding_box(a.positions, trunc)
    lo_b, hi_b = union_bounding_box(b.positions, trunc)
    lo = np.maximum(lo_a, lo_b)
    hi = np.minimum(hi_a, hi_b)
    if cutoff is not None:
        lo = np.maximum(lo, np.asarray(cutoff.lo))
        hi = np.minimum(hi, np.asarray(cutoff.hi))
    if np.any(hi <= lo):
        return base

    fld_a = probe_field_evaluator(spec, a)
    fld_b = probe_field_evaluator(spec, b)

    def shifted(t):
        return density(t) - v0

    def integrand(pts):
        fa = fld_a(pts)
        fb = fld_b(pts)
        return shifted(fa + fb) - shifted(fa) - shifted(fb)

    skip_a = outside_all_balls_predicate(a.positions, trunc)
    skip_b = outside_all_balls_predicate(b.positions, trunc)
    sup_w = density.sup + abs(v0)
    singular = (np.vstack([a.positions, b.positions])
                if ker.diverges_at_zero else None)
    res = adaptive_box_integral(
        integrand,
        lo,
        hi,
        tol=tol,
        q=q,
        sup_bound=3.0 * sup_w if math.isfinite(sup_w) else None,
        singular_points=singular,
        skip_predicate=lambda ca, cb: skip_a(ca, cb) or skip_b(ca, cb),
        min_depth=_geometry_depth(lo, hi, trunc),
        max_evals=max_evals,
    )
    if not res.converged:
        raise QuadratureError(
            f"mutual-energy quadrature stalled at residual {res.error:.3e}"
        )
    return base + float(res.value.real)


def stability_bound(density: EnergyDensity, kernel,
                    r: ChargeDistribution) -> float:
    """B = c * b * ||G||_1: every configuration satisfies U >= -B * N."""
    if density.variant == "hard_core":
        raise ValueError(
            "hard-core stability comes from positivity; no linear bound applies"
        )
    b = density.growth_b
    if not math.isfinite(b):
        raise ValueError("density has no finite slope constant")
    ker = _resolve_kernel(kernel)
    return r.bound * b * ker.l1_norm()
