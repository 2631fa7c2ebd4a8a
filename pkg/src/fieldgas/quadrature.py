"""Quadrature engines shared across the package.

Three tools live here:

* :func:`adaptive_box_integral` — greedy h-adaptive integration of a
  vectorized integrand over an axis-aligned box, with optional certified
  handling of known singular points (cells shrinking onto a singularity are
  accepted once their worst-case contribution, ``sup_bound * volume``, drops
  below the error budget) and a skip predicate for regions where the
  integrand provably vanishes.
* :class:`NodeMesh` — a fixed panel mesh of tensor Gauss nodes over a box,
  used by the samplers so that energies and their increments are evaluated
  by the *same* deterministic rule (cache coherence to machine precision).
* quasi-Monte Carlo helpers with scrambled replicates for error estimates.
"""

from __future__ import annotations

import heapq
import itertools
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.spatial import cKDTree
from scipy.stats import qmc


@lru_cache(maxsize=32)
def gauss_legendre(n: int):
    x, w = np.polynomial.legendre.leggauss(n)
    return x, w


class QuadratureError(RuntimeError):
    """Raised when an integral cannot reach the requested tolerance."""

    def __init__(self, message: str, value=None, error=None):
        super().__init__(message)
        self.value = value
        self.error = error


@dataclass
class QuadResult:
    value: complex
    error: float
    n_evals: int
    converged: bool

    def require(self, tol: float | None = None) -> complex:
        if not self.converged:
            raise QuadratureError(
                f"quadrature did not converge: residual {self.error:.3e}",
                value=self.value, error=self.error,
            )
        if tol is not None and self.error > tol:
            raise QuadratureError(
                f"quadrature error {self.error:.3e} above tolerance {tol:.3e}",
                value=self.value, error=self.error,
            )
        return self.value


def _box_distance_sq(point, a, b):
    """Squared distance from a point to the box [a, b]."""
    lo_gap = np.maximum(a - point, 0.0)
    hi_gap = np.maximum(point - b, 0.0)
    g = np.maximum(lo_gap, hi_gap)
    return float(np.dot(g, g))


def adaptive_box_integral(
    f,
    lo,
    hi,
    *,
    tol: float = 1e-9,
    rtol: float = 0.0,
    q: int = 5,
    sup_bound: float | None = None,
    singular_points=None,
    singular_size: float | None = None,
    skip_predicate=None,
    min_depth: int | None = None,
    max_evals: int = 4_000_000,
    batch: int = 32,
) -> QuadResult:
    """Integrate ``f`` over the box ``[lo, hi]`` adaptively.

    ``f`` maps an (N, d) array of points to N values (real or complex).
    Cells are bisected along their widest axis, worst first, until the sum
    of per-cell error indicators falls below ``max(tol, rtol*|I|)``.  Cells
    that have collapsed onto a listed singular point are accepted with the
    certified bound ``2 * sup_bound * volume`` instead of being refined
    forever; ``sup_bound`` may also be a callable ``(a, b) -> float`` giving
    a local bound on ``|f|`` over the cell.  ``skip_predicate(a, b)`` may
    declare a cell identically zero.
    """
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    d = lo.size
    if np.any(hi <= lo):
        raise ValueError("empty box")
    sing = None
    if singular_points is not None:
        sing = np.atleast_2d(np.asarray(singular_points, dtype=float))
        if sing.size == 0:
            sing = None
    diam0 = float(np.max(hi - lo))
    local_sup = sup_bound if callable(sup_bound) else None
    if singular_size is None:
        if sing is not None and sup_bound is not None and local_sup is None:
            # size at which a cell's certified contribution is far below tol
            budget = 0.125 * tol / (2.0 * sup_bound * (2**d) * max(len(sing), 1))
            singular_size = max(budget ** (1.0 / d), 1e-10 * diam0)
        else:
            singular_size = 1e-9 * diam0
    if min_depth is None:
        min_depth = d

    xg, wg = gauss_legendre(q)
    wq = wg
    for _ in range(d - 1):
        wq = np.multiply.outer(wq, wg)
    wq = wq.ravel()
    idx = np.indices((q,) * d).reshape(d, -1)
    offsets = np.stack([xg[idx[i]] for i in range(d)], axis=-1)  # (q^d, d)

    n_evals = 0

    def eval_cells(A, B):
        nonlocal n_evals
        C = 0.5 * (A + B)[:, None, :]
        H = 0.5 * (B - A)[:, None, :]
        pts = C + H * offsets[None, :, :]
        vals = np.asarray(f(pts.reshape(-1, d)))
        n_evals += pts.shape[0] * pts.shape[1]
        vals = vals.reshape(A.shape[0], -1)
        return (vals @ wq) * np.prod(0.5 * (B - A), axis=1)

    def is_skipped(a, b):
        return skip_predicate is not None and skip_predicate(a, b)

    def near_singular(a, b, diam):
        if sing is None:
            return False
        r2 = (0.5 * diam) ** 2
        return any(_box_distance_sq(s, a, b) <= r2 for s in sing)

    if is_skipped(lo, hi):
        return QuadResult(0.0, 0.0, 0, True)

    _FORCE = 1e300  # ordering sentinel for cells that must be refined

    seq = itertools.count()
    heap = []  # entries: (-err, tiebreak, a, b, I, depth)
    heap_val = 0.0 + 0.0j
    heap_err = 0.0  # sum of real error indicators; _FORCE cells counted apart
    n_forced = 0
    accepted_val = 0.0 + 0.0j
    accepted_err = 0.0

    def push(a, b, I, err, depth):
        nonlocal heap_val, heap_err, n_forced
        heapq.heappush(heap, (-err, next(seq), a, b, I, depth))
        heap_val += I
        if err >= _FORCE:
            n_forced += 1
        else:
            heap_err += err

    root_I = eval_cells(lo[None, :], hi[None, :])[0]
    push(lo, hi, root_I, _FORCE, 0)

    converged = True
    while heap:
        total = accepted_val + heap_val
        err_now = accepted_err + heap_err
        if n_forced == 0 and err_now <= max(tol, rtol * abs(total)):
            break
        if n_evals >= max_evals:
            converged = False
            break

        parents = []
        for _ in range(min(batch, len(heap))):
            neg_err, _, a, b, I, depth = heapq.heappop(heap)
            heap_val -= I
            if -neg_err >= _FORCE:
                n_forced -= 1
            else:
                heap_err -= -neg_err
            diam = float(np.max(b - a))
            if depth >= min_depth and diam <= singular_size and near_singular(a, b, diam):
                vol = float(np.prod(b - a))
                if local_sup is not None:
                    bound = 2.0 * local_sup(a, b) * vol
                elif sup_bound is not None:
                    bound = 2.0 * sup_bound * vol
                else:
                    bound = abs(I)
                accepted_val += I
                accepted_err += bound
                continue
            if diam <= 1e-12 * diam0:  # roundoff floor
                accepted_val += I
                if -neg_err < _FORCE:
                    accepted_err += -neg_err
                continue
            parents.append((a, b, I, depth))
        if not parents:
            continue

        child_A, child_B, owners = [], [], []
        meta = []
        for j, (a, b, I, depth) in enumerate(parents):
            axis = int(np.argmax(b - a))
            mid = 0.5 * (a[axis] + b[axis])
            b1 = b.copy(); b1[axis] = mid
            a2 = a.copy(); a2[axis] = mid
            kept = []
            for ca, cb in ((a, b1), (a2, b)):
                if is_skipped(ca, cb):
                    kept.append(None)
                else:
                    child_A.append(ca)
                    child_B.append(cb)
                    owners.append(j)
                    kept.append(len(child_A) - 1)
            meta.append((I, depth, kept))

        child_I = (
            eval_cells(np.asarray(child_A), np.asarray(child_B))
            if child_A else np.zeros(0)
        )
        for j, (I_par, depth, kept) in enumerate(meta):
            Is = [0.0 if k is None else child_I[k] for k in kept]
            disc = abs(I_par - sum(Is))
            for k, Ic in zip(kept, Is):
                if k is None:
                    continue
                err = _FORCE if depth + 1 < min_depth else max(disc, 1e-300)
                push(child_A[k], child_B[k], Ic, err, depth + 1)

    value = accepted_val + heap_val
    error = accepted_err + heap_err
    if n_forced > 0:
        converged = False
        error = max(error, math.inf)
    if abs(value.imag) == 0.0:
        value = value.real
    return QuadResult(value, error, n_evals, converged)


def radial_integral(
    h,
    r_max: float,
    dim: int,
    *,
    tol: float = 1e-10,
    rtol: float = 1e-10,
    sup_bound: float | None = None,
    singular_zero: bool = False,
    q: int = 8,
) -> QuadResult:
    """S_d * int_0^{r_max} h(r) r^{d-1} dr for a vectorized radial profile."""
    from .kernels import sphere_area

    area = sphere_area(dim)

    def f(pts):
        r = pts[:, 0]
        return area * np.asarray(h(r)) * r ** (dim - 1)

    sing = [[0.0]] if singular_zero else None
    return adaptive_box_integral(
        f, [0.0], [r_max], tol=tol, rtol=rtol, q=q,
        sup_bound=sup_bound, singular_points=sing,
        singular_size=1e-7 * r_max, min_depth=3,
    )


def union_bounding_box(points, radius: float, clip_lo=None, clip_hi=None):
    """Bounding box of balls of the given radius around the points."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    lo = pts.min(axis=0) - radius
    hi = pts.max(axis=0) + radius
    if clip_lo is not None:
        lo = np.maximum(lo, np.asarray(clip_lo, dtype=float))
    if clip_hi is not None:
        hi = np.minimum(hi, np.asarray(clip_hi, dtype=float))
    return lo, hi


def outside_all_balls_predicate(centers, radius: float):
    """Skip predicate: True when a cell lies outside every ball."""
    pts = np.atleast_2d(np.asarray(centers, dtype=float))
    r2 = radius * radius

    def skip(a, b):
        return all(_box_distance_sq(c, a, b) > r2 for c in pts)

    return skip


# ---------------------------------------------------------------------------
# fixed mesh for sampler energies
# ---------------------------------------------------------------------------


class NodeMesh:
    """Fixed tensor-Gauss panel mesh over a box.

    The panel layout never changes during a run, so an energy evaluated as
    ``weights . v(field_at_nodes)`` is reproducible to machine precision and
    incremental field updates stay coherent with full recomputation.
    """

    def __init__(self, lo, hi, target_cell: float, q: int = 3):
        lo = np.asarray(lo, dtype=float)
        hi = np.asarray(hi, dtype=float)
        self.lo, self.hi = lo, hi
        d = lo.size
        self.dim = d
        n_cells = [max(1, int(math.ceil((hi[i] - lo[i]) / target_cell))) for i in range(d)]
        xg, wg = gauss_legendre(q)
        axes_nodes = []
        axes_weights = []
        for i in range(d):
            edges = np.linspace(lo[i], hi[i], n_cells[i] + 1)
            half = 0.5 * (edges[1:] - edges[:-1])
            mid = 0.5 * (edges[1:] + edges[:-1])
            nodes_i = (mid[:, None] + half[:, None] * xg[None, :]).ravel()
            weights_i = (half[:, None] * wg[None, :]).ravel()
            axes_nodes.append(nodes_i)
            axes_weights.append(weights_i)
        grids = np.meshgrid(*axes_nodes, indexing="ij")
        self.nodes = np.stack([g.ravel() for g in grids], axis=-1)
        w = axes_weights[0]
        for i in range(1, d):
            w = np.multiply.outer(w, axes_weights[i])
        self.weights = w.ravel()
        self.n_cells = tuple(n_cells)
        self._tree = cKDTree(self.nodes)

    @property
    def size(self) -> int:
        return self.nodes.shape[0]

    def within(self, center, radius: float) -> np.ndarray:
        """Indices of mesh nodes inside the ball around ``center``."""
        out = self._tree.query_ball_point(np.asarray(center, dtype=float), radius)
        return np.asarray(out, dtype=np.intp)

    def integrate(self, values) -> float:
        return float(np.dot(self.weights, values))

    def integrate_complex(self, values) -> complex:
        return complex(np.dot(self.weights, values))


# ---------------------------------------------------------------------------
# quasi-Monte Carlo with scrambled replicates
# ---------------------------------------------------------------------------


def qmc_box_mean(f, lo, hi, *, n: int = 2**13, reps: int = 8, seed: int = 0):
    """Scrambled-Sobol estimate of the mean of f over a box.

    Returns (mean, standard_error); multiply by the box volume for the
    integral.  ``f`` maps (N, d) points to N values.
    """
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    d = lo.size
    m = max(1, int(round(math.log2(max(2, n // reps)))))
    estimates = []
    for rep in range(reps):
        eng = qmc.Sobol(d, scramble=True, seed=seed + 1000003 * rep)
        u = eng.random_base2(m)
        pts = lo + u * (hi - lo)
        estimates.append(np.mean(np.asarray(f(pts))))
    estimates = np.asarray(estimates)
    mean = complex(np.mean(estimates))
    if abs(mean.imag) == 0.0:
        mean = mean.real
    se = float(np.std(estimates, ddof=1) / math.sqrt(reps)) if reps > 1 else math.inf
    return mean, se
