"""Rasterized static fields and their level-set geometry.

A charge configuration generates the superposed field X(x) = sum_l s_l
G(x - y_l).  This module samples X on a regular 2-d grid and measures two
geometric functionals of it: the volume of threshold sets such as
{X >= C} and the length of isodensity contours {X = C}.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .ensembles import MarkedConfiguration, Region
from .kernels import Kernel, KernelSpec, get_kernel

_THRESHOLD_MODES = ("above", "abs_above", "band")

# Stand-in magnitude for cells whose true field value diverges; keeps the
# level-set arithmetic finite while still dominating any realistic level.
_SINGULAR_MAGNITUDE = 1e30


@dataclass(frozen=True)
class FieldGrid:
    """Cell-centered raster of a static field over a rectangular region.

    ``values[i, j]`` is the field at the center of cell ``(i, j)``, where
    ``i`` runs along y and ``j`` along x; the flat layout is row-major with
    x varying fastest.  ``singular_mask`` flags cells lying within one cell
    size of a particle whose kernel diverges at the origin; for those cells
    ``singular_signs`` records the charge sign of the nearest such particle
    and the stored value is not reliable.
    """

    region: Region
    values: np.ndarray
    singular_mask: np.ndarray
    singular_signs: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.ndim != 2 or min(vals.shape) < 2:
            raise ValueError("grid needs at least 2 cells per axis")
        if self.region.dim != 2:
            raise ValueError("field grids are two-dimensional")
        mask = np.asarray(self.singular_mask, dtype=bool)
        signs = np.asarray(self.singular_signs, dtype=np.int8)
        if mask.shape != vals.shape or signs.shape != vals.shape:
            raise ValueError("mask/sign arrays must match the value grid")
        for name, arr in (("values", vals), ("singular_mask", mask),
                          ("singular_signs", signs)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def resolution(self) -> tuple:
        """(nx, ny): number of cells along x and along y."""
        ny, nx = self.values.shape
        return (nx, ny)

    @property
    def cell_sizes(self) -> tuple:
        nx, ny = self.resolution
        sx, sy = self.region.sides
        return (sx / nx, sy / ny)

    @property
    def cell_volume(self) -> float:
        dx, dy = self.cell_sizes
        return dx * dy

    def cell_centers(self):
        """1-d arrays (xs, ys) of the cell-center coordinates."""
        nx, ny = self.resolution
        dx, dy = self.cell_sizes
        xs = self.region.lo[0] + (np.arange(nx) + 0.5) * dx
        ys = self.region.lo[1] + (np.arange(ny) + 0.5) * dy
        return xs, ys

    def effective_values(self) -> np.ndarray:
        """Values with singular cells forced to a signed dominant magnitude."""
        if not self.singular_mask.any():
            return self.values
        forced = np.where(self.singular_signs >= 0,
                          _SINGULAR_MAGNITUDE, -_SINGULAR_MAGNITUDE)
        return np.where(self.singular_mask, forced, self.values)


def _resolve_kernel(kernel) -> Kernel:
    if isinstance(kernel, Kernel):
        return kernel
    if isinstance(kernel, KernelSpec):
        return get_kernel(kernel)
    raise TypeError("kernel must be a Kernel or KernelSpec")


def superpose(config: MarkedConfiguration, kernel, region: Region,
              resolution=256) -> FieldGrid:
    """Sample sum_l s_l G(. - y_l) at every cell center of a 2-d raster.

    Each particle only touches the cells inside its truncation ball, and
    periodic regions accumulate over all relevant lattice images.  Cells
    within one cell size of a particle of a diverging kernel are flagged
    singular, carrying the charge sign of the nearest offender.
    """
    ker = _resolve_kernel(kernel)
    if region.dim != 2:
        raise ValueError("superpose rasterizes two-dimensional regions only")
    if config.dim != 2:
        raise ValueError("configuration dimension must be 2")
    if np.isscalar(resolution):
        nx = ny = int(resolution)
    else:
        nx, ny = (int(v) for v in resolution)
    if nx < 2 or ny < 2:
        raise ValueError("grid needs at least 2 cells per axis")

    sx, sy = region.sides
    dx, dy = sx / nx, sy / ny
    xs = region.lo[0] + (np.arange(nx) + 0.5) * dx
    ys = region.lo[1] + (np.arange(ny) + 0.5) * dy

    # extended-precision accumulator so that cell sums agree exactly with
    # any split of the configuration after the final rounding
    vals = np.zeros((ny, nx), dtype=np.longdouble)
    mask = np.zeros((ny, nx), dtype=bool)
    signs = np.zeros((ny, nx), dtype=np.int8)
    nearest = np.full((ny, nx), np.inf)

    trunc = ker.truncation_radius
    cell = max(dx, dy)
    shifts = region.image_shifts(trunc)
    flag = ker.diverges_at_zero

    for pos, charge in zip(config.positions, config.charges):
        for shift in shifts:
            px, py = pos[0] + shift[0], pos[1] + shift[1]
            j0 = np.searchsorted(xs, px - trunc)
            j1 = np.searchsorted(xs, px + trunc, side="right")
            i0 = np.searchsorted(ys, py - trunc)
            i1 = np.searchsorted(ys, py + trunc, side="right")
            if j0 >= j1 or i0 >= i1:
                continue
            ddx = xs[j0:j1] - px
            ddy = ys[i0:i1] - py
            rho = np.sqrt(ddy[:, None] ** 2 + ddx[None, :] ** 2)
            vals[i0:i1, j0:j1] += charge * ker(rho)
            if flag:
                close = rho < cell
                if close.any():
                    sub = (slice(i0, i1), slice(j0, j1))
                    better = close & (rho < nearest[sub])
                    nearest[sub] = np.where(better, rho, nearest[sub])
                    mask[sub] |= close
                    signs[sub] = np.where(
                        better, 1 if charge >= 0 else -1, signs[sub]
                    )
    return FieldGrid(region, vals.astype(float), mask, signs)


def eval_field_at(config: MarkedConfiguration, kernel, x, region=None):
    """Field of the configuration at a single point, by direct summation.

    A position landing exactly on a particle of a diverging kernel returns
    the signed infinity marker.  Passing a periodic region adds the image
    contributions, matching what :func:`superpose` rasterizes.
    """
    ker = _resolve_kernel(kernel)
    x = np.asarray(x, dtype=float)
    if len(config) == 0:
        return 0.0
    if x.shape != (config.dim,):
        raise ValueError("position/configuration dimension mismatch")
    shifts = (region.image_shifts(ker.truncation_radius)
              if region is not None else np.zeros((1, config.dim)))
    total = 0.0
    for shift in shifts:
        rho = np.linalg.norm(config.positions + shift - x, axis=1)
        total += float(np.dot(config.charges, ker(rho)))
    return total


def threshold_volume(grid: FieldGrid, level: float, mode: str = "above") -> float:
    """Area of the cells where the field passes the level test.

    Mode "above" counts {X >= C}, "abs_above" counts {|X| >= C}, and
    "band" counts the negative-side excess {|X| >= C} minus {X >= C},
    i.e. the cells with X <= -C.  Singular cells count according to the
    sign of their diverging charge, which dominates any finite level.
    """
    if mode not in _THRESHOLD_MODES:
        raise ValueError(f"mode must be one of {_THRESHOLD_MODES}")
    if mode in ("above", "abs_above") and level <= 0.0:
        raise ValueError("level must be positive for mode " + mode)
    eff = grid.effective_values()
    if mode == "above":
        n = np.count_nonzero(eff >= level)
    elif mode == "abs_above":
        n = np.count_nonzero(np.abs(eff) >= level)
    else:
        n = np.count_nonzero(eff <= -level)
    return n * grid.cell_volume


def contour_length(grid: FieldGrid, level: float) -> float:
    """Total length of the isoline {X = C} by marching squares.

    The curve is extracted on the lattice of cell centers with linear
    interpolation along square edges; ambiguous saddle squares are split
    according to the square's center value (mean of its four corners).
    Levels outside the sampled range yield 0.
    """
    V = grid.effective_values()
    dx, dy = grid.cell_sizes

    a = V[:-1, :-1]  # bottom-left corner of each square
    b = V[:-1, 1:]   # bottom-right
    c = V[1:, 1:]    # top-right
    d = V[1:, :-1]   # top-left
    a_in = a >= level
    b_in = b >= level
    c_in = c >= level
    d_in = d >= level
    case = (a_in.astype(np.int8) + 2 * b_in + 4 * c_in + 8 * d_in)

    with np.errstate(divide="ignore", invalid="ignore"):
        t_bottom = (level - a) / (b - a)
        t_right = (level - b) / (c - b)
        t_top = (level - d) / (c - d)
        t_left = (level - a) / (d - a)

    zero = np.zeros_like(a)
    one = np.ones_like(a)
    # Edge crossing points in unit-square coordinates (u along x, v along y).
    bottom = (t_bottom, zero)
    right = (one, t_right)
    top = (t_top, one)
    left = (zero, t_left)

    def seg_sum(mask, p, q):
        if not mask.any():
            return 0.0
        du = (p[0][mask] - q[0][mask]) * dx
        dv = (p[1][mask] - q[1][mask]) * dy
        return float(np.sum(np.sqrt(du * du + dv * dv)))

    plain = {
        1: [(bottom, left)],
        2: [(bottom, right)],
        3: [(left, right)],
        4: [(right, top)],
        6: [(bottom, top)],
        7: [(left, top)],
        8: [(left, top)],
        9: [(bottom, top)],
        11: [(right, top)],
        12: [(left, right)],
        13: [(bottom, right)],
        14: [(bottom, left)],
    }
    total = 0.0
    for code, pairs in plain.items():
        m = case == code
        for p, q in pairs:
            total += seg_sum(m, p, q)

    center_in = 0.25 * (a + b + c + d) >= level
    saddles = (
        (5, True, [(bottom, right), (left, top)]),
        (5, False, [(bottom, left), (right, top)]),
        (10, True, [(bottom, left), (right, top)]),
        (10, False, [(bottom, right), (left, top)]),
    )
    for code, wants_center, pairs in saddles:
        m = (case == code) & (center_in == wants_center)
        for p, q in pairs:
            total += seg_sum(m, p, q)
    return total


def threshold_table(grid: FieldGrid, levels, mode: str = "above") -> np.ndarray:
    """Rows (level, volume) for a sweep of threshold levels."""
    return np.array([[c, threshold_volume(grid, c, mode)] for c in levels])


def contour_table(grid: FieldGrid, levels) -> np.ndarray:
    """Rows (level, length) for a sweep of contour levels."""
    return np.array([[c, contour_length(grid, c)] for c in levels])


def save_grid(grid: FieldGrid, path) -> None:
    """Write the raster as 'nx ny x0 y0 dx dy' plus row-major values."""
    nx, ny = grid.resolution
    dx, dy = grid.cell_sizes
    x0, y0 = grid.region.lo
    header = f"{nx} {ny} {float(x0)!r} {float(y0)!r} {float(dx)!r} {float(dy)!r}"
    np.savetxt(path, grid.values, header=header, comments="")


def load_grid(path) -> FieldGrid:
    """Read a raster written by :func:`save_grid` (singular flags not stored)."""
    with open(path) as fh:
        head = fh.readline().split()
    if len(head) != 6:
        raise ValueError("grid header must be 'nx ny x0 y0 dx dy'")
    nx, ny = int(head[0]), int(head[1])
    x0, y0, dx, dy = (float(v) for v in head[2:])
    vals = np.loadtxt(path, skiprows=1).reshape(ny, nx)
    region = Region((x0, y0), (x0 + nx * dx, y0 + ny * dy))
    shape = (ny, nx)
    return FieldGrid(region, vals,
                     np.zeros(shape, dtype=bool), np.zeros(shape, dtype=np.int8))
