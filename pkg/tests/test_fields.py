import numpy as np
import pytest
from scipy.optimize import brentq

from fieldgas.ensembles import MarkedConfiguration, Region
from fieldgas.fields import (
    FieldGrid,
    contour_length,
    contour_table,
    eval_field_at,
    load_grid,
    save_grid,
    superpose,
    threshold_table,
    threshold_volume,
)
from fieldgas.kernels import KernelSpec, get_kernel

REG = Region((-3.0, -3.0), (3.0, 3.0))
DISK = KernelSpec(variant="indicator_ball", dim=2, radius=1.0)
YUK = KernelSpec(variant="yukawa", dim=2, m0=3.0)


def test_empty_config_zero_grid():
    g = superpose(MarkedConfiguration.empty(2), YUK, REG, 32)
    assert g.values.shape == (32, 32)
    assert np.all(g.values == 0.0)
    assert not g.singular_mask.any()
    assert np.isclose(g.cell_volume, (6.0 / 32) ** 2)
    assert g.resolution == (32, 32)


def test_single_charge_cell_values_and_flag():
    ker = get_kernel(YUK)
    y = np.array([0.2, -0.1])
    cfg = MarkedConfiguration(y[None, :], np.array([1.0]))
    g = superpose(cfg, YUK, REG, 64)
    xs, ys = g.cell_centers()
    # the cell containing the particle is flagged with the charge sign
    j = int(np.argmin(np.abs(xs - y[0])))
    i = int(np.argmin(np.abs(ys - y[1])))
    assert g.singular_mask[i, j]
    assert g.singular_signs[i, j] == 1
    # a cell a few cells away carries G(rho) for its center distance
    rho = np.hypot(xs[j + 5] - y[0], ys[i + 3] - y[1])
    assert np.isclose(g.values[i + 3, j + 5], ker(rho), rtol=1e-12)


def test_mixed_charges_finite_and_flip_antisymmetric():
    rng = np.random.default_rng(7)
    n = 10
    pos = rng.uniform(-2.0, 2.0, size=(n, 2))
    s = rng.choice([-1.0, 1.0], size=n) / np.sqrt(n)
    cfg = MarkedConfiguration(pos, s)
    g = superpose(cfg, YUK, REG, 128)
    assert np.all(np.isfinite(g.effective_values()[~g.singular_mask]))
    g_neg = superpose(cfg.negate(), YUK, REG, 128)
    assert np.array_equal(g_neg.values, -g.values)
    assert np.array_equal(g_neg.singular_mask, g.singular_mask)
    assert np.array_equal(g_neg.singular_signs, -g.singular_signs)


def test_superposition_linearity():
    rng = np.random.default_rng(11)
    c1 = MarkedConfiguration(rng.uniform(-2, 2, (4, 2)), rng.normal(size=4))
    c2 = MarkedConfiguration(rng.uniform(-2, 2, (3, 2)), rng.normal(size=3))
    g1 = superpose(c1, YUK, REG, 48)
    g2 = superpose(c2, YUK, REG, 48)
    g12 = superpose(c1.union(c2), YUK, REG, 48)
    # additive up to the final float rounding of each sub-raster
    assert np.allclose(g12.values, g1.values + g2.values, rtol=1e-13, atol=1e-14)
    # union with nothing reproduces the raster bit for bit
    g1e = superpose(c1.union(MarkedConfiguration.empty(2)), YUK, REG, 48)
    assert np.array_equal(g1e.values, g1.values)


def test_eval_field_far_and_bisector():
    ker = get_kernel(YUK)
    cfg = MarkedConfiguration(
        np.array([[-0.5, 0.0], [0.5, 0.0]]), np.array([1.0, -1.0])
    )
    far = np.array([0.0, ker.truncation_radius + 10.0])
    assert eval_field_at(cfg, YUK, far) == 0.0
    # perpendicular bisector of an opposite pair
    assert eval_field_at(cfg, YUK, np.array([0.0, 1.3])) == 0.0
    assert eval_field_at(MarkedConfiguration.empty(2), YUK, far) == 0.0


def test_eval_field_matches_grid_centers():
    rng = np.random.default_rng(3)
    cfg = MarkedConfiguration(rng.uniform(-2, 2, (5, 2)), rng.normal(size=5))
    g = superpose(cfg, YUK, REG, 32)
    xs, ys = g.cell_centers()
    for i, j in ((0, 0), (7, 21), (31, 16)):
        x = np.array([xs[j], ys[i]])
        assert np.isclose(
            g.values[i, j], eval_field_at(cfg, YUK, x), rtol=1e-12, atol=1e-15
        )


def test_eval_field_singular_marker():
    cfg = MarkedConfiguration(np.array([[0.0, 0.0]]), np.array([-2.0]))
    v = eval_field_at(cfg, YUK, np.array([0.0, 0.0]))
    assert v == -np.inf


def test_threshold_disk_area():
    cfg = MarkedConfiguration(np.array([[0.2, -0.1]]), np.array([1.0]))
    exact = np.pi
    for res in (128, 256, 512):
        g = superpose(cfg, DISK, REG, res)
        assert abs(threshold_volume(g, 0.5) - exact) < 30.0 / res


def test_threshold_two_disjoint_disks():
    cfg = MarkedConfiguration(
        np.array([[-1.6, 0.0], [1.6, 0.0]]), np.array([1.0, 1.0])
    )
    g = superpose(cfg, DISK, REG, 512)
    assert abs(threshold_volume(g, 0.5) - 2.0 * np.pi) < 0.05


def test_threshold_above_max_zero_and_monotone():
    cfg = MarkedConfiguration(np.array([[0.0, 0.0]]), np.array([1.0]))
    g = superpose(cfg, DISK, REG, 128)
    assert threshold_volume(g, 1.5) == 0.0
    sweep = threshold_table(g, [0.2, 0.5, 0.9, 1.2])
    assert np.all(np.diff(sweep[:, 1]) <= 0.0)


def test_threshold_modes_negative_charge():
    cfg = MarkedConfiguration(np.array([[0.0, 0.0]]), np.array([-1.0]))
    g = superpose(cfg, DISK, REG, 256)
    disk = np.pi
    assert threshold_volume(g, 0.5, "above") == 0.0
    assert abs(threshold_volume(g, 0.5, "abs_above") - disk) < 0.05
    assert abs(threshold_volume(g, 0.5, "band") - disk) < 0.05
    # band = abs_above minus above, cellwise
    assert np.isclose(
        threshold_volume(g, 0.5, "band"),
        threshold_volume(g, 0.5, "abs_above") - threshold_volume(g, 0.5, "above"),
    )


def test_threshold_singular_cells_count_by_sign():
    cfg = MarkedConfiguration(np.array([[0.0, 0.0]]), np.array([-1.0]))
    g = superpose(cfg, YUK, REG, 64)
    assert g.singular_mask.any()
    # a negative diverging charge contributes nothing to the upper threshold
    eff = g.effective_values()
    assert np.all(eff[g.singular_mask] < 0.0)
    assert threshold_volume(g, 1e6, "above") == 0.0
    assert threshold_volume(g, 1e6, "band") >= g.cell_volume


def test_threshold_validation():
    g = superpose(MarkedConfiguration.empty(2), DISK, REG, 16)
    with pytest.raises(ValueError):
        threshold_volume(g, -0.5)
    with pytest.raises(ValueError):
        threshold_volume(g, 0.0, "abs_above")
    with pytest.raises(ValueError):
        threshold_volume(g, 0.5, "sideways")
    # band mode accepts any level sign
    assert threshold_volume(g, 0.5, "band") == 0.0


def test_contour_circle_length_and_refinement():
    spec = KernelSpec(variant="bessel_alpha", dim=2, alpha=1.0, m0=1.0)
    ker = get_kernel(spec)
    level = ker(0.7)
    rho_star = brentq(lambda r: ker(r) - level, 0.3, 1.5, xtol=1e-14)
    exact = 2.0 * np.pi * rho_star
    cfg = MarkedConfiguration(np.array([[0.0, 0.0]]), np.array([1.0]))
    errs = []
    for res in (128, 512):
        g = superpose(cfg, spec, REG, res)
        errs.append(abs(contour_length(g, level) - exact))
    assert errs[1] < 1e-3
    order = np.log2(errs[0] / errs[1]) / 2.0
    assert order >= 1.0


def test_contour_out_of_range_zero():
    cfg = MarkedConfiguration(np.array([[0.0, 0.0]]), np.array([1.0]))
    g = superpose(cfg, DISK, REG, 64)
    assert contour_length(g, 5.0) == 0.0
    tab = contour_table(g, [0.5, 5.0])
    assert tab.shape == (2, 2) and tab[1, 1] == 0.0


def test_saddle_disambiguation_by_center():
    reg = Region((0.0, 0.0), (2.0, 2.0))
    vals = np.array([[1.0, 0.0], [0.0, 1.0]])
    zeros = np.zeros((2, 2), dtype=bool)
    g = FieldGrid(reg, vals, zeros, np.zeros((2, 2), dtype=np.int8))
    # center mean 0.5 >= level: the two inside corners join (level 0.5)
    assert np.isclose(contour_length(g, 0.5), np.sqrt(2.0))
    # raising the level above the center mean separates them
    assert np.isclose(contour_length(g, 0.6), 0.8 * np.sqrt(2.0))


def test_grid_save_load_roundtrip(tmp_path):
    rng = np.random.default_rng(5)
    cfg = MarkedConfiguration(rng.uniform(-2, 2, (3, 2)), rng.normal(size=3))
    g = superpose(cfg, YUK, REG, (24, 16))
    path = tmp_path / "grid.txt"
    save_grid(g, path)
    lines = path.read_text().splitlines()
    assert lines[0].split()[:2] == ["24", "16"]
    g2 = load_grid(path)
    assert g2.resolution == (24, 16)
    assert np.allclose(g2.values, g.values, rtol=0, atol=0)
    assert np.allclose(g2.region.lo, g.region.lo)
    assert np.allclose(g2.region.hi, g.region.hi)


def test_periodic_images_wrap():
    reg = Region((-1.0, -1.0), (1.0, 1.0), periodic=True)
    spec = KernelSpec(variant="yukawa", dim=2, m0=3.0, truncation_radius=1.5)
    cfg = MarkedConfiguration(np.array([[0.9, 0.0]]), np.array([1.0]))
    g = superpose(cfg, spec, reg, 40)
    xs, ys = g.cell_centers()
    i = int(np.argmin(np.abs(ys - 0.0)))
    j = int(np.argmin(np.abs(xs + 0.9)))
    x = np.array([xs[j], ys[i]])
    want = eval_field_at(cfg, spec, x, region=reg)
    assert np.isclose(g.values[i, j], want, rtol=1e-12)
    # the wrapped distance is much shorter than the direct one
    ker = get_kernel(spec)
    direct = ker(np.hypot(xs[j] - 0.9, ys[i]))
    assert g.values[i, j] > 10.0 * max(direct, 1e-30)


def test_grid_validation():
    ok = np.zeros((4, 4))
    zb = np.zeros((4, 4), dtype=bool)
    zs = np.zeros((4, 4), dtype=np.int8)
    with pytest.raises(ValueError):
        FieldGrid(Region((0, 0), (1, 1)), np.zeros((1, 4)), zb, zs)
    with pytest.raises(ValueError):
        FieldGrid(Region((0, 0, 0), (1, 1, 1)), ok, zb, zs)
    with pytest.raises(ValueError):
        FieldGrid(Region((0, 0), (1, 1)), ok, np.zeros((3, 4), dtype=bool), zs)
    with pytest.raises(ValueError):
        superpose(MarkedConfiguration.empty(2), YUK, REG, 1)
