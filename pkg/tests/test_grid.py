import csv

import numpy as np
import pytest

from qdotlab.device import DeviceSpec, build_device
from qdotlab.grid import (Field2D, SpacingTooCoarse, build_grid, field_to_csv, interface_slice,
                          profile_to_csv)


@pytest.fixture(scope="module")
def grid():
    return build_grid(build_device(DeviceSpec()), 0.5)


def test_cells_across_film(grid):
    n_si = int(np.sum((grid.y[:-1] >= 0) & (grid.y[1:] <= 15.0 + 1e-9)))
    assert n_si >= 30


def test_spacing_bound_and_boundary_fit(grid):
    assert np.max(np.diff(grid.x)) <= 0.5 + 1e-9
    assert np.max(np.diff(grid.y)) <= 0.5 + 1e-9
    for r in grid.region_map.regions:
        for v in (r.x0, r.x1):
            assert np.min(np.abs(grid.x - v)) < 1e-9
        for v in (r.y0, r.y1):
            assert np.min(np.abs(grid.y - v)) < 1e-9


def test_permittivities(grid):
    assert set(np.unique(grid.permittivity_of_cell)) <= {11.7, 3.9}
    si = grid.material_of_cell == "silicon"
    assert np.all(grid.permittivity_of_cell[si] == 11.7)


def test_too_coarse():
    with pytest.raises(SpacingTooCoarse):
        build_grid(build_device(DeviceSpec(t_ox=3.0)), 10.0)


def test_geometry_only_dependence():
    a = build_grid(build_device(DeviceSpec(v_pg=1.0)), 1.0, 0.5)
    b = build_grid(build_device(DeviceSpec(v_pg=0.3)), 1.0, 0.5)
    assert a.same_geometry(b)


def test_graded_grid_is_fine_at_interface():
    g = build_grid(build_device(DeviceSpec()), (1.0, 1.0), 0.25)
    i = g.iy_interface
    assert g.y[i] == pytest.approx(15.0)
    assert g.y[i + 1] - g.y[i] == pytest.approx(0.25)
    assert g.y[i] - g.y[i - 1] == pytest.approx(0.25)


def test_build_idempotent_on_own_spacing():
    rm = build_device(DeviceSpec())
    g = build_grid(rm, 1.0)
    h = max(np.max(np.diff(g.x)), np.max(np.diff(g.y)))
    g2 = build_grid(rm, h)
    assert g.same_geometry(g2)


def test_constant_and_linear_slices(grid):
    c = Field2D(grid, np.full(grid.shape, 0.37))
    assert np.all(interface_slice(c).values == 0.37)
    lin = Field2D(grid, np.broadcast_to(2.0 * grid.y - 1.0, grid.shape))
    assert np.allclose(interface_slice(lin).values, 2.0 * grid.y_interface - 1.0, atol=1e-12)


def test_slice_linearity(grid):
    rng = np.random.default_rng(3)
    a = Field2D(grid, rng.normal(size=grid.shape))
    b = Field2D(grid, rng.normal(size=grid.shape))
    s = interface_slice(a + b).values
    assert np.allclose(s, interface_slice(a).values + interface_slice(b).values, atol=1e-14)


def test_quadrature_exact_on_bilinear(grid):
    X, Y = np.meshgrid(grid.x, grid.y, indexing="ij")
    f = 1.0 + 2.0 * X - 0.5 * Y + 0.01 * X * Y
    W, H = grid.x[-1], grid.y[-1]
    exact = W * H + W**2 * H - 0.25 * W * H**2 + 0.01 * W**2 * H**2 / 4
    assert grid.integrate(f) == pytest.approx(exact, rel=1e-13)


def test_csv_export(tmp_path):
    g = build_grid(build_device(DeviceSpec()), 2.0, 1.0)
    f = Field2D(g, np.zeros(g.shape), "potential")
    field_to_csv(f, tmp_path / "f.csv")
    rows = list(csv.reader(open(tmp_path / "f.csv")))
    assert rows[0] == ["x_nm", "y_nm", "value", "quantity"]
    assert len(rows) == 1 + g.shape[0] * g.shape[1]
    profile_to_csv(interface_slice(f), tmp_path / "p.csv")
    rows = list(csv.reader(open(tmp_path / "p.csv")))
    assert rows[0][0] == "x_nm" and len(rows) == 1 + g.shape[0]
