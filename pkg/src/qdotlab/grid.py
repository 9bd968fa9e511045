"""Boundary-fitted rectilinear grids and the fields stored on them."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from qdotlab.constants import EPS_OX, EPS_SI
from qdotlab.device import RegionMap

PERMITTIVITY = {
    "silicon": EPS_SI,
    "gate_oxide": EPS_OX,
    "spacer_oxide": EPS_OX,
    "gap_oxide": EPS_OX,
    # conductors are Dirichlet everywhere; their permittivity only enters
    # fluxes between two Dirichlet nodes, which are never assembled
    "gate_metal": EPS_OX,
    "source_contact": EPS_SI,
    "drain_contact": EPS_SI,
}


class SpacingTooCoarse(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Grid2D:
    x: np.ndarray
    y: np.ndarray
    material_of_cell: np.ndarray      # (nx-1, ny-1) material names
    label_of_cell: np.ndarray         # (nx-1, ny-1) region labels
    permittivity_of_cell: np.ndarray  # (nx-1, ny-1)
    iy_interface: int
    region_map: RegionMap

    @property
    def shape(self) -> tuple[int, int]:
        return len(self.x), len(self.y)

    @property
    def y_interface(self) -> float:
        return float(self.y[self.iy_interface])

    def same_geometry(self, other: "Grid2D") -> bool:
        return (np.array_equal(self.x, other.x) and np.array_equal(self.y, other.y)
                and np.array_equal(self.material_of_cell, other.material_of_cell))

    def node_mask(self, predicate) -> np.ndarray:
        """Nodes touching at least one cell whose material satisfies ``predicate``."""
        cells = np.vectorize(predicate, otypes=[bool])(self.material_of_cell)
        nx, ny = self.shape
        mask = np.zeros((nx, ny), dtype=bool)
        mask[:-1, :-1] |= cells
        mask[1:, :-1] |= cells
        mask[:-1, 1:] |= cells
        mask[1:, 1:] |= cells
        return mask

    def control_areas(self) -> np.ndarray:
        """Dual-cell (control volume) areas per node, nm^2."""
        return np.outer(_half_widths(self.x), _half_widths(self.y))

    def integrate(self, values: np.ndarray) -> float:
        """Tensor trapezoidal quadrature of nodal values over the domain."""
        return float(np.sum(self.control_areas() * values))

    def interface_x_weights(self) -> np.ndarray:
        return _half_widths(self.x)


def _half_widths(nodes: np.ndarray) -> np.ndarray:
    h = np.diff(nodes)
    w = np.zeros(len(nodes))
    w[:-1] += h / 2.0
    w[1:] += h / 2.0
    return w


@dataclass
class Field2D:
    grid: Grid2D
    values: np.ndarray
    quantity: str = "potential"

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.grid.shape:
            raise ValueError(f"field shape {self.values.shape} != grid shape {self.grid.shape}")

    def __add__(self, other: "Field2D") -> "Field2D":
        return Field2D(self.grid, self.values + other.values, self.quantity)


@dataclass
class Profile1D:
    x: np.ndarray
    values: np.ndarray
    quantity: str = "potential"

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float)
        self.values = np.asarray(self.values)
        if self.x.shape != self.values.shape:
            raise ValueError("x and values must have the same length")
        if np.any(np.diff(self.x) <= 0):
            raise ValueError("profile positions must be strictly ascending")


def _subdivide(a: float, b: float, h: float) -> np.ndarray:
    n = max(1, int(np.ceil((b - a) / h - 1e-9)))
    return np.linspace(a, b, n + 1)


def _graded(a: float, b: float, h_fine: float, h_max: float, fine_at: str,
            ratio: float = 1.3) -> np.ndarray:
    """Nodes on [a, b], spacing h_fine at the ``fine_at`` end growing
    geometrically up to ``h_max``."""
    length = b - a
    steps = []
    h = h_fine
    while sum(steps) + h < length - 1e-9:
        steps.append(h)
        h = min(h * ratio, h_max)
    steps.append(length - sum(steps))
    if len(steps) > 1 and steps[-1] < 0.5 * steps[-2]:
        last = steps.pop()
        steps[-1] += last
    steps = np.array(steps)
    if fine_at == "b":
        steps = steps[::-1]
    nodes = a + np.concatenate([[0.0], np.cumsum(steps)])
    nodes[-1] = b
    return nodes


def _axis(breaks: list[float], h: float) -> np.ndarray:
    pieces = []
    for a, b in zip(breaks[:-1], breaks[1:]):
        seg = _subdivide(a, b, h)
        pieces.append(seg if not pieces else seg[1:])
    return np.concatenate(pieces)


def build_grid(region_map: RegionMap, target_spacing, fine_spacing: float | None = None) -> Grid2D:
    """Tensor grid whose lines include every region edge.

    ``target_spacing`` is a float or ``(dx, dy)``; no cell exceeds it. With
    ``fine_spacing`` the y spacing is graded down to that value at the Si/SiO2
    interface and at the oxide/gate boundary.
    """
    if np.isscalar(target_spacing):
        dx = dy = float(target_spacing)
    else:
        dx, dy = (float(v) for v in target_spacing)
    if not (dx > 0 and dy > 0):
        raise ValueError("target_spacing must be positive")
    regions = region_map.regions
    xb = sorted({round(v, 9) for r in regions for v in (r.x0, r.x1)})
    yb = sorted({round(v, 9) for r in regions for v in (r.y0, r.y1)})
    x = _axis(xb, dx)
    if fine_spacing is None:
        y = _axis(yb, dy)
    else:
        ys = region_map.y_interface
        pieces = []
        h_fine = min(fine_spacing, dy)
        for a, b in zip(yb[:-1], yb[1:]):
            if b == ys:
                seg = _graded(a, b, h_fine, dy, "b")
            elif a == ys:
                seg = _graded(a, b, h_fine, dy, "a")
            else:
                seg = _subdivide(a, b, dy)
            pieces.append(seg if not pieces else seg[1:])
        y = np.concatenate(pieces)

    xc = 0.5 * (x[:-1] + x[1:])
    yc = 0.5 * (y[:-1] + y[1:])
    mat = np.empty((len(xc), len(yc)), dtype=object)
    lab = np.empty((len(xc), len(yc)), dtype=object)
    for r in regions:
        ix = (xc > r.x0) & (xc < r.x1)
        iy = (yc > r.y0) & (yc < r.y1)
        ncx, ncy = int(ix.sum()), int(iy.sum())
        if ncx < 2 or ncy < 2:
            raise SpacingTooCoarse(
                f"region {r.label or r.material} ({r.x1 - r.x0:g} x {r.y1 - r.y0:g} nm) "
                f"gets {ncx} x {ncy} cells; need at least 2 across each side")
        mat[np.ix_(ix, iy)] = r.material
        lab[np.ix_(ix, iy)] = r.label
    eps = np.vectorize(PERMITTIVITY.__getitem__, otypes=[float])(mat)
    iy_s = int(np.argmin(np.abs(y - region_map.y_interface)))
    return Grid2D(x, y, mat, lab, eps, iy_s, region_map)


def interface_slice(field: Field2D, grid: Grid2D | None = None) -> Profile1D:
    """Values along the Si/SiO2 interface node row, across the full width."""
    grid = field.grid if grid is None else grid
    return Profile1D(grid.x.copy(), field.values[:, grid.iy_interface].copy(), field.quantity)


# -- CSV export ---------------------------------------------------------

def field_to_csv(field: Field2D, path: str | Path) -> None:
    g = field.grid
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x_nm", "y_nm", "value", "quantity"])
        for i, xv in enumerate(g.x):
            for j, yv in enumerate(g.y):
                w.writerow([f"{xv:.6f}", f"{yv:.6f}", f"{field.values[i, j]:.12e}", field.quantity])


def profile_to_csv(profile: Profile1D, path: str | Path, value_name: str = "value") -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x_nm", value_name, "quantity"])
        for xv, v in zip(profile.x, profile.values):
            w.writerow([f"{xv:.6f}", f"{v:.12e}", profile.quantity])
