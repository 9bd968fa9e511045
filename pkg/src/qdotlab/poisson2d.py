"""Nonlinear 2-D Poisson solver on a boundary-fitted tensor grid.

Discretization is vertex-centred finite volume. Each node owns the dual cell
spanned by the midpoints of its neighbouring grid lines; the flux coefficient
across a dual face is the area-weighted permittivity of the (up to two)
primary cells the face crosses, divided by the edge length. With cellwise
constant permittivity this is the exact conservative form, so the Si/SiO2
jump sits on grid lines and is not smeared.

The equation solved is ``div(eps_r grad phi) = -(q/eps0) rho`` with the
potential in V, lengths in nm and the net charge ``rho`` in nm^-3.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from qdotlab.constants import (CHI_OFFSET_OX, CM2_TO_NM2, CM3_TO_NM3, Q_OVER_EPS0)
from qdotlab.device import DeviceSpec, trap_cumulative
from qdotlab.grid import Field2D, Grid2D

#: phi (nx, ny) -> (charge per control volume [nm^-1], d charge / d phi)
ResponseCharge = Callable[[np.ndarray], tuple[np.ndarray, np.ndarray]]


class NewtonDiverged(RuntimeError):
    pass


class SingularSystem(ValueError):
    pass


def stiffness_matrix(grid: Grid2D) -> sp.csr_matrix:
    """Symmetric positive semi-definite FV operator K with (K phi)_k equal
    to the net outward flux of -eps grad phi from control volume k."""
    x, y = grid.x, grid.y
    nx, ny = grid.shape
    hx, hy = np.diff(x), np.diff(y)
    eps = grid.permittivity_of_cell
    # x-edges (i,j)-(i+1,j): dual face crosses cells (i, j-1) and (i, j)
    wx = np.zeros((nx - 1, ny))
    wx[:, :-1] += eps * hy[None, :] / 2.0
    wx[:, 1:] += eps * hy[None, :] / 2.0
    ax = wx / hx[:, None]
    wy = np.zeros((nx, ny - 1))
    wy[:-1, :] += eps * hx[:, None] / 2.0
    wy[1:, :] += eps * hx[:, None] / 2.0
    ay = wy / hy[None, :]

    idx = np.arange(nx * ny).reshape(nx, ny)
    rows, cols, vals = [], [], []
    for a, i0, i1 in ((ax, idx[:-1, :], idx[1:, :]), (ay, idx[:, :-1], idx[:, 1:])):
        a, i0, i1 = a.ravel(), i0.ravel(), i1.ravel()
        rows += [i0, i1, i0, i1]
        cols += [i0, i1, i1, i0]
        vals += [a, a, -a, -a]
    K = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(nx * ny, nx * ny))
    return K.tocsr()


@dataclass
class PoissonProblem:
    grid: Grid2D
    dirichlet_mask: np.ndarray
    dirichlet_values: np.ndarray
    fixed_charge: Field2D                     # control-volume mean, nm^-3
    response_charge: Optional[ResponseCharge] = None
    tol: float = 1e-10
    max_newton: int = 60
    _K: sp.csr_matrix | None = field(default=None, repr=False)

    def __post_init__(self):
        if not np.all(np.isfinite(self.dirichlet_values[self.dirichlet_mask])):
            raise ValueError("Dirichlet values must be finite")

    @property
    def K(self) -> sp.csr_matrix:
        if self._K is None:
            self._K = stiffness_matrix(self.grid)
        return self._K

    def fixed_charge_integrated(self) -> np.ndarray:
        return self.fixed_charge.values * self.grid.control_areas()


@dataclass
class PotentialSolution:
    phi: Field2D
    newton_iterations: int
    final_residual: float
    residual_history: list[float]


def solve_poisson(problem: PoissonProblem, initial_guess: Field2D | np.ndarray | None = None
                  ) -> PotentialSolution:
    """Damped Newton solve; the residual is scaled by the operator diagonal so
    that the tolerance reads in volts."""
    grid = problem.grid
    nx, ny = grid.shape
    dmask = problem.dirichlet_mask.ravel()
    if not dmask.any():
        raise SingularSystem("no Dirichlet node anchors the potential")
    free = ~dmask
    K = problem.K
    Kff = K[free][:, free].tocsc()
    diag_all = K.diagonal().copy()
    diag_all[diag_all == 0] = 1.0
    diag = diag_all[free]

    if initial_guess is None:
        phi = np.zeros(nx * ny)
    else:
        phi = np.array(getattr(initial_guess, "values", initial_guess), dtype=float).ravel()
    phi[dmask] = problem.dirichlet_values.ravel()[dmask]
    q_fixed = problem.fixed_charge_integrated().ravel()

    def charge(p):
        if problem.response_charge is None:
            return q_fixed, None
        qr, dqr = problem.response_charge(p.reshape(nx, ny))
        return q_fixed + qr.ravel(), dqr.ravel()

    def residual(p):
        qt, dq = charge(p)
        r = (K @ p - Q_OVER_EPS0 * qt)[free] / diag
        return r, dq

    r, dq = residual(phi)
    history = [float(np.max(np.abs(r)))]
    it = 0
    while history[-1] >= problem.tol:
        if it >= problem.max_newton:
            raise NewtonDiverged(f"no convergence after {it} Newton steps, |r| = {history[-1]:.3e}")
        J = Kff if dq is None else (Kff - Q_OVER_EPS0 * sp.diags(dq[free])).tocsc()
        step = spla.spsolve(J, -r * diag)
        it += 1
        if dq is None:
            phi[free] += step
            r, dq = residual(phi)
            history.append(float(np.max(np.abs(r))))
            continue
        norm0 = np.linalg.norm(r)
        lam = 1.0
        for _ in range(21):
            trial = phi.copy()
            trial[free] += lam * step
            r_t, dq_t = residual(trial)
            if np.linalg.norm(r_t) < norm0 or np.max(np.abs(r_t)) < problem.tol:
                break
            lam *= 0.5
        else:
            raise NewtonDiverged(f"line search failed at Newton step {it}, |r| = {history[-1]:.3e}")
        phi, r, dq = trial, r_t, dq_t
        history.append(float(np.max(np.abs(r))))
    return PotentialSolution(Field2D(grid, phi.reshape(nx, ny), "potential"),
                             it, history[-1], history)


def boundary_flux(problem: PoissonProblem, solution: PotentialSolution) -> float:
    """Net displacement flux into the Dirichlet nodes, in charge units
    (nm^-1, per nm of width).

    Gauss's law on the discrete system: this equals minus the charge held by
    the free nodes. Charge sitting on Dirichlet nodes themselves never
    enters the solve and is not counted.
    """
    phi = solution.phi.values.ravel()
    dmask = problem.dirichlet_mask.ravel()
    return float(np.sum((problem.K @ phi)[dmask]) / Q_OVER_EPS0)


def enclosed_charge(problem: PoissonProblem, solution: PotentialSolution) -> float:
    qt = problem.fixed_charge_integrated().ravel().copy()
    if problem.response_charge is not None:
        qt += problem.response_charge(solution.phi.values)[0].ravel()
    return float(np.sum(qt[~problem.dirichlet_mask.ravel()]))


# -- device-specific assembly ------------------------------------------

def dirichlet_from_device(grid: Grid2D) -> tuple[np.ndarray, np.ndarray]:
    nx, ny = grid.shape
    mask = np.zeros((nx, ny), dtype=bool)
    values = np.zeros((nx, ny))
    for r in grid.region_map.regions:
        if not r.is_dirichlet:
            continue
        ix = (grid.x >= r.x0 - 1e-9) & (grid.x <= r.x1 + 1e-9)
        iy = (grid.y >= r.y0 - 1e-9) & (grid.y <= r.y1 + 1e-9)
        sel = np.ix_(ix, iy)
        mask[sel] = True
        values[sel] = r.bc[1]
    return mask, values


def fold_sheet(grid: Grid2D, sheet_nm2: np.ndarray) -> np.ndarray:
    """Nodal charge (nm^-1) of a sheet density given at interface nodes."""
    nx, ny = grid.shape
    out = np.zeros((nx, ny))
    out[:, grid.iy_interface] = sheet_nm2 * grid.interface_x_weights()
    return out


def trap_charge_nodal(grid: Grid2D, device: DeviceSpec) -> np.ndarray:
    """Occupied-trap charge folded exactly onto interface nodes (nm^-1).

    Each half edge receives the analytic integral of the Gaussian over it.
    """
    nx, ny = grid.shape
    out = np.zeros((nx, ny))
    trap = device.trap
    if trap.charge_state == "neutral" or trap.n_peak == 0:
        return out
    x = grid.x
    xm = np.concatenate([[x[0]], 0.5 * (x[:-1] + x[1:]), [x[-1]]])
    cum = trap_cumulative(xm, trap, device.trap_center) * CM2_TO_NM2
    per_node = np.diff(cum)
    silicon_cols = grid.node_mask(lambda m: m == "silicon")[:, grid.iy_interface]
    out[:, grid.iy_interface] = -per_node * silicon_cols
    return out


def doping_charge_nodal(grid: Grid2D, device: DeviceSpec) -> np.ndarray:
    """Net ionized dopant charge per control volume (nm^-1) in silicon cells."""
    nx, ny = grid.shape
    cells = (grid.material_of_cell == "silicon").astype(float)
    area = np.outer(np.diff(grid.x), np.diff(grid.y))
    qc = cells * area * device.n_body * CM3_TO_NM3
    out = np.zeros((nx, ny))
    out[:-1, :-1] += qc / 4
    out[1:, :-1] += qc / 4
    out[:-1, 1:] += qc / 4
    out[1:, 1:] += qc / 4
    return out


def device_problem(grid: Grid2D, device: DeviceSpec,
                   response: ResponseCharge | None = None, tol: float = 1e-10) -> PoissonProblem:
    mask, values = dirichlet_from_device(grid)
    q = doping_charge_nodal(grid, device) + trap_charge_nodal(grid, device)
    dens = q / grid.control_areas()
    return PoissonProblem(grid, mask, values, Field2D(grid, dens, "charge"), response, tol=tol)


def conduction_band(phi: Field2D) -> Field2D:
    """E_c = -phi in silicon (eV); oxide nodes carry the 3.1 eV offset.

    Nodes on the Si/SiO2 interface count as silicon.
    """
    grid = phi.grid
    si = grid.node_mask(lambda m: m in ("silicon", "source_contact", "drain_contact"))
    ox = grid.node_mask(lambda m: m.endswith("oxide")) & ~si
    return Field2D(grid, -phi.values + CHI_OFFSET_OX * ox, "conduction_band")
