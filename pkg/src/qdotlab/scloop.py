"""Self-consistent Schrodinger-Poisson iteration with temperature continuation.

A cold start is only allowed at T >= 200 K. Colder targets are reached by
walking a descending temperature ladder, each stage warm-started from the
converged state of the previous one.
"""

from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass, field

import numpy as np

from qdotlab.constants import kT
from qdotlab.device import DeviceSpec, build_device
from qdotlab.grid import Field2D, Grid2D, Profile1D, build_grid, interface_slice
from qdotlab.poisson2d import (conduction_band, device_problem, solve_poisson,
                               NewtonDiverged)
from qdotlab.schrodinger1d import (ChargeAssembly, EigenSolution, assemble_charge,
                                   predicted_density, solve_bound_states)

log = logging.getLogger(__name__)

COLD_START_MIN_T = 200.0


class MaxIterExceeded(RuntimeError):
    def __init__(self, msg, history=None, temperature=None):
        super().__init__(msg)
        self.history = history or []
        self.temperature = temperature


class ColdStartAtCryo(ValueError):
    pass


class StageFailed(RuntimeError):
    def __init__(self, temperature, cause):
        super().__init__(f"stage T = {temperature:g} K failed: {cause}")
        self.temperature = temperature
        self.cause = cause


@dataclass(frozen=True)
class SolverConfig:
    """Numerical and model settings shared by every stage."""

    spacing: tuple[float, float] = (1.0, 1.0)
    fine_spacing: float | None = 0.5
    mass: float = 0.19
    mass_dos: float = 0.19
    valleys: int = 2
    inversion_thickness: float = 0.5   # nm, layer holding the slice density
    n_states: int = 12
    occupancy_cutoff_kT: float = 40.0
    fermi_mode: str = "single"         # or "split": drain half uses E_F = -V_d
    poisson_tol: float = 1e-10
    anderson: bool = False
    anderson_depth: int = 5


@dataclass
class IterationRecord:
    iteration: int
    psi_norm_metric: float
    dphi_inf_norm: float


@dataclass
class ConvergedState:
    device: DeviceSpec
    grid: Grid2D
    phi: Field2D
    interface_band: Profile1D
    eigen: EigenSolution
    charge: ChargeAssembly
    history: list[IterationRecord]
    temperature: float
    stage_iterations: list[tuple[float, int]] = field(default_factory=list)

    @property
    def iterations(self) -> int:
        return len(self.history)


@dataclass(frozen=True)
class ContinuationSchedule:
    temperatures: tuple[float, ...] = (300.0, 200.0, 100.0, 50.0, 20.0, 10.0)
    max_iter: int = 200
    alpha: float = 0.2
    tol_sc: float = 1e-6

    def __post_init__(self):
        t = np.asarray(self.temperatures, dtype=float)
        if len(t) == 0:
            raise ValueError("temperature ladder is empty")
        if np.any(t <= 0):
            raise ValueError("temperatures must be positive")
        if np.any(np.diff(t) >= 0):
            raise ValueError(f"temperature ladder must be strictly descending: {self.temperatures}")
        if not 0 < self.alpha <= 1:
            raise ValueError("mixing factor alpha must lie in (0, 1]")

    @classmethod
    def to_target(cls, target: float, **kw) -> "ContinuationSchedule":
        ladder = [t for t in (300.0, 200.0, 100.0, 50.0, 20.0) if t > target]
        return cls(tuple(ladder) + (float(target),), **kw)

    @property
    def target(self) -> float:
        return float(self.temperatures[-1])


def initial_wavefunction(grid: Grid2D) -> Profile1D:
    """Gaussian centred mid-channel whose density has FWHM = channel length / 6.

    The continuum-normalized shape is sampled as is: at that width the tails
    are ~8 standard deviations inside the slice, so the discrete norm is 1 to
    rounding and every grid sees the same function at its nodes.
    """
    x = grid.x
    dev = grid.region_map.device
    centre = 0.5 * (x[0] + x[-1])
    sigma = dev.channel_length / 6.0 / (2.0 * np.sqrt(2.0 * np.log(2.0)))
    return Profile1D(x, gaussian_wavefunction(x, centre, sigma), "wavefunction")


def gaussian_wavefunction(x: np.ndarray, centre: float, width: float) -> np.ndarray:
    """Continuum Gaussian amplitude whose density has standard deviation ``width``."""
    return (2.0 * np.pi * width**2) ** -0.25 * np.exp(-((x - centre) ** 2) / (4.0 * width**2))


def make_grid(device: DeviceSpec, config: SolverConfig) -> Grid2D:
    return build_grid(build_device(device), config.spacing, config.fine_spacing)


class _Mixer:
    """Linear mixing, optionally Anderson-accelerated on the free nodes."""

    def __init__(self, alpha: float, anderson: bool, depth: int):
        self.alpha = alpha
        self.anderson = anderson
        self.depth = depth
        self.xs: list[np.ndarray] = []
        self.fs: list[np.ndarray] = []

    def __call__(self, x: np.ndarray, gx: np.ndarray) -> np.ndarray:
        f = gx - x
        if not self.anderson:
            return x + self.alpha * f
        self.xs.append(x.copy())
        self.fs.append(f.copy())
        if len(self.xs) > self.depth + 1:
            self.xs.pop(0)
            self.fs.pop(0)
        if len(self.xs) == 1:
            return x + self.alpha * f
        dF = np.array([self.fs[i + 1] - self.fs[i] for i in range(len(self.fs) - 1)]).T
        dX = np.array([self.xs[i + 1] - self.xs[i] for i in range(len(self.xs) - 1)]).T
        gamma, *_ = np.linalg.lstsq(dF, f, rcond=None)
        return x + self.alpha * f - (dX + self.alpha * dF) @ gamma


def _slice_fermi(device: DeviceSpec, x: np.ndarray, config: SolverConfig) -> np.ndarray:
    if config.fermi_mode == "split":
        return np.where(x > 0.5 * (x[0] + x[-1]), -device.v_d, -device.v_s)
    return np.full_like(x, -device.v_s)


def _pair_density(eigen: EigenSolution) -> np.ndarray:
    k = min(2, eigen.n_states)
    return np.sum(eigen.psi[:k] ** 2, axis=0) / k


def sc_iterate_at_T(device: DeviceSpec, warm_start: ConvergedState | None, T: float,
                    alpha: float = 0.2, tol_sc: float = 1e-6, max_iter: int = 200,
                    config: SolverConfig = SolverConfig()) -> ConvergedState:
    """Damped Poisson <-> Schrodinger fixed point at temperature ``T``.

    Each round solves the interface eigenproblem on the current band, hands
    Poisson a density predictor built from those states, and mixes the new
    potential with the old one. Stops when the unmixed update is below
    ``tol_sc`` volts on every node.
    """
    if warm_start is None and T < COLD_START_MIN_T:
        raise ColdStartAtCryo(
            f"cold start requested at {T:g} K; start at >= {COLD_START_MIN_T:g} K and continue down")
    device = dataclasses.replace(device, temperature_k=float(T))
    grid = make_grid(device, config) if warm_start is None else warm_start.grid
    if warm_start is not None and not grid.same_geometry(make_grid(device, config)):
        raise ValueError("warm start was computed on a different geometry")

    iy = grid.iy_interface
    nx, ny = grid.shape
    si_row = grid.node_mask(lambda m: m == "silicon")[:, iy]
    x_w = grid.interface_x_weights()
    e_f = _slice_fermi(device, grid.x, config)
    e_cut = float(np.max(e_f)) + config.occupancy_cutoff_kT * kT(T)

    base = device_problem(grid, device, tol=config.poisson_tol)
    free = ~base.dirichlet_mask

    if warm_start is None:
        phi = solve_poisson(base).phi.values.copy()
        prev_density = initial_wavefunction(grid).values ** 2
    else:
        phi = warm_start.phi.values.copy()
        prev_density = _pair_density(warm_start.eigen)

    def eigen_of(phi_values):
        band = interface_slice(conduction_band(Field2D(grid, phi_values)))
        return band, solve_bound_states(band, config.mass, config.n_states, e_max=e_cut)

    mixer = _Mixer(alpha, config.anderson, config.anderson_depth)
    history: list[IterationRecord] = []
    fold = config.inversion_thickness * x_w * si_row

    for k in range(1, max_iter + 1):
        band, eigen = eigen_of(phi)
        phi_ref = phi[:, iy].copy()

        def response(p, eigen=eigen, phi_ref=phi_ref):
            shift = p[:, iy] - phi_ref
            n, dn = _predictor(eigen, shift, e_f, T, config)
            q = np.zeros((nx, ny))
            dq = np.zeros((nx, ny))
            q[:, iy] = -n * fold
            dq[:, iy] = -dn * fold
            return q, dq

        base.response_charge = response
        try:
            solved = solve_poisson(base, phi).phi.values
        except NewtonDiverged as exc:
            raise MaxIterExceeded(f"Poisson failed in round {k}: {exc}", history, T) from exc
        update = solved - phi
        dphi = float(np.max(np.abs(update[free])))
        density = _pair_density(eigen)
        metric = float(np.sum(np.abs(density - prev_density) * x_w))
        prev_density = density
        history.append(IterationRecord(k, metric, dphi))
        log.debug("T=%g K round %d: dphi=%.3e psi-metric=%.3e", T, k, dphi, metric)
        if not np.isfinite(dphi):
            raise MaxIterExceeded(f"non-finite update in round {k}", history, T)
        if dphi < tol_sc:
            phi = solved
            break
        new = phi.copy()
        new[free] = mixer(phi[free], solved[free])
        phi = new
    else:
        raise MaxIterExceeded(
            f"no self-consistency at {T:g} K after {max_iter} rounds "
            f"(last update {history[-1].dphi_inf_norm:.3e} V)", history, T)

    band, eigen = eigen_of(phi)
    charge = _assemble(eigen, e_f, T, config)
    stages = list(warm_start.stage_iterations) if warm_start is not None else []
    stages.append((float(T), len(history)))
    return ConvergedState(device, grid, Field2D(grid, phi, "potential"), band, eigen,
                          charge, history, float(T), stages)


def _predictor(eigen, shift, e_f, T, config):
    if np.all(e_f == e_f[0]):
        return predicted_density(eigen, shift, float(e_f[0]), T, config.mass_dos, config.valleys)
    n, dn = np.zeros_like(shift), np.zeros_like(shift)
    for level in np.unique(e_f):
        sel = e_f == level
        a, b = predicted_density(eigen, shift, float(level), T, config.mass_dos, config.valleys)
        n[sel], dn[sel] = a[sel], b[sel]
    return n, dn


def _assemble(eigen, e_f, T, config) -> ChargeAssembly:
    n, _ = _predictor(eigen, np.zeros_like(eigen.x), e_f, T, config)
    return ChargeAssembly(eigen.x, n, float(e_f[0]), float(T))


def continuation_solve(device: DeviceSpec, schedule: ContinuationSchedule = ContinuationSchedule(),
                       config: SolverConfig = SolverConfig()) -> ConvergedState:
    """Walk the temperature ladder down to ``schedule.target``."""
    state = None
    for T in schedule.temperatures:
        try:
            state = sc_iterate_at_T(device, state, T, schedule.alpha, schedule.tol_sc,
                                    schedule.max_iter, config)
        except (MaxIterExceeded, ColdStartAtCryo, NewtonDiverged) as exc:
            raise StageFailed(T, exc) from exc
    return state


def history_to_csv(history: list[IterationRecord], path) -> None:
    import csv
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iteration", "psi_norm_metric", "dphi_inf_norm"])
        for r in history:
            w.writerow([r.iteration, f"{r.psi_norm_metric:.12e}", f"{r.dphi_inf_norm:.12e}"])
