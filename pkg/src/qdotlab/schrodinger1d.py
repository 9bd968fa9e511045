"""Effective-mass Schrodinger eigenproblem along the interface slice and the
quantum electron density built from its eigenstates."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import eigh_tridiagonal, LinAlgError
from scipy.special import expit

from qdotlab.constants import HBAR2_2M0, kT
from qdotlab.grid import Profile1D

MIN_NODES = 50


class TooFewNodes(ValueError):
    pass


class ConvergenceFailure(RuntimeError):
    pass


@dataclass
class EigenSolution:
    """Bound states on the slice.

    ``psi`` has shape (n_states, n_nodes); each row is normalized with the
    trapezoidal weights of the slice, which vanish-free ends make exact.
    """

    x: np.ndarray
    energies: np.ndarray
    psi: np.ndarray
    mass: float

    @property
    def domain(self) -> tuple[float, float]:
        return float(self.x[0]), float(self.x[-1])

    @property
    def n_states(self) -> int:
        return len(self.energies)

    def wavefunction(self, i: int) -> Profile1D:
        return Profile1D(self.x, self.psi[i], "wavefunction")

    @property
    def wavefunctions(self) -> list[Profile1D]:
        return [self.wavefunction(i) for i in range(self.n_states)]


def trapezoid_weights(x: np.ndarray) -> np.ndarray:
    h = np.diff(x)
    w = np.zeros(len(x))
    w[:-1] += h / 2
    w[1:] += h / 2
    return w


def solve_bound_states(potential: Profile1D, mass: float = 0.19, n_states: int = 12,
                       e_max: float | None = None) -> EigenSolution:
    """Lowest eigenpairs of -(hbar^2/2m) psi'' + U psi = E psi, psi = 0 at both ends.

    Returns at least ``n_states`` states, and every state below ``e_max`` when
    given. Non-uniform grids are handled by the symmetric lumped-mass form.
    """
    x = np.asarray(potential.x, dtype=float)
    U = np.asarray(potential.values, dtype=float)
    if len(x) < MIN_NODES:
        raise TooFewNodes(f"slice has {len(x)} nodes, need at least {MIN_NODES}")
    if not np.all(np.isfinite(U)):
        raise ValueError("potential must be finite")
    if n_states < 1:
        raise ValueError("n_states must be >= 1")
    c = HBAR2_2M0 / mass
    h = np.diff(x)
    w = trapezoid_weights(x)[1:-1]
    d = c * (1.0 / h[:-1] + 1.0 / h[1:]) / w + U[1:-1]
    e = -c / (h[1:-1] * np.sqrt(w[:-1] * w[1:]))
    n_int = len(d)
    n_states = min(n_states, n_int)
    try:
        vals, vecs = eigh_tridiagonal(d, e, select="i", select_range=(0, n_states - 1))
        if e_max is not None and vals[-1] < e_max:
            vals, vecs = eigh_tridiagonal(d, e, select="v",
                                          select_range=(float(U.min()) - 1.0, e_max))
            if len(vals) < n_states:
                vals, vecs = eigh_tridiagonal(d, e, select="i",
                                              select_range=(0, n_states - 1))
    except LinAlgError as exc:
        raise ConvergenceFailure(f"tridiagonal eigensolver failed: {exc}") from exc
    psi = np.zeros((len(vals), len(x)))
    psi[:, 1:-1] = (vecs / np.sqrt(w)[:, None]).T
    # fix the sign so that each state starts positive: deterministic output
    for row in psi:
        k = np.argmax(np.abs(row) > 1e-8 * np.abs(row).max())
        if row[k] < 0:
            row *= -1.0
    norms = psi**2 @ trapezoid_weights(x)
    psi /= np.sqrt(norms)[:, None]
    return EigenSolution(x, vals, psi, mass)


def rebuild_tails(eigen: EigenSolution, potential: Profile1D, i: int,
                  i_match: int | None = None) -> np.ndarray:
    """State ``i`` with both tails recomputed from the discrete equation.

    An eigenvector carries an absolute error near machine epsilon, so deep
    tunnelling tails below ~1e-14 are noise. Running the three-point equation
    at the eigenvalue inward from each Dirichlet end follows the solution
    that grows towards the well, which is stable; the two pieces are scaled
    to the eigenvector at ``i_match`` (default: its largest entry).
    """
    x = eigen.x
    U = np.asarray(potential.values, dtype=float)
    E = float(eigen.energies[i])
    psi = eigen.psi[i].copy()
    m = int(np.argmax(np.abs(psi))) if i_match is None else int(i_match)
    out = psi.copy()
    out[m:] = _inward(x, U, E, eigen.mass, m, psi[m])
    out[: m + 1] = _inward(-x[::-1], U[::-1], E, eigen.mass, len(x) - 1 - m, psi[m])[::-1]
    return out / np.sqrt(np.sum(out**2 * trapezoid_weights(x)))


def _inward(x, U, E, mass, m, value):
    """Nodes m..n-1 of the solution vanishing at x[-1], scaled to ``value`` at m."""
    c = HBAR2_2M0 / mass
    h = np.diff(x)
    w = trapezoid_weights(x)
    n = len(x)
    t = np.zeros(n)
    t[n - 2] = 1.0
    for k in range(n - 2, m, -1):
        diag = c * (1.0 / h[k - 1] + 1.0 / h[k]) + (U[k] - E) * w[k]
        t[k - 1] = (diag * t[k] - c / h[k] * t[k + 1]) * h[k - 1] / c
        if abs(t[k - 1]) > 1e150:
            t[k - 1:] *= 1e-150
    return t[m:] * (value / t[m])


# -- occupancy -----------------------------------------------------------

def softplus(u):
    """ln(1 + exp(u)) without overflow for large positive u."""
    u = np.asarray(u, dtype=float)
    out = np.empty_like(u)
    pos = u > 0
    out[pos] = u[pos] + np.log1p(np.exp(-u[pos]))
    out[~pos] = np.log1p(np.exp(u[~pos]))
    return out


def subband_dos(mass_dos: float) -> float:
    """2-D density of states per valley and spin pair, m/(pi hbar^2) in nm^-2 eV^-1."""
    return mass_dos / (2.0 * np.pi * HBAR2_2M0)


def subband_occupancy(energies, fermi_level: float, temperature_k: float,
                      mass_dos: float = 0.19):
    """Sheet occupancy N_i (nm^-2) of 2-D subbands at ``energies`` (one valley)."""
    t = kT(temperature_k)
    u = (fermi_level - np.asarray(energies, dtype=float)) / t
    return subband_dos(mass_dos) * t * softplus(u)


@dataclass
class ChargeAssembly:
    x: np.ndarray
    density: np.ndarray      # electrons, nm^-3
    fermi_level: float
    temperature: float

    @property
    def density_cm3(self) -> np.ndarray:
        return self.density * 1e21


def assemble_charge(eigen: EigenSolution, fermi_level: float, T: float,
                    mass_dos: float = 0.19, valleys: int = 2) -> ChargeAssembly:
    """n(x) = g_v sum_i N_i |psi_i(x)|^2 with full Fermi-Dirac subband filling."""
    if not T > 0:
        raise ValueError("temperature must be positive")
    occ = valleys * subband_occupancy(eigen.energies, fermi_level, T, mass_dos)
    n = occ @ eigen.psi**2
    return ChargeAssembly(eigen.x, np.maximum(n, 0.0), fermi_level, T)


def predicted_density(eigen: EigenSolution, shift: np.ndarray, fermi_level: float, T: float,
                      mass_dos: float = 0.19, valleys: int = 2):
    """Density and its derivative when the local band moves by ``-shift`` eV.

    Eigenvectors are frozen and every level follows the local potential, the
    usual predictor for coupling a quantum density to a Newton Poisson solve.
    """
    t = kT(T)
    u = (fermi_level - eigen.energies[:, None] + shift[None, :]) / t
    p2 = eigen.psi**2
    g = valleys * subband_dos(mass_dos)
    n = g * t * np.sum(softplus(u) * p2, axis=0)
    dn = g * np.sum(expit(u) * p2, axis=0)
    return n, dn


def eigen_to_csv(eigen: EigenSolution, path) -> None:
    import csv
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["state", "energy_eV"] + [f"psi@{xv:.4f}" for xv in eigen.x])
        for i, (en, row) in enumerate(zip(eigen.energies, eigen.psi)):
            w.writerow([i, f"{en:.12e}"] + [f"{v:.10e}" for v in row])
