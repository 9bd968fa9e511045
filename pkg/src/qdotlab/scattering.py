"""Full-wave transmission through a 1-D potential with transfer matrices.

The potential is treated as piecewise constant. In each segment the wave is
``a exp(ik(x - x_ref)) + b exp(-ik(x - x_ref))`` with
``k = sqrt(2m(E - U))/hbar`` (imaginary below the local band). Amplitudes are
propagated from the transmitted side towards the incident side, where the
growing exponential of an evanescent segment is the one being followed.
After every segment the pair is renormalized and the scale factor is kept
as a log, so opaque barriers never overflow.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import trapezoid

from qdotlab.constants import HBAR2_2M0
from qdotlab.grid import Profile1D


class NonPropagatingEnergy(UserWarning):
    pass


class EmptyEnergyGrid(ValueError):
    pass


class LevelNeverReached(ValueError):
    pass


class WindowOutOfRange(ValueError):
    pass


@dataclass
class ScatteringSpectrum:
    energies: np.ndarray
    T: np.ndarray
    R: np.ndarray
    k_in: np.ndarray
    k_out: np.ndarray
    skipped: np.ndarray = field(default_factory=lambda: np.zeros(0))
    barrier_top: float = np.nan

    def __len__(self) -> int:
        return len(self.energies)


def profile_segments(potential: Profile1D):
    """Segment edges and heights of the piecewise-constant reading of a
    sampled potential: one segment per grid interval at the interval mean."""
    x = np.asarray(potential.x, dtype=float)
    u = np.asarray(potential.values, dtype=float)
    return x, 0.5 * (u[:-1] + u[1:]), float(u[0]), float(u[-1])


def _wavenumbers(E, U, c):
    d = (E - U) / c
    d = np.where(np.abs(d) < 1e-14, 1e-14, d)
    return np.sqrt(d.astype(complex))


def _sweep(edges, heights, lead_l, lead_r, c, E, keep_nodes=False):
    """Backward amplitude sweep. Returns (a0, b0, log_scale, node data)."""
    nE = len(E)
    k_r = _wavenumbers(E, lead_r, c)
    a = np.ones(nE, dtype=complex)
    b = np.zeros(nE, dtype=complex)
    logs = np.zeros(nE)
    k_right = k_r
    nodes = []
    if keep_nodes:
        nodes.append((a + b, logs.copy()))
    for j in range(len(heights) - 1, -1, -1):
        k_l = _wavenumbers(E, heights[j], c)
        ratio = k_right / k_l
        a, b = 0.5 * ((1 + ratio) * a + (1 - ratio) * b), 0.5 * ((1 - ratio) * a + (1 + ratio) * b)
        d = edges[j + 1] - edges[j]
        grow = np.imag(k_l) * d                # log gain of a, loss of b
        phase = np.exp(-1j * np.real(k_l) * d)
        with np.errstate(divide="ignore"):
            la = np.log(np.abs(a)) + grow
            lb = np.log(np.abs(b)) - grow
        m = np.maximum(la, lb)
        ua = np.where(a != 0, a / np.where(a != 0, np.abs(a), 1), 0)
        ub = np.where(b != 0, b / np.where(b != 0, np.abs(b), 1), 0)
        a = ua * phase * np.exp(la - m)
        b = ub * np.conj(phase) * np.exp(lb - m)
        logs = logs + m
        k_right = k_l
        if keep_nodes:
            nodes.append((a + b, logs.copy()))
    k_l = _wavenumbers(E, lead_l, c)
    ratio = k_right / k_l
    a, b = 0.5 * ((1 + ratio) * a + (1 - ratio) * b), 0.5 * ((1 - ratio) * a + (1 + ratio) * b)
    return a, b, logs, k_l, k_r, nodes


def transmission_piecewise(edges, heights, lead_left: float, lead_right: float,
                           mass: float, energies, barrier_top: float | None = None
                           ) -> ScatteringSpectrum:
    """Spectrum of an explicit piecewise-constant potential.

    ``heights[j]`` holds on ``[edges[j], edges[j+1]]``; the leads extend the
    first/last levels to infinity. Energies at or below either lead level are
    skipped with a :class:`NonPropagatingEnergy` warning.
    """
    E = np.atleast_1d(np.asarray(energies, dtype=float))
    if E.size == 0:
        raise EmptyEnergyGrid("energy grid is empty")
    edges = np.asarray(edges, dtype=float)
    heights = np.asarray(heights, dtype=float)
    if len(edges) != len(heights) + 1:
        raise ValueError("need len(edges) == len(heights) + 1")
    ok = (E > lead_left) & (E > lead_right)
    if not ok.all():
        warnings.warn(f"{int((~ok).sum())} energies below a lead level skipped",
                      NonPropagatingEnergy, stacklevel=2)
    Ep = E[ok]
    c = HBAR2_2M0 / mass
    top = float(np.max(np.concatenate([heights, [lead_left, lead_right]]))) \
        if barrier_top is None else barrier_top
    if Ep.size == 0:
        empty = np.zeros(0)
        return ScatteringSpectrum(empty, empty, empty, empty, empty, E[~ok], top)
    a, b, logs, k_l, k_r, _ = _sweep(edges, heights, lead_left, lead_right, c, Ep)
    kin, kout = np.real(k_l), np.real(k_r)
    T = (kout / kin) * np.exp(-2.0 * (logs + np.log(np.abs(a))))
    R = np.abs(b / a) ** 2
    return ScatteringSpectrum(Ep, T, R, kin, kout, E[~ok], top)


def default_energy_grid(potential: Profile1D, n: int = 400, span: float = 0.6) -> np.ndarray:
    lead = max(float(potential.values[0]), float(potential.values[-1]))
    return np.linspace(lead + 1e-3, lead + span, n)


def transmission_spectrum(potential: Profile1D, mass: float = 0.19, energies=None
                          ) -> ScatteringSpectrum:
    """T(E), R(E) for unit incidence from the left through a sampled profile."""
    if energies is None:
        energies = default_energy_grid(potential)
    edges, heights, ul, ur = profile_segments(potential)
    return transmission_piecewise(edges, heights, ul, ur, mass, energies,
                                  barrier_top=float(np.max(potential.values)))


def scattering_wavefunction(potential: Profile1D, mass: float, energy: float,
                            from_right: bool = False) -> np.ndarray:
    """Complex scattering state on the profile nodes for unit incident amplitude."""
    if from_right:
        flipped = Profile1D(-potential.x[::-1], potential.values[::-1], potential.quantity)
        return scattering_wavefunction(flipped, mass, energy)[::-1]
    edges, heights, ul, ur = profile_segments(potential)
    c = HBAR2_2M0 / mass
    E = np.array([float(energy)])
    if not (E[0] > ul and E[0] > ur):
        raise ValueError("energy below a lead level")
    a, b, logs, _, _, nodes = _sweep(edges, heights, ul, ur, c, E, keep_nodes=True)
    # nodes run right to left; the last entry sits at edges[0]
    ref = np.log(np.abs(a[0])) + logs[0]
    phase_a = a[0] / np.abs(a[0])
    vals = np.array([v[0] * np.exp(lg[0] - ref) / phase_a for v, lg in nodes[::-1]])
    return vals


# -- spectrum metrics -----------------------------------------------------

def energy_at_T_level(spectrum: ScatteringSpectrum, level: float = 0.9) -> float:
    """Lowest energy at which T first reaches ``level`` (linear interpolation)."""
    E, T = spectrum.energies, spectrum.T
    hit = np.nonzero(T >= level)[0]
    if hit.size == 0:
        raise LevelNeverReached(f"T never reaches {level} on [{E[0]:.4g}, {E[-1]:.4g}] eV")
    i = int(hit[0])
    if i == 0:
        return float(E[0])
    t0, t1 = T[i - 1], T[i]
    return float(E[i - 1] + (level - t0) * (E[i] - E[i - 1]) / (t1 - t0))


def average_tunnel_coupling(spectrum: ScatteringSpectrum, window: tuple[float, float] | None = None
                            ) -> float:
    """Trapezoidal mean of T(E) over ``window`` (default: whole spectrum)."""
    E, T = spectrum.energies, spectrum.T
    if window is None:
        window = (float(E[0]), float(E[-1]))
    lo, hi = window
    if len(E) < 2 or lo < E[0] - 1e-12 or hi > E[-1] + 1e-12 or hi <= lo:
        raise WindowOutOfRange(f"window {window} outside spectrum [{E[0]}, {E[-1]}]")
    inner = (E > lo) & (E < hi)
    xs = np.concatenate([[lo], E[inner], [hi]])
    ys = np.concatenate([[np.interp(lo, E, T)], T[inner], [np.interp(hi, E, T)]])
    return float(trapezoid(ys, xs) / (hi - lo))


@dataclass
class RandomnessResult:
    count: int
    saturation_energy: float
    under_resolved: bool


def strict_extrema(values: np.ndarray) -> np.ndarray:
    v = np.asarray(values)
    if len(v) < 3:
        return np.zeros(0, dtype=int)
    left, mid, right = v[:-2], v[1:-1], v[2:]
    ext = ((mid > left) & (mid > right)) | ((mid < left) & (mid < right))
    return np.nonzero(ext)[0] + 1


def saturation_energy(spectrum: ScatteringSpectrum, band: float = 0.02,
                      tail_fraction: float = 0.1) -> float:
    """Lowest energy after which T stays within ``band`` of its high-energy mean."""
    T, E = spectrum.T, spectrum.energies
    n_tail = max(1, int(round(tail_fraction * len(T))))
    mean = np.mean(T[-n_tail:])
    outside = np.nonzero(np.abs(T - mean) > band)[0]
    if outside.size == 0:
        return float(E[0])
    i = int(outside[-1]) + 1
    return float(E[min(i, len(E) - 1)])


def randomness_metric(spectrum: ScatteringSpectrum, band: float = 0.02) -> RandomnessResult:
    """Number of T(E) oscillation extrema before T saturates."""
    if len(spectrum) < 3:
        return RandomnessResult(0, float("nan"), False)
    e_sat = saturation_energy(spectrum, band)
    ext = strict_extrema(spectrum.T)
    ext = ext[spectrum.energies[ext] < e_sat]
    under = bool(len(ext) > 1 and np.min(np.diff(ext)) < 5)
    return RandomnessResult(int(len(ext)), e_sat, under)


def transmission_modes(spectrum: ScatteringSpectrum, below: float | None = None) -> int:
    """Local maxima of T(E) below ``below`` (default: the barrier top)."""
    top = spectrum.barrier_top if below is None else below
    ext = strict_extrema(spectrum.T)
    peaks = [i for i in ext if spectrum.T[i] > spectrum.T[i - 1] and spectrum.energies[i] < top]
    return len(peaks)


def spectrum_to_csv(spectrum: ScatteringSpectrum, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["energy_eV", "T_coeff", "R_coeff"])
        for e, t, r in zip(spectrum.energies, spectrum.T, spectrum.R):
            w.writerow([f"{e:.9f}", f"{t:.12e}", f"{r:.12e}"])
