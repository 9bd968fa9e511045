"""Double-dot analysis on the interface slice: per-dot states, their overlap,
S/D leakage and the well/barrier figures used throughout the sweeps."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import trapezoid

from qdotlab.device import DeviceSpec
from qdotlab.grid import Profile1D
from qdotlab.schrodinger1d import (EigenSolution, rebuild_tails, solve_bound_states,
                                   trapezoid_weights)


class TooFewStates(ValueError):
    pass


class GridMismatch(ValueError):
    pass


@dataclass
class DotPair:
    psi_left: Profile1D
    psi_right: Profile1D
    dot_windows: tuple[tuple[float, float], tuple[float, float]]
    localization_quality: tuple[float, float]
    method: str = "pm"
    #: inter-dot barrier top minus the mean dot-pair energy, eV (inf if unknown)
    barrier_margin: float = float("inf")

    @property
    def well_localized(self) -> bool:
        """Both states sit in their own dot and the pair lies below the
        inter-dot barrier. A single merged well also splits left/right
        cleanly under rotation, so the norm test alone cannot catch it."""
        return min(self.localization_quality) > 0.8 and self.barrier_margin > 0


def window_weight(psi: Profile1D, a: float, b: float) -> float:
    """Integral of |psi|^2 over [a, b]. The density is interpolated linearly,
    so weights of adjacent windows add up to the whole-slice trapezoid norm."""
    x = psi.x
    rho = np.abs(psi.values) ** 2
    a, b = max(a, x[0]), min(b, x[-1])
    if b <= a:
        return 0.0
    inner = (x > a) & (x < b)
    xs = np.concatenate([[a], x[inner], [b]])
    ys = np.concatenate([[np.interp(a, x, rho)], rho[inner], [np.interp(b, x, rho)]])
    return float(trapezoid(ys, xs))


def overlap_integral(psi_a: Profile1D, psi_b: Profile1D) -> float:
    """|<psi_a|psi_b>| by trapezoidal quadrature on the shared grid."""
    if psi_a.x.shape != psi_b.x.shape or not np.allclose(psi_a.x, psi_b.x, rtol=0, atol=1e-9):
        raise GridMismatch("wavefunctions live on different grids")
    w = trapezoid_weights(psi_a.x)
    return float(abs(np.sum(np.conj(psi_a.values) * psi_b.values * w)))


def _contact_weight(psi: Profile1D, device: DeviceSpec) -> float:
    w = device.total_length
    return window_weight(psi, 0.0, device.l_sd) + window_weight(psi, w - device.l_sd, w)


def _dot_indices(eigen: EigenSolution, device: DeviceSpec, n: int) -> list[int]:
    return [i for i in range(eigen.n_states)
            if _contact_weight(eigen.wavefunction(i), device) < 0.5][:n]


def dot_state_indices(eigen: EigenSolution, device: DeviceSpec) -> tuple[int, int]:
    """The two lowest states that are not S/D contact states.

    A contact state keeps most of its norm inside the S/D columns; everything
    else, however far it leaks into the spacers, counts as a dot state.
    """
    picked = _dot_indices(eigen, device, 2)
    if len(picked) < 2:
        raise TooFewStates(f"need two dot states, found {len(picked)} of {eigen.n_states}")
    return picked[0], picked[1]


def _localize(psi1: np.ndarray, psi2: np.ndarray, x: np.ndarray, split: float):
    """Rotate within span{psi1, psi2} to the pair of maximal left/right
    separation: eigenvectors of the left-half projector in that span."""
    w = trapezoid_weights(x) * (x < split)
    w = w + 0.5 * trapezoid_weights(x) * (x == split)
    P = np.array([[np.sum(psi1 * psi1 * w), np.sum(psi1 * psi2 * w)],
                  [np.sum(psi1 * psi2 * w), np.sum(psi2 * psi2 * w)]])
    _, vec = np.linalg.eigh(P)
    right = vec[0, 0] * psi1 + vec[1, 0] * psi2
    left = vec[0, 1] * psi1 + vec[1, 1] * psi2
    return left, right


def _positive(v: np.ndarray) -> np.ndarray:
    return v if v[np.argmax(np.abs(v))] > 0 else -v


def extract_dot_states(state, device: DeviceSpec, method: str = "pm",
                       band: Profile1D | None = None) -> DotPair:
    """Left/right dot states from a converged state (or a bare EigenSolution).

    ``pm``: psi_L, psi_R = (psi1 +/- psi2)/sqrt(2) from the lowest dot pair.
    The mixing angle is taken as the one that best separates left from
    right; for a clean bonding/antibonding pair that is exactly the 45 degree
    +/- combination, and it stays well defined when the pair is numerically
    degenerate and the eigensolver hands back an arbitrary mixture.
    ``window``: each dot's own ground state with the other dot removed, which
    needs the converged interface ``band``.
    """
    if isinstance(state, EigenSolution):
        eigen = state
    else:
        eigen = state.eigen
        band = state.interface_band if band is None else band
    windows = tuple(device.plunger_windows())
    if len(windows) != 2:
        raise ValueError("device must define exactly two plunger windows")
    x = eigen.x
    split = 0.5 * (windows[0][1] + windows[1][0])
    if method == "window":
        if band is None:
            raise ValueError("method 'window' needs the interface band")
        left, right = window_ground_states(band, windows, eigen.mass)
    else:
        if eigen.n_states < 2:
            raise TooFewStates(f"need two bound states, have {eigen.n_states}")
        i, j = dot_state_indices(eigen, device)
        psi1, psi2 = eigen.psi[i], eigen.psi[j]
        if method == "pm":
            left, right = _localize(psi1, psi2, x, split)
        else:
            raise ValueError(f"unknown method {method!r}")
        left, right = _positive(left), _positive(right)
    pl, pr = Profile1D(x, left, "wavefunction"), Profile1D(x, right, "wavefunction")
    quality = (window_weight(pl, *windows[0]), window_weight(pr, *windows[1]))
    margin = float("inf")
    if band is not None and eigen.n_states >= 2:
        i, j = dot_state_indices(eigen, device)
        top = float(np.interp(barrier_position(band, windows), band.x, band.values))
        margin = top - 0.5 * float(eigen.energies[i] + eigen.energies[j])
    return DotPair(pl, pr, windows, quality, method, margin)


def barrier_position(band: Profile1D, windows) -> float:
    """Location of the highest band point between the two plunger windows."""
    x = band.x
    sel = (x >= windows[0][1]) & (x <= windows[1][0])
    if not sel.any():
        sel = (x >= 0.5 * sum(windows[0])) & (x <= 0.5 * sum(windows[1]))
    i = np.nonzero(sel)[0][np.argmax(band.values[sel])]
    return float(x[i])


def window_ground_states(band: Profile1D, windows, mass: float = 0.19, n_states: int = 12):
    """Ground state of each dot with its neighbour flattened away.

    For the left dot the band right of the inter-dot barrier top is held at
    the barrier-top value, and vice versa. The state returned is the lowest
    one holding most of its norm inside the dot's own window, with tails
    rebuilt so that overlaps far below machine epsilon stay meaningful.
    """
    x, u = band.x, band.values
    xb = barrier_position(band, windows)
    ub = float(np.interp(xb, x, u))
    out = []
    for k, side in enumerate((x > xb, x < xb)):
        flat = Profile1D(x, np.where(side, ub, u))
        eig = solve_bound_states(flat, mass, n_states)
        weights = [window_weight(eig.wavefunction(i), *windows[k]) for i in range(eig.n_states)]
        good = [i for i, wt in enumerate(weights) if wt > 0.5]
        i = good[0] if good else int(np.argmax(weights))
        inside = np.nonzero((x >= windows[k][0]) & (x <= windows[k][1]))[0]
        m = inside[np.argmax(np.abs(eig.psi[i][inside]))]
        out.append(_positive(rebuild_tails(eig, flat, i, m)))
    return out[0], out[1]


def interdot_profile(band: Profile1D, device: DeviceSpec) -> Profile1D:
    """Band between the two plunger centres: the tunnel barrier separating
    the dots, with each half-dot acting as a lead."""
    (a1, b1), (a2, b2) = device.plunger_windows()
    x = band.x
    sel = (x >= 0.5 * (a1 + b1) - 1e-9) & (x <= 0.5 * (a2 + b2) + 1e-9)
    return Profile1D(x[sel], band.values[sel], band.quantity)


def exchange_coupling_proxy(pair: DotPair) -> float:
    """Exchange proxy (overlap): |<psi_L|psi_R>| of the pair.

    A dimensionless monotone surrogate for the exchange coupling, not an
    energy. Use a pair from ``method="window"``: the ``pm`` pair is an
    orthonormal combination of two eigenstates, so its overlap is zero by
    construction.
    """
    return overlap_integral(pair.psi_left, pair.psi_right)


def sd_leakage_fraction(psi: Profile1D, device: DeviceSpec) -> float:
    """Share of |psi|^2 over the spacer and S/D extents."""
    total = window_weight(psi, psi.x[0], psi.x[-1])
    leak = sum(window_weight(psi, a, b) for a, b in device.access_windows())
    return float(min(max(leak / total, 0.0), 1.0))


def under_gate_fraction(psi: Profile1D, device: DeviceSpec) -> float:
    a = device.l_sd + device.l_sp
    total = window_weight(psi, psi.x[0], psi.x[-1])
    return window_weight(psi, a, a + device.stack_length) / total


def pair_density(pair: DotPair) -> Profile1D:
    """Mean density of the two dot states, as a normalized amplitude."""
    rho = 0.5 * (pair.psi_left.values ** 2 + pair.psi_right.values ** 2)
    return Profile1D(pair.psi_left.x, np.sqrt(rho), "wavefunction")


# -- band-profile figures --------------------------------------------------

@dataclass
class WellMetrics:
    well_bottoms: tuple[float, float]   # eV
    well_depths: tuple[float, float]    # eV, against the lower confining side
    barrier_top: float                  # eV, highest point between the dots
    barrier_height: float               # eV, barrier top above the mean well bottom


def well_metrics(band: Profile1D, device: DeviceSpec) -> WellMetrics:
    x, u = band.x, band.values
    (a1, b1), (a2, b2) = device.plunger_windows()

    def vmin(a, b):
        return float(u[(x >= a) & (x <= b)].min())

    def vmax(a, b):
        return float(u[(x >= a) & (x <= b)].max())

    bottoms = (vmin(a1, b1), vmin(a2, b2))
    top = vmax(b1, a2)
    # outer confinement: spacer side of each dot, excluding the S/D column
    left_wall = vmax(device.l_sd, a1)
    right_wall = vmax(b2, device.total_length - device.l_sd)
    depths = (min(left_wall, top) - bottoms[0], min(right_wall, top) - bottoms[1])
    return WellMetrics(bottoms, depths, top, top - 0.5 * (bottoms[0] + bottoms[1]))


def well_depth(band: Profile1D, device: DeviceSpec) -> float:
    """Depth of the shallower dot, eV."""
    return float(min(well_metrics(band, device).well_depths))


def drain_side_depth(band: Profile1D, device: DeviceSpec) -> float:
    """Depth of the dot next to the drain, eV."""
    return float(well_metrics(band, device).well_depths[1])
