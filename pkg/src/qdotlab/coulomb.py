"""Orthodox sequential-tunnelling model of a single-electron transistor.

One metallic island couples to source, drain and a plunger gate. Charge
states n0-N .. n0+N form a birth-death chain, so the stationary distribution
follows from detailed balance between neighbours. Energies are in eV and
the symmetric bias convention V_s = -V_ds/2, V_d = +V_ds/2 is used.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, replace

import numpy as np

from qdotlab.constants import EPS0, EPS_OX, KB_EV, Q
from qdotlab.device import DeviceSpec

N_CHARGE = 10      # minimum half-width of the charge-state window


class NonConvergentStationaryDistribution(RuntimeError):
    pass


class BiasOutsideLinearResponse(UserWarning):
    pass


@dataclass(frozen=True)
class SetParameters:
    C_g: float          # F
    C_s: float
    C_d: float
    R_s: float = 1e6    # ohm
    R_d: float = 1e6
    T: float = 4.4      # K
    V_ds: float = 1e-4  # V

    def __post_init__(self):
        for name in ("C_g", "C_s", "C_d", "R_s", "R_d", "T"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")

    @property
    def C_sigma(self) -> float:
        return self.C_g + self.C_s + self.C_d

    @property
    def charging_energy(self) -> float:
        """E_c = q^2 / 2C_sigma, in eV."""
        return Q / (2.0 * self.C_sigma)

    @property
    def period(self) -> float:
        """Gate-voltage period q/C_g of the blockade oscillations (V)."""
        return Q / self.C_g

    @classmethod
    def from_charging_energy(cls, e_c: float, **kw) -> "SetParameters":
        """Default junctions C_s = C_d = C_g/2 sized to give charging energy ``e_c`` (eV)."""
        c_sig = Q / (2.0 * e_c)
        c_g = c_sig / 2.0
        return cls(C_g=c_g, C_s=c_g / 2.0, C_d=c_g / 2.0, **kw)

    def swap_leads(self) -> "SetParameters":
        return replace(self, C_s=self.C_d, C_d=self.C_s, R_s=self.R_d, R_d=self.R_s)


def gate_capacitance_from_device(device: DeviceSpec) -> float:
    """Parallel-plate plunger capacitance per unit width, F/m."""
    return EPS_OX * EPS0 * device.l_pg / device.t_ox


def set_parameters_from_device(device: DeviceSpec, width_nm: float, **kw) -> SetParameters:
    c_g = gate_capacitance_from_device(device) * width_nm * 1e-9
    return SetParameters(C_g=c_g, C_s=c_g / 2.0, C_d=c_g / 2.0, **kw)


def _x_over_expm1(x):
    """x / (exp(x) - 1), finite for any real x, equal to 1 at x = 0."""
    x = np.asarray(x, dtype=float)
    out = np.ones_like(x)
    neg = x < -1e-12
    pos = x > 1e-12
    out[neg] = x[neg] / np.expm1(x[neg])
    out[pos] = x[pos] * np.exp(-x[pos]) / (-np.expm1(-x[pos]))
    return out


def tunnel_rate(delta_e, R: float, T: float):
    """Orthodox rate (1/s) for a transition changing the free energy by ``delta_e`` eV."""
    t = KB_EV * T
    return (t / (Q * R)) * _x_over_expm1(np.asarray(delta_e) / t)


@dataclass
class CBResult:
    Vg: np.ndarray
    I: np.ndarray
    params: SetParameters


def _chain(p: SetParameters, vg: float):
    """Charge states, stationary probabilities and drain rates at ``vg``."""
    v_s, v_d = -0.5 * p.V_ds, 0.5 * p.V_ds
    q0 = (p.C_g * vg + p.C_s * v_s + p.C_d * v_d) / Q      # in electrons
    n0 = int(np.round(q0))
    e_sig = Q / p.C_sigma                                   # eV per e^2/C
    # thermal spread of n is sqrt(kT / e_sig); the window must hold it with
    # negligible weight at the ends, or the cut transitions bias the current
    half = N_CHARGE + int(np.ceil(12.0 * np.sqrt(KB_EV * p.T / e_sig)))
    n = np.arange(n0 - half, n0 + half + 1)
    add = e_sig * (n + 0.5 - q0)     # U(n+1) - U(n)
    rem = -e_sig * (n - 0.5 - q0)    # U(n-1) - U(n)
    g_in_d = tunnel_rate(add + v_d, p.R_d, p.T)
    g_out_d = tunnel_rate(rem - v_d, p.R_d, p.T)
    up = tunnel_rate(add + v_s, p.R_s, p.T) + g_in_d
    down = tunnel_rate(rem - v_s, p.R_s, p.T) + g_out_d
    with np.errstate(divide="ignore"):
        log_ratio = np.log(up[:-1]) - np.log(down[1:])
    if not np.all(np.isfinite(log_ratio)):
        raise NonConvergentStationaryDistribution(
            f"rate chain degenerate at Vg = {vg:g} V (T = {p.T:g} K)")
    logp = np.concatenate([[0.0], np.cumsum(log_ratio)])
    prob = np.exp(logp - logp.max())
    prob /= prob.sum()
    if not np.all(np.isfinite(prob)):
        raise NonConvergentStationaryDistribution("stationary distribution not normalizable")
    return n, prob, g_in_d, g_out_d


def stationary_distribution(params: SetParameters, vg: float) -> tuple[np.ndarray, np.ndarray]:
    """Charge states and their stationary probabilities at gate voltage ``vg``."""
    n, prob, _, _ = _chain(params, vg)
    return n, prob


def _current_at(p: SetParameters, vg: float) -> float:
    _, prob, g_in_d, g_out_d = _chain(p, vg)
    # electrons leaving to the drain minus arriving from it, times q -> amperes
    return float(Q * np.sum(prob * (g_out_d - g_in_d)))


def cb_current(params: SetParameters, Vg_grid) -> CBResult:
    """Drain current I(V_g) of the single island, amperes."""
    vg = np.asarray(Vg_grid, dtype=float)
    if abs(params.V_ds) > 0.1 * params.charging_energy:
        warnings.warn(f"|V_ds| = {abs(params.V_ds):.3g} V is not small against "
                      f"E_c/q = {params.charging_energy:.3g} V", BiasOutsideLinearResponse,
                      stacklevel=2)
    current = np.array([_current_at(params, v) for v in vg])
    return CBResult(vg, current, params)


# -- trace metrics ------------------------------------------------------

def peak_positions(result: CBResult) -> np.ndarray:
    """Gate voltages of the current maxima, refined by a parabola through
    each sampled peak and its neighbours."""
    I, v = result.I, result.Vg
    i = np.nonzero((I[1:-1] > I[:-2]) & (I[1:-1] >= I[2:]))[0] + 1
    out = []
    for k in i:
        y0, y1, y2 = I[k - 1], I[k], I[k + 1]
        den = y0 - 2 * y1 + y2
        shift = 0.5 * (y0 - y2) / den if den != 0 else 0.0
        out.append(v[k] + shift * (v[k + 1] - v[k - 1]) / 2.0)
    return np.asarray(out)


def peak_spacing(result: CBResult) -> float:
    pk = peak_positions(result)
    if len(pk) < 2:
        return float("nan")
    return float(np.mean(np.diff(pk)))


def peak_to_valley(result: CBResult) -> float:
    lo = float(np.min(result.I))
    hi = float(np.max(result.I))
    return hi / lo if lo > 0 else float("inf")


def relative_amplitude(result: CBResult) -> float:
    """(max - min) / mean of the current trace."""
    return float((np.max(result.I) - np.min(result.I)) / np.mean(result.I))


def cb_to_csv(result: CBResult, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["Vg_V", "I_A"])
        for v, i in zip(result.Vg, result.I):
            w.writerow([f"{v:.9e}", f"{i:.12e}"])
