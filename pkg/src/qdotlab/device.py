"""Device description of the two-dot MOSFET cross-section.

The structure is a silicon film of thickness ``t_si`` under a gate oxide of
thickness ``t_ox``. Gate electrodes sit on the oxide, separated laterally by
gap oxide; oxide spacers separate the gated stack from the n+ source and drain
columns. Coordinates: ``x`` runs along the channel from the outer edge of the
source, ``y`` runs upward from the bottom of the silicon film.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import erf, sqrt, pi
from typing import Literal, Sequence

import numpy as np

from qdotlab.constants import EG_SI, HBAR2_2M0, Q

MATERIALS = (
    "silicon",
    "gate_oxide",
    "spacer_oxide",
    "gap_oxide",
    "gate_metal",
    "source_contact",
    "drain_contact",
)
CONDUCTORS = ("gate_metal", "source_contact", "drain_contact")


class InvalidGeometry(ValueError):
    """Raised when a DeviceSpec violates a geometric or physical constraint."""


@dataclass(frozen=True)
class TrapProfile:
    """Gaussian interface-trap sheet density along the Si/SiO2 interface.

    ``x0`` is measured from the source edge; ``None`` places the centre at
    mid-channel of the device it is attached to.
    """

    n_peak: float = 8e10          # cm^-2
    sigma: float = 10.0           # nm
    x0: float | None = None       # nm
    charge_state: Literal["neutral", "acceptor_occupied"] = "neutral"

    def validate(self) -> None:
        if not self.n_peak >= 0:
            raise InvalidGeometry(f"trap n_peak must be >= 0, got {self.n_peak}")
        if not self.sigma > 0:
            raise InvalidGeometry(f"trap sigma must be > 0, got {self.sigma}")
        if self.charge_state not in ("neutral", "acceptor_occupied"):
            raise InvalidGeometry(f"unknown trap charge_state {self.charge_state!r}")


@dataclass(frozen=True)
class DeviceSpec:
    """Geometry, bias and material description of the device.

    Lengths in nm, voltages in V, temperature in K, doping in cm^-3. The
    defaults reproduce the baseline device (40 nm gates, 10 nm gaps, 3 nm
    oxide, 15 nm film, 50 nm spacers, V_PG = 1 V, V_BG = 0.5 V, 10 K).
    """

    l_pg: float = 40.0
    l_bg: float = 40.0
    l_gap: float = 10.0
    l_sp: float = 50.0
    t_ox: float = 3.0
    t_si: float = 15.0
    v_pg: float = 1.0
    v_bg: float = 0.5
    v_d: float = 0.0
    v_s: float = 0.0
    temperature_k: float = 10.0
    workfunction_offset: float = 0.0
    n_sd: float = 1e20
    n_body: float = -7e17
    trap: TrapProfile = field(default_factory=TrapProfile)
    gate_sequence: tuple[str, ...] = ("PG", "BG", "PG")
    l_sd: float = 20.0
    t_gate: float = 10.0

    # -- derived layout -------------------------------------------------

    def gate_lengths(self) -> list[float]:
        return [self.l_pg if g == "PG" else self.l_bg for g in self.gate_sequence]

    @property
    def stack_length(self) -> float:
        """Length of the gated stack: gates plus the gaps between them."""
        lengths = self.gate_lengths()
        return sum(lengths) + self.l_gap * (len(lengths) - 1)

    @property
    def channel_length(self) -> float:
        """Spacer-to-spacer silicon length between the S/D columns."""
        return self.stack_length + 2.0 * self.l_sp

    @property
    def total_length(self) -> float:
        return self.channel_length + 2.0 * self.l_sd

    @property
    def height(self) -> float:
        return self.t_si + self.t_ox + self.t_gate

    @property
    def y_interface(self) -> float:
        return self.t_si

    @property
    def trap_center(self) -> float:
        return self.total_length / 2.0 if self.trap.x0 is None else self.trap.x0

    def gate_windows(self) -> list[tuple[str, float, float]]:
        """(kind, x_start, x_end) of each gate electrode, source to drain."""
        out = []
        x = self.l_sd + self.l_sp
        for kind, length in zip(self.gate_sequence, self.gate_lengths()):
            out.append((kind, x, x + length))
            x += length + self.l_gap
        return out

    def plunger_windows(self) -> list[tuple[float, float]]:
        return [(a, b) for kind, a, b in self.gate_windows() if kind == "PG"]

    def access_windows(self) -> list[tuple[float, float]]:
        """x extents of the spacer and S/D regions on both sides."""
        g0 = self.l_sd + self.l_sp
        g1 = g0 + self.stack_length
        return [(0.0, g0), (g1, self.total_length)]

    # -- validation -----------------------------------------------------

    def validate(self) -> None:
        lengths = {
            "l_pg": self.l_pg, "l_bg": self.l_bg, "l_gap": self.l_gap,
            "l_sp": self.l_sp, "t_ox": self.t_ox, "t_si": self.t_si,
            "l_sd": self.l_sd, "t_gate": self.t_gate,
        }
        for name, value in lengths.items():
            if not (np.isfinite(value) and value > 0):
                raise InvalidGeometry(f"{name} must be a positive length, got {value}")
        if self.t_si < 2.0:
            raise InvalidGeometry(f"t_si must be >= 2 nm, got {self.t_si}")
        if self.t_ox < 0.5:
            raise InvalidGeometry(f"t_ox must be >= 0.5 nm, got {self.t_ox}")
        if not (np.isfinite(self.temperature_k) and self.temperature_k > 0):
            raise InvalidGeometry(f"temperature_k must be > 0, got {self.temperature_k}")
        for name in ("v_pg", "v_bg", "v_d", "v_s", "workfunction_offset", "n_body"):
            if not np.isfinite(getattr(self, name)):
                raise InvalidGeometry(f"{name} must be finite")
        if not self.n_sd > 0:
            raise InvalidGeometry(f"n_sd must be > 0, got {self.n_sd}")
        bad = [g for g in self.gate_sequence if g not in ("PG", "BG")]
        if bad:
            raise InvalidGeometry(f"gate_sequence entries must be 'PG' or 'BG', got {bad}")
        if self.gate_sequence.count("PG") != 2:
            raise InvalidGeometry("gate_sequence must contain exactly two plunger gates")
        self.trap.validate()

    # -- electrode values -----------------------------------------------

    def gate_potential(self, kind: str) -> float:
        """Dirichlet potential of a gate electrode.

        The potential ``phi`` is referenced so that the Si conduction band is
        ``E_c = -phi`` with the source Fermi level at 0 eV; a mid-gap gate at
        0 V therefore sits at ``-E_g/2``.
        """
        v = self.v_pg if kind == "PG" else self.v_bg
        return v - EG_SI / 2.0 - self.workfunction_offset

    def contact_potential(self, which: str) -> float:
        v = self.v_s if which == "source" else self.v_d
        return v + sd_degeneracy(self.n_sd)


def sd_degeneracy(n_sd: float, mass_dos: float = 0.32, valleys: int = 6) -> float:
    """E_F - E_c (eV) of a degenerate n+ region at zero temperature.

    Free-electron filling of ``valleys`` ellipsoidal valleys with density-of-
    states mass ``mass_dos``; spin degeneracy 2.
    """
    n_nm3 = n_sd * 1e-21
    kf = (6.0 * pi**2 * n_nm3 / (2.0 * valleys)) ** (1.0 / 3.0)
    return HBAR2_2M0 * kf**2 / mass_dos


@dataclass(frozen=True)
class Region:
    material: str
    x0: float
    x1: float
    y0: float
    y1: float
    bc: tuple[str, float | None] = ("neumann_zero", None)
    label: str = ""

    @property
    def is_dirichlet(self) -> bool:
        return self.bc[0] == "dirichlet"

    def area(self) -> float:
        return (self.x1 - self.x0) * (self.y1 - self.y0)


@dataclass(frozen=True)
class RegionMap:
    regions: tuple[Region, ...]
    width: float
    height: float
    y_interface: float
    device: DeviceSpec

    def by_material(self, material: str) -> list[Region]:
        return [r for r in self.regions if r.material == material]

    def gates(self, kind: str | None = None) -> list[Region]:
        gates = self.by_material("gate_metal")
        if kind is None:
            return gates
        return [g for g in gates if g.label.startswith(kind)]


def build_device(spec: DeviceSpec) -> RegionMap:
    """Rasterizable region map of the cross-section described by ``spec``."""
    spec.validate()
    H = spec.height
    W = spec.total_length
    ys, yo = spec.t_si, spec.t_si + spec.t_ox
    g0 = spec.l_sd + spec.l_sp
    g1 = g0 + spec.stack_length
    regions = [
        Region("source_contact", 0.0, spec.l_sd, 0.0, H,
               ("dirichlet", spec.contact_potential("source")), "S"),
        Region("silicon", spec.l_sd, W - spec.l_sd, 0.0, ys, label="Si"),
        Region("spacer_oxide", spec.l_sd, g0, ys, H, label="SPL"),
        Region("gate_oxide", g0, g1, ys, yo, label="OX"),
    ]
    counts = {"PG": 0, "BG": 0}
    windows = spec.gate_windows()
    for i, (kind, a, b) in enumerate(windows):
        counts[kind] += 1
        regions.append(Region("gate_metal", a, b, yo, H,
                              ("dirichlet", spec.gate_potential(kind)),
                              f"{kind}{counts[kind]}"))
        if i + 1 < len(windows):
            regions.append(Region("gap_oxide", b, windows[i + 1][1], yo, H,
                                  label=f"GAP{i + 1}"))
    regions += [
        Region("spacer_oxide", g1, W - spec.l_sd, ys, H, label="SPR"),
        Region("drain_contact", W - spec.l_sd, W, 0.0, H,
               ("dirichlet", spec.contact_potential("drain")), "D"),
    ]
    _check_tiling(regions, W, H)
    return RegionMap(tuple(regions), W, H, ys, spec)


def _check_tiling(regions: Sequence[Region], W: float, H: float) -> None:
    total = sum(r.area() for r in regions)
    if abs(total - W * H) > 1e-9 * W * H:
        raise InvalidGeometry("regions do not tile the simulation rectangle")
    for i, a in enumerate(regions):
        if a.x1 <= a.x0 or a.y1 <= a.y0:
            raise InvalidGeometry(f"region {a.label or a.material} has zero extent")
        for b in regions[i + 1:]:
            ox = min(a.x1, b.x1) - max(a.x0, b.x0)
            oy = min(a.y1, b.y1) - max(a.y0, b.y0)
            if ox > 1e-9 and oy > 1e-9:
                raise InvalidGeometry(f"regions {a.label} and {b.label} overlap")


# -- interface traps ----------------------------------------------------

def trap_sheet_density(x, trap: TrapProfile, x0: float | None = None):
    """Trap sheet density (cm^-2) at position(s) ``x`` nm.

    ``x0`` overrides the profile centre (used when the profile defers its
    centre to the device).
    """
    c = trap.x0 if x0 is None else x0
    if c is None:
        raise ValueError("trap centre undefined; pass x0")
    x = np.asarray(x, dtype=float)
    return trap.n_peak * np.exp(-((x - c) ** 2) / (2.0 * trap.sigma**2))


def trap_cumulative(x, trap: TrapProfile, x0: float) -> np.ndarray:
    """Antiderivative of the sheet density, in cm^-2 nm."""
    x = np.asarray(x, dtype=float)
    s = trap.sigma
    scale = trap.n_peak * s * sqrt(pi / 2.0)
    return scale * np.vectorize(erf)((x - x0) / (sqrt(2.0) * s))


def total_trap_charge(trap: TrapProfile, channel: tuple[float, float],
                      x0: float | None = None) -> float:
    """Trap line charge over ``channel`` in C per cm of device width.

    Zero for neutral traps; occupied acceptor-like traps carry -q each.
    """
    if trap.charge_state == "neutral":
        return 0.0
    c = trap.x0 if x0 is None else x0
    if c is None:
        c = 0.5 * (channel[0] + channel[1])
    a, b = trap_cumulative(np.array(channel), trap, c)
    return -Q * float(b - a) * 1e-7
