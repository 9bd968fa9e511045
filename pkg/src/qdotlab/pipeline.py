"""Sweep orchestration: device variants -> continuation solve -> analyses ->
CSV files plus a JSON manifest describing what was produced."""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import logging
import os
import time
from concurrent.futures import ProcessPoolExecutor
from concurrent.futures.process import BrokenProcessPool
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from qdotlab import __version__
from qdotlab.coulomb import cb_current, set_parameters_from_device
from qdotlab.coupling import (exchange_coupling_proxy, extract_dot_states, interdot_profile,
                              pair_density, sd_leakage_fraction, well_metrics)
from qdotlab.device import DeviceSpec
from qdotlab.scattering import (LevelNeverReached, WindowOutOfRange, average_tunnel_coupling,
                                default_energy_grid, energy_at_T_level, randomness_metric,
                                transmission_modes, transmission_spectrum)
from qdotlab.scloop import ContinuationSchedule, SolverConfig, continuation_solve

log = logging.getLogger(__name__)

#: sweep variable -> DeviceSpec field (``sigma`` lives on the trap)
SWEEP_VARIABLES = {
    "sigma": "trap.sigma",
    "L_PG": "l_pg",
    "L_BG": "l_bg",
    "L_SP": "l_sp",
    "L_gap": "l_gap",
    "t_ox": "t_ox",
    "t_si": "t_si",
    "V_d": "v_d",
    "T": "temperature_k",
}
OUTPUTS = {"band_profile", "spectrum", "coupling", "leakage", "history", "cb"}
MANIFEST_NAME = "manifest.json"


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class AnalysisOptions:
    n_energies: int = 4000          # full-slice spectrum resolution
    spectrum_span: float = 0.6      # eV above the lead level
    coupling_window: tuple[float, float] = (0.0, 0.3)   # eV, relative to the source E_F
    t_level: float = 0.9
    saturation_band: float = 0.02
    cb_width_nm: float = 20.0       # device width used to turn C_g per width into farads
    cb_temperature: float | None = None
    cb_vds: float = 1e-5
    cb_points: int = 600
    cb_periods: float = 6.0


@dataclass
class SweepConfig:
    base: DeviceSpec
    variable: str | None
    values: list[float]
    outputs: set[str]
    output_dir: Path
    parallelism: int | None = None
    tie_gate_lengths: bool = False   # L_PG sweeps move L_BG along with it
    solver: SolverConfig = field(default_factory=SolverConfig)
    schedule: ContinuationSchedule = field(default_factory=ContinuationSchedule)
    analysis: AnalysisOptions = field(default_factory=AnalysisOptions)

    def __post_init__(self):
        self.output_dir = Path(self.output_dir)
        self.outputs = set(self.outputs)
        self.values = [float(v) for v in self.values]

    def validate(self) -> None:
        if self.variable is not None and self.variable not in SWEEP_VARIABLES:
            raise ConfigError(f"unknown sweep variable {self.variable!r}; "
                              f"choose from {sorted(SWEEP_VARIABLES)}")
        if not self.values:
            raise ConfigError("sweep values list is empty")
        bad = self.outputs - OUTPUTS
        if bad:
            raise ConfigError(f"unknown outputs {sorted(bad)}")
        if self.parallelism is not None and self.parallelism < 1:
            raise ConfigError("parallelism must be >= 1")
        for v in self.values:
            try:
                self.device_at(v).validate()
            except ValueError as exc:
                raise ConfigError(f"value {v:g} gives an invalid device: {exc}") from exc

    def device_at(self, value: float) -> DeviceSpec:
        if self.variable is None:
            return self.base
        target = SWEEP_VARIABLES[self.variable]
        if target == "trap.sigma":
            return dataclasses.replace(self.base, trap=dataclasses.replace(self.base.trap, sigma=value))
        dev = dataclasses.replace(self.base, **{target: value})
        if self.variable == "L_PG" and self.tie_gate_lengths:
            dev = dataclasses.replace(dev, l_bg=value)
        return dev

    def echo(self) -> dict:
        return {
            "base": _jsonable(dataclasses.asdict(self.base)),
            "variable": self.variable,
            "values": self.values,
            "outputs": sorted(self.outputs),
            "output_dir": str(self.output_dir),
            "parallelism": self.parallelism,
            "tie_gate_lengths": self.tie_gate_lengths,
            "solver": _jsonable(dataclasses.asdict(self.solver)),
            "schedule": _jsonable(dataclasses.asdict(self.schedule)),
            "analysis": _jsonable(dataclasses.asdict(self.analysis)),
        }


@dataclass
class PointResult:
    index: int
    value: float
    status: str                       # "converged" | "failed"
    reason: str = ""
    wall_time_s: float = 0.0
    metrics: dict = field(default_factory=dict)
    tables: dict = field(default_factory=dict)   # file name -> (header, rows)


@dataclass
class RunManifest:
    config: dict
    points: list[dict]
    artifacts: list[dict]
    tool_version: str = __version__
    created: str = ""
    path: Path | None = None

    @property
    def all_failed(self) -> bool:
        return bool(self.points) and all(p["status"] != "converged" for p in self.points)

    def to_json(self) -> str:
        return json.dumps({"tool_version": self.tool_version, "created": self.created,
                           "config": self.config, "points": self.points,
                           "artifacts": self.artifacts}, indent=2, sort_keys=True)

    @classmethod
    def load(cls, path) -> "RunManifest":
        data = json.loads(Path(path).read_text())
        return cls(data["config"], data["points"], data["artifacts"],
                   data.get("tool_version", ""), data.get("created", ""), Path(path))


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    return obj


def worker_count(requested: int | None = None) -> int:
    env = os.environ.get("QDOTLAB_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            log.warning("ignoring non-integer QDOTLAB_THREADS=%r", env)
    if requested:
        return max(1, int(requested))
    return max(1, os.cpu_count() or 1)


# -- per-point work --------------------------------------------------------

def _fmt(v: float) -> str:
    return f"{v:.12e}"


def analyze_point(device: DeviceSpec, state, outputs: set[str], opts: AnalysisOptions,
                  tag: str) -> tuple[dict, dict]:
    """Metrics for the summary table plus the CSV tables requested."""
    band = state.interface_band
    metrics: dict = {}
    tables: dict = {}
    wm = well_metrics(band, device)
    metrics["well_depth_eV"] = float(min(wm.well_depths))
    metrics["drain_well_depth_eV"] = float(wm.well_depths[1])
    metrics["barrier_top_eV"] = wm.barrier_top
    metrics["barrier_height_eV"] = wm.barrier_height

    window_pair = extract_dot_states(state.eigen, device, "window", band)
    metrics["overlap"] = exchange_coupling_proxy(window_pair)
    pm_pair = extract_dot_states(state.eigen, device, "pm")
    metrics["leak_frac"] = sd_leakage_fraction(pair_density(pm_pair), device)
    metrics["localization_quality"] = float(min(pm_pair.localization_quality))

    full = transmission_spectrum(band, state.eigen.mass,
                                 default_energy_grid(band, opts.n_energies, opts.spectrum_span))
    rnd = randomness_metric(full, opts.saturation_band)
    metrics["randomness_count"] = rnd.count
    metrics["saturation_energy_eV"] = rnd.saturation_energy
    metrics["modes_below_top"] = transmission_modes(full)

    e_f = -device.v_s
    barrier = interdot_profile(band, device)
    lead = max(barrier.values[0], barrier.values[-1])
    e_hi = max(e_f + opts.spectrum_span, lead + opts.spectrum_span)
    inter = transmission_spectrum(barrier, state.eigen.mass,
                                  np.linspace(lead + 1e-3, e_hi, opts.n_energies))
    window = (e_f + opts.coupling_window[0], e_f + opts.coupling_window[1])
    try:
        metrics["avg_tunnel_coupling"] = average_tunnel_coupling(inter, window)
    except WindowOutOfRange:
        metrics["avg_tunnel_coupling"] = float("nan")
    try:
        metrics["T_level_energy_eV"] = energy_at_T_level(inter, opts.t_level)
    except LevelNeverReached:
        metrics["T_level_energy_eV"] = float("nan")
    metrics["unitarity_error"] = float(max(np.max(np.abs(full.T + full.R - 1.0)),
                                           np.max(np.abs(inter.T + inter.R - 1.0))))

    if "band_profile" in outputs:
        tables[f"band_{tag}.csv"] = (["x_nm", "E_c_eV"],
                                     [[f"{x:.6f}", _fmt(u)] for x, u in zip(band.x, band.values)])
    if "spectrum" in outputs:
        for name, sp in (("spectrum", full), ("spectrum_interdot", inter)):
            tables[f"{name}_{tag}.csv"] = (
                ["energy_eV", "T_coeff", "R_coeff"],
                [[f"{e:.9f}", _fmt(t), _fmt(r)] for e, t, r in zip(sp.energies, sp.T, sp.R)])
    if "history" in outputs:
        tables[f"history_{tag}.csv"] = (
            ["iteration", "psi_norm_metric", "dphi_inf_norm"],
            [[h.iteration, _fmt(h.psi_norm_metric), _fmt(h.dphi_inf_norm)] for h in state.history])
    if "cb" in outputs:
        kw = {"V_ds": opts.cb_vds}
        kw["T"] = opts.cb_temperature if opts.cb_temperature else device.temperature_k
        p = set_parameters_from_device(device, opts.cb_width_nm, **kw)
        vg = np.linspace(0.0, opts.cb_periods * p.period, opts.cb_points)
        res = cb_current(p, vg)
        tables[f"cb_{tag}.csv"] = (["Vg_V", "I_A"],
                                   [[f"{v:.9e}", _fmt(i)] for v, i in zip(res.Vg, res.I)])
    return metrics, tables


def _run_point(args) -> PointResult:
    index, value, device, outputs, solver, schedule, opts, tag = args
    t0 = time.perf_counter()
    try:
        if schedule.target != device.temperature_k:
            schedule = ContinuationSchedule.to_target(
                device.temperature_k, max_iter=schedule.max_iter, alpha=schedule.alpha,
                tol_sc=schedule.tol_sc)
        state = continuation_solve(device, schedule, solver)
        metrics, tables = analyze_point(device, state, outputs, opts, tag)
        metrics["iterations_final_stage"] = state.stage_iterations[-1][1]
        return PointResult(index, value, "converged", "", time.perf_counter() - t0, metrics, tables)
    except Exception as exc:      # isolate every failure to its own point
        log.warning("point %d (%g) failed: %s", index, value, exc)
        return PointResult(index, value, "failed", f"{type(exc).__name__}: {exc}",
                           time.perf_counter() - t0)


def _write_table(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


COUPLING_COLUMNS = ["well_depth_eV", "barrier_top_eV", "overlap", "leak_frac",
                    "avg_tunnel_coupling", "T_level_energy_eV", "randomness_count"]


def run_sweep(config: SweepConfig, workers: int | None = None) -> RunManifest:
    """Solve and analyze every sweep point; the manifest is written last."""
    config.validate()
    out = config.output_dir
    out.mkdir(parents=True, exist_ok=True)
    n_workers = worker_count(workers or config.parallelism)
    jobs = [(i, v, config.device_at(v), config.outputs, config.solver, config.schedule,
             config.analysis, f"{i:03d}") for i, v in enumerate(config.values)]
    if n_workers == 1 or len(jobs) == 1:
        results = [_run_point(j) for j in jobs]
    else:
        results = []
        try:
            with ProcessPoolExecutor(max_workers=min(n_workers, len(jobs))) as pool:
                results = list(pool.map(_run_point, jobs))
        except BrokenProcessPool as exc:
            done = {r.index for r in results}
            results += [PointResult(j[0], j[1], "failed", f"worker crashed: {exc}")
                        for j in jobs if j[0] not in done]
    results.sort(key=lambda r: r.index)

    written: list[Path] = []
    for r in results:
        for name, (header, rows) in sorted(r.tables.items()):
            path = out / name
            _write_table(path, header, rows)
            written.append(path)
    ok = [r for r in results if r.status == "converged"]
    column = config.variable or "point"
    if ok and "coupling" in config.outputs:
        path = out / "coupling.csv"
        _write_table(path, [column] + COUPLING_COLUMNS,
                     [[f"{r.value:g}"] + [_cell(r.metrics[c]) for c in COUPLING_COLUMNS] for r in ok])
        written.append(path)
    if ok and "leakage" in config.outputs:
        path = out / "leakage.csv"
        _write_table(path, [column, "leak_frac"], [[f"{r.value:g}", _cell(r.metrics["leak_frac"])]
                                                   for r in ok])
        written.append(path)

    points = [{"index": r.index, "value": r.value, "status": r.status, "reason": r.reason,
               "wall_time_s": round(r.wall_time_s, 3), "metrics": _jsonable(r.metrics)}
              for r in results]
    artifacts = [{"file": p.name, "sha256": _sha256(p)} for p in written]
    manifest = RunManifest(config.echo(), points, artifacts,
                           created=time.strftime("%Y-%m-%dT%H:%M:%S"))
    # anything else already in the directory still gets listed
    listed = {a["file"] for a in artifacts} | {MANIFEST_NAME}
    for p in sorted(out.iterdir()):
        if p.is_file() and p.name not in listed:
            manifest.artifacts.append({"file": p.name, "sha256": _sha256(p)})
    manifest.path = out / MANIFEST_NAME
    manifest.path.write_text(manifest.to_json())
    return manifest


def _cell(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return _fmt(float(v))


SUMMARY_COLUMNS = ["well_depth_eV", "barrier_top_eV", "overlap", "avg_tunnel_coupling",
                   "leak_frac", "randomness_count"]


def emit_summary_table(manifests: list[RunManifest], path) -> list[list[str]]:
    """One row per converged sweep point across ``manifests``."""
    if not manifests:
        raise ValueError("need at least one manifest")
    rows = []
    for m in manifests:
        variable = m.config.get("variable") or "point"
        for p in m.points:
            if p["status"] != "converged":
                continue
            rows.append([variable, f"{p['value']:g}"] + [_cell(p["metrics"][c]) for c in SUMMARY_COLUMNS])
    _write_table(Path(path), ["variable", "value"] + SUMMARY_COLUMNS, rows)
    return rows
