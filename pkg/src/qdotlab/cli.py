"""Command line: ``qdotlab solve|sweep|cb|summary``.

Configuration is a TOML file. Every table is optional; an empty file runs
the baseline device::

    [device]            # DeviceSpec fields: l_pg, l_bg, l_gap, l_sp, t_ox, t_si,
    l_sp = 50           # v_pg, v_bg, v_d, v_s, temperature_k, n_body, ...
    [device.trap]
    n_peak = 8e10
    sigma = 10
    charge_state = "acceptor_occupied"

    [sweep]
    variable = "sigma"
    values = [1, 10, 20, 30, 40, 50]
    outputs = ["band_profile", "spectrum", "coupling"]
    output_dir = "out/sigma"
    parallelism = 2

    [solver]            # SolverConfig fields
    [schedule]          # ContinuationSchedule fields
    [analysis]          # AnalysisOptions fields

    [cb]                # Coulomb-blockade run
    charging_energy_eV = 8.6e-3
    temperatures = [4.4, 110]
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:          # Python < 3.11
    import tomli as tomllib

from qdotlab.coulomb import (SetParameters, cb_current, cb_to_csv, peak_spacing,
                             peak_to_valley, set_parameters_from_device)
from qdotlab.device import DeviceSpec, TrapProfile
from qdotlab.pipeline import (OUTPUTS, AnalysisOptions, ConfigError, RunManifest, SweepConfig,
                              emit_summary_table, run_sweep)
from qdotlab.scloop import ContinuationSchedule, SolverConfig

EXIT_OK, EXIT_CONFIG, EXIT_ALL_FAILED = 0, 2, 3

log = logging.getLogger("qdotlab")


def _build(cls, table: dict, what: str):
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(table) - names
    if unknown:
        raise ConfigError(f"unknown {what} keys: {sorted(unknown)}")
    tuples = {f.name for f in dataclasses.fields(cls) if "tuple" in str(f.type)}
    kw = {k: tuple(v) if k in tuples and isinstance(v, list) else v for k, v in table.items()}
    try:
        return cls(**kw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad {what} settings: {exc}") from exc


def load_config(path: str | Path | None) -> dict:
    if path is None:
        return {}
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"config {path} is not valid TOML: {exc}") from exc


def device_from_config(cfg: dict) -> DeviceSpec:
    table = dict(cfg.get("device", {}))
    trap = _build(TrapProfile, table.pop("trap", {}), "device.trap")
    dev = _build(DeviceSpec, {**table, "trap": trap}, "device")
    try:
        dev.validate()
    except ValueError as exc:
        raise ConfigError(f"invalid device: {exc}") from exc
    return dev


def sweep_from_config(cfg: dict, out: str | None = None, single: bool = False) -> SweepConfig:
    dev = device_from_config(cfg)
    sw = dict(cfg.get("sweep", {}))
    known = {"variable", "values", "outputs", "output_dir", "parallelism", "tie_gate_lengths"}
    if set(sw) - known:
        raise ConfigError(f"unknown sweep keys: {sorted(set(sw) - known)}")
    if single:
        variable, values = None, [0.0]
    else:
        if "variable" not in sw:
            raise ConfigError("sweep.variable is required")
        variable, values = sw["variable"], sw.get("values", [])
    outputs = sw.get("outputs", sorted(OUTPUTS - {"cb"}))
    output_dir = out or sw.get("output_dir", "qdotlab_out")
    config = SweepConfig(
        base=dev, variable=variable, values=values, outputs=set(outputs), output_dir=output_dir,
        parallelism=sw.get("parallelism"), tie_gate_lengths=bool(sw.get("tie_gate_lengths", False)),
        solver=_build(SolverConfig, cfg.get("solver", {}), "solver"),
        schedule=_build(ContinuationSchedule, cfg.get("schedule", {}), "schedule"),
        analysis=_build(AnalysisOptions, cfg.get("analysis", {}), "analysis"))
    config.validate()
    return config


def _cmd_sweep(args, single: bool) -> int:
    cfg = load_config(args.config)
    config = sweep_from_config(cfg, args.out, single=single)
    manifest = run_sweep(config, workers=args.workers)
    for p in manifest.points:
        print(f"point {p['index']} value={p['value']:g}: {p['status']} {p['reason']}".rstrip())
    print(f"manifest: {manifest.path}")
    return EXIT_ALL_FAILED if manifest.all_failed else EXIT_OK


def _cmd_cb(args) -> int:
    cfg = load_config(args.config)
    cb = dict(cfg.get("cb", {}))
    out = Path(args.out or cb.pop("output_dir", "qdotlab_cb"))
    temps = [float(t) for t in cb.pop("temperatures", [4.4, 110.0])]
    v_ds = float(cb.pop("V_ds", 1e-5))
    n_points = int(cb.pop("points", 1200))
    periods = float(cb.pop("periods", 6.0))
    e_c = cb.pop("charging_energy_eV", None)
    width = float(cb.pop("width_nm", 20.0))
    if cb:
        raise ConfigError(f"unknown cb keys: {sorted(cb)}")
    out.mkdir(parents=True, exist_ok=True)
    dev = device_from_config(cfg) if e_c is None else None
    for t in temps:
        if t <= 0:
            raise ConfigError("cb temperatures must be positive")
        if e_c is None:
            p = set_parameters_from_device(dev, width, T=t, V_ds=v_ds)
        else:
            p = SetParameters.from_charging_energy(float(e_c), T=t, V_ds=v_ds)
        res = cb_current(p, np.linspace(0.0, periods * p.period, n_points))
        cb_to_csv(res, out / f"cb_T{t:g}K.csv")
        print(f"T={t:g} K  period={p.period:.6e} V  measured={peak_spacing(res):.6e} V  "
              f"peak/valley={peak_to_valley(res):.4g}")
    return EXIT_OK


def _cmd_summary(args) -> int:
    manifests = [RunManifest.load(p) for p in args.manifests]
    target = Path(args.out or "summary.csv")
    rows = emit_summary_table(manifests, target)
    print(f"{len(rows)} rows -> {target}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="qdotlab", description="Two-dot Si MOSFET simulator")
    sub = ap.add_subparsers(dest="verb", required=True)
    for verb, help_ in (("solve", "solve the configured device"),
                        ("sweep", "run a parameter sweep"),
                        ("cb", "Coulomb-blockade I(Vg) traces")):
        p = sub.add_parser(verb, help=help_)
        p.add_argument("--config", help="TOML configuration file")
        p.add_argument("--out", help="output directory")
        p.add_argument("--workers", type=int, help="worker processes (QDOTLAB_THREADS overrides)")
        p.add_argument("--verbose", action="store_true")
    p = sub.add_parser("summary", help="tabulate sweep manifests")
    p.add_argument("manifests", nargs="+")
    p.add_argument("--out", help="summary CSV path")
    p.add_argument("--verbose", action="store_true")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.verb == "solve":
            return _cmd_sweep(args, single=True)
        if args.verb == "sweep":
            return _cmd_sweep(args, single=False)
        if args.verb == "cb":
            return _cmd_cb(args)
        return _cmd_summary(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
