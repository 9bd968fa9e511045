import numpy as np
import pytest

import qdotlab.scattering as _scattering

# Every spectrum produced anywhere in the run is checked for T + R = 1.
# Wrapping the one function all spectra pass through lets the suite report
# the worst unitarity error seen, not just the ones a test looked at.
UNITARITY = {"max_error": 0.0, "spectra": 0}
_raw_piecewise = _scattering.transmission_piecewise


def _recording_piecewise(*args, **kwargs):
    sp = _raw_piecewise(*args, **kwargs)
    if len(sp):
        UNITARITY["max_error"] = max(UNITARITY["max_error"], float(np.max(np.abs(sp.T + sp.R - 1.0))))
    UNITARITY["spectra"] += 1
    return sp


_scattering.transmission_piecewise = _recording_piecewise

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(autouse=True)
def _serial_workers(monkeypatch):
    monkeypatch.delenv("QDOTLAB_THREADS", raising=False)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    tr = terminalreporter
    ok = UNITARITY["max_error"] < 1e-8
    line = (f"  C02  unitarity over whole suite       {'PASS' if ok else 'FAIL'}  "
            f"max |T+R-1| = {UNITARITY['max_error']:.2e} over {UNITARITY['spectra']} spectra")
    if ACCEPTANCE_LINES:
        tr.write_sep("=", "acceptance criteria")
        for entry in ACCEPTANCE_LINES:
            tr.write_line(entry)
    tr.write_line(line)


def pytest_sessionfinish(session, exitstatus):
    if UNITARITY["spectra"] and UNITARITY["max_error"] >= 1e-8 and exitstatus == 0:
        session.exitstatus = 1
