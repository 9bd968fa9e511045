"""Two-quantum-dot Si MOSFET simulation: Schrodinger-Poisson electrostatics,
full-wave transmission, dot coupling metrics and Coulomb-blockade validation."""

__version__ = "0.1.0"

from qdotlab.device import DeviceSpec, TrapProfile, build_device
from qdotlab.grid import Grid2D, Field2D, Profile1D, build_grid, interface_slice
from qdotlab.poisson2d import PoissonProblem, solve_poisson
from qdotlab.schrodinger1d import EigenSolution, solve_bound_states
from qdotlab.scloop import ContinuationSchedule, SolverConfig, continuation_solve, sc_iterate_at_T
from qdotlab.scattering import ScatteringSpectrum, transmission_spectrum
from qdotlab.coupling import extract_dot_states, exchange_coupling_proxy, sd_leakage_fraction
from qdotlab.coulomb import SetParameters, cb_current
