import numpy as np
import pytest

from qdotlab.constants import Q_OVER_EPS0
from qdotlab.device import DeviceSpec, TrapProfile, build_device
from qdotlab.grid import Field2D, Grid2D, build_grid
from qdotlab.poisson2d import (PoissonProblem, SingularSystem, boundary_flux, conduction_band,
                               device_problem, enclosed_charge, solve_poisson, stiffness_matrix)


def box_grid(x, y, eps_below=1.0, eps_above=1.0, y_split=None):
    """Bare tensor grid on a rectangle, two permittivity layers split in y."""
    yc = 0.5 * (y[:-1] + y[1:])
    split = y[-1] + 1 if y_split is None else y_split
    lower = np.broadcast_to(yc < split, (len(x) - 1, len(y) - 1))
    mat = np.where(lower, "silicon", "gate_oxide").astype(object)
    eps = np.where(lower, eps_below, eps_above)
    iy = int(np.argmin(np.abs(y - min(split, y[-1]))))
    return Grid2D(np.asarray(x, float), np.asarray(y, float), mat, mat.copy(), eps, iy, None)


def edge_mask(g):
    m = np.zeros(g.shape, dtype=bool)
    m[0, :] = m[-1, :] = m[:, 0] = m[:, -1] = True
    return m


def test_constant_dirichlet():
    g = box_grid(np.linspace(0, 10, 21), np.linspace(0, 5, 11))
    p = PoissonProblem(g, edge_mask(g), np.full(g.shape, 0.7), Field2D(g, np.zeros(g.shape)))
    sol = solve_poisson(p)
    assert np.max(np.abs(sol.phi.values - 0.7)) < 1e-12


def test_parallel_plate_linear():
    x = np.linspace(0, 8, 17)
    y = np.concatenate([np.linspace(0, 2, 9), np.linspace(2, 5, 4)[1:]])   # non-uniform
    g = box_grid(x, y)
    mask = np.zeros(g.shape, dtype=bool)
    mask[:, 0] = mask[:, -1] = True
    vals = np.zeros(g.shape)
    vals[:, -1] = 1.3
    p = PoissonProblem(g, mask, vals, Field2D(g, np.zeros(g.shape)))
    sol = solve_poisson(p)
    expect = np.broadcast_to(1.3 * y / y[-1], g.shape)
    assert np.max(np.abs(sol.phi.values - expect)) < 1e-12


def test_no_anchor():
    g = box_grid(np.linspace(0, 1, 5), np.linspace(0, 1, 5))
    p = PoissonProblem(g, np.zeros(g.shape, bool), np.zeros(g.shape), Field2D(g, np.zeros(g.shape)))
    with pytest.raises(SingularSystem):
        solve_poisson(p)


def test_stiffness_is_symmetric_with_zero_row_sums():
    g = box_grid(np.linspace(0, 3, 7), np.array([0, 0.4, 1.0, 1.2, 2.0]), 11.7, 3.9, 1.0)
    K = stiffness_matrix(g)
    assert abs(K - K.T).max() < 1e-14
    assert np.max(np.abs(K @ np.ones(K.shape[0]))) < 1e-13


def _slab_problem(n):
    """Uniform charge rho0 in a slab between grounded plates (1-D in y)."""
    y = np.linspace(0.0, 4.0, n + 1)
    g = box_grid(np.linspace(0, 1, 3), y)
    mask = np.zeros(g.shape, dtype=bool)
    mask[:, 0] = mask[:, -1] = True
    rho0 = 1e-3
    p = PoissonProblem(g, mask, np.zeros(g.shape), Field2D(g, np.full(g.shape, rho0)))
    exact = 0.5 * Q_OVER_EPS0 * rho0 * y * (4.0 - y)
    return p, np.broadcast_to(exact, g.shape)


def test_uniform_slab_parabola():
    # a quadratic is reproduced exactly by the three-point flux balance
    p, exact = _slab_problem(16)
    sol = solve_poisson(p)
    assert np.max(np.abs(sol.phi.values - exact)) < 1e-10 * np.max(exact)


def _mms_error(n):
    """phi = sin(pi x) sin(2 pi y) / eps(y) with eps jumping at y = 1/2.

    The flux eps dphi/dy is continuous across the jump and the source is
    -5 pi^2 sin(pi x) sin(2 pi y) in both layers.
    """
    x = np.linspace(0, 1, n + 1)
    y = np.linspace(0, 1, n + 1)
    g = box_grid(x, y, 11.7, 3.9, 0.5)
    X, Y = np.meshgrid(x, y, indexing="ij")
    eps = np.where(Y < 0.5, 11.7, 3.9)
    exact = np.sin(np.pi * X) * np.sin(2 * np.pi * Y) / eps
    rho = 5 * np.pi**2 * np.sin(np.pi * X) * np.sin(2 * np.pi * Y) / Q_OVER_EPS0
    p = PoissonProblem(g, edge_mask(g), np.zeros(g.shape), Field2D(g, rho))
    sol = solve_poisson(p)
    return np.max(np.abs(sol.phi.values - exact)), p, sol


def test_manufactured_second_order():
    errs = [_mms_error(n)[0] for n in (16, 32, 64)]
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(orders >= 1.9), orders


def test_flux_conservation_slab():
    p, _ = _slab_problem(16)
    sol = solve_poisson(p)
    q_in = enclosed_charge(p, sol)
    assert abs(boundary_flux(p, sol) + q_in) <= 1e-8 * abs(q_in)


def test_linear_single_newton_step():
    _, p, sol = _mms_error(16)
    assert sol.newton_iterations == 1


def test_nonlinear_response_converges():
    g = box_grid(np.linspace(0, 4, 17), np.linspace(0, 4, 17))
    mask = edge_mask(g)
    vals = np.where(mask, 0.2, 0.0)

    def response(phi):
        # electron-like charge n0 exp(phi / Vt) per control volume
        vt = 0.025
        n = 1e-3 * np.exp(phi / vt) * g.control_areas()
        return -n, -n / vt

    p = PoissonProblem(g, mask, vals, Field2D(g, np.zeros(g.shape)), response, tol=1e-12)
    sol = solve_poisson(p)
    assert sol.final_residual < 1e-12
    diffs = np.diff(sol.residual_history)
    assert np.all(diffs < 0)
    assert np.all(sol.phi.values[mask] == 0.2)


@pytest.fixture(scope="module")
def device_setup():
    dev = DeviceSpec(trap=TrapProfile(charge_state="acceptor_occupied"))
    g = build_grid(build_device(dev), 1.0, 0.5)
    p = device_problem(g, dev)
    return dev, g, p, solve_poisson(p)


def test_device_dirichlet_bit_exact(device_setup):
    _, _, p, sol = device_setup
    assert np.array_equal(sol.phi.values[p.dirichlet_mask], p.dirichlet_values[p.dirichlet_mask])


def test_device_flux_conservation(device_setup):
    _, _, p, sol = device_setup
    q_in = enclosed_charge(p, sol)
    assert abs(boundary_flux(p, sol) + q_in) <= 1e-8 * abs(q_in)


def test_fixed_charge_only_in_silicon(device_setup):
    _, g, p, _ = device_setup
    si = g.node_mask(lambda m: m == "silicon")
    assert np.all(p.fixed_charge.values[~si] == 0)


def test_conduction_band_offsets(device_setup):
    _, g, _, _ = device_setup
    ec = conduction_band(Field2D(g, np.zeros(g.shape))).values
    si = g.node_mask(lambda m: m in ("silicon", "source_contact", "drain_contact"))
    assert np.all(ec[si] == 0.0)
    assert np.allclose(ec[~si & g.node_mask(lambda m: m.endswith("oxide"))], 3.1)
