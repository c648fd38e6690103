import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nelsonlab import hydro
from nelsonlab.core import DomainError, Free, Harmonic, NumericalError, SimUnits, make_grid
from nelsonlab.schrodinger import Branch, gaussian_packet, solve_eigenstates, velocity_fields

UNITS = SimUnits()


def test_free_gaussian_tracks_schrodinger():
    g = make_grid(-16, 16, 512)
    rep = hydro.hydro_consistency(gaussian_packet(g, 0.0, 1.0, 0.5), Free(), UNITS, t_final=0.5)
    assert rep.v_l2 < 1e-3 and rep.u_l2 < 1e-3
    assert rep.hydro.time == pytest.approx(0.5)


def test_free_gaussian_analytic_fields():
    # sigma_t^2 = sigma^2 + t^2 / (4 sigma^2); u = -x / (2 sigma_t^2), v = t x / (4 sigma^2 sigma_t^2)
    g = make_grid(-16, 16, 512)
    state = hydro.state_from_wavefunction(gaussian_packet(g, 0.0, 1.0), UNITS)
    out = hydro.evolve_madelung(state, Free(), UNITS, dt=1e-3, steps=500)
    s2 = 1 + 0.25 * 0.25
    core = np.abs(g.x) < 4
    assert np.allclose(out.u[core], -g.x[core] / (2 * s2), atol=1e-4)
    assert np.allclose(out.v[core], 0.5 * g.x[core] / (4 * s2), atol=1e-4)


def test_coherent_state_quarter_period():
    g = make_grid(-10, 10, 256)
    psi = gaussian_packet(g, 1.5, 2**-0.5)
    rep = hydro.hydro_consistency(psi, Harmonic(1.0), UNITS, t_final=math.pi / 2)
    assert rep.v_l2 < 1e-2 and rep.u_l2 < 1e-2
    # the packet now sits at the origin moving with v = -1.5
    core = np.abs(g.x) < 2
    assert np.allclose(rep.hydro.v[core], -1.5, atol=1e-2)


def test_ground_state_is_stationary():
    g = make_grid(-10, 10, 512)
    psi = solve_eigenstates(Harmonic(1.0), g, UNITS, 1, accuracy=8)[0][1]
    rep = hydro.hydro_consistency(psi, Harmonic(1.0), UNITS, t_final=1.0, accuracy=8)
    assert rep.v_l2 < 1e-6 and rep.u_l2 < 1e-6


def test_rejects_parabolic_branch_and_bad_steps():
    g = make_grid(-8, 8, 128)
    state = hydro.state_from_wavefunction(gaussian_packet(g, 0.0, 1.0), UNITS)
    with pytest.raises(DomainError, match="parabolic"):
        hydro.evolve_madelung(state, Free(), UNITS, lam=Branch.PARABOLIC)
    with pytest.raises(DomainError):
        hydro.evolve_madelung(state, Free(), UNITS, lam=3)
    with pytest.raises(DomainError, match="stability"):
        hydro.evolve_madelung(state, Free(), UNITS, dt=10 * hydro.max_stable_dt(g, 0.5))
    with pytest.raises(DomainError):
        hydro.evolve_madelung(state, Free(), UNITS, dt=0.0)


def test_state_validation():
    g = make_grid(-8, 8, 64)
    with pytest.raises(DomainError):
        hydro.HydroState(g, np.zeros(64), np.zeros(64), nu_minus=0.1)
    with pytest.raises(DomainError):
        hydro.HydroState(g, np.zeros(32), np.zeros(64))
    with pytest.raises(DomainError):
        hydro.HydroState(g, np.zeros(64), np.zeros(64), nu_plus=0.0).density()


def test_nodal_initial_state_rejected():
    g = make_grid(-8, 8, 256)
    psi = solve_eigenstates(Harmonic(1.0), g, UNITS, 2)[1][1]
    with pytest.raises((DomainError, NumericalError)):
        hydro.hydro_consistency(psi, Harmonic(1.0), UNITS, t_final=0.1)


def test_density_from_osmotic_velocity():
    g = make_grid(-10, 10, 256)
    psi = gaussian_packet(g, 0.7, 0.9)
    state = hydro.state_from_wavefunction(psi, UNITS)
    assert np.allclose(state.density(), psi.density(), atol=1e-10)


def test_continuity_residual():
    g = make_grid(-16, 16, 512)
    state = hydro.state_from_wavefunction(gaussian_packet(g, 0.0, 1.0, 0.5), UNITS)
    a = hydro.evolve_madelung(state, Free(), UNITS, dt=1e-3, steps=10)
    b = hydro.evolve_madelung(a, Free(), UNITS, dt=1e-3, steps=1)
    c = hydro.evolve_madelung(b, Free(), UNITS, dt=1e-3, steps=1)
    assert hydro.continuity_residual(a, b, c) < 1e-5
    with pytest.raises(DomainError):
        hydro.continuity_residual(c, b, a)


@settings(max_examples=20, deadline=None)
@given(coeffs=st.lists(st.floats(-1, 1), min_size=5, max_size=5))
def test_smoothing_preserves_quartics(coeffs):
    x = np.linspace(-3, 3, 200)
    f = np.polynomial.polynomial.polyval(x, coeffs)
    assert np.allclose(hydro.smooth(f), f, atol=1e-10)


def test_linear_tail_extension():
    vals = np.array([np.nan, np.nan, 1.0, 2.0, 3.0, 4.0, np.nan])
    out = hydro._extrapolate_linear(vals, np.isfinite(vals))
    assert out.tolist() == [-1.0, 0.0, 1.0, 2.0, 3.0, 4.0, 5.0]
