import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nelsonlab.core import Box, DomainError, Free, Harmonic, SimUnits, make_grid
from nelsonlab.schrodinger import (
    CrankNicolson,
    WaveFunction,
    continuity_residual,
    evolve_parabolic,
    evolve_unitary,
    gaussian_packet,
    hamiltonian_matrix,
    polar_decompose,
    solve_eigenstates,
    velocity_fields,
)


def test_gaussian_packet_moments():
    g = make_grid(-12, 12, 512)
    psi = gaussian_packet(g, 0.7, 1.3, 2.0)
    assert psi.norm() == pytest.approx(1.0, abs=1e-14)
    assert psi.mean_x() == pytest.approx(0.7, abs=1e-12)
    assert psi.var_x() == pytest.approx(1.69, abs=1e-10)


def test_wavefunction_shape_checked():
    with pytest.raises(DomainError):
        WaveFunction(make_grid(-1, 1, 16), np.ones(8))


@pytest.mark.parametrize("omega", [0.5, 1.0, 2.0])
def test_harmonic_spectrum(omega):
    g = make_grid(-12, 12, 512) if omega < 1 else make_grid(-8, 8, 512)
    levels = solve_eigenstates(Harmonic(omega), g, SimUnits(), 6)
    e = np.array([lv[0] for lv in levels])
    assert np.allclose(e, (np.arange(6) + 0.5) * omega, rtol=1e-4)


def test_spectrum_scales_with_units():
    g = make_grid(-8, 8, 512)
    units = SimUnits(hbar=2.0, mass=0.5)
    e = solve_eigenstates(Harmonic(1.0), g, units, 3)
    assert [lv[0] for lv in e] == pytest.approx([1.0, 3.0, 5.0], rel=1e-4)


def test_eigenvectors_orthonormal_and_signed():
    g = make_grid(-8, 8, 256)
    levels = solve_eigenstates(Harmonic(1.0), g, SimUnits(), 4)
    gram = np.array([[a[1].inner(b[1]) for b in levels] for a in levels])
    assert np.allclose(gram, np.eye(4), atol=1e-10)
    for _, psi in levels:
        lead = np.flatnonzero(np.abs(psi.values) > 1e-3 * np.abs(psi.values).max())[0]
        assert psi.values[lead].real > 0


def test_box_levels_approach_infinite_well():
    # tall finite box: E_n -> (n pi)^2 / (2 L_eff^2), ratios close to n^2
    g = make_grid(-4, 4, 1024)
    e = [lv[0] for lv in solve_eigenstates(Box(4.0, 2000.0), g, SimUnits(), 3)]
    assert e[1] / e[0] == pytest.approx(4.0, rel=0.02)
    assert e[2] / e[0] == pytest.approx(9.0, rel=0.03)


def test_eigensolver_rejects_too_many_levels():
    with pytest.raises(DomainError):
        solve_eigenstates(Harmonic(), make_grid(-4, 4, 32), SimUnits(), 8)


def test_hamiltonian_is_symmetric():
    h = hamiltonian_matrix(make_grid(-4, 4, 64), Harmonic(), SimUnits())
    assert abs(h - h.T).max() == 0


def test_free_spreading_and_norm():
    g = make_grid(-16, 16, 512)
    psi = gaussian_packet(g, 0.0, 1.0)
    out = evolve_unitary(psi, Free(), SimUnits(), dt=0.005, steps=200)
    assert out.time == pytest.approx(1.0)
    assert out.norm() == pytest.approx(1.0, abs=1e-12)
    assert out.var_x() == pytest.approx(1.25, abs=1e-3)


def test_coherent_state_oscillates():
    g = make_grid(-10, 10, 256)
    psi = gaussian_packet(g, 1.5, 2**-0.5)
    prop = CrankNicolson(g, Harmonic(1.0), SimUnits(), 2 * math.pi / 1000)
    quarter = prop.evolve(psi, 250)
    half = prop.evolve(quarter, 250)
    assert quarter.mean_x() == pytest.approx(0.0, abs=2e-3)
    assert half.mean_x() == pytest.approx(-1.5, abs=2e-3)
    assert half.var_x() == pytest.approx(0.5, abs=1e-3)


def test_eigenstate_is_stationary():
    g = make_grid(-8, 8, 256)
    e0, psi = solve_eigenstates(Harmonic(1.0), g, SimUnits(), 1)[0]
    out = evolve_unitary(psi, Harmonic(1.0), SimUnits(), dt=0.01, steps=300)
    assert np.max(np.abs(out.density() - psi.density())) < 1e-10
    assert abs(psi.inner(out) - np.exp(-1j * e0 * 3.0)) < 1e-4


def test_parabolic_norm_decay_rate():
    g = make_grid(-8, 8, 256)
    e0, ground = solve_eigenstates(Harmonic(1.0), g, SimUnits(), 1)[0]
    start = WaveFunction(g, ground.values)
    out = evolve_parabolic(start, Harmonic(1.0), SimUnits(), dtau=1e-3, steps=1000, renormalize=False)
    # implicit Euler: (1 + dtau E0)^-steps
    assert out.norm() == pytest.approx((1 + 1e-3 * e0) ** -1000, rel=1e-8)
    assert out.norm() == pytest.approx(math.exp(-e0), rel=1e-3)


def test_parabolic_converges_to_ground():
    g = make_grid(-8, 8, 256)
    ground = solve_eigenstates(Harmonic(1.0), g, SimUnits(), 1)[0][1]
    out = evolve_parabolic(gaussian_packet(g, 0.5, 2.0), Harmonic(1.0), SimUnits(), 0.01, 2000)
    assert abs(ground.inner(out)) > 0.999


def test_parabolic_rejects_complex():
    g = make_grid(-8, 8, 64)
    with pytest.raises(DomainError):
        evolve_parabolic(gaussian_packet(g, 0, 1, 1.0), Harmonic(), SimUnits())


@settings(max_examples=20, deadline=None)
@given(x0=st.floats(-1.5, 1.5), sigma=st.floats(0.6, 1.4), k0=st.floats(-2, 2))
def test_velocity_fields_of_gaussian(x0, sigma, k0):
    g = make_grid(-12, 12, 512)
    vel = velocity_fields(gaussian_packet(g, x0, sigma, k0), SimUnits())
    keep = ~vel.node_mask
    assert np.allclose(vel.v[keep], k0, atol=1e-8)
    assert np.allclose(vel.u[keep], -0.5 * (g.x[keep] - x0) / sigma**2, atol=1e-7)


def test_node_is_masked():
    g = make_grid(-8, 8, 256)
    psi = solve_eigenstates(Harmonic(1.0), g, SimUnits(), 2)[1][1]
    polar = polar_decompose(psi, node_threshold=1e-6)
    assert polar.node_mask[g.index_of(0.0)]
    vel = velocity_fields(psi, SimUnits(), node_threshold=1e-6)
    assert np.isnan(vel.u[g.index_of(0.0)])
    filled = vel.filled()
    assert np.all(np.isfinite(filled.u))


def test_continuity_equation():
    g = make_grid(-10, 10, 512)
    psi = gaussian_packet(g, 1.0, 0.8, 1.0)
    prop = CrankNicolson(g, Harmonic(1.0), SimUnits(), 1e-3)
    a = prop.evolve(psi, 100)
    b = prop.evolve(a, 1)
    c = prop.evolve(b, 1)
    assert continuity_residual(a, b, c) < 1e-4
