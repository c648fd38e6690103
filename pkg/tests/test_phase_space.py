import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nelsonlab import phase_space as ps
from nelsonlab.core import DomainError, Harmonic, SimUnits, make_grid, momentum_representation
from nelsonlab.schrodinger import CrankNicolson, WaveFunction, gaussian_packet, solve_eigenstates

UNITS = SimUnits()


@pytest.fixture(scope="module")
def grid():
    return make_grid(-10, 10, 512)


def _hermite1(grid):
    x = grid.x
    return WaveFunction(grid, math.sqrt(2) * x * math.pi**-0.25 * np.exp(-(x**2) / 2)).normalized()


def test_gaussian_matches_analytic(grid):
    x0, sigma, k0 = 0.8, 2**-0.5, 0.6
    f = ps.wigner(gaussian_packet(grid, x0, sigma, k0), UNITS)
    xx, pp = np.meshgrid(f.x, f.p, indexing="ij")
    exact = np.exp(-((xx - x0) ** 2) / (2 * sigma**2) - 2 * sigma**2 * (pp - k0) ** 2) / math.pi
    assert np.max(np.abs(f.values - exact)) < 1e-8


def test_first_excited_matches_analytic(grid):
    f = ps.wigner(_hermite1(grid), UNITS)
    xx, pp = np.meshgrid(f.x, f.p, indexing="ij")
    r2 = xx**2 + pp**2
    exact = (2 * r2 - 1) * np.exp(-r2) / math.pi
    assert np.max(np.abs(f.values - exact)) < 1e-8
    assert f.value_at(0, 0) == pytest.approx(-1 / math.pi, abs=1e-10)


def test_marginals_and_total(grid):
    levels = solve_eigenstates(Harmonic(1.0), grid, UNITS, 3)
    psi = WaveFunction(grid, levels[0][1].values + 1j * levels[2][1].values).normalized()
    f = ps.wigner(psi, UNITS)
    xm, pm = ps.marginals(f)
    assert f.total() == pytest.approx(1.0, abs=1e-12)
    assert np.max(np.abs(xm - psi.density())) < 1e-12
    mom = momentum_representation(psi.values, grid, UNITS)
    assert np.allclose(f.p, mom.p)
    assert np.max(np.abs(pm - mom.density())) < 1e-8


def test_characteristic_function_properties(grid):
    psi = gaussian_packet(grid, 0.5, 0.9, 1.2)
    rho = ps.characteristic_function(psi)
    assert np.allclose(rho.at_zero(), psi.density(), atol=1e-14)
    assert rho.hermiticity_error() < 1e-12
    z = rho.zero_index
    assert rho.delta[z] == 0
    # exact: conj(psi(x - d/2)) psi(x + d/2)
    j = z + 40
    d = rho.delta[j]
    x = grid.x
    exact = (np.conj(np.exp(-((x - d / 2 - 0.5) ** 2) / (4 * 0.81) + 1.2j * (x - d / 2)))
             * np.exp(-((x + d / 2 - 0.5) ** 2) / (4 * 0.81) + 1.2j * (x + d / 2)))
    exact /= math.sqrt(2 * math.pi * 0.81)
    assert np.allclose(rho.values[:, j], exact, atol=1e-12)


def test_amplitude_round_trip_and_convention(grid):
    psi = solve_eigenstates(Harmonic(1.0), grid, UNITS, 2)[1][1]
    phi = ps.phase_space_amplitude(psi, UNITS)
    assert phi.convention == ps.AMPLITUDE_CONVENTION
    assert np.allclose(phi.reconstruct(), psi.values, atol=1e-12)
    shifted = phi.shifted()
    j = phi.delta_grid.n // 2 + 20
    s = 0.5 * phi.delta_grid.x[j]
    assert np.allclose(shifted[:, j], ps.shifted_samples(psi, np.array([s]))[:, 0], atol=1e-10)


@settings(max_examples=15, deadline=None)
@given(x0=st.floats(-2, 2), sigma=st.floats(0.5, 1.2), k0=st.floats(-1.5, 1.5))
def test_gaussians_are_nonnegative_and_routes_agree(x0, sigma, k0):
    # rho(x, delta) ~ exp(-delta^2 / 8 sigma^2) must vanish inside the displacement window
    g = make_grid(-20, 20, 256)
    psi = gaussian_packet(g, x0, sigma, k0)
    f1 = ps.wigner(psi, UNITS)
    f2 = ps.density_from_amplitudes(ps.phase_space_amplitude(psi, UNITS))
    assert np.max(np.abs(f1.values - f2.values)) < 1e-10
    assert ps.negativity_report(f1).min_value > -1e-9


def test_negativity_report(grid):
    rep = ps.negativity_report(ps.wigner(_hermite1(grid), UNITS))
    assert rep.min_value == pytest.approx(-1 / math.pi, abs=1e-8)
    assert rep.location_of_min == pytest.approx((0.0, 0.0), abs=0.05)
    assert rep.negative_mass_fraction > 0.05


def test_moment_expansion_matches_local_moments(grid):
    psi = gaussian_packet(grid, 0.3, 1.0, 0.7)
    rho = ps.characteristic_function(psi)
    rep = ps.moment_expansion_check(rho, ps.wigner_from_characteristic(rho, UNITS), UNITS)
    assert rep.max_dev_mean_p < 1e-6
    assert rep.max_dev_p2 < 1e-6
    # <p>(x) = k0 and <p^2>(x) = k0^2 + 1 / (4 sigma^2) for this packet
    m = rep.mask
    assert np.allclose(rep.mean_p_direct[m], 0.7, atol=1e-6)
    assert np.allclose(rep.p2_direct[m], 0.49 + 0.25, atol=1e-6)


def test_liouville_residual_is_small_for_harmonic_motion():
    g = make_grid(-10, 10, 256)
    prop = CrankNicolson(g, Harmonic(1.0), UNITS, 1e-3)
    psi = gaussian_packet(g, 1.0, 0.8, 0.5)
    snaps = [psi, prop.evolve(psi, 1), prop.evolve(psi, 2)]
    rhos = [ps.characteristic_function(s) for s in snaps]
    res = ps.liouville_residual(*rhos, Harmonic(1.0), UNITS)
    # the same snapshots against a displaced potential do not satisfy the equation
    wrong = ps.liouville_residual(*rhos, Harmonic(1.0, 0.5), UNITS)
    assert res < 1e-4
    assert wrong > 100 * res


def test_rejects_unnormalized_and_bad_delta_grid(grid):
    with pytest.raises(DomainError):
        ps.wigner(WaveFunction(grid, 2 * gaussian_packet(grid).values), UNITS)
    with pytest.raises(DomainError):
        ps.characteristic_function(gaussian_packet(grid), make_grid(-4, 6, 512))
    with pytest.raises(DomainError):
        ps.characteristic_function(gaussian_packet(grid), make_grid(-20, 20, 512))
