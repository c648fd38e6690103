import math
import warnings

import numpy as np
import pytest

from nelsonlab import dispersion as disp
from nelsonlab.core import Box, DomainError, Free, Harmonic, Polynomial, SimUnits, make_grid
from nelsonlab.phase_space import wigner
from nelsonlab.schrodinger import gaussian_packet, polar_decompose, solve_eigenstates

UNITS = SimUnits()


def test_min_time_interval():
    assert disp.min_time_interval(0.5) == 2.0
    assert disp.min_time_interval(1.0, SimUnits(2.0, 3.0)) == 6.0
    assert math.isinf(disp.min_time_interval(0.0))
    with pytest.raises(DomainError):
        disp.min_time_interval(-1.0)


def test_ground_state_dispersions():
    rep = disp.oscillator_report(0)
    assert rep.energy == pytest.approx(0.5, rel=1e-6)
    assert rep.delta_E == pytest.approx(0.5, abs=1e-6)
    assert rep.delta_t_min == pytest.approx(2.0, abs=1e-5)
    assert rep.period_ratio == pytest.approx(2.0, abs=1e-5)
    assert not rep.interval_comparable
    assert rep.energy_band == (0.0, 1.0)
    d = rep.dispersions
    assert d.product_tk == pytest.approx(0.5, abs=1e-12)
    assert d.delta_V == pytest.approx(0.25, abs=1e-6)
    assert not d.classical


def test_first_excited_dispersions():
    rep = disp.oscillator_report(1)
    # var_p = 3/2, var_x = 3/2: DE = 3/4 + 3/4, Dt = 2/3
    assert rep.delta_E == pytest.approx(1.5, abs=1e-6)
    assert rep.delta_t_min == pytest.approx(2 / 3, abs=1e-6)
    assert rep.interval_comparable


@pytest.mark.parametrize("omega", [0.5, 2.0])
def test_tk_product_is_half_hbar(omega):
    rep = disp.oscillator_report(0, omega, SimUnits(1.5, 0.7))
    assert rep.dispersions.product_tk == pytest.approx(0.75, abs=1e-12)
    assert rep.delta_t_min * omega == pytest.approx(2.0, rel=1e-5)


def test_wigner_and_direct_momentum_variance_agree():
    g = make_grid(-16, 16, 512)
    psi = gaussian_packet(g, 0.5, 0.8, 1.1)
    mean_w, var_w = disp.momentum_moments(wigner(psi, UNITS))
    mean_d, var_d = disp.momentum_moments_direct(psi, UNITS)
    assert mean_w == pytest.approx(1.1, abs=1e-10)
    assert var_w == pytest.approx(1 / (4 * 0.64), rel=1e-10)
    assert abs(var_w - var_d) < 1e-10 and abs(mean_w - mean_d) < 1e-10


def test_free_packet_has_no_potential_dispersion():
    g = make_grid(-16, 16, 512)
    rep = disp.energy_dispersions(gaussian_packet(g, 0.0, 1.0), Free(), UNITS)
    assert rep.delta_V == 0
    assert rep.product_tE == pytest.approx(0.5, abs=1e-12)


def test_convex_potentials_have_nonnegative_potential_dispersion():
    g = make_grid(-4, 4, 512)
    pot = Box(4.0, 50.0)
    psi = solve_eigenstates(pot, g, UNITS, 1)[0][1]
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        rep = disp.energy_dispersions(psi, pot, UNITS)
    assert rep.delta_V >= 0 and not rep.delta_V_negative
    assert rep.product_tE >= 0.5 - 1e-12


def test_quartic_levels_order_dispersion():
    g = make_grid(-8, 8, 512)
    pot = Polynomial((0.0, 0.0, 0.0, 0.0, 1.0))
    levels = solve_eigenstates(pot, g, UNITS, 2)
    reps = [disp.energy_dispersions(psi, pot, UNITS) for _, psi in levels]
    assert reps[0].delta_E < reps[1].delta_E
    assert all(r.product_tE >= 0.5 for r in reps)


def test_force_balance_holds_for_ground_state():
    g = make_grid(-10, 10, 512)
    psi = solve_eigenstates(Harmonic(1.0), g, UNITS, 1)[0][1]
    rep = disp.force_balance_residual(psi, Harmonic(1.0), UNITS)
    assert rep.rel_norm < 1e-4
    # at delta_t = m hbar / var_p the stochastic force equals -V'
    keep = ~rep.mask & (psi.density() > 1e-6 * psi.density().max())
    assert np.allclose(rep.stochastic_force[keep], -g.x[keep], atol=1e-4)


def test_force_balance_fails_for_excited_state():
    g = make_grid(-10, 10, 512)
    pot = Harmonic(1.0)
    psi = solve_eigenstates(pot, g, UNITS, 2)[1][1]
    assert disp.force_balance_residual(psi, pot, UNITS).rel_norm > 0.3


def test_force_balance_rejects_moving_state():
    g = make_grid(-16, 16, 512)
    with pytest.raises(DomainError, match="stationary"):
        disp.force_balance_residual(gaussian_packet(g, 0.0, 1.0, 0.5), Free(), UNITS)


def test_force_balance_without_force_is_infinite():
    g = make_grid(-16, 16, 512)
    rep = disp.force_balance_residual(gaussian_packet(g, 0.0, 1.0), Free(), UNITS)
    assert math.isinf(rep.rel_norm)


def test_stochastic_force_scales_with_interval():
    g = make_grid(-10, 10, 256)
    polar = polar_decompose(gaussian_packet(g, 0.0, 2**-0.5))
    a = disp.stochastic_force(polar, UNITS, 1.0)
    b = disp.stochastic_force(polar, UNITS, 2.0)
    keep = np.isfinite(a)
    assert np.allclose(a[keep], 2 * b[keep])
    with pytest.raises(DomainError):
        disp.stochastic_force(polar, UNITS, 0.0)


def test_oscillator_level_range():
    with pytest.raises(DomainError):
        disp.oscillator_report(11)


def test_quartic_balance_orders_ground_below_excited():
    # the global-variance balance is exact only for Gaussian densities; for x^4 it
    # separates the nodeless ground state from n = 1 without vanishing
    g = make_grid(-8, 8, 512)
    pot = Polynomial((0.0, 0.0, 0.0, 0.0, 1.0))
    levels = solve_eigenstates(pot, g, UNITS, 2)
    rel = [disp.force_balance_residual(psi, pot, UNITS).rel_norm for _, psi in levels]
    assert rel[0] < 0.5 * rel[1]
