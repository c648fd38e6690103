import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nelsonlab.core import (
    Box,
    DomainError,
    EdgeDensityWarning,
    Free,
    Harmonic,
    Polynomial,
    SimUnits,
    Tabulated,
    check_edge_decay,
    fd_derivative,
    fd_weights,
    make_grid,
    momentum_representation,
    position_representation,
    potential_from_dict,
    spectral_derivative,
    stencil_accuracy,
)


def test_grid_layout():
    g = make_grid(-8, 8, 256)
    assert g.dx == 16 / 256
    assert g.x[0] == -8 and g.x[-1] == pytest.approx(8 - g.dx)
    assert g.p().size == 256 and np.all(np.diff(g.p()) > 0)
    assert g.dp() == pytest.approx(2 * math.pi / 16)
    assert g.index_of(0.0) == 128


@pytest.mark.parametrize("n", [7, 4, 12, 0])
def test_grid_rejects_bad_sizes(n):
    with pytest.raises(DomainError, match="power of two"):
        make_grid(-1, 1, n)


def test_grid_rejects_reversed_bounds():
    with pytest.raises(DomainError):
        make_grid(1, -1, 64)


def test_units():
    assert SimUnits().d0 == 0.5
    assert SimUnits(2.0, 4.0).d0 == 0.25
    with pytest.raises(DomainError):
        SimUnits(0.0, 1.0)


def test_potentials_and_gradients():
    x = np.linspace(-2, 2, 9)
    assert np.allclose(Harmonic(2.0, 0.5)(x), 0.5 * 4 * (x - 0.5) ** 2)
    assert np.allclose(Harmonic(2.0, 0.5).gradient(x), 4 * (x - 0.5))
    assert np.all(Free()(x) == 0)
    quartic = Polynomial((0.0, 0.0, 0.0, 0.0, 1.0))
    assert np.allclose(quartic(x), x**4)
    assert np.allclose(quartic.gradient(x), 4 * x**3)
    box = Box(2.0, 10.0)
    assert box(np.array([0.0, 1.5]))[0] == 0 and box(np.array([0.0, 1.5]))[1] == 10
    assert not box.smooth and stencil_accuracy(box, None) == 2
    assert stencil_accuracy(Harmonic(), None) == 4


def test_potential_dict_round_trip():
    g = make_grid(-4, 4, 64)
    for pot in (Harmonic(1.5, 0.2), Free(), Box(2.0, 5.0), Polynomial((1.0, 0.0, 2.0))):
        again = potential_from_dict(pot.to_dict(), g)
        assert np.allclose(again(g.x), pot(g.x))
    tab = Tabulated(g, g.x**2)
    assert np.allclose(potential_from_dict(tab.to_dict(), g)(g.x), g.x**2)


def test_potential_dict_errors():
    with pytest.raises(DomainError, match="unknown potential"):
        potential_from_dict({"kind": "morse"})
    with pytest.raises(DomainError):
        potential_from_dict({"kind": "harmonic", "omega": -1})
    with pytest.raises(DomainError):
        potential_from_dict({"kind": "tabulated", "samples": [0.0] * 8})


def test_fd_weights_known_values():
    assert np.allclose(fd_weights([-1, 0, 1], 1), [-0.5, 0, 0.5])
    assert np.allclose(fd_weights([-1, 0, 1], 2), [1, -2, 1])
    assert np.allclose(fd_weights([-2, -1, 0, 1, 2], 2), np.array([-1, 16, -30, 16, -1]) / 12)


@settings(max_examples=30, deadline=None)
@given(acc=st.sampled_from([2, 4, 6, 8]), deriv=st.sampled_from([1, 2]),
       coeffs=st.lists(st.floats(-2, 2), min_size=1, max_size=9))
def test_fd_exact_on_polynomials(acc, deriv, coeffs):
    degree = acc + deriv - 1
    c = np.array(coeffs[: degree + 1])
    x = np.linspace(-1, 1, 40)
    dx = x[1] - x[0]
    f = np.polynomial.polynomial.polyval(x, c)
    exact = np.polynomial.polynomial.polyval(x, np.polynomial.polynomial.polyder(c, deriv))
    assert np.allclose(fd_derivative(f, dx, deriv, acc), exact, atol=1e-6 * (1 + np.abs(c).sum()))


def test_fd_convergence_order():
    errs = []
    for n in (64, 128):
        x = np.linspace(0, 1, n)
        errs.append(np.max(np.abs(fd_derivative(np.sin(3 * x), x[1] - x[0], 1, 4) - 3 * np.cos(3 * x))))
    assert errs[0] / errs[1] > 12


def test_spectral_derivative_periodic():
    g = make_grid(0, 2 * math.pi, 64)
    assert np.allclose(spectral_derivative(np.sin(3 * g.x), g.dx), 3 * np.cos(3 * g.x), atol=1e-12)
    assert np.allclose(spectral_derivative(np.sin(3 * g.x), g.dx, 2), -9 * np.sin(3 * g.x), atol=1e-10)


@settings(max_examples=25, deadline=None)
@given(x0=st.floats(-2, 2), sigma=st.floats(0.5, 1.5), k0=st.floats(-3, 3))
def test_parseval_and_inverse(x0, sigma, k0):
    g = make_grid(-16, 16, 256)
    psi = np.exp(-((g.x - x0) ** 2) / (4 * sigma**2) + 1j * k0 * g.x)
    mom = momentum_representation(psi, g)
    assert np.sum(np.abs(psi) ** 2) * g.dx == pytest.approx(np.sum(mom.density()) * mom.dp, rel=1e-12)
    assert np.allclose(position_representation(mom), psi, atol=1e-12)


def test_momentum_of_gaussian_matches_analytic():
    g = make_grid(-16, 16, 256)
    sigma, k0 = 1.0, 1.5
    psi = (2 * math.pi * sigma**2) ** -0.25 * np.exp(-(g.x**2) / (4 * sigma**2) + 1j * k0 * g.x)
    mom = momentum_representation(psi, g)
    sp = 1 / (2 * sigma)
    exact = np.exp(-((mom.p - k0) ** 2) / (2 * sp**2)) / math.sqrt(2 * math.pi * sp**2)
    assert np.allclose(mom.density(), exact, atol=1e-12)


def test_edge_decay_warning():
    g = make_grid(-2, 2, 64)
    with pytest.warns(EdgeDensityWarning):
        assert not check_edge_decay(np.ones(g.n), "probe")
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        assert check_edge_decay(np.exp(-10 * g.x**2))
