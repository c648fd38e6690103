"""Characteristic function, Wigner density and phase-space amplitudes.

Conventions (``hbar`` kept symbolic):

* ``rho(x, delta) = conj(psi(x - delta/2)) psi(x + delta/2)``
* ``F(x, p) = (2 pi hbar)^-1 int rho(x, delta) exp(-i p delta / hbar) d delta``
* ``psi(x + s) = int exp(i p s / hbar) phi(x, p) dp``
* ``F(x, p) = 2 int conj(phi(x, 2p - p')) phi(x, p') dp'``

The displacement grid is symmetric about zero.  Its first sample
(``delta = -L/2``) has no partner at ``+L/2`` and is set to zero, which keeps
``rho`` exactly Hermitian and makes the two routes to ``F`` agree exactly.
Half-shifts ``psi(x + delta/2)`` use Fourier interpolation of ``psi``
zero-padded to twice the domain, so shifts never wrap around.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import DEFAULT_UNITS, DomainError, NumericalError, Potential, SimUnits, SpatialGrid, make_grid
from .schrodinger import WaveFunction, require_normalized

HERMITIAN_TOL = 1e-12
IMAG_TOL = 1e-10
AMPLITUDE_CONVENTION = ("psi(x+s) = sum_p dp_phi exp(i p s/hbar) phi(x,p); "
                        "F(x,p) = 2 dp_phi sum_p' conj(phi(x,2p-p')) phi(x,p')")


@dataclass(frozen=True)
class CharacteristicFunction:
    """``values[i, j] = rho(x_i, delta_j)``."""

    x_grid: SpatialGrid
    delta_grid: SpatialGrid
    values: np.ndarray = field(compare=False)
    time: float = 0.0

    @property
    def delta(self) -> np.ndarray:
        return self.delta_grid.x

    @property
    def zero_index(self) -> int:
        return self.delta_grid.n // 2

    def at_zero(self) -> np.ndarray:
        return self.values[:, self.zero_index]

    def hermiticity_error(self) -> float:
        v = self.values[:, 1:]
        return float(np.max(np.abs(v - np.conj(v[:, ::-1]))))


@dataclass(frozen=True)
class PhaseSpaceDensity:
    """``values[i, k] = F(x_i, p_k)``."""

    x: np.ndarray = field(compare=False)
    p: np.ndarray = field(compare=False)
    values: np.ndarray = field(compare=False)
    dx: float
    dp: float
    time: float = 0.0

    def total(self) -> float:
        return float(self.values.sum() * self.dx * self.dp)

    def value_at(self, x0: float, p0: float) -> float:
        i = int(np.argmin(np.abs(self.x - x0)))
        k = int(np.argmin(np.abs(self.p - p0)))
        return float(self.values[i, k])


@dataclass(frozen=True)
class PhaseSpaceAmplitude:
    x_grid: SpatialGrid
    delta_grid: SpatialGrid
    p: np.ndarray = field(compare=False)
    values: np.ndarray = field(compare=False)
    units: SimUnits = DEFAULT_UNITS
    convention: str = AMPLITUDE_CONVENTION
    time: float = 0.0

    @property
    def dp(self) -> float:
        return float(self.p[1] - self.p[0])

    def shifted(self) -> np.ndarray:
        """``psi(x_i + s_j)`` rebuilt from the amplitudes, ``s = delta / 2``."""
        s = 0.5 * self.delta_grid.x
        kernel = np.exp(1j * np.outer(self.p, s) / self.units.hbar)
        return self.dp * (self.values @ kernel)

    def reconstruct(self) -> np.ndarray:
        """``psi(x)`` from the zero-shift column."""
        return self.dp * self.values.sum(axis=1)


@dataclass(frozen=True)
class NegativityReport:
    min_value: float
    negative_mass_fraction: float
    location_of_min: tuple[float, float]


# ---------------------------------------------------------------------------


def default_delta_grid(grid: SpatialGrid) -> SpatialGrid:
    """Symmetric displacement grid with the spacing and size of ``grid``."""
    half = 0.5 * grid.length
    return make_grid(-half, half, grid.n)


def _check_delta_grid(grid: SpatialGrid, delta_grid: SpatialGrid) -> None:
    if not math.isclose(delta_grid.x_min, -delta_grid.x_max, rel_tol=0, abs_tol=1e-12 * delta_grid.length):
        raise DomainError("displacement grid must be symmetric about zero")
    if delta_grid.length > grid.length * (1 + 1e-12):
        raise DomainError("displacement span exceeds the spatial domain")


def shifted_samples(psi: WaveFunction, shifts: np.ndarray) -> np.ndarray:
    """``G[i, j] = psi(x_i + shifts[j])`` by band-limited interpolation."""
    grid = psi.grid
    n = grid.n
    padded = np.concatenate((psi.values, np.zeros(n, dtype=complex)))
    k = 2 * np.pi * np.fft.fftfreq(2 * n, grid.dx)
    spec = np.fft.fft(padded)
    phase = np.exp(1j * np.outer(shifts, k))
    phase[:, n] = np.cos(shifts * k[n])
    return np.fft.ifft(spec[None, :] * phase, axis=1)[:, :n].T


def _half_shifts(psi: WaveFunction, delta_grid: SpatialGrid) -> np.ndarray:
    g = shifted_samples(psi, 0.5 * delta_grid.x)
    g[:, 0] = 0.0
    return g


def characteristic_function(psi: WaveFunction, delta_grid: SpatialGrid | None = None) -> CharacteristicFunction:
    """``rho(x, delta) = conj(psi(x - delta/2)) psi(x + delta/2)``."""
    require_normalized(psi)
    delta_grid = default_delta_grid(psi.grid) if delta_grid is None else delta_grid
    _check_delta_grid(psi.grid, delta_grid)
    g = _half_shifts(psi, delta_grid)
    # column n - j holds the shift -s_j
    mirrored = np.concatenate((g[:, :1], g[:, :0:-1]), axis=1)
    rho = np.conj(mirrored) * g
    zero = delta_grid.n // 2
    rho[:, zero] = rho[:, zero].real
    out = CharacteristicFunction(psi.grid, delta_grid, rho, psi.time)
    mass = float(out.at_zero().real.sum() * psi.grid.dx)
    if abs(mass - 1) > 1e-8:
        raise NumericalError(f"rho(x, 0) integrates to {mass:.12g}")
    return out


def wigner_momenta(delta_grid: SpatialGrid, units: SimUnits = DEFAULT_UNITS) -> np.ndarray:
    n = delta_grid.n
    return 2 * np.pi * units.hbar * (np.arange(n) - n // 2) / (n * delta_grid.dx)


def wigner_from_characteristic(rho: CharacteristicFunction, units: SimUnits = DEFAULT_UNITS) -> PhaseSpaceDensity:
    """Fourier transform of ``rho`` over the displacement."""
    herm = rho.hermiticity_error()
    scale = max(float(np.max(np.abs(rho.values))), 1e-300)
    if herm > HERMITIAN_TOL * max(scale, 1.0):
        raise DomainError(f"characteristic function is not Hermitian (error {herm:.3g})")
    dd = rho.delta_grid.dx
    f = np.fft.fftshift(np.fft.fft(np.fft.ifftshift(rho.values, axes=1), axis=1), axes=1)
    f *= dd / (2 * np.pi * units.hbar)
    imag = float(np.max(np.abs(f.imag)))
    if imag > IMAG_TOL:
        raise NumericalError(f"Wigner transform has imaginary residue {imag:.3g}")
    p = wigner_momenta(rho.delta_grid, units)
    return PhaseSpaceDensity(rho.x_grid.x, p, f.real.copy(), rho.x_grid.dx, float(p[1] - p[0]), rho.time)


def wigner(psi: WaveFunction, units: SimUnits = DEFAULT_UNITS,
           delta_grid: SpatialGrid | None = None) -> PhaseSpaceDensity:
    return wigner_from_characteristic(characteristic_function(psi, delta_grid), units)


def marginals(f: PhaseSpaceDensity) -> tuple[np.ndarray, np.ndarray]:
    """Position and momentum marginals (periodic sums over the other variable)."""
    return f.values.sum(axis=1) * f.dp, f.values.sum(axis=0) * f.dx


# ---------------------------------------------------------------------------
# Moment expansion about delta = 0
# ---------------------------------------------------------------------------

_D1 = np.array([-1, 9, -45, 0, 45, -9, 1]) / 60.0
_D2 = np.array([2, -27, 270, -490, 270, -27, 2]) / 180.0


@dataclass(frozen=True)
class MomentReport:
    x: np.ndarray = field(compare=False)
    mean_p_fit: np.ndarray = field(compare=False)
    mean_p_direct: np.ndarray = field(compare=False)
    p2_fit: np.ndarray = field(compare=False)
    p2_direct: np.ndarray = field(compare=False)
    mask: np.ndarray = field(compare=False)
    max_dev_mean_p: float = 0.0
    max_dev_p2: float = 0.0


def moment_expansion_check(rho: CharacteristicFunction, f: PhaseSpaceDensity,
                           units: SimUnits = DEFAULT_UNITS, min_density: float = 1e-6) -> MomentReport:
    """Local momentum moments from the Taylor coefficients of ``rho`` at zero displacement.

    Sixth-order central differences give ``d rho / d delta`` and
    ``d^2 rho / d delta^2`` at zero; ``<p>`` and ``<p^2>`` at each x follow from
    ``rho ~ rho0 (1 + i <p> delta / hbar - <p^2> delta^2 / 2 hbar^2)`` and are
    compared with p-integrals of ``F``.
    """
    hbar = units.hbar
    rho0 = rho.at_zero().real
    mass = f.values.sum() * f.dx * f.dp
    p2_global = float(np.sum(f.values.sum(axis=0) * f.p**2) * f.dx * f.dp / mass)
    if p2_global > 0:
        width = hbar / math.sqrt(p2_global)
        if np.count_nonzero(np.abs(rho.delta) <= width) < 5:
            raise DomainError(f"displacement grid has fewer than 5 points within |delta| <= {width:.3g}")
    z = rho.zero_index
    if z < 3:
        raise DomainError("displacement grid too small for the stencil")
    window = rho.values[:, z - 3:z + 4]
    dd = rho.delta_grid.dx
    d1 = window @ _D1 / dd
    d2 = window @ _D2 / dd**2
    mask = rho0 > min_density
    safe = np.where(mask, rho0, 1.0)
    mean_fit = hbar * d1.imag / safe
    p2_fit = -hbar**2 * d2.real / safe
    mean_direct = (f.values @ f.p) * f.dp / safe
    p2_direct = (f.values @ f.p**2) * f.dp / safe
    dev1 = float(np.max(np.abs(mean_fit - mean_direct)[mask])) if mask.any() else 0.0
    dev2 = float(np.max(np.abs(p2_fit - p2_direct)[mask])) if mask.any() else 0.0
    nan = np.where(mask, 1.0, np.nan)
    return MomentReport(f.x, mean_fit * nan, mean_direct * nan, p2_fit * nan, p2_direct * nan, mask, dev1, dev2)


def liouville_residual(rho_prev: CharacteristicFunction, rho_mid: CharacteristicFunction,
                       rho_next: CharacteristicFunction, potential: Potential,
                       units: SimUnits = DEFAULT_UNITS) -> float:
    """L2 norm of ``-i hbar d rho/dt - (hbar^2/m) d2 rho/dx d delta + delta V'(x) rho``.

    The time derivative is the central difference of the outer snapshots;
    spatial derivatives are spectral.
    """
    dt = 0.5 * (rho_next.time - rho_prev.time)
    if not dt > 0:
        raise DomainError("snapshots must be ordered in time")
    hbar, m = units.hbar, units.mass
    v = rho_mid.values
    kx = 2 * np.pi * np.fft.fftfreq(rho_mid.x_grid.n, rho_mid.x_grid.dx)
    kd = 2 * np.pi * np.fft.fftfreq(rho_mid.delta_grid.n, rho_mid.delta_grid.dx)
    kx[rho_mid.x_grid.n // 2] = 0.0
    kd[rho_mid.delta_grid.n // 2] = 0.0
    mixed = np.fft.ifft2(-np.outer(kx, kd) * np.fft.fft2(v))
    drho = (rho_next.values - rho_prev.values) / (2 * dt)
    force = np.outer(potential.gradient(rho_mid.x_grid.x, units), rho_mid.delta)
    res = -1j * hbar * drho - (hbar**2 / m) * mixed + force * v
    return float(np.sqrt(np.sum(np.abs(res) ** 2) * rho_mid.x_grid.dx * rho_mid.delta_grid.dx))


# ---------------------------------------------------------------------------
# Phase-space amplitudes
# ---------------------------------------------------------------------------


def phase_space_amplitude(psi: WaveFunction, units: SimUnits = DEFAULT_UNITS,
                          delta_grid: SpatialGrid | None = None) -> PhaseSpaceAmplitude:
    """``phi(x, p) = (2 pi hbar)^-1 int psi(x + s) exp(-i p s / hbar) ds``.

    Discretised on the half-shift grid ``s = delta / 2`` (spacing ``h``), so
    the amplitude momenta have spacing ``2 pi hbar / (n h)``, twice the Wigner
    momentum spacing.
    """
    require_normalized(psi)
    delta_grid = default_delta_grid(psi.grid) if delta_grid is None else delta_grid
    _check_delta_grid(psi.grid, delta_grid)
    g = _half_shifts(psi, delta_grid)
    h = 0.5 * delta_grid.dx
    n = delta_grid.n
    p = 2 * np.pi * units.hbar * (np.arange(n) - n // 2) / (n * h)
    phi = np.fft.fftshift(np.fft.fft(np.fft.ifftshift(g, axes=1), axis=1), axes=1)
    phi *= h / (2 * np.pi * units.hbar)
    return PhaseSpaceAmplitude(psi.grid, delta_grid, p, phi, units, AMPLITUDE_CONVENTION, psi.time)


def density_from_amplitudes(phi: PhaseSpaceAmplitude) -> PhaseSpaceDensity:
    """``F(x, p) = 2 dp_phi sum_p' conj(phi(x, 2p - p')) phi(x, p')``, circular in p."""
    n = phi.delta_grid.n
    if phi.values.shape != (phi.x_grid.n, n):
        raise DomainError("amplitude array does not match its grids")
    # index 0 of the unshifted arrays is p = 0
    a = np.fft.ifftshift(phi.values, axes=1)
    conv = np.fft.ifft(np.fft.fft(np.conj(a), axis=1) * np.fft.fft(a, axis=1), axis=1)
    f = 2 * phi.dp * np.fft.fftshift(conv, axes=1)
    imag = float(np.max(np.abs(f.imag)))
    if imag > IMAG_TOL:
        raise NumericalError(f"amplitude autocorrelation has imaginary residue {imag:.3g}")
    p = wigner_momenta(phi.delta_grid, phi.units)
    return PhaseSpaceDensity(phi.x_grid.x, p, f.real.copy(), phi.x_grid.dx, float(p[1] - p[0]), phi.time)


def negativity_report(f: PhaseSpaceDensity) -> NegativityReport:
    vals = f.values
    i, k = np.unravel_index(int(np.argmin(vals)), vals.shape)
    total = float(np.sum(np.abs(vals)))
    neg = float(np.sum(np.abs(np.minimum(vals, 0.0))))
    return NegativityReport(float(vals[i, k]), neg / total if total > 0 else 0.0, (float(f.x[i]), float(f.p[k])))
