"""Momentum dispersion, minimum time interval and force balance.

With ``(Dp)^2`` the global momentum variance of the Wigner density:

* minimum interval ``Dt = m hbar / (Dp)^2``
* kinetic dispersion ``DEk = (Dp)^2 / 2m``, so ``Dt * DEk = hbar / 2``
* potential dispersion ``DV = <V> - V(<x>)`` (a Jensen gap, nonnegative
  for convex ``V``) and ``DE = DEk + DV``
* force balance ``(Dp)^2 / m * rho' + rho V' = 0`` for stationary states
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .core import DEFAULT_UNITS, DomainError, Harmonic, Potential, SimUnits, fd_derivative, make_grid, momentum_representation
from .phase_space import PhaseSpaceDensity, wigner
from .schrodinger import (
    PolarFields,
    WaveFunction,
    _dilate,
    osmotic_from_density,
    polar_decompose,
    require_normalized,
    solve_eigenstates,
)

STATIONARY_TOL = 1e-6


@dataclass(frozen=True)
class DispersionReport:
    mean_p: float
    var_p: float
    delta_t_min: float
    delta_Ek: float
    delta_V: float
    delta_E: float
    product_tk: float
    product_tE: float
    delta_V_negative: bool = False

    @property
    def classical(self) -> bool:
        """Dispersion-free limit: no finite minimum interval."""
        return math.isinf(self.delta_t_min)


@dataclass(frozen=True)
class ForceBalanceReport:
    residual: np.ndarray = field(compare=False)
    rel_norm: float = 0.0
    stochastic_force: np.ndarray = field(compare=False, default=None)
    mask: np.ndarray = field(compare=False, default=None)
    var_p: float = 0.0


@dataclass(frozen=True)
class OscillatorReport:
    n: int
    omega: float
    energy: float
    energy_exact: float
    delta_E: float
    delta_t_min: float
    period_ratio: float
    energy_band: tuple[float, float]
    interval_comparable: bool
    dispersions: DispersionReport = field(compare=False, default=None)


def momentum_moments(f: PhaseSpaceDensity) -> tuple[float, float]:
    """Global ``<p>`` and ``<p^2> - <p>^2`` of a phase-space density."""
    pm = f.values.sum(axis=0) * f.dx
    mass = pm.sum() * f.dp
    mean = float(np.sum(pm * f.p) * f.dp / mass)
    second = float(np.sum(pm * f.p**2) * f.dp / mass)
    var = second - mean**2
    if var < 0:
        warnings.warn(f"momentum variance {var:.3g} < 0 from round-off; set to zero", RuntimeWarning, stacklevel=2)
        var = 0.0
    return mean, var


def momentum_moments_direct(psi: WaveFunction, units: SimUnits = DEFAULT_UNITS) -> tuple[float, float]:
    """``<p>`` and variance from the momentum-space amplitude."""
    mom = momentum_representation(psi.values, psi.grid, units)
    w = mom.density() * mom.dp
    mean = float(np.sum(w * mom.p))
    return mean, float(np.sum(w * mom.p**2)) - mean**2


def min_time_interval(var_p: float, units: SimUnits = DEFAULT_UNITS) -> float:
    """``m hbar / var_p``; infinite for a dispersion-free (classical) state."""
    if var_p < 0:
        raise DomainError("momentum variance must be nonnegative")
    if var_p == 0:
        return math.inf
    return units.mass * units.hbar / var_p


def energy_dispersions(psi: WaveFunction, potential: Potential, units: SimUnits = DEFAULT_UNITS,
                       f: PhaseSpaceDensity | None = None) -> DispersionReport:
    require_normalized(psi)
    f = wigner(psi, units) if f is None else f
    mean_p, var_p = momentum_moments(f)
    x = psi.grid.x
    w = psi.density() * psi.grid.dx
    v_mean = float(np.sum(w * potential(x, units)))
    x_mean = float(np.sum(w * x))
    delta_v = v_mean - float(potential(np.array([x_mean]), units)[0])
    flagged = delta_v < 0
    if flagged:
        warnings.warn(f"potential dispersion {delta_v:.3g} < 0 (non-convex potential)", RuntimeWarning, stacklevel=2)
    delta_ek = var_p / (2 * units.mass)
    dt_min = min_time_interval(var_p, units)
    delta_e = delta_ek + delta_v
    if math.isinf(dt_min):
        product_tk = product_te = math.nan
    else:
        product_tk = dt_min * delta_ek
        product_te = dt_min * delta_e
    return DispersionReport(mean_p, var_p, dt_min, delta_ek, delta_v, delta_e, product_tk, product_te, flagged)


def stochastic_force(polar: PolarFields, units: SimUnits = DEFAULT_UNITS, delta_t: float | None = None) -> np.ndarray:
    """``f_s = 2 m u / delta_t`` with ``u = D0 rho' / rho``; NaN on masked points."""
    if delta_t is None or not delta_t > 0:
        raise DomainError("delta_t must be positive")
    return 2 * units.mass * osmotic_from_density(polar, units) / delta_t


def force_balance_residual(psi: WaveFunction, potential: Potential, units: SimUnits = DEFAULT_UNITS,
                           f: PhaseSpaceDensity | None = None, delta_t: float | None = None,
                           accuracy: int = 8) -> ForceBalanceReport:
    """Residual of ``(Dp)^2 / m * rho' + rho V'`` on node-free points.

    ``rel_norm`` divides by the L2 norm of ``rho V'`` (infinite when the
    potential exerts no force).  The stochastic force uses ``delta_t``,
    defaulting to the minimum interval.
    """
    require_normalized(psi)
    f = wigner(psi, units) if f is None else f
    mean_p, var_p = momentum_moments(f)
    if abs(mean_p) > STATIONARY_TOL:
        raise DomainError(f"<p> = {mean_p:.3g}; force balance expects a stationary state")
    polar = polar_decompose(psi)
    mask = _dilate(polar.node_mask, accuracy // 2)
    rho = psi.density()
    x, dx = psi.grid.x, psi.grid.dx
    force = rho * potential.gradient(x, units)
    res = var_p / units.mass * fd_derivative(rho, dx, accuracy=accuracy) + force
    res[mask] = np.nan
    keep = ~mask
    denom = math.sqrt(np.sum(force[keep] ** 2) * dx)
    num = math.sqrt(np.sum(res[keep] ** 2) * dx)
    rel = num / denom if denom > 0 else math.inf
    dt = min_time_interval(var_p, units) if delta_t is None else delta_t
    fs = stochastic_force(polar, units, dt) if math.isfinite(dt) else np.zeros_like(rho)
    return ForceBalanceReport(res, rel, fs, mask, var_p)


def oscillator_grid(n: int, omega: float, units: SimUnits = DEFAULT_UNITS, points: int | None = None):
    """Grid for level ``n`` whose half-width is twice the extent of the state.

    The displacement grid of the Wigner transform spans the spatial domain,
    and ``rho(x, delta)`` reaches out to twice the extent of ``psi``.
    """
    length = math.sqrt(units.hbar / (units.mass * omega))
    half = 2.0 * length * (math.sqrt(2 * n + 1) + 4.5)
    if points is None:
        points = 512 if n <= 2 else 1024
    return make_grid(-half, half, points)


def oscillator_report(n: int, omega: float = 1.0, units: SimUnits = DEFAULT_UNITS,
                      grid=None) -> OscillatorReport:
    """Dispersions of the ``n``-th oscillator level and its energy band ``E_n +- hbar omega / 2``."""
    if not 0 <= n <= 10:
        raise DomainError("oscillator level must be between 0 and 10")
    pot = Harmonic(omega)
    grid = oscillator_grid(n, omega, units) if grid is None else grid
    energy, psi = solve_eigenstates(pot, grid, units, n + 1)[n]
    rep = energy_dispersions(psi, pot, units)
    exact = (n + 0.5) * units.hbar * omega
    half = 0.5 * units.hbar * omega
    ratio = rep.delta_t_min * omega
    return OscillatorReport(n, omega, float(energy), exact, rep.delta_E, rep.delta_t_min, ratio,
                            (exact - half, exact + half), ratio < 1.0, rep)
