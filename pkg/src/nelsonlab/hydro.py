"""Coupled current/osmotic velocity equations.

With ``nu_minus = 0`` and branch sign ``lam``::

    dv/dt = -d/dx [v^2/2 - lam u^2/2 - lam nu u'] - V'/m
    du/dt = -d/dx [v u + nu v']

For ``lam = +1`` and ``nu = D0`` this is the Schrodinger equation written for
``v = 2 D0 S'`` and ``u = 2 D0 R'``.  Spatial derivatives are high-order
central differences with one-sided closures; the velocity fields of
Gaussian-class states are low-degree polynomials, which these stencils
differentiate exactly without any periodicity assumption.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.signal

from .core import DEFAULT_UNITS, DomainError, NumericalError, Potential, SimUnits, SpatialGrid, fd_derivative, l2_norm
from .schrodinger import Branch, CrankNicolson, VelocityFields, WaveFunction, velocity_fields

STABILITY = 0.2
NODE_FLOOR = 1e-10
FILTER_WINDOW = 17
FILTER_ORDER = 4
CORE_FLOOR = 1e-8
CORE_FIT = 8


@dataclass(frozen=True)
class HydroState:
    grid: SpatialGrid
    v: np.ndarray = field(compare=False)
    u: np.ndarray = field(compare=False)
    time: float = 0.0
    nu_plus: float = 0.5
    nu_minus: float = 0.0

    def __post_init__(self):
        if self.nu_minus != 0:
            raise DomainError("only nu_minus = 0 is supported")
        if self.nu_plus < 0:
            raise DomainError("nu_plus must be nonnegative")
        for name in ("v", "u"):
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.shape != (self.grid.n,):
                raise DomainError(f"{name} needs {self.grid.n} samples")
            object.__setattr__(self, name, arr)

    def density(self) -> np.ndarray:
        """Density whose osmotic velocity is ``u``: ``exp(int u / nu)``, normalised."""
        if self.nu_plus == 0:
            raise DomainError("density is undefined without diffusion")
        dx = self.grid.dx
        log_rho = np.concatenate(([0.0], np.cumsum(0.5 * (self.u[1:] + self.u[:-1]) * dx))) / self.nu_plus
        rho = np.exp(log_rho - log_rho.max())
        return rho / (rho.sum() * dx)


def _extrapolate_linear(values: np.ndarray, valid: np.ndarray) -> np.ndarray:
    """Fill invalid points by linear extrapolation from the nearest two valid points on each side."""
    idx = np.flatnonzero(valid)
    if idx.size < 2:
        raise DomainError("need at least two unmasked points")
    out = values.copy()
    pos = np.arange(values.size)
    left, right = idx[:2], idx[-2:]
    lo = pos < idx[0]
    hi = pos > idx[-1]
    out[lo] = values[left[0]] + (pos[lo] - left[0]) * (values[left[1]] - values[left[0]]) / (left[1] - left[0])
    out[hi] = values[right[1]] + (pos[hi] - right[1]) * (values[right[1]] - values[right[0]]) / (right[1] - right[0])
    inner = ~valid & ~lo & ~hi
    if inner.any():
        raise DomainError("initial fields have interior nodes; the velocity equations need a nodeless state")
    return out


def state_from_fields(vel: VelocityFields, units: SimUnits = DEFAULT_UNITS, time: float = 0.0) -> HydroState:
    """Initial state from gridded velocities, extending masked tails linearly."""
    valid = ~vel.node_mask
    return HydroState(vel.grid, _extrapolate_linear(vel.v, valid), _extrapolate_linear(vel.u, valid),
                      time, units.d0, 0.0)


def state_from_wavefunction(psi: WaveFunction, units: SimUnits = DEFAULT_UNITS) -> HydroState:
    return state_from_fields(velocity_fields(psi, units), units, psi.time)


def _interior_node(rho: np.ndarray) -> int | None:
    """Index of a point below ``NODE_FLOOR * max`` lying between two points above it."""
    above = np.flatnonzero(rho >= NODE_FLOOR * rho.max())
    if above.size == 0:
        return None
    span = rho[above[0]:above[-1] + 1]
    hits = np.flatnonzero(span < NODE_FLOOR * rho.max())
    return int(hits[0]) + int(above[0]) if hits.size else None


def smooth(f: np.ndarray) -> np.ndarray:
    """Savitzky-Golay low-pass that leaves polynomials of degree <= 4 unchanged.

    Short-wavelength perturbations of the velocity form grow at a rate
    ``k |u|`` where the density is small, so round-off in the tails would
    otherwise swamp the solution within a fraction of a time unit.
    """
    if f.size < FILTER_WINDOW:
        return f
    return scipy.signal.savgol_filter(f, FILTER_WINDOW, FILTER_ORDER, mode="interp")


def core_region(rho: np.ndarray) -> tuple[int, int]:
    """First and one-past-last index of the span where ``rho >= CORE_FLOOR * max``."""
    above = np.flatnonzero(rho >= CORE_FLOOR * rho.max())
    if above.size < CORE_FIT:
        raise NumericalError("density support shrank below the extrapolation stencil")
    return int(above[0]), int(above[-1]) + 1


def _extend_core(f: np.ndarray, lo: int, hi: int) -> None:
    """Replace ``f`` outside ``[lo, hi)`` by straight-line fits to the core's end points."""
    pos = np.arange(f.size, dtype=float)
    if lo > 0:
        idx = slice(lo, lo + CORE_FIT)
        a, b = np.polyfit(pos[idx], f[idx], 1)
        f[:lo] = a * pos[:lo] + b
    if hi < f.size:
        idx = slice(hi - CORE_FIT, hi)
        a, b = np.polyfit(pos[idx], f[idx], 1)
        f[hi:] = a * pos[hi:] + b


def madelung_rhs(v: np.ndarray, u: np.ndarray, force: np.ndarray, nu: float, lam: int, dx: float,
                 accuracy: int = 8) -> tuple[np.ndarray, np.ndarray]:
    du = fd_derivative(u, dx, accuracy=accuracy)
    dv = fd_derivative(v, dx, accuracy=accuracy)
    b_v = 0.5 * v * v - lam * 0.5 * u * u - lam * nu * du
    b_u = v * u + nu * dv
    return (-fd_derivative(b_v, dx, accuracy=accuracy) + force,
            -fd_derivative(b_u, dx, accuracy=accuracy))


def max_stable_dt(grid: SpatialGrid, nu_plus: float) -> float:
    return math.inf if nu_plus == 0 else STABILITY * grid.dx**2 / nu_plus


def evolve_madelung(state: HydroState, potential: Potential, units: SimUnits = DEFAULT_UNITS,
                    dt: float = 1e-3, steps: int = 1, lam: int | Branch = Branch.HYPERBOLIC,
                    accuracy: int = 8) -> HydroState:
    """Classical fourth-order Runge-Kutta stepping of the velocity equations."""
    if int(lam) == Branch.PARABOLIC:
        raise DomainError("the parabolic branch is integrated in amplitude form; use evolve_parabolic")
    if int(lam) != Branch.HYPERBOLIC:
        raise DomainError("lam must be +1 or -1")
    if not dt > 0:
        raise DomainError("dt must be positive")
    limit = max_stable_dt(state.grid, state.nu_plus)
    if dt > limit:
        raise DomainError(f"dt={dt:.3g} exceeds the explicit stability bound {limit:.3g}")
    dx, nu = state.grid.dx, state.nu_plus
    force = -potential.gradient(state.grid.x, units) / units.mass
    v, u = state.v.copy(), state.u.copy()

    def rhs(a, b):
        return madelung_rhs(a, b, force, nu, 1, dx, accuracy)

    for k in range(steps):
        k1v, k1u = rhs(v, u)
        k2v, k2u = rhs(v + 0.5 * dt * k1v, u + 0.5 * dt * k1u)
        k3v, k3u = rhs(v + 0.5 * dt * k2v, u + 0.5 * dt * k2u)
        k4v, k4u = rhs(v + dt * k3v, u + dt * k3u)
        v = v + dt / 6 * (k1v + 2 * k2v + 2 * k3v + k4v)
        u = u + dt / 6 * (k1u + 2 * k2u + 2 * k3u + k4u)
        v, u = smooth(v), smooth(u)
        if nu > 0:
            # the tails carry no mass but amplify perturbations fastest, so
            # they are slaved to the core by linear extension
            rho = replace(state, v=v, u=u).density()
            node = _interior_node(rho)
            if node is not None:
                raise NumericalError(f"node formed at x={state.grid.x[node]:.4g} (step {k})")
            lo, hi = core_region(rho)
            _extend_core(v, lo, hi)
            _extend_core(u, lo, hi)
        if not (np.all(np.isfinite(v)) and np.all(np.isfinite(u))):
            raise NumericalError(f"velocity fields blew up at step {k}")
    return replace(state, v=v, u=u, time=state.time + steps * dt)


def continuity_residual(prev: HydroState, mid: HydroState, nxt: HydroState) -> float:
    """L2 norm of ``d rho/dt + d(rho v)/dx`` with ``rho`` rebuilt from ``u``."""
    dt = 0.5 * (nxt.time - prev.time)
    if not dt > 0:
        raise DomainError("states must be ordered in time")
    rho = mid.density()
    res = (nxt.density() - prev.density()) / (2 * dt) + fd_derivative(rho * mid.v, mid.grid.dx, accuracy=8)
    return l2_norm(res, mid.grid.dx)


@dataclass(frozen=True)
class HydroConsistencyReport:
    t_final: float
    v_l2: float
    u_l2: float
    hydro: HydroState = field(compare=False)
    reference: VelocityFields = field(compare=False)


def _has_interior_mask(mask: np.ndarray) -> bool:
    idx = np.flatnonzero(~mask)
    return idx.size > 0 and bool(mask[idx[0]:idx[-1] + 1].any())


def hydro_consistency(psi0: WaveFunction, potential: Potential, units: SimUnits = DEFAULT_UNITS,
                      t_final: float = 0.5, dt: float | None = None,
                      accuracy: int | None = None) -> HydroConsistencyReport:
    """Evolve the velocity equations and the Schrodinger equation from the same data.

    Returns the L2 differences of ``v`` and ``u`` at ``t_final`` over the
    points where the Schrodinger fields are defined.  ``accuracy`` sets the
    Hamiltonian stencil of the Schrodinger route.
    """
    if not t_final > 0:
        raise DomainError("t_final must be positive")
    grid = psi0.grid
    dt = min(max_stable_dt(grid, units.d0), 1e-3) if dt is None else dt
    steps = max(1, math.ceil(t_final / dt - 1e-9))
    dt = t_final / steps
    state = state_from_wavefunction(psi0, units)
    prop = CrankNicolson(grid, potential, units, dt, accuracy)
    psi = psi0
    for k in range(steps):
        psi = prop.evolve(psi, 1)
        vel = velocity_fields(psi, units)
        if _has_interior_mask(vel.node_mask):
            raise NumericalError(f"wavefunction developed a node at t={psi.time:.4g}")
    hyd = evolve_madelung(state, potential, units, dt, steps)
    keep = ~vel.node_mask
    dv = l2_norm((hyd.v - vel.v)[keep], grid.dx)
    du = l2_norm((hyd.u - vel.u)[keep], grid.dx)
    return HydroConsistencyReport(t_final, dv, du, hyd, vel)
