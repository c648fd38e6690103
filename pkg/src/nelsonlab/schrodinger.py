"""Reference quantum dynamics on a uniform grid.

The Hamiltonian is ``-(hbar^2 / 2m) d^2/dx^2 + V`` discretised with a central
stencil (fourth order for smooth potentials, second order otherwise) and zero
Dirichlet data outside the grid.  Eigenstates, Crank-Nicolson propagation and
the imaginary-time (parabolic) flow all use the same matrix, so discrete
eigenvectors are exact stationary states of the discrete propagators.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg
import scipy.sparse
import scipy.sparse.linalg

from .core import (
    DEFAULT_UNITS,
    DomainError,
    Harmonic,
    NumericalError,
    Potential,
    SimUnits,
    SpatialGrid,
    central_weights,
    check_edge_decay,
    fd_derivative,
    stencil_accuracy,
)

LOG_FLOOR = 1e-300
RELATIVE_NODE_THRESHOLD = 1e-8


class Branch(enum.IntEnum):
    """Sign of the stochastic-acceleration coupling in the dynamics."""

    HYPERBOLIC = 1
    PARABOLIC = -1


@dataclass(frozen=True)
class WaveFunction:
    grid: SpatialGrid
    values: np.ndarray = field(compare=False)
    time: float = 0.0

    def __post_init__(self):
        values = np.asarray(self.values, dtype=complex)
        if values.shape != (self.grid.n,):
            raise DomainError(f"wavefunction needs {self.grid.n} samples, got {values.shape}")
        object.__setattr__(self, "values", values)

    @property
    def x(self) -> np.ndarray:
        return self.grid.x

    def density(self) -> np.ndarray:
        return np.abs(self.values) ** 2

    def norm(self) -> float:
        return float(np.sqrt(np.sum(self.density()) * self.grid.dx))

    def normalized(self) -> WaveFunction:
        return replace(self, values=self.values / self.norm())

    def conj(self) -> WaveFunction:
        return replace(self, values=np.conj(self.values))

    def inner(self, other: WaveFunction) -> complex:
        """<self|other> by the rectangle rule."""
        return complex(np.sum(np.conj(self.values) * other.values) * self.grid.dx)

    def mean_x(self) -> float:
        return float(np.sum(self.x * self.density()) * self.grid.dx)

    def var_x(self) -> float:
        rho = self.density()
        m = np.sum(self.x * rho) * self.grid.dx
        return float(np.sum((self.x - m) ** 2 * rho) * self.grid.dx)


def require_normalized(psi: WaveFunction, tol: float = 1e-8) -> None:
    if abs(psi.norm() - 1.0) > tol:
        raise DomainError(f"wavefunction must be normalised (norm = {psi.norm():.12g})")


def gaussian_packet(grid: SpatialGrid, x0: float = 0.0, sigma: float = 1.0, k0: float = 0.0,
                    time: float = 0.0) -> WaveFunction:
    """Normalised Gaussian with position standard deviation ``sigma`` and phase ``exp(i k0 x)``."""
    x = grid.x
    values = np.exp(-((x - x0) ** 2) / (4 * sigma**2) + 1j * k0 * x)
    return WaveFunction(grid, values, time).normalized()


# ---------------------------------------------------------------------------
# Hamiltonian
# ---------------------------------------------------------------------------


def hamiltonian_band(grid: SpatialGrid, potential: Potential, units: SimUnits = DEFAULT_UNITS,
                     accuracy: int | None = None) -> np.ndarray:
    """Upper banded storage (``scipy.linalg.eig_banded`` layout) of the Hamiltonian."""
    acc = stencil_accuracy(potential, accuracy)
    w = central_weights(2, acc)
    half = len(w) // 2
    kinetic = -(units.hbar**2) / (2 * units.mass * grid.dx**2)
    band = np.zeros((half + 1, grid.n))
    for k in range(half + 1):
        band[half - k, k:] = kinetic * w[half + k]
    band[half] += potential(grid.x, units)
    return band


def hamiltonian_matrix(grid: SpatialGrid, potential: Potential, units: SimUnits = DEFAULT_UNITS,
                       accuracy: int | None = None) -> scipy.sparse.csc_matrix:
    band = hamiltonian_band(grid, potential, units, accuracy)
    half = band.shape[0] - 1
    diagonals, offsets = [], []
    for k in range(half + 1):
        row = band[half - k, k:]
        diagonals.append(row)
        offsets.append(k)
        if k:
            diagonals.append(row)
            offsets.append(-k)
    return scipy.sparse.diags(diagonals, offsets, shape=(grid.n, grid.n), format="csc")


def solve_eigenstates(potential: Potential, grid: SpatialGrid, units: SimUnits = DEFAULT_UNITS,
                      k: int = 1, accuracy: int | None = None) -> list[tuple[float, WaveFunction]]:
    """Lowest ``k`` eigenpairs, energies ascending.

    Eigenfunctions are real, normalised on the grid, and signed so that the
    leftmost lobe is positive.
    """
    if not 1 <= k < grid.n // 4:
        raise DomainError(f"k must satisfy 1 <= k < n/4 = {grid.n // 4}, got {k}")
    band = hamiltonian_band(grid, potential, units, accuracy)
    try:
        energies, vecs = scipy.linalg.eig_banded(band, select="i", select_range=(0, k - 1))
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise NumericalError(
            f"banded eigensolver failed (n={grid.n}, bandwidth={band.shape[0] - 1}, k={k}): {exc}"
        ) from exc
    out = []
    for e, v in zip(energies, vecs.T):
        v = v / math.sqrt(np.sum(v**2) * grid.dx)
        lead = np.flatnonzero(np.abs(v) > 1e-3 * np.abs(v).max())[0]
        if v[lead] < 0:
            v = -v
        out.append((float(e), WaveFunction(grid, v)))
    return out


# ---------------------------------------------------------------------------
# Propagators
# ---------------------------------------------------------------------------


class CrankNicolson:
    """Cayley-form propagator ``(1 + i dt H / 2 hbar)^-1 (1 - i dt H / 2 hbar)``.

    Unitary for the discrete Hamiltonian, so norms are preserved to round-off.
    """

    def __init__(self, grid: SpatialGrid, potential: Potential, units: SimUnits = DEFAULT_UNITS,
                 dt: float = 1e-3, accuracy: int | None = None):
        if not dt > 0:
            raise DomainError("dt must be positive")
        if isinstance(potential, Harmonic) and dt > 0.1 * potential.period:
            raise DomainError(f"dt={dt} exceeds a tenth of the oscillator period {potential.period:.4g}")
        self.grid, self.potential, self.units, self.dt = grid, potential, units, dt
        h = hamiltonian_matrix(grid, potential, units, accuracy)
        eye = scipy.sparse.identity(grid.n, dtype=complex, format="csc")
        a = (eye + (0.5j * dt / units.hbar) * h).tocsc()
        self._rhs = (eye - (0.5j * dt / units.hbar) * h).tocsr()
        try:
            self._lu = scipy.sparse.linalg.splu(a)
        except RuntimeError as exc:
            raise NumericalError(f"Crank-Nicolson factorisation failed: {exc}") from exc

    def step(self, values: np.ndarray, steps: int = 1) -> np.ndarray:
        out = np.asarray(values, dtype=complex)
        for _ in range(steps):
            out = self._lu.solve(self._rhs @ out)
        return out

    def evolve(self, psi: WaveFunction, steps: int) -> WaveFunction:
        return WaveFunction(psi.grid, self.step(psi.values, steps), psi.time + steps * self.dt)


def evolve_unitary(psi: WaveFunction, potential: Potential, units: SimUnits = DEFAULT_UNITS,
                   dt: float = 1e-3, steps: int = 1, accuracy: int | None = None) -> WaveFunction:
    """Advance ``psi`` by ``steps * dt`` under the Schrodinger equation."""
    check_edge_decay(psi.values, "evolve_unitary")
    prop = CrankNicolson(psi.grid, potential, units, dt, accuracy)
    out = prop.evolve(psi, steps)
    if not np.all(np.isfinite(out.values)):
        raise NumericalError("non-finite values after Crank-Nicolson evolution")
    return out


def evolve_parabolic(psi: WaveFunction, potential: Potential, units: SimUnits = DEFAULT_UNITS,
                     dtau: float = 1e-2, steps: int = 1, renormalize: bool = True,
                     accuracy: int | None = None) -> WaveFunction:
    """Irreversible real-amplitude flow ``hbar d psi / d tau = -H psi`` by implicit Euler.

    With ``renormalize`` the iterate is rescaled to unit norm after each step
    and converges to the ground state of ``potential``.  Without it the norm
    decays as ``exp(-E0 tau / hbar)``; growth beyond a factor 1e6 is treated
    as divergence.  ``psi.time`` is left unchanged.
    """
    if np.max(np.abs(psi.values.imag)) >= 1e-12:
        raise DomainError("parabolic evolution needs a real-valued amplitude")
    if not dtau > 0:
        raise DomainError("dtau must be positive")
    h = hamiltonian_matrix(psi.grid, potential, units, accuracy)
    a = (scipy.sparse.identity(psi.grid.n, format="csc") + (dtau / units.hbar) * h).tocsc()
    lu = scipy.sparse.linalg.splu(a)
    values = psi.values.real.copy()
    norm0 = math.sqrt(np.sum(values**2) * psi.grid.dx)
    for i in range(steps):
        values = lu.solve(values)
        norm = math.sqrt(np.sum(values**2) * psi.grid.dx)
        if not np.isfinite(norm):
            raise NumericalError(f"parabolic evolution produced non-finite values at step {i}")
        if renormalize:
            values /= norm
        elif norm > 1e6 * norm0:
            raise NumericalError(f"parabolic evolution diverged at step {i}: norm {norm:.3g}")
    return WaveFunction(psi.grid, values, psi.time)


# ---------------------------------------------------------------------------
# Polar decomposition and velocity fields
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PolarFields:
    """psi = exp(R + iS).  ``s`` is NaN on masked (node) points."""

    grid: SpatialGrid
    r: np.ndarray = field(compare=False)
    s: np.ndarray = field(compare=False)
    node_mask: np.ndarray = field(compare=False)

    def density(self) -> np.ndarray:
        return np.exp(2 * self.r)


def _segments(valid: np.ndarray):
    """(start, stop) pairs of contiguous True runs."""
    padded = np.concatenate(([False], valid, [False])).astype(np.int8)
    edges = np.flatnonzero(np.diff(padded))
    return list(zip(edges[::2], edges[1::2]))


def polar_decompose(psi: WaveFunction, node_threshold: float | None = None) -> PolarFields:
    """Log-amplitude and unwrapped phase.

    ``node_threshold`` is an absolute density; the default is 1e-8 of the
    peak density.  The phase is unwrapped left to right on each unmasked run,
    pinned to ``arg psi`` at the run's first point.
    """
    require_normalized(psi, 1e-6)
    rho = psi.density()
    thr = RELATIVE_NODE_THRESHOLD * rho.max() if node_threshold is None else node_threshold
    mask = rho < thr
    if mask.all():
        raise DomainError("every grid point is below the node threshold")
    r = 0.5 * np.log(rho + LOG_FLOOR)
    s = np.full(psi.grid.n, np.nan)
    phase = np.angle(psi.values)
    for a, b in _segments(~mask):
        s[a:b] = np.unwrap(phase[a:b])
    return PolarFields(psi.grid, r, s, mask)


@dataclass(frozen=True)
class VelocityFields:
    """Current velocity ``v`` and osmotic velocity ``u``; NaN where masked."""

    grid: SpatialGrid
    v: np.ndarray = field(compare=False)
    u: np.ndarray = field(compare=False)
    node_mask: np.ndarray = field(compare=False)

    @property
    def c(self) -> np.ndarray:
        """Forward drift v + u."""
        return self.v + self.u

    @property
    def c_backward(self) -> np.ndarray:
        return self.v - self.u

    def filled(self) -> VelocityFields:
        """Masked points take the value of the nearest unmasked point."""
        valid = ~self.node_mask
        idx = np.flatnonzero(valid)
        if idx.size == 0:
            raise DomainError("no unmasked points to fill from")
        nearest = idx[np.clip(np.searchsorted(idx, np.arange(self.grid.n)), 0, idx.size - 1)]
        left = idx[np.clip(np.searchsorted(idx, np.arange(self.grid.n)) - 1, 0, idx.size - 1)]
        pos = np.arange(self.grid.n)
        nearest = np.where(np.abs(left - pos) <= np.abs(nearest - pos), left, nearest)
        return replace(self, v=self.v[nearest], u=self.u[nearest])


def _dilate(mask: np.ndarray, half: int) -> np.ndarray:
    if half == 0:
        return mask.copy()
    return np.convolve(mask.astype(float), np.ones(2 * half + 1), mode="same") > 0


def drift_fields(polar: PolarFields, units: SimUnits = DEFAULT_UNITS, accuracy: int = 8) -> VelocityFields:
    """v = 2 D0 dS/dx, u = 2 D0 dR/dx by central differences.

    A point is valid only when its whole stencil avoids the node mask, so the
    returned mask is the input mask dilated by the stencil half-width.
    """
    dx = polar.grid.dx
    mask = _dilate(polar.node_mask, accuracy // 2)
    s = np.where(polar.node_mask, 0.0, polar.s)
    r = np.where(polar.node_mask, 0.0, polar.r)
    v = 2 * units.d0 * fd_derivative(s, dx, accuracy=accuracy)
    u = 2 * units.d0 * fd_derivative(r, dx, accuracy=accuracy)
    v[mask] = np.nan
    u[mask] = np.nan
    return VelocityFields(polar.grid, v, u, mask)


def osmotic_from_density(polar: PolarFields, units: SimUnits = DEFAULT_UNITS, accuracy: int = 8) -> np.ndarray:
    """u = D0 (drho/dx) / rho, NaN on the dilated node mask."""
    rho = polar.density()
    u = units.d0 * fd_derivative(rho, polar.grid.dx, accuracy=accuracy) / rho
    u[_dilate(polar.node_mask, accuracy // 2)] = np.nan
    return u


def velocity_fields(psi: WaveFunction, units: SimUnits = DEFAULT_UNITS,
                    node_threshold: float | None = None) -> VelocityFields:
    return drift_fields(polar_decompose(psi, node_threshold), units)


def continuity_residual(psi_prev: WaveFunction, psi: WaveFunction, psi_next: WaveFunction,
                        units: SimUnits = DEFAULT_UNITS) -> float:
    """L2 norm of d rho/dt + d(rho v)/dx at the middle snapshot (central in time)."""
    dt = 0.5 * (psi_next.time - psi_prev.time)
    if not dt > 0:
        raise DomainError("snapshots must be ordered in time")
    drho = (psi_next.density() - psi_prev.density()) / (2 * dt)
    vel = velocity_fields(psi, units)
    flux = np.where(vel.node_mask, 0.0, psi.density() * np.nan_to_num(vel.v))
    res = drho + fd_derivative(flux, psi.grid.dx, accuracy=8)
    return float(np.sqrt(np.sum(res**2) * psi.grid.dx))
