"""Stochastic side: Nelson diffusions and finite-lag drift estimators.

Particles follow ``dx = c(x, t) dt + sqrt(2 D0) dW`` with ``c = v + u`` taken
from a wavefunction.  Conditional means are realised as averages over
position bins centred on the grid points; bins with fewer than ``min_count``
samples are marked invalid (NaN) rather than zero.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import _kernels
from .core import DEFAULT_UNITS, DomainError, NumericalError, Potential, SimUnits, SpatialGrid
from .schrodinger import CrankNicolson, VelocityFields, WaveFunction, velocity_fields

MIN_COUNT = 50
MAX_EXIT_FRACTION = 0.01
DRIFT_CLAMP_FACTOR = 10.0
INTERIOR_DENSITY = 1e-2


@dataclass(frozen=True)
class Ensemble:
    positions: np.ndarray = field(compare=False)
    time: float = 0.0
    seed: int = 0

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=float)
        if pos.ndim != 1 or pos.size < 1:
            raise DomainError("an ensemble needs a 1-d array of at least one position")
        if not np.all(np.isfinite(pos)):
            raise DomainError("ensemble positions must be finite")
        object.__setattr__(self, "positions", pos)

    @property
    def size(self) -> int:
        return self.positions.size


@dataclass(frozen=True)
class TrajectoryBatch:
    """Recorded particle paths.

    ``positions[:, k]`` is the ensemble at ``t0 + k * dt``; ``dt`` is the
    spacing between recorded columns (integration step times stride).
    """

    positions: np.ndarray = field(compare=False)
    dt: float
    t0: float = 0.0
    seed: int = 0
    exited: int = 0

    @property
    def n_particles(self) -> int:
        return self.positions.shape[0]

    @property
    def n_times(self) -> int:
        return self.positions.shape[1]

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.n_times)

    def at(self, k: int) -> Ensemble:
        return Ensemble(self.positions[:, k], self.t0 + k * self.dt, self.seed)


@dataclass(frozen=True)
class BinnedField:
    """Per-bin estimate with sample counts and standard errors."""

    bin_centers: np.ndarray = field(compare=False)
    values: np.ndarray = field(compare=False)
    counts: np.ndarray = field(compare=False)
    stderr: np.ndarray = field(compare=False)
    min_count: int = MIN_COUNT

    @property
    def valid(self) -> np.ndarray:
        return (self.counts >= self.min_count) & np.isfinite(self.values)

    def select(self, min_count: int | None = None, x_range: tuple[float, float] | None = None) -> np.ndarray:
        """Boolean mask of valid bins, optionally stricter in count or restricted in x."""
        keep = self.valid
        if min_count is not None:
            keep = keep & (self.counts >= min_count)
        if x_range is not None:
            keep = keep & (self.bin_centers >= x_range[0]) & (self.bin_centers <= x_range[1])
        return keep


# ---------------------------------------------------------------------------
# Sampling and stepping
# ---------------------------------------------------------------------------


def sample_density(rho0, grid: SpatialGrid, n_particles: int, seed: int) -> Ensemble:
    """Draw positions from a gridded density by inverse CDF.

    Each grid value is the density over a cell of width ``dx`` centred on its
    grid point, so the CDF is piecewise linear and samples are uniform within
    a cell.
    """
    rho0 = np.asarray(rho0, dtype=float)
    if rho0.shape != (grid.n,):
        raise DomainError(f"density needs {grid.n} samples, got {rho0.shape}")
    if np.any(rho0 < 0):
        raise DomainError("density has negative values")
    mass = rho0.sum() * grid.dx
    if abs(mass - 1.0) > 1e-6:
        raise DomainError(f"density integrates to {mass:.8g}, expected 1")
    if n_particles < 1:
        raise DomainError("need at least one particle")
    cdf = np.concatenate(([0.0], np.cumsum(rho0 * grid.dx)))
    cdf /= cdf[-1]
    edges = grid.x_min - 0.5 * grid.dx + grid.dx * np.arange(grid.n + 1)
    rng = np.random.Generator(np.random.Philox(seed))
    u = rng.random(n_particles)
    j = np.clip(np.searchsorted(cdf, u, side="right") - 1, 0, grid.n - 1)
    # skip zero-mass cells that share a CDF value with their neighbour
    frac = (u - cdf[j]) / np.where(rho0[j] > 0, cdf[j + 1] - cdf[j], 1.0)
    return Ensemble(edges[j] + np.clip(frac, 0.0, 1.0) * grid.dx, 0.0, seed)


def _interior_max(c: np.ndarray, vel: VelocityFields, density) -> float:
    keep = ~vel.node_mask
    if density is not None:
        density = np.asarray(density, dtype=float)
        keep = keep & (density >= INTERIOR_DENSITY * density.max())
    if not keep.any():
        keep = ~vel.node_mask
    return float(np.max(np.abs(c[keep])))


def drift_row(vel: VelocityFields, density=None, sign: int = 1) -> np.ndarray:
    """Forward (``sign=1``) or backward drift on the grid, ready for stepping.

    Masked points take the nearest unmasked value and the result is clamped
    to ``10 * max |c|`` over the well-populated unmasked region.
    """
    filled = vel.filled()
    c = filled.v + sign * filled.u
    c_max = DRIFT_CLAMP_FACTOR * _interior_max(c, vel, density)
    if c_max > 0:
        c = np.clip(c, -c_max, c_max)
    return c


def _check_exits(exited: np.ndarray) -> int:
    count = int(np.count_nonzero(exited))
    if count > MAX_EXIT_FRACTION * exited.size:
        raise NumericalError(f"{count} of {exited.size} particles left the grid "
                             f"(more than {MAX_EXIT_FRACTION:.0%}); widen the domain")
    return count


def _check_step(c_table: np.ndarray, dx: float, dt: float) -> None:
    slope = np.max(np.abs(np.diff(c_table, axis=1))) / dx
    if dt * slope >= 0.1:
        warnings.warn(f"dt * max|dc/dx| = {dt * slope:.3g} >= 0.1; drift is under-resolved in time",
                      RuntimeWarning, stacklevel=3)


def integrate(ensemble: Ensemble, c_table, grid: SpatialGrid, units: SimUnits, dt: float,
              steps: int, stride: int = 1, step_offset: int = 0) -> TrajectoryBatch:
    """Euler-Maruyama with a tabulated drift.

    ``c_table`` has one row (static drift) or one row per step.  Noise for
    particle ``i`` at step ``k`` depends only on ``(seed, i, step_offset + k)``.
    """
    if not dt > 0 or steps < 1 or stride < 1:
        raise DomainError("need dt > 0, steps >= 1 and stride >= 1")
    c_table = np.atleast_2d(np.asarray(c_table, dtype=float))
    if c_table.shape[1] != grid.n or c_table.shape[0] not in (1, steps):
        raise DomainError(f"drift table of shape {c_table.shape} does not fit {steps} steps on {grid.n} points")
    if not np.all(np.isfinite(c_table)):
        raise DomainError("drift table has non-finite values")
    _check_step(c_table, grid.dx, dt)
    sigma = math.sqrt(2.0 * units.d0 * dt)
    out, exited = _kernels.em_integrate(ensemble.positions, c_table, grid.x_min, grid.dx, sigma, dt,
                                        ensemble.seed, steps, stride, step_offset)
    return TrajectoryBatch(out, dt * stride, ensemble.time, ensemble.seed, _check_exits(exited))


def step_forward_sde(ensemble: Ensemble, drift: VelocityFields | Sequence[VelocityFields],
                     units: SimUnits = DEFAULT_UNITS, dt: float = 1e-2, steps: int = 1,
                     stride: int = 1, density=None) -> TrajectoryBatch:
    """Advance an ensemble along the forward drift ``c = v + u``.

    ``drift`` is either one field (stationary process) or one field per step.
    ``density`` (optional) restricts the region used for the drift clamp.
    """
    fields = [drift] if isinstance(drift, VelocityFields) else list(drift)
    if not fields:
        raise DomainError("no drift fields given")
    grid = fields[0].grid
    table = np.stack([drift_row(f, density) for f in fields])
    return integrate(ensemble, table, grid, units, dt, steps, stride)


# ---------------------------------------------------------------------------
# Estimators
# ---------------------------------------------------------------------------


def bin_centers(grid: SpatialGrid) -> np.ndarray:
    return grid.x


def _binned(batch: TrajectoryBatch, grid: SpatialGrid, lag: int, forward: bool):
    if lag < 1:
        raise DomainError("lag must be at least 1")
    if batch.n_times < lag + 1:
        raise DomainError(f"batch has {batch.n_times} columns, lag {lag} needs {lag + 1}")
    return _kernels.bin_increments(batch.positions, lag, forward, grid.x_min, grid.dx, grid.n)


def _drift_field(counts, sums, sumsq, tau: float, grid: SpatialGrid, min_count: int) -> BinnedField:
    counts = np.asarray(counts)
    valid = counts >= min_count
    if not valid.any():
        raise NumericalError(f"no bin has {min_count} samples; increase the ensemble or the run length")
    n = np.where(valid, counts, 1)
    mean = sums / n
    var = np.maximum(sumsq / n - mean**2, 0.0)
    values = np.where(valid, mean / tau, np.nan)
    stderr = np.where(valid, np.sqrt(var / n) / tau, np.nan)
    return BinnedField(bin_centers(grid), values, counts, stderr, min_count)


def estimate_forward_drift(batch: TrajectoryBatch, grid: SpatialGrid, lag: int = 1,
                           min_count: int = MIN_COUNT) -> BinnedField:
    """Mean of ``(x[k+lag] - x[k]) / (lag dt)`` binned by ``x[k]``, pooled over k."""
    counts, sums, sumsq = _binned(batch, grid, lag, True)
    return _drift_field(counts, sums, sumsq, lag * batch.dt, grid, min_count)


def estimate_backward_drift(batch: TrajectoryBatch, grid: SpatialGrid, lag: int = 1,
                            min_count: int = MIN_COUNT) -> BinnedField:
    """Mean of ``(x[k] - x[k-lag]) / (lag dt)`` binned by ``x[k]``, pooled over k."""
    counts, sums, sumsq = _binned(batch, grid, lag, False)
    return _drift_field(counts, sums, sumsq, lag * batch.dt, grid, min_count)


def estimate_diffusion(batch: TrajectoryBatch, grid: SpatialGrid, lag: int = 1) -> float:
    """Pooled conditional second moment of lag displacements over ``2 lag dt``.

    The binned mean displacement is subtracted in each bin, which removes
    the drift contribution to first order.
    """
    counts, sums, sumsq = _binned(batch, grid, lag, True)
    used = counts > 1
    ss = np.sum(sumsq[used] - sums[used] ** 2 / counts[used])
    return float(ss / (2.0 * lag * batch.dt * counts[used].sum()))


def decompose_velocities(c: BinnedField, c_star: BinnedField) -> tuple[BinnedField, BinnedField]:
    """Current velocity ``(c + c*) / 2`` and osmotic velocity ``(c - c*) / 2``.

    Forward and backward increments at a point are conditionally
    independent for a Markov process, so their errors add in quadrature.
    """
    if c.bin_centers.shape != c_star.bin_centers.shape or not np.allclose(c.bin_centers, c_star.bin_centers):
        raise DomainError("forward and backward estimates use different bins")
    counts = np.minimum(c.counts, c_star.counts)
    ok = c.valid & c_star.valid
    err = np.where(ok, 0.5 * np.hypot(c.stderr, c_star.stderr), np.nan)
    v = np.where(ok, 0.5 * (c.values + c_star.values), np.nan)
    u = np.where(ok, 0.5 * (c.values - c_star.values), np.nan)
    min_count = max(c.min_count, c_star.min_count)
    return (BinnedField(c.bin_centers, v, counts, err, min_count),
            BinnedField(c.bin_centers, u, counts, err.copy(), min_count))


@dataclass(frozen=True)
class VelocityEstimate:
    c: BinnedField
    c_star: BinnedField
    v: BinnedField
    u: BinnedField


def estimate_velocities(batch: TrajectoryBatch, grid: SpatialGrid, lag: int = 1, groups: int = 32,
                        min_count: int = MIN_COUNT) -> VelocityEstimate:
    """Forward and backward drifts with their half-sum and half-difference.

    Standard errors come from batch means over ``groups`` disjoint particle
    groups (linearised ratio estimator).  Unlike the per-sample errors of
    `estimate_forward_drift`, they include the correlation between forward
    and backward increments that share a trajectory.
    """
    if groups < 2 or groups > batch.n_particles:
        raise DomainError("groups must be between 2 and the number of particles")
    tau = lag * batch.dt
    c = estimate_forward_drift(batch, grid, lag, min_count)
    cs = estimate_backward_drift(batch, grid, lag, min_count)
    cn = np.where(c.counts > 0, c.counts, 1)
    sn = np.where(cs.counts > 0, cs.counts, 1)
    c_mean, s_mean = np.nan_to_num(c.values) * tau, np.nan_to_num(cs.values) * tau
    acc = {"c": 0.0, "s": 0.0, "u": 0.0, "v": 0.0}
    for part in np.array_split(np.arange(batch.n_particles), groups):
        sub = TrajectoryBatch(batch.positions[part[0]:part[-1] + 1], batch.dt)
        fc, fs, _ = _binned(sub, grid, lag, True)
        bc, bs, _ = _binned(sub, grid, lag, False)
        rc = (fs - c_mean * fc) / cn / tau
        rs = (bs - s_mean * bc) / sn / tau
        acc["c"] = acc["c"] + rc**2
        acc["s"] = acc["s"] + rs**2
        acc["v"] = acc["v"] + (0.5 * (rc + rs)) ** 2
        acc["u"] = acc["u"] + (0.5 * (rc - rs)) ** 2
    scale = groups / (groups - 1)
    err = {k: np.sqrt(scale * a) for k, a in acc.items()}
    c = BinnedField(c.bin_centers, c.values, c.counts, np.where(c.valid, err["c"], np.nan), min_count)
    cs = BinnedField(cs.bin_centers, cs.values, cs.counts, np.where(cs.valid, err["s"], np.nan), min_count)
    v, u = decompose_velocities(c, cs)
    ok = c.valid & cs.valid
    v = BinnedField(v.bin_centers, v.values, v.counts, np.where(ok, err["v"], np.nan), min_count)
    u = BinnedField(u.bin_centers, u.values, u.counts, np.where(ok, err["u"], np.nan), min_count)
    return VelocityEstimate(c, cs, v, u)


def empirical_density(ensemble: Ensemble | np.ndarray, grid: SpatialGrid) -> np.ndarray:
    """Histogram on cells centred at the grid points, normalised to unit mass.

    Positions beyond the grid are counted in the edge cells.
    """
    pos = ensemble.positions if isinstance(ensemble, Ensemble) else np.asarray(ensemble, dtype=float)
    idx = np.clip(np.floor((pos - grid.x_min) / grid.dx + 0.5), 0, grid.n - 1).astype(np.intp)
    return np.bincount(idx, minlength=grid.n) / (pos.size * grid.dx)


def l1_distance(a, b, dx: float) -> float:
    return float(np.sum(np.abs(np.asarray(a) - np.asarray(b))) * dx)


def diffusive_displacement_variance(batch: TrajectoryBatch, grid: SpatialGrid, delta_t: float) -> dict:
    """Displacement variance accumulated over an interval ``delta_t``.

    ``diffusive`` sums the conditional (drift-removed) variances of the
    single-column increments over ``delta_t``, i.e. the quadratic variation
    of the noise.  ``conditional`` is the raw variance of the ``delta_t``
    displacement about its binned conditional mean; for a confining drift it
    saturates once ``delta_t`` exceeds the relaxation time.
    """
    lag = int(round(delta_t / batch.dt))
    if lag < 1 or abs(lag * batch.dt - delta_t) > 1e-9 * max(delta_t, 1.0):
        raise DomainError(f"delta_t={delta_t} is not a multiple of the column spacing {batch.dt}")
    diffusive = 2.0 * estimate_diffusion(batch, grid, 1) * delta_t
    counts, sums, sumsq = _binned(batch, grid, lag, True)
    used = counts > 1
    conditional = float(np.sum(sumsq[used] - sums[used] ** 2 / counts[used]) / counts[used].sum())
    return {"delta_t": float(delta_t), "lag": lag, "diffusive": diffusive, "conditional": conditional}


# ---------------------------------------------------------------------------
# Density tracking against the Schrodinger solution
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DensityTrack:
    times: np.ndarray = field(compare=False)
    l1: np.ndarray = field(compare=False)
    batch: TrajectoryBatch = field(compare=False)
    final_psi: WaveFunction = field(compare=False)

    @property
    def max_l1(self) -> float:
        return float(np.max(self.l1))


def drift_schedule(psi0: WaveFunction, potential: Potential, units: SimUnits, dt: float,
                   steps: int) -> tuple[np.ndarray, WaveFunction]:
    """Forward drift at every step start from Crank-Nicolson snapshots."""
    prop = CrankNicolson(psi0.grid, potential, units, dt)
    table = np.empty((steps, psi0.grid.n))
    psi = psi0
    for k in range(steps):
        table[k] = drift_row(velocity_fields(psi, units), psi.density())
        psi = prop.evolve(psi, 1)
    return table, psi


def track_density(psi0: WaveFunction, potential: Potential, units: SimUnits = DEFAULT_UNITS,
                  n_particles: int = 100_000, dt: float = 5e-3, steps: int = 1000,
                  seed: int = 0, record_every: int = 10) -> DensityTrack:
    """Run the time-dependent Nelson process for ``psi0`` and compare with ``|psi(t)|^2``.

    Returns the L1 distance between the histogram and the quantum density at
    every recorded column; ``final_psi`` is the wavefunction at the last one.
    """
    grid = psi0.grid
    table, _ = drift_schedule(psi0, potential, units, dt, steps)
    ens = sample_density(psi0.density() / (psi0.norm() ** 2), grid, n_particles, seed)
    batch = integrate(ens, table, grid, units, dt, steps, record_every)
    prop = CrankNicolson(grid, potential, units, dt)
    psi = psi0
    l1 = np.empty(batch.n_times)
    for k in range(batch.n_times):
        if k:
            psi = prop.evolve(psi, record_every)
        l1[k] = l1_distance(empirical_density(batch.positions[:, k], grid), psi.density(), grid.dx)
    return DensityTrack(batch.times, l1, batch, psi)
