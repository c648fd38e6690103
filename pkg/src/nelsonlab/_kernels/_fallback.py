"""Pure numpy versions of the compiled kernels.

Arithmetic is written in the same order as ``_ckernels.pyx`` so the two
backends agree to the last few ulps (libm vs numpy transcendental functions
are the only source of difference).
"""
import numpy as np

GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_TWO53 = 2.0**-53


def mix64(z):
    z = np.asarray(z, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = (z ^ (z >> np.uint64(30))) * _M1
        z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def particle_bases(key, particles):
    particles = np.asarray(particles, dtype=np.uint64)
    with np.errstate(over="ignore"):
        return mix64(np.uint64(key) + particles * GOLDEN)


def _polar_pair(bases, pair):
    """Box-Muller radius and angle for the step pair ``(2 pair, 2 pair + 1)``."""
    offset = np.uint64((int(pair) * int(GOLDEN)) & 0xFFFFFFFFFFFFFFFF)
    with np.errstate(over="ignore"):
        b = mix64(bases + offset)
        w1 = mix64(b + GOLDEN)
        w2 = mix64(b + GOLDEN + GOLDEN)
    u1 = ((w1 >> np.uint64(11)).astype(np.float64) + 1.0) * _TWO53
    u2 = (w2 >> np.uint64(11)).astype(np.float64) * _TWO53
    return np.sqrt(-2.0 * np.log(u1)), 2.0 * np.pi * u2


def _normals_from_bases(bases, step):
    r, theta = _polar_pair(bases, step >> 1)
    return r * (np.cos(theta) if step % 2 == 0 else np.sin(theta))


def normal_draws(key, particles, step):
    """Standard normals keyed by (key, particle index, step index).

    Even steps use the cosine and odd steps the sine branch of one
    Box-Muller pair, so consecutive steps of a particle are independent.
    """
    return _normals_from_bases(particle_bases(key, particles), int(step))


def em_integrate(x0, c_table, x_lo, dx, sigma, dt, key, steps, stride, step_offset=0, num_threads=1):
    x = np.array(x0, dtype=np.float64)
    c_table = np.ascontiguousarray(c_table, dtype=np.float64)
    n_rows, n_grid = c_table.shape
    x_hi = x_lo + (n_grid - 1) * dx
    n = x.shape[0]
    out = np.empty((n, steps // stride + 1))
    out[:, 0] = x
    exited = np.zeros(n, dtype=np.uint8)
    bases = particle_bases(key, np.arange(n))
    pair = None
    for k in range(steps):
        row = c_table[k if n_rows > 1 else 0]
        s = (x - x_lo) / dx
        j = np.floor(s)
        j = np.clip(j, 0, n_grid - 2).astype(np.intp)
        w = np.clip(s - j, 0.0, 1.0)
        c = row[j] * (1.0 - w) + row[j + 1] * w
        step = step_offset + k
        if pair != step >> 1:
            pair = step >> 1
            r, theta = _polar_pair(bases, pair)
        z = r * (np.cos(theta) if step % 2 == 0 else np.sin(theta))
        x = x + c * dt + sigma * z
        low, high = x < x_lo, x > x_hi
        exited |= low | high
        x[low] = x_lo
        x[high] = x_hi
        if (k + 1) % stride == 0:
            out[:, (k + 1) // stride] = x
    return out, exited


def bin_increments(positions, lag, forward, x_lo, dx, n_bins):
    """Per-bin count, sum and sum of squares of lagged increments.

    Forward: increments ``x[k+lag] - x[k]`` binned by ``x[k]``; backward:
    ``x[k] - x[k-lag]`` binned by ``x[k]``.  Bins are centred on grid points.
    """
    positions = np.asarray(positions, dtype=np.float64)
    if forward:
        at = positions[:, :-lag]
        inc = positions[:, lag:] - at
    else:
        at = positions[:, lag:]
        inc = at - positions[:, :-lag]
    idx = np.floor((at.ravel() - x_lo) / dx + 0.5)
    idx = np.clip(idx, 0, n_bins - 1).astype(np.intp)
    inc = inc.ravel()
    counts = np.bincount(idx, minlength=n_bins).astype(np.int64)
    sums = np.bincount(idx, weights=inc, minlength=n_bins)
    sumsq = np.bincount(idx, weights=inc * inc, minlength=n_bins)
    return counts, sums, sumsq
