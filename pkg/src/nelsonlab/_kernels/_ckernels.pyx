# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled Euler-Maruyama stepping and increment binning.

Mirrors ``_fallback.py`` operation for operation.  Particles are independent
(noise is a hash of key, particle index and step index) so the parallel loop
gives the same bits for any thread count.  Particles are stepped in small
blocks so independent update chains overlap in the pipeline.
"""
import numpy as np
cimport numpy as cnp
from cython.parallel cimport prange
from libc.math cimport log, sqrt, cos, sin, floor
from libc.stdint cimport uint64_t, int64_t

cnp.import_array()

cdef uint64_t GOLDEN = 0x9E3779B97F4A7C15ULL
cdef double TWO53 = 1.0 / 9007199254740992.0
cdef double TWO_PI = 6.283185307179586


cdef inline uint64_t mix64(uint64_t z) noexcept nogil:
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL
    return z ^ (z >> 31)


cdef inline void polar_pair(uint64_t base, uint64_t pair, double* r, double* theta) noexcept nogil:
    cdef uint64_t b = mix64(base + pair * GOLDEN)
    cdef uint64_t w1 = mix64(b + GOLDEN)
    cdef uint64_t w2 = mix64(b + GOLDEN + GOLDEN)
    cdef double u1 = (<double>(w1 >> 11) + 1.0) * TWO53
    cdef double u2 = <double>(w2 >> 11) * TWO53
    r[0] = sqrt(-2.0 * log(u1))
    theta[0] = TWO_PI * u2


cdef inline double normal_from_base(uint64_t base, uint64_t step) noexcept nogil:
    cdef double r, theta
    polar_pair(base, step >> 1, &r, &theta)
    if step & 1:
        return r * sin(theta)
    return r * cos(theta)


def normal_draws(uint64_t key, particles, uint64_t step):
    cdef cnp.uint64_t[::1] p = np.ascontiguousarray(particles, dtype=np.uint64)
    cdef Py_ssize_t i, n = p.shape[0]
    out = np.empty(n)
    cdef double[::1] o = out
    for i in range(n):
        o[i] = normal_from_base(mix64(key + p[i] * GOLDEN), step)
    return out


DEF BLOCK = 32


cdef void _em_block(double[::1] xs, double[:, ::1] ct, double[:, ::1] o, cnp.uint8_t[::1] ex,
                    Py_ssize_t i0, Py_ssize_t i1, double x_lo, double x_hi, double dx,
                    double sigma, double dt, uint64_t key, Py_ssize_t steps, Py_ssize_t stride,
                    uint64_t step_offset) noexcept nogil:
    cdef double x[BLOCK]
    cdef double r[BLOCK]
    cdef double th[BLOCK]
    cdef uint64_t base[BLOCK]
    cdef Py_ssize_t m = i1 - i0, a, k, j, row, col = 0, until = stride
    cdef Py_ssize_t n_rows = ct.shape[0], n_grid = ct.shape[1]
    cdef double s, w, c, z
    cdef uint64_t step, pair
    for a in range(m):
        x[a] = xs[i0 + a]
        o[i0 + a, 0] = x[a]
        base[a] = mix64(key + <uint64_t>(i0 + a) * GOLDEN)
    for k in range(steps):
        row = k if n_rows > 1 else 0
        step = step_offset + k
        if k == 0 or (step & 1) == 0:
            pair = step >> 1
            for a in range(m):
                polar_pair(base[a], pair, &r[a], &th[a])
        for a in range(m):
            s = (x[a] - x_lo) / dx
            j = <Py_ssize_t>floor(s)
            if j < 0:
                j = 0
            elif j > n_grid - 2:
                j = n_grid - 2
            w = s - j
            if w < 0.0:
                w = 0.0
            elif w > 1.0:
                w = 1.0
            c = ct[row, j] * (1.0 - w) + ct[row, j + 1] * w
            if step & 1:
                z = r[a] * sin(th[a])
            else:
                z = r[a] * cos(th[a])
            x[a] = x[a] + c * dt + sigma * z
            if x[a] < x_lo:
                x[a] = x_lo
                ex[i0 + a] = 1
            elif x[a] > x_hi:
                x[a] = x_hi
                ex[i0 + a] = 1
        if k + 1 == until:
            col += 1
            until += stride
            for a in range(m):
                o[i0 + a, col] = x[a]


def em_integrate(x0, c_table, double x_lo, double dx, double sigma, double dt, uint64_t key,
                 Py_ssize_t steps, Py_ssize_t stride, uint64_t step_offset=0, int num_threads=1):
    cdef double[::1] xs = np.ascontiguousarray(x0, dtype=np.float64)
    cdef double[:, ::1] ct = np.ascontiguousarray(c_table, dtype=np.float64)
    cdef Py_ssize_t n = xs.shape[0]
    cdef double x_hi = x_lo + (ct.shape[1] - 1) * dx
    out = np.empty((n, steps // stride + 1))
    exited = np.zeros(n, dtype=np.uint8)
    cdef double[:, ::1] o = out
    cdef cnp.uint8_t[::1] ex = exited
    cdef Py_ssize_t b, n_blocks = (n + BLOCK - 1) // BLOCK
    for b in prange(n_blocks, nogil=True, num_threads=num_threads, schedule="static"):
        _em_block(xs, ct, o, ex, b * BLOCK, min(n, (b + 1) * BLOCK), x_lo, x_hi, dx,
                  sigma, dt, key, steps, stride, step_offset)
    return out, exited


def bin_increments(positions, Py_ssize_t lag, bint forward, double x_lo, double dx, Py_ssize_t n_bins):
    cdef double[:, ::1] pos = np.ascontiguousarray(positions, dtype=np.float64)
    cdef Py_ssize_t n = pos.shape[0], m = pos.shape[1]
    counts = np.zeros(n_bins, dtype=np.int64)
    sums = np.zeros(n_bins)
    sumsq = np.zeros(n_bins)
    cdef int64_t[::1] cn = counts
    cdef double[::1] s1 = sums
    cdef double[::1] s2 = sumsq
    cdef Py_ssize_t i, k, b
    cdef double at, inc, f
    with nogil:
        for i in range(n):
            for k in range(m - lag):
                if forward:
                    at = pos[i, k]
                    inc = pos[i, k + lag] - at
                else:
                    at = pos[i, k + lag]
                    inc = at - pos[i, k]
                f = floor((at - x_lo) / dx + 0.5)
                if f < 0:
                    b = 0
                elif f > n_bins - 1:
                    b = n_bins - 1
                else:
                    b = <Py_ssize_t>f
                cn[b] += 1
                s1[b] += inc
                s2[b] += inc * inc
    return counts, sums, sumsq
