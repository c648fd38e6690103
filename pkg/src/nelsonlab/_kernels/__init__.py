"""Hot loops: compiled when the extension is built, numpy otherwise.

Set ``NELSONLAB_PURE_PYTHON=1`` to force the numpy fallback.
"""
import os

from . import _fallback

try:
    if os.environ.get("NELSONLAB_PURE_PYTHON") == "1":
        raise ImportError("pure python requested")
    from . import _ckernels
except ImportError:
    _ckernels = None

BACKEND = "cython" if _ckernels is not None else "python"
_impl = _ckernels if _ckernels is not None else _fallback

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_num_threads = 1


def seed_key(seed: int) -> int:
    """64-bit stream key derived from a user seed (splitmix64 finaliser)."""
    z = (int(seed) + _GOLDEN) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def set_num_threads(n: int) -> None:
    """Thread count for the compiled particle loop; results do not depend on it."""
    global _num_threads
    if n < 1:
        raise ValueError("thread count must be >= 1")
    _num_threads = int(n)


def get_num_threads() -> int:
    return _num_threads


def backend(name: str | None = None):
    """Kernel module by name (``"cython"`` or ``"python"``); default is the active one."""
    if name is None:
        return _impl
    if name == "python":
        return _fallback
    if name == "cython":
        if _ckernels is None:
            raise ImportError("compiled kernels are not built")
        return _ckernels
    raise ValueError(f"unknown backend {name!r}")


def em_integrate(x0, c_table, x_lo, dx, sigma, dt, seed, steps, stride=1, step_offset=0):
    return _impl.em_integrate(x0, c_table, float(x_lo), float(dx), float(sigma), float(dt),
                              seed_key(seed), int(steps), int(stride), int(step_offset), _num_threads)


def bin_increments(positions, lag, forward, x_lo, dx, n_bins):
    return _impl.bin_increments(positions, int(lag), bool(forward), float(x_lo), float(dx), int(n_bins))


def normal_draws(seed, particles, step):
    return _impl.normal_draws(seed_key(seed), particles, int(step))
