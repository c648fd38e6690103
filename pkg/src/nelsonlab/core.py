"""Grids, units, potentials and transform conventions shared by the package.

Every other module works on a uniform 1D :class:`SpatialGrid` with samples
``x_j = x_min + j * dx``.  Fields are plain numpy arrays of length ``grid.n``
held next to the grid they live on.

Fourier convention (used everywhere a momentum variable appears)::

    psi_p(p) = (2 pi hbar)^(-1/2) * integral psi(x) exp(-i p x / hbar) dx
"""
from __future__ import annotations

import functools
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

EDGE_DENSITY_WARN = 1e-8


class NelsonLabError(Exception):
    """Base class for errors raised by this package."""


class DomainError(NelsonLabError, ValueError):
    """Invalid parameters: bad grid sizes, inverted bounds, wrong shapes."""


class NumericalError(NelsonLabError, RuntimeError):
    """A numerical procedure failed or produced a non-finite result."""


class EdgeDensityWarning(UserWarning):
    """Probability density at the grid edge is not negligible."""


@dataclass(frozen=True)
class SimUnits:
    """Planck constant and particle mass.  ``d0`` is always derived."""

    hbar: float = 1.0
    mass: float = 1.0

    def __post_init__(self):
        if not (self.hbar > 0 and self.mass > 0):
            raise DomainError(f"hbar and mass must be positive, got {self.hbar}, {self.mass}")

    @property
    def d0(self) -> float:
        return self.hbar / (2.0 * self.mass)


DEFAULT_UNITS = SimUnits()


@dataclass(frozen=True)
class SpatialGrid:
    x_min: float
    x_max: float
    n: int

    def __post_init__(self):
        if not (self.x_max > self.x_min):
            raise DomainError(f"x_max must exceed x_min, got [{self.x_min}, {self.x_max}]")
        if self.n < 8 or self.n & (self.n - 1):
            raise DomainError(f"n must be a power of two >= 8, got {self.n}")

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / self.n

    @property
    def x(self) -> np.ndarray:
        return self.x_min + self.dx * np.arange(self.n)

    @property
    def length(self) -> float:
        return self.x_max - self.x_min

    def p(self, units: SimUnits = DEFAULT_UNITS) -> np.ndarray:
        """Conjugate momentum grid in ascending order."""
        return np.fft.fftshift(np.fft.fftfreq(self.n, self.dx)) * 2 * np.pi * units.hbar

    def dp(self, units: SimUnits = DEFAULT_UNITS) -> float:
        return 2 * np.pi * units.hbar / (self.n * self.dx)

    def index_of(self, x0: float) -> int:
        return int(round((x0 - self.x_min) / self.dx))


def make_grid(x_min: float, x_max: float, n: int) -> SpatialGrid:
    """Build a grid; raises :class:`DomainError` on bad bounds or sizes."""
    if int(n) != n:
        raise DomainError(f"n must be an integer, got {n}")
    return SpatialGrid(float(x_min), float(x_max), int(n))


# ---------------------------------------------------------------------------
# Potentials
# ---------------------------------------------------------------------------


class Potential:
    """Base class for the tagged potential variants.

    ``smooth`` tells the discretisation layer whether high-order stencils are
    appropriate; discontinuous potentials fall back to second order.
    """

    kind = "abstract"
    smooth = True

    def __call__(self, x, units: SimUnits = DEFAULT_UNITS) -> np.ndarray:
        raise NotImplementedError

    def gradient(self, x, units: SimUnits = DEFAULT_UNITS) -> np.ndarray:
        raise NotImplementedError

    def to_dict(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class Free(Potential):
    kind = "free"

    def __call__(self, x, units=DEFAULT_UNITS):
        return np.zeros_like(np.asarray(x, dtype=float))

    def gradient(self, x, units=DEFAULT_UNITS):
        return np.zeros_like(np.asarray(x, dtype=float))

    def to_dict(self):
        return {"kind": self.kind}


@dataclass(frozen=True)
class Harmonic(Potential):
    """V = m omega^2 (x - center)^2 / 2."""

    omega: float = 1.0
    center: float = 0.0
    kind = "harmonic"

    def __post_init__(self):
        if not self.omega > 0:
            raise DomainError("omega must be positive")

    @property
    def period(self) -> float:
        return 2 * np.pi / self.omega

    def __call__(self, x, units=DEFAULT_UNITS):
        x = np.asarray(x, dtype=float)
        return 0.5 * units.mass * self.omega**2 * (x - self.center) ** 2

    def gradient(self, x, units=DEFAULT_UNITS):
        x = np.asarray(x, dtype=float)
        return units.mass * self.omega**2 * (x - self.center)

    def to_dict(self):
        return {"kind": self.kind, "omega": self.omega, "center": self.center}


@dataclass(frozen=True)
class Box(Potential):
    """Flat well of the given width centred at ``center``; walls of ``height``.

    Points with ``|x - center| >= width / 2`` sit on the wall, so a width that
    is a multiple of ``2 dx`` puts the nodes of the eigenfunctions exactly on
    grid points.
    """

    width: float = 4.0
    height: float = 1e8
    center: float = 0.0
    kind = "box"
    smooth = False

    def __post_init__(self):
        if not (self.width > 0 and self.height > 0):
            raise DomainError("box width and height must be positive")

    def __call__(self, x, units=DEFAULT_UNITS):
        x = np.asarray(x, dtype=float)
        return np.where(np.abs(x - self.center) >= 0.5 * self.width, self.height, 0.0)

    def gradient(self, x, units=DEFAULT_UNITS):
        return np.zeros_like(np.asarray(x, dtype=float))

    def to_dict(self):
        return {"kind": self.kind, "width": self.width, "height": self.height, "center": self.center}


@dataclass(frozen=True)
class Polynomial(Potential):
    """V = sum_k coefficients[k] * x**k (ascending powers)."""

    coefficients: tuple = (0.0, 0.0, 0.5)
    kind = "polynomial"

    def __post_init__(self):
        object.__setattr__(self, "coefficients", tuple(float(c) for c in self.coefficients))
        if not self.coefficients:
            raise DomainError("polynomial needs at least one coefficient")

    def __call__(self, x, units=DEFAULT_UNITS):
        return np.polynomial.polynomial.polyval(np.asarray(x, dtype=float), self.coefficients)

    def gradient(self, x, units=DEFAULT_UNITS):
        d = np.polynomial.polynomial.polyder(self.coefficients)
        return np.polynomial.polynomial.polyval(np.asarray(x, dtype=float), d)

    def to_dict(self):
        return {"kind": self.kind, "coefficients": list(self.coefficients)}


@dataclass(frozen=True)
class Tabulated(Potential):
    """Samples on a specific grid; linear interpolation elsewhere."""

    grid: SpatialGrid
    samples: np.ndarray = field(compare=False)
    smooth: bool = True
    kind = "tabulated"

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=float)
        if samples.shape != (self.grid.n,):
            raise DomainError(f"tabulated potential needs {self.grid.n} samples, got {samples.shape}")
        object.__setattr__(self, "samples", samples)

    def __call__(self, x, units=DEFAULT_UNITS):
        x = np.asarray(x, dtype=float)
        if x.shape == self.samples.shape and np.allclose(x, self.grid.x):
            return self.samples.copy()
        return np.interp(x, self.grid.x, self.samples)

    def gradient(self, x, units=DEFAULT_UNITS):
        g = fd_derivative(self.samples, self.grid.dx, accuracy=4)
        return np.interp(np.asarray(x, dtype=float), self.grid.x, g)

    def to_dict(self):
        return {"kind": self.kind, "samples": self.samples.tolist(), "smooth": self.smooth}


def potential_from_dict(spec: dict, grid: SpatialGrid | None = None) -> Potential:
    spec = dict(spec)
    kind = spec.pop("kind", None)
    if kind == "free":
        cls = Free
    elif kind == "harmonic":
        cls = Harmonic
    elif kind == "box":
        cls = Box
    elif kind in ("polynomial", "quartic"):
        if kind == "quartic":
            spec = {"coefficients": (0, 0, 0, 0, spec.pop("strength", 1.0)), **spec}
        cls = Polynomial
    elif kind == "tabulated":
        if grid is None:
            raise DomainError("tabulated potential needs a grid")
        return Tabulated(grid, np.asarray(spec.pop("samples")), **spec)
    else:
        raise DomainError(f"unknown potential kind {kind!r}")
    try:
        return cls(**spec)
    except TypeError as exc:
        raise DomainError(f"bad parameters for {kind} potential: {exc}") from None


def stencil_accuracy(potential: Potential, accuracy: int | None) -> int:
    """Default stencil order: 4 for smooth potentials, 2 otherwise."""
    if accuracy is None:
        return 4 if potential.smooth else 2
    if accuracy not in (2, 4, 6, 8):
        raise DomainError(f"stencil accuracy must be one of 2, 4, 6, 8; got {accuracy}")
    return accuracy


# ---------------------------------------------------------------------------
# Derivatives
# ---------------------------------------------------------------------------


def fd_weights(offsets, deriv: int) -> np.ndarray:
    """Finite-difference weights at 0 for samples at integer ``offsets`` (Fornberg)."""
    z = np.asarray(offsets, dtype=float)
    n = len(z)
    c = np.zeros((n, deriv + 1))
    c1, c4 = 1.0, z[0]
    c[0, 0] = 1.0
    for i in range(1, n):
        mn = min(i, deriv)
        c2, c5, c4 = 1.0, c4, z[i]
        for j in range(i):
            c3 = z[i] - z[j]
            c2 *= c3
            if j == i - 1:
                for k in range(mn, 0, -1):
                    c[i, k] = c1 * (k * c[i - 1, k - 1] - c5 * c[i - 1, k]) / c2
                c[i, 0] = -c1 * c5 * c[i - 1, 0] / c2
            for k in range(mn, 0, -1):
                c[j, k] = (c4 * c[j, k] - k * c[j, k - 1]) / c3
            c[j, 0] = c4 * c[j, 0] / c3
        c1 = c2
    return c[:, deriv]


@functools.lru_cache(maxsize=64)
def central_weights(deriv: int, accuracy: int) -> np.ndarray:
    half = accuracy // 2 if deriv <= 2 else (accuracy + deriv - 1) // 2
    w = fd_weights(np.arange(-half, half + 1), deriv)
    w.flags.writeable = False
    return w


@functools.lru_cache(maxsize=64)
def _edge_stencils(n: int, deriv: int, accuracy: int, half: int):
    width = 2 * half + 1
    out = []
    for i in list(range(half)) + list(range(n - half, n)):
        # one extra point keeps one-sided stencils at the interior's order
        idx = np.arange(width + 1) if i < half else np.arange(n - width - 1, n)
        out.append((i, idx, fd_weights(idx - i, deriv)))
    return tuple(out)


def fd_derivative(f, dx: float, deriv: int = 1, accuracy: int = 4) -> np.ndarray:
    """Central differences in the interior, one-sided stencils of equal width at the ends.

    Exact for polynomials of degree ``accuracy + deriv - 1`` everywhere,
    including the boundary points.
    """
    f = np.asarray(f)
    n = f.shape[-1]
    w = central_weights(deriv, accuracy)
    half = len(w) // 2
    if n < 2 * half + 2:
        raise DomainError(f"need at least {2 * half + 2} samples for this stencil")
    out = np.empty(f.shape, dtype=np.result_type(f, float))
    acc = np.zeros(f.shape[:-1] + (n - 2 * half,), dtype=out.dtype)
    for k, wk in enumerate(w):
        acc += wk * f[..., k : n - 2 * half + k]
    out[..., half : n - half] = acc
    for i, idx, wi in _edge_stencils(n, deriv, accuracy, half):
        out[..., i] = f[..., idx] @ wi
    return out / dx**deriv


def spectral_derivative(f, dx: float, order: int = 1, axis: int = -1) -> np.ndarray:
    """FFT derivative on a periodic grid; Nyquist mode dropped for odd orders."""
    f = np.asarray(f)
    n = f.shape[axis]
    k = 2 * np.pi * np.fft.fftfreq(n, dx)
    mult = (1j * k) ** order
    if order % 2 and n % 2 == 0:
        mult[n // 2] = 0.0
    shape = [1] * f.ndim
    shape[axis] = n
    out = np.fft.ifft(np.fft.fft(f, axis=axis) * mult.reshape(shape), axis=axis)
    return out.real if np.isrealobj(f) else out


# ---------------------------------------------------------------------------
# Fourier conventions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MomentumAmplitude:
    """psi(p) sampled on the ascending conjugate grid of ``grid``."""

    grid: SpatialGrid
    units: SimUnits
    values: np.ndarray = field(compare=False)

    @property
    def p(self) -> np.ndarray:
        return self.grid.p(self.units)

    @property
    def dp(self) -> float:
        return self.grid.dp(self.units)

    def density(self) -> np.ndarray:
        return np.abs(self.values) ** 2


def momentum_representation(values, grid: SpatialGrid, units: SimUnits = DEFAULT_UNITS) -> MomentumAmplitude:
    """Discrete version of the unitary transform in the module docstring.

    Parseval holds exactly: ``sum |psi|^2 dx == sum |psi_p|^2 dp``.
    """
    values = np.asarray(values, dtype=complex)
    if values.shape != (grid.n,):
        raise DomainError(f"expected {grid.n} samples, got {values.shape}")
    check_edge_decay(values, "momentum_representation")
    p = grid.p(units)
    raw = np.fft.fftshift(np.fft.fft(values))
    phase = np.exp(-1j * p * grid.x_min / units.hbar)
    out = raw * phase * grid.dx / math.sqrt(2 * np.pi * units.hbar)
    return MomentumAmplitude(grid, units, out)


def position_representation(mom: MomentumAmplitude) -> np.ndarray:
    """Inverse of :func:`momentum_representation`."""
    grid, units = mom.grid, mom.units
    p = grid.p(units)
    raw = mom.values * np.exp(1j * p * grid.x_min / units.hbar) * math.sqrt(2 * np.pi * units.hbar) / grid.dx
    return np.fft.ifft(np.fft.ifftshift(raw))


def check_edge_decay(values, where: str = "", threshold: float = EDGE_DENSITY_WARN) -> bool:
    """Warn when |psi|^2 at either grid edge exceeds ``threshold``."""
    values = np.asarray(values)
    edge = max(abs(values[0]) ** 2, abs(values[-1]) ** 2)
    if edge > threshold:
        warnings.warn(
            f"{where}: edge density {edge:.3g} exceeds {threshold:g}; widen the grid",
            EdgeDensityWarning,
            stacklevel=3,
        )
        return False
    return True


def l2_norm(values, dx: float) -> float:
    return float(np.sqrt(np.sum(np.abs(values) ** 2) * dx))
