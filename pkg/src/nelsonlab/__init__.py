"""Numerical laboratory linking Nelson diffusions and Wigner-Moyal phase space."""
__version__ = "0.1.0"

from ._kernels import BACKEND
from .core import (
    Box,
    DomainError,
    Free,
    Harmonic,
    NumericalError,
    Polynomial,
    SimUnits,
    SpatialGrid,
    Tabulated,
    make_grid,
    momentum_representation,
)
from .schrodinger import (
    Branch,
    CrankNicolson,
    WaveFunction,
    evolve_parabolic,
    evolve_unitary,
    gaussian_packet,
    polar_decompose,
    solve_eigenstates,
    velocity_fields,
)
from . import core, dispersion, hydro, nelson, phase_space, schrodinger  # noqa: E402

__all__ = [
    "BACKEND",
    "Box",
    "Branch",
    "CrankNicolson",
    "DomainError",
    "Free",
    "Harmonic",
    "NumericalError",
    "Polynomial",
    "SimUnits",
    "SpatialGrid",
    "Tabulated",
    "WaveFunction",
    "core",
    "dispersion",
    "evolve_parabolic",
    "evolve_unitary",
    "gaussian_packet",
    "hydro",
    "make_grid",
    "momentum_representation",
    "nelson",
    "phase_space",
    "polar_decompose",
    "schrodinger",
    "solve_eigenstates",
    "velocity_fields",
]
