"""Scenario configuration: schema, JSON round trip and validation.

A config is a single JSON document.  Every section maps onto a dataclass and
unknown keys are rejected at any depth, so a typo never silently falls back
to a default.
"""
from __future__ import annotations

import copy
import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .core import DomainError, make_grid, potential_from_dict

SCENARIOS = ("oscillator-stationary", "oscillator-excited", "free-packet", "coherent-slosh", "custom")
STATE_KINDS = ("eigenstate", "gaussian")


class ConfigError(ValueError):
    """Invalid or inconsistent scenario configuration."""


@dataclass
class GridSpec:
    x_min: float = -8.0
    x_max: float = 8.0
    n: int = 256


@dataclass
class UnitsSpec:
    hbar: float = 1.0
    mass: float = 1.0


@dataclass
class StateSpec:
    """Initial wavefunction: an eigenstate of the potential or a Gaussian packet."""

    kind: str = "eigenstate"
    level: int = 0
    x0: float = 0.0
    sigma: float = 1.0
    k0: float = 0.0


@dataclass
class EnsembleSpec:
    n_particles: int = 100_000
    dt: float = 0.01
    steps: int = 400
    seed: int = 0
    lag: int = 1
    groups: int = 32
    record_every: int = 1
    export_particles: int = 10_000


@dataclass
class EvolutionSpec:
    """Time-dependent runs: Schrodinger step, tracking horizon and hydro horizon."""

    dt: float = 0.005
    duration: float = 0.0
    hydro_t_final: float = 0.5
    hydro_accuracy: int = 8


@dataclass
class ParabolicSpec:
    sigma0: float = 1.4142135623730951
    dtau: float = 0.01
    tau_total: float = 20.0


@dataclass
class AnalysisSpec:
    spectrum: bool = True
    nelson: bool = True
    wigner: bool = True
    dispersion: bool = True
    force_balance: bool = True
    hydro: bool = True
    parabolic: bool = True


@dataclass
class Expectation:
    """Pass/fail rule for one metric.

    ``target`` with ``abs_tol`` and/or ``rel_tol`` checks closeness; ``min``
    and ``max`` are inclusive bounds.  Any combination may be given.
    """

    target: float | None = None
    abs_tol: float | None = None
    rel_tol: float | None = None
    min: float | None = None
    max: float | None = None

    def check(self, value: float) -> bool:
        if value is None or (isinstance(value, float) and math.isnan(value)):
            return False
        ok = True
        if self.target is not None:
            tol = max(self.abs_tol or 0.0, (self.rel_tol or 0.0) * abs(self.target))
            ok &= abs(value - self.target) <= tol
        if self.min is not None:
            ok &= value >= self.min
        if self.max is not None:
            ok &= value <= self.max
        return bool(ok)

    def describe(self) -> str:
        parts = []
        if self.target is not None:
            tol = []
            if self.abs_tol is not None:
                tol.append(f"abs {self.abs_tol:g}")
            if self.rel_tol is not None:
                tol.append(f"rel {self.rel_tol:g}")
            parts.append(f"= {self.target:g} ({', '.join(tol) or 'exact'})")
        if self.min is not None:
            parts.append(f">= {self.min:g}")
        if self.max is not None:
            parts.append(f"<= {self.max:g}")
        return " and ".join(parts)


@dataclass
class ScenarioConfig:
    scenario: str = "custom"
    description: str = ""
    grid: GridSpec = field(default_factory=GridSpec)
    units: UnitsSpec = field(default_factory=UnitsSpec)
    potential: dict = field(default_factory=lambda: {"kind": "harmonic", "omega": 1.0})
    state: StateSpec = field(default_factory=StateSpec)
    ensemble: EnsembleSpec = field(default_factory=EnsembleSpec)
    evolution: EvolutionSpec = field(default_factory=EvolutionSpec)
    parabolic: ParabolicSpec = field(default_factory=ParabolicSpec)
    analyses: AnalysisSpec = field(default_factory=AnalysisSpec)
    spectrum_levels: int = 6
    expectations: dict = field(default_factory=dict)
    output_dir: str = "out"

    def to_dict(self) -> dict:
        data = dataclasses.asdict(self)
        data["expectations"] = {k: {f: v for f, v in dataclasses.asdict(e).items() if v is not None}
                                for k, e in self.expectations.items()}
        return data

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=False) + "\n"

    def config_hash(self) -> str:
        """SHA-256 of the canonical JSON, excluding the output directory."""
        data = self.to_dict()
        data.pop("output_dir")
        blob = json.dumps(data, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


_NESTED = {
    "grid": GridSpec,
    "units": UnitsSpec,
    "state": StateSpec,
    "ensemble": EnsembleSpec,
    "evolution": EvolutionSpec,
    "parabolic": ParabolicSpec,
    "analyses": AnalysisSpec,
}


def _coerce(value: Any, default: Any, path: str) -> Any:
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{path}: expected true/false, got {value!r}")
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{path}: expected an integer, got {value!r}")
        return value
    if isinstance(default, float) or default is None:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{path}: expected a number, got {value!r}")
        return float(value)
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(f"{path}: expected a string, got {value!r}")
        return value
    return value


def _build(cls, data: Any, path: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected an object")
    names = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - set(names))
    if unknown:
        raise ConfigError(f"{path}: unknown key(s) {', '.join(unknown)}")
    defaults = cls()
    kwargs = {}
    for key, value in data.items():
        kwargs[key] = _coerce(value, getattr(defaults, key), f"{path}.{key}")
    return cls(**kwargs)


def config_from_dict(data: dict) -> ScenarioConfig:
    if not isinstance(data, dict):
        raise ConfigError("config: expected a JSON object")
    names = {f.name for f in dataclasses.fields(ScenarioConfig)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ConfigError(f"config: unknown key(s) {', '.join(unknown)}")
    data = copy.deepcopy(data)
    kwargs: dict[str, Any] = {}
    for key, value in data.items():
        if key in _NESTED:
            kwargs[key] = _build(_NESTED[key], value, key)
        elif key == "expectations":
            if not isinstance(value, dict):
                raise ConfigError("expectations: expected an object")
            kwargs[key] = {name: _build(Expectation, spec, f"expectations.{name}") for name, spec in value.items()}
        elif key == "potential":
            if not isinstance(value, dict):
                raise ConfigError("potential: expected an object")
            kwargs[key] = value
        elif key == "spectrum_levels":
            kwargs[key] = _coerce(value, 0, key)
        else:
            kwargs[key] = _coerce(value, "", key)
    cfg = ScenarioConfig(**kwargs)
    validate(cfg)
    return cfg


def validate(cfg: ScenarioConfig) -> None:
    """Semantic checks; raises `ConfigError` naming the failing component."""
    if cfg.scenario not in SCENARIOS:
        raise ConfigError(f"scenario: must be one of {', '.join(SCENARIOS)}")
    try:
        grid = make_grid(cfg.grid.x_min, cfg.grid.x_max, cfg.grid.n)
    except DomainError as exc:
        raise ConfigError(f"core.make_grid: {exc}") from None
    if not (cfg.units.hbar > 0 and cfg.units.mass > 0):
        raise ConfigError("units: hbar and mass must be positive")
    try:
        potential_from_dict(cfg.potential, grid)
    except (DomainError, TypeError, KeyError) as exc:
        raise ConfigError(f"core.potential_from_dict: {exc}") from None
    if cfg.state.kind not in STATE_KINDS:
        raise ConfigError(f"state.kind: must be one of {', '.join(STATE_KINDS)}")
    if cfg.state.level < 0 or cfg.state.level >= grid.n // 4:
        raise ConfigError("state.level: must be in [0, n/4)")
    if not cfg.state.sigma > 0:
        raise ConfigError("state.sigma: must be positive")
    ens = cfg.ensemble
    if ens.n_particles < 1 or ens.steps < 1 or not ens.dt > 0 or ens.lag < 1 or ens.record_every < 1:
        raise ConfigError("ensemble: need n_particles, steps, lag, record_every >= 1 and dt > 0")
    if ens.groups < 2 or ens.export_particles < 0:
        raise ConfigError("ensemble: groups must be >= 2 and export_particles >= 0")
    if ens.seed < 0:
        raise ConfigError("ensemble.seed: must be nonnegative")
    ev = cfg.evolution
    if not ev.dt > 0 or ev.duration < 0 or ev.hydro_t_final < 0:
        raise ConfigError("evolution: dt must be positive, durations nonnegative")
    if ev.hydro_accuracy not in (2, 4, 6, 8):
        raise ConfigError("evolution.hydro_accuracy: must be 2, 4, 6 or 8")
    par = cfg.parabolic
    if not (par.sigma0 > 0 and par.dtau > 0 and par.tau_total > 0):
        raise ConfigError("parabolic: sigma0, dtau and tau_total must be positive")
    if cfg.spectrum_levels < 1 or cfg.spectrum_levels >= grid.n // 4:
        raise ConfigError("spectrum_levels: must be in [1, n/4)")


def load_config(path: str | Path) -> ScenarioConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    return config_from_dict(data)
