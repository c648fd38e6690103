"""Scenario runner: executes the enabled analyses and writes reports.

Stages run in dependency order (solve, evolve, sample, transform, disperse).
A failing stage stops the run; everything produced so far is still written,
together with a MANIFEST marking the run incomplete.
"""
from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__, _kernels
from . import dispersion as disp
from . import hydro, nelson, phase_space
from .config import ScenarioConfig
from .core import Harmonic, NelsonLabError, SimUnits, make_grid, momentum_representation, potential_from_dict
from .schrodinger import (
    CrankNicolson,
    WaveFunction,
    evolve_parabolic,
    gaussian_packet,
    osmotic_from_density,
    polar_decompose,
    solve_eigenstates,
    velocity_fields,
)

log = logging.getLogger(__name__)

MAX_TABLE_SIDE = 128


class StageError(RuntimeError):
    """A named stage failed; ``stage`` is the module-qualified operation."""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"{stage}: {cause}")
        self.stage = stage
        self.cause = cause


@dataclass
class Table:
    columns: list[str]
    units: list[str]
    data: np.ndarray
    note: str = ""


@dataclass
class RunReport:
    scenario: str
    description: str
    provenance: dict
    config: dict
    metrics: dict = field(default_factory=dict)
    checks: list = field(default_factory=list)
    stages: list = field(default_factory=list)
    complete: bool = False
    failure: str | None = None
    tables: dict = field(default_factory=dict, repr=False)
    figures: dict = field(default_factory=dict, repr=False)

    @property
    def all_passed(self) -> bool:
        return all(c["status"] != "fail" for c in self.checks)

    def to_dict(self) -> dict:
        return {
            "scenario": self.scenario,
            "description": self.description,
            "complete": self.complete,
            "failure": self.failure,
            "provenance": self.provenance,
            "stages": self.stages,
            "metrics": {k: _json_number(v) for k, v in self.metrics.items()},
            "checks": [{**c, "value": _json_number(c["value"])} for c in self.checks],
            "config": self.config,
        }


def _json_number(v):
    if isinstance(v, float) and not math.isfinite(v):
        return str(v)
    return v


# ---------------------------------------------------------------------------
# Stages
# ---------------------------------------------------------------------------


class _Context:
    def __init__(self, cfg: ScenarioConfig):
        self.cfg = cfg
        self.units = SimUnits(cfg.units.hbar, cfg.units.mass)
        self.grid = make_grid(cfg.grid.x_min, cfg.grid.x_max, cfg.grid.n)
        self.potential = potential_from_dict(cfg.potential, self.grid)
        self.psi: WaveFunction | None = None
        self.F = None
        self.var_p: float | None = None

    @property
    def stationary(self) -> bool:
        return self.cfg.state.kind == "eigenstate"

    def initial_state(self, accuracy: int | None = None) -> WaveFunction:
        st = self.cfg.state
        if st.kind == "eigenstate":
            return solve_eigenstates(self.potential, self.grid, self.units, st.level + 1, accuracy)[st.level][1]
        return gaussian_packet(self.grid, st.x0, st.sigma, st.k0)


def _stage_state(ctx: _Context, rep: RunReport) -> None:
    ctx.psi = ctx.initial_state()
    psi = ctx.psi
    rep.tables["wavefunction"] = Table(
        ["x", "re_psi", "im_psi", "density", "potential"],
        ["length", "length^-1/2", "length^-1/2", "1/length", "energy"],
        np.column_stack([psi.x, psi.values.real, psi.values.imag, psi.density(), ctx.potential(psi.x, ctx.units)]))
    rep.metrics["state.norm"] = psi.norm()
    rep.metrics["state.mean_x"] = psi.mean_x()
    rep.metrics["state.var_x"] = psi.var_x()


def _stage_spectrum(ctx: _Context, rep: RunReport) -> None:
    k = ctx.cfg.spectrum_levels
    levels = solve_eigenstates(ctx.potential, ctx.grid, ctx.units, k)
    energies = np.array([e for e, _ in levels])
    cols = [np.arange(k), energies]
    names, units = ["n", "energy"], ["1", "energy"]
    if isinstance(ctx.potential, Harmonic):
        exact = (np.arange(k) + 0.5) * ctx.units.hbar * ctx.potential.omega
        rel = np.abs(energies - exact) / exact
        rep.metrics["spectrum.max_rel_error"] = float(rel.max())
        cols += [exact, rel]
        names += ["energy_exact", "rel_error"]
        units += ["energy", "1"]
    for n, e in enumerate(energies):
        rep.metrics[f"spectrum.E{n}"] = float(e)
    rep.tables["spectrum"] = Table(names, units, np.column_stack(cols))


def _stage_evolve(ctx: _Context, rep: RunReport) -> None:
    ev = ctx.cfg.evolution
    steps = int(round(ev.duration / ev.dt))
    if steps < 1:
        return
    prop = CrankNicolson(ctx.grid, ctx.potential, ctx.units, ev.dt)
    psi1 = prop.evolve(ctx.psi, steps)
    rep.metrics["schrodinger.t_final"] = psi1.time
    rep.metrics["schrodinger.norm_drift"] = abs(psi1.norm() - ctx.psi.norm())
    rep.metrics["schrodinger.var_x_final"] = psi1.var_x()
    rep.metrics["schrodinger.mean_x_final"] = psi1.mean_x()
    rep.metrics["schrodinger.density_change_max"] = float(np.max(np.abs(psi1.density() - ctx.psi.density())))


def _drift_table(est: nelson.VelocityEstimate, u_ref: np.ndarray) -> Table:
    return Table(
        ["x", "count", "c_forward", "c_forward_err", "c_backward", "c_backward_err",
         "v_estimate", "v_err", "u_estimate", "u_err", "u_quantum"],
        ["length", "1"] + ["length/time"] * 9,
        np.column_stack([est.c.bin_centers, est.c.counts, est.c.values, est.c.stderr, est.c_star.values,
                         est.c_star.stderr, est.v.values, est.v.stderr, est.u.values, est.u.stderr, u_ref]))


def _stage_nelson(ctx: _Context, rep: RunReport) -> None:
    cfg, grid, units, psi = ctx.cfg, ctx.grid, ctx.units, ctx.psi
    ens_cfg = cfg.ensemble
    rho_q = psi.density()
    if ctx.stationary:
        vel = velocity_fields(psi, units)
        ens = nelson.sample_density(rho_q, grid, ens_cfg.n_particles, ens_cfg.seed)
        batch = nelson.step_forward_sde(ens, vel, units, ens_cfg.dt, ens_cfg.steps, ens_cfg.record_every, rho_q)
        est = nelson.estimate_velocities(batch, grid, ens_cfg.lag, ens_cfg.groups)
        u_ref = osmotic_from_density(polar_decompose(psi), units)
        sel = est.u.select(1000, (-2.0, 2.0)) & np.isfinite(u_ref)
        z = np.abs(est.u.values - u_ref) / est.u.stderr
        rep.metrics["nelson.diffusion"] = nelson.estimate_diffusion(batch, grid, ens_cfg.lag)
        rep.metrics["nelson.osmotic_bins"] = int(sel.sum())
        rep.metrics["nelson.osmotic_max_z"] = float(z[sel].max()) if sel.any() else math.nan
        rep.metrics["nelson.current_max_abs"] = float(np.nanmax(np.abs(est.v.values[sel]))) if sel.any() else math.nan
        rep.metrics["nelson.final_variance"] = float(np.var(batch.positions[:, -1]))
        final = batch.positions[:, -1]
        rep.tables["drift"] = _drift_table(est, u_ref)
        if ctx.var_p is None:
            ctx.var_p = disp.momentum_moments_direct(psi, units)[1]
        dt_min = disp.min_time_interval(ctx.var_p, units)
        horizon = (batch.n_times - 1) * batch.dt
        lag = round(dt_min / batch.dt) if math.isfinite(dt_min) else 0
        if 1 <= lag and lag * batch.dt <= horizon:
            bridge = nelson.diffusive_displacement_variance(batch, grid, lag * batch.dt)
            expected = ctx.var_p * (lag * batch.dt) ** 2 / units.mass**2
            rep.metrics["bridge.delta_t"] = bridge["delta_t"]
            rep.metrics["bridge.diffusive_variance"] = bridge["diffusive"]
            rep.metrics["bridge.conditional_variance"] = bridge["conditional"]
            rep.metrics["bridge.expected_variance"] = expected
            rep.metrics["bridge.ratio"] = bridge["diffusive"] / expected
    else:
        track = nelson.track_density(psi, ctx.potential, units, ens_cfg.n_particles, ens_cfg.dt, ens_cfg.steps,
                                     ens_cfg.seed, ens_cfg.record_every)
        batch = track.batch
        rho_q = track.final_psi.density()
        final = batch.positions[:, -1]
        rep.metrics["nelson.density_l1_max"] = track.max_l1
        rep.metrics["nelson.track_time"] = float(track.times[-1])
        rep.tables["density_l1"] = Table(["t", "l1"], ["time", "1"], np.column_stack([track.times, track.l1]))
    rho_emp = nelson.empirical_density(final, grid)
    rep.metrics["nelson.density_l1_final"] = nelson.l1_distance(rho_emp, rho_q, grid.dx)
    rep.metrics["nelson.exited"] = batch.exited
    rep.tables["density"] = Table(["x", "rho_empirical", "rho_quantum"], ["length", "1/length", "1/length"],
                                  np.column_stack([grid.x, rho_emp, rho_q]))
    k = min(ens_cfg.export_particles, batch.n_particles)
    if k:
        rep.tables["particles"] = Table(["index", "x_initial", "x_final"], ["1", "length", "length"],
                                        np.column_stack([np.arange(k), batch.positions[:k, 0], final[:k]]))


def _decimate(n: int) -> int:
    return max(1, n // MAX_TABLE_SIDE)


def _stage_wigner(ctx: _Context, rep: RunReport) -> None:
    psi, units = ctx.psi, ctx.units
    f = phase_space.wigner(psi, units)
    f2 = phase_space.density_from_amplitudes(phase_space.phase_space_amplitude(psi, units))
    ctx.F = f
    neg = phase_space.negativity_report(f)
    xm, pm = phase_space.marginals(f)
    mom = momentum_representation(psi.values, psi.grid, units)
    rep.metrics["phase_space.route_difference"] = float(np.max(np.abs(f.values - f2.values)))
    rep.metrics["phase_space.total"] = f.total()
    rep.metrics["phase_space.min_value"] = neg.min_value
    rep.metrics["phase_space.min_x"] = neg.location_of_min[0]
    rep.metrics["phase_space.min_p"] = neg.location_of_min[1]
    rep.metrics["phase_space.negative_mass_fraction"] = neg.negative_mass_fraction
    rep.metrics["phase_space.F_origin"] = f.value_at(0.0, 0.0)
    rep.metrics["phase_space.x_marginal_error"] = float(np.max(np.abs(xm - psi.density())))
    if np.allclose(mom.p, f.p):
        rep.metrics["phase_space.p_marginal_error"] = float(np.max(np.abs(pm - mom.density())))
    sx, sp = _decimate(f.x.size), _decimate(f.p.size)
    xx, pp = np.meshgrid(f.x[::sx], f.p[::sp], indexing="ij")
    rep.tables["wigner"] = Table(["x", "p", "F"], ["length", "momentum", "1/action"],
                                 np.column_stack([xx.ravel(), pp.ravel(), f.values[::sx, ::sp].ravel()]),
                                 note=f"every {sx}th x and {sp}th p sample")
    rep.figures["wigner"] = (f, neg)


def _stage_dispersion(ctx: _Context, rep: RunReport) -> None:
    psi, units = ctx.psi, ctx.units
    r = disp.energy_dispersions(psi, ctx.potential, units, ctx.F)
    ctx.var_p = r.var_p
    for name in ("mean_p", "var_p", "delta_t_min", "delta_Ek", "delta_V", "delta_E", "product_tk", "product_tE"):
        rep.metrics[f"dispersion.{name}"] = float(getattr(r, name))
    rep.metrics["dispersion.delta_V_negative"] = bool(r.delta_V_negative)
    rep.metrics["dispersion.var_p_direct_difference"] = abs(disp.momentum_moments_direct(psi, units)[1] - r.var_p)
    if isinstance(ctx.potential, Harmonic):
        omega = ctx.potential.omega
        rep.metrics["dispersion.period_ratio"] = r.delta_t_min * omega
        levels = max(3, ctx.cfg.state.level + 2)
        e = (np.arange(levels) + 0.5) * units.hbar * omega
        half = 0.5 * units.hbar * omega
        rep.tables["bands"] = Table(["n", "energy", "band_low", "band_high"], ["1", "energy", "energy", "energy"],
                                    np.column_stack([np.arange(levels), e, e - half, e + half]))


def _stage_force_balance(ctx: _Context, rep: RunReport) -> None:
    psi, units = ctx.psi, ctx.units
    fb = disp.force_balance_residual(psi, ctx.potential, units, ctx.F)
    rep.metrics["force_balance.rel_norm"] = fb.rel_norm
    fs = fb.stochastic_force
    rep.tables["force_balance"] = Table(
        ["x", "residual", "stochastic_force", "external_force"], ["length", "force/length", "force", "force"],
        np.column_stack([psi.x, fb.residual, fs, -ctx.potential.gradient(psi.x, units)]))


def _stage_hydro(ctx: _Context, rep: RunReport) -> None:
    ev = ctx.cfg.evolution
    psi0 = ctx.initial_state(ev.hydro_accuracy) if ctx.stationary else ctx.psi
    r = hydro.hydro_consistency(psi0, ctx.potential, ctx.units, ev.hydro_t_final, accuracy=ev.hydro_accuracy)
    rep.metrics["hydro.t_final"] = r.t_final
    rep.metrics["hydro.v_l2"] = r.v_l2
    rep.metrics["hydro.u_l2"] = r.u_l2
    rep.tables["hydro"] = Table(["x", "v_hydro", "v_schrodinger", "u_hydro", "u_schrodinger"],
                                ["length"] + ["length/time"] * 4,
                                np.column_stack([ctx.grid.x, r.hydro.v, r.reference.v, r.hydro.u, r.reference.u]))


def _stage_parabolic(ctx: _Context, rep: RunReport) -> None:
    par = ctx.cfg.parabolic
    ground = solve_eigenstates(ctx.potential, ctx.grid, ctx.units, 1)[0][1]
    start = gaussian_packet(ctx.grid, 0.0, par.sigma0)
    steps = int(round(par.tau_total / par.dtau))
    out = evolve_parabolic(start, ctx.potential, ctx.units, par.dtau, steps, renormalize=True)
    rep.metrics["parabolic.tau"] = steps * par.dtau
    rep.metrics["parabolic.overlap"] = abs(ground.inner(out))
    rep.tables["parabolic"] = Table(["x", "psi_parabolic", "psi_ground"], ["length", "length^-1/2", "length^-1/2"],
                                    np.column_stack([ctx.grid.x, out.values.real, ground.values.real]))


_STAGES = [
    ("schrodinger.prepare_state", None, _stage_state),
    ("schrodinger.solve_eigenstates", "spectrum", _stage_spectrum),
    ("schrodinger.evolve_unitary", None, _stage_evolve),
    ("nelson.step_forward_sde", "nelson", _stage_nelson),
    ("phase_space.wigner_from_characteristic", "wigner", _stage_wigner),
    ("dispersion.energy_dispersions", "dispersion", _stage_dispersion),
    ("dispersion.force_balance_residual", "force_balance", _stage_force_balance),
    ("hydro.hydro_consistency", "hydro", _stage_hydro),
    ("schrodinger.evolve_parabolic", "parabolic", _stage_parabolic),
]


def _evaluate(cfg: ScenarioConfig, rep: RunReport) -> None:
    for name, rule in cfg.expectations.items():
        value = rep.metrics.get(name)
        if value is None:
            status = "skipped"
        else:
            status = "pass" if rule.check(float(value)) else "fail"
        rep.checks.append({"metric": name, "value": value, "rule": rule.describe(), "status": status})


def run_scenario(cfg: ScenarioConfig, output_dir: str | Path | None = None, plots: bool = True) -> RunReport:
    """Execute ``cfg`` and write its outputs; raises `StageError` on failure."""
    out = Path(output_dir if output_dir is not None else cfg.output_dir)
    rep = RunReport(cfg.scenario, cfg.description,
                    {"config_sha256": cfg.config_hash(), "seed": cfg.ensemble.seed, "version": __version__,
                     "backend": _kernels.BACKEND},
                    cfg.to_dict())
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(exc.errno, f"cannot create output directory {out}: {exc.strerror}", exc.filename) from exc
    ctx = _Context(cfg)
    failure = None
    for stage, toggle, fn in _STAGES:
        if toggle is not None and not getattr(cfg.analyses, toggle):
            rep.stages.append({"stage": stage, "status": "skipped"})
            continue
        t0 = time.perf_counter()
        try:
            fn(ctx, rep)
        except (NelsonLabError, ArithmeticError, ValueError) as exc:
            rep.stages.append({"stage": stage, "status": "failed", "error": str(exc)})
            rep.failure = f"{stage}: {exc}"
            failure = StageError(stage, exc)
            break
        log.info("%s done in %.2f s", stage, time.perf_counter() - t0)
        rep.stages.append({"stage": stage, "status": "ok"})
    rep.complete = failure is None
    _evaluate(cfg, rep)
    emit_outputs(rep, out, plots)
    if failure is not None:
        raise failure
    return rep


# ---------------------------------------------------------------------------
# Output
# ---------------------------------------------------------------------------


def write_table(path: Path, table: Table, provenance: dict) -> None:
    lines = [f"# nelsonlab {provenance['version']}",
             f"# config_sha256: {provenance['config_sha256']}",
             f"# seed: {provenance['seed']}",
             "# units: " + ", ".join(f"{c} [{u}]" for c, u in zip(table.columns, table.units))]
    if table.note:
        lines.append(f"# note: {table.note}")
    lines.append(",".join(table.columns))
    body = ["%.17g" % v if not np.isnan(v) else "nan" for v in table.data.ravel()]
    ncol = table.data.shape[1]
    for i in range(table.data.shape[0]):
        lines.append(",".join(body[i * ncol:(i + 1) * ncol]))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def emit_outputs(rep: RunReport, out: Path, plots: bool = True) -> list[Path]:
    """Write report.json, one CSV per table, optional SVG plots and a MANIFEST."""
    try:
        out.mkdir(parents=True, exist_ok=True)
        written = []
        for name, table in rep.tables.items():
            path = out / f"{name}.csv"
            write_table(path, table, rep.provenance)
            written.append(path)
        if plots:
            from .plots import render_all

            written += render_all(rep, out)
        path = out / "report.json"
        path.write_text(json.dumps(rep.to_dict(), indent=2) + "\n", encoding="utf-8")
        written.append(path)
        status = "complete" if rep.complete else f"incomplete (failed at {rep.failure})"
        manifest = [f"status: {status}", f"config_sha256: {rep.provenance['config_sha256']}"]
        manifest += [p.name for p in written]
        (out / "MANIFEST").write_text("\n".join(manifest) + "\n", encoding="utf-8")
    except OSError as exc:
        raise OSError(exc.errno, f"cannot write outputs to {out}: {exc.strerror}", exc.filename) from exc
    return written
