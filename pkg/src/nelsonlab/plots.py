"""SVG figures for a scenario run, rendered from its tables.

Metadata and the SVG id salt are pinned so that the same tables always give
byte-identical files.
"""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

_RC = {"svg.hashsalt": "nelsonlab", "svg.fonttype": "none", "path.simplify": False}
_META = {"Date": None, "Creator": None}


def _save(fig, path: Path) -> Path:
    fig.savefig(path, format="svg", metadata=_META)
    plt.close(fig)
    return path


def _density(rep, out):
    t = rep.tables["density"].data
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(t[:, 0], t[:, 2], "k-", lw=1.2, label="|psi|^2")
    ax.step(t[:, 0], t[:, 1], where="mid", lw=0.8, label="ensemble")
    ax.set_xlabel("x")
    ax.set_ylabel("density")
    ax.legend()
    return _save(fig, out / "density.svg")


def _drift(rep, out):
    t = rep.tables["drift"].data
    ok = np.isfinite(t[:, 8])
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.errorbar(t[ok, 0], t[ok, 8], yerr=t[ok, 9], fmt=".", ms=2, lw=0.5, label="u estimate")
    ax.plot(t[:, 0], t[:, 10], "k-", lw=1, label="u exact")
    ax.set_xlabel("x")
    ax.set_ylabel("osmotic velocity")
    ax.legend()
    return _save(fig, out / "drift.svg")


def _wigner(rep, out):
    f, neg = rep.figures["wigner"]
    fig, ax = plt.subplots(figsize=(6, 5))
    lim = float(np.max(np.abs(f.values)))
    extent = (f.x[0] - 0.5 * f.dx, f.x[-1] + 0.5 * f.dx, f.p[0] - 0.5 * f.dp, f.p[-1] + 0.5 * f.dp)
    im = ax.imshow(f.values.T, origin="lower", extent=extent, aspect="auto", cmap="RdBu_r", vmin=-lim, vmax=lim,
                   interpolation="nearest")
    fig.colorbar(im, ax=ax, label="F(x, p)")
    ax.plot(*neg.location_of_min, "k+", ms=8)
    ax.set_title(f"min {neg.min_value:.3g}, negative mass {neg.negative_mass_fraction:.3g}")
    ax.set_xlabel("x")
    ax.set_ylabel("p")
    return _save(fig, out / "wigner.svg")


def _bands(rep, out):
    t = rep.tables["bands"].data
    fig, ax = plt.subplots(figsize=(4, 5))
    for n, e, lo, hi in t:
        ax.axhspan(lo, hi, color="C0" if int(n) % 2 else "C1", alpha=0.25)
        ax.axhline(e, color="k", lw=0.8)
    de = rep.metrics.get("dispersion.delta_E")
    e_state = rep.metrics.get(f"spectrum.E{rep.config['state']['level']}")
    if de is not None and e_state is not None:
        ax.errorbar([0.5], [e_state], yerr=[de], fmt="o", color="C3", label="E +- dE")
        ax.legend()
    ax.set_xlim(0, 1)
    ax.set_xticks([])
    ax.set_ylabel("energy")
    return _save(fig, out / "bands.svg")


def _l1(rep, out):
    t = rep.tables["density_l1"].data
    fig, ax = plt.subplots(figsize=(6, 3))
    ax.plot(t[:, 0], t[:, 1])
    ax.set_xlabel("t")
    ax.set_ylabel("L1(ensemble, |psi|^2)")
    return _save(fig, out / "density_l1.svg")


_FIGURES = {"density": _density, "drift": _drift, "bands": _bands, "density_l1": _l1}


def render_all(rep, out: Path) -> list[Path]:
    paths = []
    with matplotlib.rc_context(_RC):
        for name, fn in _FIGURES.items():
            if name in rep.tables:
                paths.append(fn(rep, out))
        if "wigner" in rep.figures:
            paths.append(_wigner(rep, out))
    return paths
