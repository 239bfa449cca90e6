"""Result emission: delimited files, manifests, plot data and figures.

Every run directory receives

* the delimited outputs documented per command (trajectory.csv,
  moments.csv, mc_stats.csv, sweep.csv),
* a JSON diagnostics report and a manifest listing every emitted file
  with its content hash,
* two-column plot-data files plus a standalone plain-text plot script
  (``plots/``), and the same figures pre-rendered to PNG (``figures/``).

All floats in delimited files are serialised with 17 significant digits,
and nothing time- or host-dependent is written, so identical config and
seed reproduce every file byte for byte.
"""
from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

__all__ = [
    "fmt",
    "write_csv",
    "write_json",
    "write_manifest",
    "emit_plot_data",
    "render_solve_figures",
    "render_mc_figure",
    "render_sweep_figure",
]


def fmt(value) -> str:
    """Serialise one CSV cell; floats carry 17 significant digits."""
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.17g}"
    return str(value)


def write_csv(path: Path, header: list[str], rows) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [",".join(header)]
    lines.extend(",".join(fmt(cell) for cell in row) for row in rows)
    path.write_text("\n".join(lines) + "\n")


def _json_default(obj):
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON serialisable: {type(obj)}")


def write_json(path: Path, payload: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True,
                               default=_json_default) + "\n")


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    h.update(path.read_bytes())
    return h.hexdigest()


def write_manifest(out_dir: Path, payload: dict) -> None:
    """Write manifest.json last, listing every other emitted file with a hash."""
    files = {}
    for p in sorted(out_dir.rglob("*")):
        if p.is_file() and p.name != "manifest.json":
            files[p.relative_to(out_dir).as_posix()] = _sha256(p)
    payload = dict(payload)
    payload["files"] = files
    write_json(out_dir / "manifest.json", payload)


_PLOT_SCRIPT = """\
#!/usr/bin/env python3
\"\"\"Standalone renderer for the two-column series in this directory.

Each .dat file holds `x value` pairs; running this script writes one PNG
per file next to the data.  Rendered copies also ship in ../figures.
\"\"\"
from pathlib import Path

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

here = Path(__file__).resolve().parent
for dat in sorted(here.glob("*.dat")):
    xy = np.loadtxt(dat)
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    ax.plot(xy[:, 0], xy[:, 1], lw=1.5)
    ax.set_xlabel("t")
    ax.set_ylabel(dat.stem)
    ax.set_title(dat.stem)
    fig.tight_layout()
    fig.savefig(here / (dat.stem + ".png"), dpi=110)
    plt.close(fig)
print("rendered", len(list(here.glob('*.dat'))), "series")
"""


def emit_plot_data(out_dir: Path, series: dict[str, tuple[np.ndarray, np.ndarray]]) -> None:
    """Write two-column .dat files plus the plain-text plot script."""
    plots = out_dir / "plots"
    plots.mkdir(parents=True, exist_ok=True)
    for name, (x, y) in sorted(series.items()):
        lines = [f"{fmt(float(a))} {fmt(float(b))}" for a, b in zip(x, y)]
        (plots / f"{name}.dat").write_text("\n".join(lines) + "\n")
    (plots / "plot.py").write_text(_PLOT_SCRIPT)


def _pyplot():
    import matplotlib
    matplotlib.use("Agg", force=False)
    import matplotlib.pyplot as plt
    return plt


_SAVE_KW = {"dpi": 110, "metadata": {"Software": "colbreak"}}


def render_solve_figures(out_dir: Path, traj, moments: dict[str, np.ndarray],
                         bounds: dict[str, np.ndarray]) -> None:
    """Moment evolution and density snapshots for one solve run."""
    plt = _pyplot()
    figs = out_dir / "figures"
    figs.mkdir(parents=True, exist_ok=True)
    t = traj.times

    fig, ax = plt.subplots(figsize=(7.0, 4.5))
    for name, vals in sorted(moments.items()):
        ax.plot(t, vals, lw=1.5, label=name)
    for name, vals in sorted(bounds.items()):
        ax.plot(t, vals, lw=1.0, ls="--", label=name)
    ax.set_xlabel("t")
    ax.set_ylabel("moment")
    ax.set_yscale("log")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(figs / "moments.png", **_SAVE_KW)
    plt.close(fig)

    fig, ax = plt.subplots(figsize=(7.0, 4.5))
    piv = traj.grid.pivots
    widths = traj.grid.widths
    picks = sorted({0, len(t) // 4, len(t) // 2, 3 * len(t) // 4, len(t) - 1})
    for i in picks:
        dens = traj.states[i] / widths
        ax.loglog(piv, np.where(dens > 0, dens, np.nan), lw=1.2, label=f"t={t[i]:.3g}")
    ax.set_xlabel("size")
    ax.set_ylabel("number density")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(figs / "density.png", **_SAVE_KW)
    plt.close(fig)


def render_mc_figure(out_dir: Path, stats, pde: tuple[np.ndarray, np.ndarray] | None) -> None:
    """Ensemble number density vs the deterministic solver, with 3-sigma band."""
    plt = _pyplot()
    figs = out_dir / "figures"
    figs.mkdir(parents=True, exist_ok=True)
    fig, ax = plt.subplots(figsize=(7.0, 4.5))
    err = 3.0 * np.where(np.isfinite(stats.m0_stderr), stats.m0_stderr, 0.0)
    ax.errorbar(stats.times, stats.m0_mean, yerr=err, fmt="o", ms=3.5,
                capsize=2.5, lw=1.0, label="ensemble mean (3 s.e.)")
    if pde is not None:
        ax.plot(pde[0], pde[1], lw=1.5, label="sectional solver")
    ax.set_xlabel("t")
    ax.set_ylabel("particle number")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(figs / "mc_comparison.png", **_SAVE_KW)
    plt.close(fig)


def render_sweep_figure(out_dir: Path, curves: dict[str, tuple[np.ndarray, np.ndarray]]) -> None:
    """Number growth per small-size exponent."""
    plt = _pyplot()
    figs = out_dir / "figures"
    figs.mkdir(parents=True, exist_ok=True)
    fig, ax = plt.subplots(figsize=(7.0, 4.5))
    for label, (t, m0) in sorted(curves.items()):
        ax.plot(t, m0, lw=1.5, label=label)
    ax.set_xlabel("t")
    ax.set_ylabel("particle number")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(figs / "sweep_m0.png", **_SAVE_KW)
    plt.close(fig)
