"""Figures for run reports: gnuplot scripts over the CSV data plus rendered PNGs."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

# no timestamps or version strings in the files, so reruns are byte-identical
PNG_METADATA = {"Software": None}

STYLE = {
    "figure.figsize": (6.4, 4.0),
    "axes.spines.top": False,
    "axes.spines.right": False,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "font.size": 9,
    "savefig.dpi": 120,
}


def _save(fig, path: Path) -> Path:
    fig.tight_layout()
    fig.savefig(path, metadata=PNG_METADATA)
    plt.close(fig)
    return path


def conservation_png(report: dict, path: str | Path) -> Path:
    """Gap per angle (left) and E_q against q per angle (right)."""
    rows = [p for p in report["projections"] if p["exceptional"] is None]
    with plt.rc_context(STYLE):
        fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9.0, 3.6))
        if rows:
            thetas = [p["theta"] for p in rows]
            ax1.plot(thetas, [p["gap"] for p in rows], "o-", color="C0", label="gap")
        ax1.axhline(report["tolerance"], ls="--", color="C3", lw=1, label="tolerance")
        ax1.set_xlabel("theta (rad)")
        ax1.set_ylabel("|dim_pi - min(1, dim_mu)|")
        ax1.legend(frameon=False)
        for i, p in enumerate(rows):
            qs = np.arange(1, len(p["E_q"]) + 1)
            ax2.errorbar(qs, p["E_q"], yerr=p["E_q_stderr"], marker="o", ms=3, capsize=2, color=f"C{i}",
                         label=f"{p['theta']:.3f}")
            ax2.axhline(p["E_extrapolated"], color=f"C{i}", ls=":", lw=1)
        ax2.axhline(report["target_dim_pi"], color="k", lw=1)
        ax2.set_xlabel("q")
        ax2.set_ylabel("E_q")
        if rows:
            ax2.legend(title="theta", frameon=False, fontsize=7)
        return _save(fig, Path(path))


def diagnostics_png(mixing: dict, genericity: dict, path: str | Path) -> Path:
    """Mixing gap per lag with 3-sigma bands (left) and cross-path dispersion vs N (right)."""
    with plt.rc_context(STYLE):
        fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9.0, 3.6))
        lags = np.asarray(mixing["lags"])
        gap = np.asarray(mixing["gap_mean"])
        se = np.nan_to_num(np.asarray(mixing["gap_stderr"], dtype=float))
        ax1.fill_between(lags, -3 * se, 3 * se, color="C0", alpha=0.2, lw=0)
        ax1.plot(lags, gap, "o-", color="C0", ms=3)
        ax1.axhline(0, color="k", lw=0.8)
        ax1.set_xlabel("lag h")
        ax1.set_ylabel("lag product - product of means")
        n = genericity.get("prefix_lengths") or []
        d = genericity.get("prefix_dispersion") or []
        if len(n) == len(d) and len(d) >= 1 and min(d) > 0:
            ax2.loglog(n, d, "o-", color="C1", label="dispersion")
            ref = d[0] * (np.asarray(n, dtype=float) / n[0]) ** -0.5
            ax2.loglog(n, ref, "--", color="k", lw=1, label="N^-1/2")
            ax2.legend(frameon=False)
        ax2.set_xlabel("N")
        ax2.set_ylabel("cross-path std")
        return _save(fig, Path(path))


def angle_histogram_png(t: np.ndarray, path: str | Path, bins: int = 50) -> Path:
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        ax.hist(t, bins=bins, range=(0, 1), density=True, color="C2", alpha=0.7)
        ax.axhline(1.0, color="k", lw=1)
        ax.set_xlabel("t")
        ax.set_ylabel("density")
        return _save(fig, Path(path))


def conservation_gnuplot(csv_name: str, tolerance: float, path: str | Path) -> Path:
    script = f"""set datafile separator ','
set key autotitle columnhead
set xlabel 'theta (rad)'
set ylabel 'conservation gap'
set terminal pngcairo size 800,500
set output 'conserve_gnuplot.png'
plot '{csv_name}' using 1:(strcol(2) eq 'regular' ? column('gap') : 1/0) with linespoints title 'gap', \\
     {tolerance!r} with lines dashtype 2 title 'tolerance'
"""
    path = Path(path)
    path.write_text(script)
    return path
