"""Figure rendering for the CLI report paths.

Every plot lands in a file next to the delimited output; nothing is shown
interactively (headless Agg backend).
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .diagnostics import KZCurveSet
from .observables import ObservableSeries


def plot_series(series: ObservableSeries, path, lattice=None) -> None:
    """Central magnetization and nearest-neighbor correlation vs time."""
    fig, axes = plt.subplots(2, 1, sharex=True, figsize=(6, 6))
    if lattice is not None:
        center = lattice.center_site
    else:
        center = series.n_sites // 2
    axes[0].plot(series.times, series.mag[:, center], marker=".", lw=1)
    axes[0].set_ylabel(r"$\langle\sigma^z_{r_0}\rangle$")
    axes[0].set_ylim(-1.05, 1.05)
    axes[1].plot(series.times, series.corr_nn, marker=".", lw=1, color="tab:red")
    axes[1].set_ylabel(r"$C(\delta_1)$")
    axes[1].set_xlabel(r"$t\,J$")
    engine = series.metadata.get("engine", "?")
    sched = series.metadata.get("schedule", {})
    axes[0].set_title(f"{engine}, {series.rows}x{series.cols}, {sched.get('kind', '')}")
    for ax in axes:
        ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_compare(rows: list[dict], path) -> None:
    """Discrepancy metrics vs time on a log scale."""
    t = [r["t"] for r in rows]
    eps_z = [r["eps_z"] for r in rows]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.semilogy(t, np.maximum(eps_z, 1e-18), "o-", label=r"$\epsilon_z$")
    defined = [(r["t"], r["eps_zz"]) for r in rows if r.get("eps_zz_defined")]
    if defined:
        tz, ezz = zip(*defined)
        ax.semilogy(tz, np.maximum(np.abs(ezz), 1e-18), "s-", label=r"$|\epsilon_{zz}|$")
    ax.set_xlabel(r"$t\,J$")
    ax.set_ylabel("discrepancy")
    ax.legend()
    ax.grid(alpha=0.3, which="both")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_symmetry(times, reports, threshold: float, horizon: float, path) -> None:
    """Relative symmetry error vs time with the convergence threshold."""
    eps_rel = [r.eps_rel for r in reports]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.semilogy(times, np.maximum(eps_rel, 1e-18), "o-", color="tab:purple")
    ax.axhline(threshold, color="k", ls="--", lw=1, label=f"threshold {threshold}")
    ax.axvline(horizon, color="tab:green", ls=":", lw=1.5,
               label=f"converged until tJ = {horizon:g}")
    ax.set_xlabel(r"$t\,J$")
    ax.set_ylabel(r"$\epsilon^{\mathrm{rel}}$")
    ax.legend()
    ax.grid(alpha=0.3, which="both")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_collapse(curveset: KZCurveSet, quality: float, path) -> None:
    """Raw and rescaled correlation curves side by side."""
    fig, axes = plt.subplots(1, 2, figsize=(9, 4))
    for curve in curveset.curves:
        axes[0].plot(curve.delta, curve.corr, "o-", label=rf"$\tau J = {curve.tau:g}$")
    axes[0].set_xlabel(r"$\delta$")
    axes[0].set_ylabel(r"$C(\delta)$")
    axes[0].set_title("raw")
    for (x, y), curve in zip(curveset.rescaled, curveset.curves):
        axes[1].plot(x, y, "o-", label=rf"$\tau J = {curve.tau:g}$")
    axes[1].set_xlabel(r"$\delta/\hat\xi$")
    axes[1].set_ylabel(r"$C \cdot \hat\xi^{2\Delta}$")
    axes[1].set_title(f"rescaled (quality {quality:.3e})")
    for ax in axes:
        ax.grid(alpha=0.3)
        ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
