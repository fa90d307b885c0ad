"""Run orchestration and the file-level comparison/diagnostic operations."""

from __future__ import annotations

import os
import time
from pathlib import Path

import numpy as np

from . import diagnostics, exact, mps, peps, semiclassical
from .config import RunConfig
from .errors import ComparisonError, UndefinedReferenceError
from .observables import ObservableSeries, epsilon_z, epsilon_zz
from .resultfile import ResultFile, read_result, write_result

OUTDIR_ENV = "TFIM2D_OUTDIR"


def resolve_output_path(path) -> Path:
    """Relative outputs land in $TFIM2D_OUTDIR when that override is set."""
    path = Path(path)
    outdir = os.environ.get(OUTDIR_ENV)
    if outdir and not path.is_absolute():
        return Path(outdir) / path
    return path


def run_series(config: RunConfig) -> ObservableSeries:
    """Dispatch a validated config to its engine's protocol runner."""
    lattice = config.lattice()
    schedule = config.schedule()
    common = dict(dt=config.dt, t_record=config.record_times, sign=config.sign,
                  J=config.J)
    knobs = config.knobs
    if config.engine == "exact":
        return exact.run_protocol(lattice, schedule, **common,
                                  krylov_tol=float(knobs.get("krylov_tol", 1e-12)))
    if config.engine == "mps":
        return mps.run_protocol(
            lattice, schedule, **common,
            chi_max=int(knobs.get("chi_max", mps.DEFAULT_CHI)),
            svd_cutoff=float(knobs.get("svd_cutoff", mps.DEFAULT_SVD_CUTOFF)),
            krylov_tol=float(knobs.get("krylov_tol", 1e-12)),
        )
    if config.engine == "peps-bp":
        return peps.run_protocol(
            lattice, schedule, **common,
            chi2d=int(knobs.get("chi2d", peps.DEFAULT_CHI2D)),
            bp_tol=float(knobs.get("bp_tol", peps.DEFAULT_BP_TOL)),
            bp_max_iter=int(knobs.get("bp_max_iter", peps.DEFAULT_BP_MAX_ITER)),
            bp_damping=float(knobs.get("bp_damping", peps.DEFAULT_BP_DAMPING)),
        )
    if config.engine in ("smf", "tw"):
        exhaustive = knobs.get("exhaustive")
        return semiclassical.run_protocol(
            config.engine, lattice, schedule, **common,
            n_t=int(knobs.get("n_t", 1)),
            seed=knobs.get("seed"),
            exhaustive=None if exhaustive is None else bool(exhaustive),
        )
    raise ComparisonError(f"no runner for engine {config.engine!r}")


def run(config: RunConfig) -> tuple[ObservableSeries, Path | None]:
    """Run and, when the config names an output, persist the result file."""
    start = time.perf_counter()
    series = run_series(config)
    wall = time.perf_counter() - start
    out_path = None
    if config.output:
        out_path = resolve_output_path(config.output)
        out_path.parent.mkdir(parents=True, exist_ok=True)
        write_result(out_path, series, config=config.raw, wall_time=wall)
    return series, out_path


def _common_times(a: ObservableSeries, b: ObservableSeries) -> list[float]:
    keys_b = {round(t, 9) for t in b.times}
    common = [t for t in a.times if round(t, 9) in keys_b]
    if not common:
        raise ComparisonError("series share no record times")
    return common


def compare_series(a: ObservableSeries, b: ObservableSeries, times=None,
                   lattice=None) -> list[dict]:
    """Per-time discrepancy rows; epsilon_zz is None where undefined."""
    if lattice is None:
        from .lattice import build_grid

        lattice = build_grid(a.rows, a.cols)
    if times is None:
        times = _common_times(a, b)
    rows = []
    for t in times:
        row = {"t": float(t), "eps_z": epsilon_z(a, b, t, lattice)}
        try:
            row["eps_zz"] = epsilon_zz(a, b, t)
            row["eps_zz_defined"] = True
        except UndefinedReferenceError:
            row["eps_zz"] = None
            row["eps_zz_defined"] = False
        rows.append(row)
    return rows


def compare_files(path_a, path_b, times=None) -> list[dict]:
    a = read_result(path_a)
    b = read_result(path_b)
    return compare_series(a.series, b.series, times=times)


def symmetry_file(path, observable_class: str, xi: float | None = None,
                  threshold: float = diagnostics.SYMMETRY_THRESHOLD):
    """Per-time symmetry reports and the convergence horizon of a file."""
    result = read_result(path)
    reports = diagnostics.symmetry_report_series(
        result.series, observable_class, xi=xi, threshold=threshold
    )
    horizon = diagnostics.converged_until(
        result.series, observable_class, xi=xi, threshold=threshold
    )
    return result.series, reports, horizon


def kz_from_files(paths, taus, t_c: float, dt_offset: float,
                  nu: float = diagnostics.KZ_NU, z: float = diagnostics.KZ_Z,
                  eta: float = diagnostics.KZ_ETA):
    """Correlation curves at t_c + dt_offset from each file, rescaled.

    Returns (curveset, quality).  Each file must carry a record at the
    requested time and the center-row correlation columns.
    """
    if len(paths) != len(taus):
        raise ComparisonError(
            f"{len(paths)} files but {len(taus)} ramp times"
        )
    curves = []
    for path, tau in zip(paths, taus):
        result = read_result(path)
        series = result.series
        idx = series.time_index(t_c + dt_offset)
        from .lattice import build_grid

        lattice = build_grid(series.rows, series.cols)
        delta = lattice.corr_line_distances()
        if series.corr_line.shape[1] != len(delta):
            raise ComparisonError(f"{path}: correlation row length mismatch")
        curves.append(diagnostics.KZCurve(
            tau=float(tau), delta=delta, corr=series.corr_line[idx]
        ))
    curveset = diagnostics.kz_rescale(curves, nu=nu, z=z, eta=eta)
    quality = diagnostics.collapse_quality(curveset)
    return curveset, quality
