"""Observable containers and cross-method discrepancy metrics.

Every engine emits an :class:`ObservableSeries`: timestamped per-site
magnetizations ``<sigma^z_i>``, connected correlations ``C(delta)`` along the
center row, and an engine-specific error record.  The two discrepancy
metrics compare such series between methods:

* ``epsilon_z``  -- summed absolute magnetization difference over the center
  row, scaled by ``2/L``;
* ``epsilon_zz`` -- correlation differences along the center row, normalized
  by the first method's correlation sum.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ComparisonError, UndefinedReferenceError
from .lattice import LatticeSpec

_MAG_SLACK = 1e-7
_CORR_BOUND = 2.0
_ZZ_DENOM_FLOOR = 1e-12


def connected_correlation(raw_zz: float, mz_a: float, mz_b: float) -> float:
    """Connected part C = <zz> - <z><z> of a two-point function."""
    return raw_zz - mz_a * mz_b


@dataclass(frozen=True)
class ObservableSeries:
    """Timestamped observables of one protocol run.

    ``mag`` has shape (T, n_sites), ``corr_line`` (T, K) with K the number of
    center-row pairs right of the reference site, ``corr_nn`` and
    ``error_record`` shape (T,).  ``corr_pairs`` optionally maps site pairs
    (a, b) to (T,) connected-correlation traces; engines fill it with the
    symmetry orbit of the center-row pairs so that correlation-class symmetry
    diagnostics can run on the output.  Standard-error fields are only
    populated by the sampled trajectory engine.
    """

    times: np.ndarray
    mag: np.ndarray
    corr_line: np.ndarray
    corr_nn: np.ndarray
    error_record: np.ndarray
    metadata: dict = field(default_factory=dict)
    corr_pairs: dict[tuple[int, int], np.ndarray] | None = None
    mag_stderr: np.ndarray | None = None
    corr_line_stderr: np.ndarray | None = None

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "mag", np.asarray(self.mag, dtype=float))
        object.__setattr__(self, "corr_line", np.asarray(self.corr_line, dtype=float))
        object.__setattr__(self, "corr_nn", np.asarray(self.corr_nn, dtype=float))
        object.__setattr__(self, "error_record", np.asarray(self.error_record, dtype=float))
        self.validate()

    def validate(self):
        T = len(self.times)
        if np.any(np.diff(self.times) <= 0):
            raise ComparisonError("record times must be strictly increasing")
        for name in ("mag", "corr_line", "corr_nn", "error_record"):
            if len(getattr(self, name)) != T:
                raise ComparisonError(f"{name} length does not match times")
        if np.any(np.abs(self.mag) > 1.0 + _MAG_SLACK):
            raise ComparisonError("magnetization outside [-1, 1]")
        if self.corr_line.size and np.any(np.abs(self.corr_line) > _CORR_BOUND):
            raise ComparisonError(f"correlations outside [-{_CORR_BOUND}, {_CORR_BOUND}]")
        if self.corr_pairs is not None:
            for pair, values in self.corr_pairs.items():
                if len(values) != T:
                    raise ComparisonError(f"corr_pairs[{pair}] length mismatch")

    @property
    def n_sites(self) -> int:
        return self.mag.shape[1]

    @property
    def rows(self) -> int:
        return int(self.metadata.get("rows", int(round(np.sqrt(self.n_sites)))))

    @property
    def cols(self) -> int:
        return int(self.metadata.get("cols", int(round(np.sqrt(self.n_sites)))))

    def time_index(self, t: float, tol: float | None = None) -> int:
        """Index of the record closest to ``t`` within ``tol`` (default dt/2)."""
        if tol is None:
            tol = 0.5 * float(self.metadata.get("dt", 1e-9))
        idx = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[idx] - t) > tol + 1e-12:
            raise ComparisonError(f"no record within {tol} of t = {t}")
        return idx

    def center_row_mag(self, lattice: LatticeSpec) -> np.ndarray:
        return self.mag[:, lattice.center_row_sites()]


class SeriesRecorder:
    """Accumulates per-time records and finalizes an ObservableSeries."""

    def __init__(self, pair_keys=()):
        self.times: list[float] = []
        self.mag: list[np.ndarray] = []
        self.corr_line: list[np.ndarray] = []
        self.corr_nn: list[float] = []
        self.error_record: list[float] = []
        self.pair_keys = [tuple(p) for p in pair_keys]
        self.pair_values: list[np.ndarray] = []
        self.mag_stderr: list[np.ndarray] = []
        self.corr_line_stderr: list[np.ndarray] = []

    def add(self, t, mag, corr_line, corr_nn, err, pair_values=None,
            mag_stderr=None, corr_line_stderr=None):
        self.times.append(float(t))
        self.mag.append(np.asarray(mag, dtype=float))
        self.corr_line.append(np.asarray(corr_line, dtype=float))
        self.corr_nn.append(float(corr_nn))
        self.error_record.append(float(err))
        if self.pair_keys:
            self.pair_values.append(np.asarray(pair_values, dtype=float))
        if mag_stderr is not None:
            self.mag_stderr.append(np.asarray(mag_stderr, dtype=float))
        if corr_line_stderr is not None:
            self.corr_line_stderr.append(np.asarray(corr_line_stderr, dtype=float))

    def finalize(self, metadata: dict) -> ObservableSeries:
        corr_pairs = None
        if self.pair_keys:
            stacked = np.asarray(self.pair_values)
            corr_pairs = {
                pair: stacked[:, k] for k, pair in enumerate(self.pair_keys)
            }
        return ObservableSeries(
            times=np.asarray(self.times),
            mag=np.asarray(self.mag),
            corr_line=np.asarray(self.corr_line),
            corr_nn=np.asarray(self.corr_nn),
            error_record=np.asarray(self.error_record),
            metadata=metadata,
            corr_pairs=corr_pairs,
            mag_stderr=np.asarray(self.mag_stderr) if self.mag_stderr else None,
            corr_line_stderr=(
                np.asarray(self.corr_line_stderr) if self.corr_line_stderr else None
            ),
        )


def _check_comparable(a: ObservableSeries, b: ObservableSeries):
    if a.n_sites != b.n_sites or a.rows != b.rows or a.cols != b.cols:
        raise ComparisonError(
            f"series have different lattices: {a.rows}x{a.cols} vs {b.rows}x{b.cols}"
        )


def epsilon_z(series_a: ObservableSeries, series_b: ObservableSeries, t: float,
              lattice: LatticeSpec | None = None) -> float:
    """Magnetization discrepancy (2/L) sum_i |m_i^A - m_i^B| over the center row."""
    _check_comparable(series_a, series_b)
    if lattice is None:
        from .lattice import build_grid

        lattice = build_grid(series_a.rows, series_a.cols)
    row = lattice.center_row_sites()
    ia = series_a.time_index(t)
    ib = series_b.time_index(t)
    diff = np.abs(series_a.mag[ia, row] - series_b.mag[ib, row])
    return float(2.0 * diff.sum() / lattice.cols)


def epsilon_zz(series_a: ObservableSeries, series_b: ObservableSeries, t: float) -> float:
    """Relative correlation discrepancy along the center row.

    Normalized by the correlation sum of the *first* series, so the metric is
    not symmetric under exchanging the arguments.  A vanishing reference sum
    leaves the metric undefined and raises rather than returning a number.
    """
    _check_comparable(series_a, series_b)
    ia = series_a.time_index(t)
    ib = series_b.time_index(t)
    ca = series_a.corr_line[ia]
    cb = series_b.corr_line[ib]
    if ca.shape != cb.shape:
        raise ComparisonError("correlation rows have different lengths")
    denom = float(ca.sum())
    if abs(denom) <= _ZZ_DENOM_FLOOR:
        raise UndefinedReferenceError(
            f"reference correlation sum {denom:.3e} is zero; epsilon_zz undefined"
        )
    return float(np.abs(ca - cb).sum() / denom)
