"""Convergence and physics diagnostics.

The square-lattice Hamiltonian is invariant under the dihedral group D4
(four rotations about the grid center, four reflections).  Observables of a
faithful simulation must share that symmetry, so the maximal deviation of a
value across its D4 orbit is a per-observable error measure.  A run counts
as converged while the relative symmetry error stays below a threshold
(0.4 by default).

Also provided: the Kibble-Zurek rescaling of correlation curves taken near
the critical crossing at several ramp times, with critical exponents
``nu = 0.629971``, ``eta = 0.036298`` and ``z = 1``, and a scalar collapse
quality (mean squared deviation from the pointwise mean curve).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    ComparisonError,
    IncomparableCurvesError,
    IncompleteDataError,
    InvalidSizeError,
)
from .lattice import LatticeSpec

KZ_NU = 0.629971
KZ_ETA = 0.036298
KZ_Z = 1.0

XI_MAG = 0.01
XI_CORR = 0.005
SYMMETRY_THRESHOLD = 0.4

_D4_COORD_MAPS = (
    ("identity", lambda r, c, n: (r, c)),
    ("rot90", lambda r, c, n: (c, n - r)),
    ("rot180", lambda r, c, n: (n - r, n - c)),
    ("rot270", lambda r, c, n: (n - c, r)),
    ("reflect_rows", lambda r, c, n: (n - r, c)),
    ("reflect_cols", lambda r, c, n: (r, n - c)),
    ("transpose", lambda r, c, n: (c, r)),
    ("anti_transpose", lambda r, c, n: (n - c, n - r)),
)


@dataclass(frozen=True)
class D4Action:
    """The 8 site permutations of an L x L grid; ``perms[0]`` is the identity."""

    L: int
    names: tuple[str, ...]
    perms: np.ndarray  # (8, L*L) int

    def apply(self, k: int, values: np.ndarray) -> np.ndarray:
        """Values re-indexed by map k: result[i] = values[perms[k, i]]."""
        return np.asarray(values)[self.perms[k]]

    def map_site(self, k: int, i: int) -> int:
        return int(self.perms[k][i])


def d4_maps(L: int) -> D4Action:
    if L < 1:
        raise InvalidSizeError(f"L must be at least 1, got {L}")
    n = L - 1
    perms = np.empty((8, L * L), dtype=int)
    for k, (_, coord_map) in enumerate(_D4_COORD_MAPS):
        for i in range(L * L):
            r, c = divmod(i, L)
            rr, cc = coord_map(r, c, n)
            perms[k, i] = rr * L + cc
    return D4Action(L=L, names=tuple(m[0] for m in _D4_COORD_MAPS), perms=perms)


@dataclass(frozen=True)
class SymmetryReport:
    """Per-observable D4 symmetry errors and the convergence verdict."""

    observable_class: str
    eps: float
    eps_rel: float
    converged: bool
    xi: float
    threshold: float
    per_site_eps: np.ndarray | None = None
    per_site_eps_rel: np.ndarray | None = None
    per_pair_eps: dict | None = None
    per_pair_eps_rel: dict | None = None


def _relative(eps: np.ndarray, mean_abs: np.ndarray, xi: float) -> np.ndarray:
    denom = np.where(mean_abs > xi, mean_abs, xi)
    return eps / denom


def symmetry_error(values, L: int, xi: float = XI_MAG,
                   threshold: float = SYMMETRY_THRESHOLD) -> SymmetryReport:
    """D4 symmetry error of per-site scalars on an L x L grid.

    For each site the error is the maximal absolute difference to the values
    at its 7 non-trivially mapped images; the relative error divides by the
    orbit mean absolute value, floored at the precision cutoff ``xi``.
    """
    values = np.asarray(values, dtype=float)
    if values.shape != (L * L,):
        raise ComparisonError(
            f"expected {L * L} site values for L = {L}, got shape {values.shape}"
        )
    action = d4_maps(L)
    images = np.stack([action.apply(k, values) for k in range(1, 8)])
    eps_i = np.abs(values[None, :] - images).max(axis=0)
    mean_abs = (np.abs(values) + np.abs(images).sum(axis=0)) / 8.0
    eps_rel_i = _relative(eps_i, mean_abs, xi)
    eps_rel = float(eps_rel_i.max())
    return SymmetryReport(
        observable_class="magnetization",
        eps=float(eps_i.max()),
        eps_rel=eps_rel,
        converged=bool(eps_rel < threshold),
        xi=xi,
        threshold=threshold,
        per_site_eps=eps_i,
        per_site_eps_rel=eps_rel_i,
    )


def _canonical_pair(a: int, b: int) -> tuple[int, int]:
    return (a, b) if a <= b else (b, a)


def map_pair(action: D4Action, k: int, pair: tuple[int, int]) -> tuple[int, int]:
    return _canonical_pair(action.map_site(k, pair[0]), action.map_site(k, pair[1]))


def pair_orbit(action: D4Action, pair: tuple[int, int]) -> list[tuple[int, int]]:
    return sorted({map_pair(action, k, pair) for k in range(8)})


def symmetry_error_corr(pair_values: dict, L: int, xi: float = XI_CORR,
                        threshold: float = SYMMETRY_THRESHOLD) -> SymmetryReport:
    """D4 symmetry error for pair observables, the group acting on both ends."""
    action = d4_maps(L)
    values = {_canonical_pair(*p): float(v) for p, v in pair_values.items()}
    per_pair_eps = {}
    per_pair_rel = {}
    for pair, v in values.items():
        image_vals = []
        for k in range(1, 8):
            image = map_pair(action, k, pair)
            if image not in values:
                raise IncompleteDataError(
                    f"missing D4 image pair {image} of reference pair {pair}"
                )
            image_vals.append(values[image])
        image_vals = np.asarray(image_vals)
        eps = float(np.abs(v - image_vals).max())
        mean_abs = (abs(v) + np.abs(image_vals).sum()) / 8.0
        per_pair_eps[pair] = eps
        per_pair_rel[pair] = eps / (mean_abs if mean_abs > xi else xi)
    eps = max(per_pair_eps.values())
    eps_rel = max(per_pair_rel.values())
    return SymmetryReport(
        observable_class="correlation",
        eps=float(eps),
        eps_rel=float(eps_rel),
        converged=bool(eps_rel < threshold),
        xi=xi,
        threshold=threshold,
        per_pair_eps=per_pair_eps,
        per_pair_eps_rel=per_pair_rel,
    )


def correlation_pair_orbit(lattice: LatticeSpec) -> list[tuple[int, int]]:
    """Pair set engines should record: D4 orbit of the center-row pairs.

    Non-square grids have no D4 action; there the set is just the center-row
    pairs themselves.
    """
    base = [_canonical_pair(*p) for p in lattice.corr_line_pairs()]
    if not lattice.is_square:
        return sorted(set(base))
    action = d4_maps(lattice.L)
    pairs = set()
    for pair in base:
        pairs.update(pair_orbit(action, pair))
    return sorted(pairs)


def symmetry_report_series(series, observable_class: str, xi: float | None = None,
                           threshold: float = SYMMETRY_THRESHOLD) -> list[SymmetryReport]:
    """One SymmetryReport per recorded time of a series."""
    if series.rows != series.cols:
        raise InvalidSizeError("symmetry diagnostics require a square lattice")
    L = series.cols
    reports = []
    if observable_class in ("mag", "magnetization"):
        xi = XI_MAG if xi is None else xi
        for k in range(len(series.times)):
            reports.append(symmetry_error(series.mag[k], L, xi=xi, threshold=threshold))
    elif observable_class in ("corr", "correlation"):
        xi = XI_CORR if xi is None else xi
        if series.corr_pairs is None:
            raise IncompleteDataError("series carries no pair correlation data")
        for k in range(len(series.times)):
            values = {pair: trace[k] for pair, trace in series.corr_pairs.items()}
            reports.append(symmetry_error_corr(values, L, xi=xi, threshold=threshold))
    else:
        raise InvalidSizeError(f"unknown observable class {observable_class!r}")
    return reports


def converged_until(series, observable_class: str, xi: float | None = None,
                    threshold: float = SYMMETRY_THRESHOLD) -> float:
    """Largest recorded time up to which the symmetry criterion holds.

    Returns 0 if the first record already violates it; the last record before
    the first violation otherwise (conservative reading of the criterion).
    """
    reports = symmetry_report_series(series, observable_class, xi=xi, threshold=threshold)
    last_good = None
    for t, report in zip(series.times, reports):
        if not report.converged:
            return float(last_good) if last_good is not None else 0.0
        last_good = t
    return float(series.times[-1])


@dataclass(frozen=True)
class KZCurve:
    tau: float
    delta: np.ndarray
    corr: np.ndarray


@dataclass(frozen=True)
class KZCurveSet:
    """Correlation curves near the crossing, with their rescaled coordinates."""

    curves: tuple[KZCurve, ...]
    nu: float
    z: float
    eta: float
    tau_ref: float
    xi_hat: np.ndarray = field(repr=False)
    rescaled: tuple[tuple[np.ndarray, np.ndarray], ...] = field(repr=False)

    @property
    def two_delta(self) -> float:
        return 1.0 + self.eta


def kz_rescale(curves, nu: float = KZ_NU, z: float = KZ_Z, eta: float = KZ_ETA,
               tau_ref: float | None = None) -> KZCurveSet:
    """Rescale (delta, C) curves by the Kibble-Zurek freeze-out length.

    ``xi_hat(tau) = (tau/tau_ref)^(nu/(1+z*nu))``; distances shrink by
    ``xi_hat`` and amplitudes grow by ``xi_hat^(1+eta)``.  The reference ramp
    time defaults to the first curve, fixing the arbitrary overall scale.
    """
    curves = [
        c if isinstance(c, KZCurve) else KZCurve(
            tau=float(c[0]),
            delta=np.asarray(c[1], dtype=float),
            corr=np.asarray(c[2], dtype=float),
        )
        for c in curves
    ]
    if len(curves) < 2:
        raise IncomparableCurvesError("at least two ramp times are required")
    taus = [c.tau for c in curves]
    if any(t <= 0 for t in taus):
        raise InvalidSizeError(f"ramp times must be positive, got {taus}")
    if len(set(taus)) != len(taus):
        raise InvalidSizeError(f"ramp times must be distinct, got {taus}")
    tau_ref = taus[0] if tau_ref is None else float(tau_ref)
    exponent = nu / (1.0 + z * nu)
    xi_hat = np.array([(t / tau_ref) ** exponent for t in taus])
    two_delta = 1.0 + eta
    rescaled = tuple(
        (c.delta / xh, c.corr * xh**two_delta) for c, xh in zip(curves, xi_hat)
    )
    return KZCurveSet(
        curves=tuple(curves), nu=nu, z=z, eta=eta, tau_ref=tau_ref,
        xi_hat=xi_hat, rescaled=rescaled,
    )


def kz_unrescale(curveset: KZCurveSet) -> list[KZCurve]:
    """Invert the rescaling; round-trips to the input curves."""
    out = []
    for curve, xh, (x, y) in zip(curveset.curves, curveset.xi_hat, curveset.rescaled):
        out.append(KZCurve(tau=curve.tau, delta=x * xh, corr=y / xh**curveset.two_delta))
    return out


def collapse_quality(curveset: KZCurveSet, n_grid: int = 201) -> float:
    """Mean squared deviation of the rescaled curves from their mean curve.

    Curves are linearly interpolated onto a common grid restricted to the
    overlap of their rescaled-distance supports; 0 means perfect collapse.
    """
    los, his = [], []
    sorted_curves = []
    for x, y in curveset.rescaled:
        order = np.argsort(x)
        sorted_curves.append((x[order], y[order]))
        los.append(x.min())
        his.append(x.max())
    lo, hi = max(los), min(his)
    if not hi > lo:
        raise IncomparableCurvesError(
            f"rescaled curves have no overlapping support ({lo} >= {hi})"
        )
    grid = np.linspace(lo, hi, n_grid)
    stack = np.stack([np.interp(grid, x, y) for x, y in sorted_curves])
    mean = stack.mean(axis=0)
    return float(((stack - mean) ** 2).mean())
