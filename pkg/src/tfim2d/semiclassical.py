"""Spin mean-field and discrete truncated Wigner dynamics.

Both methods propagate classical spin vectors under the precession equation
obtained by replacing the Pauli operators with classical variables,
``ds_i/dt = 2 B_i x s_i`` with the local field
``B_i = (h_x, 0, h_z + sign*J*sum_nn s^z_j)``.  The mean-field trajectory
starts from the mean Bloch vector (0, 0, -1); the Wigner ensemble samples
``s^x, s^y in {+1, -1}`` per site (the discrete Wigner function of the
polarized state) and averages trajectories, with statistical errors
shrinking as ``n_t^(-1/2)``.  When the full phase space is smaller than the
requested sample count it is enumerated exactly instead of sampled.

Integration is fixed-step fourth-order Runge-Kutta, default step 0.001/J.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .diagnostics import correlation_pair_orbit
from .errors import InvalidSizeError
from .lattice import LatticeSpec
from .observables import ObservableSeries, SeriesRecorder, connected_correlation
from .schedule import Schedule, time_grid

DEFAULT_DT = 0.001
EXHAUSTIVE_MAX_SITES = 7


@dataclass
class SpinTrajectory:
    """Classical spin configuration, one 3-vector (s^x, s^y, s^z) per site."""

    s: np.ndarray  # (n_sites, 3)

    @property
    def n_sites(self) -> int:
        return self.s.shape[0]


@dataclass
class TWEnsemble:
    """A batch of trajectories (n_t, n_sites, 3) plus its sampling seed."""

    trajectories: np.ndarray
    seed: int | None
    exhaustive: bool = False

    @property
    def n_t(self) -> int:
        return self.trajectories.shape[0]

    @property
    def n_sites(self) -> int:
        return self.trajectories.shape[1]


def smf_initial(n_sites: int) -> SpinTrajectory:
    """Mean-field starting point: every spin at (0, 0, -1)."""
    s = np.zeros((n_sites, 3))
    s[:, 2] = -1.0
    return SpinTrajectory(s=s)


def sample_initial(n_sites: int, n_t: int, seed: int | None = None,
                   exhaustive: bool | None = None) -> TWEnsemble:
    """Draw the Wigner ensemble of the polarized state.

    ``s^z = -1`` deterministically; ``s^x`` and ``s^y`` are independent fair
    sign flips.  With ``exhaustive=None`` the full 4^N-point phase space is
    enumerated whenever it fits within the requested ``n_t`` (and N is small
    enough); pass ``False`` to force sampling.
    """
    if n_t < 1:
        raise InvalidSizeError(f"n_t must be at least 1, got {n_t}")
    if exhaustive is None:
        exhaustive = n_sites <= EXHAUSTIVE_MAX_SITES and 4**n_sites <= n_t
    if exhaustive:
        if n_sites > EXHAUSTIVE_MAX_SITES:
            raise InvalidSizeError(
                f"exhaustive enumeration limited to {EXHAUSTIVE_MAX_SITES} sites"
            )
        count = 4**n_sites
        codes = np.arange(count)
        traj = np.empty((count, n_sites, 3))
        for i in range(n_sites):
            local = (codes // 4**i) % 4
            traj[:, i, 0] = 2.0 * (local % 2) - 1.0
            traj[:, i, 1] = 2.0 * (local // 2) - 1.0
        traj[:, :, 2] = -1.0
        return TWEnsemble(trajectories=traj, seed=seed, exhaustive=True)
    rng = np.random.default_rng(seed)
    traj = np.empty((n_t, n_sites, 3))
    traj[:, :, 0] = rng.choice([-1.0, 1.0], size=(n_t, n_sites))
    traj[:, :, 1] = rng.choice([-1.0, 1.0], size=(n_t, n_sites))
    traj[:, :, 2] = -1.0
    return TWEnsemble(trajectories=traj, seed=seed, exhaustive=False)


def _adjacency(lattice: LatticeSpec) -> np.ndarray:
    adj = np.zeros((lattice.n_sites, lattice.n_sites))
    for a, b in lattice.nn_edges:
        adj[a, b] = adj[b, a] = 1.0
    return adj


def classical_rhs(s: np.ndarray, adjacency: np.ndarray, coupling: float,
                  h_x: float, h_z: float) -> np.ndarray:
    """Precession derivative for trajectories of shape (..., n_sites, 3).

    The factor 2 comes from the classical bracket of spin-1/2 variables; its
    overall sign is anchored to the single-spin solution
    ``<s^z(t)> = -cos(2 h_x t)``.
    """
    bz = h_z + coupling * (s[..., 2] @ adjacency)
    bx = h_x
    # ds = 2 B x s with B = (bx, 0, bz)
    out = np.empty_like(s)
    out[..., 0] = 2.0 * (-bz * s[..., 1])
    out[..., 1] = 2.0 * (bz * s[..., 0] - bx * s[..., 2])
    out[..., 2] = 2.0 * (bx * s[..., 1])
    return out


def classical_energy(s: np.ndarray, adjacency: np.ndarray, coupling: float,
                     h_x: float, h_z: float) -> np.ndarray:
    """H_C per trajectory: coupling * sum_edges s^z s^z + fields."""
    zz = 0.5 * np.einsum("...i,ij,...j->...", s[..., 2], adjacency, s[..., 2])
    return coupling * zz + h_x * s[..., 0].sum(axis=-1) + h_z * s[..., 2].sum(axis=-1)


def _rk4_step(s, t, dt, adjacency, coupling, schedule):
    def rhs(state, time):
        h_x, h_z = schedule(time)
        return classical_rhs(state, adjacency, coupling, h_x, h_z)

    k1 = rhs(s, t)
    k2 = rhs(s + 0.5 * dt * k1, t + 0.5 * dt)
    k3 = rhs(s + 0.5 * dt * k2, t + 0.5 * dt)
    k4 = rhs(s + dt * k3, t + dt)
    return s + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def run_protocol(method: str, lattice: LatticeSpec, schedule: Schedule, *,
                 dt: float = DEFAULT_DT, n_t: int = 1, seed: int | None = None,
                 t_record=(), sign: int = +1, J: float = 1.0,
                 exhaustive: bool | None = None) -> ObservableSeries:
    """Integrate SMF or TW dynamics and record ensemble observables.

    SMF runs the single mean-field trajectory (``n_t`` and ``seed`` are
    ignored); its connected correlations vanish identically.  TW records the
    ensemble means; ``error_record`` holds the largest standard error over
    the magnetization and correlation estimators.
    """
    method = method.lower()
    if method not in ("smf", "tw"):
        raise InvalidSizeError(f"unknown semiclassical method {method!r}")
    if dt > 0.01:
        raise InvalidSizeError(f"dt = {dt} exceeds the guard 0.01/J")
    if method == "smf":
        ensemble = smf_initial(lattice.n_sites).s[None, :, :]
        exhaustive_used = False
    else:
        tw = sample_initial(lattice.n_sites, n_t, seed=seed, exhaustive=exhaustive)
        ensemble = tw.trajectories
        exhaustive_used = tw.exhaustive
    coupling = sign * J
    adjacency = _adjacency(lattice)

    line_pairs = lattice.corr_line_pairs()
    orbit_pairs = correlation_pair_orbit(lattice)
    all_pairs = sorted(set(line_pairs) | set(orbit_pairs))
    recorder = SeriesRecorder(pair_keys=orbit_pairs)
    n_samples = ensemble.shape[0]

    def record(t):
        mag = ensemble[:, :, 2].mean(axis=0)
        max_stderr = 0.0
        if n_samples > 1:
            mag_stderr = ensemble[:, :, 2].std(axis=0, ddof=1) / np.sqrt(n_samples)
            max_stderr = float(mag_stderr.max(initial=0.0))
        else:
            mag_stderr = np.zeros(lattice.n_sites)
        corr = {}
        corr_stderr = []
        for a, b in all_pairs:
            prod = ensemble[:, a, 2] * ensemble[:, b, 2]
            raw = prod.mean()
            corr[(a, b)] = connected_correlation(raw, mag[a], mag[b])
            if n_samples > 1:
                se = float(prod.std(ddof=1) / np.sqrt(n_samples))
                max_stderr = max(max_stderr, se)
                corr_stderr.append(se)
            else:
                corr_stderr.append(0.0)
        corr_line = np.array([corr[p] for p in line_pairs])
        line_stderr = np.array([
            corr_stderr[all_pairs.index(p)] for p in line_pairs
        ])
        recorder.add(
            t, mag, corr_line,
            corr_line[0] if corr_line.size else 0.0,
            max_stderr,
            pair_values=[corr[p] for p in orbit_pairs],
            mag_stderr=mag_stderr,
            corr_line_stderr=line_stderr,
        )

    grid, record_idx = time_grid(schedule.t_f, dt, t_record)
    if 0 in record_idx:
        record(grid[0])
    for k in range(len(grid) - 1):
        step = grid[k + 1] - grid[k]
        ensemble = _rk4_step(ensemble, grid[k], step, adjacency, coupling, schedule)
        if k + 1 in record_idx:
            record(grid[k + 1])

    meta = {
        "engine": method,
        "rows": lattice.rows,
        "cols": lattice.cols,
        "dt": dt,
        "n_t": 1 if method == "smf" else n_samples,
        "seed": seed,
        "sign": sign,
        "J": J,
        "exhaustive": exhaustive_used,
        "schedule": schedule.descriptor or {"kind": "custom", "t_f": schedule.t_f},
    }
    return recorder.finalize(meta)
