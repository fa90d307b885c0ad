"""Dense state-vector evolution: the ground-truth oracle at desk scale.

Basis convention: bit ``i`` of the amplitude index encodes site ``i``;
bit 0 is spin-down (sigma^z eigenvalue -1), bit 1 spin-up (+1).  The
Hamiltonian is never materialized: the diagonal (couplings plus longitudinal
field) is a precomputed vector and the transverse field acts by bit flips.
Each time step applies the propagator of the midpoint-field Hamiltonian
through the adaptive Lanczos exponential.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .diagnostics import correlation_pair_orbit
from .errors import MemoryGuardError
from .krylov import expm_krylov
from .lattice import LatticeSpec
from .model import IsingParams, RydbergParams
from .observables import ObservableSeries, SeriesRecorder, connected_correlation
from .schedule import Schedule, time_grid

MAX_SITES = 20


@dataclass
class DenseState:
    amplitudes: np.ndarray
    n_sites: int

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def copy(self) -> "DenseState":
        return DenseState(self.amplitudes.copy(), self.n_sites)


def init_polarized(n_sites: int) -> DenseState:
    """The all-down product state |dd...d>."""
    if not 1 <= n_sites <= MAX_SITES:
        raise MemoryGuardError(
            f"dense engine supports 1..{MAX_SITES} sites, got {n_sites}"
        )
    amplitudes = np.zeros(2**n_sites, dtype=complex)
    amplitudes[0] = 1.0
    return DenseState(amplitudes, n_sites)


def _site_z_signs(n_sites: int, site: int) -> np.ndarray:
    """sigma^z eigenvalues (+-1) of site along the computational basis."""
    idx = np.arange(2**n_sites, dtype=np.int64)
    return (2 * ((idx >> site) & 1) - 1).astype(float)


def _pair_zz_signs(n_sites: int, a: int, b: int) -> np.ndarray:
    idx = np.arange(2**n_sites, dtype=np.int64)
    parity = ((idx >> a) ^ (idx >> b)) & 1
    return (1 - 2 * parity).astype(float)


def coupling_diagonal(lattice: LatticeSpec) -> np.ndarray:
    """Diagonal of sum_edges sigma^z_a sigma^z_b."""
    n = lattice.n_sites
    diag = np.zeros(2**n)
    for a, b in lattice.nn_edges:
        diag += _pair_zz_signs(n, a, b)
    return diag


def magnetization_diagonal(n_sites: int) -> np.ndarray:
    diag = np.zeros(2**n_sites)
    for i in range(n_sites):
        diag += _site_z_signs(n_sites, i)
    return diag


def rydberg_diagonal(params: RydbergParams) -> np.ndarray:
    """Diagonal of the all-pairs coupling plus the Delta_z,i offsets."""
    n = params.n_sites
    diag = np.zeros(2**n)
    for i, j, coupling in params.pair_list():
        diag += coupling * _pair_zz_signs(n, i, j)
    for i in range(n):
        diag += params.delta_z[i] * _site_z_signs(n, i)
    return diag


def apply_hamiltonian(psi: np.ndarray, n_sites: int, static_diag: np.ndarray,
                      mag_diag: np.ndarray, h_x: float, h_z: float) -> np.ndarray:
    """H psi with H = static_diag + h_z * mag_diag + h_x * sum_i sigma^x_i."""
    out = (static_diag + h_z * mag_diag) * psi
    if h_x != 0.0:
        for i in range(n_sites):
            lead = 2 ** (n_sites - 1 - i)
            flipped = psi.reshape(lead, 2, -1)[:, ::-1, :]
            out.reshape(lead, 2, -1)[:] += h_x * flipped
    return out


class DenseHamiltonian:
    """Matrix-free H(t) for a lattice (or Rydberg register) and a schedule."""

    def __init__(self, lattice: LatticeSpec, params: IsingParams | RydbergParams,
                 schedule: Schedule | None = None):
        self.lattice = lattice
        self.n_sites = lattice.n_sites
        if self.n_sites > MAX_SITES:
            raise MemoryGuardError(f"{self.n_sites} sites exceed the dense limit {MAX_SITES}")
        if isinstance(params, RydbergParams):
            if params.n_sites != self.n_sites:
                raise MemoryGuardError("Rydberg parameter set does not match the lattice")
            self.static_diag = rydberg_diagonal(params)
            self.schedule = schedule
        else:
            self.static_diag = params.coupling * coupling_diagonal(lattice)
            self.schedule = schedule if schedule is not None else params.schedule
        self.mag_diag = magnetization_diagonal(self.n_sites)

    def apply_at(self, t: float):
        h_x, h_z = self.schedule(t)
        return self.apply_with_fields(h_x, h_z)

    def apply_with_fields(self, h_x: float, h_z: float):
        def apply(psi):
            return apply_hamiltonian(
                psi, self.n_sites, self.static_diag, self.mag_diag, h_x, h_z
            )

        return apply

    def expectation(self, psi: np.ndarray, t: float) -> float:
        return float(np.vdot(psi, self.apply_at(t)(psi)).real)

    def dense_matrix(self) -> np.ndarray:
        """Explicit matrix at t = 0 fields; test/oracle use only."""
        dim = 2**self.n_sites
        h_x, h_z = self.schedule(0.0)
        apply = self.apply_with_fields(h_x, h_z)
        unit = np.zeros(dim, dtype=complex)
        cols = []
        for k in range(dim):
            unit[k] = 1.0
            cols.append(apply(unit.copy()))
            unit[k] = 0.0
        return np.stack(cols, axis=1)


def measure_state(state: DenseState, lattice: LatticeSpec, pairs=()):
    """Magnetizations and raw two-point functions from the amplitudes."""
    prob = np.abs(state.amplitudes) ** 2
    n = state.n_sites
    mag = np.empty(n)
    for i in range(n):
        lead = 2 ** (n - 1 - i)
        by_bit = prob.reshape(lead, 2, -1).sum(axis=(0, 2))
        mag[i] = by_bit[1] - by_bit[0]
    raw = {
        (a, b): float(prob @ _pair_zz_signs(n, a, b)) for a, b in pairs
    }
    return mag, raw


def measure(state: DenseState, lattice: LatticeSpec):
    """(mag, corr_line, corr_nn) of a normalized dense state."""
    line_pairs = lattice.corr_line_pairs()
    mag, raw = measure_state(state, lattice, pairs=line_pairs)
    corr_line = np.array([
        connected_correlation(raw[(a, b)], mag[a], mag[b]) for a, b in line_pairs
    ])
    corr_nn = corr_line[0] if corr_line.size else 0.0
    return mag, corr_line, float(corr_nn)


def evolve(state: DenseState, lattice: LatticeSpec,
           params: IsingParams | RydbergParams, schedule: Schedule | None = None,
           dt: float = 0.01, t_record=(), krylov_tol: float = 1e-12) -> ObservableSeries:
    """Evolve through the schedule, recording observables at ``t_record``.

    The state is advanced in place.  ``error_record`` accumulates the
    per-step Krylov residual bounds.
    """
    if dt > 0.05:
        raise MemoryGuardError(f"dt = {dt} exceeds the guard 0.05/J")
    ham = DenseHamiltonian(lattice, params, schedule)
    sched = ham.schedule
    grid, record_idx = time_grid(sched.t_f, dt, t_record)

    line_pairs = lattice.corr_line_pairs()
    orbit_pairs = correlation_pair_orbit(lattice)
    all_pairs = sorted(set(line_pairs) | set(orbit_pairs))
    recorder = SeriesRecorder(pair_keys=orbit_pairs)

    err_accum = 0.0

    def record(t):
        mag, raw = measure_state(state, lattice, pairs=all_pairs)
        corr = {
            pair: connected_correlation(raw[pair], mag[pair[0]], mag[pair[1]])
            for pair in all_pairs
        }
        corr_line = np.array([corr[p] for p in line_pairs])
        recorder.add(
            t, mag, corr_line,
            corr_line[0] if corr_line.size else 0.0,
            err_accum,
            pair_values=[corr[p] for p in orbit_pairs],
        )

    if 0 in record_idx:
        record(grid[0])
    for k in range(len(grid) - 1):
        t0, t1 = grid[k], grid[k + 1]
        step = t1 - t0
        apply = ham.apply_at(t0 + 0.5 * step)
        state.amplitudes, err = expm_krylov(
            apply, state.amplitudes, -1j * step, tol=krylov_tol
        )
        err_accum += err
        if k + 1 in record_idx:
            record(t1)
    return recorder.finalize(_metadata(lattice, sched, dt, params))


def _metadata(lattice, sched, dt, params) -> dict:
    meta = {
        "engine": "exact",
        "rows": lattice.rows,
        "cols": lattice.cols,
        "dt": dt,
        "schedule": sched.descriptor or {"kind": "custom", "t_f": sched.t_f},
    }
    if isinstance(params, IsingParams):
        meta["sign"] = params.sign
        meta["J"] = params.J
    else:
        meta["model"] = "rydberg"
        meta["c6"] = params.c6
        meta["spacing"] = params.spacing
    return meta


def run_protocol(lattice: LatticeSpec, schedule: Schedule, *, dt: float = 0.01,
                 t_record=(), sign: int = +1, J: float = 1.0,
                 params: IsingParams | RydbergParams | None = None,
                 krylov_tol: float = 1e-12) -> ObservableSeries:
    """Polarized initial state evolved through the schedule."""
    if params is None:
        params = IsingParams(J=J, sign=sign)
    state = init_polarized(lattice.n_sites)
    return evolve(state, lattice, params, schedule, dt=dt, t_record=t_record,
                  krylov_tol=krylov_tol)
