"""Matrix-product-state evolution on the snake order via two-site TDVP.

The 2D Hamiltonian is compiled into an MPO along the snake with a small
finite-state automaton: a carry state per "open" sigma^z waiting for its
partner further down the chain (vertical lattice bonds reach up to 2L-1
sites on the snake).  Evolution is the standard two-site TDVP: a symmetric
left-right / right-left sweep of two-site effective exponentials with a
backward one-site step between updates, all solved with the Lanczos
exponential.  After every two-site update the bond is truncated by SVD and
the discarded weight is accumulated into the running truncation error
``eps_accum = sum over updates of sum_{i > chi} s_i^2``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .diagnostics import correlation_pair_orbit
from .errors import InvalidSizeError, MemoryGuardError
from .krylov import expm_krylov
from .lattice import LatticeSpec
from .observables import ObservableSeries, SeriesRecorder, connected_correlation
from .schedule import Schedule, time_grid

DEFAULT_CHI = 64
MAX_CHI = 256
DEFAULT_SVD_CUTOFF = 1e-12

SX = np.array([[0.0, 1.0], [1.0, 0.0]])
SZ = np.array([[-1.0, 0.0], [0.0, 1.0]])  # index 0 = |down>
ID2 = np.eye(2)


# ---------------------------------------------------------------------------
# MPO compilation
# ---------------------------------------------------------------------------


@dataclass
class MPOOperator:
    """MPO tensors in snake order, each of shape (wl, wr, p_out, p_in)."""

    tensors: list[np.ndarray]

    @property
    def n_sites(self) -> int:
        return len(self.tensors)

    @property
    def mpo_bond(self) -> int:
        return max(t.shape[0] for t in self.tensors)

    def dense_matrix(self) -> np.ndarray:
        """Explicit 2^N x 2^N matrix; oracle use only (N <= 12).

        Site k of the MPO chain acts on bit k of the basis index, i.e. the
        chain position is the fastest-varying index first.
        """
        if self.n_sites > 12:
            raise MemoryGuardError("dense MPO reconstruction limited to 12 sites")
        acc = self.tensors[0][0]  # (wr, p, p')
        for tensor in self.tensors[1:]:
            # acc: (w, P, P'), tensor: (w, wr, p, p') -> (wr, p*P, p'*P')
            acc = np.einsum("wab,wvpq->vpaqb", acc, tensor)
            v, p, a, q, b = acc.shape
            acc = acc.reshape(v, p * a, q * b)
        return acc[0]


def _snake_edges(lattice: LatticeSpec) -> list[tuple[int, int]]:
    """Lattice edges as (chain position a < b) pairs."""
    pos_of_site = {site: p for p, site in enumerate(lattice.snake_order)}
    edges = []
    for a, b in lattice.nn_edges:
        pa, pb = pos_of_site[a], pos_of_site[b]
        edges.append((min(pa, pb), max(pa, pb)))
    return sorted(edges)


def build_mpo(lattice: LatticeSpec, h_x: float, h_z: float, sign: int = +1,
              J: float = 1.0) -> MPOOperator:
    """Compile the Hamiltonian at fixed fields onto the snake order.

    The automaton states on each bond are: a "ready" state (identity so
    far), one carry state per open coupling origin crossing the bond, and a
    "done" state.  The bond dimension is the number of couplings crossing
    the chain bond plus two, at most 2L + 3 on a square lattice.
    """
    n = lattice.n_sites
    edges = _snake_edges(lattice)
    edge_set = set(edges)
    coupling = sign * J

    # Carry states per bond: origins of couplings still open across it.  A
    # single carry per origin serves all of its couplings (same operator and
    # weight); it branches into "done" at each terminus it passes.
    carries: list[list[int]] = [[] for _ in range(n + 1)]
    for a, b in edges:
        for bond in range(a + 1, b + 1):
            if a not in carries[bond]:
                carries[bond].append(a)
    for bond_states in carries:
        bond_states.sort()

    def states(bond: int) -> list:
        if bond == 0:
            return ["ready"]
        if bond == n:
            return ["done"]
        return ["ready"] + carries[bond] + ["done"]

    tensors = []
    for s in range(n):
        left = states(s)
        right = states(s + 1)
        w = np.zeros((len(left), len(right), 2, 2))
        lidx = {state: i for i, state in enumerate(left)}
        ridx = {state: i for i, state in enumerate(right)}
        if "ready" in lidx:
            if "ready" in ridx:
                w[lidx["ready"], ridx["ready"]] = ID2
            if "done" in ridx:
                w[lidx["ready"], ridx["done"]] = h_x * SX + h_z * SZ
            if s in ridx:  # site s opens at least one coupling
                w[lidx["ready"], ridx[s]] = SZ
        for origin in carries[s]:
            if (origin, s) in edge_set:
                w[lidx[origin], ridx["done"]] += coupling * SZ
            if origin in ridx:
                w[lidx[origin], ridx[origin]] = ID2
        if "done" in lidx and "done" in ridx:
            w[lidx["done"], ridx["done"]] = ID2
        tensors.append(w)
    return MPOOperator(tensors=tensors)


# ---------------------------------------------------------------------------
# MPS state
# ---------------------------------------------------------------------------


@dataclass
class MPSState:
    """Site tensors (Dl, 2, Dr) in snake order with truncation bookkeeping.

    Tensors left of ``canonical_center`` are left-orthogonal, tensors right
    of it right-orthogonal; ``eps_accum`` is the running sum of discarded
    singular-value weights.
    """

    tensors: list[np.ndarray]
    chi_max: int = DEFAULT_CHI
    svd_cutoff: float = DEFAULT_SVD_CUTOFF
    canonical_center: int = 0
    eps_accum: float = 0.0

    @property
    def n_sites(self) -> int:
        return len(self.tensors)

    @property
    def bond_dims(self) -> list[int]:
        return [t.shape[2] for t in self.tensors[:-1]]

    def norm(self) -> float:
        env = np.ones((1, 1), dtype=complex)
        for t in self.tensors:
            env = _transfer(env, t, t)
        return float(np.sqrt(env[0, 0].real))

    def copy(self) -> "MPSState":
        return MPSState(
            tensors=[t.copy() for t in self.tensors],
            chi_max=self.chi_max,
            svd_cutoff=self.svd_cutoff,
            canonical_center=self.canonical_center,
            eps_accum=self.eps_accum,
        )


def init_polarized_mps(n_sites: int, chi_max: int = DEFAULT_CHI,
                       svd_cutoff: float = DEFAULT_SVD_CUTOFF) -> MPSState:
    """All-down product MPS (trivially canonical, center at site 0)."""
    if not 1 <= chi_max <= MAX_CHI:
        raise InvalidSizeError(f"chi_max must be in 1..{MAX_CHI}, got {chi_max}")
    down = np.zeros((1, 2, 1), dtype=complex)
    down[0, 0, 0] = 1.0
    return MPSState(
        tensors=[down.copy() for _ in range(n_sites)],
        chi_max=chi_max,
        svd_cutoff=svd_cutoff,
    )


def _transfer(env, bra_t, ket_t, op=None):
    """Propagate a (bra_bond, ket_bond) environment through one site."""
    tmp = np.tensordot(env, ket_t, axes=(1, 0))  # (b, p, k')
    if op is not None:
        tmp = np.tensordot(tmp, op, axes=(1, 1))  # (b, k', p_out)
        tmp = tmp.transpose(0, 2, 1)
    return np.tensordot(bra_t.conj(), tmp, axes=([0, 1], [0, 1]))  # (b', k')


def _right_env(env_next, t):
    """Environment (bra_bond, ket_bond) of sites >= current, grown leftwards."""
    tmp = np.tensordot(t, env_next, axes=(2, 1))  # (k, p, b)
    return np.tensordot(t.conj(), tmp, axes=([1, 2], [1, 2]))  # (b, k)


def one_site_expectations(mps: MPSState, op: np.ndarray) -> np.ndarray:
    """<op_i> for every chain position, normalized by the state norm."""
    n = mps.n_sites
    lefts = [np.ones((1, 1), dtype=complex)]
    for t in mps.tensors:
        lefts.append(_transfer(lefts[-1], t, t))
    rights = [np.ones((1, 1), dtype=complex)] * (n + 1)
    for i in range(n - 1, -1, -1):
        rights[i] = _right_env(rights[i + 1], mps.tensors[i])
    norm_sq = lefts[n][0, 0].real
    values = np.empty(n)
    for i in range(n):
        env = _transfer(lefts[i], mps.tensors[i], mps.tensors[i], op)
        values[i] = (np.einsum("bk,bk->", env, rights[i + 1]) / norm_sq).real
    return values


def pair_expectations(mps: MPSState, pairs, op: np.ndarray) -> dict:
    """<op_a op_b> for chain-position pairs a < b, normalized."""
    n = mps.n_sites
    lefts = [np.ones((1, 1), dtype=complex)]
    for t in mps.tensors:
        lefts.append(_transfer(lefts[-1], t, t))
    rights = [np.ones((1, 1), dtype=complex)] * (n + 1)
    for i in range(n - 1, -1, -1):
        rights[i] = _right_env(rights[i + 1], mps.tensors[i])
    norm_sq = lefts[n][0, 0].real
    out = {}
    for a, b in pairs:
        if not 0 <= a < b < n:
            raise InvalidSizeError(f"invalid chain pair ({a}, {b})")
        env = _transfer(lefts[a], mps.tensors[a], mps.tensors[a], op)
        for i in range(a + 1, b):
            env = _transfer(env, mps.tensors[i], mps.tensors[i])
        env = _transfer(env, mps.tensors[b], mps.tensors[b], op)
        out[(a, b)] = (np.einsum("bk,bk->", env, rights[b + 1]) / norm_sq).real
    return out


def mps_to_dense(mps: MPSState, lattice: LatticeSpec | None = None) -> np.ndarray:
    """Contract to a dense vector; oracle use only (N <= 14).

    Without a lattice the amplitude index bit p is chain position p; with a
    lattice, bits are permuted to the row-major site convention of the dense
    engine.
    """
    n = mps.n_sites
    if n > 14:
        raise MemoryGuardError("dense conversion limited to 14 sites")
    acc = mps.tensors[0][0]  # (p0, D)
    for t in mps.tensors[1:]:
        acc = np.tensordot(acc, t, axes=(-1, 0))
    acc = acc[..., 0]
    # Axes are (p0, ..., p_{n-1}); bit p must be fastest-varying.
    vec = acc.transpose(tuple(range(n - 1, -1, -1))).ravel()
    if lattice is None:
        return vec
    chain_of_site = {site: p for p, site in enumerate(lattice.snake_order)}
    idx = np.arange(2**n)
    site_to_chain = np.zeros_like(idx)
    for site in range(n):
        bit = (idx >> site) & 1
        site_to_chain |= bit << chain_of_site[site]
    return vec[site_to_chain]


def isometry_defect(mps: MPSState) -> float:
    """Largest deviation from the expected canonical form."""
    worst = 0.0
    c = mps.canonical_center
    for i, t in enumerate(mps.tensors):
        dl, p, dr = t.shape
        if i < c:
            gram = np.tensordot(t.conj(), t, axes=([0, 1], [0, 1]))
            worst = max(worst, float(np.abs(gram - np.eye(dr)).max()))
        elif i > c:
            gram = np.tensordot(t, t.conj(), axes=([1, 2], [1, 2]))
            worst = max(worst, float(np.abs(gram - np.eye(dl)).max()))
    return worst




# ---------------------------------------------------------------------------
# Two-site TDVP
# ---------------------------------------------------------------------------


def _mpo_env_left(env, w, ket):
    """Grow a (bra, mpo, ket) environment by one site to the right."""
    tmp = np.tensordot(env, ket, axes=(2, 0))  # (b, wl, pi, k')
    tmp = np.tensordot(tmp, w, axes=([1, 2], [0, 3]))  # (b, k', wr, po)
    out = np.tensordot(ket.conj(), tmp, axes=([0, 1], [0, 3]))  # (b', k', wr)
    return out.transpose(0, 2, 1)


def _mpo_env_right(env, w, ket):
    """Grow a (bra, mpo, ket) environment by one site to the left."""
    tmp = np.tensordot(ket, env, axes=(2, 2))  # (k, pi, b, wr)
    tmp = np.tensordot(tmp, w, axes=([3, 1], [1, 3]))  # (k, b, wl, po)
    out = np.tensordot(ket.conj(), tmp, axes=([2, 1], [1, 3]))  # (b', k, wl)
    return out.transpose(0, 2, 1)


def _apply_heff2(left, w1, w2, right, theta):
    """Two-site effective Hamiltonian on theta (Dl, p1, p2, Dr)."""
    tmp = np.tensordot(left, theta, axes=(2, 0))  # (b, wl, p1, p2, k)
    tmp = np.tensordot(tmp, w1, axes=([1, 2], [0, 3]))  # (b, p2, k, wm, q1)
    tmp = np.tensordot(tmp, w2, axes=([3, 1], [0, 3]))  # (b, k, q1, wr, q2)
    tmp = np.tensordot(tmp, right, axes=([1, 3], [2, 1]))  # (b, q1, q2, b')
    return tmp


def _apply_heff1(left, w, right, m):
    """One-site effective Hamiltonian on m (Dl, p, Dr)."""
    tmp = np.tensordot(left, m, axes=(2, 0))  # (b, wl, p, k)
    tmp = np.tensordot(tmp, w, axes=([1, 2], [0, 3]))  # (b, k, wr, q)
    tmp = np.tensordot(tmp, right, axes=([1, 2], [2, 1]))  # (b, q, b')
    return tmp


def _robust_svd(mat):
    try:
        return np.linalg.svd(mat, full_matrices=False)
    except np.linalg.LinAlgError:
        from scipy.linalg import svd as scipy_svd

        return scipy_svd(mat, full_matrices=False, lapack_driver="gesvd")


def _split_theta(theta, chi_max, cutoff):
    """SVD split of a two-site tensor; returns (A, SVh, discarded_weight).

    The discarded weight is the squared singular-value tail relative to the
    full spectrum; the kept spectrum is renormalized so the state norm stays
    at one.
    """
    dl, p1, p2, dr = theta.shape
    u, s, vh = _robust_svd(theta.reshape(dl * p1, p2 * dr))
    total = float((s**2).sum())
    keep = int(np.sum(s > cutoff * s[0])) if s[0] > 0 else 1
    keep = max(1, min(keep, chi_max))
    discarded = float((s[keep:] ** 2).sum()) / total
    s_kept = s[:keep] / np.linalg.norm(s[:keep])
    a_left = u[:, :keep].reshape(dl, p1, keep)
    b_right = vh[:keep].reshape(keep, p2, dr)
    return a_left, s_kept, b_right, discarded


def tdvp2_step(mps: MPSState, mpo: MPOOperator, dt: float,
               krylov_tol: float = 1e-12) -> tuple[MPSState, float]:
    """One symmetric two-site TDVP step (in place).

    Left-to-right then right-to-left half sweeps; every two-site block is
    evolved forward by dt/2 and the intermediate one-site tensor backward,
    per the standard projector-splitting integrator.  Returns the state and
    the discarded weight accumulated over all updates of this step.
    """
    n = mps.n_sites
    if mps.canonical_center != 0:
        raise InvalidSizeError("tdvp2_step expects the canonical center at site 0")
    tensors = mps.tensors
    ws = mpo.tensors
    eps_step = 0.0

    if n == 1:
        left = np.ones((1, 1, 1), dtype=complex)
        m = tensors[0]
        flat, _ = expm_krylov(
            lambda v: _apply_heff1(left, ws[0], left, v.reshape(m.shape)).ravel(),
            m.ravel(), -1j * dt, tol=krylov_tol,
        )
        tensors[0] = flat.reshape(m.shape)
        return mps, 0.0

    half = 0.5 * dt
    boundary = np.ones((1, 1, 1), dtype=complex)
    rights: list[np.ndarray] = [boundary] * (n + 1)
    for i in range(n - 1, -1, -1):
        rights[i] = _mpo_env_right(rights[i + 1], ws[i], tensors[i])
    lefts: list[np.ndarray] = [boundary] * (n + 1)

    def evolve_theta(i, prefactor):
        nonlocal eps_step
        theta = np.tensordot(tensors[i], tensors[i + 1], axes=(2, 0))
        shape = theta.shape
        flat, _ = expm_krylov(
            lambda v: _apply_heff2(
                lefts[i], ws[i], ws[i + 1], rights[i + 2], v.reshape(shape)
            ).ravel(),
            theta.ravel(), prefactor, tol=krylov_tol,
        )
        a_left, s_kept, b_right, disc = _split_theta(
            flat.reshape(shape), mps.chi_max, mps.svd_cutoff
        )
        eps_step += disc
        return a_left, s_kept, b_right

    def evolve_site(i, m, prefactor):
        flat, _ = expm_krylov(
            lambda v: _apply_heff1(lefts[i], ws[i], rights[i + 1], v.reshape(m.shape)).ravel(),
            m.ravel(), prefactor, tol=krylov_tol,
        )
        return flat.reshape(m.shape)

    # Left-to-right half sweep.
    for i in range(n - 1):
        a_left, s_kept, b_right = evolve_theta(i, -1j * half)
        tensors[i] = a_left
        lefts[i + 1] = _mpo_env_left(lefts[i], ws[i], a_left)
        m = s_kept[:, None, None] * b_right
        if i < n - 2:
            m = evolve_site(i + 1, m, +1j * half)
        tensors[i + 1] = m
        mps.canonical_center = i + 1

    # Right-to-left half sweep.
    for i in range(n - 2, -1, -1):
        a_left, s_kept, b_right = evolve_theta(i, -1j * half)
        tensors[i + 1] = b_right
        rights[i + 1] = _mpo_env_right(rights[i + 2], ws[i + 1], b_right)
        m = a_left * s_kept[None, None, :]
        if i > 0:
            m = evolve_site(i, m, +1j * half)
        tensors[i] = m
        mps.canonical_center = i

    mps.eps_accum += eps_step
    return mps, eps_step


def run_protocol(lattice: LatticeSpec, schedule: Schedule, *, dt: float = 0.01,
                 chi_max: int = DEFAULT_CHI, t_record=(), sign: int = +1,
                 J: float = 1.0, svd_cutoff: float = DEFAULT_SVD_CUTOFF,
                 krylov_tol: float = 1e-12) -> ObservableSeries:
    """Evolve the polarized state through the schedule on the snake.

    The MPO is rebuilt at each step's midpoint time (only the one-site field
    terms change).  Recorded one- and two-point functions are exact MPS
    contractions; ``error_record`` carries the accumulated truncation error.
    """
    if dt > 0.05:
        raise InvalidSizeError(f"dt = {dt} exceeds the guard 0.05/J")
    n = lattice.n_sites
    mps = init_polarized_mps(n, chi_max=chi_max, svd_cutoff=svd_cutoff)
    grid, record_idx = time_grid(schedule.t_f, dt, t_record)

    chain_of_site = {site: p for p, site in enumerate(lattice.snake_order)}
    line_pairs = lattice.corr_line_pairs()
    orbit_pairs = correlation_pair_orbit(lattice)
    all_pairs = sorted(set(line_pairs) | set(orbit_pairs))
    chain_pairs = {
        pair: tuple(sorted((chain_of_site[pair[0]], chain_of_site[pair[1]])))
        for pair in all_pairs
    }
    recorder = SeriesRecorder(pair_keys=orbit_pairs)

    def record(t):
        mag_chain = one_site_expectations(mps, SZ)
        mag = np.empty(n)
        mag[list(lattice.snake_order)] = mag_chain
        raw = pair_expectations(mps, sorted(set(chain_pairs.values())), SZ)
        corr = {
            pair: connected_correlation(raw[chain_pairs[pair]], mag[pair[0]], mag[pair[1]])
            for pair in all_pairs
        }
        corr_line = np.array([corr[p] for p in line_pairs])
        recorder.add(
            t, mag, corr_line,
            corr_line[0] if corr_line.size else 0.0,
            mps.eps_accum,
            pair_values=[corr[p] for p in orbit_pairs],
        )

    if 0 in record_idx:
        record(grid[0])
    for k in range(len(grid) - 1):
        step = grid[k + 1] - grid[k]
        h_x, h_z = schedule(grid[k] + 0.5 * step)
        mpo = build_mpo(lattice, h_x, h_z, sign=sign, J=J)
        tdvp2_step(mps, mpo, step, krylov_tol=krylov_tol)
        if k + 1 in record_idx:
            record(grid[k + 1])

    meta = {
        "engine": "mps",
        "rows": lattice.rows,
        "cols": lattice.cols,
        "dt": dt,
        "chi_max": chi_max,
        "svd_cutoff": svd_cutoff,
        "sign": sign,
        "J": J,
        "orientation": lattice.orientation,
        "schedule": schedule.descriptor or {"kind": "custom", "t_f": schedule.t_f},
    }
    return recorder.finalize(meta)
