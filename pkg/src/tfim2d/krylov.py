"""Lanczos-Krylov approximation of ``exp(prefactor * H) v`` for Hermitian H.

Used both by the dense oracle engine (H applied bitwise) and by the MPS
integrator (effective two-site/one-site Hamiltonians).  The subspace grows
until the standard a-posteriori residual estimate drops below tolerance;
vectors are fully reorthogonalized, which at the dimensions used here is
cheap and keeps the propagation unitary to machine precision.
"""

from __future__ import annotations

import numpy as np
from scipy.linalg import eigh_tridiagonal

from .errors import PropagationError

DEFAULT_TOL = 1e-12
MAX_KRYLOV_DIM = 40
_BREAKDOWN = 1e-14


def expm_krylov(apply_h, v: np.ndarray, prefactor: complex,
                tol: float = DEFAULT_TOL, max_dim: int = MAX_KRYLOV_DIM):
    """Return (w, err) with w ~ exp(prefactor*H) v and err the residual bound.

    ``apply_h`` maps a vector to H times that vector; H must be Hermitian.
    Raises PropagationError if the estimate has not converged at ``max_dim``.
    """
    v = np.ascontiguousarray(v, dtype=complex)
    norm_v = np.linalg.norm(v)
    if norm_v == 0.0:
        return v.copy(), 0.0
    dim = v.size
    max_dim = min(max_dim, dim)

    basis = np.empty((max_dim, dim), dtype=complex)
    basis[0] = v / norm_v
    alphas: list[float] = []
    betas: list[float] = []
    scale = None

    for m in range(max_dim):
        w = apply_h(basis[m]).astype(complex, copy=False).ravel()
        alpha = np.vdot(basis[m], w).real
        alphas.append(alpha)
        w = w - alpha * basis[m]
        if m > 0:
            w = w - betas[-1] * basis[m - 1]
        # Full reorthogonalization; without it norms drift at long times.
        overlap = basis[: m + 1].conj() @ w
        w = w - overlap @ basis[: m + 1]
        beta = np.linalg.norm(w)
        if scale is None:
            scale = max(abs(alpha) + beta, 1.0)

        u = _expm_tridiag(alphas, betas, prefactor)
        if beta <= _BREAKDOWN * scale or m + 1 == dim:
            # Invariant subspace: the result is exact within roundoff.
            return norm_v * (u @ basis[: m + 1]), 0.0
        err = beta * abs(u[-1])
        if err < tol:
            return norm_v * (u @ basis[: m + 1]), float(err)
        if m + 1 < max_dim:
            betas.append(beta)
            basis[m + 1] = w / beta

    raise PropagationError(
        f"Krylov exponential not converged at dimension {max_dim} (err ~ {err:.3e})"
    )


def _expm_tridiag(alphas, betas, prefactor) -> np.ndarray:
    """First column of exp(prefactor * T) for the tridiagonal Lanczos matrix."""
    if len(alphas) == 1:
        return np.array([np.exp(prefactor * alphas[0])])
    eigvals, eigvecs = eigh_tridiagonal(alphas, betas)
    return eigvecs @ (np.exp(prefactor * eigvals) * eigvecs[0])
