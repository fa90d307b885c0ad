"""Shared brute-force oracles for the test suite.

The dense builders here are intentionally independent of the package's
engines: operators are assembled with explicit Kronecker products so that
engine output can be checked against textbook linear algebra.
"""

from __future__ import annotations

import numpy as np

SZ = np.array([[-1.0, 0.0], [0.0, 1.0]])  # index 0 = spin down
SX = np.array([[0.0, 1.0], [1.0, 0.0]])


def op_at(op: np.ndarray, site: int, n_sites: int) -> np.ndarray:
    """Operator acting on one site; bit ``site`` of the index is that site."""
    out = np.eye(1)
    for q in range(n_sites):
        out = np.kron(op if q == site else np.eye(2), out)
    return out


def kron_hamiltonian(lattice, h_x: float, h_z: float, sign: int = +1,
                     J: float = 1.0, site_of_bit=None) -> np.ndarray:
    """Brute-force dense Hamiltonian.

    ``site_of_bit`` remaps lattice sites onto index bits (used to compare
    against chain-ordered representations); identity by default.
    """
    n = lattice.n_sites
    if site_of_bit is None:
        bit_of_site = {s: s for s in range(n)}
    else:
        bit_of_site = {site: bit for bit, site in enumerate(site_of_bit)}
    dim = 2**n
    ham = np.zeros((dim, dim))
    for a, b in lattice.nn_edges:
        ham += sign * J * op_at(SZ, bit_of_site[a], n) @ op_at(SZ, bit_of_site[b], n)
    for s in range(n):
        ham += h_x * op_at(SX, bit_of_site[s], n) + h_z * op_at(SZ, bit_of_site[s], n)
    return ham


def dense_mag(psi: np.ndarray, n_sites: int) -> np.ndarray:
    prob = np.abs(psi) ** 2
    idx = np.arange(2**n_sites)
    return np.array([
        prob @ (2.0 * ((idx >> i) & 1) - 1.0) for i in range(n_sites)
    ])
