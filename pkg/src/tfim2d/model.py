"""Hamiltonian parameter sets.

The nearest-neighbor model couples ``sign * J`` on every lattice edge plus
global transverse/longitudinal fields from a schedule.  ``sign = +1`` is the
antiferromagnet; ``sign = -1`` gives the ferromagnetic picture, which for
``h_z = 0`` and the fully polarized initial state produces identical
``sigma^z`` observables (time-reversal equivalence).

The long-range variant models a Rydberg register: van der Waals pair
couplings ``J_ij = C6 / (4 r_ij^6)`` plus site-dependent longitudinal
offsets that vanish on average.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidSizeError
from .lattice import LatticeSpec
from .schedule import Schedule


@dataclass(frozen=True)
class IsingParams:
    J: float = 1.0
    sign: int = +1
    schedule: Schedule | None = None

    def __post_init__(self):
        if self.J <= 0:
            raise InvalidSizeError(f"J must be positive, got {self.J}")
        if self.sign not in (+1, -1):
            raise InvalidSizeError(f"sign must be +1 or -1, got {self.sign}")

    @property
    def coupling(self) -> float:
        return self.sign * self.J


@dataclass(frozen=True)
class RydbergParams:
    """All-pairs couplings J_ij and longitudinal offsets Delta_z,i."""

    c6: float
    spacing: float
    couplings: np.ndarray = field(repr=False)  # (N, N), symmetric, zero diagonal
    delta_z: np.ndarray = field(repr=False)  # (N,)

    @property
    def n_sites(self) -> int:
        return len(self.delta_z)

    def pair_list(self) -> list[tuple[int, int, float]]:
        """Ordered (i, j, J_ij) with i < j."""
        n = self.n_sites
        return [
            (i, j, float(self.couplings[i, j]))
            for i in range(n)
            for j in range(i + 1, n)
        ]


def build_rydberg(lattice: LatticeSpec | None, c6: float, spacing: float,
                  positions: np.ndarray | None = None) -> RydbergParams:
    """Build the long-range parameter set for a register.

    Site positions default to the lattice grid scaled by ``spacing``; an
    explicit ``positions`` array (n_sites, 2) overrides the lattice.  The
    offsets are ``Delta_z,i = sum_j J_ij - mean_l sum_j J_lj``, which sum to
    zero by construction.
    """
    if c6 <= 0 or spacing <= 0:
        raise InvalidSizeError("c6 and spacing must be positive")
    if positions is None:
        if lattice is None:
            raise InvalidSizeError("either a lattice or explicit positions is required")
        positions = lattice.positions() * spacing
    positions = np.asarray(positions, dtype=float)
    n = len(positions)
    diff = positions[:, None, :] - positions[None, :, :]
    r = np.sqrt((diff**2).sum(axis=-1))
    with np.errstate(divide="ignore"):
        couplings = c6 / (4.0 * r**6)
    np.fill_diagonal(couplings, 0.0)
    row_sums = couplings.sum(axis=1)
    delta_z = row_sums - row_sums.sum() / n
    return RydbergParams(c6=c6, spacing=spacing, couplings=couplings, delta_z=delta_z)
