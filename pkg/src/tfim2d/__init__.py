"""Multi-engine simulator of 2D transverse-field Ising dynamics.

Engines: dense state-vector (oracle), MPS two-site TDVP on the snake,
square-lattice tensor network under belief propagation, and spin
mean-field / discrete truncated Wigner baselines.  Shared core: lattice
geometry, field schedules, observable series, cross-method discrepancy
metrics, D4 symmetry diagnostics, and Kibble-Zurek rescaling.
"""

from .lattice import LatticeSpec, build_grid, build_lattice
from .model import IsingParams, RydbergParams, build_rydberg
from .observables import (
    ObservableSeries,
    connected_correlation,
    epsilon_z,
    epsilon_zz,
)
from .schedule import Schedule, make_anneal, make_quench, schedule_eval

__all__ = [
    "IsingParams",
    "LatticeSpec",
    "ObservableSeries",
    "RydbergParams",
    "Schedule",
    "build_grid",
    "build_lattice",
    "build_rydberg",
    "connected_correlation",
    "epsilon_z",
    "epsilon_zz",
    "make_anneal",
    "make_quench",
    "schedule_eval",
]

__version__ = "0.1.0"
