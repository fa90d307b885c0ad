"""Time-dependent field protocols.

A :class:`Schedule` is a piecewise-linear trace of the transverse and
longitudinal fields ``(h_x(t), h_z(t))``.  All times are in units of ``1/J``
and all fields in units of ``J``; the coupling is set to 1 internally.

Two protocol families are provided:

* annealing sweeps with three segments (rise of ``h_x``, sweep of ``h_z``,
  fall of ``h_x``), entering the ordered phase either from the top
  (variant I) or from the side (variant II);
* quenches, i.e. constant fields switched on at ``t = 0``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, ScheduleError

_T_EPS = 1e-9

ANNEAL_DEFAULTS = {
    "I": {"h_x_max": 3.5, "t_rise": 1.5, "t_sweep": 1.5},
    "II": {"h_x_max": 0.5, "t_rise": 1.5, "t_fall": 1.5},
}
H_Z_INITIAL = -8.0
H_Z_FINAL = 0.0


@dataclass(frozen=True)
class Schedule:
    """Piecewise-linear field schedule defined by (t, h_x, h_z) knots."""

    knots: tuple[tuple[float, float, float], ...]
    descriptor: dict | None = None

    def __post_init__(self):
        times = [k[0] for k in self.knots]
        if len(times) < 2:
            raise ScheduleError("a schedule needs at least two knots")
        if abs(times[0]) > _T_EPS:
            raise ScheduleError(f"first knot must sit at t = 0, got {times[0]}")
        if any(t1 - t0 <= 0 for t0, t1 in zip(times, times[1:])):
            raise ScheduleError("knot times must be strictly increasing")

    @property
    def t_f(self) -> float:
        return self.knots[-1][0]

    def __call__(self, t: float) -> tuple[float, float]:
        return schedule_eval(self, t)

    def fields_at(self, t):
        """Vectorized evaluation; ``t`` may be an array within [0, t_f]."""
        t = np.asarray(t, dtype=float)
        if np.any(t < -_T_EPS) or np.any(t > self.t_f + _T_EPS):
            raise DomainError(
                f"schedule evaluated outside [0, {self.t_f}]: t = {t}"
            )
        tc = np.clip(t, 0.0, self.t_f)
        knot_t = np.array([k[0] for k in self.knots])
        h_x = np.interp(tc, knot_t, [k[1] for k in self.knots])
        h_z = np.interp(tc, knot_t, [k[2] for k in self.knots])
        return h_x, h_z


def schedule_eval(s: Schedule, t: float) -> tuple[float, float]:
    """Fields at time ``t``; linear between knots, exact at knots."""
    h_x, h_z = s.fields_at(t)
    return float(h_x), float(h_z)


def make_anneal(
    variant: str,
    *,
    t_rise: float | None = None,
    t_sweep: float | None = None,
    t_fall: float | None = None,
    h_x_max: float | None = None,
    h_z0: float = H_Z_INITIAL,
    h_zf: float = H_Z_FINAL,
) -> Schedule:
    """Three-segment annealing sweep.

    Segment 1 (``t_rise``): h_x ramps 0 -> h_x_max at h_z = h_z0.
    Segment 2 (``t_sweep``): h_z ramps h_z0 -> h_zf at h_x = h_x_max.
    Segment 3 (``t_fall``): h_x ramps h_x_max -> 0 at h_z = h_zf.

    Variant I fixes t_rise = t_sweep = 1.5 and h_x_max = 3.5 with the fall
    time as the free rate parameter; variant II fixes t_rise = t_fall = 1.5
    and h_x_max = 0.5 with the sweep time free.
    """
    variant = variant.upper().removeprefix("ANNEAL-")
    if variant not in ANNEAL_DEFAULTS:
        raise ScheduleError(f"unknown anneal variant {variant!r}; expected 'I' or 'II'")
    defaults = ANNEAL_DEFAULTS[variant]
    t_rise = defaults.get("t_rise") if t_rise is None else t_rise
    t_sweep = defaults.get("t_sweep") if t_sweep is None else t_sweep
    t_fall = defaults.get("t_fall") if t_fall is None else t_fall
    h_x_max = defaults["h_x_max"] if h_x_max is None else h_x_max
    missing = [n for n, v in [("t_rise", t_rise), ("t_sweep", t_sweep), ("t_fall", t_fall)] if v is None]
    if missing:
        raise ScheduleError(f"anneal {variant} needs {', '.join(missing)}")
    for name, value in [("t_rise", t_rise), ("t_sweep", t_sweep), ("t_fall", t_fall)]:
        if value <= 0:
            raise ScheduleError(f"{name} must be positive, got {value}")

    t1 = t_rise
    t2 = t_rise + t_sweep
    t3 = t_rise + t_sweep + t_fall
    knots = (
        (0.0, 0.0, h_z0),
        (t1, h_x_max, h_z0),
        (t2, h_x_max, h_zf),
        (t3, 0.0, h_zf),
    )
    descriptor = {
        "kind": f"anneal-{variant}",
        "t_rise": t_rise,
        "t_sweep": t_sweep,
        "t_fall": t_fall,
        "h_x_max": h_x_max,
        "h_z0": h_z0,
        "h_zf": h_zf,
    }
    return Schedule(knots=knots, descriptor=descriptor)


def make_quench(h_x: float, h_z: float, t_f: float) -> Schedule:
    """Constant fields on [0, t_f]."""
    if t_f <= 0:
        raise ScheduleError(f"quench duration must be positive, got {t_f}")
    descriptor = {"kind": "quench", "h_x": h_x, "h_z": h_z, "t_f": t_f}
    return Schedule(knots=((0.0, h_x, h_z), (t_f, h_x, h_z)), descriptor=descriptor)


def time_grid(t_f: float, dt: float, t_record) -> tuple[list[float], set[int]]:
    """Integration grid hitting every record time exactly.

    Returns the ordered grid times (starting at 0, ending at t_f) and the set
    of grid indices at which observables are recorded.  Steps never exceed
    ``dt``; record times must lie within [0, t_f].
    """
    if dt <= 0:
        raise ScheduleError(f"dt must be positive, got {dt}")
    t_record = sorted(float(t) for t in t_record)
    if t_record and (t_record[0] < -_T_EPS or t_record[-1] > t_f + _T_EPS):
        raise ScheduleError(
            f"record times {t_record[0]}..{t_record[-1]} outside [0, {t_f}]"
        )
    n_steps = int(np.ceil(t_f / dt - _T_EPS))
    marks = {round(k * dt, 12) for k in range(n_steps)}
    marks.update(round(t, 12) for t in t_record)
    marks.add(0.0)
    marks.add(round(t_f, 12))
    grid = sorted(m for m in marks if -_T_EPS < m < t_f + _T_EPS)
    if grid[-1] != round(t_f, 12):
        grid.append(round(t_f, 12))
    record_keys = {round(t, 12) for t in t_record}
    record_idx = {i for i, t in enumerate(grid) if t in record_keys}
    return grid, record_idx
