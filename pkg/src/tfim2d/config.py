"""Run configuration: schema, strict validation, schedule construction.

Configurations are YAML with explicit engine sections.  Unknown keys are
rejected everywhere: a silently ignored typo in a knob name would
invalidate a benchmark run.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .errors import ConfigError
from .lattice import LatticeSpec, build_grid
from .schedule import Schedule, make_anneal, make_quench

ENGINES = ("exact", "mps", "peps-bp", "smf", "tw")

_TOP_KEYS = {"engine", "L", "shape", "protocol", "dt", "record", "output",
             "sign", "J", "orientation", *ENGINES}
_PROTOCOL_KEYS = {
    "quench": {"kind", "h_x", "h_z", "t_f"},
    "anneal-I": {"kind", "t_rise", "t_sweep", "t_fall", "h_x_max", "h_z0", "h_zf"},
    "anneal-II": {"kind", "t_rise", "t_sweep", "t_fall", "h_x_max", "h_z0", "h_zf"},
    "custom": {"kind", "file"},
}
_RECORD_KEYS = {"times", "start", "stop", "step"}
_ENGINE_KEYS = {
    "exact": {"krylov_tol"},
    "mps": {"chi_max", "svd_cutoff", "krylov_tol"},
    "peps-bp": {"chi2d", "bp_tol", "bp_max_iter", "bp_damping"},
    "smf": set(),
    "tw": {"n_t", "seed", "exhaustive"},
}
_MAX_SITES = {"exact": 16}
_MAX_SITES_DEFAULT = 36


@dataclass
class RunConfig:
    """Validated run description ready for dispatch."""

    engine: str
    rows: int
    cols: int
    protocol: dict
    dt: float
    record_times: np.ndarray
    output: str | None
    sign: int = +1
    J: float = 1.0
    orientation: str = "row"
    knobs: dict = field(default_factory=dict)
    raw: dict = field(default_factory=dict)

    def lattice(self) -> LatticeSpec:
        return build_grid(self.rows, self.cols, orientation=self.orientation)

    def schedule(self) -> Schedule:
        return build_schedule(self.protocol)


def _reject_unknown(mapping: dict, allowed: set, context: str):
    unknown = sorted(set(mapping) - allowed)
    if unknown:
        raise ConfigError(f"unknown {context} key(s): {', '.join(unknown)}")


def build_schedule(protocol: dict) -> Schedule:
    kind = protocol.get("kind")
    if kind not in _PROTOCOL_KEYS:
        raise ConfigError(
            f"unknown protocol kind {kind!r}; expected one of {sorted(_PROTOCOL_KEYS)}"
        )
    _reject_unknown(protocol, _PROTOCOL_KEYS[kind], f"protocol ({kind})")
    if kind == "quench":
        if "t_f" not in protocol:
            raise ConfigError("quench protocol requires t_f")
        return make_quench(
            float(protocol.get("h_x", 0.0)),
            float(protocol.get("h_z", 0.0)),
            float(protocol["t_f"]),
        )
    if kind in ("anneal-I", "anneal-II"):
        variant = kind.split("-")[1]
        kwargs = {
            key: float(protocol[key])
            for key in ("t_rise", "t_sweep", "t_fall", "h_x_max")
            if key in protocol
        }
        if "h_z0" in protocol:
            kwargs["h_z0"] = float(protocol["h_z0"])
        if "h_zf" in protocol:
            kwargs["h_zf"] = float(protocol["h_zf"])
        return make_anneal(variant, **kwargs)
    return read_schedule_file(protocol["file"])


def read_schedule_file(path) -> Schedule:
    """Custom schedule: one ``t h_x h_z`` knot per non-comment line."""
    knots = []
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read schedule file {path}: {exc}") from exc
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 3:
            raise ConfigError(
                f"{path}:{lineno}: expected 't h_x h_z', got {line!r}"
            )
        knots.append(tuple(float(p) for p in parts))
    if len(knots) < 2:
        raise ConfigError(f"schedule file {path} needs at least two knots")
    return Schedule(
        knots=tuple(knots),
        descriptor={"kind": "custom", "file": str(path), "t_f": knots[-1][0]},
    )


def _record_times(spec, t_f: float) -> np.ndarray:
    if spec is None:
        raise ConfigError("a record block is required")
    if not isinstance(spec, dict):
        raise ConfigError("record must be a mapping")
    _reject_unknown(spec, _RECORD_KEYS, "record")
    if "times" in spec:
        times = np.asarray([float(t) for t in spec["times"]])
    else:
        missing = {"stop", "step"} - set(spec)
        if missing:
            raise ConfigError(f"record needs {sorted(missing)} (or an explicit times list)")
        start = float(spec.get("start", 0.0))
        stop = float(spec["stop"])
        step = float(spec["step"])
        if step <= 0:
            raise ConfigError("record step must be positive")
        count = int(np.floor((stop - start) / step + 1e-9)) + 1
        times = start + step * np.arange(count)
    if times.size == 0:
        raise ConfigError("record times are empty")
    if np.any(np.diff(times) <= 0):
        raise ConfigError("record times must be strictly increasing")
    if times[0] < 0 or times[-1] > t_f + 1e-9:
        raise ConfigError(f"record times must lie within [0, {t_f}]")
    return times


def parse_config(data: dict) -> RunConfig:
    """Validate a config mapping; raises ConfigError on any violation."""
    if not isinstance(data, dict):
        raise ConfigError("config root must be a mapping")
    _reject_unknown(data, _TOP_KEYS, "config")

    engine = data.get("engine")
    if engine not in ENGINES:
        raise ConfigError(f"unknown engine {engine!r}; expected one of {ENGINES}")

    if ("L" in data) == ("shape" in data):
        raise ConfigError("exactly one of 'L' or 'shape' is required")
    if "L" in data:
        L = int(data["L"])
        rows = cols = L
    else:
        shape = data["shape"]
        if not (isinstance(shape, (list, tuple)) and len(shape) == 2):
            raise ConfigError("shape must be a [rows, cols] pair")
        rows, cols = int(shape[0]), int(shape[1])
    n_sites = rows * cols
    limit = _MAX_SITES.get(engine, _MAX_SITES_DEFAULT)
    if n_sites > limit:
        raise ConfigError(
            f"{rows}x{cols} ({n_sites} sites) exceeds the {engine} guard of {limit} sites"
        )

    protocol = data.get("protocol")
    if not isinstance(protocol, dict):
        raise ConfigError("protocol block is required")
    schedule = build_schedule(protocol)

    if "dt" not in data:
        raise ConfigError("dt is required")
    dt = float(data["dt"])
    if dt <= 0:
        raise ConfigError("dt must be positive")

    record_times = _record_times(data.get("record"), schedule.t_f)

    sign = int(data.get("sign", +1))
    if sign not in (+1, -1):
        raise ConfigError(f"sign must be +1 or -1, got {sign}")

    for section in ENGINES:
        if section in data and section != engine:
            raise ConfigError(
                f"section {section!r} does not belong to engine {engine!r}"
            )
    knobs = data.get(engine) or {}
    if not isinstance(knobs, dict):
        raise ConfigError(f"engine section {engine!r} must be a mapping")
    _reject_unknown(knobs, _ENGINE_KEYS[engine], f"{engine} knob")

    orientation = str(data.get("orientation", "row"))
    if orientation not in ("row", "col"):
        raise ConfigError(f"orientation must be 'row' or 'col', got {orientation!r}")

    return RunConfig(
        engine=engine,
        rows=rows,
        cols=cols,
        protocol=dict(protocol),
        dt=dt,
        record_times=record_times,
        output=data.get("output"),
        sign=sign,
        J=float(data.get("J", 1.0)),
        orientation=orientation,
        knobs=dict(knobs),
        raw=dict(data),
    )


def load_config(path) -> RunConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"invalid YAML in {path}: {exc}") from exc
    return parse_config(data)
