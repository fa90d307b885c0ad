"""Self-describing delimited result files.

A result file is UTF-8 text: a header of ``# key: value`` lines (the last
one naming every column) followed by tab-separated numeric records, one per
recorded time, at 17 significant digits so that values round-trip through
text bit-exactly.  The header echoes the full run configuration as
canonical JSON; wall time lives in the header only, keeping bodies
byte-reproducible for identical configurations.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import ParseError
from .observables import ObservableSeries

SCHEMA_VERSION = 1
_FMT = "%.17g"


@dataclass
class ResultFile:
    """Parsed result file: header metadata plus the observable series."""

    series: ObservableSeries
    header: dict

    @property
    def engine(self) -> str:
        return str(self.header.get("engine", "unknown"))


def _pair_name(pair) -> str:
    return f"corr[{pair[0]}-{pair[1]}]"


def _columns(series: ObservableSeries) -> list[str]:
    n = series.n_sites
    cols = ["t"] + [f"mag[{i}]" for i in range(n)]
    cols += [f"corr_line[{k}]" for k in range(series.corr_line.shape[1])]
    cols += ["corr_nn", "err"]
    if series.corr_pairs is not None:
        cols += [_pair_name(p) for p in sorted(series.corr_pairs)]
    if series.mag_stderr is not None:
        cols += [f"stderr_mag[{i}]" for i in range(n)]
    if series.corr_line_stderr is not None:
        cols += [f"stderr_corr_line[{k}]" for k in range(series.corr_line.shape[1])]
    return cols


def format_body(series: ObservableSeries) -> str:
    """The delimited record block (no header); deterministic for a series."""
    pair_keys = sorted(series.corr_pairs) if series.corr_pairs is not None else []
    lines = []
    for k in range(len(series.times)):
        row = [series.times[k]]
        row += list(series.mag[k])
        row += list(series.corr_line[k])
        row += [series.corr_nn[k], series.error_record[k]]
        row += [series.corr_pairs[p][k] for p in pair_keys]
        if series.mag_stderr is not None:
            row += list(series.mag_stderr[k])
        if series.corr_line_stderr is not None:
            row += list(series.corr_line_stderr[k])
        lines.append("\t".join(_FMT % v for v in row))
    return "\n".join(lines) + ("\n" if lines else "")


def write_result(path, series: ObservableSeries, config: dict | None = None,
                 wall_time: float | None = None) -> None:
    """Write header plus body to ``path``."""
    header_lines = [
        f"# tfim2d-result v{SCHEMA_VERSION}",
        f"# engine: {series.metadata.get('engine', 'unknown')}",
        f"# metadata: {json.dumps(series.metadata, sort_keys=True, default=str)}",
    ]
    if config is not None:
        header_lines.append(f"# config: {json.dumps(config, sort_keys=True, default=str)}")
    if wall_time is not None:
        header_lines.append(f"# wall_time_s: {wall_time:.3f}")
    header_lines.append("# columns: " + "\t".join(_columns(series)))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(header_lines) + "\n")
        fh.write(format_body(series))


def read_result(path) -> ResultFile:
    """Parse a result file back into a series; inverse of write_result."""
    header: dict = {}
    columns: list[str] = []
    rows: list[list[float]] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            if line.startswith("#"):
                body = line[1:].strip()
                if lineno == 1:
                    if not body.startswith("tfim2d-result"):
                        raise ParseError("not a tfim2d result file", line=lineno)
                    header["schema"] = body
                    continue
                if ":" not in body:
                    raise ParseError(f"malformed header line {body!r}", line=lineno)
                key, value = body.split(":", 1)
                key, value = key.strip(), value.strip()
                if key in ("metadata", "config"):
                    try:
                        header[key] = json.loads(value)
                    except json.JSONDecodeError as exc:
                        raise ParseError(f"bad JSON in {key}: {exc}", line=lineno) from exc
                elif key == "columns":
                    columns = value.split("\t")
                else:
                    header[key] = value
                continue
            if not columns:
                raise ParseError("data before the columns header", line=lineno)
            parts = line.split("\t")
            if len(parts) != len(columns):
                raise ParseError(
                    f"expected {len(columns)} fields, got {len(parts)}", line=lineno
                )
            try:
                rows.append([float(p) for p in parts])
            except ValueError as exc:
                raise ParseError(str(exc), line=lineno) from exc

    if not columns:
        raise ParseError("missing columns header", line=0)
    data = np.asarray(rows, dtype=float) if rows else np.empty((0, len(columns)))
    by_name = {name: data[:, k] for k, name in enumerate(columns)}

    n = sum(1 for c in columns if c.startswith("mag["))
    n_line = sum(1 for c in columns if c.startswith("corr_line["))
    pair_cols = [c for c in columns if c.startswith("corr[")]
    corr_pairs = None
    if pair_cols:
        corr_pairs = {}
        for c in pair_cols:
            a, b = c[len("corr["):-1].split("-")
            corr_pairs[(int(a), int(b))] = by_name[c]
    stderr_mag_cols = [c for c in columns if c.startswith("stderr_mag[")]
    stderr_line_cols = [c for c in columns if c.startswith("stderr_corr_line[")]

    metadata = header.get("metadata", {})
    if "engine" not in metadata and "engine" in header:
        metadata = dict(metadata, engine=header["engine"])
    series = ObservableSeries(
        times=by_name["t"],
        mag=np.stack([by_name[f"mag[{i}]"] for i in range(n)], axis=1)
        if n else np.empty((len(rows), 0)),
        corr_line=np.stack([by_name[f"corr_line[{k}]"] for k in range(n_line)], axis=1)
        if n_line else np.empty((len(rows), 0)),
        corr_nn=by_name["corr_nn"],
        error_record=by_name["err"],
        metadata=metadata,
        corr_pairs=corr_pairs,
        mag_stderr=np.stack([by_name[c] for c in stderr_mag_cols], axis=1)
        if stderr_mag_cols else None,
        corr_line_stderr=np.stack([by_name[c] for c in stderr_line_cols], axis=1)
        if stderr_line_cols else None,
    )
    return ResultFile(series=series, header=header)
