"""Time-series serialization (CSV and JSON) and observable evaluation."""

from __future__ import annotations

import csv
import io
import json
import sys
from pathlib import Path

import numpy as np

from .density import purity
from .errors import ThermoUnravelError


class OutputError(ThermoUnravelError, OSError):
    pass


def fmt(x: float) -> str:
    return f"{float(x):.12g}"


def rounded(x: float) -> float:
    """Value as it appears in the CSV output (12 significant digits)."""
    return float(fmt(x))


def observable_row(time: float, rho: np.ndarray, H: np.ndarray, observables, *, trace_raw: float, oracle_rho=None, distance=None) -> dict:
    """One output record.  ``trace_distance_to_oracle`` is omitted when no oracle is given."""
    row = {"time": time}
    for name in observables:
        if name == "energy":
            row[name] = float(np.einsum("ij,ji->", rho, H).real)
        elif name == "purity":
            row[name] = purity(rho)
        elif name == "trace_raw":
            row[name] = trace_raw
        elif name == "trace_distance_to_oracle":
            if oracle_rho is not None:
                row[name] = distance(rho, oracle_rho)
        elif name.startswith("population_"):
            n = int(name.split("_", 1)[1])
            row[name] = float(rho[n, n].real)
    return row


def columns_for(observables, with_oracle: bool) -> list[str]:
    cols = ["time"]
    for name in observables:
        if name == "trace_distance_to_oracle" and not with_oracle:
            continue
        cols.append(name)
    return cols


def render_timeseries(series, fmt_name: str, columns) -> str:
    if fmt_name == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(columns)
        for rec in series:
            w.writerow([fmt(rec[c]) if isinstance(rec[c], float) else rec[c] for c in columns])
        return buf.getvalue()
    if fmt_name == "json":
        out = [{c: (rounded(rec[c]) if isinstance(rec[c], float) else rec[c]) for c in columns} for rec in series]
        return json.dumps(out, indent=1) + "\n"
    raise ValueError(f"unknown format {fmt_name!r}")


def write_timeseries(series, fmt_name: str, path, columns=None) -> None:
    """Write records as CSV (header + 12-significant-digit values) or a JSON array.

    ``path=None`` or ``"-"`` writes to stdout.  ``columns`` defaults to the keys
    of the first record; an empty series needs it to produce a header.
    """
    series = list(series)
    if columns is None:
        columns = list(series[0].keys()) if series else ["time"]
    text = render_timeseries(series, fmt_name, columns)
    if path is None or str(path) == "-":
        sys.stdout.write(text)
        return
    try:
        Path(path).write_text(text)
    except OSError as exc:
        raise OutputError(f"cannot write {path}: {exc}") from None


def read_timeseries(path, fmt_name: str) -> list[dict]:
    text = Path(path).read_text()
    if fmt_name == "json":
        return json.loads(text)
    rows = list(csv.DictReader(io.StringIO(text)))
    return [{k: (int(v) if k == "jumps" else float(v)) for k, v in r.items()} for r in rows]


def sibling_path(path, tag: str) -> Path | None:
    """``out.csv`` -> ``out.<tag>.csv``."""
    if path is None or str(path) == "-":
        return None
    p = Path(path)
    return p.with_name(f"{p.stem}.{tag}{p.suffix}")
