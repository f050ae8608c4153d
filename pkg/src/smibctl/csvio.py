"""CSV emission and parsing for traces, tables and frequency responses.

Numbers are written with 15 significant digits. A trace file may begin with
``#`` metadata lines (``# key = value``), which gnuplot and the reader skip.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from .numerics import Trace

__all__ = [
    "fmt",
    "write_trace_csv",
    "read_trace_csv",
    "write_rows_csv",
    "read_rows_csv",
    "write_bode_csv",
    "write_json",
]


def fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return format(float(v), ".15g")
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    return str(v)


def write_trace_csv(path, trace: Trace, state_names=(), meta: dict | None = None) -> Path:
    """Write ``time``, the channels and the named states, one sample per row."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    chans = list(trace.channels)
    names = list(state_names)[: trace.states.shape[1]] if len(trace) else []
    with path.open("w", newline="", encoding="utf-8") as fh:
        for k, v in (meta or {}).items():
            fh.write(f"# {k} = {json.dumps(v)}\n")
        w = csv.writer(fh)
        w.writerow(["time"] + chans + [f"x_{n}" for n in names])
        cols = [trace.times] + [np.asarray(trace[c]) for c in chans]
        cols += [trace.states[:, i] for i in range(len(names))]
        for row in zip(*cols):
            w.writerow([fmt(float(v)) for v in row])
    return path


def read_trace_csv(path) -> tuple[dict, dict[str, np.ndarray]]:
    """Metadata and columns of a file written by :func:`write_trace_csv`."""
    meta: dict = {}
    with Path(path).open(encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    body = []
    for line in lines:
        if line.startswith("#"):
            k, _, v = line[1:].partition("=")
            meta[k.strip()] = json.loads(v)
        elif line.strip():
            body.append(line)
    reader = csv.reader(body)
    header = next(reader)
    data = np.array([[float(x) for x in row] for row in reader]).reshape(-1, len(header))
    return meta, {h: data[:, i] for i, h in enumerate(header)}


def write_rows_csv(path, rows: list[dict]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fields: list[str] = []
    for r in rows:
        fields += [k for k in r if k not in fields]
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(fields)
        for r in rows:
            w.writerow([fmt(r.get(k, "")) for k in fields])
    return path


def read_rows_csv(path) -> list[dict[str, str]]:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def write_bode_csv(path, omegas, responses: dict[str, np.ndarray]) -> Path:
    """Columns ``omega`` and, per channel, re, im, mag_db and phase_deg."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = ["omega"]
    cols = [np.asarray(omegas, dtype=float)]
    for name, H in responses.items():
        H = np.asarray(H)
        header += [f"{name}_re", f"{name}_im", f"{name}_mag_db", f"{name}_phase_deg"]
        with np.errstate(divide="ignore"):
            cols += [H.real, H.imag, 20.0 * np.log10(np.abs(H)), np.degrees(np.angle(H))]
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in zip(*cols):
            w.writerow([fmt(float(v)) for v in row])
    return path


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, np.ndarray):
        return _jsonable(v.tolist())
    if isinstance(v, (np.floating, float)):
        v = float(v)
        return v if math.isfinite(v) else str(v)
    if isinstance(v, np.bool_):
        return bool(v)
    if isinstance(v, np.integer):
        return int(v)
    if v is None or isinstance(v, (str, int, bool)):
        return v
    return str(v)


def write_json(path, obj) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path
