"""JSON and CSV plumbing: extended-real encoding, 17-digit floats, file digests."""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import io
import json
import math
from pathlib import Path
from typing import Any

import numpy as np


def encode_float(x: float) -> float | str:
    x = float(x)
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    if math.isnan(x):
        return "nan"
    return x


def decode_float(v: Any) -> float:
    if isinstance(v, str):
        s = v.strip().lower()
        if s in ("inf", "+inf", "infinity"):
            return math.inf
        if s == "-inf":
            return -math.inf
        return float(s)
    if isinstance(v, bool) or v is None:
        raise ValueError(f"not a number: {v!r}")
    return float(v)


def encode_matrix(D: np.ndarray) -> list[list[float | str]]:
    return [[encode_float(v) for v in row] for row in np.asarray(D, float)]


def decode_matrix(rows) -> np.ndarray:
    return np.array([[decode_float(v) for v in row] for row in rows], dtype=float)


def jsonable(obj: Any) -> Any:
    """Convert numpy scalars/arrays, dataclasses and extended reals to plain JSON types."""
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        if hasattr(obj, "to_json"):
            return jsonable(obj.to_json())
        return {f.name: jsonable(getattr(obj, f.name)) for f in dataclasses.fields(obj)
                if not f.name.startswith("_")}
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return encode_float(obj)
    return obj


def _float_repr(x: float) -> str:
    s = "%.17g" % x
    if "e" not in s and "." not in s:
        s += ".0"
    return s


def dumps(obj: Any) -> str:
    """Deterministic JSON with every float written to 17 significant digits."""
    # the stdlib encoder only exposes float formatting through this private factory
    from json import encoder as _enc

    it = _enc._make_iterencode(
        {}, _no_default, _enc.py_encode_basestring, 2, _float_repr,
        ": ", ",", False, False, True,
    )
    return "".join(it(jsonable(obj), 0))


def _no_default(o):
    raise TypeError(f"cannot serialise {type(o).__name__}")


def sha256_file(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def read_field_csv(path: str | Path, n: int | None = None) -> np.ndarray:
    """CSV of ``point_index,value`` rows; a header line is tolerated."""
    pairs: dict[int, float] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.reader(fh):
            if not row or not row[0].strip():
                continue
            try:
                i = int(row[0])
            except ValueError:
                if not pairs:
                    continue  # header
                raise
            pairs[i] = decode_float(row[1])
    size = n if n is not None else (max(pairs) + 1 if pairs else 0)
    vals = np.full(size, np.nan)
    for i, v in pairs.items():
        if not 0 <= i < size:
            raise ValueError(f"field row index {i} out of range for {size} points")
        vals[i] = v
    if np.isnan(vals).any():
        missing = int(np.flatnonzero(np.isnan(vals))[0])
        raise ValueError(f"field file has no value for point {missing}")
    return vals


def write_field_csv(path: str | Path, values) -> None:
    buf = io.StringIO()
    for i, v in enumerate(np.asarray(values, float)):
        buf.write(f"{i},{_float_repr(float(v))}\n")
    Path(path).write_text(buf.getvalue(), encoding="utf-8")


def read_index_csv(path: str | Path) -> list[int]:
    out: list[int] = []
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.reader(fh):
            if row and row[0].strip():
                out.append(int(row[0]))
    return out


def read_matrix_csv(path: str | Path) -> np.ndarray:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = [[decode_float(v) for v in row] for row in csv.reader(fh) if row]
    if rows and len({len(r) for r in rows}) != 1:
        raise ValueError("ragged matrix CSV")
    return np.array(rows, dtype=float)


def read_edges_csv(path: str | Path) -> list[tuple[int, int, float]]:
    edges = []
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.reader(fh):
            if not row or not row[0].strip():
                continue
            try:
                edges.append((int(row[0]), int(row[1]), decode_float(row[2])))
            except ValueError:
                if edges:
                    raise
    return edges


def report_schema() -> dict:
    """The published JSON schema every CLI report conforms to."""
    from importlib.resources import files

    return json.loads(files("quasimetric").joinpath("report_schema.json").read_text(encoding="utf-8"))
