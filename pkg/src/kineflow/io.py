"""Text formats: versioned JSON, CSV, and static SVG overlays.

JSON floats are written with 17 significant digits so values round-trip
exactly; output is byte-stable for equal inputs. All writes are atomic.
"""

from __future__ import annotations

import csv
import io as _io
import json
import math
import os
import tempfile
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from .errors import InvalidInputError
from .flow_analysis import FlowField

SCHEMA = "kineflow/1"
SCHEMA_MAJOR = 1


# -- JSON writing ------------------------------------------------------------


def _format_float(x: float) -> str:
    if not math.isfinite(x):
        raise InvalidInputError(f"cannot serialize non-finite value {x}")
    if x == int(x) and abs(x) < 1e16:
        # keep a float marker so readers see a real, not an int
        return f"{int(x)}.0" if x != 0 or math.copysign(1, x) > 0 else "-0.0"
    return format(x, ".17g")


def _encode(obj: Any, indent: int, level: int) -> str:
    if obj is None or isinstance(obj, (bool, np.bool_)):
        return json.dumps(None if obj is None else bool(obj))
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return _format_float(float(obj))
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, np.ndarray):
        obj = obj.tolist()
    pad = "\n" + " " * (indent * (level + 1))
    end = "\n" + " " * (indent * level)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{json.dumps(str(k))}: {_encode(v, indent, level + 1)}" for k, v in obj.items()]
        return "{" + pad + ("," + pad).join(items) + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        parts = [_encode(v, indent, level + 1) for v in obj]
        if all(not isinstance(v, (dict, list, tuple, np.ndarray)) for v in obj):
            return "[" + ", ".join(parts) + "]"
        return "[" + pad + ("," + pad).join(parts) + end + "]"
    if hasattr(obj, "value") and isinstance(obj.value, str):
        return json.dumps(obj.value)
    raise InvalidInputError(f"cannot serialize {type(obj).__name__}")


def dumps(obj: Any, indent: int = 1) -> str:
    return _encode(obj, indent, 0) + "\n"


def atomic_write(path, text: str) -> Path:
    """Write ``text`` to a temp file next to ``path`` and rename it into place."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def write_json(path, obj: Any) -> Path:
    return atomic_write(path, dumps(obj))


# -- JSON reading and validation ---------------------------------------------


def load_json(path) -> Any:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise InvalidInputError(f"{path}: {exc.strerror}") from None
    if not text.strip():
        raise InvalidInputError(f"{path}: file is empty")
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise InvalidInputError(f"{path}: invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from None


def _fail(path: str, msg: str):
    raise InvalidInputError(f"{path}: {msg}")


def check_schema(obj: Any, where: str = "$") -> None:
    if not isinstance(obj, dict):
        _fail(where, "expected an object")
    tag = obj.get("schema")
    if not isinstance(tag, str):
        _fail(f"{where}.schema", "missing schema tag")
    name, _, version = tag.partition("/")
    if name != "kineflow" or not version.split(".")[0].isdigit():
        _fail(f"{where}.schema", f"unrecognized schema {tag!r}")
    if int(version.split(".")[0]) != SCHEMA_MAJOR:
        _fail(f"{where}.schema", f"unsupported major version in {tag!r}; this reader handles {SCHEMA}")


def real(value: Any, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        _fail(path, f"expected a number, got {type(value).__name__}")
    if not math.isfinite(value):
        _fail(path, "expected a finite number")
    return float(value)


def integer(value: Any, path: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        _fail(path, f"expected an integer, got {type(value).__name__}")
    return value


def vector(value: Any, n: int, path: str) -> list[float]:
    if not isinstance(value, list) or len(value) != n:
        _fail(path, f"expected a list of {n} numbers")
    return [real(v, f"{path}[{i}]") for i, v in enumerate(value)]


def matrix(value: Any, path: str) -> np.ndarray:
    if not isinstance(value, list) or not value:
        _fail(path, "expected a non-empty list of rows")
    if not isinstance(value[0], list) or not value[0]:
        _fail(f"{path}[0]", "expected a non-empty row")
    cols = len(value[0])
    return np.array([vector(row, cols, f"{path}[{i}]") for i, row in enumerate(value)])


def flow_to_dict(field: FlowField, extra: dict | None = None) -> dict:
    out = {
        "schema": SCHEMA,
        "t": int(field.t),
        "samples": [{"x": x, "v": v, "w": w} for x, v, w in zip(field.x.tolist(), field.v.tolist(), field.w.tolist())],
    }
    if extra:
        out.update(extra)
    return out


def flow_from_dict(obj: Any, where: str = "$") -> FlowField:
    check_schema(obj, where)
    t = integer(obj.get("t"), f"{where}.t")
    samples = obj.get("samples")
    if not isinstance(samples, list):
        _fail(f"{where}.samples", "expected a list")
    if not samples:
        _fail(f"{where}.samples", "flow field has no samples")
    x, v, w = [], [], []
    for i, s in enumerate(samples):
        p = f"{where}.samples[{i}]"
        if not isinstance(s, dict):
            _fail(p, "expected an object")
        for key in s:
            if key not in ("x", "v", "w"):
                _fail(f"{p}.{key}", "unknown field")
        x.append(vector(s.get("x"), 2, f"{p}.x"))
        v.append(vector(s.get("v"), 2, f"{p}.v"))
        wi = real(s.get("w", 1.0), f"{p}.w")
        if wi < 0:
            _fail(f"{p}.w", "weight must be nonnegative")
        w.append(wi)
    return FlowField(t, np.array(x), np.array(v), np.array(w))


def read_flow(path) -> FlowField:
    try:
        return flow_from_dict(load_json(path), str(path))
    except InvalidInputError:
        raise
    except ValueError as exc:
        raise InvalidInputError(f"{path}: {exc}") from None


# -- CSV -----------------------------------------------------------------


def read_numeric_csv(path, columns: Sequence[str]) -> np.ndarray:
    """Rows of numbers; a header row naming ``columns`` is optional."""
    try:
        with open(path, encoding="utf-8", newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise InvalidInputError(f"{path}: {exc.strerror}") from None
    rows = [r for r in rows if r and any(c.strip() for c in r)]
    if rows and [c.strip() for c in rows[0]] == list(columns):
        body, first = rows[1:], 2
    else:
        body, first = rows, 1
    out = np.empty((len(body), len(columns)))
    for i, row in enumerate(body):
        line = first + i
        if len(row) != len(columns):
            raise InvalidInputError(f"{path}: row {line} has {len(row)} cells, expected {len(columns)}")
        for j, cell in enumerate(row):
            try:
                val = float(cell)
            except ValueError:
                raise InvalidInputError(f"{path}: row {line}, column {j + 1} ({columns[j]}): non-numeric cell {cell!r}") from None
            if not math.isfinite(val):
                raise InvalidInputError(f"{path}: row {line}, column {j + 1} ({columns[j]}): non-finite value")
            out[i, j] = val
    return out


def format_csv(header: Sequence[str], rows) -> str:
    buf = _io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([format(float(v), ".17g") for v in row])
    return buf.getvalue()


# -- SVG -----------------------------------------------------------------

_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf")


def _num(x: float) -> str:
    return format(float(x), ".6g")


def svg_overlay(
    field: FlowField,
    labels,
    hulls: Sequence[np.ndarray | None],
    vps: Sequence[np.ndarray | None],
    size=(640, 480),
    arrow_scale: float = 5.0,
) -> str:
    """Samples as arrows colored by cluster, cluster hulls, and finite vanishing points."""
    w, h = size
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">']
    out.append(f'<rect width="{w}" height="{h}" fill="white"/>')
    for (x, y), (u, v), lab in zip(field.x, field.v, labels):
        color = _PALETTE[int(lab) % len(_PALETTE)]
        out.append(
            f'<line x1="{_num(x)}" y1="{_num(y)}" x2="{_num(x + arrow_scale * u)}" y2="{_num(y + arrow_scale * v)}" '
            f'stroke="{color}" stroke-width="1"/>'
        )
        out.append(f'<circle cx="{_num(x)}" cy="{_num(y)}" r="1.5" fill="{color}"/>')
    for j, hull in enumerate(hulls):
        if hull is None:
            continue
        pts = " ".join(f"{_num(a)},{_num(b)}" for a, b in hull)
        out.append(f'<polygon points="{pts}" fill="none" stroke="{_PALETTE[j % len(_PALETTE)]}" stroke-width="1.5"/>')
    for j, vp in enumerate(vps):
        if vp is None:
            continue
        x, y = vp
        color = _PALETTE[j % len(_PALETTE)]
        out.append(
            f'<g stroke="{color}" stroke-width="2"><line x1="{_num(x - 6)}" y1="{_num(y - 6)}" x2="{_num(x + 6)}" y2="{_num(y + 6)}"/>'
            f'<line x1="{_num(x - 6)}" y1="{_num(y + 6)}" x2="{_num(x + 6)}" y2="{_num(y - 6)}"/></g>'
        )
    out.append("</svg>")
    return "\n".join(out) + "\n"
