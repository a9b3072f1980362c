"""Text formats: algebra description files, curve CSV and JSON reports.

Algebra file example::

    name: engel
    step: 3
    layer_dims: [2, 1, 1]
    brackets:
      - [1, 2] -> {3: 1}
      - [1, 3] -> {4: 1}

Indices are 1-based; coefficients are decimals or rationals ``p/q``.
"""

from __future__ import annotations

import csv
import io as _io
import json
import math
import os
import re
import tempfile
from fractions import Fraction

import numpy as np

from .algebra import AlgebraError, GradedAlgebra, from_brackets
from .curves import ControlGrid, HorizontalPath


class FormatError(ValueError):
    """Malformed input file."""


_BRACKET = re.compile(r"^-?\s*\[\s*(\d+)\s*,\s*(\d+)\s*\]\s*->\s*\{(.*)\}\s*$")
_TERM = re.compile(r"^\s*(\d+)\s*:\s*([-+]?[0-9./eE+-]+)\s*$")


def parse_algebra_text(text: str, check: bool = True) -> GradedAlgebra:
    fields: dict[str, str] = {}
    brackets: dict[tuple[int, int], dict[int, str]] = {}
    in_brackets = False
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].rstrip()
        if not line.strip():
            continue
        stripped = line.strip()
        if in_brackets and stripped.startswith("-"):
            m = _BRACKET.match(stripped)
            if not m:
                raise FormatError(f"line {lineno}: cannot parse bracket entry {stripped!r}")
            i, j = int(m.group(1)), int(m.group(2))
            row: dict[int, str] = {}
            body = m.group(3).strip()
            for term in filter(None, (t.strip() for t in body.split(","))):
                tm = _TERM.match(term)
                if not tm:
                    raise FormatError(f"line {lineno}: bad coefficient {term!r}")
                try:
                    Fraction(tm.group(2))
                except (ValueError, ZeroDivisionError) as exc:
                    raise FormatError(f"line {lineno}: bad coefficient {tm.group(2)!r}") from exc
                row[int(tm.group(1))] = tm.group(2)
            if (i, j) in brackets:
                raise FormatError(f"line {lineno}: bracket [{i}, {j}] given twice")
            brackets[(i, j)] = row
            continue
        key, sep, value = stripped.partition(":")
        if not sep:
            raise FormatError(f"line {lineno}: expected 'key: value', got {stripped!r}")
        key = key.strip()
        in_brackets = key == "brackets"
        if key not in ("name", "step", "layer_dims", "brackets"):
            raise FormatError(f"line {lineno}: unknown field {key!r}")
        fields[key] = value.strip()
    if "layer_dims" not in fields:
        raise FormatError("missing field 'layer_dims'")
    dims_txt = fields["layer_dims"].strip()
    if not (dims_txt.startswith("[") and dims_txt.endswith("]")):
        raise FormatError("layer_dims must be a list such as [2, 1, 1]")
    try:
        dims = [int(x) for x in dims_txt[1:-1].split(",") if x.strip()]
    except ValueError as exc:
        raise FormatError(f"bad layer_dims {dims_txt!r}") from exc
    if "step" in fields:
        try:
            step = int(fields["step"])
        except ValueError as exc:
            raise FormatError(f"bad step {fields['step']!r}") from exc
        if step != len(dims):
            raise FormatError(f"step {step} disagrees with {len(dims)} layer dimensions")
    try:
        return from_brackets(dims, brackets, name=fields.get("name", "custom") or "custom", check=check)
    except AlgebraError:
        raise
    except (ValueError, ZeroDivisionError) as exc:
        raise FormatError(str(exc)) from exc


def read_algebra(path: str, check: bool = True) -> GradedAlgebra:
    with open(path) as fh:
        return parse_algebra_text(fh.read(), check=check)


def _coef_text(v) -> str:
    f = Fraction(v)
    return str(f.numerator) if f.denominator == 1 else f"{f.numerator}/{f.denominator}"


def algebra_to_text(a: GradedAlgebra) -> str:
    lines = [f"name: {a.name}", f"step: {a.step}", f"layer_dims: [{', '.join(map(str, a.layer_dims))}]",
             "brackets:"]
    if a.exact is not None:
        items = sorted(a.exact.items())
        for (i, j), row in items:
            if i < j and row:
                body = ", ".join(f"{k + 1}: {_coef_text(v)}" for k, v in sorted(row.items()))
                lines.append(f"  - [{i + 1}, {j + 1}] -> {{{body}}}")
    else:
        c = a.struct_consts
        for i in range(a.n):
            for j in range(i + 1, a.n):
                ks = np.flatnonzero(c[i, j])
                if ks.size:
                    body = ", ".join(f"{k + 1}: {c[i, j, k]!r}" for k in ks)
                    lines.append(f"  - [{i + 1}, {j + 1}] -> {{{body}}}")
    return "\n".join(lines) + "\n"


# -- curves ----------------------------------------------------------------------

def read_curve_csv(path: str, a: GradedAlgebra) -> ControlGrid:
    """First-layer node samples ``t, x1..x{n1}`` on a uniform grid."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise FormatError(f"{path}: empty curve file")
    header = [h.strip() for h in rows[0]]
    expected = ["t"] + [f"x{i}" for i in range(1, a.n1 + 1)]
    if header[: a.n1 + 1] != expected:
        raise FormatError(f"{path}: header must start with {','.join(expected)}")
    try:
        data = np.array([[float(x) for x in r[: a.n1 + 1]] for r in rows[1:] if r], dtype=float)
    except ValueError as exc:
        raise FormatError(f"{path}: non-numeric entry") from exc
    if data.ndim != 2 or data.shape[0] < 2:
        raise FormatError(f"{path}: need at least two samples")
    N = data.shape[0] - 1
    if not np.allclose(data[:, 0], np.linspace(0.0, 1.0, N + 1), atol=1e-9):
        raise FormatError(f"{path}: t column must be the uniform grid on [0, 1]")
    return ControlGrid.from_nodes(a, data[:, 1:])


def _fmt(x: float) -> str:
    return "%.17g" % x


def curve_csv_text(grid: ControlGrid, path: HorizontalPath | None = None) -> str:
    a = grid.algebra
    cols = a.n if path is not None else a.n1
    values = path.points if path is not None else grid.nodes
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t"] + [f"x{i}" for i in range(1, cols + 1)])
    for t, row in zip(grid.times, values):
        w.writerow([_fmt(t)] + [_fmt(v) for v in row[:cols]])
    return buf.getvalue()


def table_csv_text(header, rows) -> str:
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(v) if isinstance(v, (float, np.floating)) else v for v in r])
    return buf.getvalue()


# -- JSON ------------------------------------------------------------------------------

def _encode(obj, indent: int, level: int) -> str:
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if obj is None:
        return "null"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isnan(x) or math.isinf(x):
            return "null"
        return _fmt(x)
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, np.ndarray):
        return _encode(obj.tolist(), indent, level)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {_encode(v, indent, level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        if all(not isinstance(v, (dict, list, tuple, np.ndarray)) for v in obj):
            return "[" + ", ".join(_encode(v, indent, level + 1) for v in obj) + "]"
        items = [pad + _encode(v, indent, level + 1) for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + end + "]"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps(obj, indent: int = 2) -> str:
    """JSON with 17 significant digits for floats; NaN and inf become null."""
    return _encode(obj, indent, 0) + "\n"


def write_atomic(path: str, text: str) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
