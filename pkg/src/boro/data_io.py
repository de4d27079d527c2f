"""Dataset CSV format.

Self-describing flat files: a required ``# dims d k`` comment line, a header
``x1,...,xd,y1,...,yk``, then one row per sample. Report-style outputs use
12 significant digits for clean diffs; dataset values themselves use the
shortest exact representation so a written file reads back value-identical.
"""

from __future__ import annotations

import io

import numpy as np

from .errors import ParseError
from .model import Dataset

FLOAT_FMT = "%.12g"


def _fmt(v: float) -> str:
    # shortest round-trip form
    return repr(float(v))


def write_dataset(f, data: Dataset) -> None:
    own = False
    if isinstance(f, (str, bytes)):
        f = open(f, "w", encoding="utf-8")
        own = True
    try:
        f.write(f"# dims {data.dim_x} {data.dim_y}\n")
        header = [f"x{i+1}" for i in range(data.dim_x)] + [f"y{i+1}" for i in range(data.dim_y)]
        f.write(",".join(header) + "\n")
        for i in range(data.n):
            row = list(data.X[i]) + list(data.Y[i])
            f.write(",".join(_fmt(v) for v in row) + "\n")
    finally:
        if own:
            f.close()


def dataset_to_string(data: Dataset) -> str:
    buf = io.StringIO()
    write_dataset(buf, data)
    return buf.getvalue()


def read_dataset(f) -> Dataset:
    own = False
    if isinstance(f, (str, bytes)):
        f = open(f, "r", encoding="utf-8")
        own = True
    try:
        lines = f.readlines()
    finally:
        if own:
            f.close()

    dims = None
    header_seen = False
    xs: list[list[float]] = []
    ys: list[list[float]] = []
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            parts = line[1:].split()
            if parts[:1] == ["dims"]:
                if len(parts) != 3:
                    raise ParseError(f"line {lineno}: malformed dims comment", line=lineno)
                try:
                    dims = (int(parts[1]), int(parts[2]))
                except ValueError:
                    raise ParseError(f"line {lineno}: malformed dims comment", line=lineno) from None
                if dims[0] < 1 or dims[1] < 1:
                    raise ParseError(f"line {lineno}: dimensions must be positive", line=lineno)
            continue
        if dims is None:
            raise ParseError(f"line {lineno}: missing required '# dims d k' comment", line=lineno)
        if not header_seen:
            expected = [f"x{i+1}" for i in range(dims[0])] + [f"y{i+1}" for i in range(dims[1])]
            names = [c.strip() for c in line.split(",")]
            if names != expected:
                raise ParseError(
                    f"line {lineno}: header {names} does not match dims (want {expected})",
                    line=lineno,
                )
            header_seen = True
            continue
        cells = line.split(",")
        if len(cells) != dims[0] + dims[1]:
            raise ParseError(
                f"line {lineno}: expected {dims[0] + dims[1]} fields, got {len(cells)}",
                line=lineno,
            )
        try:
            vals = [float(c) for c in cells]
        except ValueError:
            raise ParseError(f"line {lineno}: non-numeric field", line=lineno) from None
        xs.append(vals[: dims[0]])
        ys.append(vals[dims[0] :])
    if dims is None:
        raise ParseError("missing required '# dims d k' comment")
    if not xs:
        raise ParseError("no data rows")
    return Dataset(np.array(xs), np.array(ys))
