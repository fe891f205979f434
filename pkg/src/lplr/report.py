"""Deterministic output writers: JSON with 17-significant-digit floats, CSV, gnuplot."""

from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np


def _encode(obj, indent: int, level: int) -> str:
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if obj is None or obj is True or obj is False:
        return json.dumps(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return f"{x:.17g}" if math.isfinite(x) else "null"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {_encode(v, indent, level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        if len(obj) == 0:
            return "[]"
        items = [f"{pad}{_encode(v, indent, level + 1)}" for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + end + "]"
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def dumps(obj, indent: int = 2) -> str:
    """JSON text; floats as ``%.17g``, non-finite floats as null, key order kept."""
    return _encode(obj, indent, 0) + "\n"


def write_json(path, obj) -> None:
    _write(path, dumps(obj))


def _write(path, text: str) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write(text)


def write_table(path, header: list[str], columns: list) -> None:
    rows = zip(*columns)
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(_cell(v) for v in row))
    _write(path, "\n".join(lines) + "\n")


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        x = float(v)
        return f"{x:.17g}" if math.isfinite(x) else ""
    return str(v)


def gnuplot_script(csv_name: str, title: str, xlabel: str, ylabel: str, series, logx=False, logy=False) -> str:
    """``series`` is a list of ``(column_x, column_y, label, style)``."""
    lines = [
        "set datafile separator ','",
        "set key autotitle columnhead",
        f"set title {json.dumps(title)}",
        f"set xlabel {json.dumps(xlabel)}",
        f"set ylabel {json.dumps(ylabel)}",
        "set grid",
        "set terminal pngcairo size 900,600",
        f"set output {json.dumps(Path(csv_name).stem + '.png')}",
    ]
    if logx:
        lines.append("set logscale x")
    if logy:
        lines.append("set logscale y")
    parts = [
        f"{json.dumps(csv_name) if i == 0 else chr(39) * 2} using {cx}:{cy} with {style} title {json.dumps(label)}"
        for i, (cx, cy, label, style) in enumerate(series)
    ]
    lines.append("plot " + ", \\\n     ".join(parts))
    return "\n".join(lines) + "\n"


def write_text(path, text: str) -> None:
    _write(path, text)
