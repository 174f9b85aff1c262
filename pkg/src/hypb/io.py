"""Deterministic JSON, CSV and SVG output."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import os
import tempfile
from fractions import Fraction

import numpy as np

LABEL_COLORS = {"focusing": "#1f77b4", "dispersing": "#d62728", "flat": "#333333"}


def _enc(x, indent, level):
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if isinstance(x, dict):
        if not x:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {_enc(x[k], indent, level + 1)}" for k in sorted(x, key=str)]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(x, (list, tuple, np.ndarray)):
        if len(x) == 0:
            return "[]"
        vals = [_enc(v, indent, level + 1) for v in x]
        if all(not isinstance(v, (dict, list, tuple, np.ndarray)) for v in x):
            return "[" + ", ".join(vals) + "]"
        return "[\n" + ",\n".join(pad + v for v in vals) + "\n" + end + "]"
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if x is None:
        return "null"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, Fraction):
        return json.dumps(str(x))
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isnan(x):
            return '"nan"'
        if math.isinf(x):
            return '"inf"' if x > 0 else '"-inf"'
        return format(x, ".17g")
    if isinstance(x, str):
        return json.dumps(x)
    if hasattr(x, "to_dict"):
        return _enc(x.to_dict(), indent, level)
    raise TypeError(f"cannot serialize {type(x).__name__}")


def dumps(obj, indent: int = 1) -> str:
    """JSON with sorted keys and reals written with 17 significant digits."""
    return _enc(obj, indent, 0) + "\n"


def loads(text: str):
    def fix(x):
        if isinstance(x, dict):
            return {k: fix(v) for k, v in x.items()}
        if isinstance(x, list):
            return [fix(v) for v in x]
        if x in ("inf", "-inf", "nan"):
            return float(x)
        return x
    return fix(json.loads(text))


def content_hash(obj) -> str:
    return hashlib.sha256(dumps(obj).encode()).hexdigest()


def write_atomic(path: str, text: str):
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-")
    with os.fdopen(fd, "w", newline="") as f:
        f.write(text)
    os.chmod(tmp, 0o644)
    os.replace(tmp, path)


def write_json(path: str, obj):
    write_atomic(path, dumps(obj))


def csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([format(float(v), ".17g") if isinstance(v, (float, np.floating)) else v for v in r])
    return buf.getvalue()


def write_csv(path: str, header, rows):
    write_atomic(path, csv_text(header, rows))


# -------------------------------------------------------------------- SVG


def _fmt(v: float) -> str:
    return format(float(v), ".6f").rstrip("0").rstrip(".")


def _bounds(table, extra=None):
    from .table import boundary_points
    pts = boundary_points(table, per_arc=32)
    if extra is not None and len(extra):
        pts = np.concatenate([pts, np.asarray(extra)])
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    return lo, hi


def svg_table(table, trajectory=None, width: int = 800) -> str:
    """Table outline colored by label; ``trajectory`` is an (n, 2) polyline."""
    lo, hi = _bounds(table, trajectory)
    span = max(hi[0] - lo[0], hi[1] - lo[1], 1e-12)
    pad = 0.02 * span
    scale = width / (span + 2 * pad)
    H = (hi[1] - lo[1] + 2 * pad) * scale
    W = (hi[0] - lo[0] + 2 * pad) * scale

    def X(x):
        return (x - lo[0] + pad) * scale

    def Y(y):
        return H - (y - lo[1] + pad) * scale

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{_fmt(W)}" height="{_fmt(H)}" '
           f'viewBox="0 0 {_fmt(W)} {_fmt(H)}">', '<rect width="100%" height="100%" fill="white"/>']
    for label in ("flat", "dispersing", "focusing"):
        d = []
        for i in np.nonzero([table.label_of(j) == label for j in range(table.n_pieces)])[0]:
            g = table.geom[i]
            if table.kind[i] == 0:
                d.append(f"M{_fmt(X(g[0]))} {_fmt(Y(g[1]))}L{_fmt(X(g[2]))} {_fmt(Y(g[3]))}")
            else:
                cx, cy, r, th0, sw = g
                a = (cx + r * math.cos(th0), cy + r * math.sin(th0))
                b = (cx + r * math.cos(th0 + sw), cy + r * math.sin(th0 + sw))
                large = 1 if abs(sw) > math.pi else 0
                sweep_flag = 0 if sw > 0 else 1  # y axis is flipped
                d.append(f"M{_fmt(X(a[0]))} {_fmt(Y(a[1]))}A{_fmt(r * scale)} {_fmt(r * scale)} 0 {large} "
                         f"{sweep_flag} {_fmt(X(b[0]))} {_fmt(Y(b[1]))}")
        if d:
            out.append(f'<path d="{"".join(d)}" fill="none" stroke="{LABEL_COLORS[label]}" '
                       f'stroke-width="1.5" class="{label}"/>')
    if trajectory is not None and len(trajectory) > 1:
        pts = " ".join(f"{_fmt(X(p[0]))},{_fmt(Y(p[1]))}" for p in trajectory)
        out.append(f'<polyline points="{pts}" fill="none" stroke="#2ca02c" stroke-width="0.6" '
                   f'stroke-opacity="0.8" class="trajectory"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def svg_plot(xs, series: dict, title: str, xlabel: str, ylabel: str, logx: bool = False, logy: bool = False,
             width: int = 640, height: int = 420) -> str:
    """Minimal static line plot: one polyline with markers per series."""
    colors = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"]
    xs = np.asarray(xs, dtype=float)
    tx = np.log10(xs) if logx else xs
    ys_all = np.concatenate([np.asarray(v, dtype=float) for v in series.values()])
    ty_all = np.log10(ys_all) if logy else ys_all
    x0, x1 = float(tx.min()), float(tx.max())
    y0, y1 = float(np.nanmin(ty_all)), float(np.nanmax(ty_all))
    if x1 == x0:
        x1 = x0 + 1
    if y1 == y0:
        y1 = y0 + 1
    ml, mr, mt, mb = 70, 20, 40, 50

    def X(v):
        return ml + (v - x0) / (x1 - x0) * (width - ml - mr)

    def Y(v):
        return height - mb - (v - y0) / (y1 - y0) * (height - mt - mb)

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
           '<rect width="100%" height="100%" fill="white"/>',
           f'<text x="{width / 2}" y="22" text-anchor="middle" font-size="14">{title}</text>',
           f'<line x1="{ml}" y1="{height - mb}" x2="{width - mr}" y2="{height - mb}" stroke="black"/>',
           f'<line x1="{ml}" y1="{mt}" x2="{ml}" y2="{height - mb}" stroke="black"/>',
           f'<text x="{width / 2}" y="{height - 10}" text-anchor="middle" font-size="12">{xlabel}</text>',
           f'<text x="16" y="{height / 2}" text-anchor="middle" font-size="12" '
           f'transform="rotate(-90 16 {height / 2})">{ylabel}</text>']
    for v, lab in ((x0, x0), (x1, x1)):
        text = f"{10 ** lab:.3g}" if logx else f"{lab:.3g}"
        out.append(f'<text x="{_fmt(X(v))}" y="{height - mb + 16}" text-anchor="middle" font-size="10">{text}</text>')
    for v in (y0, y1):
        text = f"{10 ** v:.3g}" if logy else f"{v:.3g}"
        out.append(f'<text x="{ml - 6}" y="{_fmt(Y(v))}" text-anchor="end" font-size="10">{text}</text>')
    for n, (name, ys) in enumerate(series.items()):
        ys = np.asarray(ys, dtype=float)
        ty = np.log10(ys) if logy else ys
        col = colors[n % len(colors)]
        pts = " ".join(f"{_fmt(X(a))},{_fmt(Y(b))}" for a, b in zip(tx, ty))
        out.append(f'<polyline points="{pts}" fill="none" stroke="{col}" stroke-width="1.5"/>')
        for a, b in zip(tx, ty):
            out.append(f'<circle cx="{_fmt(X(a))}" cy="{_fmt(Y(b))}" r="3" fill="{col}"/>')
        out.append(f'<text x="{width - mr - 4}" y="{mt + 14 * (n + 1)}" text-anchor="end" font-size="11" '
                   f'fill="{col}">{name}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
