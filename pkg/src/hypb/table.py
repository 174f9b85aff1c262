"""Billiard tables: array-backed boundary, builders for the main and optimal
tables, the (C1) containment certificate, h_o, area and diameter.

Boundary pieces are stored in flat arrays so that the numba kernels can use
them directly.  ``geom`` rows are ``(ax, ay, bx, by, 0)`` for segments and
``(cx, cy, R, theta0, sweep)`` for arcs.

Flat strips and spirals are *corridors*: chains of convex quadrilateral cells
whose walls are flat boundary pieces.  Each corridor is glued to the bulk of
the table through a *portal* segment (not a boundary piece).  Cell vertices
are ordered ``(I_prev, O_prev, O_next, I_next)`` (counterclockwise), where
``I`` is the inner wall (left of the heading) and ``O`` the outer wall.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.spatial import ConvexHull

from .geometry import ArcPiece, GeometryError, Point2, SegmentPiece, arc_through, inner_normal

SEG, ARC = 0, 1
FLAT, FOCUSING, DISPERSING = 0, 1, 2
LABELS = {FLAT: "flat", FOCUSING: "focusing", DISPERSING: "dispersing"}
LABEL_CODES = {v: k for k, v in LABELS.items()}

CLOSE_TOL = 1e-10
H_BRACKET = (1e-6, 1.0)


class NoSolution(RuntimeError):
    pass


@dataclass
class Corridor:
    name: str
    cells: np.ndarray  # (n, 4, 2)
    rect: bool = False


@dataclass
class Table:
    kind: np.ndarray
    geom: np.ndarray
    label: np.ndarray
    corridor_of: np.ndarray
    corridors: list = field(default_factory=list)
    family: str = "custom"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        self.kind = np.asarray(self.kind, dtype=np.int64)
        self.geom = np.asarray(self.geom, dtype=np.float64).reshape(-1, 5)
        self.label = np.asarray(self.label, dtype=np.int64)
        self.corridor_of = np.asarray(self.corridor_of, dtype=np.int64)
        n = len(self.kind)
        self.length = np.empty(n)
        self.curvature = np.zeros(n)
        arc = self.kind == ARC
        g = self.geom
        self.length[~arc] = np.hypot(g[~arc, 2] - g[~arc, 0], g[~arc, 3] - g[~arc, 1])
        self.length[arc] = g[arc, 2] * np.abs(g[arc, 4])
        self.curvature[arc] = np.sign(g[arc, 4]) / g[arc, 2]
        self.offsets = np.concatenate([[0.0], np.cumsum(self.length)])
        self._arrays = None

    # ----------------------------------------------------------- basic access
    @property
    def n_pieces(self) -> int:
        return len(self.kind)

    @property
    def perimeter(self) -> float:
        return float(self.offsets[-1])

    def piece(self, i: int):
        g = self.geom[i]
        if self.kind[i] == ARC:
            return ArcPiece(Point2(g[0], g[1]), float(g[2]), float(g[3]), float(g[4]))
        return SegmentPiece(Point2(g[0], g[1]), Point2(g[2], g[3]))

    def pieces(self):
        return [self.piece(i) for i in range(self.n_pieces)]

    def locate_s(self, s: float, want=None):
        """``(piece, local arclength)`` for a global arclength ``s`` (taken mod perimeter).

        At a junction the piece starting at ``s`` is returned, unless ``want``
        (a label code) names the label of the piece ending there.
        """
        s = float(s) % self.perimeter
        i = int(np.searchsorted(self.offsets, s, side="right") - 1)
        i = min(max(i, 0), self.n_pieces - 1)
        if want is not None and self.label[i] != want:
            j = (i - 1) % self.n_pieces
            if abs(s - self.offsets[i]) < 1e-12 and self.label[j] == want:
                return self.piece(j), float(self.length[j])
            if i == 0 and abs(s) < 1e-12 and self.label[j] == want:
                return self.piece(j), float(self.length[j])
        return self.piece(i), s - self.offsets[i]

    def piece_index(self, s: float) -> int:
        s = float(s) % self.perimeter
        return int(min(max(np.searchsorted(self.offsets, s, side="right") - 1, 0), self.n_pieces - 1))

    def label_of(self, i: int) -> str:
        return LABELS[int(self.label[i])]

    @property
    def psi_mask(self) -> np.ndarray:
        return self.label != FLAT

    def start_point(self, i: int) -> np.ndarray:
        return np.array(self.piece(i).start)

    def end_point(self, i: int) -> np.ndarray:
        return np.array(self.piece(i).end)

    def vertices(self) -> np.ndarray:
        """Start points of all pieces."""
        out = np.empty((self.n_pieces, 2))
        seg = self.kind == SEG
        out[seg] = self.geom[seg, 0:2]
        arc = ~seg
        g = self.geom[arc]
        out[arc, 0] = g[:, 0] + g[:, 2] * np.cos(g[:, 3])
        out[arc, 1] = g[:, 1] + g[:, 2] * np.sin(g[:, 3])
        return out

    def end_vertices(self) -> np.ndarray:
        out = np.empty((self.n_pieces, 2))
        seg = self.kind == SEG
        out[seg] = self.geom[seg, 2:4]
        arc = ~seg
        g = self.geom[arc]
        th = g[:, 3] + g[:, 4]
        out[arc, 0] = g[:, 0] + g[:, 2] * np.cos(th)
        out[arc, 1] = g[:, 1] + g[:, 2] * np.sin(th)
        return out

    def closure_gap(self) -> float:
        """Largest gap between the end of a piece and the start of the next one."""
        return float(np.max(np.hypot(*(self.end_vertices() - np.roll(self.vertices(), -1, axis=0)).T)))

    # ------------------------------------------------------------ kernel data
    def portals(self) -> np.ndarray:
        """Portal segments ``(ax, ay, bx, by)`` with the bulk on their left."""
        out = np.empty((len(self.corridors), 4))
        for c, cor in enumerate(self.corridors):
            i_prev, o_prev = cor.cells[0, 0], cor.cells[0, 1]
            out[c] = (o_prev[0], o_prev[1], i_prev[0], i_prev[1])
        return out

    def kernel_arrays(self):
        """Tuple of arrays consumed by the numba kernels (cached)."""
        if self._arrays is None:
            n = self.n_pieces
            bbox = _piece_bboxes(self)
            portals = self.portals()
            cells = (np.concatenate([c.cells for c in self.corridors]) if self.corridors
                     else np.zeros((0, 4, 2)))
            start = np.zeros(len(self.corridors) + 1, dtype=np.int64)
            for c, cor in enumerate(self.corridors):
                start[c + 1] = start[c] + len(cor.cells)
            rect = np.array([c.rect for c in self.corridors], dtype=np.bool_)
            bulk = np.nonzero(self.corridor_of < 0)[0].astype(np.int64)
            self._arrays = dict(
                kind=self.kind, geom=self.geom, curv=self.curvature, length=self.length,
                offsets=self.offsets[:n].copy(), label=self.label, bbox=bbox, bulk=bulk,
                allp=np.arange(n, dtype=np.int64), portals=np.ascontiguousarray(portals),
                cells=np.ascontiguousarray(cells, dtype=np.float64), cstart=start, crect=rect,
            )
        return self._arrays

    # -------------------------------------------------------------- serialize
    def to_dict(self) -> dict:
        pieces = []
        for i in range(self.n_pieces):
            g = [float(v) for v in self.geom[i]]
            if self.kind[i] == ARC:
                d = {"type": "arc", "center": g[0:2], "radius": g[2], "theta0": g[3], "sweep": g[4]}
            else:
                d = {"type": "segment", "a": g[0:2], "b": g[2:4]}
            d["label"] = self.label_of(i)
            d["corridor"] = int(self.corridor_of[i])
            pieces.append(d)
        return {
            "family": self.family,
            "params": self.params,
            "perimeter": self.perimeter,
            "pieces": pieces,
            "corridors": [{"name": c.name, "rect": c.rect, "cells": c.cells.tolist()} for c in self.corridors],
        }

    def content_hash(self) -> str:
        h = hashlib.sha256()
        for a in (self.kind, self.geom, self.label, self.corridor_of):
            h.update(np.ascontiguousarray(a).tobytes())
        for c in self.corridors:
            h.update(np.ascontiguousarray(c.cells).tobytes())
        return h.hexdigest()

    @classmethod
    def from_dict(cls, d: dict) -> "Table":
        kind, geom, label, cor = [], [], [], []
        for p in d["pieces"]:
            if p["type"] == "arc":
                kind.append(ARC)
                geom.append([*p["center"], p["radius"], p["theta0"], p["sweep"]])
            else:
                kind.append(SEG)
                geom.append([*p["a"], *p["b"], 0.0])
            label.append(LABEL_CODES[p["label"]])
            cor.append(p.get("corridor", -1))
        corridors = [Corridor(c["name"], np.array(c["cells"], dtype=float), c["rect"]) for c in d.get("corridors", [])]
        return cls(kind, geom, label, cor, corridors, d.get("family", "custom"), d.get("params", {}))


def _piece_bboxes(t: Table) -> np.ndarray:
    n = t.n_pieces
    bb = np.empty((n, 4))
    a, b = t.vertices(), t.end_vertices()
    bb[:, 0] = np.minimum(a[:, 0], b[:, 0])
    bb[:, 1] = np.minimum(a[:, 1], b[:, 1])
    bb[:, 2] = np.maximum(a[:, 0], b[:, 0])
    bb[:, 3] = np.maximum(a[:, 1], b[:, 1])
    for i in np.nonzero(t.kind == ARC)[0]:
        cx, cy, r, th0, sw = t.geom[i]
        for m in range(-8, 9):
            th = m * math.pi / 2
            off = (th - th0) * math.copysign(1.0, sw)
            if 0.0 < off < abs(sw):
                x, y = cx + r * math.cos(th), cy + r * math.sin(th)
                bb[i] = (min(bb[i, 0], x), min(bb[i, 1], y), max(bb[i, 2], x), max(bb[i, 3], y))
    return bb


class TableBuilder:
    """Accumulates pieces in boundary order."""

    def __init__(self):
        self.kind, self.geom, self.label, self.cor = [], [], [], []
        self.corridors = []

    def arc(self, a, b, k: float):
        p = arc_through(a, b, k)
        self.kind.append(ARC)
        self.geom.append([p.center.x, p.center.y, p.radius, p.theta0, p.sweep])
        self.label.append(FOCUSING if k > 0 else DISPERSING)
        self.cor.append(-1)

    def seg(self, a, b, corridor: int = -1):
        if math.hypot(b[0] - a[0], b[1] - a[1]) == 0.0:
            raise GeometryError("degenerate segment")
        self.kind.append(SEG)
        self.geom.append([a[0], a[1], b[0], b[1], 0.0])
        self.label.append(FLAT)
        self.cor.append(corridor)

    def add_corridor(self, name: str, cells, rect: bool = False) -> int:
        self.corridors.append(Corridor(name, np.asarray(cells, dtype=float), rect))
        return len(self.corridors) - 1

    def build(self, family: str, params: dict) -> Table:
        t = Table(self.kind, self.geom, self.label, self.cor, self.corridors, family, params)
        if t.closure_gap() > CLOSE_TOL:
            raise GeometryError(f"boundary chain does not close (gap {t.closure_gap():.3e})")
        return t


# ------------------------------------------------------------------ main table


@dataclass(frozen=True)
class MainTableParams:
    k_d: float
    k_f: float
    h: float
    l: float
    opening_y0: float = 0.0

    def validate(self):
        if not (-math.sqrt(2.0) < self.k_d < 0.0):
            raise ValueError("k_d must lie in (-sqrt 2, 0)")
        if self.k_f <= 0 or self.h <= 0 or self.l <= 0:
            raise ValueError("k_f, h and l must be positive")
        if self.k_f >= 2.0:
            raise ValueError("focusing arc through the bottom corners needs k_f < 2")
        if self.opening_y0 < 0 or self.opening_y0 + self.h >= 1.0:
            raise ValueError("openings must fit inside the lateral sides")


def _bulk_bottom(b: TableBuilder, k_f: float | None):
    if k_f is None or k_f == 0.0:
        b.seg((0.0, 0.0), (1.0, 0.0))
    else:
        b.arc((0.0, 0.0), (1.0, 0.0), k_f)


def build_main_table(p: MainTableParams) -> Table:
    """Unit-square bulk with two horizontal rectangular strips.

    The strips leave through openings ``[y0, y0 + h]`` on the lateral sides.
    Lateral dispersing arcs run between the opening and the top corners; for
    ``y0 > 0`` a second dispersing arc closes the gap below the opening.
    """
    p.validate()
    y0, h, l, kd = p.opening_y0, p.h, p.l, p.k_d
    y1 = y0 + h
    b = TableBuilder()
    _bulk_bottom(b, p.k_f)
    if y0 > 0:
        b.arc((1.0, 0.0), (1.0, y0), kd)
    right = b.add_corridor("right-strip", [[(1.0, y1), (1.0, y0), (1.0 + l, y0), (1.0 + l, y1)]], rect=True)
    b.seg((1.0, y0), (1.0 + l, y0), right)
    b.seg((1.0 + l, y0), (1.0 + l, y1), right)
    b.seg((1.0 + l, y1), (1.0, y1), right)
    b.arc((1.0, y1), (1.0, 1.0), kd)
    b.arc((1.0, 1.0), (0.0, 1.0), kd)
    b.arc((0.0, 1.0), (0.0, y1), kd)
    left = b.add_corridor("left-strip", [[(0.0, y0), (0.0, y1), (-l, y1), (-l, y0)]], rect=True)
    b.seg((0.0, y1), (-l, y1), left)
    b.seg((-l, y1), (-l, y0), left)
    b.seg((-l, y0), (0.0, y0), left)
    if y0 > 0:
        b.arc((0.0, y0), (0.0, 0.0), kd)
    t = b.build("main", {"k_d": kd, "k_f": p.k_f, "h": h, "l": l, "opening_y0": y0})
    _check_arc_adjacency(t)
    return t


def build_bulk_table(k_d: float, k_f: float | None = None) -> Table:
    """Closed bulk without strips: three dispersing sides plus a focusing arc
    (or a flat bottom when ``k_f`` is None)."""
    b = TableBuilder()
    _bulk_bottom(b, k_f)
    b.arc((1.0, 0.0), (1.0, 1.0), k_d)
    b.arc((1.0, 1.0), (0.0, 1.0), k_d)
    b.arc((0.0, 1.0), (0.0, 0.0), k_d)
    return b.build("bulk", {"k_d": k_d, "k_f": k_f})


def build_polygon_table(vertices) -> Table:
    """All-flat polygon given counterclockwise vertices."""
    v = [tuple(map(float, x)) for x in vertices]
    b = TableBuilder()
    for i in range(len(v)):
        b.seg(v[i], v[(i + 1) % len(v)])
    t = b.build("polygon", {"vertices": [list(x) for x in v]})
    if _signed_area_polygon(np.array(v)) <= 0:
        raise GeometryError("polygon vertices must be counterclockwise")
    return t


def unit_square_table() -> Table:
    return build_polygon_table([(0, 0), (1, 0), (1, 1), (0, 1)])


def _signed_area_polygon(v: np.ndarray) -> float:
    x, y = v[:, 0], v[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def _check_arc_adjacency(t: Table, tol: float = 1e-9):
    """Curved pieces may meet each other only at shared endpoints."""
    arcs = [i for i in range(t.n_pieces) if t.kind[i] == ARC]
    for a_i, i in enumerate(arcs):
        for j in arcs[a_i + 1:]:
            for p in arc_arc_intersections(t.piece(i), t.piece(j)):
                ends = [t.piece(i).start, t.piece(i).end]
                if min(math.hypot(p[0] - e[0], p[1] - e[1]) for e in ends) > tol:
                    raise GeometryError(f"arcs {i} and {j} cross away from their endpoints")


def arc_arc_intersections(a: ArcPiece, b: ArcPiece):
    """Intersection points of two circular arcs."""
    d = math.hypot(b.center.x - a.center.x, b.center.y - a.center.y)
    if d == 0.0 or d > a.radius + b.radius or d < abs(a.radius - b.radius):
        return []
    x = (d * d + a.radius ** 2 - b.radius ** 2) / (2 * d)
    y2 = a.radius ** 2 - x * x
    y = math.sqrt(max(y2, 0.0))
    ux, uy = (b.center.x - a.center.x) / d, (b.center.y - a.center.y) / d
    out = []
    for sgn in ((1.0, -1.0) if y > 0 else (1.0,)):
        p = (a.center.x + x * ux - sgn * y * uy, a.center.y + x * uy + sgn * y * ux)
        on_a = a.angular_offset(p) <= abs(a.sweep) + 1e-12 or a.angular_offset(p) >= 2 * math.pi - 1e-12
        on_b = b.angular_offset(p) <= abs(b.sweep) + 1e-12 or b.angular_offset(p) >= 2 * math.pi - 1e-12
        if on_a and on_b:
            out.append(p)
    return out


# ------------------------------------------------------------------------ (C1)


def _arc_samples(t: Table, idx, s):
    """Points and inner normals at concatenated arclength ``s`` over pieces ``idx``."""
    lens = t.length[idx]
    cum = np.concatenate([[0.0], np.cumsum(lens)])
    s = np.clip(np.asarray(s, dtype=float), 0.0, cum[-1])
    j = np.clip(np.searchsorted(cum, s, side="right") - 1, 0, len(idx) - 1)
    g = t.geom[np.asarray(idx)[j]]
    sigma = s - cum[j]
    sgn = np.sign(g[:, 4])
    th = g[:, 3] + sgn * sigma / g[:, 2]
    c, sn = np.cos(th), np.sin(th)
    pts = np.stack([g[:, 0] + g[:, 2] * c, g[:, 1] + g[:, 2] * sn], axis=-1)
    nrm = np.stack([-sgn * c, -sgn * sn], axis=-1)
    return pts, nrm


def c1_margin(t: Table, s_d, s_f):
    """Signed containment margin of I(s', s'') in D_4(s'') (a length, negative on violation).

    ``s_d`` and ``s_f`` are arclengths along the concatenated dispersing and
    focusing pieces respectively; arrays broadcast.
    """
    disp = np.nonzero(t.label == DISPERSING)[0]
    foc = np.nonzero(t.label == FOCUSING)[0]
    s_d, s_f = np.broadcast_arrays(np.asarray(s_d, float), np.asarray(s_f, float))
    pd, nd = _arc_samples(t, disp, s_d.ravel())
    pf, nf = _arc_samples(t, foc, s_f.ravel())
    kd = np.abs(t.curvature[disp][0])
    kf = t.curvature[foc][0]
    rho = 0.5 / kd
    cd = pd - nd * rho  # D_{-2}(s') lies on the exterior side
    rho4 = 0.25 / kf
    c4 = pf + nf * rho4
    # line through s'' and s': chord endpoints are s' and its second intersection
    u = pd - pf
    dist = np.hypot(u[:, 0], u[:, 1])
    u = u / dist[:, None]
    w = pd - cd
    second = pd - 2.0 * np.sum(u * w, axis=1)[:, None] * u
    e1 = np.hypot(*(pd - c4).T)
    e2 = np.hypot(*(second - c4).T)
    return (rho4 - np.maximum(e1, e2)).reshape(s_d.shape)


@dataclass
class C1Result:
    ok: bool
    margin: float
    witness: tuple
    grid: int
    grid_resolution: float

    def to_dict(self):
        return {"ok": self.ok, "margin": self.margin, "witness": list(self.witness),
                "grid": self.grid, "grid_resolution": self.grid_resolution}


def check_C1(t: Table, grid: int = 400, refine: int = 4) -> C1Result:
    """Minimum of the (C1) margin over dispersing x focusing arclength pairs.

    The witness is returned as global arclengths ``(s', s'')``.
    """
    disp = np.nonzero(t.label == DISPERSING)[0]
    foc = np.nonzero(t.label == FOCUSING)[0]
    if len(disp) == 0 or len(foc) == 0:
        raise ValueError("table needs dispersing and focusing pieces")
    Ld, Lf = t.length[disp].sum(), t.length[foc].sum()
    sd = np.linspace(0.0, Ld, grid)
    sf = np.linspace(0.0, Lf, grid)
    m = c1_margin(t, sd[:, None], sf[None, :])
    flat = np.argsort(m, axis=None)[:refine]
    best = (float(m.flat[flat[0]]), float(sd[flat[0] // grid]), float(sf[flat[0] % grid]))
    dd, df = Ld / (grid - 1), Lf / (grid - 1)
    for f in flat:
        i, j = divmod(int(f), grid)
        x, y = sd[i], sf[j]
        lo_x, hi_x = max(0.0, x - 2 * dd), min(Ld, x + 2 * dd)
        lo_y, hi_y = max(0.0, y - 2 * df), min(Lf, y + 2 * df)
        val = float(m[i, j])
        for _ in range(6):
            rx = minimize_scalar(lambda a: float(c1_margin(t, a, y)), bounds=(lo_x, hi_x), method="bounded",
                                 options={"xatol": 1e-13})
            for cand in (rx.x, lo_x, hi_x):
                v = float(c1_margin(t, cand, y))
                if v < val:
                    val, x = v, cand
            ry = minimize_scalar(lambda b: float(c1_margin(t, x, b)), bounds=(lo_y, hi_y), method="bounded",
                                 options={"xatol": 1e-13})
            for cand in (ry.x, lo_y, hi_y):
                v = float(c1_margin(t, x, cand))
                if v < val:
                    val, y = v, cand
        if val < best[0]:
            best = (val, float(x), float(y))
    s_prime = _concat_to_global(t, disp, best[1])
    s_second = _concat_to_global(t, foc, best[2])
    return C1Result(best[0] >= 0.0, best[0], (s_prime, s_second), grid, float(max(dd, df)))


def _concat_to_global(t: Table, idx, s: float) -> float:
    lens = t.length[idx]
    cum = np.concatenate([[0.0], np.cumsum(lens)])
    j = int(min(max(np.searchsorted(cum, s, side="right") - 1, 0), len(idx) - 1))
    return float(t.offsets[idx[j]] + (s - cum[j]))


def _c1_bulk_table(k_d: float, k_f: float, h: float, opening_y0: float = 0.0) -> Table:
    # strip length does not enter (C1); a short strip keeps the build cheap
    return build_main_table(MainTableParams(k_d, k_f, h, 1.0, opening_y0))


@dataclass
class HoResult:
    h_o: float
    trace: list
    monotone: bool


def compute_h_o(k_d: float, k_f: float, opening_y0: float = 0.0, rtol: float = 1e-10,
                grid: int = 400, full: bool = False):
    """Smallest strip height for which (C1) holds, by bisection on ``h``.

    Returns the upper end of the final bracket, so (C1) holds at the value
    returned.  With ``full=True`` the bisection trace is returned as well.
    """
    res = _compute_h_o(float(k_d), float(k_f), float(opening_y0), float(rtol), int(grid))
    return res if full else res.h_o


@lru_cache(maxsize=256)
def _compute_h_o(k_d, k_f, opening_y0, rtol, grid) -> "HoResult":
    lo, hi = H_BRACKET
    hi = min(hi, 1.0 - opening_y0 - 1e-9)

    def margin(h):
        return check_C1(_c1_bulk_table(k_d, k_f, h, opening_y0), grid=grid).margin

    trace = []
    m_hi = margin(hi)
    trace.append((hi, m_hi))
    if m_hi < 0:
        raise NoSolution(f"(C1) fails at the upper bracket h={hi} for k_f={k_f}")
    m_lo = margin(lo)
    trace.append((lo, m_lo))
    if m_lo >= 0:
        hi = lo
    while hi - lo > rtol * hi:
        mid = 0.5 * (lo + hi)
        m = margin(mid)
        trace.append((mid, m))
        if m >= 0:
            hi = mid
        else:
            lo = mid
    ordered = sorted(trace)
    monotone = all(b[1] >= a[1] - 1e-13 for a, b in zip(ordered, ordered[1:]))
    return HoResult(hi, trace, monotone)


def h_o_estimate_corrected(k_d: float, k_f: float) -> float:
    """Closed-form h_o for the worst pair s'' = (1, 0), s' = top of the left opening.

    ``c`` is the length of the chord from s'' through s' to the far end of
    I(s', s''); the chord must reach the boundary of D_4(s''), of radius
    1/(4 k_f), and the bottom side is itself a chord of length 1 of the
    focusing circle.
    """
    c = worst_chord_length(k_d, k_f)
    return math.tan(math.asin(2.0 * k_f * c) - math.asin(0.5 * k_f))


def h_o_estimate_doubled_radius(k_f: float, c: float) -> float:
    """The same estimate with the focusing radius taken as 2/k_f instead of 1/k_f."""
    return math.tan(math.asin(0.5 * k_f * c) - math.asin(0.5 * k_f))


def worst_chord_length(k_d: float, k_f: float, h: float | None = None) -> float:
    """Length of the chord from (1, 0) through the top of the left opening, up to ∂D_{-2}."""
    if h is None:
        h = compute_h_o(k_d, k_f)
    t = _c1_bulk_table(k_d, k_f, h)
    left = [i for i in range(t.n_pieces) if t.label[i] == DISPERSING][-1]
    piece = t.piece(left)
    sp = np.array(piece.end)
    n = np.array(inner_normal(piece, piece.length))
    cd = sp - n * (0.5 / abs(k_d))
    sf = np.array([1.0, 0.0])
    u = (sp - sf) / np.linalg.norm(sp - sf)
    second = sp - 2.0 * np.dot(u, sp - cd) * u
    return float(np.linalg.norm(second - sf))


# -------------------------------------------------------------- optimal table


@dataclass
class GeometryCertificate:
    c1_ok: bool
    c1_margin: float
    c1_witness: tuple
    c2_ok: bool
    area: float
    diameter: float
    grid_resolution: float = 0.0
    extra: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.c1_ok and self.c2_ok and self.extra.get("spiral_ok", True)

    def to_dict(self) -> dict:
        d = {"c1_ok": self.c1_ok, "c1_margin": self.c1_margin, "c1_witness": list(self.c1_witness),
             "c2_ok": self.c2_ok, "area": self.area, "diameter": self.diameter,
             "grid_resolution": self.grid_resolution, "ok": self.ok}
        d.update(self.extra)
        return d


def build_optimal_table(k_d: float, k_f: float, h_o: float | None = None):
    if h_o is None:
        h_o = compute_h_o(k_d, k_f)
    l_o = 1.0 / k_f
    t = build_main_table(MainTableParams(k_d, k_f, h_o, l_o))
    t.family = "optimal"
    t.params["h_o"] = h_o
    t.params["l_o"] = l_o
    return t, certify_main(t)


def certify_main(t: Table, grid: int = 400) -> GeometryCertificate:
    c1 = check_C1(t, grid=grid)
    l, k_f = t.params["l"], t.params["k_f"]
    c2 = bool(l * k_f >= 1.0 - 1e-12)
    return GeometryCertificate(c1.ok, c1.margin, c1.witness, c2, table_area(t), table_diameter(t),
                               c1.grid_resolution, {"l_times_kf": l * k_f})


# --------------------------------------------------------- measurements


def wrap_factor(n_bar: int) -> float:
    """(cos(2 pi / N))^(-N) - 1, evaluated without cancellation."""
    if n_bar < 5:
        raise ValueError("N_bar must be at least 5")
    # log(cos x) = log1p(-2 sin^2(x/2)) keeps full precision for small x
    return math.expm1(-n_bar * math.log1p(-2.0 * math.sin(math.pi / n_bar) ** 2))


def table_area(t: Table) -> float:
    g = t.geom
    seg = t.kind == SEG
    a = 0.5 * np.sum(g[seg, 0] * g[seg, 3] - g[seg, 2] * g[seg, 1])
    arc = ~seg
    cx, cy, r, th0, sw = g[arc].T
    th1 = th0 + sw
    a += 0.5 * np.sum(r * r * sw + cx * r * (np.sin(th1) - np.sin(th0)) - cy * r * (np.cos(th1) - np.cos(th0)))
    return float(a)


def boundary_points(t: Table, per_arc: int = 256) -> np.ndarray:
    pts = [t.vertices()]
    for i in np.nonzero(t.kind == ARC)[0]:
        cx, cy, r, th0, sw = t.geom[i]
        th = th0 + sw * np.linspace(0.0, 1.0, per_arc)
        pts.append(np.stack([cx + r * np.cos(th), cy + r * np.sin(th)], axis=-1))
    return np.concatenate(pts)


def table_diameter(t: Table) -> float:
    pts = boundary_points(t)
    hull = pts[ConvexHull(pts).vertices]
    best = 0.0
    for i in range(0, len(hull), 512):
        d = hull[i:i + 512, None, :] - hull[None, :, :]
        best = max(best, float(np.sqrt(np.max(np.sum(d * d, axis=-1)))))
    return best


def circular_segment_area(radius: float, chord: float) -> float:
    th = 2.0 * math.asin(chord / (2.0 * radius))
    return 0.5 * radius * radius * (th - math.sin(th))


def table_json(t: Table) -> str:
    from .io import dumps
    return dumps(t.to_dict())


__all__ = [
    "Table", "Corridor", "MainTableParams", "GeometryCertificate", "NoSolution", "build_main_table",
    "build_bulk_table", "build_polygon_table", "unit_square_table", "check_C1", "c1_margin", "compute_h_o",
    "build_optimal_table", "certify_main", "wrap_factor", "table_area", "table_diameter",
]
