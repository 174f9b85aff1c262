"""Double polygonal spiral replacing the two straight strips.

Each strip becomes a corridor of right trapezoids.  A trapezoid of width
``h_i`` whose far leg is tilted by ``gamma_i`` hands a width
``h_{i+1} = h_i / cos(gamma_i)`` to the next one, which is turned by
``gamma_i`` to the left.  Each corridor starts with a fixed prefix that turns
by pi and carries the opening to a regular double spiral around the bulk
center ``A``: with ``c = cos(2 pi / N)`` the inner corners of the right
spiral are ``P_j = A + r0 c^-j e(pi/2 + 2 pi j / N)`` and its outer corners
``Q_j = A + q (P_j - A)``; the left spiral runs between ``Q_j`` and
``P_{j+N}``, so the two corridors share walls.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from numba import njit

from .geometry import GeometryError
from .table import (GeometryCertificate, NoSolution, TableBuilder, check_C1, compute_h_o, table_area,
                    table_diameter, wrap_factor)

CENTER = (0.5, 0.5)
PREFIX_TURNS = 8
PREFIX_ANGLE = Fraction(1, 8)  # of pi
FIRST_PREFIX_LENGTH = 0.5
R0_GRID = tuple(range(3, 21))
R0_DEFAULT = 3  # choose_r0(-1, 0.1) on R0_GRID
EXHAUSTIVE_LIMIT = 400_000


def e(theta: float) -> np.ndarray:
    return np.array([math.cos(theta), math.sin(theta)])


@dataclass
class SpiralParams:
    r0: float
    m_R: int = PREFIX_TURNS
    m_L: int = PREFIX_TURNS
    prefix_gamma_R: tuple = (PREFIX_ANGLE,) * PREFIX_TURNS
    prefix_gamma_L: tuple = (PREFIX_ANGLE,) * PREFIX_TURNS
    N_bar: int | None = None
    M: int | None = None
    h: float | None = None
    h_o: float | None = None
    w0: float | None = None
    K4: float | None = None
    q: float | None = None
    F: float | None = None
    N_R: int | None = None
    N_L: int | None = None
    prefix_lengths_R: list = field(default_factory=list)
    prefix_lengths_L: list = field(default_factory=list)
    widths_R: np.ndarray | None = None
    widths_L: np.ndarray | None = None
    lengths_R: np.ndarray | None = None
    lengths_L: np.ndarray | None = None
    gammas_R: list = field(default_factory=list)
    gammas_L: list = field(default_factory=list)
    end_width_R: float | None = None
    end_width_L: float | None = None

    def summary(self) -> dict:
        return {
            "r0": self.r0, "m_R": self.m_R, "m_L": self.m_L,
            "prefix_gamma_R_over_pi": [str(g) for g in self.prefix_gamma_R],
            "prefix_gamma_L_over_pi": [str(g) for g in self.prefix_gamma_L],
            "N_bar": self.N_bar, "M": self.M, "h": self.h, "h_o": self.h_o, "w0": self.w0, "K4": self.K4,
            "q": self.q, "F": self.F, "N_R": self.N_R, "N_L": self.N_L,
            "prefix_lengths_R": self.prefix_lengths_R, "prefix_lengths_L": self.prefix_lengths_L,
        }


def prefix_factor(gammas) -> float:
    return float(np.prod([1.0 / math.cos(float(g) * math.pi) for g in gammas]))


def spiral_height(n_bar: int, r0: float, pi_R: float, pi_L: float) -> float:
    """Opening height that closes the double spiral for a given N_bar."""
    wf = wrap_factor(n_bar)
    return r0 * wf / (pi_R + math.sqrt(1.0 + wf) * pi_L)


def choose_n_bar(h_o: float, r0: float, pi_R: float, pi_L: float, n_min: int = 18) -> int:
    """Largest even N_bar with spiral_height(N_bar) >= h_o."""
    if spiral_height(n_min, r0, pi_R, pi_L) < h_o:
        raise NoSolution("h_o too large for the smallest admissible N_bar")
    lo, hi = n_min // 2, n_min // 2
    while spiral_height(2 * hi, r0, pi_R, pi_L) >= h_o:
        lo, hi = hi, 2 * hi
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if spiral_height(2 * mid, r0, pi_R, pi_L) >= h_o:
            lo = mid
        else:
            hi = mid
    return 2 * lo


def rounds(r0: float, k_f: float) -> int:
    return int(math.floor(1.0 / (2.0 * math.pi * r0 * k_f))) + 1


def _prefix(start_inner, heading0, h, gammas, target_inner):
    """Cells of a prefix chain ending with its inner corner at ``target_inner``."""
    m = len(gammas)
    heads = [heading0]
    for g in gammas:
        heads.append(heads[-1] + float(g) * math.pi)
    d = np.asarray(target_inner, float) - np.asarray(start_inner, float)
    rhs = d - FIRST_PREFIX_LENGTH * e(heads[0])
    mid = sum((e(heads[i]) for i in range(1, m - 1)), np.zeros(2))
    A = np.column_stack([mid, e(heads[m - 1])])
    b, c = np.linalg.solve(A, rhs)
    if not (b > 0 and c > 0):
        raise GeometryError(f"prefix lengths not positive (b={b:.4g}, c={c:.4g}); increase r0")
    lengths = [FIRST_PREFIX_LENGTH] + [float(b)] * (m - 2) + [float(c)]
    widths = [h]
    for g in gammas:
        widths.append(widths[-1] / math.cos(float(g) * math.pi))
    I = [np.asarray(start_inner, float)]
    O = [I[0] + widths[0] * e(heads[0] - math.pi / 2)]
    for i in range(m):
        I.append(I[-1] + lengths[i] * e(heads[i]))
        O.append(I[-1] + widths[i + 1] * e(heads[i + 1] - math.pi / 2))
    return I, O, lengths, widths, heads


def build_spiral_geometry(k_d: float, k_f: float, r0: float = R0_DEFAULT, h_o: float | None = None,
                          prefix_R=None, prefix_L=None):
    """All corner points of the double spiral (no table yet)."""
    prefix_R = tuple(prefix_R or (PREFIX_ANGLE,) * PREFIX_TURNS)
    prefix_L = tuple(prefix_L or (PREFIX_ANGLE,) * PREFIX_TURNS)
    for g in prefix_R + prefix_L:
        if not (0 < g < Fraction(1, 2)):
            raise GeometryError("prefix angles must lie in (0, pi/2)")
    if sum(prefix_R) != 1 or sum(prefix_L) != 1:
        raise GeometryError("each prefix must turn by exactly pi")
    if h_o is None:
        h_o = compute_h_o(k_d, k_f)
    pi_R, pi_L = prefix_factor(prefix_R), prefix_factor(prefix_L)
    n_bar = choose_n_bar(h_o, r0, pi_R, pi_L)
    h = spiral_height(n_bar, r0, pi_R, pi_L)
    M = rounds(r0, k_f)
    gbar = 2.0 * math.pi / n_bar
    logc = math.log1p(-2.0 * math.sin(0.5 * gbar) ** 2)  # log(cos(gbar)), as in wrap_factor
    F = 1.0 + wrap_factor(n_bar)
    q = 1.0 + h * pi_R / r0
    if not (1.0 < q < F):
        raise GeometryError("spiral walls out of order (need 1 < q < F)")
    A = np.array(CENTER)

    def P(j):
        return A + r0 * math.exp(-j * logc) * e(math.pi / 2 + j * gbar)

    def Q(j):
        return A + q * r0 * math.exp(-j * logc) * e(math.pi / 2 + j * gbar)

    # right spiral: prefix from the right opening, then j = 0 .. M N - 1
    IR, OR, lR, wR, _ = _prefix((1.0, h), 0.0, h, prefix_R, P(0))
    IL, OL, lL, wL, _ = _prefix((0.0, 0.0), math.pi, h, prefix_L, Q(-n_bar // 2))
    gap = max(np.linalg.norm(OR[-1] - Q(0)), np.linalg.norm(OL[-1] - P(n_bar // 2)),
              np.linalg.norm(IR[-1] - P(0)), np.linalg.norm(IL[-1] - Q(-n_bar // 2)))
    if gap > 1e-9:
        raise GeometryError(f"prefix does not meet the regular spiral (gap {gap:.3e})")
    IR[-1], OR[-1] = P(0), Q(0)
    IL[-1], OL[-1] = Q(-n_bar // 2), P(n_bar // 2)
    nreg = M * n_bar
    jr = np.arange(nreg + 1)
    rad = r0 * np.exp(-jr * logc)
    ang = math.pi / 2 + jr * gbar
    Pr = A + rad[:, None] * np.stack([np.cos(ang), np.sin(ang)], axis=-1)
    Qr = A + q * rad[:, None] * np.stack([np.cos(ang), np.sin(ang)], axis=-1)
    jl = np.arange(-n_bar // 2, nreg - n_bar // 2 + 1)
    radl = r0 * np.exp(-jl * logc)
    angl = math.pi / 2 + jl * gbar
    Ql = A + q * radl[:, None] * np.stack([np.cos(angl), np.sin(angl)], axis=-1)
    radp = r0 * np.exp(-(jl + n_bar) * logc)
    Pl = A + radp[:, None] * np.stack([np.cos(angl), np.sin(angl)], axis=-1)

    def cells(I_pre, O_pre, inner, outer):
        pre = [(I_pre[i], O_pre[i], O_pre[i + 1], I_pre[i + 1]) for i in range(len(I_pre) - 1)]
        pre = np.array(pre)
        reg = np.stack([inner[:-1], outer[:-1], outer[1:], inner[1:]], axis=1)
        return np.concatenate([pre, reg])

    cells_R = cells(IR, OR, Pr, Qr)
    cells_L = cells(IL, OL, Ql, Pl)
    reg_len_R = rad[:-1] * math.tan(gbar)
    reg_len_L = q * radl[:-1] * math.tan(gbar)
    reg_w_R = (q - 1.0) * rad
    reg_w_L = radp - q * radl
    sp = SpiralParams(
        r0=r0, m_R=len(prefix_R), m_L=len(prefix_L), prefix_gamma_R=prefix_R, prefix_gamma_L=prefix_L,
        N_bar=n_bar, M=M, h=h, h_o=h_o, w0=h * pi_R, K4=pi_R + math.sqrt(F) * pi_L, q=q, F=F,
        N_R=len(prefix_R) + nreg, N_L=len(prefix_L) + nreg, prefix_lengths_R=lR, prefix_lengths_L=lL,
        widths_R=np.concatenate([wR[:-1], reg_w_R[:-1]]), widths_L=np.concatenate([wL[:-1], reg_w_L[:-1]]),
        end_width_R=float(reg_w_R[-1]), end_width_L=float(reg_w_L[-1]),
        lengths_R=np.concatenate([lR, reg_len_R]), lengths_L=np.concatenate([lL, reg_len_L]),
        gammas_R=list(prefix_R) + [Fraction(2, n_bar)] * nreg,
        gammas_L=list(prefix_L) + [Fraction(2, n_bar)] * nreg,
    )
    return sp, cells_R, cells_L


def assemble_spiral_table(k_d: float, k_f: float, sp: SpiralParams, cells_R, cells_L):
    h = sp.h
    b = TableBuilder()
    b.arc((0.0, 0.0), (1.0, 0.0), k_f)
    cr = b.add_corridor("right-spiral", cells_R)
    for c in cells_R:
        b.seg(c[1], c[2], cr)
    b.seg(cells_R[-1][2], cells_R[-1][3], cr)
    for c in cells_R[::-1]:
        b.seg(c[3], c[0], cr)
    b.arc((1.0, h), (1.0, 1.0), k_d)
    b.arc((1.0, 1.0), (0.0, 1.0), k_d)
    b.arc((0.0, 1.0), (0.0, h), k_d)
    cl = b.add_corridor("left-spiral", cells_L)
    for c in cells_L:
        b.seg(c[1], c[2], cl)
    b.seg(cells_L[-1][2], cells_L[-1][3], cl)
    for c in cells_L[::-1]:
        b.seg(c[3], c[0], cl)
    return b.build("spiral", {"k_d": k_d, "k_f": k_f, "h": h, "spiral": sp.summary()})


# ------------------------------------------------------------ validation


@njit(cache=True)
def _orient(ax, ay, bx, by, cx, cy):
    return (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)


@njit(cache=True)
def segment_conflicts(segs, tol):
    """Pairs of segments that cross or touch away from shared endpoints.

    Exactly reversed twins (shared walls) are allowed.  Sweep on x.
    Returns the number of conflicts and the first pair.
    """
    n = segs.shape[0]
    xmin = np.minimum(segs[:, 0], segs[:, 2])
    order = np.argsort(xmin)
    count = 0
    fi, fj = -1, -1
    for ii in range(n):
        i = order[ii]
        ax, ay, bx, by = segs[i, 0], segs[i, 1], segs[i, 2], segs[i, 3]
        xmax_i = max(ax, bx)
        ymin_i, ymax_i = min(ay, by), max(ay, by)
        li = math.hypot(bx - ax, by - ay)
        for jj in range(ii + 1, n):
            j = order[jj]
            if xmin[j] > xmax_i + tol:
                break
            cx, cy, dx, dy = segs[j, 0], segs[j, 1], segs[j, 2], segs[j, 3]
            if min(cy, dy) > ymax_i + tol or max(cy, dy) < ymin_i - tol:
                continue
            if (abs(ax - dx) < tol and abs(ay - dy) < tol and abs(bx - cx) < tol and abs(by - cy) < tol):
                continue
            lj = math.hypot(dx - cx, dy - cy)
            o1 = _orient(ax, ay, bx, by, cx, cy) / li
            o2 = _orient(ax, ay, bx, by, dx, dy) / li
            o3 = _orient(cx, cy, dx, dy, ax, ay) / lj
            o4 = _orient(cx, cy, dx, dy, bx, by) / lj
            bad = False
            if o1 * o2 < 0 and o3 * o4 < 0 and min(abs(o1), abs(o2), abs(o3), abs(o4)) > tol:
                bad = True
            else:
                # an endpoint of one segment resting on the interior of the other
                for k in range(4):
                    if k == 0:
                        px, py, sx, sy, ex, ey, L, o = cx, cy, ax, ay, bx, by, li, o1
                    elif k == 1:
                        px, py, sx, sy, ex, ey, L, o = dx, dy, ax, ay, bx, by, li, o2
                    elif k == 2:
                        px, py, sx, sy, ex, ey, L, o = ax, ay, cx, cy, dx, dy, lj, o3
                    else:
                        px, py, sx, sy, ex, ey, L, o = bx, by, cx, cy, dx, dy, lj, o4
                    if abs(o) <= tol:
                        u = ((px - sx) * (ex - sx) + (py - sy) * (ey - sy)) / L
                        if tol < u < L - tol:
                            bad = True
            if bad:
                count += 1
                if fi < 0:
                    fi, fj = i, j
    return count, fi, fj


def wall_segments(t) -> np.ndarray:
    sel = t.kind == 0
    return np.ascontiguousarray(t.geom[sel, :4]), np.nonzero(sel)[0]


def intersection_report(t, sp: SpiralParams, cells_R, cells_L, tol: float = 1e-9) -> dict:
    segs, idx = wall_segments(t)
    rep = {"n_segments": int(len(segs))}
    if len(segs) <= EXHAUSTIVE_LIMIT:
        n, i, j = segment_conflicts(segs, tol)
        rep.update(method="sweep", conflicts=int(n), witness=[int(idx[i]), int(idx[j])] if n else None)
    else:
        # regular walls are parallel chords of the sectors at distances r < q r < F r; only the
        # prefixes and end walls need the numeric test
        m = sp.m_R
        pre = np.concatenate([cells_R[:m], cells_L[:sp.m_L], cells_R[-1:], cells_L[-1:]])
        keep = np.zeros(len(segs), bool)
        for c in pre:
            for a_, b_ in ((c[1], c[2]), (c[3], c[0]), (c[2], c[3])):
                hit = (np.abs(segs[:, 0] - a_[0]) < tol) & (np.abs(segs[:, 1] - a_[1]) < tol) & \
                      (np.abs(segs[:, 2] - b_[0]) < tol) & (np.abs(segs[:, 3] - b_[1]) < tol)
                keep |= hit
        A = np.array(CENTER)
        rad = np.minimum(np.hypot(segs[:, 0] - A[0], segs[:, 1] - A[1]),
                         np.hypot(segs[:, 2] - A[0], segs[:, 3] - A[1]))
        keep |= rad < 1.05 * sp.q * sp.F * sp.r0
        sub = np.ascontiguousarray(segs[keep])
        n, i, j = segment_conflicts(sub, tol)
        rep.update(method="structural+sweep", checked=int(keep.sum()), conflicts=int(n),
                   structural=bool(1.0 < sp.q < sp.F))
    rep["arc_conflicts"] = _arc_conflicts(t, segs)
    rep["ok"] = rep["conflicts"] == 0 and rep["arc_conflicts"] == 0 and rep.get("structural", True)
    return rep


def _arc_conflicts(t, segs, tol=1e-9) -> int:
    """Walls that cut a bulk arc (sampled test against the arc's disc side)."""
    bad = 0
    near = np.max(np.abs(segs[:, [0, 2]] - 0.5), axis=1) < 3.0
    near &= np.max(np.abs(segs[:, [1, 3]] - 0.5), axis=1) < 3.0
    ss = segs[near]
    ts = np.linspace(0.0, 1.0, 65)
    for i in np.nonzero(t.kind == 1)[0]:
        cx, cy, r, th0, sw = t.geom[i]
        for s in ss:
            pts = s[:2][None, :] + ts[:, None] * (s[2:] - s[:2])[None, :]
            d = np.hypot(pts[:, 0] - cx, pts[:, 1] - cy) - r
            if d.min() < -tol and d.max() > tol:
                ang = (np.arctan2(pts[:, 1] - cy, pts[:, 0] - cx) - th0) * np.sign(sw) % (2 * math.pi)
                cross = np.nonzero(np.diff(np.sign(d)) != 0)[0]
                for k in cross:
                    if tol < ang[k] * r < abs(sw) * r - tol:
                        bad += 1
    return bad


def spiral_certificate(t, sp: SpiralParams, cells_R, cells_L, k_f: float, grid: int = 400) -> GeometryCertificate:
    c1 = check_C1(t, grid=grid)
    inter = intersection_report(t, sp, cells_R, cells_L)
    l_o = 1.0 / k_f
    out = {}
    K1 = max(sp.end_width_R, sp.end_width_L) / sp.h_o
    sums = {"R": float(np.sum(sp.lengths_R)), "L": float(np.sum(sp.lengths_L))}
    K2 = max(sums.values()) / l_o
    k3 = []
    for w, L, g in ((sp.widths_R, sp.lengths_R, sp.gammas_R), (sp.widths_L, sp.lengths_L, sp.gammas_L)):
        gg = np.array([float(x) for x in g]) * math.pi
        k3.append(float(np.max(w * np.tan(gg) / L)))
    K3 = max(k3)
    ccw = all(g > 0 for g in sp.gammas_R) and all(g > 0 for g in sp.gammas_L)
    rational = all(isinstance(g, Fraction) for g in list(sp.gammas_R) + list(sp.gammas_L))
    lw = sum(float(np.sum(w * L)) for w, L in ((sp.widths_R, sp.lengths_R), (sp.widths_L, sp.lengths_L)))
    spiral_area = sum(float(np.sum(w * (2 * L + w * np.tan(np.array([float(x) for x in g]) * math.pi)) / 2))
                      for w, L, g in ((sp.widths_R, sp.lengths_R, sp.gammas_R),
                                      (sp.widths_L, sp.lengths_L, sp.gammas_L)))
    growth = sp.end_width_R / sp.widths_R[sp.m_R]
    growth_expected = math.exp(-sp.M * sp.N_bar * math.log(math.cos(2 * math.pi / sp.N_bar)))
    out.update(
        spiral_ok=bool(inter["ok"] and ccw and rational and min(sums.values()) >= l_o
                       and sp.h_o <= sp.h <= 2 * sp.h_o),
        intersections=inter, ccw=ccw, rational_angles=rational, K1=K1, K2=K2, K3=K3,
        sum_l={k: v for k, v in sums.items()}, l_o=l_o, sum_l_ge_l_o=min(sums.values()) >= l_o,
        h_bracket_ok=bool(sp.h_o <= sp.h <= 2 * sp.h_o), spiral_area=spiral_area,
        area_chain_bound=(2 + K3) / 2 * lw, regular_growth=float(growth),
        regular_growth_expected=growth_expected,
        spiral_params=sp.summary(),
    )
    return GeometryCertificate(c1.ok, c1.margin, c1.witness, True, table_area(t), table_diameter(t),
                               c1.grid_resolution, out)


def build_spiral_table(k_d: float, k_f: float, r0: float = R0_DEFAULT, h_o: float | None = None,
                       prefix_R=None, prefix_L=None, certify: bool = True):
    """``(Table, SpiralParams, GeometryCertificate)``; raises GeometryError on intersections."""
    sp, cR, cL = build_spiral_geometry(k_d, k_f, r0, h_o, prefix_R, prefix_L)
    t = assemble_spiral_table(k_d, k_f, sp, cR, cL)
    cert = spiral_certificate(t, sp, cR, cL, k_f) if certify else None
    if cert is not None and not cert.extra["intersections"]["ok"]:
        raise GeometryError(f"spiral walls intersect: {cert.extra['intersections']}")
    return t, sp, cert


def choose_r0(k_d: float, kf_max: float = 0.1, grid=R0_GRID) -> int:
    """Smallest r0 on the grid whose spiral table is free of intersections at ``kf_max``."""
    for r0 in grid:
        try:
            sp, cR, cL = build_spiral_geometry(k_d, kf_max, r0)
            t = assemble_spiral_table(k_d, kf_max, sp, cR, cL)
        except (GeometryError, NoSolution):
            continue
        if intersection_report(t, sp, cR, cL)["ok"]:
            return r0
    raise NoSolution("no r0 on the grid clears the bulk")
