"""Planar primitives: points, rays, circular arcs, segments and tangent discs.

Boundary pieces are oriented so that the table interior lies on the left of
the direction of increasing arclength.  Curvature is positive on focusing
pieces (the interior is on the concave side) and negative on dispersing ones.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Union

T_MIN = 1e-9
TANGENT_TOL = 1e-9
ON_PIECE_TOL = 1e-10

ZERO_PLUS = "0+"
ZERO_MINUS = "0-"

TWO_PI = 2.0 * math.pi


class GeometryError(ValueError):
    pass


class FlatPointError(ValueError):
    pass


class Point2(NamedTuple):
    x: float
    y: float

    def __add__(self, other):
        return Point2(self.x + other[0], self.y + other[1])

    def __sub__(self, other):
        return Point2(self.x - other[0], self.y - other[1])

    def scale(self, a: float) -> "Point2":
        return Point2(a * self.x, a * self.y)

    def dot(self, other) -> float:
        return self.x * other[0] + self.y * other[1]

    def cross(self, other) -> float:
        return self.x * other[1] - self.y * other[0]

    def norm(self) -> float:
        return math.hypot(self.x, self.y)

    def perp(self) -> "Point2":
        """Rotation by +90 degrees."""
        return Point2(-self.y, self.x)


def unit(v) -> Point2:
    n = math.hypot(v[0], v[1])
    if n == 0.0:
        raise GeometryError("zero vector has no direction")
    return Point2(v[0] / n, v[1] / n)


@dataclass(frozen=True)
class Ray:
    origin: Point2
    direction: Point2

    def __post_init__(self):
        if abs(math.hypot(*self.direction) - 1.0) > 1e-12:
            raise GeometryError("ray direction must be a unit vector")

    def at(self, t: float) -> Point2:
        return Point2(self.origin.x + t * self.direction.x, self.origin.y + t * self.direction.y)


@dataclass(frozen=True)
class SegmentPiece:
    a: Point2
    b: Point2
    label: str = "flat"

    def __post_init__(self):
        if self.a == self.b:
            raise GeometryError("degenerate segment")

    @property
    def length(self) -> float:
        return (self.b - self.a).norm()

    @property
    def curvature(self) -> float:
        return 0.0

    @property
    def start(self) -> Point2:
        return Point2(*self.a)

    @property
    def end(self) -> Point2:
        return Point2(*self.b)

    def point_at(self, sigma: float) -> Point2:
        u = unit(self.b - self.a)
        return Point2(*self.a) + u.scale(sigma)

    def tangent_at(self, sigma: float) -> Point2:
        return unit(self.b - self.a)

    def locate(self, p) -> float:
        """Arclength of the orthogonal projection of ``p``."""
        return (Point2(*p) - self.a).dot(unit(self.b - self.a))

    def distance(self, p) -> float:
        d = self.b - self.a
        t = min(max((Point2(*p) - self.a).dot(d) / d.dot(d), 0.0), 1.0)
        return (Point2(*p) - (Point2(*self.a) + d.scale(t))).norm()


@dataclass(frozen=True)
class ArcPiece:
    """Arc ``center + radius*(cos th, sin th)`` for th from ``theta0`` to ``theta0 + sweep``.

    A positive sweep runs counterclockwise around the center, which puts the
    center on the interior side: a focusing piece.
    """

    center: Point2
    radius: float
    theta0: float
    sweep: float

    def __post_init__(self):
        if self.radius <= 0.0:
            raise GeometryError("arc radius must be positive")
        if self.sweep == 0.0 or abs(self.sweep) > TWO_PI + 1e-12:
            raise GeometryError("arc sweep must be nonzero and at most one turn")

    @property
    def sign(self) -> float:
        return 1.0 if self.sweep > 0 else -1.0

    @property
    def curvature(self) -> float:
        return self.sign / self.radius

    @property
    def label(self) -> str:
        return "focusing" if self.sweep > 0 else "dispersing"

    @property
    def length(self) -> float:
        return self.radius * abs(self.sweep)

    def angle_at(self, sigma: float) -> float:
        return self.theta0 + self.sign * sigma / self.radius

    def point_at(self, sigma: float) -> Point2:
        th = self.angle_at(sigma)
        return Point2(self.center[0] + self.radius * math.cos(th), self.center[1] + self.radius * math.sin(th))

    def tangent_at(self, sigma: float) -> Point2:
        th = self.angle_at(sigma)
        return Point2(-self.sign * math.sin(th), self.sign * math.cos(th))

    @property
    def start(self) -> Point2:
        return self.point_at(0.0)

    @property
    def end(self) -> Point2:
        return self.point_at(self.length)

    def angular_offset(self, p) -> float:
        """Angle travelled from ``theta0`` (along the sweep) to reach the direction of ``p``."""
        th = math.atan2(p[1] - self.center[1], p[0] - self.center[0])
        return ((th - self.theta0) * self.sign) % TWO_PI

    def locate(self, p) -> float:
        return self.radius * self.angular_offset(p)

    def distance(self, p) -> float:
        off = self.angular_offset(p)
        if off <= abs(self.sweep):
            return abs(math.hypot(p[0] - self.center[0], p[1] - self.center[1]) - self.radius)
        return min(Point2(*p).__sub__(self.start).norm(), Point2(*p).__sub__(self.end).norm())


Piece = Union[ArcPiece, SegmentPiece]


def inner_normal(piece: Piece, sigma: float) -> Point2:
    return piece.tangent_at(sigma).perp()


def arc_through(a, b, curvature: float) -> ArcPiece:
    """Minor arc from ``a`` to ``b`` with the interior on the left of travel.

    Positive curvature bulges away from the interior (focusing), negative
    curvature bulges into it (dispersing).
    """
    a, b = Point2(*a), Point2(*b)
    if curvature == 0.0:
        raise GeometryError("use a segment for zero curvature")
    r = 1.0 / abs(curvature)
    chord = (b - a).norm()
    if chord >= 2.0 * r:
        raise GeometryError("chord longer than the diameter")
    sgn = 1.0 if curvature > 0 else -1.0
    u = unit(b - a)
    mid = Point2(0.5 * (a.x + b.x), 0.5 * (a.y + b.y))
    center = mid + u.perp().scale(sgn * math.sqrt(r * r - 0.25 * chord * chord))
    theta0 = math.atan2(a.y - center.y, a.x - center.x)
    sweep = sgn * 2.0 * math.asin(0.5 * chord / r)
    return ArcPiece(center, r, theta0, sweep)


# ---------------------------------------------------------------- intersections


def _ray_circle(ray: Ray, center, radius: float):
    ox, oy = ray.origin.x - center[0], ray.origin.y - center[1]
    b = ray.direction.x * ox + ray.direction.y * oy
    c = ox * ox + oy * oy - radius * radius
    disc = b * b - c
    if disc < 0.0:
        return ()
    sq = math.sqrt(disc)
    # stable pair of roots
    q = -b - sq if b > 0 else -b + sq
    roots = [q]
    if q != 0.0:
        roots.append(c / q)
    return tuple(sorted(set(roots)))


def ray_intersect_piece(ray: Ray, piece: Piece, t_min: float = T_MIN, tangent_tol: float = TANGENT_TOL):
    """Forward intersections ``(t, point)`` of a ray with a piece, sorted by ``t``.

    Hits where the ray grazes the piece (|cos| of the angle with the normal
    below ``tangent_tol``) are dropped.
    """
    out = []
    d = ray.direction
    if isinstance(piece, SegmentPiece):
        a, b = Point2(*piece.a), Point2(*piece.b)
        e = b - a
        den = d.cross(e)
        if abs(den) < tangent_tol * e.norm():
            return []
        w = a - ray.origin
        t = w.cross(e) / den
        u = w.cross(d) / den
        if t > t_min and -ON_PIECE_TOL <= u * e.norm() <= e.norm() + ON_PIECE_TOL:
            out.append((t, ray.at(t)))
        return out
    for t in _ray_circle(ray, piece.center, piece.radius):
        if t <= t_min:
            continue
        p = ray.at(t)
        if piece.angular_offset(p) * piece.radius > piece.length + ON_PIECE_TOL:
            # allow hits just before theta0 that wrapped around
            if (TWO_PI - piece.angular_offset(p)) * piece.radius > ON_PIECE_TOL:
                continue
        nrm = unit(p - piece.center)
        if abs(nrm.dot(d)) < tangent_tol:
            continue
        out.append((t, p))
    out.sort(key=lambda h: h[0])
    return out


# ---------------------------------------------------------------- tangent discs


@dataclass(frozen=True)
class DiscRegion:
    """Closed disc or halfplane tangent to the boundary at ``base``.

    For halfplanes ``normal`` points into the region.
    """

    kind: str
    base: Point2
    beta: object
    normal: Point2
    center: Point2 | None = None
    radius: float | None = None

    def signed_depth(self, p) -> float:
        """Positive inside, zero on the boundary, negative outside (a length)."""
        p = Point2(*p)
        if self.kind == "disc":
            return self.radius - (p - self.center).norm()
        return (p - self.base).dot(self.normal)


def _beta_sign(beta) -> float:
    if beta == ZERO_PLUS:
        return 1.0
    if beta == ZERO_MINUS:
        return -1.0
    return 1.0 if beta > 0 else -1.0


def disc_at(point, normal_in, k: float, beta) -> DiscRegion:
    """D_beta at a boundary point with inner normal ``normal_in`` and curvature ``k``."""
    point, normal_in = Point2(*point), Point2(*normal_in)
    if beta in (ZERO_PLUS, ZERO_MINUS):
        n = normal_in if beta == ZERO_PLUS else normal_in.scale(-1.0)
        kind = "internal-halfplane" if beta == ZERO_PLUS else "external-halfplane"
        return DiscRegion(kind, point, beta, n)
    if k == 0.0:
        raise FlatPointError("D_beta needs nonzero curvature unless beta is 0+ or 0-")
    if beta == 0:
        raise ValueError("beta = 0 is ambiguous; pass '0+' or '0-'")
    if math.isinf(beta):
        return DiscRegion("disc", point, beta, normal_in, point, 0.0)
    radius = 1.0 / abs(beta * k)
    center = point + normal_in.scale(_beta_sign(beta) * radius)
    return DiscRegion("disc", point, beta, normal_in, center, radius)


def make_disc_D_beta(table, s: float, beta) -> DiscRegion:
    piece, sigma = table.locate_s(s)
    k = piece.curvature
    if k == 0.0 and beta not in (ZERO_PLUS, ZERO_MINUS):
        # a junction with a curved piece ending at s belongs to that piece
        for want in (1, 2):
            p2, s2 = table.locate_s(s, want=want)
            if p2.curvature != 0.0:
                return disc_at(p2.point_at(s2), inner_normal(p2, s2), p2.curvature, beta)
        raise FlatPointError(f"s={s} lies on a flat piece")
    return disc_at(piece.point_at(sigma), inner_normal(piece, sigma), k, beta)


def line_disc_chord(p0, p1, region: DiscRegion):
    """Intersection of the full line through ``p0`` and ``p1`` with a disc, or ``None``."""
    p0, p1 = Point2(*p0), Point2(*p1)
    d = unit(p1 - p0)
    w = p0 - region.center
    b = d.dot(w)
    c = w.dot(w) - region.radius ** 2
    disc = b * b - c
    if disc < 0.0:
        return None
    sq = math.sqrt(disc)
    return (p0 + d.scale(-b - sq), p0 + d.scale(-b + sq))


def chord_I(table, s_disp: float, s_foc: float):
    """I(s', s''): the line through the two boundary points cut by D_{-2}(s')."""
    pd, sd = table.locate_s(s_disp, want=2)  # label codes: 1 focusing, 2 dispersing
    pf, sf = table.locate_s(s_foc, want=1)
    if pd.curvature >= 0 or pf.curvature <= 0:
        raise ValueError("chord_I needs a dispersing s' and a focusing s''")
    a = pd.point_at(sd)
    b = pf.point_at(sf)
    disc = make_disc_D_beta(table, s_disp, -2.0)
    chord = line_disc_chord(b, a, disc)
    if chord is None:
        # s' sits on the disc boundary, so the line always meets it
        raise GeometryError("empty I(s', s''): the line misses D_-2(s')")
    return chord


def region_contains(region: DiscRegion, p, tol: float = 0.0) -> bool:
    """Membership of a point, or of a segment given as a pair of points (convexity)."""
    if len(p) == 2 and not isinstance(p[0], (int, float)):
        return all(region.signed_depth(q) >= -tol for q in p)
    return region.signed_depth(p) >= -tol
