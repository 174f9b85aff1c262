"""Focal coordinates of infinitesimal beams, the mirror equation, the
beta-disc dictionary, free flight and the tangent map of the return map.

A focal coordinate is a point of the projective line stored as a unit pair
``(p, q)`` with ``f = p / q``; ``q == 0`` is the parallel beam ``f = inf``.
For a tangent vector ``(ds, dalpha)`` at a point with angle ``alpha`` and
curvature ``k`` the outgoing focal distance is
``f+ = cos(alpha) ds / (k ds - dalpha)`` and the incoming one
``f- = cos(alpha) ds / (-k ds - dalpha)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from . import _kernels as K
from .geometry import ZERO_MINUS, ZERO_PLUS, FlatPointError


class ZeroVector(ValueError):
    pass


class SingularStep(ValueError):
    pass


@dataclass(frozen=True)
class FocalCoord:
    p: float
    q: float

    def __post_init__(self):
        n = math.hypot(self.p, self.q)
        if n == 0.0:
            raise ZeroVector("(0, 0) is not a projective point")
        s = 1.0 if (self.q > 0 or (self.q == 0 and self.p > 0)) else -1.0
        object.__setattr__(self, "p", s * self.p / n)
        object.__setattr__(self, "q", s * self.q / n)

    @classmethod
    def of(cls, f) -> "FocalCoord":
        if isinstance(f, FocalCoord):
            return f
        if math.isinf(f):
            return cls(1.0, 0.0)
        return cls(float(f), 1.0)

    @property
    def is_inf(self) -> bool:
        return self.q == 0.0

    @property
    def value(self) -> float:
        return math.inf if self.q == 0.0 else self.p / self.q

    @property
    def angle(self) -> float:
        """Position on RP^1 in [0, pi); increasing with f, inf at pi/2."""
        return math.atan2(self.p, self.q) % math.pi

    def distance(self, other: "FocalCoord") -> float:
        """Chordal projective distance |sin| of the angle between the two lines."""
        other = FocalCoord.of(other)
        return abs(self.p * other.q - self.q * other.p)

    def __neg__(self):
        return FocalCoord(-self.p, self.q)

    def __repr__(self):
        return f"FocalCoord({self.value!r})"


@dataclass(frozen=True)
class TangentVector:
    ds: float
    dalpha: float

    def __post_init__(self):
        if self.ds == 0.0 and self.dalpha == 0.0:
            raise ZeroVector("tangent vector must be nonzero")


def focal_from_vector(v: TangentVector, alpha: float, k: float):
    """``(f+, f-)`` of a tangent vector; ``ds = 0`` gives ``f+ = f- = 0``."""
    c = math.cos(alpha)
    fp = FocalCoord(c * v.ds, k * v.ds - v.dalpha)
    fm = FocalCoord(c * v.ds, -k * v.ds - v.dalpha)
    return fp, fm


def vector_from_focal(fp, alpha: float, k: float) -> TangentVector:
    """A tangent vector whose outgoing focal coordinate is ``fp``."""
    fp = FocalCoord.of(fp)
    ds = fp.p / math.cos(alpha)
    return TangentVector(ds, k * ds - fp.q)


def mirror_reflect(fm, k: float, alpha: float) -> FocalCoord:
    """Solve -1/f- + 1/f+ = 2k/cos(alpha) for f+ on the projective line."""
    fm = FocalCoord.of(fm)
    return FocalCoord(fm.p, fm.q + (2.0 * k / math.cos(alpha)) * fm.p)


def mirror_residual(fm, fp, k: float, alpha: float) -> float:
    """Cross-multiplied mirror equation: p- q+ - q- p+ - (2k/cos) p- p+ (0 when exact)."""
    fm, fp = FocalCoord.of(fm), FocalCoord.of(fp)
    return fm.p * fp.q - fm.q * fp.p - (2.0 * k / math.cos(alpha)) * fm.p * fp.p


def free_flight(fp, tau: float) -> FocalCoord:
    """Focal coordinate before the next collision, ``f- = f+ - tau``."""
    fp = FocalCoord.of(fp)
    return FocalCoord(fp.p - tau * fp.q, fp.q)


# ---------------------------------------------------------------- beta discs


def _beta_value(beta) -> float:
    if beta == ZERO_PLUS or beta == ZERO_MINUS:
        return 0.0
    return float(beta)


def focal_of_beta(beta, alpha: float, k: float) -> FocalCoord:
    """f+ whose focal point lies on the boundary of D_beta: f+ = 2cos(alpha)/(beta |k|)."""
    if k == 0.0:
        raise FlatPointError("the beta dictionary needs nonzero curvature")
    b = _beta_value(beta)
    return FocalCoord(2.0 * math.cos(alpha), b * abs(k)) if not math.isinf(b) else FocalCoord(0.0, 1.0)


def beta_of_focal(fp, alpha: float, k: float) -> float:
    if k == 0.0:
        raise FlatPointError("the beta dictionary needs nonzero curvature")
    fp = FocalCoord.of(fp)
    if fp.p == 0.0:
        return math.inf
    return 2.0 * math.cos(alpha) * fp.q / (fp.p * abs(k))


def beta_reflect(beta, k: float) -> float:
    """beta' = 4 sgn(k) - beta."""
    if k == 0.0:
        raise FlatPointError("beta reflection needs nonzero curvature")
    return 4.0 * math.copysign(1.0, k) - _beta_value(beta)


# ---------------------------------------------------------------- intervals


@dataclass(frozen=True)
class ProjectiveInterval:
    """Closed arc of RP^1 from ``lo`` to ``hi`` in the direction of increasing f."""

    lo: FocalCoord
    hi: FocalCoord

    @classmethod
    def of(cls, lo, hi) -> "ProjectiveInterval":
        return cls(FocalCoord.of(lo), FocalCoord.of(hi))

    @property
    def length(self) -> float:
        return (self.hi.angle - self.lo.angle) % math.pi

    def contains(self, f, tol: float = 0.0) -> bool:
        f = FocalCoord.of(f)
        pa = (f.angle - self.lo.angle) % math.pi
        if pa > 0.5 * (self.length + math.pi):
            pa -= math.pi
        return -tol <= pa <= self.length + tol

    def margins_in(self, target: "ProjectiveInterval"):
        """``(m_lo, m_hi)`` angular room at both ends; both >= 0 iff contained."""
        return K.interval_margins(self.lo.p, self.lo.q, self.hi.p, self.hi.q,
                                  target.lo.p, target.lo.q, target.hi.p, target.hi.q)

    def map(self, fn) -> "ProjectiveInterval":
        return ProjectiveInterval(fn(self.lo), fn(self.hi))

    def sample(self, n: int):
        a = self.lo.angle
        ts = a + self.length * np.linspace(0.0, 1.0, n)
        return [FocalCoord(math.sin(t), math.cos(t)) for t in ts]


# ------------------------------------------------------------- tangent map


@dataclass(frozen=True)
class JacobianStep:
    """2x2 differential in (ds, dalpha).

    ``exact`` holds the entries as rationals computed from the float step
    data.  Long near-grazing flights make |a d| exceed |det| by 1e7 or more,
    so a determinant taken from rounded entries loses about 1e-9 relative;
    the rational entries keep it exact.
    """

    a: float
    b: float
    c: float
    d: float
    alpha0: float
    k0: float
    alpha1: float
    k1: float
    exact: tuple | None = None

    @property
    def matrix(self) -> np.ndarray:
        return np.array([[self.a, self.b], [self.c, self.d]])

    @property
    def det(self) -> float:
        if self.exact is not None:
            a, b, c, d = self.exact
            return float(a * d - b * c)
        return self.a * self.d - self.b * self.c

    def apply(self, v: TangentVector) -> TangentVector:
        return TangentVector(self.a * v.ds + self.b * v.dalpha, self.c * v.ds + self.d * v.dalpha)

    def act(self, fp) -> FocalCoord:
        """Projective action on the outgoing focal coordinate."""
        w = self.apply(vector_from_focal(fp, self.alpha0, self.k0))
        return focal_from_vector(w, self.alpha1, self.k1)[0]

    def __matmul__(self, other: "JacobianStep") -> "JacobianStep":
        if self.exact is not None and other.exact is not None:
            a, b, c, d = self.exact
            e, f, g, h = other.exact
            ex = (a * e + b * g, a * f + b * h, c * e + d * g, c * f + d * h)
            return JacobianStep(*(float(v) for v in ex), other.alpha0, other.k0, self.alpha1, self.k1, ex)
        m = self.matrix @ other.matrix
        return JacobianStep(m[0, 0], m[0, 1], m[1, 0], m[1, 1], other.alpha0, other.k0, self.alpha1, self.k1)


def _exact_jacobian(a0, k0, a1, k1, tau, nflat):
    """Rational entries of the step differential; same formula as the orbit kernels."""
    c0, c1 = Fraction(math.cos(a0)), Fraction(math.cos(a1))
    k0, k1, tau = Fraction(k0), Fraction(k1), Fraction(tau)
    a = (tau * k0 - c0) / c1
    b = -tau / c1
    c = k0 - k1 * a
    d = -1 + k1 * tau / c1
    if nflat % 2 == 1:
        a, b, c, d = -a, -b, -c, -d
    return a, b, c, d


def jacobian_step(table, x, record, cos_tol: float = 1e-12) -> JacobianStep:
    """Differential of the step ``x -> record.end`` in (ds, dalpha).

    Flat collisions on the way only flip the sign of the matrix (a plane
    mirror is an isometry of the unfolded path).
    """
    y = record.end
    if math.cos(y.alpha) < cos_tol:
        raise SingularStep("grazing arrival")
    k0, k1 = float(table.curvature[x.piece]), float(table.curvature[y.piece])
    ex = _exact_jacobian(x.alpha, k0, y.alpha, k1, record.tau, record.n_flat)
    return JacobianStep(*(float(v) for v in ex), x.alpha, k0, y.alpha, k1, ex)


def optics_step(table, record, fp) -> FocalCoord:
    """f+ at the end of a flight: free flights and mirrors composed along the path.

    With recorded flat hits the path is followed segment by segment (each flat
    hit is a mirror with k = 0); otherwise one flight of length ``tau``.
    """
    fp = FocalCoord.of(fp)
    if record.flat_hits:
        for ev in record.flat_hits:
            fp = mirror_reflect(free_flight(fp, ev.tau), 0.0, 0.0)
        rest = record.tau - sum(ev.tau for ev in record.flat_hits)
    else:
        rest = record.tau
    y = record.end
    return mirror_reflect(free_flight(fp, rest), float(table.curvature[y.piece]), y.alpha)


def propagate_interval(interval: ProjectiveInterval, record, k1: float, alpha1: float) -> ProjectiveInterval:
    """Image of an f+ interval through a flight of length ``record.tau`` and the
    mirror at the endpoint.  Both maps have determinant one, so the image is
    the arc between the endpoint images, taken in the increasing direction."""

    def push(f):
        return mirror_reflect(free_flight(f, record.tau), k1, alpha1)

    return interval.map(push)
