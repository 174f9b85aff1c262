import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hypb.geometry import (ZERO_MINUS, ZERO_PLUS, ArcPiece, FlatPointError, GeometryError, Point2, Ray,
                           SegmentPiece, chord_I, disc_at, make_disc_D_beta, ray_intersect_piece,
                           region_contains)
from hypb.table import DISPERSING, FOCUSING, build_main_table, MainTableParams, check_C1

from conftest import global_s_of_point, transform_table

finite = st.floats(-5, 5, allow_nan=False)


def full_circle(cx, cy, r):
    return ArcPiece(Point2(cx, cy), r, 0.0, 2 * math.pi)


# ------------------------------------------------------------ intersections


def test_ray_circle_two_hits():
    hits = ray_intersect_piece(Ray(Point2(0, 0), Point2(1, 0)), full_circle(2, 0, 1))
    assert [round(t, 12) for t, _ in hits] == [1.0, 3.0]


def test_ray_segment_hit():
    (t, p), = ray_intersect_piece(Ray(Point2(0, 0), Point2(1, 0)), SegmentPiece(Point2(2, -1), Point2(2, 1)))
    assert t == pytest.approx(2.0, abs=1e-14)
    assert p == pytest.approx((2.0, 0.0), abs=1e-14)


def test_tangent_ray_rejected_and_near_tangent_accepted():
    circle = full_circle(2, 0, 1)
    # grazing line y = 1: |cos| of the incidence is about sqrt(2 eps)
    grazing = ray_intersect_piece(Ray(Point2(0, 1 - 1e-20), Point2(1, 0)), circle)
    assert grazing == []
    # |cos| = sqrt(1 - 0.99999^2) ~ 4.5e-3 is far above the 1e-9 rule
    ok = ray_intersect_piece(Ray(Point2(0, 0.99999), Point2(1, 0)), circle)
    assert len(ok) == 2


def test_ray_requires_unit_direction():
    with pytest.raises(GeometryError):
        Ray(Point2(0, 0), Point2(2, 0))


def test_t_min_excludes_origin_hit():
    seg = SegmentPiece(Point2(0, -1), Point2(0, 1))
    assert ray_intersect_piece(Ray(Point2(0, 0), Point2(1, 0)), seg) == []


@settings(max_examples=300, deadline=None)
@given(ox=finite, oy=finite, th=st.floats(0, 2 * math.pi), cx=finite, cy=finite, r=st.floats(0.1, 4),
       t0=st.floats(0, 2 * math.pi), sw=st.floats(0.1, 2 * math.pi) | st.floats(-2 * math.pi, -0.1))
def test_arc_hits_lie_on_piece_and_on_ray(ox, oy, th, cx, cy, r, t0, sw):
    ray = Ray(Point2(ox, oy), Point2(math.cos(th), math.sin(th)))
    arc = ArcPiece(Point2(cx, cy), r, t0, sw)
    hits = ray_intersect_piece(ray, arc)
    ts = [t for t, _ in hits]
    assert ts == sorted(ts)
    for t, p in hits:
        assert t > 1e-9
        assert arc.distance(p) < 1e-10
        assert p == ray.at(t)


@settings(max_examples=300, deadline=None)
@given(ox=finite, oy=finite, th=st.floats(0, 2 * math.pi), ax=finite, ay=finite, bx=finite, by=finite)
def test_segment_hits_lie_on_piece(ox, oy, th, ax, ay, bx, by):
    if math.hypot(bx - ax, by - ay) < 1e-3:
        return
    ray = Ray(Point2(ox, oy), Point2(math.cos(th), math.sin(th)))
    seg = SegmentPiece(Point2(ax, ay), Point2(bx, by))
    for t, p in ray_intersect_piece(ray, seg):
        assert seg.distance(p) < 1e-10
        assert p == ray.at(t)


# ------------------------------------------------------------------- discs


def test_disc_beta2_focusing(optimal_01):
    t, _ = optimal_01
    s = t.offsets[0] + 0.3  # first piece is the focusing arc
    D = make_disc_D_beta(t, s, 2.0)
    assert D.kind == "disc"
    assert D.radius == pytest.approx(5.0, rel=1e-14)
    piece, sig = t.locate_s(s)
    p = piece.point_at(sig)
    assert abs(D.signed_depth(p)) < 1e-12
    # internal: the center is on the inner side
    n = piece.tangent_at(sig).perp()
    assert (D.center - p).dot(n) > 0


def test_disc_beta_minus4_dispersing(optimal_01):
    t, _ = optimal_01
    i = int(np.nonzero(t.label == DISPERSING)[0][0])
    s = t.offsets[i] + 0.1
    D = make_disc_D_beta(t, s, -4.0)
    assert D.radius == pytest.approx(0.25, rel=1e-14)
    piece, sig = t.locate_s(s)
    n = piece.tangent_at(sig).perp()
    assert (D.center - piece.point_at(sig)).dot(n) < 0


def test_zero_plus_is_internal_halfplane(optimal_01):
    t, _ = optimal_01
    D = make_disc_D_beta(t, 0.2, ZERO_PLUS)
    assert D.kind == "internal-halfplane"
    assert make_disc_D_beta(t, 0.2, ZERO_MINUS).kind == "external-halfplane"


def test_flat_point_error(optimal_01):
    t, _ = optimal_01
    flat = int(np.nonzero(t.label == 0)[0][0])
    with pytest.raises(FlatPointError):
        make_disc_D_beta(t, t.offsets[flat] + 0.01, 2.0)


def test_region_contains_center_and_outside():
    D = disc_at((0, 0), (0, 1), 1.0, 2.0)
    assert region_contains(D, D.center)
    far = D.center + Point2(D.radius * (1 + 1e-6), 0)
    assert not region_contains(D, far)


@settings(max_examples=200, deadline=None)
@given(px=finite, py=finite, th=st.floats(0, 2 * math.pi), k=st.floats(0.05, 3) | st.floats(-3, -0.05),
       b=st.floats(0.1, 8), qx=finite, qy=finite)
def test_beta_mirror_images(px, py, th, k, b, qx, qy):
    n = Point2(math.cos(th), math.sin(th))
    Dp, Dm = disc_at((px, py), n, k, b), disc_at((px, py), n, k, -b)
    # reflect q across the tangent line through p
    q = Point2(qx, qy)
    d = (q - Point2(px, py)).dot(n)
    qr = q - n.scale(2 * d)
    assert Dp.signed_depth(q) == pytest.approx(Dm.signed_depth(qr), abs=1e-9)


@settings(max_examples=200, deadline=None)
@given(th=st.floats(0, 2 * math.pi), k=st.floats(0.05, 3), b1=st.floats(0.1, 8), b2=st.floats(0.1, 8),
       qx=finite, qy=finite)
def test_beta_monotone(th, k, b1, b2, qx, qy):
    b_hi, b_lo = max(b1, b2), min(b1, b2)
    n = Point2(math.cos(th), math.sin(th))
    small, big = disc_at((0, 0), n, k, b_hi), disc_at((0, 0), n, k, b_lo)
    if region_contains(small, (qx, qy)):
        assert region_contains(big, (qx, qy), tol=1e-12)


# ----------------------------------------------------------------- chord I


def _disp_foc_s(t, u, v):
    d = np.nonzero(t.label == DISPERSING)[0][0]
    f = np.nonzero(t.label == FOCUSING)[0][0]
    return t.offsets[d] + u * t.length[d], t.offsets[f] + v * t.length[f]


def test_chord_I_diameter_when_line_hits_center(optimal_01):
    t, _ = optimal_01
    top = int(np.nonzero(t.label == DISPERSING)[0][1])  # top arc, normal points down at the bottom arc
    sd = t.offsets[top] + 0.4 * t.length[top]
    D = make_disc_D_beta(t, sd, -2.0)
    piece, sig = t.locate_s(sd)
    a = piece.point_at(sig)
    fi = int(np.nonzero(t.label == FOCUSING)[0][0])
    arc = t.piece(fi)
    # intersect the ray from the disc center through a with the focusing arc
    u = (a - D.center).scale(1.0 / (a - D.center).norm())
    hits = ray_intersect_piece(Ray(a, u), arc)
    assert hits
    sf = t.offsets[fi] + arc.locate(hits[0][1])
    p, q = chord_I(t, sd, sf)
    assert (p - q).norm() == pytest.approx(1.0, abs=1e-10)


@settings(max_examples=100, deadline=None)
@given(u=st.floats(0.01, 0.99), v=st.floats(0.01, 0.99))
def test_chord_I_endpoints_on_circle(optimal_01, u, v):
    t, _ = optimal_01
    sd, sf = _disp_foc_s(t, u, v)
    D = make_disc_D_beta(t, sd, -2.0)
    for e in chord_I(t, sd, sf):
        assert abs((e - D.center).norm() ** 2 - D.radius ** 2) < 1e-10


@pytest.mark.parametrize("reflect", [False, True])
def test_chord_I_isometry_equivariant(optimal_01, reflect):
    t, _ = optimal_01
    th, sh = 0.7, (3.0, -2.0)
    t2 = transform_table(t, th, sh, reflect)
    R = np.array([[math.cos(th), -math.sin(th)], [math.sin(th), math.cos(th)]])
    if reflect:
        R = R @ np.diag([-1.0, 1.0])

    def image(p):
        return Point2(*(R @ np.asarray(p) + np.asarray(sh)))

    rng = np.random.default_rng(5)
    for _ in range(20):
        sd, sf = _disp_foc_s(t, *rng.uniform(0.02, 0.98, 2))
        pd, pf = t.locate_s(sd), t.locate_s(sf)
        sd2 = global_s_of_point(t2, image(pd[0].point_at(pd[1])))
        sf2 = global_s_of_point(t2, image(pf[0].point_at(pf[1])))
        a = sorted(tuple(np.round(image(e), 9)) for e in chord_I(t, sd, sf))
        b = sorted(tuple(np.round(e, 9)) for e in chord_I(t2, sd2, sf2))
        assert np.allclose(a, b, atol=2e-9)


def _dense_inside(t, sd, sf, n=20001):
    p, q = chord_I(t, sd, sf)
    D4 = make_disc_D_beta(t, sf, 4.0)
    ts = np.linspace(0.0, 1.0, n)
    pts = np.outer(1 - ts, p) + np.outer(ts, q)
    return np.min(D4.radius - np.hypot(pts[:, 0] - D4.center[0], pts[:, 1] - D4.center[1]))


def test_chord_I_in_D4_at_h_o_not_at_09(optimal_01):
    t, cert = optimal_01
    sd, sf = cert.c1_witness
    assert _dense_inside(t, sd, sf) >= -1e-9
    tb = build_main_table(MainTableParams(-1.0, 0.1, 0.9 * t.params["h_o"], 10.0))
    w = check_C1(tb).witness
    assert _dense_inside(tb, *w) < 0
    assert not region_contains(make_disc_D_beta(tb, w[1], 4.0), chord_I(tb, *w))
