import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hypb.geometry import ArcPiece, GeometryError
from hypb.table import (DISPERSING, FLAT, FOCUSING, MainTableParams, Table, arc_arc_intersections,
                        build_bulk_table, build_main_table, build_polygon_table, check_C1,
                        circular_segment_area, compute_h_o, h_o_estimate_corrected, table_area,
                        table_diameter, unit_square_table, wrap_factor)

from conftest import transform_table


# ------------------------------------------------------------------ builders


def _closed_ccw(t: Table):
    assert t.closure_gap() < 1e-10
    assert table_area(t) > 0


def test_main_table_chain(optimal_01):
    t, _ = optimal_01
    _closed_ccw(t)
    assert (t.label == FOCUSING).sum() == 1
    assert (t.label == DISPERSING).sum() == 3
    foc = t.piece(int(np.nonzero(t.label == FOCUSING)[0][0]))
    assert abs(foc.sweep) < math.pi


def test_focusing_sagitta_vanishes():
    for kf in (0.1, 0.01, 0.001):
        t = build_main_table(MainTableParams(-1.0, kf, 0.1, 1.0))
        arc = t.piece(int(np.nonzero(t.label == FOCUSING)[0][0]))
        sag = -min(arc.point_at(s)[1] for s in np.linspace(0, arc.length, 2001))
        assert sag == pytest.approx((1 / kf) * (1 - math.sqrt(1 - kf * kf / 4)), rel=1e-5)


def test_unit_radius_dispersing_arcs():
    t = build_bulk_table(-1.0)
    for i in np.nonzero(t.label == DISPERSING)[0]:
        p = t.piece(int(i))
        assert p.radius == pytest.approx(1.0)
        assert (p.end - p.start).norm() == pytest.approx(1.0, abs=1e-12)
        # bulges inward: the midpoint lies inside the unit square
        mid = p.point_at(p.length / 2)
        assert 0 < mid[0] < 1 and 0 < mid[1] < 1


def test_adjacent_arcs_meet_only_at_corners():
    kd = -(math.sqrt(2) - 1e-3)
    t = build_bulk_table(kd)
    arcs = [t.piece(int(i)) for i in np.nonzero(t.label == DISPERSING)[0]]
    for a, b in zip(arcs, arcs[1:]):
        pts = arc_arc_intersections(a, b)
        shared = a.end
        assert pts and all(math.dist(p, shared) < 1e-8 for p in pts)


def test_invalid_main_params():
    with pytest.raises((ValueError, GeometryError)):
        build_main_table(MainTableParams(-1.5, 0.1, 0.1, 1.0))
    with pytest.raises((ValueError, GeometryError)):
        build_main_table(MainTableParams(-1.0, 0.1, -0.1, 1.0))


def test_serialization_round_trip(optimal_01):
    from hypb.io import dumps, loads
    t, _ = optimal_01
    t2 = Table.from_dict(loads(dumps(t.to_dict())))
    assert t2.content_hash() == t.content_hash()


# ------------------------------------------------------------------ (C1)


def test_c1_margin_signs(optimal_01):
    t, cert = optimal_01
    h_o = t.params["h_o"]
    assert cert.c1_ok
    assert 0 <= cert.c1_margin <= cert.grid_resolution
    hi = check_C1(build_main_table(MainTableParams(-1.0, 0.1, 2 * h_o, 10.0)))
    lo = check_C1(build_main_table(MainTableParams(-1.0, 0.1, 0.5 * h_o, 10.0)))
    assert hi.margin > 0
    assert lo.margin < 0


def test_h_o_trace_monotone():
    res = compute_h_o(-1.0, 0.1, full=True)
    assert res.monotone
    assert res.h_o == pytest.approx(0.39656, rel=1e-4)


def test_h_o_matches_closed_form():
    # the closed form is an independent oracle for the worst pair
    assert compute_h_o(-1.0, 0.1) == pytest.approx(h_o_estimate_corrected(-1.0, 0.1), rel=1e-8)


def test_optimal_l_o(optimal_001):
    t, cert = optimal_001
    assert t.params["l"] == pytest.approx(100.0)
    assert cert.c2_ok


def test_c1_isometry_invariant(optimal_01):
    t, cert = optimal_01
    t2 = transform_table(t, 1.1, (2.0, 5.0))
    assert check_C1(t2).margin == pytest.approx(cert.c1_margin, abs=1e-9)


# ------------------------------------------------------------- measurements


def test_unit_square_area_diameter():
    t = unit_square_table()
    assert table_area(t) == pytest.approx(1.0, abs=1e-15)
    assert table_diameter(t) == pytest.approx(math.sqrt(2), abs=1e-15)


def test_bulk_area_closed_form():
    t = build_bulk_table(-1.0)
    assert table_area(t) == pytest.approx(1 - 3 * circular_segment_area(1.0, 1.0), abs=1e-12)


@settings(max_examples=50, deadline=None)
@given(kf=st.floats(0.01, 1.5))
def test_bulk_area_with_focusing(kf):
    t = build_bulk_table(-1.0, kf)
    expect = 1 - 3 * circular_segment_area(1.0, 1.0) + circular_segment_area(1 / kf, 1.0)
    assert table_area(t) == pytest.approx(expect, abs=1e-12)


@settings(max_examples=50, deadline=None)
@given(th=st.floats(0, 2 * math.pi), x=st.floats(-10, 10), y=st.floats(-10, 10))
def test_area_diameter_isometry_invariant(th, x, y):
    t = build_bulk_table(-0.7, 0.3)
    t2 = transform_table(t, th, (x, y))
    assert table_area(t2) == pytest.approx(table_area(t), abs=1e-11)
    assert table_diameter(t2) == pytest.approx(table_diameter(t), abs=1e-9)


def test_polygon_area():
    t = build_polygon_table(np.array([[0, 0], [2, 0], [2, 1], [0, 1]], float))
    assert table_area(t) == pytest.approx(2.0)
    assert (t.label == FLAT).all()


# --------------------------------------------------------------- wrap factor


def test_wrap_factor_limit():
    n = 10 ** 4
    assert 0.99 <= n * wrap_factor(n) / (2 * math.pi ** 2) <= 1.01


def test_wrap_factor_matches_direct_formula():
    for n in (5, 18, 100, 1000):
        assert wrap_factor(n) == pytest.approx(math.cos(2 * math.pi / n) ** (-n) - 1, rel=1e-12)


def test_wrap_factor_monotone_scan():
    vals = np.array([wrap_factor(n) for n in range(5, 10 ** 6 + 1)])
    assert np.all(np.diff(vals) < 0)
    assert vals[-1] < 2e-5


def test_wrap_factor_domain():
    with pytest.raises(ValueError):
        wrap_factor(4)
