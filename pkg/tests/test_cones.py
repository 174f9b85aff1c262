import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hypb import _kernels as K
from hypb.cones import (CASES, NONSTRICT_ALLOWED, StepContext, assign_cone, assign_cone_label, check_step,
                        classify_case, cone_at, replay_violation, run_survey_kernel, survey, vectors_in_cone,
                        verify_orbit)
from hypb.dynamics import FlightRecord, PhasePoint, first_return_map, initial_states
from hypb.geometry import ZERO_MINUS
from hypb.io import dumps
from hypb.table import DISPERSING, FOCUSING, MainTableParams, build_main_table
from hypb.tangent import FocalCoord, focal_from_vector, focal_of_beta, jacobian_step


def ctx(cur, prev, flat):
    return StepContext(cur, prev, flat)


# -------------------------------------------------------------- assignment


def test_assignment_rules():
    for prev in ("dispersing", "focusing", None):
        for flat in (False, True):
            assert assign_cone_label(ctx("dispersing", prev, flat)) == "C0"
    assert assign_cone_label(ctx("focusing", "focusing", False)) == "C2"
    assert assign_cone_label(ctx("focusing", "dispersing", True)) == "C2"
    assert assign_cone_label(ctx("focusing", "dispersing", False)) == "C1"


def test_case_examples():
    d_in = ctx("dispersing", "dispersing", False)
    assert classify_case(d_in, ctx("dispersing", "dispersing", False)) == "I"
    assert classify_case(d_in, ctx("focusing", "dispersing", True)) == "II.2"
    assert classify_case(d_in, ctx("focusing", "dispersing", False)) == "II.1"
    f_c2 = ctx("focusing", "focusing", False)
    assert classify_case(f_c2, ctx("focusing", "focusing", False)) == "IV.2.1"
    assert classify_case(f_c2, ctx("focusing", "focusing", True)) == "IV.2.2"
    assert classify_case(f_c2, ctx("dispersing", "focusing", False)) == "III.2.1"
    f_c1 = ctx("focusing", "dispersing", False)
    assert classify_case(f_c1, ctx("dispersing", "focusing", True)) == "III.1"
    assert classify_case(f_c1, ctx("focusing", "focusing", False)) == "IV.1"


def test_all_nine_cases_reachable():
    labels = ("dispersing", "focusing")
    seen = set()
    for c0 in labels:
        for p0 in labels:
            for f0 in (False, True):
                for c1 in labels:
                    for f1 in (False, True):
                        seen.add(classify_case(ctx(c0, p0, f0), ctx(c1, c0, f1)))
    assert seen == set(CASES)


@settings(max_examples=200, deadline=None)
@given(a=st.floats(-1.5, 1.5), k=st.floats(0.01, 3))
def test_cone_endpoints_match_beta_dictionary(a, k):
    c0 = cone_at("C0", a, -k).interval
    assert c0.lo == focal_of_beta(-2.0, a, -k) and c0.hi == focal_of_beta(math.inf, a, -k)
    c1 = cone_at("C1", a, k).interval
    assert c1.lo == focal_of_beta(ZERO_MINUS, a, k) and c1.hi == focal_of_beta(math.inf, a, k)
    c2 = cone_at("C2", a, k).interval
    assert c2.lo == focal_of_beta(4.0, a, k) and c2.hi == focal_of_beta(2.0, a, k)
    assert c2.lo.value == pytest.approx(math.cos(a) / (2 * k)) and c2.hi.value == pytest.approx(math.cos(a) / k)
    assert c0.lo.value == pytest.approx(-math.cos(a) / k)


# ------------------------------------------------------------ single steps


def _orbit_steps(t, seed, n_orbits, n_steps):
    """Yield (x, record, ctx_in, ctx_out) along orbits, skipping the bootstrap step."""
    for row in initial_states(t, seed, n_orbits, 1)[:, 0]:
        x = PhasePoint(int(row[0]), row[1], row[2])
        prev = first_return_map(t, x)
        if not isinstance(prev, FlightRecord):
            continue
        x = prev.end
        for _ in range(n_steps):
            r = first_return_map(t, x)
            if not isinstance(r, FlightRecord):
                break
            yield x, r, StepContext.from_records(t, prev, x), StepContext.from_records(t, r, r.end)
            prev, x = r, r.end


def test_step_verdicts_by_case(optimal_01):
    t, _ = optimal_01
    kf = t.params["k_f"]
    seen = {c: 0 for c in CASES}
    for x, r, ci, co in _orbit_steps(t, 13, 60, 100):
        v = check_step(t, x, r, assign_cone(ci, x, t), co, ci)
        seen[v.case] += 1
        assert v.invariant
        if v.strict is False:
            assert v.case in NONSTRICT_ALLOWED
        if v.case in ("I", "II.2"):
            assert v.strict and v.margin > 0
        if v.case == "II.2":
            assert r.tau > 2 / kf
        if v.case == "IV.2.1":
            assert r.tau == pytest.approx(2 * math.cos(x.alpha) / kf, abs=1e-9)
    assert seen["I"] > 0 and seen["II.2"] > 0


@pytest.mark.parametrize("alpha", [1.55, -1.55, 1.565])
def test_chord_step_invariant_not_strict(optimal_01, alpha):
    t, _ = optimal_01
    kf = t.params["k_f"]
    f = int(np.nonzero(t.label == FOCUSING)[0][0])
    x = PhasePoint(f, 0.5 * t.length[f], alpha)
    r = first_return_map(t, x)
    assert r.end.piece == f and r.n_flat == 0
    ci = ctx("focusing", "focusing", False)
    v = check_step(t, x, r, assign_cone(ci, x, t), ctx("focusing", "focusing", False), ci)
    assert v.case == "IV.2.1"
    assert r.tau == pytest.approx(2 * math.cos(alpha) / kf, abs=1e-9)
    # the upper end cos/k of C2 is mapped onto itself
    assert v.invariant and not v.strict
    assert abs(v.margin_hi) < 1e-11 and v.margin_lo > 0


def test_parallel_end_lands_on_c2_boundary(optimal_01):
    t, _ = optimal_01
    f = int(np.nonzero(t.label == FOCUSING)[0][0])
    x = PhasePoint(f, 0.5 * t.length[f], 1.56)
    r = first_return_map(t, x)
    assert r.end.piece == f and r.n_flat == 0
    ci = ctx("focusing", "dispersing", False)
    v = check_step(t, x, r, assign_cone(ci, x, t), ctx("focusing", "focusing", False), ci)
    assert v.case == "IV.1" and v.open_end_contact and v.strict


def test_vectors_agree_with_intervals(optimal_01):
    t, _ = optimal_01
    rng = np.random.default_rng(6)
    n = 0
    for x, r, ci, co in _orbit_steps(t, 14, 30, 50):
        cin = assign_cone(ci, x, t)
        v = check_step(t, x, r, cin, co, ci)
        if not v.invariant:
            continue
        J = jacobian_step(t, x, r)
        target = assign_cone(co, r.end, t).interval
        k0, k1 = float(t.curvature[x.piece]), float(t.curvature[r.end.piece])
        for w in vectors_in_cone(cin, x.alpha, k0, rng, 10):
            fp, _ = focal_from_vector(J.apply(w), r.end.alpha, k1)
            assert target.contains(fp, tol=1e-9)
            n += 1
    assert n > 10000


def test_chord_runs_bounded(optimal_01):
    t, _ = optimal_01
    f = int(np.nonzero(t.label == FOCUSING)[0][0])
    sweep = abs(t.piece(f).sweep)
    for row in initial_states(t, 15, 200, 1)[:, 0]:
        x = PhasePoint(int(row[0]), row[1], row[2])
        run = 0
        for _ in range(200):
            r = first_return_map(t, x)
            if not isinstance(r, FlightRecord):
                break
            if x.piece == f and r.end.piece == f and r.n_flat == 0:
                run += 1
                assert run <= math.ceil(sweep / (math.pi - 2 * abs(x.alpha)))
            else:
                run = 0
            x = r.end


# ----------------------------------------------------------------- surveys


def test_survey_zero_violations(optimal_01):
    t, _ = optimal_01
    rep = survey(t, 1000, 300, 3)
    assert rep.passed
    assert rep.completed >= 995
    assert set(c for c, n in rep.nonstrict_histogram.items() if n) <= set(NONSTRICT_ALLOWED)
    assert rep.reached_strict == rep.completed
    assert rep.case_min_margin["I"] > 0
    assert rep.passage_failures == 0 and rep.long_flight_failures == 0
    assert rep.chord_tau_max_error < 1e-9


def test_survey_deterministic(optimal_01):
    t, _ = optimal_01
    a, b = survey(t, 200, 100, 9), survey(t, 200, 100, 9, threads=2)
    assert dumps(a.to_dict()) == dumps(b.to_dict())
    assert dumps(a.to_dict()) != dumps(survey(t, 200, 100, 10).to_dict())


def test_kernel_agrees_with_python_checker(optimal_01):
    t, _ = optimal_01
    starts = initial_states(t, 12, 40, 4)
    out = run_survey_kernel(t, starts, 60)
    n_done, status, used, first_strict, min_margin, case_hist = out[0], out[1], out[2], out[4], out[5], out[6]
    checked = 0
    for o in range(len(starts)):
        if status[o] != K.OK:
            continue
        a = int(used[o])
        rep = verify_orbit(t, PhasePoint(int(starts[o, a, 0]), starts[o, a, 1], starts[o, a, 2]), 60)
        assert rep.n_steps + 1 == n_done[o]  # the kernel also counts the bootstrap step
        assert [rep.case_histogram[c] for c in CASES] == list(case_hist[o])
        assert (rep.first_strict if rep.first_strict is not None else -1) == first_strict[o]
        assert rep.min_margin == pytest.approx(min_margin[o], abs=1e-12)
        checked += 1
    assert checked >= 38


def test_negative_control():
    h_o = 0.39656
    t = build_main_table(MainTableParams(-1.0, 0.1, 0.5 * h_o, 10.0))
    rep = survey(t, 300, 300, 1)
    assert not rep.passed
    assert {v["case"] for v in rep.violations} <= {"II.1", "III.2.1"}
    assert all(v["margin"] < 0 for v in rep.violations)
    v = rep.violations[0]
    replay = replay_violation(t, v, 300)
    bad = [w for w in replay.verdicts if not w.invariant]
    assert bad and bad[0].case == v["case"]
    assert replay.verdicts.index(bad[0]) + 1 == v["step"]
    assert bad[0].margin == pytest.approx(v["margin"], abs=1e-12)
    assert bad[0].witness is not None


def test_spiral_survey(spiral_01):
    t, _, _ = spiral_01
    rep = survey(t, 200, 200, 2)
    assert rep.passed
    assert rep.corridor_passages > 0 and rep.passage_failures == 0
