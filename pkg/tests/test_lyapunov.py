import math

import numpy as np
import pytest

from hypb.dynamics import PhasePoint
from hypb.io import dumps
from hypb.lyapunov import MIN_STEPS, default_section, lyapunov_orbit, lyapunov_survey
from hypb.table import build_bulk_table, unit_square_table


def test_square_orbits_have_zero_exponent():
    t = unit_square_table()
    assert default_section(t) == "full"
    n = 10 ** 4
    for x0, v0 in ((PhasePoint(0, 0.3, 0.4), (1.0, 0.0)), (PhasePoint(1, 0.71, -1.1), (0.3, 0.8)),
                   (PhasePoint(3, 0.05, 0.9), (0.0, 1.0))):
        lam, n_eff, truncated = lyapunov_orbit(t, x0, n, v0)
        assert not truncated and n_eff == n
        assert abs(lam) < 1 / math.sqrt(n)


def test_square_survey_not_positive():
    e = lyapunov_survey(unit_square_table(), 200, 2000, 1)
    lo, _ = e.ci(0.99)
    assert lo <= 0.0 <= e.mean + 3 * e.stderr


def test_dispersing_bulk_positive_and_converged():
    t = build_bulk_table(-1.0)
    a = lyapunov_survey(t, 40, 10 ** 4, 1)
    b = lyapunov_survey(t, 40, 10 ** 5, 1)
    assert a.mean > 0 and a.ci(0.99)[0] > 0
    assert abs(a.mean - b.mean) < 0.05 * b.mean


def test_optimal_positive(optimal_001):
    t, _ = optimal_001
    e = lyapunov_survey(t, 100, 10 ** 4, 1)
    assert e.excluded == 0
    assert e.ci(0.99)[0] > 0
    assert e.mean > -3 * e.stderr
    assert abs(e.mean - e.mean_half) < 5 * e.stderr_stat


def test_start_vector_independence(optimal_001):
    t, _ = optimal_001
    n = 2000
    a = lyapunov_survey(t, 100, n, 4, vector_stream=1)
    b = lyapunov_survey(t, 100, n, 4, vector_stream=2)
    d = np.abs(a.per_orbit - b.per_orbit)
    assert np.mean(d < 5 / math.sqrt(n)) >= 0.95


def test_time_reversal(optimal_001):
    t, _ = optimal_001
    f = lyapunov_survey(t, 100, 5000, 2)
    r = lyapunov_survey(t, 100, 5000, 2, time_reversed=True)
    assert abs(f.mean - r.mean) < 2 * math.hypot(f.stderr, r.stderr)


def test_deterministic_and_thread_invariant(optimal_01):
    t, _ = optimal_01
    a = lyapunov_survey(t, 300, 500, 7)
    b = lyapunov_survey(t, 300, 500, 7, threads=3)
    assert dumps(a.to_dict()) == dumps(b.to_dict())
    assert np.array_equal(a.per_orbit, b.per_orbit)
    c = lyapunov_survey(t, 300, 500, 8)
    assert not np.array_equal(a.per_orbit, c.per_orbit)


def test_short_orbits_excluded(optimal_01):
    t, _ = optimal_01
    e = lyapunov_survey(t, 50, 300, 1)
    # below MIN_STEPS the run length itself is the threshold, so nothing is dropped
    assert e.excluded == 0 and len(e.per_orbit) == 50
    assert (e.n_effective >= min(MIN_STEPS, 300)).all()


def test_zero_vector_rejected():
    with pytest.raises(ValueError):
        lyapunov_orbit(unit_square_table(), PhasePoint(0, 0.3, 0.4), 10, (0.0, 0.0))
