"""History-dependent cone bundle in f+ and the numerical check of its
eventual strict invariance under the return map.

Cones (f+ intervals at a point with angle alpha, curvature k):

* C0, dispersing points: [-cos(alpha)/|k|, 0]
* C1, focusing points:   [-inf, 0] (its end at infinity is open)
* C2, focusing points:   [cos(alpha)/(2|k|), cos(alpha)/|k|]

Assignment: dispersing -> C0; focusing after focusing -> C2; focusing after
dispersing -> C1 without flat hits on the way, C2 with at least one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels as K
from .dynamics import (DEFAULT_TOL, FlightRecord, PhasePoint, Tolerances, first_return_map,
                       initial_states, run_chunked)
from .table import DISPERSING, FOCUSING, LABELS, Table
from .tangent import FocalCoord, ProjectiveInterval, jacobian_step, propagate_interval, vector_from_focal

CASES = K.CASE_NAMES
CONE_NAMES = ("C0", "C1", "C2")
NONSTRICT_ALLOWED = ("II.1", "III.2.1", "IV.2.1")
CONTAIN_TOL = 1e-11


@dataclass(frozen=True)
class Cone:
    label: str
    interval: ProjectiveInterval

    @property
    def code(self) -> int:
        return CONE_NAMES.index(self.label)


def cone_at(label: str, alpha: float, k: float) -> Cone:
    code = CONE_NAMES.index(label)
    plo, qlo, phi, qhi = K.cone_endpoints(code, alpha, k)
    return Cone(label, ProjectiveInterval(FocalCoord(plo, qlo), FocalCoord(phi, qhi)))


@dataclass(frozen=True)
class StepContext:
    current: str
    previous: str | None
    had_flat_hit: bool

    @classmethod
    def from_records(cls, table: Table, prev: FlightRecord | None, x: PhasePoint) -> "StepContext":
        if prev is None:
            return cls(LABELS[int(table.label[x.piece])], None, False)
        return cls(LABELS[int(table.label[x.piece])], LABELS[int(table.label[prev.start.piece])],
                   prev.n_flat > 0)


def _code(label):
    return {"flat": 0, "focusing": FOCUSING, "dispersing": DISPERSING, None: -1}[label]


def assign_cone_label(ctx: StepContext) -> str:
    return CONE_NAMES[K.cone_assign(_code(ctx.current), _code(ctx.previous), ctx.had_flat_hit)]


def assign_cone(ctx: StepContext, x: PhasePoint, table: Table) -> Cone:
    return cone_at(assign_cone_label(ctx), x.alpha, float(table.curvature[x.piece]))


def classify_case(ctx_in: StepContext, ctx_out: StepContext) -> str:
    cone_in = CONE_NAMES.index(assign_cone_label(ctx_in))
    return CASES[K.case_tag(_code(ctx_in.current), _code(ctx_out.current), cone_in, ctx_out.had_flat_hit)]


@dataclass
class StepVerdict:
    invariant: bool
    strict: bool
    case: str
    margin: float
    margin_lo: float
    margin_hi: float
    open_end_contact: bool = False
    witness: dict | None = None


def check_step(table: Table, x: PhasePoint, record: FlightRecord, cone_in: Cone, ctx_out: StepContext,
               ctx_in: StepContext | None = None, tol: float = CONTAIN_TOL) -> StepVerdict:
    """Transport ``cone_in`` along ``record`` and compare with the cone assigned at its end."""
    y = record.end
    k1 = float(table.curvature[y.piece])
    image = propagate_interval(cone_in.interval, record, k1, y.alpha)
    target = assign_cone(ctx_out, y, table)
    m_lo, m_hi = (math.sin(m) for m in image.margins_in(target.interval))
    m = min(m_lo, m_hi)
    invariant = m >= -tol
    open_contact = cone_in.label == "C1" and m_hi > tol and abs(m_lo) <= tol
    strict = invariant and ((m_lo > tol and m_hi > tol) or open_contact)
    if ctx_in is not None:
        case = classify_case(ctx_in, ctx_out)
    else:
        case = CASES[K.case_tag(int(table.label[x.piece]), int(table.label[y.piece]), cone_in.code,
                                record.n_flat > 0)]
    witness = None
    if not invariant:
        witness = {"x": [x.piece, x.sigma, x.alpha], "end": [y.piece, y.sigma, y.alpha], "tau": record.tau,
                   "n_flat": record.n_flat, "margin": m}
    return StepVerdict(invariant, strict, case, m, m_lo, m_hi, open_contact, witness)


def vectors_in_cone(cone: Cone, alpha: float, k: float, rng: np.random.Generator, n: int = 10):
    """Random tangent vectors whose f+ lies in the cone."""
    a, L = cone.interval.lo.angle, cone.interval.length
    out = []
    for t in a + L * rng.uniform(0.0, 1.0, size=n):
        out.append(vector_from_focal(FocalCoord(math.sin(t), math.cos(t)), alpha, k))
    return out


# ------------------------------------------------------------------- orbits


@dataclass
class OrbitReport:
    n_steps: int
    verdicts: list
    first_strict: int | None
    min_margin: float
    case_histogram: dict
    terminated: object = None


def verify_orbit(table: Table, x0: PhasePoint, n_steps: int, tol: Tolerances = DEFAULT_TOL) -> OrbitReport:
    """Online cone assignment along an orbit.  The first return step only sets
    up the history; verdicts start with the second one (step index 1)."""
    rec = first_return_map(table, x0, True, tol)
    verdicts = []
    hist = {c: 0 for c in CASES}
    first = None
    if not isinstance(rec, FlightRecord):
        return OrbitReport(0, verdicts, None, math.inf, hist, rec)
    prev = rec
    x = rec.end
    terminated = None
    for step in range(1, n_steps + 1):
        r = first_return_map(table, x, True, tol)
        if not isinstance(r, FlightRecord):
            terminated = r
            break
        ctx_in = StepContext.from_records(table, prev, x)
        ctx_out = StepContext.from_records(table, r, r.end)
        v = check_step(table, x, r, assign_cone(ctx_in, x, table), ctx_out, ctx_in)
        verdicts.append(v)
        hist[v.case] += 1
        if v.strict and first is None:
            first = step
        prev, x = r, r.end
    mm = min((v.margin for v in verdicts), default=math.inf)
    return OrbitReport(len(verdicts), verdicts, first, mm, hist, terminated)


# ------------------------------------------------------------------- survey


@dataclass
class SurveyReport:
    table_hash: str
    seed: int
    N: int
    n: int
    violations: list
    case_histogram: dict
    nonstrict_histogram: dict
    case_min_margin: dict
    margin_quantiles: dict
    n_of_x_quantiles: dict
    singular_counts: dict
    completed: int
    reached_strict: int
    open_end_contacts: int
    corridor_passages: int
    passage_failures: int
    long_flight_failures: int
    chord_tau_max_error: float
    max_chord_run: int
    tolerances: dict = field(default_factory=dict)

    @property
    def n_violations(self) -> int:
        return sum(v["count"] for v in self.violations)

    @property
    def passed(self) -> bool:
        return self.n_violations == 0

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        d["n_violations"] = self.n_violations
        d["passed"] = self.passed
        return d


def _quantiles(x) -> dict:
    x = np.asarray(x, dtype=float)
    x = x[np.isfinite(x)]
    if len(x) == 0:
        return {}
    qs = (0.0, 0.01, 0.1, 0.5, 0.9, 0.99, 1.0)
    return {f"q{q:g}": float(np.quantile(x, q)) for q in qs}


def run_survey_kernel(table: Table, starts: np.ndarray, n_steps: int, tol: Tolerances = DEFAULT_TOL,
                      ntol: float = CONTAIN_TOL, threads: int | None = None):
    a = table.kernel_arrays()
    foc = table.curvature[table.label == FOCUSING]
    kf = float(foc[0]) if len(foc) else math.inf

    def kernel(st, *rest):
        return K.survey_orbits(a["kind"], a["geom"], a["length"], a["label"], a["curv"], a["bbox"], a["bulk"],
                               a["portals"], a["cells"], a["cstart"], a["crect"], st, *rest)

    return run_chunked(kernel, starts, (int(n_steps), tol.t_min, tol.on_piece, tol.corner, tol.tangent,
                                        tol.flat_cap, ntol, kf), threads)


def survey(table: Table, N_orbits: int, n_steps: int, seed: int, tol: Tolerances = DEFAULT_TOL,
           attempts: int = 4, ntol: float = CONTAIN_TOL, threads: int | None = None) -> SurveyReport:
    """Cone survey over mu-distributed orbits; each orbit has its own random stream."""
    starts = initial_states(table, seed, N_orbits, attempts)
    (n_done, status, used, singular, first_strict, min_margin, case_hist, nonstrict, case_min, viol,
     viol_step, viol_case, viol_margin, open_c, passages, passage_fail, long_fail, chord_err,
     run_max) = run_survey_kernel(table, starts, n_steps, tol, ntol, threads)
    completed = status == K.OK
    violations = []
    for o in np.nonzero(viol > 0)[0]:
        att = int(used[o])
        violations.append({
            "orbit": int(o), "seed": int(seed), "attempt": att,
            "x0": [int(starts[o, att, 0]), float(starts[o, att, 1]), float(starts[o, att, 2])],
            "step": int(viol_step[o]), "case": CASES[int(viol_case[o])], "margin": float(viol_margin[o]),
            "count": int(viol[o]),
        })
    sing = {K_name: int(singular[:, code].sum()) for code, K_name in
            ((K.CORNER, "corner-hit"), (K.TANGENTIAL, "tangential-hit"), (K.ESCAPED, "escaped"),
             (K.CAP, "cap-exceeded"))}
    sing["abandoned_orbits"] = int((~completed).sum())
    fs = first_strict[completed]
    case_min_all = case_min.min(axis=0) if len(case_min) else np.full(9, np.inf)
    return SurveyReport(
        table_hash=table.content_hash(), seed=int(seed), N=int(N_orbits), n=int(n_steps),
        violations=violations,
        case_histogram={c: int(case_hist[:, i].sum()) for i, c in enumerate(CASES)},
        nonstrict_histogram={c: int(nonstrict[:, i].sum()) for i, c in enumerate(CASES)},
        case_min_margin={c: (float(case_min_all[i]) if np.isfinite(case_min_all[i]) else None)
                         for i, c in enumerate(CASES)},
        margin_quantiles=_quantiles(min_margin[completed]),
        n_of_x_quantiles=_quantiles(fs[fs >= 0]),
        singular_counts=sing,
        completed=int(completed.sum()),
        reached_strict=int((fs >= 0).sum()),
        open_end_contacts=int(open_c.sum()),
        corridor_passages=int(passages.sum()),
        passage_failures=int(passage_fail.sum()),
        long_flight_failures=int(long_fail.sum()),
        chord_tau_max_error=float(chord_err.max()) if len(chord_err) else 0.0,
        max_chord_run=int(run_max.max()) if len(run_max) else 0,
        tolerances={**tol.to_dict(), "containment": ntol},
    )


def replay_violation(table: Table, v: dict, n_steps: int) -> OrbitReport:
    """Recompute an orbit from a survey witness with the pure-Python checker."""
    x0 = PhasePoint(int(v["x0"][0]), float(v["x0"][1]), float(v["x0"][2]))
    return verify_orbit(table, x0, min(n_steps, int(v["step"]) + 1))


__all__ = ["Cone", "StepContext", "StepVerdict", "assign_cone", "classify_case", "check_step", "verify_orbit",
           "survey", "SurveyReport", "cone_at", "jacobian_step"]
