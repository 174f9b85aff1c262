"""Largest Lyapunov exponent of the return map from renormalized products of
tangent matrices."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels as K
from .dynamics import DEFAULT_TOL, PhasePoint, Tolerances, initial_states, orbit_rng, run_chunked
from .table import FLAT, Table

BURN_IN = 100
MIN_STEPS = 1000


@dataclass
class LyapunovEstimate:
    """Mean exponent over orbits.

    ``stderr_stat`` is the standard error of the mean over orbits.  ``stderr``
    adds in quadrature the finite-length drift ``|mean(n) - mean(n/2)|``, which
    dominates when the per-orbit value decays like log(n)/n (parabolic
    dynamics, e.g. flat polygons).
    """

    mean: float
    stderr: float
    stderr_stat: float
    mean_half: float
    per_orbit: np.ndarray
    n_steps: int
    N_orbits: int
    seed: int
    section: str
    excluded: int = 0
    starts: np.ndarray | None = None
    n_effective: np.ndarray | None = None
    extra: dict = field(default_factory=dict)

    def ci(self, level: float = 0.99):
        from scipy.stats import norm
        z = float(norm.ppf(0.5 + level / 2.0))
        return self.mean - z * self.stderr, self.mean + z * self.stderr

    @property
    def drift(self) -> float:
        return abs(self.mean - self.mean_half)

    def to_dict(self) -> dict:
        lo, hi = self.ci(0.99)
        return {"mean": self.mean, "stderr": self.stderr, "stderr_stat": self.stderr_stat,
                "mean_half": self.mean_half, "drift": self.drift, "ci99": [lo, hi], "n_steps": self.n_steps,
                "N_orbits": self.N_orbits, "seed": self.seed, "section": self.section,
                "excluded": self.excluded, "burn_in": BURN_IN, **self.extra}


def default_section(table: Table) -> str:
    return "psi" if np.any(table.label != FLAT) else "full"


def _run(table: Table, starts, vecs, n_steps, burn, section, tol, threads=None):
    a = table.kernel_arrays()
    search = a["bulk"] if section == "psi" else a["allp"]
    # the start vector rides along as two extra columns so chunks stay aligned
    packed = np.concatenate([starts, np.broadcast_to(vecs[:, None, :], (len(vecs), starts.shape[1], 2))], axis=2)

    def kernel(st, *rest):
        return K.lyapunov_orbits(a["kind"], a["geom"], a["length"], a["label"], a["curv"], a["bbox"], search,
                                 a["portals"], a["cells"], a["cstart"], a["crect"],
                                 np.ascontiguousarray(st[:, :, :3]), np.ascontiguousarray(st[:, 0, 3:]), *rest)

    return run_chunked(kernel, packed, (int(n_steps), int(burn), tol.t_min, tol.on_piece, tol.corner, tol.tangent,
                                        tol.flat_cap, section == "psi"), threads)


def lyapunov_orbit(table: Table, x0: PhasePoint, n_steps: int, v0=(1.0, 0.0), burn: int = BURN_IN,
                   section: str | None = None, tol: Tolerances = DEFAULT_TOL):
    """``(lambda_hat, n_effective, truncated)`` along one orbit."""
    section = section or default_section(table)
    v = np.asarray(v0, dtype=float)
    if not np.any(v):
        raise ValueError("v0 must be nonzero")
    starts = np.array([[[x0.piece, x0.sigma, x0.alpha]]], dtype=float)
    lam, _, n_eff, status, _ = _run(table, starts, (v / np.linalg.norm(v))[None, :], n_steps, burn, section, tol)
    return float(lam[0]), int(n_eff[0]), bool(status[0] != K.OK)


def random_unit_vectors(seed: int, n: int, stream: int = 1) -> np.ndarray:
    out = np.empty((n, 2))
    for o in range(n):
        th = np.random.default_rng([int(seed), int(o), int(stream)]).uniform(0.0, 2.0 * math.pi)
        out[o] = (math.cos(th), math.sin(th))
    return out


def lyapunov_survey(table: Table, N_orbits: int, n_steps: int, seed: int, section: str | None = None,
                    time_reversed: bool = False, vector_stream: int = 1, burn: int = BURN_IN,
                    tol: Tolerances = DEFAULT_TOL, attempts: int = 4,
                    threads: int | None = None) -> LyapunovEstimate:
    """mu-sampled survey.  With ``time_reversed`` the inverse map R M R is
    iterated, R(s, alpha) = (s, -alpha), which amounts to starting from R(x)
    with the reflected vector."""
    section = section or default_section(table)
    starts = initial_states(table, seed, N_orbits, attempts, section)
    vecs = random_unit_vectors(seed, N_orbits, vector_stream)
    if time_reversed:
        starts = starts.copy()
        starts[:, :, 2] *= -1.0
        vecs = vecs * np.array([1.0, -1.0])
    lam, lam_half, n_eff, status, used = _run(table, starts, vecs, n_steps, burn, section, tol, threads)
    keep = (n_eff >= min(MIN_STEPS, n_steps)) & np.isfinite(lam)
    x = lam[keep]
    xh = lam_half[keep]
    mean = float(np.mean(x))
    se_stat = float(np.std(x, ddof=1) / math.sqrt(len(x))) if len(x) > 1 else math.inf
    mean_half = float(np.nanmean(xh))
    se = math.hypot(se_stat, abs(mean - mean_half))
    chosen = starts[np.arange(N_orbits), used]
    return LyapunovEstimate(mean, se, se_stat, mean_half, lam, int(n_steps), int(N_orbits), int(seed), section,
                            int((~keep).sum()), chosen, n_eff,
                            {"truncated": int((status != K.OK).sum()), "time_reversed": time_reversed})


__all__ = ["LyapunovEstimate", "lyapunov_orbit", "lyapunov_survey", "orbit_rng"]
