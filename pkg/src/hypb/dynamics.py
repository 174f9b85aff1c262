"""Billiard map on the full boundary, the return map to the curved pieces,
singular events and sampling of the invariant measure cos(alpha) ds dalpha.

alpha is measured clockwise from the inner normal to the outgoing direction:
the outgoing velocity is ``cos(alpha) n + sin(alpha) T`` with ``T`` the unit
tangent in the direction of increasing arclength and ``n`` the inner normal.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import _kernels as K
from .table import FLAT, Table

STATUS_NAMES = {K.CORNER: "corner-hit", K.TANGENTIAL: "tangential-hit", K.ESCAPED: "escaped",
                K.CAP: "cap-exceeded"}


@dataclass(frozen=True)
class Tolerances:
    t_min: float = 1e-9
    on_piece: float = 1e-10
    corner: float = 1e-9
    tangent: float = 1e-9
    flat_cap: int = 10 ** 7

    def to_dict(self):
        return dict(t_min=self.t_min, on_piece=self.on_piece, corner=self.corner, tangent=self.tangent,
                    flat_cap=self.flat_cap)


DEFAULT_TOL = Tolerances()


@dataclass(frozen=True)
class PhasePoint:
    piece: int
    sigma: float
    alpha: float

    def s(self, table: Table) -> float:
        return float(table.offsets[self.piece] + self.sigma)

    def position(self, table: Table) -> np.ndarray:
        px, py, *_ = K.piece_frame(table.kind, table.geom, self.piece, self.sigma)
        return np.array([px, py])

    def direction(self, table: Table) -> np.ndarray:
        _, _, dx, dy = K.outgoing_dir(table.kind, table.geom, self.piece, self.sigma, self.alpha)
        return np.array([dx, dy])

    @classmethod
    def from_s(cls, table: Table, s: float, alpha: float) -> "PhasePoint":
        i = table.piece_index(s)
        return cls(i, float(s % table.perimeter - table.offsets[i]), float(alpha))


@dataclass(frozen=True)
class CollisionEvent:
    point: tuple
    piece: int
    incoming: tuple
    outgoing: tuple
    tau: float


@dataclass
class FlightRecord:
    start: PhasePoint
    end: PhasePoint
    tau: float
    n_flat: int
    flat_hits: list | None = None
    entered_spiral_or_strip: bool = False
    passages: int = 0
    passage_ok: bool = True
    min_passage_tau: float = math.inf
    incoming: tuple = (0.0, 0.0)


@dataclass(frozen=True)
class SingularEvent:
    kind: str
    location: tuple
    piece: int = -1
    tau: float = 0.0


@dataclass(frozen=True)
class CapExceeded:
    n_flat: int


def _search(table: Table, full: bool):
    a = table.kernel_arrays()
    return a["allp"] if full else a["bulk"]


def _step(table: Table, x: PhasePoint, full: bool, tol: Tolerances):
    a = table.kernel_arrays()
    return K.return_step(a["kind"], a["geom"], a["length"], a["label"], a["bbox"], _search(table, full),
                         a["portals"], a["cells"], a["cstart"], a["crect"], x.piece, x.sigma, x.alpha,
                         tol.t_min, tol.on_piece, tol.corner, tol.tangent, tol.flat_cap, not full)


def _singular(table: Table, x: PhasePoint, out, status):
    _, i, s, _, tau, *_rest = out
    loc = tuple(x.position(table) + tau * x.direction(table)) if i < 0 else tuple(
        PhasePoint(i, s, 0.0).position(table))
    if status == K.CAP:
        return CapExceeded(int(out[5]))
    return SingularEvent(STATUS_NAMES[status], loc, int(i), float(tau))


def billiard_step(table: Table, x: PhasePoint, tol: Tolerances = DEFAULT_TOL):
    """Next collision on the full boundary: ``(PhasePoint, CollisionEvent)`` or a singular event."""
    out = _step(table, x, True, tol)
    st, i, s, alpha, tau = out[0], out[1], out[2], out[3], out[4]
    if st != K.OK:
        return _singular(table, x, out, st)
    y = PhasePoint(int(i), float(s), float(alpha))
    ev = CollisionEvent(tuple(y.position(table)), y.piece, (out[9], out[10]), tuple(y.direction(table)), float(tau))
    return y, ev


def billiard_map(table: Table, x: PhasePoint, tol: Tolerances = DEFAULT_TOL):
    r = billiard_step(table, x, tol)
    return r[0] if isinstance(r, tuple) else r


def first_return_map(table: Table, x: PhasePoint, accelerate: bool = True, tol: Tolerances = DEFAULT_TOL):
    """Return map to the focusing and dispersing pieces.

    ``accelerate=True`` crosses corridors analytically and only counts the
    flat hits; ``accelerate=False`` iterates :func:`billiard_map` and records
    every flat collision.
    """
    if table.label[x.piece] == FLAT:
        raise ValueError("first_return_map starts on a focusing or dispersing piece")
    if accelerate:
        out = _step(table, x, False, tol)
        st = out[0]
        if st != K.OK:
            return _singular(table, x, out, st)
        _, i, s, alpha, tau, nflat, npass, lok, mpass, dix, diy = out
        return FlightRecord(x, PhasePoint(int(i), float(s), float(alpha)), float(tau), int(nflat), None,
                            npass > 0 or nflat > 0, int(npass), bool(lok), float(mpass), (dix, diy))
    hits = []
    tau = 0.0
    y = x
    in_corridor = False
    while True:
        r = billiard_step(table, y, tol)
        if not isinstance(r, tuple):
            return r
        y, ev = r
        tau += ev.tau
        if table.label[y.piece] != FLAT:
            return FlightRecord(x, y, tau, len(hits), hits, in_corridor, 0, True, math.inf, ev.incoming)
        hits.append(ev)
        in_corridor = in_corridor or table.corridor_of[y.piece] >= 0
        if len(hits) > tol.flat_cap:
            return CapExceeded(len(hits))


def reverse(x: PhasePoint) -> PhasePoint:
    return PhasePoint(x.piece, x.sigma, -x.alpha)


# ------------------------------------------------------------------- sampling


def allowed_pieces(table: Table, restriction: str = "psi") -> np.ndarray:
    if restriction == "psi":
        return np.nonzero(table.label != FLAT)[0]
    if restriction == "full":
        return np.arange(table.n_pieces)
    raise ValueError("restriction is 'psi' or 'full'")


def sample_mu_batch(rng: np.random.Generator, table: Table, n: int, restriction: str = "psi"):
    """Arrays ``(piece, sigma, alpha)`` of ``n`` independent draws from mu."""
    idx = allowed_pieces(table, restriction)
    if len(idx) == 0:
        raise ValueError(f"no pieces allowed by restriction {restriction!r}")
    lens = table.length[idx]
    cum = np.concatenate([[0.0], np.cumsum(lens)])
    s = rng.uniform(0.0, cum[-1], size=n)
    u = rng.uniform(0.0, 1.0, size=n)
    j = np.clip(np.searchsorted(cum, s, side="right") - 1, 0, len(idx) - 1)
    sigma = np.minimum(s - cum[j], lens[j])
    alpha = np.arcsin(2.0 * u - 1.0)
    return idx[j], sigma, alpha


def sample_mu(rng: np.random.Generator, table: Table, restriction: str = "psi") -> PhasePoint:
    p, s, a = sample_mu_batch(rng, table, 1, restriction)
    return PhasePoint(int(p[0]), float(s[0]), float(a[0]))


def orbit_rng(seed: int, index: int) -> np.random.Generator:
    """Independent stream for orbit ``index``; adding orbits never reshuffles earlier ones."""
    return np.random.default_rng([int(seed), int(index)])


def initial_states(table: Table, seed: int, n_orbits: int, attempts: int = 4, restriction: str = "psi",
                   offset: int = 0) -> np.ndarray:
    """Array (n_orbits, attempts, 3) of mu-distributed candidate starts, one stream per orbit."""
    out = np.empty((n_orbits, attempts, 3))
    for o in range(n_orbits):
        p, s, a = sample_mu_batch(orbit_rng(seed, offset + o), table, attempts, restriction)
        out[o, :, 0] = p
        out[o, :, 1] = s
        out[o, :, 2] = a
    return out


def default_threads() -> int:
    return max(1, int(os.environ.get("HYPB_THREADS", "1")))


def run_chunked(kernel, starts: np.ndarray, args_after, threads: int | None = None, chunk: int = 256):
    """Run an orbit kernel over chunks of ``starts`` on a thread pool and
    concatenate its per-orbit outputs.  Orbits are independent, so the result
    does not depend on ``threads``."""
    threads = threads or default_threads()
    n = starts.shape[0]
    if threads == 1 or n <= chunk:
        return kernel(starts, *args_after)
    parts = [starts[i:i + chunk] for i in range(0, n, chunk)]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        outs = list(ex.map(lambda st: kernel(st, *args_after), parts))
    return tuple(np.concatenate([o[j] for o in outs]) for j in range(len(outs[0])))


# ----------------------------------------------------------------- orbits


@dataclass
class Orbit:
    points: list = field(default_factory=list)
    records: list = field(default_factory=list)
    terminated: object = None


def iterate(table: Table, x: PhasePoint, n: int, section: str = "psi", tol: Tolerances = DEFAULT_TOL) -> Orbit:
    orb = Orbit([x])
    for _ in range(n):
        if section == "psi":
            r = first_return_map(table, x, True, tol)
            if not isinstance(r, FlightRecord):
                orb.terminated = r
                break
            orb.records.append(r)
            x = r.end
        else:
            r = billiard_step(table, x, tol)
            if not isinstance(r, tuple):
                orb.terminated = r
                break
            x = r[0]
            orb.records.append(FlightRecord(orb.points[-1], x, r[1].tau, 0, None, False, 0, True, math.inf,
                                            r[1].incoming))
        orb.points.append(x)
    return orb
