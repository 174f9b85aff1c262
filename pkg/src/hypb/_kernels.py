"""numba kernels: collisions, corridor passages, the return map, tangent
matrices and cone transport.

Status codes: 0 ok, 1 corner hit, 2 tangential hit, 3 escaped, 4 cap exceeded.
"""

import math

import numpy as np
from numba import njit

OK, CORNER, TANGENTIAL, ESCAPED, CAP = 0, 1, 2, 3, 4
SEG, ARC = 0, 1
FLAT, FOCUSING, DISPERSING = 0, 1, 2

TWO_PI = 2.0 * math.pi
BBOX_MIN = 64

# case tags
CASE_NAMES = ("I", "II.1", "II.2", "III.1", "III.2.1", "III.2.2", "IV.1", "IV.2.1", "IV.2.2")
C0, C1, C2 = 0, 1, 2


# ------------------------------------------------------------ piece geometry


@njit(cache=True)
def piece_frame(kind, geom, i, sigma):
    """Point, unit tangent and inner normal at local arclength ``sigma``."""
    g = geom[i]
    if kind[i] == SEG:
        ex, ey = g[2] - g[0], g[3] - g[1]
        L = math.hypot(ex, ey)
        tx, ty = ex / L, ey / L
        return g[0] + sigma * tx, g[1] + sigma * ty, tx, ty, -ty, tx
    sgn = 1.0 if g[4] > 0 else -1.0
    th = g[3] + sgn * sigma / g[2]
    c, s = math.cos(th), math.sin(th)
    tx, ty = -sgn * s, sgn * c
    return g[0] + g[2] * c, g[1] + g[2] * s, tx, ty, -ty, tx


@njit(cache=True)
def hit_piece(kind, geom, length, i, ox, oy, dx, dy, tmin, tol):
    """Nearest forward hit of a ray on piece ``i`` reached from its interior side.

    Returns ``(t, sigma)``; ``t`` is inf when there is no hit.
    """
    g = geom[i]
    best_t = np.inf
    best_s = 0.0
    if kind[i] == SEG:
        ex, ey = g[2] - g[0], g[3] - g[1]
        L = length[i]
        # inner normal (-ey, ex)/L; the ray must cross from the interior side
        if dx * (-ey) + dy * ex >= 0.0:
            return best_t, best_s
        den = dx * ey - dy * ex
        wx, wy = g[0] - ox, g[1] - oy
        t = (wx * ey - wy * ex) / den
        u = (wx * dy - wy * dx) / den
        if t > tmin:
            s = u * L
            if -tol <= s <= L + tol:
                best_t = t
                best_s = min(max(s, 0.0), L)
        return best_t, best_s
    cx, cy, r, th0, sw = g[0], g[1], g[2], g[3], g[4]
    sgn = 1.0 if sw > 0 else -1.0
    px, py = ox - cx, oy - cy
    b = dx * px + dy * py
    c = px * px + py * py - r * r
    disc = b * b - c
    if disc < 0.0:
        return best_t, best_s
    sq = math.sqrt(disc)
    q = -b - sq if b > 0 else -b + sq
    r1 = q
    r2 = c / q if q != 0.0 else q
    for k in range(2):
        t = r1 if k == 0 else r2
        if not t > tmin or t >= best_t:
            continue
        hx, hy = px + t * dx, py + t * dy
        th = math.atan2(hy, hx)
        # inner normal sgn*(-cos, -sin); require d . n_in < 0
        if sgn * (-(dx * hx + dy * hy)) >= 0.0:
            continue
        off = ((th - th0) * sgn) % TWO_PI
        s = off * r
        if s > length[i] + tol:
            s -= TWO_PI * r
            if s < -tol:
                continue
        best_t = t
        best_s = min(max(s, 0.0), length[i])
    return best_t, best_s


@njit(cache=True)
def _box_hit(bb, ox, oy, dx, dy, tmax):
    t0, t1 = 0.0, tmax
    if dx != 0.0:
        a = (bb[0] - 1e-9 - ox) / dx
        b = (bb[2] + 1e-9 - ox) / dx
        if a > b:
            a, b = b, a
        t0, t1 = max(t0, a), min(t1, b)
    elif ox < bb[0] - 1e-9 or ox > bb[2] + 1e-9:
        return False
    if dy != 0.0:
        a = (bb[1] - 1e-9 - oy) / dy
        b = (bb[3] + 1e-9 - oy) / dy
        if a > b:
            a, b = b, a
        t0, t1 = max(t0, a), min(t1, b)
    elif oy < bb[1] - 1e-9 or oy > bb[3] + 1e-9:
        return False
    return t0 <= t1


@njit(cache=True)
def nearest_hit(kind, geom, length, bbox, search, portals, use_portals, ox, oy, dx, dy, tmin, tol):
    """Returns ``(what, index, t, sigma)`` with what = 0 none, 1 piece, 2 portal."""
    best_t = np.inf
    best_i = -1
    best_s = 0.0
    what = 0
    use_box = len(search) > BBOX_MIN
    for j in range(len(search)):
        i = search[j]
        if use_box and not _box_hit(bbox[i], ox, oy, dx, dy, best_t):
            continue
        t, s = hit_piece(kind, geom, length, i, ox, oy, dx, dy, tmin, tol)
        if t < best_t:
            best_t, best_i, best_s, what = t, i, s, 1
    if use_portals:
        for c in range(portals.shape[0]):
            p = portals[c]
            ex, ey = p[2] - p[0], p[3] - p[1]
            L = math.hypot(ex, ey)
            if dx * (-ey) + dy * ex >= 0.0:
                continue
            den = dx * ey - dy * ex
            wx, wy = p[0] - ox, p[1] - oy
            t = (wx * ey - wy * ex) / den
            u = (wx * dy - wy * dx) / den
            if t > tmin and t < best_t and -tol <= u * L <= L + tol:
                best_t, best_i, best_s, what = t, c, min(max(u * L, 0.0), L), 2
    return what, best_i, best_t, best_s


# -------------------------------------------------------------- corridors


@njit(cache=True)
def _fold(v, H):
    m = math.floor(v / H)
    r = v - m * H
    if m % 2 == 0:
        return r, m, 1.0
    return H - r, m, -1.0


@njit(cache=True)
def _rect_passage(cells, k, px, py, dx, dy, tol, cap):
    """Analytic passage through a single rectangular cell closed by its far leg."""
    v0x, v0y = cells[k, 0, 0], cells[k, 0, 1]
    ex, ey = cells[k, 3, 0] - v0x, cells[k, 3, 1] - v0y
    Lc = math.hypot(ex, ey)
    ex, ey = ex / Lc, ey / Lc
    wx, wy = cells[k, 1, 0] - v0x, cells[k, 1, 1] - v0y
    H = math.hypot(wx, wy)
    wx, wy = wx / H, wy / H
    u0 = (px - v0x) * ex + (py - v0y) * ey
    w0 = (px - v0x) * wx + (py - v0y) * wy
    du = dx * ex + dy * ey
    dv = dx * wx + dy * wy
    if du <= 0.0:
        return TANGENTIAL, px, py, dx, dy, 0.0, 0
    t1 = (Lc - u0) / du
    vf = w0 + dv * t1
    if abs(vf / H) > cap:
        return CAP, px, py, dx, dy, 0.0, 0
    r, m, _ = _fold(vf, H)
    if r < tol or r > H - tol:
        return CORNER, px, py, dx, dy, 0.0, 0
    t = t1 + Lc / du
    vt = w0 + dv * t
    if abs(vt / H) > cap:
        return CAP, px, py, dx, dy, 0.0, 0
    r, m, sg = _fold(vt, H)
    if r < tol or r > H - tol:
        return CORNER, px, py, dx, dy, 0.0, 0
    nd_u = -du
    nd_v = dv * sg
    qx = v0x + r * wx
    qy = v0y + r * wy
    return OK, qx, qy, nd_u * ex + nd_v * wx, nd_u * ey + nd_v * wy, t, abs(m) + 1


@njit(cache=True)
def corridor_passage(cells, cstart, crect, c, px, py, dx, dy, tol, cap):
    """Follow a ray that entered corridor ``c`` through its portal until it leaves.

    Returns ``(status, qx, qy, dx, dy, tau, n_wall_hits, reached_end,
    outward_monotone, max_cell)``.
    """
    first = cstart[c]
    last = cstart[c + 1] - 1
    if crect[c] and first == last:
        st, qx, qy, ndx, ndy, t, n = _rect_passage(cells, first, px, py, dx, dy, tol, cap)
        return st, qx, qy, ndx, ndy, t, n, True, True, 0
    k = first
    tau = 0.0
    hits = 0
    reached = False
    monotone = True
    max_cell = 0
    while True:
        best_t = np.inf
        best_j = -1
        for j in range(4):
            ax, ay = cells[k, j, 0], cells[k, j, 1]
            bx, by = cells[k, (j + 1) % 4, 0], cells[k, (j + 1) % 4, 1]
            L = math.hypot(bx - ax, by - ay)
            nx, ny = (by - ay) / L, -(bx - ax) / L
            dn = dx * nx + dy * ny
            if dn <= 0.0:
                continue
            dist = (ax - px) * nx + (ay - py) * ny
            t = max(dist, 0.0) / dn
            if t < best_t:
                best_t, best_j = t, j
        if best_j < 0:
            return ESCAPED, px, py, dx, dy, tau, hits, reached, monotone, max_cell
        px += best_t * dx
        py += best_t * dy
        tau += best_t
        j = best_j
        ax, ay = cells[k, j, 0], cells[k, j, 1]
        bx, by = cells[k, (j + 1) % 4, 0], cells[k, (j + 1) % 4, 1]
        L = math.hypot(bx - ax, by - ay)
        u = ((px - ax) * (bx - ax) + (py - ay) * (by - ay)) / L
        if u < tol or u > L - tol:
            return CORNER, px, py, dx, dy, tau, hits, reached, monotone, max_cell
        reflect = j == 1 or j == 3 or (j == 2 and k == last)
        if reflect:
            nx, ny = (by - ay) / L, -(bx - ax) / L
            dn = dx * nx + dy * ny
            dx -= 2.0 * dn * nx
            dy -= 2.0 * dn * ny
            hits += 1
            if j == 2:
                reached = True
            if hits > cap:
                return CAP, px, py, dx, dy, tau, hits, reached, monotone, max_cell
        elif j == 2:
            k += 1
            if k - first > max_cell:
                max_cell = k - first
        else:
            if k == first:
                return OK, px, py, dx, dy, tau, hits, reached, monotone, max_cell
            if not reached:
                monotone = False
            k -= 1


# ------------------------------------------------------------ billiard steps


@njit(cache=True)
def outgoing_dir(kind, geom, i, sigma, alpha):
    px, py, tx, ty, nx, ny = piece_frame(kind, geom, i, sigma)
    ca, sa = math.cos(alpha), math.sin(alpha)
    return px, py, ca * nx + sa * tx, ca * ny + sa * ty


@njit(cache=True)
def _reflect(kind, geom, i, sigma, dx, dy):
    """Outgoing angle at a hit, and |cos| of the incidence angle."""
    px, py, tx, ty, nx, ny = piece_frame(kind, geom, i, sigma)
    dn = dx * nx + dy * ny
    ox, oy = dx - 2.0 * dn * nx, dy - 2.0 * dn * ny
    ca = ox * nx + oy * ny
    sa = ox * tx + oy * ty
    return math.atan2(sa, ca), -dn


@njit(cache=True)
def return_step(kind, geom, length, label, bbox, search, portals, cells, cstart, crect,
                i0, s0, a0, tmin, tol, ctol, tan_tol, cap, psi_mode):
    """One step of the return map (``psi_mode``) or of the full billiard map.

    In ``psi_mode`` flat hits in the bulk are reflected and counted and
    corridors are traversed through their portals; the step ends on the next
    focusing or dispersing piece.

    Returns ``(status, piece, sigma, alpha, tau, n_flat, n_passages,
    passage_ok, min_passage_tau, din_x, din_y)``.
    """
    ox, oy, dx, dy = outgoing_dir(kind, geom, i0, s0, a0)
    tau = 0.0
    nflat = 0
    npass = 0
    passage_ok = True
    min_pass = np.inf
    while True:
        what, i, t, s = nearest_hit(kind, geom, length, bbox, search, portals, psi_mode,
                                    ox, oy, dx, dy, tmin, tol)
        if what == 0:
            return ESCAPED, -1, 0.0, 0.0, tau, nflat, npass, passage_ok, min_pass, dx, dy
        tau += t
        if what == 2:
            p = portals[i]
            L = math.hypot(p[2] - p[0], p[3] - p[1])
            if s < ctol or s > L - ctol:
                return CORNER, -1, 0.0, 0.0, tau, nflat, npass, passage_ok, min_pass, dx, dy
            ex, ey = (p[2] - p[0]) / L, (p[3] - p[1]) / L
            qx, qy = p[0] + s * ex, p[1] + s * ey
            st, qx, qy, dx, dy, tp, nh, reached, mono, mc = corridor_passage(
                cells, cstart, crect, i, qx, qy, dx, dy, ctol, cap - nflat)
            tau += tp
            nflat += nh
            npass += 1
            if st != OK:
                return st, -1, 0.0, 0.0, tau, nflat, npass, passage_ok, min_pass, dx, dy
            if not (reached and mono):
                passage_ok = False
            if tp < min_pass:
                min_pass = tp
            ox, oy = qx, qy
            continue
        if s < ctol or s > length[i] - ctol:
            return CORNER, i, s, 0.0, tau, nflat, npass, passage_ok, min_pass, dx, dy
        alpha, cin = _reflect(kind, geom, i, s, dx, dy)
        if cin < tan_tol:
            return TANGENTIAL, i, s, alpha, tau, nflat, npass, passage_ok, min_pass, dx, dy
        if psi_mode and label[i] == FLAT:
            nflat += 1
            if nflat > cap:
                return CAP, i, s, alpha, tau, nflat, npass, passage_ok, min_pass, dx, dy
            ox, oy, ndx, ndy = outgoing_dir(kind, geom, i, s, alpha)
            dx, dy = ndx, ndy
            continue
        return OK, i, s, alpha, tau, nflat, npass, passage_ok, min_pass, dx, dy


# ------------------------------------------------------------ tangent maps


@njit(cache=True)
def jacobian(a0, k0, a1, k1, tau, nflat):
    """Differential of one step on (ds, dalpha)."""
    c0, c1 = math.cos(a0), math.cos(a1)
    a = (tau * k0 - c0) / c1
    b = -tau / c1
    c = k0 - k1 * a
    d = -1.0 + k1 * tau / c1
    if nflat % 2 == 1:
        a, b, c, d = -a, -b, -c, -d
    return a, b, c, d


@njit(cache=True)
def cone_assign(lab_now, lab_prev, had_flat):
    if lab_now == DISPERSING:
        return C0
    if lab_prev == FOCUSING:
        return C2
    if had_flat:
        return C2
    return C1


@njit(cache=True)
def cone_endpoints(cone, alpha, k):
    """Homogeneous endpoints ``(p_lo, q_lo, p_hi, q_hi)`` with f = p / q."""
    c = math.cos(alpha)
    ak = abs(k)
    if cone == C0:
        return -c, ak, 0.0, 1.0
    if cone == C1:
        return 1.0, 0.0, 0.0, 1.0
    return c, 2.0 * ak, c, ak


@njit(cache=True)
def case_tag(lab0, lab1, cone_in, had_flat):
    if lab0 == DISPERSING:
        if lab1 == DISPERSING:
            return 0
        return 2 if had_flat else 1
    base = 3 if lab1 == DISPERSING else 6
    if cone_in == C1:
        return base
    return base + 2 if had_flat else base + 1


@njit(cache=True)
def transport(p, q, tau, k1, a1):
    """Free flight by ``tau`` then the mirror at curvature ``k1``, angle ``a1``."""
    p = p - tau * q
    q = q + (2.0 * k1 / math.cos(a1)) * p
    n = math.hypot(p, q)
    return p / n, q / n


@njit(cache=True)
def _phi(p, q):
    return math.atan2(p, q) % math.pi


@njit(cache=True)
def interval_margins(plo, qlo, phi_, qhi, tlo_p, tlo_q, thi_p, thi_q):
    """Angular margins of an image interval inside a target interval on RP^1.

    Returns ``(m_lo, m_hi)``: room left between the lower ends and between
    the upper ends; both nonnegative iff the image is contained.
    """
    a = _phi(plo, qlo)
    b = _phi(phi_, qhi)
    c = _phi(tlo_p, tlo_q)
    d = _phi(thi_p, thi_q)
    L = (d - c) % math.pi
    pa = (a - c) % math.pi
    if pa > 0.5 * (L + math.pi):
        pa -= math.pi
    ln = (b - a) % math.pi
    if ln > math.pi - 1e-9:
        ln -= math.pi
    return pa, L - (pa + ln)


@njit(cache=True)
def check_transport(cone_in, a0, k0, a1, k1, tau, cone_out):
    """Push ``cone_in`` through a step and measure it against ``cone_out``."""
    plo, qlo, phi_, qhi = cone_endpoints(cone_in, a0, k0)
    plo, qlo = transport(plo, qlo, tau, k1, a1)
    phi_, qhi = transport(phi_, qhi, tau, k1, a1)
    tlp, tlq, thp, thq = cone_endpoints(cone_out, a1, k1)
    return interval_margins(plo, qlo, phi_, qhi, tlp, tlq, thp, thq)


# ------------------------------------------------------------ orbit surveys


@njit(cache=True, nogil=True)
def survey_orbits(kind, geom, length, label, curv, bbox, search, portals, cells, cstart, crect,
                  starts, n_steps, tmin, tol, ctol, tan_tol, cap, ntol, kf):
    """Cone survey over orbits; ``starts`` has shape (N, K, 3) of candidate
    initial states ``(piece, sigma, alpha)``, used in turn when an orbit hits
    a singular event."""
    N = starts.shape[0]
    K = starts.shape[1]
    n_done = np.zeros(N, dtype=np.int64)
    status = np.zeros(N, dtype=np.int64)
    used = np.zeros(N, dtype=np.int64)
    singular = np.zeros((N, 5), dtype=np.int64)
    first_strict = np.full(N, -1, dtype=np.int64)
    min_margin = np.full(N, np.inf)
    case_hist = np.zeros((N, 9), dtype=np.int64)
    nonstrict = np.zeros((N, 9), dtype=np.int64)
    case_min = np.full((N, 9), np.inf)
    violations = np.zeros(N, dtype=np.int64)
    viol_step = np.full(N, -1, dtype=np.int64)
    viol_case = np.full(N, -1, dtype=np.int64)
    viol_margin = np.zeros(N)
    open_contacts = np.zeros(N, dtype=np.int64)
    passages = np.zeros(N, dtype=np.int64)
    passage_fail = np.zeros(N, dtype=np.int64)
    long_tau_fail = np.zeros(N, dtype=np.int64)
    chord_max_err = np.zeros(N)
    run_max = np.zeros(N, dtype=np.int64)
    for o in range(N):
        for attempt in range(K):
            i = np.int64(starts[o, attempt, 0])
            s = starts[o, attempt, 1]
            a = starts[o, attempt, 2]
            used[o] = attempt
            # reset per-attempt accumulators
            first_strict[o] = -1
            min_margin[o] = np.inf
            case_hist[o, :] = 0
            nonstrict[o, :] = 0
            case_min[o, :] = np.inf
            violations[o] = 0
            viol_step[o] = -1
            open_contacts[o] = 0
            passages[o] = 0
            passage_fail[o] = 0
            long_tau_fail[o] = 0
            chord_max_err[o] = 0.0
            run_max[o] = 0
            prev_lab = -1
            prev_flat = False
            cone = -1
            run = 0
            st = OK
            step = 0
            while step <= n_steps:
                st, i1, s1, a1, tau, nflat, npass, lok, mpass, _, _ = return_step(
                    kind, geom, length, label, bbox, search, portals, cells, cstart, crect,
                    i, s, a, tmin, tol, ctol, tan_tol, cap, True)
                if st != OK:
                    break
                if npass > 0:
                    passages[o] += npass
                    if not lok:
                        passage_fail[o] += 1
                    if not tau > 2.0 / kf:
                        long_tau_fail[o] += 1
                lab0 = label[i]
                lab1 = label[i1]
                had = nflat > 0
                if step > 0:
                    cone_in = cone_assign(lab0, prev_lab, prev_flat)
                    cone_out = cone_assign(lab1, lab0, had)
                    tag = case_tag(lab0, lab1, cone_in, had)
                    m_lo, m_hi = check_transport(cone_in, a, curv[i], a1, curv[i1], tau, cone_out)
                    m_lo = math.sin(m_lo)
                    m_hi = math.sin(m_hi)
                    m = min(m_lo, m_hi)
                    case_hist[o, tag] += 1
                    if m < case_min[o, tag]:
                        case_min[o, tag] = m
                    if m < min_margin[o]:
                        min_margin[o] = m
                    if m < -ntol:
                        violations[o] += 1
                        if viol_step[o] < 0:
                            viol_step[o] = step
                            viol_case[o] = tag
                            viol_margin[o] = m
                    else:
                        strict = m_hi > ntol and m_lo > ntol
                        if cone_in == C1 and m_hi > ntol and abs(m_lo) <= ntol:
                            # the image of the open end of C1 touches the target boundary
                            open_contacts[o] += 1
                            strict = True
                        if strict:
                            if first_strict[o] < 0:
                                first_strict[o] = step
                        else:
                            nonstrict[o, tag] += 1
                    if tag == 7:
                        err = abs(tau - 2.0 * math.cos(a) / curv[i])
                        if err > chord_max_err[o]:
                            chord_max_err[o] = err
                        run += 1
                        if run > run_max[o]:
                            run_max[o] = run
                    else:
                        run = 0
                prev_lab = lab0
                prev_flat = had
                i, s, a = i1, s1, a1
                step += 1
            n_done[o] = step
            status[o] = st
            if st == OK:
                break
            singular[o, st] += 1
    return (n_done, status, used, singular, first_strict, min_margin, case_hist, nonstrict, case_min,
            violations, viol_step, viol_case, viol_margin, open_contacts, passages, passage_fail,
            long_tau_fail, chord_max_err, run_max)


@njit(cache=True, nogil=True)
def lyapunov_orbits(kind, geom, length, label, curv, bbox, search, portals, cells, cstart, crect,
                    starts, vecs, n_steps, burn, tmin, tol, ctol, tan_tol, cap, psi_mode):
    """Birkhoff averages of log growth of renormalized tangent vectors.

    Returns per orbit ``(lambda_n, lambda_half, n_effective, status, attempt)``.
    """
    N = starts.shape[0]
    K = starts.shape[1]
    lam = np.zeros(N)
    lam_half = np.zeros(N)
    n_eff = np.zeros(N, dtype=np.int64)
    status = np.zeros(N, dtype=np.int64)
    used = np.zeros(N, dtype=np.int64)
    half = n_steps // 2
    for o in range(N):
        for attempt in range(K):
            i = np.int64(starts[o, attempt, 0])
            s = starts[o, attempt, 1]
            a = starts[o, attempt, 2]
            v0 = vecs[o, 0]
            v1 = vecs[o, 1]
            acc = 0.0
            comp = 0.0
            acc_half = 0.0
            st = OK
            done = 0
            for step in range(n_steps + burn):
                st, i1, s1, a1, tau, nflat, npass, lok, mpass, _, _ = return_step(
                    kind, geom, length, label, bbox, search, portals, cells, cstart, crect,
                    i, s, a, tmin, tol, ctol, tan_tol, cap, psi_mode)
                if st != OK:
                    break
                ja, jb, jc, jd = jacobian(a, curv[i], a1, curv[i1], tau, nflat)
                w0 = ja * v0 + jb * v1
                w1 = jc * v0 + jd * v1
                g = math.hypot(w0, w1)
                v0, v1 = w0 / g, w1 / g
                if step >= burn:
                    # compensated summation of log growth factors
                    y = math.log(g) - comp
                    tsum = acc + y
                    comp = (tsum - acc) - y
                    acc = tsum
                    done += 1
                    if done == half:
                        acc_half = acc
                i, s, a = i1, s1, a1
            used[o] = attempt
            status[o] = st
            n_eff[o] = done
            lam[o] = acc / done if done > 0 else np.nan
            lam_half[o] = acc_half / half if (half > 0 and done >= half) else np.nan
            if st == OK:
                break
    return lam, lam_half, n_eff, status, used
