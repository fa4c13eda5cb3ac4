# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled twins of the reference solver kernels.

Algorithms, parameters, and stopping rules match ``solvers_py``; see
that module for the mathematical contracts.  Summation order differs
(straight C loops instead of pairwise reductions), so the two backends
agree to solver tolerance rather than bit-for-bit.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport INFINITY, exp, log, sqrt

cnp.import_array()

F_KL = 0
F_JS = 1

cdef double LOG2 = log(2.0)
cdef double TINY = 1e-300


# ---------------------------------------------------------------------------
# f-divergence primitives
# ---------------------------------------------------------------------------

cdef double _div_value(const double[::1] r, const double[::1] p, int f_code):
    cdef Py_ssize_t j, m = r.shape[0]
    cdef double acc = 0.0, mid
    if f_code == 0:
        for j in range(m):
            if r[j] > 0.0:
                acc += r[j] * log(r[j] / p[j])
        return acc
    for j in range(m):
        mid = r[j] + p[j]
        if r[j] > 0.0:
            acc += 0.5 * r[j] * log(2.0 * r[j] / mid)
        if p[j] > 0.0:
            acc += 0.5 * p[j] * log(2.0 * p[j] / mid)
    return acc


cdef void _div_grad(const double[::1] r, const double[::1] p, int f_code, double[::1] out):
    cdef Py_ssize_t j, m = r.shape[0]
    if f_code == 0:
        for j in range(m):
            out[j] = log((r[j] + TINY) / p[j]) + 1.0
    else:
        for j in range(m):
            out[j] = 0.5 * log((2.0 * r[j] + TINY) / (r[j] + p[j] + TINY))


def div_value(r, p, int f_code):
    """D_f(r || p); same conventions as the reference backend."""
    cdef const double[::1] rv = np.ascontiguousarray(r, dtype=np.float64)
    cdef const double[::1] pv = np.ascontiguousarray(p, dtype=np.float64)
    return _div_value(rv, pv, f_code)


def div_grad(r, p, int f_code):
    """dD_f(r||p)/dr with the slope clipped where ``r = 0``."""
    cdef const double[::1] rv = np.ascontiguousarray(r, dtype=np.float64)
    cdef const double[::1] pv = np.ascontiguousarray(p, dtype=np.float64)
    out = np.empty(rv.shape[0], dtype=np.float64)
    cdef double[::1] ov = out
    _div_grad(rv, pv, f_code, ov)
    return out


# ---------------------------------------------------------------------------
# Row-wise scaled-simplex projection
# ---------------------------------------------------------------------------

cdef void _sort_desc(double[::1] a, Py_ssize_t n):
    cdef Py_ssize_t i, j
    cdef double key
    for i in range(1, n):
        key = a[i]
        j = i - 1
        while j >= 0 and a[j] < key:
            a[j + 1] = a[j]
            j -= 1
        a[j + 1] = key


cdef void _project_row(const double[::1] src, double s, double[::1] buf,
                       double[::1] dst):
    cdef Py_ssize_t m = src.shape[0], j
    cdef double csum = 0.0, theta = 0.0, v
    if s <= 0.0:
        for j in range(m):
            dst[j] = 0.0
        return
    for j in range(m):
        buf[j] = src[j]
    _sort_desc(buf, m)
    for j in range(m):
        csum += buf[j]
        if buf[j] - (csum - s) / (j + 1) > 0.0:
            theta = (csum - s) / (j + 1)
    for j in range(m):
        v = src[j] - theta
        dst[j] = v if v > 0.0 else 0.0


def project_rows_simplex(mat, row_sums):
    """Project each row of ``mat`` onto ``{x >= 0, sum x = row_sums[i]}``."""
    arr = np.ascontiguousarray(mat, dtype=np.float64)
    cdef const double[:, ::1] mv = arr
    cdef const double[::1] sv = np.ascontiguousarray(row_sums, dtype=np.float64)
    out = np.empty_like(arr)
    cdef double[:, ::1] ov = out
    buf = np.empty(arr.shape[1], dtype=np.float64)
    cdef double[::1] bv = buf
    cdef Py_ssize_t i
    for i in range(mv.shape[0]):
        _project_row(mv[i], sv[i], bv, ov[i])
    return out


# ---------------------------------------------------------------------------
# Coupling-space projected gradient descent
# ---------------------------------------------------------------------------

cdef void _colsum(const double[:, ::1] pi, double[::1] col):
    cdef Py_ssize_t i, j, n = pi.shape[0], m = pi.shape[1]
    for j in range(m):
        col[j] = 0.0
    for i in range(n):
        for j in range(m):
            col[j] += pi[i, j]


cdef double _coupling_obj(const double[:, ::1] cost, const double[:, ::1] pi,
                          const double[::1] p, double[::1] col, int f_code,
                          double weight):
    cdef Py_ssize_t i, j, n = pi.shape[0], m = pi.shape[1]
    cdef double acc = 0.0
    _colsum(pi, col)
    for i in range(n):
        for j in range(m):
            acc += cost[i, j] * pi[i, j]
    return acc + weight * _div_value(col, p, f_code)


def coupling_minimize(cost_in, q_in, p_in, int f_code, double weight, pi0,
                      int max_iter=20000, double gap_tol=1e-9):
    """Minimize ``<cost, pi> + weight * D_f(colsum pi || p)`` over couplings.

    Same contract as the reference backend: backtracking projected
    gradient over the fixed-row-sum polytope with a Frank-Wolfe gap
    stopping certificate.  Returns ``(pi, objective, fw_gap, iterations)``.
    """
    cost_arr = np.ascontiguousarray(cost_in, dtype=np.float64)
    pi_arr = np.array(pi0, dtype=np.float64, order="C")
    cdef const double[:, ::1] cost = cost_arr
    cdef double[:, ::1] pi = pi_arr
    cdef const double[::1] q = np.ascontiguousarray(q_in, dtype=np.float64)
    cdef const double[::1] p = np.ascontiguousarray(p_in, dtype=np.float64)
    cdef Py_ssize_t n = pi.shape[0], m = pi.shape[1]

    grad_arr = np.empty((n, m), dtype=np.float64)
    trial_arr = np.empty((n, m), dtype=np.float64)
    cdef double[:, ::1] grad = grad_arr
    cdef double[:, ::1] trial = trial_arr
    cdef double[::1] col = np.empty(m, dtype=np.float64)
    cdef double[::1] dg = np.empty(m, dtype=np.float64)
    cdef double[::1] buf = np.empty(m, dtype=np.float64)
    cdef double[::1] rowtmp = np.empty(m, dtype=np.float64)

    cdef double cur = _coupling_obj(cost, pi, p, col, f_code, weight)
    cdef double step = 1.0, gap = INFINITY
    cdef double g, rmin, sq, lin, diff, val
    cdef Py_ssize_t i, j
    cdef int it = 0, ls, moved

    for it in range(1, max_iter + 1):
        _colsum(pi, col)
        _div_grad(col, p, f_code, dg)
        gap = 0.0
        for i in range(n):
            rmin = INFINITY
            for j in range(m):
                g = cost[i, j] + weight * dg[j]
                grad[i, j] = g
                gap += g * pi[i, j]
                if g < rmin:
                    rmin = g
            gap -= q[i] * rmin
        if gap <= gap_tol:
            break
        moved = 0
        for ls in range(40):
            for i in range(n):
                for j in range(m):
                    rowtmp[j] = pi[i, j] - step * grad[i, j]
                _project_row(rowtmp, q[i], buf, trial[i])
            sq = 0.0
            lin = 0.0
            for i in range(n):
                for j in range(m):
                    diff = trial[i, j] - pi[i, j]
                    sq += diff * diff
                    lin += grad[i, j] * diff
            if sq == 0.0:
                break
            val = _coupling_obj(cost, trial, p, col, f_code, weight)
            if val <= cur + lin + sq / (2.0 * step):
                for i in range(n):
                    for j in range(m):
                        pi[i, j] = trial[i, j]
                cur = val
                step *= 1.25
                moved = 1
                break
            step *= 0.5
        if not moved:
            break
    return pi_arr, cur, gap, it


# ---------------------------------------------------------------------------
# Lipschitz projection (McShane envelope)
# ---------------------------------------------------------------------------

cdef void _mcshane(const double[::1] g, const double[:, ::1] dist, double lip,
                   double[::1] dst):
    cdef Py_ssize_t x, y, m = g.shape[0]
    cdef double best, v
    for x in range(m):
        best = INFINITY
        for y in range(m):
            v = g[y] + lip * dist[x, y]
            if v < best:
                best = v
        dst[x] = best


def mcshane(gamma, dist, double lip):
    """Largest ``lip``-Lipschitz function dominated by ``gamma``."""
    cdef const double[::1] gv = np.ascontiguousarray(gamma, dtype=np.float64)
    cdef const double[:, ::1] dv = np.ascontiguousarray(dist, dtype=np.float64)
    out = np.empty(gv.shape[0], dtype=np.float64)
    cdef double[::1] ov = out
    _mcshane(gv, dv, lip, ov)
    return out


# ---------------------------------------------------------------------------
# Inner shift for the JS conjugate
# ---------------------------------------------------------------------------

cdef double _solve_nu_js(const double[::1] scores, const double[::1] w):
    cdef Py_ssize_t k, n = scores.shape[0]
    cdef double smax = -INFINITY
    for k in range(n):
        if w[k] > 0.0 and scores[k] > smax:
            smax = scores[k]
    cdef double lo = smax - 0.5 * LOG2, hi = smax + 1.0
    cdef double mid, dh, e
    cdef int b
    for b in range(90):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        dh = 1.0
        for k in range(n):
            if w[k] > 0.0:
                e = exp(2.0 * (scores[k] - mid))
                dh -= w[k] * e / (2.0 - e)
        if dh < 0.0:
            lo = mid
        else:
            hi = mid
    return hi


def solve_nu_js(scores, w):
    """Minimizer of ``nu + sum w f*_JS(scores - nu)``; same bracketing
    bisection as the reference backend."""
    cdef const double[::1] sv = np.ascontiguousarray(scores, dtype=np.float64)
    cdef const double[::1] wv = np.ascontiguousarray(w, dtype=np.float64)
    return _solve_nu_js(sv, wv)


cdef double _inner_value_grad(const double[::1] scores, const double[::1] w, int f_code,
                              double[::1] mvec):
    """Value of ``inf_nu {nu + sum w f*(s - nu)}``; fills ``mvec`` with
    ``w * (f*)'(s - nu*)`` (zero where ``w`` is zero)."""
    cdef Py_ssize_t k, n = scores.shape[0]
    cdef double smax = -INFINITY, total = 0.0, nu, e, denom, inner
    if f_code == 0:
        for k in range(n):
            if w[k] > 0.0 and scores[k] > smax:
                smax = scores[k]
        for k in range(n):
            if w[k] > 0.0:
                mvec[k] = w[k] * exp(scores[k] - smax)
                total += mvec[k]
            else:
                mvec[k] = 0.0
        for k in range(n):
            mvec[k] /= total
        return smax + log(total)
    nu = _solve_nu_js(scores, w)
    inner = nu
    for k in range(n):
        if w[k] > 0.0:
            e = exp(2.0 * (scores[k] - nu))
            denom = 2.0 - e
            if denom < TINY:
                denom = TINY
            inner -= 0.5 * w[k] * log(denom)
            mvec[k] = w[k] * e / denom
        else:
            mvec[k] = 0.0
    return inner


# ---------------------------------------------------------------------------
# Variational ascent over a Lipschitz ball
# ---------------------------------------------------------------------------

cdef double _dual_eval(const double[::1] q, const double[:, ::1] lift, int has_lift,
                       const double[::1] w, int f_code, const double[::1] gamma,
                       double[::1] scores, double[::1] mvec,
                       double[::1] grad_out):
    cdef Py_ssize_t k, x, nk = w.shape[0], m = gamma.shape[0]
    cdef double inner, acc
    if has_lift:
        for k in range(nk):
            acc = 0.0
            for x in range(m):
                acc += lift[k, x] * gamma[x]
            scores[k] = acc
    else:
        for k in range(nk):
            scores[k] = gamma[k]
    inner = _inner_value_grad(scores, w, f_code, mvec)
    if has_lift:
        for x in range(m):
            acc = 0.0
            for k in range(nk):
                acc += lift[k, x] * mvec[k]
            grad_out[x] = q[x] - acc
    else:
        for x in range(m):
            grad_out[x] = q[x] - mvec[x]
    acc = 0.0
    for x in range(m):
        acc += q[x] * gamma[x]
    return acc - inner


def dual_value_grad(q_in, lift_in, w_in, int f_code, gamma_in):
    """Value and gradient of the variational objective at ``gamma``.

    Single-point evaluation of the map ``lip_dual_ascent`` climbs, with
    no feasibility projection; the caller keeps ``gamma`` inside its
    witness class.
    """
    cdef const double[::1] q = np.ascontiguousarray(q_in, dtype=np.float64)
    cdef const double[::1] w = np.ascontiguousarray(w_in, dtype=np.float64)
    cdef const double[::1] gamma = np.ascontiguousarray(gamma_in, dtype=np.float64)
    cdef int has_lift = lift_in is not None
    lift_arr = (np.ascontiguousarray(lift_in, dtype=np.float64)
                if has_lift else np.empty((0, 0), dtype=np.float64))
    cdef const double[:, ::1] lift = lift_arr
    cdef Py_ssize_t m = gamma.shape[0], nk = w.shape[0]
    grad_arr = np.empty(m, dtype=np.float64)
    cdef double[::1] grad = grad_arr
    cdef double[::1] scores = np.empty(nk, dtype=np.float64)
    cdef double[::1] mvec = np.empty(nk, dtype=np.float64)
    cdef double val = _dual_eval(q, lift, has_lift, w, f_code, gamma,
                                 scores, mvec, grad)
    return val, grad_arr


def lip_dual_ascent(q_in, lift_in, w_in, dist_in, double lip, int f_code,
                    gamma0, int max_iter=5000, double tol=1e-10,
                    double upper=INFINITY):
    """Maximize the variational objective over the L-Lipschitz ball.

    Same contract as the reference backend: backtracking projected
    ascent with McShane feasibility, Polyak/diminishing recovery kicks
    when backtracking stalls on an envelope kink, best evaluated pair
    returned.  Returns ``(gamma, value, iterations)``.
    """
    cdef const double[::1] q = np.ascontiguousarray(q_in, dtype=np.float64)
    cdef const double[::1] w = np.ascontiguousarray(w_in, dtype=np.float64)
    cdef const double[:, ::1] dist = np.ascontiguousarray(dist_in, dtype=np.float64)
    cdef int has_lift = lift_in is not None
    lift_arr = (np.ascontiguousarray(lift_in, dtype=np.float64)
                if has_lift else np.empty((0, 0), dtype=np.float64))
    cdef const double[:, ::1] lift = lift_arr

    cdef Py_ssize_t m = q.shape[0], nk = w.shape[0], x
    gamma_arr = np.empty(m, dtype=np.float64)
    cdef double[::1] gamma = gamma_arr
    best_arr = np.empty(m, dtype=np.float64)
    cdef double[::1] best_g = best_arr
    cdef const double[::1] g0 = np.ascontiguousarray(gamma0, dtype=np.float64)
    _mcshane(g0, dist, lip, gamma)

    cdef double[::1] trial = np.empty(m, dtype=np.float64)
    cdef double[::1] shifted = np.empty(m, dtype=np.float64)
    cdef double[::1] grad = np.empty(m, dtype=np.float64)
    cdef double[::1] gtrial = np.empty(m, dtype=np.float64)
    cdef double[::1] scores = np.empty(nk, dtype=np.float64)
    cdef double[::1] mvec = np.empty(nk, dtype=np.float64)

    cdef double cur = _dual_eval(q, lift, has_lift, w, f_code, gamma,
                                 scores, mvec, grad)
    cdef double best_v = cur
    for x in range(m):
        best_g[x] = gamma[x]
    cdef double step = 1.0, val, thresh, gsq, room, kick
    cdef int it = 0, ls, improved, stall = 0

    for it in range(1, max_iter + 1):
        improved = 0
        for ls in range(40):
            for x in range(m):
                shifted[x] = gamma[x] + step * grad[x]
            _mcshane(shifted, dist, lip, trial)
            val = _dual_eval(q, lift, has_lift, w, f_code, trial,
                             scores, mvec, gtrial)
            thresh = cur if cur > 1.0 else (-cur if cur < -1.0 else 1.0)
            if val > cur + tol * thresh:
                for x in range(m):
                    gamma[x] = trial[x]
                    grad[x] = gtrial[x]
                cur = val
                step *= 1.25
                improved = 1
                break
            step *= 0.5
        if improved:
            stall = 0
            if cur > best_v:
                best_v = cur
                for x in range(m):
                    best_g[x] = gamma[x]
            continue
        stall += 1
        gsq = 0.0
        for x in range(m):
            gsq += grad[x] * grad[x]
        if stall > 40 or gsq <= 1e-300:
            break
        if upper < INFINITY:
            room = upper - cur
            thresh = upper if upper > 1.0 else (-upper if upper < -1.0 else 1.0)
            if room <= 1e-15 * thresh:
                break
            kick = room / gsq
        else:
            kick = 1.0 / (sqrt(<double> stall) * sqrt(gsq))
        for x in range(m):
            shifted[x] = gamma[x] + kick * grad[x]
        _mcshane(shifted, dist, lip, gamma)
        cur = _dual_eval(q, lift, has_lift, w, f_code, gamma,
                         scores, mvec, grad)
        if cur > best_v:
            best_v = cur
            for x in range(m):
                best_g[x] = gamma[x]
        step = kick
        if step < 1e-9:
            step = 1e-9
        elif step > 1e6:
            step = 1e6
    return best_arr, best_v, it


# ---------------------------------------------------------------------------
# Proximal-transport dual ascent
# ---------------------------------------------------------------------------

cdef double _pot_eval(const double[::1] q, const double[::1] logp, const double[:, ::1] cost,
                      double eps, const double[::1] phi, double[::1] expo,
                      Py_ssize_t[::1] amin, double[::1] grad_out):
    cdef Py_ssize_t x, y, n = q.shape[0], m = logp.shape[0], bi
    cdef double best, v, emax = -INFINITY, total = 0.0, value
    for y in range(m):
        best = INFINITY
        bi = 0
        for x in range(n):
            v = cost[x, y] - phi[x]
            if v < best:
                best = v
                bi = x
        amin[y] = bi
        expo[y] = logp[y] - best / eps
        if expo[y] > emax:
            emax = expo[y]
    for y in range(m):
        expo[y] = exp(expo[y] - emax)
        total += expo[y]
    value = 0.0
    for x in range(n):
        value += q[x] * phi[x]
        grad_out[x] = q[x]
    value -= eps * (emax + log(total))
    for y in range(m):
        grad_out[amin[y]] -= expo[y] / total
    return value


def potential_dual_ascent(q_in, p_in, cost_in, double eps, phi0,
                          int max_iter=4000, double tol=1e-12,
                          double upper=INFINITY):
    """Maximize the proximal-transport dual over the first potential.

    Same contract as the reference backend: backtracking ascent with
    Polyak/diminishing recovery kicks on stalls, best evaluated pair
    returned.  Returns ``(phi, value, iterations)``.
    """
    cdef const double[::1] q = np.ascontiguousarray(q_in, dtype=np.float64)
    cdef const double[::1] p = np.ascontiguousarray(p_in, dtype=np.float64)
    cdef const double[:, ::1] cost = np.ascontiguousarray(cost_in, dtype=np.float64)
    phi_arr = np.array(phi0, dtype=np.float64)
    cdef double[::1] phi = phi_arr
    cdef Py_ssize_t n = q.shape[0], m = p.shape[0], x

    best_arr = np.array(phi0, dtype=np.float64)
    cdef double[::1] best_f = best_arr

    logp_arr = np.empty(m, dtype=np.float64)
    cdef double[::1] logp = logp_arr
    for x in range(m):
        logp[x] = log(p[x]) if p[x] > 0.0 else -INFINITY

    cdef double[::1] expo = np.empty(m, dtype=np.float64)
    cdef Py_ssize_t[::1] amin = np.empty(m, dtype=np.intp)
    cdef double[::1] grad = np.empty(n, dtype=np.float64)
    cdef double[::1] gtrial = np.empty(n, dtype=np.float64)
    cdef double[::1] trial = np.empty(n, dtype=np.float64)

    cdef double cur = _pot_eval(q, logp, cost, eps, phi, expo, amin, grad)
    cdef double best_v = cur
    for x in range(n):
        best_f[x] = phi[x]
    cdef double step = 1.0, val, thresh, gsq, room, kick
    cdef int it = 0, ls, improved, stall = 0

    for it in range(1, max_iter + 1):
        improved = 0
        for ls in range(40):
            for x in range(n):
                trial[x] = phi[x] + step * grad[x]
            val = _pot_eval(q, logp, cost, eps, trial, expo, amin, gtrial)
            thresh = cur if cur > 1.0 else (-cur if cur < -1.0 else 1.0)
            if val > cur + tol * thresh:
                for x in range(n):
                    phi[x] = trial[x]
                    grad[x] = gtrial[x]
                cur = val
                step *= 1.25
                improved = 1
                break
            step *= 0.5
        if improved:
            stall = 0
            if cur > best_v:
                best_v = cur
                for x in range(n):
                    best_f[x] = phi[x]
            continue
        stall += 1
        gsq = 0.0
        for x in range(n):
            gsq += grad[x] * grad[x]
        if stall > 40 or gsq <= 1e-300:
            break
        if upper < INFINITY:
            room = upper - cur
            thresh = upper if upper > 1.0 else (-upper if upper < -1.0 else 1.0)
            if room <= 1e-15 * thresh:
                break
            kick = room / gsq
        else:
            kick = 1.0 / (sqrt(<double> stall) * sqrt(gsq))
        for x in range(n):
            phi[x] = phi[x] + kick * grad[x]
        cur = _pot_eval(q, logp, cost, eps, phi, expo, amin, grad)
        if cur > best_v:
            best_v = cur
            for x in range(n):
                best_f[x] = phi[x]
        step = kick
        if step < 1e-9:
            step = 1e-9
        elif step > 1e6:
            step = 1e6
    return best_arr, best_v, it
