"""Reference implementations of the finite-support solver kernels.

Three convex workhorses shared by the divergence oracle:

``coupling_minimize``
    Projected gradient descent on a transport coupling ``pi`` with fixed
    row sums, minimizing ``<cost, pi> + weight * D_f(colsum(pi) || p)``.
    Minimizing over the coupling is equivalent to minimizing
    ``IPM/transport term + D_f(R||p)`` over the intermediate measure
    ``R``: for any ``R``, the transport term is itself a minimum over
    couplings with column sums ``R``, so the joint minimum over ``pi``
    attains the same value with ``R = colsum(pi*)``.

``lip_dual_ascent``
    Projected gradient ascent on the variational (dual) form
    ``max_gamma  <q, gamma> - inf_nu { nu + sum_k w_k f*((A gamma)_k - nu) }``
    subject to ``gamma`` being L-Lipschitz for a finite metric.  ``A``
    generalizes from the identity (plain dual) to a row-stochastic
    conditional-expectation matrix (family-projected classes).

``potential_dual_ascent``
    Concave maximization of the proximal-transport dual over the first
    Kantorovich potential, the second being eliminated by c-transform.

A compiled twin of this module implements the same algorithms with the
same parameters; results agree to solver tolerance (not bit-for-bit,
since summation orders differ).
"""

from __future__ import annotations

import math

import numpy as np

F_KL = 0
F_JS = 1

_LOG2 = float(np.log(2.0))
_TINY = 1e-300


# ---------------------------------------------------------------------------
# f-divergence primitives on nonnegative vectors
# ---------------------------------------------------------------------------

def div_value(r: np.ndarray, p: np.ndarray, f_code: int) -> float:
    """D_f(r || p) for mass vectors with the finite-support conventions.

    KL assumes every retained column has ``p > 0`` (callers drop the
    complement); JS uses the finite extension and is defined for any
    pair of nonnegative vectors.
    """
    r = np.asarray(r, dtype=np.float64)
    p = np.asarray(p, dtype=np.float64)
    if f_code == F_KL:
        mask = r > 0.0
        return float(np.sum(r[mask] * np.log(r[mask] / p[mask])))
    mid = r + p
    with np.errstate(divide="ignore", invalid="ignore"):
        a = np.where(r > 0.0, r * np.log(np.where(r > 0, 2.0 * r / mid, 1.0)), 0.0)
        b = np.where(p > 0.0, p * np.log(np.where(p > 0, 2.0 * p / mid, 1.0)), 0.0)
    return float(0.5 * (np.sum(a) + np.sum(b)))


def div_grad(r: np.ndarray, p: np.ndarray, f_code: int) -> np.ndarray:
    """dD_f(r||p)/dr, with the slope clipped where ``r = 0``."""
    r = np.asarray(r, dtype=np.float64)
    p = np.asarray(p, dtype=np.float64)
    if f_code == F_KL:
        return np.log((r + _TINY) / p) + 1.0
    return 0.5 * np.log((2.0 * r + _TINY) / (r + p + _TINY))


# ---------------------------------------------------------------------------
# Euclidean projection of each row onto a scaled simplex
# ---------------------------------------------------------------------------

def project_rows_simplex(mat: np.ndarray, row_sums: np.ndarray) -> np.ndarray:
    """Project each row of ``mat`` onto ``{x >= 0, sum x = row_sums[i]}``."""
    n, m = mat.shape
    out = np.empty_like(mat)
    srt = -np.sort(-mat, axis=1)
    csum = np.cumsum(srt, axis=1)
    ks = np.arange(1, m + 1)
    for i in range(n):
        s = row_sums[i]
        if s <= 0.0:
            out[i] = 0.0
            continue
        cond = srt[i] - (csum[i] - s) / ks > 0.0
        rho = int(np.nonzero(cond)[0][-1]) + 1
        theta = (csum[i, rho - 1] - s) / rho
        out[i] = np.maximum(mat[i] - theta, 0.0)
    return out


# ---------------------------------------------------------------------------
# Coupling-space projected gradient descent
# ---------------------------------------------------------------------------

def coupling_minimize(
    cost: np.ndarray,
    q: np.ndarray,
    p: np.ndarray,
    f_code: int,
    weight: float,
    pi0: np.ndarray,
    max_iter: int = 20000,
    gap_tol: float = 1e-9,
):
    """Minimize ``<cost, pi> + weight * D_f(colsum pi || p)`` over couplings.

    The feasible set fixes row sums to ``q``; descent uses backtracking
    projected gradient with a Frank-Wolfe gap stopping certificate (the
    gap upper-bounds the suboptimality of a convex objective over a
    compact polytope).

    Returns ``(pi, objective, fw_gap, iterations)``.
    """
    cost = np.asarray(cost, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    p = np.asarray(p, dtype=np.float64)
    pi = np.array(pi0, dtype=np.float64)

    def objective(mat):
        return float(np.sum(mat * cost)) + weight * div_value(mat.sum(axis=0), p, f_code)

    cur = objective(pi)
    step = 1.0
    gap = np.inf
    it = 0
    for it in range(1, max_iter + 1):
        grad = cost + weight * div_grad(pi.sum(axis=0), p, f_code)[None, :]
        # Frank-Wolfe gap: best linearized decrease over the polytope.
        gap = float(np.sum(grad * pi) - np.dot(q, grad.min(axis=1)))
        if gap <= gap_tol:
            break
        moved = False
        for _ in range(40):
            trial = project_rows_simplex(pi - step * grad, q)
            diff = trial - pi
            sq = float(np.sum(diff * diff))
            if sq == 0.0:
                break
            val = objective(trial)
            if val <= cur + float(np.sum(grad * diff)) + sq / (2.0 * step):
                pi, cur = trial, val
                step *= 1.25
                moved = True
                break
            step *= 0.5
        if not moved:
            break
    return pi, cur, gap, it


# ---------------------------------------------------------------------------
# Lipschitz projection (McShane envelope)
# ---------------------------------------------------------------------------

def mcshane(gamma: np.ndarray, dist: np.ndarray, lip: float) -> np.ndarray:
    """Largest ``lip``-Lipschitz function dominated by ``gamma``.

    One pass computes ``min_y gamma_y + lip * d(x, y)``; the result is
    always feasible and fixes any already-feasible input.
    """
    return np.min(gamma[None, :] + lip * dist, axis=1)


# ---------------------------------------------------------------------------
# Inner shift for the JS conjugate
# ---------------------------------------------------------------------------

def solve_nu_js(scores: np.ndarray, w: np.ndarray) -> float:
    """Minimize ``nu + sum w f*_JS(scores - nu)`` over the valid shifts.

    With f*_JS(s) = -log(2 - e^{2s})/2 the objective is strictly convex
    on ``(max scores - log(2)/2, inf)`` with derivative
    ``1 - sum w e^{2(s-nu)}/(2 - e^{2(s-nu)})``; solved by bisection on
    the derivative sign.
    """
    active = w > 0.0
    s = scores[active]
    ww = w[active]
    smax = float(np.max(s))
    lo = smax - 0.5 * _LOG2
    hi = smax + 1.0

    def dh(nu):
        e = np.exp(2.0 * (s - nu))
        with np.errstate(divide="ignore"):
            return 1.0 - float(np.sum(ww * e / (2.0 - e)))

    for _ in range(90):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if dh(mid) < 0.0:
            lo = mid
        else:
            hi = mid
    return hi


def _inner_value_grad(scores, w, f_code):
    """Value and weight vector of ``inf_nu {nu + sum w f*(s - nu)}``.

    Returns ``(inner_value, m)`` with ``m_k = w_k (f*)'(s_k - nu*)`` —
    the envelope-theorem gradient of the inner value in the scores.
    Entries with ``w_k = 0`` contribute nothing (0 * f*(.) = 0) and are
    masked out before any exponential touches their scores.
    """
    mvec = np.zeros_like(w)
    active = w > 0.0
    s = scores[active]
    ww = w[active]
    if f_code == F_KL:
        # inf_nu { nu + sum w e^{s - nu - 1} } = log sum w e^{s}.
        smax = float(np.max(s))
        z = ww * np.exp(s - smax)
        total = float(np.sum(z))
        mvec[active] = z / total
        return smax + float(np.log(total)), mvec
    nu = solve_nu_js(scores, w)
    e = np.exp(2.0 * (s - nu))
    denom = np.maximum(2.0 - e, _TINY)
    inner = nu - 0.5 * float(np.sum(ww * np.log(denom)))
    mvec[active] = ww * e / denom
    return inner, mvec


def dual_value_grad(q, lift, w, f_code, gamma):
    """Value and gradient of the variational objective at ``gamma``.

    The objective is ``<q, gamma> - inf_nu { nu + sum_k w_k
    f*((lift gamma)_k - nu) }`` — the same map ``lip_dual_ascent``
    climbs — evaluated at a single point with no feasibility
    projection, so the caller is responsible for keeping ``gamma``
    inside its witness class.  Smooth and concave in ``gamma``.
    """
    q = np.asarray(q, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    gamma = np.asarray(gamma, dtype=np.float64)
    scores = gamma if lift is None else lift @ gamma
    inner, m = _inner_value_grad(scores, w, f_code)
    grad = q - (m if lift is None else lift.T @ m)
    return float(np.dot(q, gamma)) - inner, grad


def lip_dual_ascent(
    q: np.ndarray,
    lift: np.ndarray,
    w: np.ndarray,
    dist: np.ndarray,
    lip: float,
    f_code: int,
    gamma0: np.ndarray,
    max_iter: int = 5000,
    tol: float = 1e-10,
    upper: float = math.inf,
):
    """Maximize the variational objective over the L-Lipschitz ball.

    Objective: ``<q, gamma> - inf_nu { nu + sum_k w_k f*((lift gamma)_k - nu) }``
    subject to ``|gamma_x - gamma_y| <= lip * dist[x, y]``.  ``lift`` may
    be ``None`` for the identity.  Ascent uses backtracking projected
    gradient with the McShane envelope as the feasibility operator.

    The envelope introduces kinks where plain backtracking stalls.  When
    it exhausts its halvings, the iterate is kicked by a recovery step
    instead of terminating: a Polyak step ``(upper - value) / ||grad||^2``
    when a finite ``upper`` bound on the optimum is available, else a
    diminishing step.  Recovery moves may lower the objective, so the
    best evaluated pair is tracked and returned.

    Returns ``(gamma, value, iterations)`` for the best evaluated gamma.
    """
    q = np.asarray(q, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    gamma = mcshane(np.asarray(gamma0, dtype=np.float64), dist, lip)

    def evaluate(g):
        scores = g if lift is None else lift @ g
        inner, m = _inner_value_grad(scores, w, f_code)
        grad = q - (m if lift is None else lift.T @ m)
        return float(np.dot(q, g)) - inner, grad

    cur, grad = evaluate(gamma)
    best_g, best_v = gamma, cur
    step = 1.0
    stall = 0
    it = 0
    for it in range(1, max_iter + 1):
        improved = False
        for _ in range(40):
            trial = mcshane(gamma + step * grad, dist, lip)
            val, g2 = evaluate(trial)
            if val > cur + tol * max(1.0, abs(cur)):
                gamma, cur, grad = trial, val, g2
                step *= 1.25
                improved = True
                break
            step *= 0.5
        if improved:
            stall = 0
            if cur > best_v:
                best_g, best_v = gamma, cur
            continue
        stall += 1
        gsq = float(np.dot(grad, grad))
        if stall > 40 or gsq <= 1e-300:
            break
        if math.isfinite(upper):
            room = upper - cur
            if room <= 1e-15 * max(1.0, abs(upper)):
                break
            kick = room / gsq
        else:
            kick = 1.0 / (math.sqrt(float(stall)) * math.sqrt(gsq))
        gamma = mcshane(gamma + kick * grad, dist, lip)
        cur, grad = evaluate(gamma)
        if cur > best_v:
            best_g, best_v = gamma, cur
        step = min(max(kick, 1e-9), 1e6)
    return best_g, best_v, it


def potential_dual_ascent(
    q: np.ndarray,
    p: np.ndarray,
    cost: np.ndarray,
    eps: float,
    phi0: np.ndarray,
    max_iter: int = 4000,
    tol: float = 1e-12,
    upper: float = math.inf,
):
    """Maximize the proximal-transport dual over the first potential.

    Objective: ``<q, phi> - eps log sum_y p_y e^{-psi_y / eps}`` with the
    second potential eliminated by the c-transform
    ``psi_y = min_x (cost[x, y] - phi_x)``, which keeps the pair
    feasible for ``phi ⊕ psi <= cost`` by construction.

    The c-transform makes the objective piecewise smooth; when plain
    backtracking stalls on a kink, the iterate is kicked by a Polyak
    step (given a finite ``upper`` bound on the optimum) or a
    diminishing step, and the best evaluated pair is returned.

    Returns ``(phi, value, iterations)`` for the best evaluated phi.
    """
    q = np.asarray(q, dtype=np.float64)
    p = np.asarray(p, dtype=np.float64)
    cost = np.asarray(cost, dtype=np.float64)
    phi = np.array(phi0, dtype=np.float64)

    logp = np.full_like(p, -np.inf)
    logp[p > 0.0] = np.log(p[p > 0.0])

    def evaluate(f):
        reduced = cost - f[:, None]
        amin = np.argmin(reduced, axis=0)
        psi = reduced[amin, np.arange(cost.shape[1])]
        expo = logp - psi / eps
        emax = float(np.max(expo))
        zvec = np.exp(expo - emax)
        total = float(np.sum(zvec))
        value = float(np.dot(q, f)) - eps * (emax + float(np.log(total)))
        u = zvec / total
        grad = q.copy()
        np.subtract.at(grad, amin, u)
        return value, grad

    cur, grad = evaluate(phi)
    best_f, best_v = phi, cur
    step = 1.0
    stall = 0
    it = 0
    for it in range(1, max_iter + 1):
        improved = False
        for _ in range(40):
            trial = phi + step * grad
            val, g2 = evaluate(trial)
            if val > cur + tol * max(1.0, abs(cur)):
                phi, cur, grad = trial, val, g2
                step *= 1.25
                improved = True
                break
            step *= 0.5
        if improved:
            stall = 0
            if cur > best_v:
                best_f, best_v = phi, cur
            continue
        stall += 1
        gsq = float(np.dot(grad, grad))
        if stall > 40 or gsq <= 1e-300:
            break
        if math.isfinite(upper):
            room = upper - cur
            if room <= 1e-15 * max(1.0, abs(upper)):
                break
            kick = room / gsq
        else:
            kick = 1.0 / (math.sqrt(float(stall)) * math.sqrt(gsq))
        phi = phi + kick * grad
        cur, grad = evaluate(phi)
        if cur > best_v:
            best_f, best_v = phi, cur
        step = min(max(kick, 1e-9), 1e6)
    return best_f, best_v, it
