"""Worst-case (tau, mode) search for one uncertain row.

For a candidate solution the semi-infinite family of cuts collapses to the
scalar function

    V(h, tau) = g(tau) * sqrt(R^2 - h^2) + f(tau) * h - c * tau,

with ``g(tau) = sqrt((1 - eps - tau^-alpha) / eps)``, ``f(tau) = -(alpha*tau -
alpha - 1)`` and ``h = a^T (mu - m) / alpha`` ranging over ``[h_lo, h_hi]``.
:func:`worst_case` maximizes ``V`` over ``tau >= tau0`` and that interval
analytically by splitting the tau axis where the unconstrained maximizer in
``h`` leaves the interval. :func:`brute_force_worst_case` is an independent
grid search used to check it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize_scalar

from .errors import DomainError
from .uncertainty import EllipsoidSupport, PointSupport, RectangleSupport

__all__ = [
    "SeparationInstance",
    "WorstCase",
    "g_value",
    "g_prime",
    "f_value",
    "violation_value",
    "h_hat",
    "h_hat_crossing_bound",
    "lower_edge_decay_bound",
    "case3_slope",
    "tau_bracket",
    "worst_case",
    "brute_force_worst_case",
    "recover_mode",
    "h_range",
]

TAU_TOL = 1e-12
SUPREMUM_TOL = 1e-10
ZERO_ROW_TOL = 1e-10


@dataclass(frozen=True)
class SeparationInstance:
    """Scalar data of one row at a fixed candidate solution."""

    alpha: float
    epsilon: float
    R_tilde: float
    c_tilde: float
    h_lo: float
    h_hi: float

    def __post_init__(self):
        if not self.alpha >= 1.0 or not 0.0 < self.epsilon < 0.5:
            raise DomainError("need alpha >= 1 and 0 < epsilon < 0.5")
        if not self.R_tilde > 0.0:
            raise DomainError("R_tilde must be positive")
        if self.h_lo > self.h_hi:
            raise DomainError(f"h_lo={self.h_lo} exceeds h_hi={self.h_hi}")
        if not (-self.R_tilde < self.h_lo and self.h_hi < self.R_tilde):
            raise DomainError("[h_lo, h_hi] must lie inside (-R_tilde, R_tilde)")
        slack = self.c_tilde + self.alpha * self.h_lo
        if slack < -SUPREMUM_TOL * max(1.0, abs(self.c_tilde), self.R_tilde):
            raise DomainError(
                f"mode feasibility violated: c_tilde + alpha*h_lo = {slack:.3e} < 0"
            )

    @property
    def tau0(self) -> float:
        return (1.0 / (1.0 - self.epsilon)) ** (1.0 / self.alpha)

    @property
    def tau_zero_h(self) -> float:
        """``(alpha + 1) / alpha``, where the unconstrained maximizer in h is 0."""
        return (self.alpha + 1.0) / self.alpha

    @classmethod
    def from_row(cls, a, b, moments, support, unimodality, clamp_tol=1e-6):
        """Build the instance for row ``a^T xi <= b`` at a fixed solution.

        ``c_tilde`` is lifted to ``-alpha*h_lo`` when it falls short by less
        than ``clamp_tol`` (relative), absorbing solver feasibility noise in
        the mode-feasibility constraints.
        """
        a = np.asarray(a, dtype=float)
        alpha = unimodality.alpha
        R = math.sqrt(max(float(a @ moments.scaled_covariance(alpha) @ a), 0.0))
        c = float(b) - float(moments.mu @ a)
        h_lo, h_hi = h_range(a, moments.mu, support, alpha)
        floor = -alpha * h_lo
        if floor - clamp_tol * max(1.0, abs(c), R) <= c < floor:
            c = floor
        return cls(alpha, unimodality.epsilon, R, c, h_lo, h_hi)


@dataclass(frozen=True)
class WorstCase:
    tau_star: float
    h_star: float
    violation: float
    case: int
    at_supremum: bool = False


def h_range(a, mu, support, alpha: float) -> tuple[float, float]:
    """Range of ``a^T (mu - m) / alpha`` over the mode support."""
    a = np.asarray(a, dtype=float)
    lo, hi = support.support_range(a)
    base = float(a @ mu)
    return (base - hi) / alpha, (base - lo) / alpha


# --------------------------------------------------------------------------
# scalar building blocks


def g_value(tau: float, alpha: float, epsilon: float) -> float:
    inner = (1.0 - epsilon - tau ** (-alpha)) / epsilon
    return math.sqrt(inner) if inner > 0.0 else 0.0


def g_prime(tau: float, alpha: float, epsilon: float) -> float:
    g = g_value(tau, alpha, epsilon)
    if g == 0.0:
        return math.inf
    return alpha / epsilon * tau ** (-alpha - 1.0) / (2.0 * g)


def f_value(tau: float, alpha: float) -> float:
    return -(alpha * tau - alpha - 1.0)


def _check_tau(tau, inst):
    if tau < inst.tau0 * (1.0 - 1e-14):
        raise DomainError(f"tau={tau} is below tau0={inst.tau0}")


def violation_value(h: float, tau: float, inst: SeparationInstance) -> float:
    """Left side of the scalarized cut; positive means the cut is violated."""
    _check_tau(tau, inst)
    R = inst.R_tilde
    if abs(h) > R * (1.0 + 1e-14):
        raise DomainError(f"|h|={abs(h)} exceeds R_tilde={R}")
    root = math.sqrt(max(R * R - h * h, 0.0))
    return (
        g_value(tau, inst.alpha, inst.epsilon) * root
        + f_value(tau, inst.alpha) * h
        - inst.c_tilde * tau
    )


def h_hat(tau: float, inst: SeparationInstance) -> float:
    """Maximizer of :func:`violation_value` over ``h in [-R, R]`` at fixed tau."""
    _check_tau(tau, inst)
    g = g_value(tau, inst.alpha, inst.epsilon)
    f = f_value(tau, inst.alpha)
    return f / math.hypot(g, f) * inst.R_tilde


def h_hat_crossing_bound(h: float, inst: SeparationInstance) -> float:
    """Finite tau at or beyond which ``h_hat(tau) <= h`` (``h`` in (-R, R))."""
    a, e, R = inst.alpha, inst.epsilon, inst.R_tilde
    if h >= 0.0:
        return (a + 1.0) / a
    return -(h * math.sqrt((1.0 - e) / (e * (R * R - h * h))) - (a + 1.0)) / a


def case3_slope(inst: SeparationInstance) -> float:
    """``c_tilde + alpha * h_lo``; nonnegative under mode feasibility."""
    return inst.c_tilde + inst.alpha * inst.h_lo


def lower_edge_decay_bound(inst: SeparationInstance) -> float:
    """Finite tau beyond which the h = h_lo branch is decreasing.

    Returns ``inf`` when ``c_tilde + alpha*h_lo`` vanishes (no finite bound).
    """
    a, e = inst.alpha, inst.epsilon
    slope = case3_slope(inst)
    if slope <= SUPREMUM_TOL:
        return math.inf
    c3_sq = inst.R_tilde**2 - inst.h_lo**2
    c2 = a * a * c3_sq / (4.0 * e * slope * slope)
    root = (-1.0 + math.sqrt(1.0 + 4.0 * (1.0 - e) * c2)) / (2.0 * c2)
    if root <= 0.0:
        # 4(1-e)c2 underflowed relative to 1: the quadratic root tends to 1-e
        root = 1.0 - e
    return root ** (-1.0 / a)


def _bisect_decreasing(fn, lo, hi, tol=TAU_TOL, max_iter=400):
    """Root of a function positive at ``lo`` and nonpositive at ``hi``."""
    for _ in range(max_iter):
        if hi - lo <= tol * max(1.0, abs(lo)):
            break
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if fn(mid) > 0.0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _solve_h_hat(target: float, inst: SeparationInstance) -> float:
    if target == 0.0:
        return inst.tau_zero_h
    if target > 0.0:
        lo, hi = inst.tau0, inst.tau_zero_h
    else:
        lo, hi = inst.tau_zero_h, h_hat_crossing_bound(target, inst)
    return _bisect_decreasing(lambda t: h_hat(t, inst) - target, lo, hi)


def tau_bracket(inst: SeparationInstance) -> tuple[float, float]:
    """Taus where the unconstrained maximizer in h hits ``h_hi`` and ``h_lo``."""
    tau_hi = _solve_h_hat(inst.h_lo, inst)
    if inst.h_hi == inst.h_lo:
        return tau_hi, tau_hi
    tau_lo = _solve_h_hat(inst.h_hi, inst)
    return tau_lo, max(tau_lo, tau_hi)


# --------------------------------------------------------------------------
# the three cases


def _edge_case(inst, h, tau_a, tau_b):
    """Maximize the concave ``V(h, .)`` on ``[tau_a, tau_b]``; tau_b may be inf."""
    a, e = inst.alpha, inst.epsilon
    C = math.sqrt(inst.R_tilde**2 - h * h)
    slope = inst.c_tilde + a * h

    def deriv(t):
        return C * g_prime(t, a, e) - slope

    if math.isinf(tau_b):
        raise ValueError("unbounded interval needs a finite bound")
    if deriv(tau_b) >= 0.0:
        return tau_b
    if deriv(tau_a) <= 0.0:
        return tau_a
    return _bisect_decreasing(deriv, tau_a, tau_b)


def _q_terms(t, a, e):
    g2 = (1.0 - e - t ** (-a)) / e
    f = -(a * t - a - 1.0)
    q = max(g2, 0.0) + f * f
    q1 = a / e * t ** (-a - 1.0) - 2.0 * a * f
    q2 = -a * (a + 1.0) / e * t ** (-a - 2.0) + 2.0 * a * a
    return q, q1, q2


def _case2_value(t, inst):
    q, _, _ = _q_terms(t, inst.alpha, inst.epsilon)
    return inst.R_tilde * math.sqrt(q) - inst.c_tilde * t


def _case2_slope(t, inst):
    q, q1, _ = _q_terms(t, inst.alpha, inst.epsilon)
    return inst.R_tilde * q1 / (2.0 * math.sqrt(q)) - inst.c_tilde


def _case2_curvature_sign(t, inst):
    q, q1, q2 = _q_terms(t, inst.alpha, inst.epsilon)
    return 2.0 * q * q2 - q1 * q1


def _squared_form_candidates(inst, tl, th):
    """Stationary points of ``R^2 (g^2 + f^2) - c^2 tau^2`` on ``[tl, th]``.

    The squared form shares its sign with the case-2 violation when
    ``c_tilde >= 0`` but not its maximizer, so these points are only
    candidates and are re-scored on the true violation.
    """
    a, e, R, c = inst.alpha, inst.epsilon, inst.R_tilde, inst.c_tilde
    lin = 2.0 * a * a * R * R - 2.0 * c * c

    def d1(t):
        return a * R * R / e * t ** (-a - 1.0) + lin * t - 2.0 * R * R * a * (a + 1.0)

    def d2(t):
        return -a * R * R * (a + 1.0) / e * t ** (-a - 2.0) + lin

    if lin > 0.0 and d2(tl) > 0.0:
        return []  # convex on the whole interval
    upper = th
    if lin > 0.0 and d2(th) > 0.0:
        upper = (a * (a + 1.0) * R * R / (e * lin)) ** (1.0 / (a + 2.0))
        upper = min(max(upper, tl), th)
    if d1(tl) > 0.0 and d1(upper) < 0.0:
        return [_bisect_decreasing(d1, tl, upper)]
    return []


def _case2(inst, tl, th):
    cands = [tl, th]
    if th > tl:
        concave_end = th
        s_lo = _case2_curvature_sign(tl, inst)
        s_hi = _case2_curvature_sign(th, inst)
        if s_lo >= 0.0:
            concave_end = None
        elif s_hi > 0.0:
            concave_end = _bisect_decreasing(lambda t: -_case2_curvature_sign(t, inst), tl, th)
            cands.append(concave_end)
        if concave_end is not None:
            if _case2_slope(tl, inst) > 0.0 and _case2_slope(concave_end, inst) < 0.0:
                cands.append(_bisect_decreasing(lambda t: _case2_slope(t, inst), tl, concave_end))
        cands.extend(_squared_form_candidates(inst, tl, th))
    best = max(cands, key=lambda t: _case2_value(t, inst))
    return best, h_hat(best, inst)


def worst_case(inst: SeparationInstance) -> WorstCase:
    """Global maximizer of the scalarized violation over ``tau >= tau0`` and h.

    Case 1 covers ``[tau0, tau_lo]`` with ``h = h_hi``, case 2 covers
    ``[tau_lo, tau_hi]`` with the interior maximizer, case 3 covers
    ``[tau_hi, inf)`` with ``h = h_lo``. When ``c_tilde + alpha*h_lo`` is zero
    case 3 only has a supremum at infinity; it is reported as the violation
    and ``tau_star`` is a finite tau within 1e-6 of it.
    """
    a, e = inst.alpha, inst.epsilon
    t0 = inst.tau0
    tl, th = tau_bracket(inst)
    results = []

    t1 = _edge_case(inst, inst.h_hi, t0, tl)
    results.append(WorstCase(t1, inst.h_hi, violation_value(inst.h_hi, t1, inst), 1))

    if th > tl:
        t2, h2 = _case2(inst, tl, th)
        h2 = min(max(h2, inst.h_lo), inst.h_hi)
        results.append(WorstCase(t2, h2, violation_value(h2, t2, inst), 2))

    slope = case3_slope(inst)
    C3 = math.sqrt(inst.R_tilde**2 - inst.h_lo**2)
    if slope <= SUPREMUM_TOL:
        sup = C3 * math.sqrt((1.0 - e) / e) + (a + 1.0) * inst.h_lo
        target = math.sqrt((1.0 - e) / e) - 0.5e-6 / C3
        t_emit = (1.0 - e - e * target * target) ** (-1.0 / a) if target > 0.0 else th
        t_emit = max(t_emit, th)
        results.append(WorstCase(t_emit, inst.h_lo, sup, 3, at_supremum=True))
    else:
        t3 = _edge_case(inst, inst.h_lo, th, max(lower_edge_decay_bound(inst), th))
        results.append(WorstCase(t3, inst.h_lo, violation_value(inst.h_lo, t3, inst), 3))

    return max(results, key=lambda w: w.violation)


# --------------------------------------------------------------------------
# independent oracle


def brute_force_worst_case(
    inst: SeparationInstance,
    grid_tau: int = 2000,
    grid_h: int = 2000,
    refine_iters: int = 50,
) -> WorstCase:
    """Grid search plus coordinate-ascent polish.

    Only the closed-form search bounds are shared with :func:`worst_case`;
    the maximization itself is plain enumeration over a tau grid (half
    geometric in tau, half geometric in ``tau - tau0``) times a uniform h grid,
    followed by alternating bounded 1-D maximizations.
    """
    a, e, R, c = inst.alpha, inst.epsilon, inst.R_tilde, inst.c_tilde
    t0 = inst.tau0
    t2 = lower_edge_decay_bound(inst)
    cap = max(
        h_hat_crossing_bound(inst.h_lo, inst),
        t2 if math.isfinite(t2) else 1e8,
        10.0 * (a + 1.0) / a,
    )
    half = max(grid_tau // 2, 2)
    taus = np.unique(np.concatenate([
        np.geomspace(t0, cap, grid_tau - half),
        t0 + np.geomspace(1e-12 * max(1.0, t0), cap - t0, half),
    ]))
    hs = np.linspace(inst.h_lo, inst.h_hi, grid_h) if inst.h_hi > inst.h_lo else np.array([inst.h_lo])

    g = np.sqrt(np.maximum((1.0 - e - taus ** (-a)) / e, 0.0))
    f = -(a * taus - a - 1.0)
    root = np.sqrt(np.maximum(R * R - hs * hs, 0.0))
    vals = np.outer(g, root) + np.outer(f, hs) - c * taus[:, None]
    i, j = np.unravel_index(int(np.argmax(vals)), vals.shape)
    tau, h = float(taus[i]), float(hs[j])

    def value(hh, tt):
        gg = math.sqrt(max((1.0 - e - tt ** (-a)) / e, 0.0))
        return gg * math.sqrt(max(R * R - hh * hh, 0.0)) - (a * tt - a - 1.0) * hh - c * tt

    best = value(h, tau)
    opts = {"xatol": 1e-13, "maxiter": 500}
    for _ in range(refine_iters):
        if inst.h_hi > inst.h_lo:
            res = minimize_scalar(lambda hh: -value(hh, tau), bounds=(inst.h_lo, inst.h_hi),
                                  method="bounded", options=opts)
            if -res.fun > value(h, tau):
                h = float(res.x)
        lo_t = float(taus[max(i - 1, 0)])
        hi_t = float(taus[min(i + 1, len(taus) - 1)])
        for bounds in ((lo_t, hi_t), (t0, cap)):
            res = minimize_scalar(lambda tt: -value(h, tt), bounds=bounds,
                                  method="bounded", options=opts)
            if -res.fun > value(h, tau):
                tau = float(res.x)
        current = value(h, tau)
        if current - best <= 1e-15 * max(1.0, abs(best)):
            best = max(best, current)
            break
        best = current
    for hh in (inst.h_lo, inst.h_hi):
        if value(hh, tau) > best:
            h, best = hh, value(hh, tau)
    return WorstCase(tau, h, best, 0)


# --------------------------------------------------------------------------
# mode recovery


def recover_mode(h_star, a, moments, support, alpha: float, tol: float = 1e-9) -> np.ndarray:
    """A mode ``m`` in the support with ``a^T (mu - m) / alpha == h_star``."""
    a = np.asarray(a, dtype=float)
    lo, hi = h_range(a, moments.mu, support, alpha)
    scale = max(1.0, abs(lo), abs(hi))
    if h_star < lo - tol * scale or h_star > hi + tol * scale:
        raise DomainError(f"h_star={h_star} outside [{lo}, {hi}]")
    if isinstance(support, PointSupport):
        return support.mode.copy()
    base = float(a @ (moments.mu - support.center))
    if isinstance(support, RectangleSupport):
        spread = float(np.abs(a) @ support.half_width)
        lam = 0.0 if spread == 0.0 else (alpha * h_star - base) / spread
        lam = min(max(lam, -1.0), 1.0)
        return support.center - lam * np.sign(a) * support.half_width
    if isinstance(support, EllipsoidSupport):
        Pa = support.shape @ a
        spread = math.sqrt(max(float(a @ Pa), 0.0))
        lam = 0.0 if spread == 0.0 else (base - alpha * h_star) / spread
        lam = min(max(lam, -1.0), 1.0)
        if spread == 0.0:
            return support.center.copy()
        return support.center + lam * Pa / spread
    raise TypeError(f"unsupported mode support {type(support).__name__}")
