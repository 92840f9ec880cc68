"""Scenario pools, moment data, mode supports and their estimators.

All MW quantities (wind forecast errors) are stored as plain float arrays.
Moments follow the raw-second-moment convention: ``sigma = E[xi xi^T]``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DegenerateMoments, DimensionMismatch, ValidationError

__all__ = [
    "ScenarioPool",
    "MomentData",
    "UnimodalityConfig",
    "PointSupport",
    "RectangleSupport",
    "EllipsoidSupport",
    "estimate_moments",
    "estimate_mode_histogram",
    "estimate_mode_groups",
    "build_mode_support",
    "check_assumption1",
    "max_quadratic_over_ellipsoid",
]


def _frozen_array(values, ndim=None, name="array"):
    arr = np.array(values, dtype=float)
    if ndim is not None and arr.ndim != ndim:
        raise DimensionMismatch(f"{name} must be {ndim}-dimensional, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name} contains non-finite values")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class ScenarioPool:
    """A matrix of realizations, one row per scenario."""

    samples: np.ndarray

    def __post_init__(self):
        arr = np.array(self.samples, dtype=float)
        if arr.ndim == 1:
            arr = arr[:, None]
        if arr.ndim != 2 or arr.shape[1] < 1:
            raise DimensionMismatch(f"samples must be an (N, n) matrix, got shape {arr.shape}")
        if arr.shape[0] == 0:
            raise ValidationError("scenario pool is empty")
        if not np.all(np.isfinite(arr)):
            raise ValidationError("scenario pool contains non-finite values")
        arr.setflags(write=False)
        object.__setattr__(self, "samples", arr)

    @property
    def dimension(self) -> int:
        return self.samples.shape[1]

    def __len__(self) -> int:
        return self.samples.shape[0]

    @classmethod
    def from_csv(cls, path) -> "ScenarioPool":
        """Read a header-less CSV with one realization per line."""
        data = np.loadtxt(Path(path), delimiter=",", ndmin=2)
        return cls(data)

    def to_csv(self, path) -> None:
        np.savetxt(Path(path), self.samples, delimiter=",", fmt="%.17g")

    def trimmed(self, lower_q: float = 0.0005, upper_q: float = 0.9995) -> "ScenarioPool":
        """Drop samples outside the per-axis quantile box ``[lower_q, upper_q]``."""
        lo = np.quantile(self.samples, lower_q, axis=0)
        hi = np.quantile(self.samples, upper_q, axis=0)
        keep = np.all((self.samples >= lo) & (self.samples <= hi), axis=1)
        return ScenarioPool(self.samples[keep])

    def subsample(self, size: int, rng: np.random.Generator) -> "ScenarioPool":
        """Draw ``size`` samples without replacement."""
        if size > len(self):
            raise ValidationError(f"cannot draw {size} samples from a pool of {len(self)}")
        idx = rng.choice(len(self), size=size, replace=False)
        return ScenarioPool(self.samples[idx])

    def batches(self, count: int, size: int):
        """Split the leading ``count * size`` samples into disjoint batches."""
        if count * size > len(self):
            raise ValidationError(
                f"pool of {len(self)} samples is too small for {count} batches of {size}"
            )
        return [self.samples[k * size:(k + 1) * size] for k in range(count)]


@dataclass(frozen=True)
class MomentData:
    """First moment ``mu`` and raw second moment ``sigma = E[xi xi^T]``."""

    mu: np.ndarray
    sigma: np.ndarray
    covariance: np.ndarray = field(init=False, repr=False)
    cov_cholesky: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        mu = np.atleast_1d(np.array(self.mu, dtype=float))
        sigma = np.atleast_2d(np.array(self.sigma, dtype=float))
        n = mu.shape[0]
        if mu.ndim != 1 or sigma.shape != (n, n):
            raise DimensionMismatch(f"mu has length {n} but sigma has shape {sigma.shape}")
        sigma = 0.5 * (sigma + sigma.T)
        cov = sigma - np.outer(mu, mu)
        cov = 0.5 * (cov + cov.T)
        try:
            chol = np.linalg.cholesky(cov)
        except np.linalg.LinAlgError:
            raise DegenerateMoments("centered covariance is not positive definite") from None
        for name, value in (("mu", mu), ("sigma", sigma), ("covariance", cov), ("cov_cholesky", chol)):
            value.setflags(write=False)
            object.__setattr__(self, name, value)

    @classmethod
    def from_mean_cov(cls, mean, cov) -> "MomentData":
        mean = np.atleast_1d(np.asarray(mean, dtype=float))
        cov = np.atleast_2d(np.asarray(cov, dtype=float))
        return cls(mean, cov + np.outer(mean, mean))

    @property
    def dimension(self) -> int:
        return self.mu.shape[0]

    def scaled_covariance(self, alpha: float) -> np.ndarray:
        """``((alpha + 2) / alpha) * (Sigma - mu mu^T)``."""
        return (alpha + 2.0) / alpha * self.covariance


@dataclass(frozen=True)
class UnimodalityConfig:
    alpha: float = 1.0
    epsilon: float = 0.05

    def __post_init__(self):
        if not self.alpha >= 1.0:
            raise ValidationError(f"alpha must be >= 1, got {self.alpha}")
        if not 0.0 < self.epsilon < 0.5:
            raise ValidationError(f"epsilon must lie in (0, 0.5), got {self.epsilon}")

    @property
    def tau0(self) -> float:
        """Smallest admissible tau, ``(1 / (1 - epsilon)) ** (1 / alpha)``."""
        return (1.0 / (1.0 - self.epsilon)) ** (1.0 / self.alpha)


# --------------------------------------------------------------------------
# mode supports


@dataclass(frozen=True)
class PointSupport:
    """A single known mode location."""

    mode: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "mode", _frozen_array(np.atleast_1d(self.mode), 1, "mode"))

    @property
    def dimension(self) -> int:
        return self.mode.shape[0]

    @property
    def center(self) -> np.ndarray:
        return self.mode

    def initial_mode(self) -> np.ndarray:
        return self.mode.copy()

    def support_range(self, a) -> tuple[float, float]:
        """Range of ``a^T m`` over the support."""
        v = float(np.dot(a, self.mode))
        return v, v

    def contains(self, m, tol: float = 1e-9) -> bool:
        return bool(np.max(np.abs(np.asarray(m) - self.mode)) <= tol)

    def sample(self, rng: np.random.Generator, count: int) -> np.ndarray:
        return np.tile(self.mode, (count, 1))


@dataclass(frozen=True)
class RectangleSupport:
    """Axis-aligned box ``[k_lo, k_hi]``."""

    k_lo: np.ndarray
    k_hi: np.ndarray

    def __post_init__(self):
        lo = _frozen_array(np.atleast_1d(self.k_lo), 1, "k_lo")
        hi = _frozen_array(np.atleast_1d(self.k_hi), 1, "k_hi")
        if lo.shape != hi.shape:
            raise DimensionMismatch("k_lo and k_hi differ in length")
        if np.any(lo > hi):
            raise ValidationError("rectangle requires k_lo <= k_hi componentwise")
        object.__setattr__(self, "k_lo", lo)
        object.__setattr__(self, "k_hi", hi)

    @property
    def dimension(self) -> int:
        return self.k_lo.shape[0]

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.k_lo + self.k_hi)

    @property
    def half_width(self) -> np.ndarray:
        return 0.5 * (self.k_hi - self.k_lo)

    def vertices(self) -> np.ndarray:
        """All ``2**n`` corners, lexicographically ordered (k_lo first)."""
        corners = itertools.product(*zip(self.k_lo, self.k_hi))
        return np.array(list(corners), dtype=float)

    def initial_mode(self) -> np.ndarray:
        return np.array(self.k_lo, dtype=float)

    def support_range(self, a) -> tuple[float, float]:
        a = np.asarray(a, dtype=float)
        mid = float(a @ self.center)
        spread = float(np.abs(a) @ self.half_width)
        return mid - spread, mid + spread

    def contains(self, m, tol: float = 1e-9) -> bool:
        m = np.asarray(m, dtype=float)
        return bool(np.all(m >= self.k_lo - tol) and np.all(m <= self.k_hi + tol))

    def sample(self, rng: np.random.Generator, count: int) -> np.ndarray:
        return rng.uniform(self.k_lo, self.k_hi, size=(count, self.dimension))


@dataclass(frozen=True)
class EllipsoidSupport:
    """``{m_c + P^{1/2} u : ||u|| <= 1}`` with ``P`` symmetric positive definite."""

    center: np.ndarray
    shape: np.ndarray
    shape_sqrt: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        c = _frozen_array(np.atleast_1d(self.center), 1, "center")
        P = np.atleast_2d(np.array(self.shape, dtype=float))
        if P.shape != (c.shape[0], c.shape[0]):
            raise DimensionMismatch(f"shape matrix must be {c.shape[0]}x{c.shape[0]}")
        P = 0.5 * (P + P.T)
        w, V = np.linalg.eigh(P)
        if w[0] <= 0.0:
            raise ValidationError("ellipsoid shape matrix must be positive definite")
        root = (V * np.sqrt(w)) @ V.T
        for name, value in (("center", c), ("shape", P), ("shape_sqrt", root)):
            value = np.array(value)
            value.setflags(write=False)
            object.__setattr__(self, name, value)

    @property
    def dimension(self) -> int:
        return self.center.shape[0]

    def initial_mode(self) -> np.ndarray:
        return self.center.copy()

    def support_range(self, a) -> tuple[float, float]:
        a = np.asarray(a, dtype=float)
        mid = float(a @ self.center)
        spread = float(np.linalg.norm(self.shape_sqrt @ a))
        return mid - spread, mid + spread

    def contains(self, m, tol: float = 1e-9) -> bool:
        d = np.asarray(m, dtype=float) - self.center
        return bool(d @ np.linalg.solve(self.shape, d) <= 1.0 + tol)

    def sample(self, rng: np.random.Generator, count: int) -> np.ndarray:
        n = self.dimension
        u = rng.standard_normal((count, n))
        u /= np.linalg.norm(u, axis=1, keepdims=True)
        u *= rng.uniform(size=(count, 1)) ** (1.0 / n)
        return self.center + u @ self.shape_sqrt.T


ModeSupport = PointSupport | RectangleSupport | EllipsoidSupport


# --------------------------------------------------------------------------
# estimation


def estimate_moments(pool: ScenarioPool) -> MomentData:
    """Sample mean and sample raw second moment ``(1/N) sum xi xi^T``."""
    xs = pool.samples
    mu = xs.mean(axis=0)
    sigma = xs.T @ xs / xs.shape[0]
    return MomentData(mu, sigma)


def estimate_mode_histogram(pool: ScenarioPool, n_bins: int) -> np.ndarray:
    """Center of the fullest cell of an ``n_bins``-per-axis histogram.

    Bins are equal-width over each axis' sample range; ties go to the
    lexicographically smallest cell index.
    """
    if n_bins < 2:
        raise ValueError("n_bins must be at least 2")
    counts, edges = np.histogramdd(pool.samples, bins=n_bins)
    cell = np.unravel_index(int(np.argmax(counts)), counts.shape)
    return np.array([0.5 * (e[i] + e[i + 1]) for e, i in zip(edges, cell)])


def estimate_mode_groups(
    pool: ScenarioPool,
    n_groups: int,
    group_size: int,
    n_bins: int,
    rng: np.random.Generator,
) -> np.ndarray:
    """Histogram modes of ``n_groups`` random subsamples (rows of the result)."""
    modes = [
        estimate_mode_histogram(pool.subsample(group_size, rng), n_bins)
        for _ in range(n_groups)
    ]
    return np.array(modes)


_EIG_FLOOR = 1e-8


def _floor_spd(mat: np.ndarray, floor: float = _EIG_FLOOR) -> np.ndarray:
    mat = 0.5 * (mat + mat.T)
    w, V = np.linalg.eigh(mat)
    return (V * np.maximum(w, floor)) @ V.T


def _min_enclosing_ball(points: np.ndarray) -> tuple[np.ndarray, float]:
    import cvxpy as cp

    n = points.shape[1]
    c = cp.Variable(n)
    r = cp.Variable()
    cons = [cp.norm(points[i] - c) <= r for i in range(points.shape[0])]
    cp.Problem(cp.Minimize(r), cons).solve(solver=cp.CLARABEL)
    center = np.asarray(c.value, dtype=float) if c.value is not None else points.mean(axis=0)
    # recompute the radius so containment is exact for the returned center
    radius = float(np.max(np.linalg.norm(points - center, axis=1)))
    return center, radius


def build_mode_support(mode_estimates, shape: str = "rectangle"):
    """Turn a cloud of mode estimates into a rectangle or ellipsoid support.

    ``rectangle`` is the componentwise bounding box. ``ellipsoid`` is the
    smallest ball enclosing the estimates in the metric of their sample
    covariance (eigenvalues floored at 1e-8, so collinear or repeated
    estimates still give a valid ellipsoid).
    """
    est = np.atleast_2d(np.asarray(mode_estimates, dtype=float))
    if est.shape[0] == 0:
        raise ValueError("need at least one mode estimate")
    if shape == "rectangle":
        return RectangleSupport(est.min(axis=0), est.max(axis=0))
    if shape != "ellipsoid":
        raise ValueError(f"unknown support shape {shape!r}")

    n = est.shape[1]
    if est.shape[0] > 1:
        metric = _floor_spd(np.atleast_2d(np.cov(est, rowvar=False, bias=True)))
    else:
        metric = np.eye(n)
    w, V = np.linalg.eigh(metric)
    whiten = (V / np.sqrt(w)) @ V.T
    colour = (V * np.sqrt(w)) @ V.T
    y = est @ whiten.T
    y_center, radius = _min_enclosing_ball(y) if est.shape[0] > 1 else (y[0], 0.0)
    center = colour @ y_center
    P = _floor_spd(radius**2 * metric)
    return EllipsoidSupport(center, P)


def max_quadratic_over_ellipsoid(v, B) -> float:
    """``max ||v + B u||^2`` over the unit ball ``||u|| <= 1``.

    A trust-region style maximization: the maximizer lies on the sphere and
    solves ``(lam I - B^T B) u = B^T v`` with ``lam >= lambda_max(B^T B)``,
    found by bisection on the secular equation (with the hard case handled
    explicitly).
    """
    v = np.asarray(v, dtype=float)
    B = np.atleast_2d(np.asarray(B, dtype=float))
    M = B.T @ B
    w_vec = B.T @ v
    d, V = np.linalg.eigh(0.5 * (M + M.T))
    wt = V.T @ w_vec
    dmax = d[-1]
    scale = max(1.0, abs(dmax), float(np.linalg.norm(wt)))
    top = np.abs(d - dmax) <= 1e-12 * scale

    def norm_sq(lam):
        return float(np.sum(wt**2 / (lam - d) ** 2))

    rest = ~top
    gap_norm_sq = float(np.sum(wt[rest] ** 2 / (dmax - d[rest]) ** 2))
    if np.all(np.abs(wt[top]) <= 1e-12 * scale) and gap_norm_sq <= 1.0:
        # hard case: lam = dmax, fill the remaining norm along the top eigenvector
        ut = np.zeros_like(wt)
        ut[rest] = wt[rest] / (dmax - d[rest])
        leftover = max(0.0, 1.0 - float(ut @ ut))
        first_top = int(np.flatnonzero(top)[0])
        ut[first_top] = math.sqrt(leftover)
        u = V @ ut
    else:
        lo, hi = dmax, dmax + float(np.linalg.norm(wt)) + 1e-300
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if mid == lo or mid == hi:
                break
            if norm_sq(mid) > 1.0:
                lo = mid
            else:
                hi = mid
        u = V @ (wt / (hi - d))
    r = v + B @ u
    return float(r @ r)


def check_assumption1(moments: MomentData, support, alpha: float) -> bool:
    """True iff the unimodal ambiguity set is nonempty for every mode in ``support``.

    Checks ``(mu - m)^T [((alpha+2)/alpha) C]^{-1} (mu - m) < alpha^2`` for all
    ``m`` in the support, ``C`` the centered covariance.
    """
    Q = moments.scaled_covariance(alpha)
    L = np.linalg.cholesky(Q)
    bound = alpha**2

    def qform(m):
        z = np.linalg.solve(L, moments.mu - m)
        return float(z @ z)

    if isinstance(support, PointSupport):
        worst = qform(support.mode)
    elif isinstance(support, RectangleSupport):
        worst = max(qform(m) for m in support.vertices())
    elif isinstance(support, EllipsoidSupport):
        v = np.linalg.solve(L, moments.mu - support.center)
        B = np.linalg.solve(L, support.shape_sqrt)
        worst = max_quadratic_over_ellipsoid(v, -B)
    else:
        raise TypeError(f"unsupported mode support {type(support).__name__}")
    return worst < bound
