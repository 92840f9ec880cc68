"""Second-order cone cuts for the moment / unimodality ambiguity sets.

A row ``a(x)^T xi <= b(x)`` has ``a`` and ``b`` affine in the decision vector.
Every reformulation here is a single cone membership

    || G x + g || <= c^T x + d

once its parameters (``tau``, mode ``m``, or a constant ``K``) are fixed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import (
    Assumption1Violated,
    DimensionMismatch,
    InvalidTau,
    UnsupportedRegime,
    ValidationError,
)
from .uncertainty import (
    EllipsoidSupport,
    MomentData,
    PointSupport,
    RectangleSupport,
    UnimodalityConfig,
    check_assumption1,
)

__all__ = [
    "AmbiguityKind",
    "AmbiguityConfig",
    "UncertainRow",
    "SocCut",
    "LinearBlock",
    "ModeConstraints",
    "cut_d1",
    "cut_d2_at",
    "cut_k",
    "k_factor",
    "d4_tau_star",
    "mode_feasibility_constraints",
    "unimodal_shape_root",
]


class AmbiguityKind(str, Enum):
    D1 = "D1"  # moments only
    D2 = "D2"  # moments + unimodality, fixed mode
    D3 = "D3"  # moments + unimodality, mode in a set
    D4 = "D4"  # moments + unimodality, mode at the mean
    D5 = "D5"  # moments + univariate unimodality, arbitrary mode


@dataclass(frozen=True)
class AmbiguityConfig:
    kind: AmbiguityKind
    unimodality: UnimodalityConfig = field(default_factory=UnimodalityConfig)
    support: PointSupport | RectangleSupport | EllipsoidSupport | None = None

    def __post_init__(self):
        kind = AmbiguityKind(self.kind)
        object.__setattr__(self, "kind", kind)
        if kind is AmbiguityKind.D2 and not isinstance(self.support, PointSupport):
            raise ValidationError("D2 needs a PointSupport mode")
        if kind is AmbiguityKind.D3 and self.support is None:
            raise ValidationError("D3 needs a mode support")
        if kind is AmbiguityKind.D5:
            _check_d5(self.unimodality)

    @property
    def needs_separation(self) -> bool:
        return self.kind in (AmbiguityKind.D2, AmbiguityKind.D3)

    def validate(self, moments: MomentData) -> None:
        if self.needs_separation and not check_assumption1(
            moments, self.support, self.unimodality.alpha
        ):
            raise Assumption1Violated(
                f"{self.kind.value}: mode support too far from the mean for the given covariance"
            )


def _check_d5(unimodality):
    if unimodality.alpha != 1.0 or unimodality.epsilon > 1.0 / 6.0:
        raise UnsupportedRegime("D5 requires alpha = 1 and epsilon <= 1/6")


@dataclass(frozen=True)
class UncertainRow:
    """``a(x) = a_matrix @ x + a_offset`` and ``b(x) = b_vector @ x + b_offset``."""

    a_matrix: np.ndarray
    a_offset: np.ndarray
    b_vector: np.ndarray
    b_offset: float = 0.0

    def __post_init__(self):
        A = np.atleast_2d(np.array(self.a_matrix, dtype=float))
        a0 = np.atleast_1d(np.array(self.a_offset, dtype=float))
        bv = np.atleast_1d(np.array(self.b_vector, dtype=float))
        if A.shape[0] != a0.shape[0] or A.shape[1] != bv.shape[0]:
            raise DimensionMismatch(
                f"a_matrix {A.shape}, a_offset {a0.shape}, b_vector {bv.shape} disagree"
            )
        for name, value in (("a_matrix", A), ("a_offset", a0), ("b_vector", bv)):
            value.setflags(write=False)
            object.__setattr__(self, name, value)
        object.__setattr__(self, "b_offset", float(self.b_offset))

    @classmethod
    def constant(cls, a, b, n_vars: int = 1) -> "UncertainRow":
        a = np.atleast_1d(np.asarray(a, dtype=float))
        return cls(np.zeros((a.size, n_vars)), a, np.zeros(n_vars), float(b))

    @property
    def n_uncertain(self) -> int:
        return self.a_matrix.shape[0]

    @property
    def n_vars(self) -> int:
        return self.a_matrix.shape[1]

    def a(self, x) -> np.ndarray:
        return self.a_matrix @ np.asarray(x, dtype=float) + self.a_offset

    def b(self, x) -> float:
        return float(self.b_vector @ np.asarray(x, dtype=float)) + self.b_offset

    def scaled(self, lam: float) -> "UncertainRow":
        return UncertainRow(lam * self.a_matrix, lam * self.a_offset, lam * self.b_vector,
                            lam * self.b_offset)


@dataclass(frozen=True)
class SocCut:
    """``|| G x + g || <= c^T x + d``."""

    lhs_matrix: np.ndarray
    lhs_offset: np.ndarray
    rhs_coef: np.ndarray
    rhs_const: float
    label: str = ""

    @classmethod
    def from_row(cls, L, row: UncertainRow, b_scale: float, a_weight, label="") -> "SocCut":
        """Cut ``|| L a(x) || <= b_scale * b(x) + a_weight^T a(x)``."""
        L = np.atleast_2d(np.asarray(L, dtype=float))
        w = np.asarray(a_weight, dtype=float)
        return cls(
            lhs_matrix=L @ row.a_matrix,
            lhs_offset=L @ row.a_offset,
            rhs_coef=b_scale * row.b_vector + row.a_matrix.T @ w,
            rhs_const=b_scale * row.b_offset + float(w @ row.a_offset),
            label=label,
        )

    @property
    def is_linear(self) -> bool:
        return not (np.any(self.lhs_matrix) or np.any(self.lhs_offset))

    def lhs(self, x) -> float:
        return float(np.linalg.norm(self.lhs_matrix @ x + self.lhs_offset))

    def rhs(self, x) -> float:
        return float(self.rhs_coef @ x) + self.rhs_const

    def residual(self, x) -> float:
        """Positive when ``x`` violates the cut."""
        x = np.asarray(x, dtype=float)
        return self.lhs(x) - self.rhs(x)


def _psd_sqrt(mat: np.ndarray, what: str) -> np.ndarray:
    mat = 0.5 * (mat + mat.T)
    w, V = np.linalg.eigh(mat)
    scale = max(1.0, float(np.max(np.abs(w))))
    if w[0] < -1e-10 * scale:
        raise Assumption1Violated(f"{what} is not positive semidefinite (min eigenvalue {w[0]:.3e})")
    return (V * np.sqrt(np.clip(w, 0.0, None))) @ V.T


def unimodal_shape_root(moments: MomentData, mode, alpha: float) -> np.ndarray:
    """Symmetric square root of ``((a+2)/a) C - (1/a^2) (mu - m)(mu - m)^T``."""
    d = moments.mu - np.asarray(mode, dtype=float)
    mat = moments.scaled_covariance(alpha) - np.outer(d, d) / alpha**2
    return _psd_sqrt(mat, "unimodal shape matrix")


def cut_d1(moments: MomentData, epsilon: float, row: UncertainRow) -> SocCut:
    """Moment-only cut ``sqrt((1-eps)/eps) ||C^{1/2} a|| <= b - mu^T a``."""
    k = math.sqrt((1.0 - epsilon) / epsilon)
    return cut_k(moments, k, row, label="D1")


def cut_k(moments: MomentData, k: float, row: UncertainRow, label: str = "") -> SocCut:
    """Single cut ``K ||C^{1/2} a(x)|| <= b(x) - mu^T a(x)``."""
    L = k * moments.cov_cholesky.T
    return SocCut.from_row(L, row, 1.0, -moments.mu, label=label)


def cut_d2_at(moments: MomentData, mode, unimodality: UnimodalityConfig, tau: float,
              row: UncertainRow, label: str = "") -> SocCut:
    """Member of the unimodal cut family at fixed ``tau`` and mode ``m``.

    ``g(tau) ||Lambda_m a|| <= tau (b - mu^T a) + (tau - (a+1)/a) (mu - m)^T a``.
    """
    alpha, eps = unimodality.alpha, unimodality.epsilon
    tau0 = unimodality.tau0
    if tau < tau0 * (1.0 - 1e-12):
        raise InvalidTau(f"tau={tau} is below tau0={tau0}")
    mode = np.asarray(mode, dtype=float)
    root = unimodal_shape_root(moments, mode, alpha)
    g = math.sqrt(max((1.0 - eps - tau ** (-alpha)) / eps, 0.0))
    weight = -tau * moments.mu + (tau - (alpha + 1.0) / alpha) * (moments.mu - mode)
    return SocCut.from_row(g * root, row, tau, weight, label=label)


def d4_tau_star(unimodality: UnimodalityConfig) -> float:
    """Maximizer of ``g(tau) / tau`` over ``tau >= tau0``."""
    a, e = unimodality.alpha, unimodality.epsilon
    return max(((a + 2.0) / (2.0 * (1.0 - e))) ** (1.0 / a), unimodality.tau0)


def k_factor(kind, unimodality: UnimodalityConfig) -> float:
    """Constant ``K`` of the single-cut sets D1, D4 and D5."""
    kind = AmbiguityKind(kind)
    a, e = unimodality.alpha, unimodality.epsilon
    if kind is AmbiguityKind.D1:
        return math.sqrt((1.0 - e) / e)
    if kind is AmbiguityKind.D4:
        t = d4_tau_star(unimodality)
        g = math.sqrt(max((1.0 - e - t ** (-a)) / e, 0.0))
        return math.sqrt((a + 2.0) / a) * g / t
    if kind is AmbiguityKind.D5:
        _check_d5(unimodality)
        return math.sqrt(4.0 / (9.0 * e) - 1.0)
    raise ValueError(f"{kind.value} has no single-cut constant")


@dataclass(frozen=True)
class LinearBlock:
    """``A_x x + A_aux t <= rhs`` with ``t`` the block's own auxiliary variables."""

    A_x: np.ndarray
    A_aux: np.ndarray
    rhs: np.ndarray


@dataclass(frozen=True)
class ModeConstraints:
    """Deterministic encoding of ``a(x)^T m <= b(x)`` for every ``m`` in a support."""

    n_aux: int
    linear: LinearBlock | None = None
    socs: tuple = ()

    def satisfied(self, x, aux=None, tol=1e-7) -> bool:
        ok = all(c.residual(x) <= tol for c in self.socs)
        if self.linear is not None:
            aux = np.zeros(self.n_aux) if aux is None else aux
            ok &= bool(np.all(self.linear.A_x @ x + self.linear.A_aux @ aux
                              <= self.linear.rhs + tol))
        return ok


def mode_feasibility_constraints(support, row: UncertainRow) -> ModeConstraints:
    """Constraints making the row hold at every mode of ``support``.

    Rectangles use auxiliary ``t >= |a(x)|`` so the result stays linear in
    the decision vector; ellipsoids give one cone; points one inequality.
    """
    A, a0 = row.a_matrix, row.a_offset
    n, l = A.shape
    if isinstance(support, PointSupport):
        m = support.mode
        block = LinearBlock(
            A_x=(m @ A - row.b_vector)[None, :],
            A_aux=np.zeros((1, 0)),
            rhs=np.array([row.b_offset - m @ a0]),
        )
        return ModeConstraints(0, linear=block)
    if isinstance(support, RectangleSupport):
        c, r = support.center, support.half_width
        eye = np.eye(n)
        A_x = np.vstack([A, -A, (c @ A - row.b_vector)[None, :]])
        A_aux = np.vstack([-eye, -eye, r[None, :]])
        rhs = np.concatenate([-a0, a0, [row.b_offset - c @ a0]])
        return ModeConstraints(n, linear=LinearBlock(A_x, A_aux, rhs))
    if isinstance(support, EllipsoidSupport):
        cut = SocCut.from_row(support.shape_sqrt, row, 1.0, -support.center, label="mode")
        return ModeConstraints(0, socs=(cut,))
    raise TypeError(f"unsupported mode support {type(support).__name__}")
