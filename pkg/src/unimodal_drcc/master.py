"""Cutting-plane driver for problems with unimodal chance-constrained rows.

Each iteration solves a conic master problem holding every cut collected so
far, runs the worst-case search on each D2/D3 row at the new solution and
adds the most violated cut of every violated row.
"""

from __future__ import annotations

import abc
import logging
import math
import time
import warnings
from dataclasses import dataclass, field

import numpy as np

from .ambiguity import (
    AmbiguityConfig,
    AmbiguityKind,
    ModeConstraints,
    SocCut,
    UncertainRow,
    cut_d2_at,
    cut_k,
    k_factor,
    mode_feasibility_constraints,
)
from .errors import (
    DimensionMismatch,
    IterationLimitExceeded,
    MasterInfeasible,
    SolverFailure,
    ValidationError,
)
from .separation import ZERO_ROW_TOL, SeparationInstance, WorstCase, recover_mode, worst_case
from .uncertainty import MomentData

__all__ = [
    "UncertainConstraint",
    "DrccProblem",
    "CutPool",
    "MasterModel",
    "ConicResult",
    "ConicSolverAdapter",
    "CvxpyAdapter",
    "SolveReport",
    "assemble_master",
    "separate",
    "solve_drcc",
]

logger = logging.getLogger(__name__)

DEDUP_TOL = 1e-9
# Pool cuts are divided by their largest coefficient (cuts found at large
# tau otherwise carry coefficients near 1e8 beside O(1) rows) and tightened by
# CUT_MARGIN in those normalized units, so conic solver tolerance cannot leave
# a residual violation above ``violation_tol``.
CUT_MARGIN = 1e-7


@dataclass(frozen=True)
class UncertainConstraint:
    """One chance-constrained row with its ambiguity description.

    ``mode_region`` is the set over which ``a(x)^T m <= b(x)`` is imposed.
    It defaults to the ambiguity set's own support (D2, D3) and may be given
    for D1/D4/D5 rows so all variants share the same mode-feasibility rows.
    """

    row: UncertainRow
    config: AmbiguityConfig
    moments: MomentData
    mode_region: object = None
    name: str = ""

    def __post_init__(self):
        if self.row.n_uncertain != self.moments.dimension:
            raise DimensionMismatch(
                f"row has {self.row.n_uncertain} uncertain entries, moments have {self.moments.dimension}"
            )

    @property
    def feasibility_support(self):
        return self.mode_region if self.mode_region is not None else self.config.support


@dataclass
class DrccProblem:
    """``min x^T Q x + c^T x + const`` over deterministic and uncertain rows."""

    quad: np.ndarray
    linear: np.ndarray
    constant: float = 0.0
    A_ub: np.ndarray | None = None
    b_ub: np.ndarray | None = None
    A_eq: np.ndarray | None = None
    b_eq: np.ndarray | None = None
    lb: np.ndarray | None = None
    ub: np.ndarray | None = None
    uncertain: list = field(default_factory=list)
    var_names: list | None = None

    def __post_init__(self):
        self.linear = np.asarray(self.linear, dtype=float)
        l = self.linear.shape[0]
        self.quad = np.zeros((l, l)) if self.quad is None else np.asarray(self.quad, dtype=float)
        if self.quad.shape != (l, l):
            raise DimensionMismatch(f"quad must be {l}x{l}")
        self.quad = 0.5 * (self.quad + self.quad.T)
        self.A_ub, self.b_ub = _linear_pair(self.A_ub, self.b_ub, l)
        self.A_eq, self.b_eq = _linear_pair(self.A_eq, self.b_eq, l)
        self.lb = np.full(l, -np.inf) if self.lb is None else np.asarray(self.lb, dtype=float)
        self.ub = np.full(l, np.inf) if self.ub is None else np.asarray(self.ub, dtype=float)
        for uc in self.uncertain:
            if uc.row.n_vars != l:
                raise DimensionMismatch(f"row {uc.name!r} acts on {uc.row.n_vars} variables, problem has {l}")

    @property
    def n_vars(self) -> int:
        return self.linear.shape[0]

    def objective(self, x) -> float:
        x = np.asarray(x, dtype=float)
        return float(x @ self.quad @ x + self.linear @ x + self.constant)

    def validate(self) -> None:
        w = np.linalg.eigvalsh(self.quad) if self.n_vars else np.zeros(0)
        if w.size and w[0] < -1e-10 * max(1.0, abs(w[-1])):
            raise ValidationError("objective quadratic is not positive semidefinite")
        checked = {}
        for uc in self.uncertain:
            key = (id(uc.moments), id(uc.config))
            if key not in checked:
                uc.config.validate(uc.moments)
                checked[key] = True


def _linear_pair(A, b, l):
    if A is None:
        return np.zeros((0, l)), np.zeros(0)
    A = np.atleast_2d(np.asarray(A, dtype=float))
    b = np.atleast_1d(np.asarray(b, dtype=float))
    if A.shape != (b.shape[0], l):
        raise DimensionMismatch(f"constraint matrix {A.shape} does not match rhs {b.shape} / {l} vars")
    return A, b


@dataclass
class CutPool:
    """Parameters ``(tau_j, m_j)`` and cuts collected per uncertain row."""

    entries: dict = field(default_factory=dict)
    iteration: int = 0

    def add(self, row_index: int, tau: float, mode, cut: SocCut) -> None:
        self.entries.setdefault(row_index, []).append((float(tau), np.array(mode, dtype=float), cut))

    def contains(self, row_index: int, tau: float, mode, tol: float = DEDUP_TOL) -> bool:
        mode = np.asarray(mode, dtype=float)
        for t, m, _ in self.entries.get(row_index, []):
            if abs(t - tau) <= tol * max(1.0, abs(tau)) and np.max(np.abs(m - mode), initial=0.0) <= tol * max(1.0, float(np.max(np.abs(mode), initial=0.0))):
                return True
        return False

    def cuts(self):
        for row_index in sorted(self.entries):
            for _, _, cut in self.entries[row_index]:
                yield cut

    def __len__(self) -> int:
        return sum(len(v) for v in self.entries.values())


# --------------------------------------------------------------------------
# solver-facing model


@dataclass
class MasterModel:
    """Linear objective, linear rows and cones over ``z = [x, aux, s]``.

    ``s`` (present when the objective has a quadratic part) is the epigraph
    variable of ``x^T Q x``; cones read ``||G z + g|| <= c^T z + d``.
    """

    n_vars: int
    n_decision: int
    objective: np.ndarray
    objective_const: float
    A_ub: np.ndarray
    b_ub: np.ndarray
    A_eq: np.ndarray
    b_eq: np.ndarray
    lb: np.ndarray
    ub: np.ndarray
    socs: list
    soc_labels: list

    @property
    def n_soc(self) -> int:
        return len(self.socs)


@dataclass
class ConicResult:
    status: str  # optimal | infeasible | unbounded | numerical-failure
    x: np.ndarray | None = None
    objective: float | None = None


class ConicSolverAdapter(abc.ABC):
    """Anything that can solve a :class:`MasterModel`; reused sequentially."""

    @abc.abstractmethod
    def solve(self, model: MasterModel) -> ConicResult:
        ...


class CvxpyAdapter(ConicSolverAdapter):
    """Backed by cvxpy: Clarabel first, CVXOPT if Clarabel is only inaccurate.

    An answer that every solver flags as inaccurate is still returned as
    optimal (with a warning) since the cutting-plane loop re-checks the
    iterate through separation anyway.
    """

    def __init__(self, solver: str = "CLARABEL", fallback=("CVXOPT",), **options):
        self.solvers = [solver, *[f for f in fallback if f != solver]]
        self.options = options

    def _problem(self, model: MasterModel):
        import cvxpy as cp

        z = cp.Variable(model.n_vars)
        cons = []
        if model.A_ub.shape[0]:
            cons.append(model.A_ub @ z <= model.b_ub)
        if model.A_eq.shape[0]:
            cons.append(model.A_eq @ z == model.b_eq)
        for bound, sign in ((model.lb, 1.0), (model.ub, -1.0)):
            idx = np.flatnonzero(np.isfinite(bound))
            if idx.size:
                cons.append(sign * z[idx] >= sign * bound[idx])
        for G, g, c, d in model.socs:
            t = c @ z + d
            if not (np.any(G) or np.any(g)):
                cons.append(t >= 0)
            else:
                cons.append(cp.SOC(t, G @ z + g))
        # unit-size objective coefficients keep interior-point residuals small
        # in absolute terms
        scale = 1.0 / max(1.0, float(np.max(np.abs(model.objective), initial=0.0)))
        return z, cp.Problem(cp.Minimize(scale * (model.objective @ z)), cons)

    def solve(self, model: MasterModel) -> ConicResult:
        import cvxpy as cp

        inaccurate = None
        status = None
        for name in self.solvers:
            if name not in cp.installed_solvers():
                continue
            z, prob = self._problem(model)
            opts = self.options if name == self.solvers[0] else {}
            try:
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore", UserWarning)
                    prob.solve(solver=name, **opts)
            except cp.error.SolverError as exc:
                logger.debug("%s failed: %s", name, exc)
                continue
            status = prob.status
            if status == cp.OPTIMAL:
                return self._result(model, z.value)
            if status == cp.OPTIMAL_INACCURATE and inaccurate is None:
                inaccurate = (name, z.value)
            if status in (cp.INFEASIBLE, cp.UNBOUNDED):
                break
        if inaccurate is not None:
            logger.warning("master solved only to reduced accuracy by %s", inaccurate[0])
            return self._result(model, inaccurate[1])
        if status in (cp.INFEASIBLE, cp.INFEASIBLE_INACCURATE):
            return ConicResult("infeasible")
        if status in (cp.UNBOUNDED, cp.UNBOUNDED_INACCURATE):
            return ConicResult("unbounded")
        return ConicResult("numerical-failure")

    @staticmethod
    def _result(model, value):
        zv = np.asarray(value, dtype=float)
        return ConicResult("optimal", zv, float(model.objective @ zv + model.objective_const))


def _pad(cut: SocCut, n_total: int, n_decision: int):
    G = np.zeros((cut.lhs_matrix.shape[0], n_total))
    G[:, :n_decision] = cut.lhs_matrix
    c = np.zeros(n_total)
    c[:n_decision] = cut.rhs_coef
    return G, np.array(cut.lhs_offset, dtype=float), c, float(cut.rhs_const)


def _static_cut(uc: UncertainConstraint, index: int) -> SocCut | None:
    kind = uc.config.kind
    if kind in (AmbiguityKind.D1, AmbiguityKind.D4, AmbiguityKind.D5):
        k = k_factor(kind, uc.config.unimodality)
        return cut_k(uc.moments, k, uc.row, label=f"{kind.value}[{index}]")
    return None


def assemble_master(problem: DrccProblem, pool: CutPool, cut_margin: float = 0.0) -> MasterModel:
    """Serialize objective, deterministic rows, mode rows and all cuts.

    Pool cuts are normalized to unit largest coefficient and their right-hand
    side lowered by ``cut_margin``.
    Deterministic: the same problem and pool always give the same model.
    """
    l = problem.n_vars
    mode_blocks: list[tuple[int, ModeConstraints]] = []
    n_aux = 0
    for i, uc in enumerate(problem.uncertain):
        support = uc.feasibility_support
        if support is None:
            continue
        mc = mode_feasibility_constraints(support, uc.row)
        mode_blocks.append((n_aux, mc))
        n_aux += mc.n_aux

    has_quad = bool(np.any(problem.quad))
    n_total = l + n_aux + (1 if has_quad else 0)

    objective = np.zeros(n_total)
    objective[:l] = problem.linear
    lb = np.full(n_total, -np.inf)
    ub = np.full(n_total, np.inf)
    lb[:l], ub[:l] = problem.lb, problem.ub

    ub_rows, ub_rhs = [], []
    if problem.A_ub.shape[0]:
        block = np.zeros((problem.A_ub.shape[0], n_total))
        block[:, :l] = problem.A_ub
        ub_rows.append(block)
        ub_rhs.append(problem.b_ub)
    eq = np.zeros((problem.A_eq.shape[0], n_total))
    eq[:, :l] = problem.A_eq

    socs, labels = [], []
    if has_quad:
        s_idx = n_total - 1
        objective[s_idx] = 1.0
        lb[s_idx] = 0.0
        w, V = np.linalg.eigh(problem.quad)
        keep = w > 1e-14 * max(1.0, float(np.max(np.abs(w))))
        F = (V[:, keep] * np.sqrt(w[keep])).T
        # x^T Q x <= s  <=>  ||(2 F x, 1 - s)|| <= 1 + s
        G = np.zeros((F.shape[0] + 1, n_total))
        G[:-1, :l] = 2.0 * F
        G[-1, s_idx] = -1.0
        g = np.zeros(F.shape[0] + 1)
        g[-1] = 1.0
        c = np.zeros(n_total)
        c[s_idx] = 1.0
        socs.append((G, g, c, 1.0))
        labels.append("epigraph")

    for offset, mc in mode_blocks:
        if mc.linear is not None:
            block = np.zeros((mc.linear.A_x.shape[0], n_total))
            block[:, :l] = mc.linear.A_x
            block[:, l + offset:l + offset + mc.n_aux] = mc.linear.A_aux
            ub_rows.append(block)
            ub_rhs.append(mc.linear.rhs)
        for cut in mc.socs:
            socs.append(_pad(cut, n_total, l))
            labels.append(cut.label or "mode")

    for i, uc in enumerate(problem.uncertain):
        cut = _static_cut(uc, i)
        if cut is not None:
            socs.append(_pad(cut, n_total, l))
            labels.append(cut.label)
    for cut in pool.cuts():
        G, g, c, d = _pad(cut, n_total, l)
        scale = max(1.0, np.max(np.abs(G), initial=0.0), np.max(np.abs(g), initial=0.0),
                    np.max(np.abs(c), initial=0.0), abs(d))
        socs.append((G / scale, g / scale, c / scale, d / scale - cut_margin))
        labels.append(cut.label)

    A_ub = np.vstack(ub_rows) if ub_rows else np.zeros((0, n_total))
    b_ub = np.concatenate(ub_rhs) if ub_rhs else np.zeros(0)
    return MasterModel(
        n_vars=n_total, n_decision=l, objective=objective,
        objective_const=problem.constant, A_ub=A_ub, b_ub=b_ub,
        A_eq=eq, b_eq=problem.b_eq.copy(), lb=lb, ub=ub,
        socs=socs, soc_labels=labels,
    )


# --------------------------------------------------------------------------
# separation over rows


def separate(uc: UncertainConstraint, x) -> tuple[WorstCase, np.ndarray] | None:
    """Worst ``(tau, m)`` of one D2/D3 row at ``x``; ``None`` for a zero row."""
    a = uc.row.a(x)
    if np.linalg.norm(a) <= ZERO_ROW_TOL:
        return None
    support = uc.config.support
    unimod = uc.config.unimodality
    inst = SeparationInstance.from_row(a, uc.row.b(x), uc.moments, support, unimod)
    wc = worst_case(inst)
    mode = recover_mode(wc.h_star, a, uc.moments, support, unimod.alpha)
    return wc, mode


@dataclass
class SolveReport:
    x_star: np.ndarray
    objective_value: float
    iterations: int
    cuts_added: int
    violation_trace: list
    objective_trace: list
    worst_rows: list
    wall_time: float
    status: str
    n_soc: int = 0

    @property
    def max_violation(self) -> float:
        return self.violation_trace[-1] if self.violation_trace else 0.0

    @property
    def converged(self) -> bool:
        return self.status == "converged"

    def trace_lines(self) -> list[str]:
        return [
            f"iter {k + 1:3d}  objective {obj:.8f}  max violation {viol:.3e}  worst row {row}"
            for k, (obj, viol, row) in enumerate(
                zip(self.objective_trace, self.violation_trace, self.worst_rows)
            )
        ]


def _initial_pool(problem: DrccProblem) -> CutPool:
    pool = CutPool()
    for i, uc in enumerate(problem.uncertain):
        if uc.config.needs_separation:
            unimod = uc.config.unimodality
            m0 = uc.config.support.initial_mode()
            cut = cut_d2_at(uc.moments, m0, unimod, unimod.tau0, uc.row, label=f"cut[{i}]#0")
            pool.add(i, unimod.tau0, m0, cut)
    return pool


def solve_drcc(
    problem: DrccProblem,
    max_iter: int = 50,
    violation_tol: float = 1e-8,
    adapter: ConicSolverAdapter | None = None,
    strict: bool = False,
    cut_margin: float = CUT_MARGIN,
) -> SolveReport:
    """Run the cutting-plane loop to global optimality or ``max_iter``.

    Status is ``converged`` when no row violates by more than
    ``violation_tol``, ``stalled`` when every violated row only reproduced a
    cut already in the pool, and ``iteration_limit`` otherwise (raised as
    :class:`IterationLimitExceeded` when ``strict``).
    """
    if max_iter < 1:
        raise ValueError("max_iter must be >= 1")
    problem.validate()
    adapter = adapter or CvxpyAdapter()
    start = time.perf_counter()
    pool = _initial_pool(problem)
    sep_rows = [i for i, uc in enumerate(problem.uncertain) if uc.config.needs_separation]

    obj_trace, viol_trace, worst_rows = [], [], []
    cuts_added = 0
    status = "iteration_limit"
    x = None
    model = None
    for it in range(1, max_iter + 1):
        pool.iteration = it
        model = assemble_master(problem, pool, cut_margin)
        res = adapter.solve(model)
        if res.status == "infeasible":
            raise MasterInfeasible(f"master problem infeasible at iteration {it}")
        if res.status != "optimal":
            raise SolverFailure(f"master solve ended with status {res.status!r} at iteration {it}")
        x = res.x[:problem.n_vars]
        obj = problem.objective(x)

        max_viol, worst_row, new_cuts = 0.0, -1, []
        for i in sep_rows:
            found = separate(problem.uncertain[i], x)
            if found is None:
                continue
            wc, mode = found
            if wc.violation > max_viol:
                max_viol, worst_row = wc.violation, i
            if wc.violation > violation_tol:
                new_cuts.append((i, wc, mode))

        obj_trace.append(obj)
        viol_trace.append(max_viol)
        worst_rows.append(worst_row)
        logger.info("iter %d objective %.8f max violation %.3e worst row %d",
                    it, obj, max_viol, worst_row)

        if not new_cuts:
            status = "converged"
            break
        added = 0
        for i, wc, mode in new_cuts:
            if pool.contains(i, wc.tau_star, mode):
                continue
            uc = problem.uncertain[i]
            cut = cut_d2_at(uc.moments, mode, uc.config.unimodality, wc.tau_star, uc.row,
                            label=f"cut[{i}]#{len(pool.entries.get(i, []))}")
            pool.add(i, wc.tau_star, mode, cut)
            added += 1
        cuts_added += added
        if added == 0:
            status = "stalled"
            break

    report = SolveReport(
        x_star=x, objective_value=obj_trace[-1], iterations=len(obj_trace),
        cuts_added=cuts_added, violation_trace=viol_trace, objective_trace=obj_trace,
        worst_rows=worst_rows, wall_time=time.perf_counter() - start, status=status,
        n_soc=model.n_soc if model is not None else 0,
    )
    if status == "iteration_limit":
        logger.warning("cutting plane stopped at max_iter=%d with violation %.3e",
                       max_iter, report.max_violation)
        if strict:
            raise IterationLimitExceeded(report)
    return report
