"""Synthetic wind-error data, end-to-end runs and out-of-sample reliability.

The synthetic generator draws ``xi = m + U**(1/alpha) * Z`` with
``U ~ Uniform(0, 1)`` and ``Z ~ N(nu, S)`` independent. Such a mixture is
alpha-unimodal about ``m`` by construction, its moments are available in
closed form, and a non-zero ``nu`` skews it away from its mode.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .ambiguity import AmbiguityConfig, AmbiguityKind
from .dcopf import OpfDecision, Network, build_problem, bundled_case, parse_case
from .errors import DrccError, ValidationError
from .master import DrccProblem, solve_drcc
from .uncertainty import (
    MomentData,
    PointSupport,
    RectangleSupport,
    ScenarioPool,
    UnimodalityConfig,
    build_mode_support,
    estimate_mode_groups,
    estimate_mode_histogram,
    estimate_moments,
)

__all__ = [
    "SyntheticSpec",
    "generate_synthetic_pool",
    "ReliabilityReport",
    "evaluate_rows",
    "evaluate_reliability",
    "reliability_floor",
    "VariantConfig",
    "ExperimentConfig",
    "ResultRow",
    "ExperimentReport",
    "run_experiment",
]

logger = logging.getLogger(__name__)

ROW_TOL = 1e-6  # MW slack allowed when checking a(x)^T xi <= b(x) out of sample


# --------------------------------------------------------------------------
# synthetic data


@dataclass(frozen=True)
class SyntheticSpec:
    mode: tuple = (-2.0, -2.0)
    drift: tuple = (4.0, 4.0)
    shape: tuple = ((120.0, 60.0), (60.0, 120.0))
    alpha: float = 1.0
    size: int = 10000

    def __post_init__(self):
        m = np.asarray(self.mode, dtype=float)
        nu = np.asarray(self.drift, dtype=float)
        S = np.asarray(self.shape, dtype=float)
        if m.ndim != 1 or nu.shape != m.shape or S.shape != (m.size, m.size):
            raise ValidationError("mode, drift and shape dimensions disagree")
        if not np.allclose(S, S.T) or np.linalg.eigvalsh(S)[0] <= 0:
            raise ValidationError("shape must be symmetric positive definite")
        if self.alpha <= 0 or self.size < 1:
            raise ValidationError("alpha must be positive and size at least 1")
        object.__setattr__(self, "mode", tuple(m.tolist()))
        object.__setattr__(self, "drift", tuple(nu.tolist()))
        object.__setattr__(self, "shape", tuple(map(tuple, S.tolist())))

    @property
    def dimension(self) -> int:
        return len(self.mode)

    @property
    def true_mode(self) -> np.ndarray:
        return np.array(self.mode)

    @property
    def true_mean(self) -> np.ndarray:
        a = self.alpha
        return self.true_mode + a / (a + 1.0) * np.array(self.drift)

    @property
    def true_covariance(self) -> np.ndarray:
        a = self.alpha
        nu = np.array(self.drift)
        second = a / (a + 2.0) * (np.array(self.shape) + np.outer(nu, nu))
        return second - (a / (a + 1.0)) ** 2 * np.outer(nu, nu)

    @property
    def true_moments(self) -> MomentData:
        return MomentData.from_mean_cov(self.true_mean, self.true_covariance)

    @classmethod
    def from_dict(cls, data: dict) -> "SyntheticSpec":
        known = {"mode", "drift", "shape", "alpha", "size"}
        extra = set(data) - known
        if extra:
            raise ValidationError(f"unknown synthetic spec keys {sorted(extra)}")
        return cls(**data)

    def to_dict(self) -> dict:
        return asdict(self)


def _draw(spec: SyntheticSpec, size: int, rng: np.random.Generator) -> np.ndarray:
    L = np.linalg.cholesky(np.array(spec.shape))
    z = np.array(spec.drift) + rng.standard_normal((size, spec.dimension)) @ L.T
    u = rng.random(size) ** (1.0 / spec.alpha)
    return spec.true_mode + u[:, None] * z


def generate_synthetic_pool(spec: SyntheticSpec, seed, size: int | None = None) -> ScenarioPool:
    """``size`` (default ``spec.size``) draws; the same seed gives the same bytes."""
    rng = np.random.default_rng(seed)
    return ScenarioPool(_draw(spec, spec.size if size is None else size, rng))


# --------------------------------------------------------------------------
# reliability


def reliability_floor(epsilon: float, batch_size: int, sigmas: float = 3.0) -> float:
    """Largest per-row violation frequency consistent with level ``epsilon``."""
    return epsilon + sigmas * math.sqrt(epsilon * (1.0 - epsilon) / batch_size)


@dataclass
class ReliabilityReport:
    joint: np.ndarray             # per-batch joint reliability, percent
    row_violation: np.ndarray     # batches x rows violation frequency in [0, 1]
    row_names: list = field(default_factory=list)

    @property
    def min(self) -> float:
        return float(self.joint.min())

    @property
    def avg(self) -> float:
        return float(self.joint.mean())

    @property
    def max(self) -> float:
        return float(self.joint.max())

    def worst_row_frequency(self) -> float:
        return float(self.row_violation.max(initial=0.0))

    def to_dict(self) -> dict:
        return {
            "min": self.min, "avg": self.avg, "max": self.max,
            "joint": self.joint.tolist(),
            "worst_row_frequency": self.worst_row_frequency(),
            "rows": {name: self.row_violation[:, k].tolist()
                     for k, name in enumerate(self.row_names)},
        }


def evaluate_rows(A, b, scenarios: ScenarioPool, batches: int, batch_size: int,
                  row_names=None, tol: float = ROW_TOL) -> ReliabilityReport:
    """Check ``A xi <= b`` (rows of ``A`` are the ``a(x*)``) batch by batch."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    b = np.atleast_1d(np.asarray(b, dtype=float))
    if A.shape[1] != scenarios.dimension or A.shape[0] != b.shape[0]:
        raise ValidationError("row data does not match the scenario dimension")
    joint, per_row = [], []
    for batch in scenarios.batches(batches, batch_size):
        ok = batch @ A.T <= b + tol
        joint.append(100.0 * np.mean(np.all(ok, axis=1)))
        per_row.append(1.0 - ok.mean(axis=0))
    names = list(row_names) if row_names is not None else [f"row {k}" for k in range(A.shape[0])]
    return ReliabilityReport(np.array(joint), np.array(per_row), names)


def evaluate_reliability(solution, problem: DrccProblem, scenarios: ScenarioPool,
                         batches: int = 20, batch_size: int = 5000) -> ReliabilityReport:
    """Joint and per-row out-of-sample reliability of ``solution``."""
    x = solution.to_vector() if isinstance(solution, OpfDecision) else np.asarray(solution, dtype=float)
    A = np.array([uc.row.a(x) for uc in problem.uncertain])
    b = np.array([uc.row.b(x) for uc in problem.uncertain])
    names = [uc.name or f"row {k}" for k, uc in enumerate(problem.uncertain)]
    return evaluate_rows(A, b, scenarios, batches, batch_size, names)


# --------------------------------------------------------------------------
# configuration


@dataclass(frozen=True)
class VariantConfig:
    """One ambiguity-set run. ``None`` fields fall back to the data settings."""

    kind: str
    name: str = ""
    n_data: int | None = None
    n_bins: int | None = None
    n_groups: int | None = None
    support_shape: str | None = None
    mode: object = None  # "histogram" | "true" | explicit vector (D2)

    def __post_init__(self):
        AmbiguityKind(self.kind)
        if not self.name:
            object.__setattr__(self, "name", self.kind)

    @classmethod
    def from_obj(cls, obj) -> "VariantConfig":
        if isinstance(obj, str):
            return cls(kind=obj)
        return cls(**obj)


@dataclass(frozen=True)
class ExperimentConfig:
    case: str = "case_ieee30"
    load_scale: float = 1.5
    line_limits: tuple = ((1, 2, 30.0),)
    wind: tuple = ((22, 66.8), (5, 68.1))
    reserve_cost_factor: float = 10.0
    synthetic: SyntheticSpec = field(default_factory=SyntheticSpec)
    pool_file: str | None = None
    partial_pool: int | None = None
    n_data: int = 1000
    n_bins: int = 15
    n_groups: int = 100
    trim_outliers: bool = False
    moments: str = "sample"           # "sample" | "true" (synthetic only)
    variants: tuple = ("D1", "D2", "D3", "D4", "D5")
    epsilon: float = 0.05
    alpha: float = 1.0
    support_shape: str = "rectangle"
    uniform_mode_constraints: bool = True
    batches: int = 20
    batch_size: int = 5000
    max_iter: int = 50
    violation_tol: float = 1e-8
    output_dir: str = "results"
    seed: int = 0

    def __post_init__(self):
        if isinstance(self.synthetic, dict):
            object.__setattr__(self, "synthetic", SyntheticSpec.from_dict(self.synthetic))
        object.__setattr__(self, "variants",
                           tuple(v if isinstance(v, VariantConfig) else VariantConfig.from_obj(v)
                                 for v in self.variants))
        if self.moments not in ("sample", "true"):
            raise ValidationError("moments must be 'sample' or 'true'")
        if self.support_shape not in ("rectangle", "ellipsoid"):
            raise ValidationError("support_shape must be 'rectangle' or 'ellipsoid'")
        names = [v.name for v in self.variants]
        if len(set(names)) != len(names):
            raise ValidationError("variant names must be unique")
        UnimodalityConfig(self.alpha, self.epsilon)

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        known = set(cls.__dataclass_fields__)
        extra = set(data) - known
        if extra:
            raise ValidationError(f"unknown config keys {sorted(extra)}")
        data = dict(data)
        for key in ("line_limits", "wind"):
            if key in data:
                data[key] = tuple(tuple(r) for r in data[key])
        if "variants" in data:
            data["variants"] = tuple(data["variants"])
        return cls(**data)

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        path = Path(path)
        try:
            data = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ValidationError(f"{path}: {exc}") from None
        cfg = cls.from_dict(data)
        # relative paths inside the config resolve against its directory
        base = path.parent
        updates = {}
        if cfg.pool_file and not Path(cfg.pool_file).is_absolute():
            updates["pool_file"] = str(base / cfg.pool_file)
        if not Path(cfg.output_dir).is_absolute():
            updates["output_dir"] = str(base / cfg.output_dir)
        if cfg.case.endswith(".m") and not Path(cfg.case).is_absolute():
            updates["case"] = str(base / cfg.case)
        return cls(**{**cfg.__dict__, **updates}) if updates else cfg

    def load_network(self) -> Network:
        path = Path(self.case) if self.case.endswith(".m") else bundled_case(self.case)
        limits = {(int(f), int(t)): float(lim) for f, t, lim in self.line_limits}
        return parse_case(path, self.load_scale, limits, wind=self.wind)


# --------------------------------------------------------------------------
# end-to-end runs


@dataclass
class ResultRow:
    name: str
    kind: str
    status: str
    total_cost: float = math.nan
    generation_cost: float = math.nan
    reserve_cost: float = math.nan
    up_reserve: float = math.nan
    down_reserve: float = math.nan
    iterations: int = 0
    wall_time: float = 0.0
    max_violation: float = math.nan
    reliability_min: float = math.nan
    reliability_avg: float = math.nan
    reliability_max: float = math.nan
    worst_row_frequency: float = math.nan
    error: str = ""

    @classmethod
    def columns(cls) -> list[str]:
        return list(cls.__dataclass_fields__)


@dataclass
class ExperimentReport:
    rows: list
    summary: dict
    paths: dict

    def row(self, name: str) -> ResultRow:
        return next(r for r in self.rows if r.name == name)


class _Streams:
    """Independent generators for pool, sub-sampling and evaluation."""

    def __init__(self, seed):
        pool, sub, evaluation = np.random.SeedSequence(seed).spawn(3)
        self.pool, self.sub, self.evaluation = pool, sub, evaluation

    def sub_rng(self, key: str) -> np.random.Generator:
        # one stream per variant settings so results do not depend on order
        salt = int.from_bytes(key.encode(), "little") % (2**63)
        return np.random.default_rng([*self.sub.generate_state(4), salt])


def _load_pool(cfg: ExperimentConfig, streams: _Streams) -> ScenarioPool:
    if cfg.pool_file:
        pool = ScenarioPool.from_csv(cfg.pool_file)
    else:
        pool = generate_synthetic_pool(cfg.synthetic, streams.pool)
    if cfg.trim_outliers:
        pool = pool.trimmed()
    if cfg.partial_pool:
        pool = pool.subsample(cfg.partial_pool, streams.sub_rng("partial"))
    return pool


def _mode_cloud(pool, cfg, streams, n_data, n_bins, n_groups):
    key = f"groups:{n_data}:{n_bins}:{n_groups}"
    return estimate_mode_groups(pool, n_groups, n_data, n_bins, streams.sub_rng(key))


def _variant_setup(v: VariantConfig, cfg: ExperimentConfig, pool, streams, moments, base_support):
    n_data = v.n_data or cfg.n_data
    n_bins = v.n_bins or cfg.n_bins
    n_groups = v.n_groups or cfg.n_groups
    shape = v.support_shape or cfg.support_shape
    unimod = UnimodalityConfig(cfg.alpha, cfg.epsilon)
    kind = AmbiguityKind(v.kind)
    cloud = None
    support = None
    if kind is AmbiguityKind.D2:
        if v.mode is None or v.mode == "histogram":
            mode = estimate_mode_histogram(pool, n_bins)
        elif v.mode == "true":
            mode = cfg.synthetic.true_mode
        else:
            mode = np.asarray(v.mode, dtype=float)
        support = PointSupport(mode)
    elif kind is AmbiguityKind.D3:
        cloud = _mode_cloud(pool, cfg, streams, n_data, n_bins, n_groups)
        support = build_mode_support(cloud, shape)
    config = AmbiguityConfig(kind, unimod, support)
    if cfg.uniform_mode_constraints:
        region = support if kind in (AmbiguityKind.D2, AmbiguityKind.D3) else base_support
    else:
        region = None
    return config, region, cloud


def _write_csv(path: Path, header, rows):
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def _histogram_rows(pool: ScenarioPool, n_bins: int):
    rows = []
    for axis in range(pool.dimension):
        counts, edges = np.histogram(pool.samples[:, axis], bins=n_bins)
        rows += [(axis, edges[k], edges[k + 1], int(counts[k])) for k in range(n_bins)]
    return rows


def _soft_checks(rows: list[ResultRow]) -> list[str]:
    ok = {r.kind: r for r in rows if r.status == "converged"}
    notes = []
    d1 = ok.get("D1")
    if d1 is not None:
        for r in rows:
            if r.status == "converged" and r.total_cost > d1.total_cost * (1 + 1e-6):
                notes.append(f"{r.name} costs more than D1")
            if r.status == "converged" and r.reliability_avg > d1.reliability_avg + 1e-9:
                notes.append(f"{r.name} is more reliable than D1 on average")
    for note in notes:
        logger.warning("soft check: %s", note)
    return notes


def run_experiment(config: ExperimentConfig, write: bool = True) -> ExperimentReport:
    """Estimate, solve and evaluate every configured ambiguity set."""
    streams = _Streams(config.seed)
    network = config.load_network()
    pool = _load_pool(config, streams)
    if config.moments == "true":
        if config.pool_file:
            raise ValidationError("true moments are only known for synthetic pools")
        moments = config.synthetic.true_moments
    else:
        moments = estimate_moments(pool)

    base_cloud = _mode_cloud(pool, config, streams, config.n_data, config.n_bins, config.n_groups)
    base_support = build_mode_support(base_cloud, config.support_shape)
    if config.pool_file:
        evaluation = pool
    else:
        evaluation = generate_synthetic_pool(config.synthetic, streams.evaluation,
                                             size=config.batches * config.batch_size)
    reserve_cost = config.reserve_cost_factor * np.array([g.cost_lin for g in network.generators])

    out = Path(config.output_dir)
    paths = {}
    if write:
        out.mkdir(parents=True, exist_ok=True)
    rows, solutions, clouds = [], {}, {"base": base_cloud}
    for v in config.variants:
        row = ResultRow(v.name, AmbiguityKind(v.kind).value, "failed")
        try:
            amb, region, cloud = _variant_setup(v, config, pool, streams, moments, base_support)
            if cloud is not None:
                clouds[v.name] = cloud
            problem = build_problem(network, moments, region, amb, reserve_cost)
            rep = solve_drcc(problem, config.max_iter, config.violation_tol)
            dec = OpfDecision.from_vector(rep.x_star, network.n_gen)
            gen, res = dec.cost_split(network, reserve_cost)
            rel = evaluate_reliability(dec, problem, evaluation, config.batches, config.batch_size)
            row = ResultRow(
                v.name, row.kind, rep.status, gen + res, gen, res,
                float(dec.R_up.sum()), float(dec.R_dn.sum()), rep.iterations, rep.wall_time,
                rep.max_violation, rel.min, rel.avg, rel.max, rel.worst_row_frequency(),
            )
            solutions[v.name] = (problem, rep, dec, rel)
        except DrccError as exc:
            logger.error("variant %s failed: %s", v.name, exc)
            row.error = f"{type(exc).__name__}: {exc}"
        rows.append(row)

    notes = _soft_checks(rows)
    summary = {
        "seed": config.seed,
        "epsilon": config.epsilon,
        "alpha": config.alpha,
        "pool_size": len(pool),
        "moments": {"mean": moments.mu.tolist(), "covariance": moments.covariance.tolist()},
        "base_support": _support_dict(base_support),
        "results": [_finite_or_none(asdict(r)) for r in rows],
        "soft_checks": notes,
    }
    if write:
        paths["results"] = out / "results.csv"
        _write_csv(paths["results"], ResultRow.columns(),
                   [[getattr(r, c) for c in ResultRow.columns()] for r in rows])
        paths["summary"] = out / "summary.json"
        paths["summary"].write_text(json.dumps(summary, indent=2, default=_json_default))
        paths["modes"] = out / "mode_estimates.csv"
        _write_csv(paths["modes"], ["set", *[f"m{k + 1}" for k in range(pool.dimension)]],
                   [[name, *pt] for name, cl in clouds.items() for pt in cl])
        paths["histogram"] = out / "histogram.csv"
        _write_csv(paths["histogram"], ["axis", "bin_lo", "bin_hi", "count"],
                   _histogram_rows(pool, config.n_bins))
        for name, (problem, rep, dec, _) in solutions.items():
            p = out / f"solution_{name}.json"
            p.write_text(json.dumps(solution_payload(problem, rep.x_star, config.epsilon, dec),
                                    indent=2, default=_json_default))
            paths[f"solution_{name}"] = p
    return ExperimentReport(rows, summary, paths)


def solution_payload(problem: DrccProblem, x, epsilon: float, decision: OpfDecision | None = None) -> dict:
    """Serializable rows ``a(x*)``, ``b(x*)`` for stand-alone reliability checks."""
    payload = {
        "epsilon": epsilon,
        "x": np.asarray(x).tolist(),
        "rows": [{"name": uc.name, "a": uc.row.a(x).tolist(), "b": uc.row.b(x)}
                 for uc in problem.uncertain],
    }
    if decision is not None:
        payload["decision"] = {k: v.tolist() for k, v in asdict(decision).items()}
    return payload


def _support_dict(support) -> dict:
    if isinstance(support, RectangleSupport):
        return {"shape": "rectangle", "k_lo": support.k_lo.tolist(), "k_hi": support.k_hi.tolist()}
    return {"shape": "ellipsoid", "center": support.center.tolist(), "shape_matrix": support.shape.tolist()}


def _finite_or_none(d: dict) -> dict:
    return {k: (None if isinstance(v, float) and not math.isfinite(v) else v) for k, v in d.items()}


def _json_default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, Path):
        return str(obj)
    raise TypeError(f"cannot serialize {type(obj).__name__}")
