"""DC optimal power flow with chance-constrained reserve scheduling.

Decision vector layout (``G`` generators): ``x = [P_G, R_up, R_dn, d_G]``.
Wind forecast errors ``w`` are redistributed as ``-d_G * sum(w)``; every
line, generation and reserve limit that involves ``w`` becomes an uncertain
row ``a(x)^T w <= b(x)``.

Case files use MATPOWER's ``mpc.bus`` / ``mpc.gen`` / ``mpc.branch`` /
``mpc.gencost`` tables. An optional ``mpc.wind`` table (``bus forecast_MW``)
places wind plants.
"""

from __future__ import annotations

import dataclasses
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np
from scipy.sparse.csgraph import connected_components

from .ambiguity import AmbiguityConfig, UncertainRow
from .errors import DimensionMismatch, ParseError, SingularSusceptance, ValidationError
from .master import DrccProblem, UncertainConstraint
from .uncertainty import MomentData

__all__ = [
    "Bus",
    "Branch",
    "Generator",
    "WindPlant",
    "Network",
    "OpfDecision",
    "bundled_case",
    "parse_case",
    "parse_case_text",
    "compute_ptdf",
    "build_problem",
    "build_deterministic_problem",
    "dc_flows",
]

RESERVE_COST_FACTOR = 10.0


@dataclass(frozen=True)
class Bus:
    id: int
    load: float
    kind: int = 1


@dataclass(frozen=True)
class Branch:
    from_bus: int
    to_bus: int
    reactance: float
    limit: float


@dataclass(frozen=True)
class Generator:
    bus: int
    p_min: float
    p_max: float
    cost_quad: float = 0.0
    cost_lin: float = 0.0
    cost_const: float = 0.0


@dataclass(frozen=True)
class WindPlant:
    bus: int
    forecast: float


@dataclass(frozen=True)
class Network:
    buses: tuple
    branches: tuple
    generators: tuple
    wind: tuple = ()
    slack: int | None = None
    base_mva: float = 100.0

    def __post_init__(self):
        if self.slack is None:
            ref = [b.id for b in self.buses if b.kind == 3]
            object.__setattr__(self, "slack", ref[0] if ref else self.buses[0].id)
        self.validate()

    @property
    def bus_index(self) -> dict:
        return {b.id: k for k, b in enumerate(self.buses)}

    @property
    def n_bus(self) -> int:
        return len(self.buses)

    @property
    def n_gen(self) -> int:
        return len(self.generators)

    @property
    def n_wind(self) -> int:
        return len(self.wind)

    @property
    def loads(self) -> np.ndarray:
        return np.array([b.load for b in self.buses])

    @property
    def line_limits(self) -> np.ndarray:
        return np.array([br.limit for br in self.branches])

    def validate(self) -> None:
        idx = self.bus_index
        if len(idx) != len(self.buses):
            raise ValidationError("duplicate bus ids")
        for br in self.branches:
            for end in (br.from_bus, br.to_bus):
                if end not in idx:
                    raise ValidationError(f"branch {br.from_bus}-{br.to_bus} refers to missing bus {end}")
            if br.reactance <= 0:
                raise ValidationError(f"branch {br.from_bus}-{br.to_bus} has non-positive reactance")
        for g in self.generators:
            if g.bus not in idx:
                raise ValidationError(f"generator on missing bus {g.bus}")
            if g.p_min > g.p_max:
                raise ValidationError(f"generator at bus {g.bus} has Pmin > Pmax")
        for w in self.wind:
            if w.bus not in idx:
                raise ValidationError(f"wind plant on missing bus {w.bus}")
        if self.slack not in idx:
            raise ValidationError(f"slack bus {self.slack} does not exist")
        if self.buses:
            C = _incidence(self)
            adj = np.abs(C.T) @ np.abs(C)
            n_comp, _ = connected_components(adj, directed=False)
            if n_comp != 1:
                raise ValidationError(f"network has {n_comp} islands")

    # overrides -----------------------------------------------------------

    def scaled_load(self, factor: float) -> "Network":
        buses = tuple(dataclasses.replace(b, load=b.load * factor) for b in self.buses)
        return dataclasses.replace(self, buses=buses)

    def with_line_limit(self, from_bus: int, to_bus: int, limit: float) -> "Network":
        hit = False
        branches = []
        for br in self.branches:
            if {br.from_bus, br.to_bus} == {from_bus, to_bus}:
                br = dataclasses.replace(br, limit=float(limit))
                hit = True
            branches.append(br)
        if not hit:
            raise ValidationError(f"no branch between buses {from_bus} and {to_bus}")
        return dataclasses.replace(self, branches=tuple(branches))

    def with_wind(self, buses, forecasts) -> "Network":
        buses, forecasts = list(buses), list(forecasts)
        if len(buses) != len(forecasts):
            raise DimensionMismatch("wind buses and forecasts differ in length")
        wind = tuple(WindPlant(int(b), float(f)) for b, f in zip(buses, forecasts))
        return dataclasses.replace(self, wind=wind)

    # incidence maps ------------------------------------------------------

    def gen_map(self) -> np.ndarray:
        idx = self.bus_index
        C = np.zeros((self.n_bus, self.n_gen))
        for k, g in enumerate(self.generators):
            C[idx[g.bus], k] = 1.0
        return C

    def wind_map(self) -> np.ndarray:
        idx = self.bus_index
        C = np.zeros((self.n_bus, self.n_wind))
        for k, w in enumerate(self.wind):
            C[idx[w.bus], k] = 1.0
        return C


def _incidence(network: Network) -> np.ndarray:
    idx = network.bus_index
    C = np.zeros((len(network.branches), network.n_bus))
    for k, br in enumerate(network.branches):
        C[k, idx[br.from_bus]] = 1.0
        C[k, idx[br.to_bus]] = -1.0
    return C


# --------------------------------------------------------------------------
# case file parsing

_ASSIGN = re.compile(r"^\s*mpc\.(\w+)\s*=\s*(.*)$")


def _strip_comment(line: str) -> str:
    out, quoted = [], False
    for ch in line:
        if ch == "'":
            quoted = not quoted
        elif ch == "%" and not quoted:
            break
        out.append(ch)
    return "".join(out)


def _parse_row(text: str, lineno: int, col0: int) -> list[float]:
    values = []
    for m in re.finditer(r"[^\s,]+", text):
        try:
            values.append(float(m.group()))
        except ValueError:
            raise ParseError(f"bad number {m.group()!r}", lineno, col0 + m.start() + 1) from None
    return values


def _read_tables(text: str) -> tuple[dict, dict]:
    tables, scalars = {}, {}
    current, rows, start_line = None, [], 0
    in_cell = False
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = _strip_comment(raw)
        if in_cell:
            # cell arrays (bus names and similar) carry no numeric data
            in_cell = "}" not in line
            continue
        if current is None:
            if not line.strip() or line.strip().startswith("function"):
                continue
            m = _ASSIGN.match(line)
            if not m:
                raise ParseError(f"unexpected statement {line.strip()!r}", lineno, 1)
            name, rest = m.group(1), m.group(2)
            if rest.lstrip().startswith("{"):
                in_cell = "}" not in rest
                continue
            if rest.lstrip().startswith("["):
                current, rows, start_line = name, [], lineno
                body_col = line.index("[") + 1
                line = " " * body_col + line[body_col:]
            else:
                value = rest.strip().rstrip(";").strip()
                scalars[name] = value.strip("'")
                continue
        close = line.find("]")
        body = line if close < 0 else line[:close]
        col = 0
        for chunk in body.split(";"):
            row = _parse_row(chunk, lineno, col)
            if row:
                rows.append((row, lineno))
            col += len(chunk) + 1
        if close >= 0:
            widths = {len(r) for r, _ in rows}
            if len(widths) > 1:
                bad = next(ln for r, ln in rows if len(r) != len(rows[0][0]))
                raise ParseError(f"ragged rows in mpc.{current}", bad, 1)
            tables[current] = np.array([r for r, _ in rows], dtype=float) if rows else np.zeros((0, 0))
            current = None
    if current is not None:
        raise ParseError(f"mpc.{current} is never closed", start_line, 1)
    return tables, scalars


def _require(tables, name, min_cols):
    if name not in tables:
        raise ParseError(f"missing table mpc.{name}")
    t = tables[name]
    if t.shape[0] and t.shape[1] < min_cols:
        raise ParseError(f"mpc.{name} needs at least {min_cols} columns, has {t.shape[1]}")
    return t


def parse_case_text(text: str, load_scale: float = 1.0, line_limits=None,
                    wind=None) -> Network:
    """Build a :class:`Network` from MATPOWER case text.

    ``line_limits`` maps ``(from_bus, to_bus)`` pairs to MW limits;
    ``wind`` is a list of ``(bus, forecast_MW)`` overriding any ``mpc.wind``.
    Out-of-service generators and branches are dropped.
    """
    tables, scalars = _read_tables(text)
    base = float(scalars.get("baseMVA", 100.0))
    bus_t = _require(tables, "bus", 3)
    gen_t = _require(tables, "gen", 10)
    br_t = _require(tables, "branch", 6)

    buses = tuple(Bus(int(r[0]), float(r[2]), int(r[1])) for r in bus_t)
    branches = tuple(
        Branch(int(r[0]), int(r[1]), float(r[3]), float(r[5]) if r[5] > 0 else np.inf)
        for r in br_t
        if br_t.shape[1] < 11 or r[10] > 0
    )
    cost_t = tables.get("gencost")
    if cost_t is not None and cost_t.shape[0] not in (0, gen_t.shape[0]):
        raise ValidationError("mpc.gencost must have one row per generator")
    gens = []
    for k, r in enumerate(gen_t):
        if r[7] <= 0:
            continue
        c2 = c1 = c0 = 0.0
        if cost_t is not None and cost_t.shape[0]:
            c = cost_t[k]
            if int(c[0]) != 2:
                raise ValidationError("only polynomial generator costs (model 2) are supported")
            coeffs = list(c[4:4 + int(c[3])])
            coeffs = [0.0] * (3 - len(coeffs)) + coeffs[-3:]
            c2, c1, c0 = coeffs
        gens.append(Generator(int(r[0]), float(r[9]), float(r[8]), c2, c1, c0))

    wind_plants = ()
    if wind is not None:
        wind_plants = tuple(WindPlant(int(b), float(f)) for b, f in wind)
    elif "wind" in tables and tables["wind"].size:
        wind_plants = tuple(WindPlant(int(r[0]), float(r[1])) for r in tables["wind"])

    net = Network(buses, branches, tuple(gens), wind_plants, base_mva=base)
    if load_scale != 1.0:
        net = net.scaled_load(load_scale)
    for (f, t), limit in (line_limits or {}).items():
        net = net.with_line_limit(int(f), int(t), limit)
    return net


def parse_case(path, load_scale: float = 1.0, line_limits=None, wind=None) -> Network:
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"case file {path} does not exist")
    return parse_case_text(path.read_text(), load_scale, line_limits, wind)


def bundled_case(name: str = "case_ieee30") -> Path:
    """Path of a case file shipped with the package."""
    ref = resources.files("unimodal_drcc") / "data" / f"{name}.m"
    return Path(str(ref))


# --------------------------------------------------------------------------
# linear power flow


def compute_ptdf(network: Network, slack: int | None = None) -> np.ndarray:
    """Branch-by-bus PTDF matrix with the slack column fixed at zero."""
    slack = network.slack if slack is None else slack
    idx = network.bus_index
    if slack not in idx:
        raise ValidationError(f"slack bus {slack} does not exist")
    C = _incidence(network)
    x = np.array([br.reactance for br in network.branches])
    if np.any(x <= 0):
        raise SingularSusceptance("non-positive branch reactance")
    Bf = C / x[:, None]
    B = C.T @ Bf
    keep = np.array([k for k in range(network.n_bus) if k != idx[slack]], dtype=int)
    B_red = B[np.ix_(keep, keep)]
    if keep.size and np.linalg.cond(B_red) > 1e12:
        raise SingularSusceptance("reduced susceptance matrix is singular")
    ptdf = np.zeros((len(network.branches), network.n_bus))
    if keep.size:
        ptdf[:, keep] = np.linalg.solve(B_red.T, Bf[:, keep].T).T
    return ptdf


def dc_flows(network: Network, injections, slack: int | None = None) -> np.ndarray:
    """Branch flows from a direct angle solve ``B theta = P`` (slack angle 0)."""
    slack = network.slack if slack is None else slack
    idx = network.bus_index
    C = _incidence(network)
    x = np.array([br.reactance for br in network.branches])
    B = C.T @ (C / x[:, None])
    keep = np.array([k for k in range(network.n_bus) if k != idx[slack]], dtype=int)
    theta = np.zeros(network.n_bus)
    p = np.asarray(injections, dtype=float)
    theta[keep] = np.linalg.solve(B[np.ix_(keep, keep)], p[keep])
    return (C @ theta) / x


# --------------------------------------------------------------------------
# problem construction


@dataclass(frozen=True)
class OpfDecision:
    P_G: np.ndarray
    R_up: np.ndarray
    R_dn: np.ndarray
    d_G: np.ndarray

    @classmethod
    def from_vector(cls, x, n_gen: int) -> "OpfDecision":
        x = np.asarray(x, dtype=float)
        if x.shape != (4 * n_gen,):
            raise DimensionMismatch(f"expected {4 * n_gen} entries, got {x.shape}")
        return cls(*(x[k * n_gen:(k + 1) * n_gen].copy() for k in range(4)))

    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.P_G, self.R_up, self.R_dn, self.d_G])

    def cost_split(self, network: Network, reserve_cost=None) -> tuple[float, float]:
        """``(generation cost, reserve cost)``."""
        gens = network.generators
        c2 = np.array([g.cost_quad for g in gens])
        c1 = np.array([g.cost_lin for g in gens])
        c0 = np.array([g.cost_const for g in gens])
        cr = _reserve_cost(network, reserve_cost)
        gen = float(c2 @ self.P_G**2 + c1 @ self.P_G + c0.sum())
        res = float(cr @ (self.R_up + self.R_dn))
        return gen, res


def _reserve_cost(network, reserve_cost):
    if reserve_cost is None:
        return RESERVE_COST_FACTOR * np.array([g.cost_lin for g in network.generators])
    cr = np.broadcast_to(np.asarray(reserve_cost, dtype=float), (network.n_gen,))
    return np.array(cr)


@dataclass
class _Layout:
    n_gen: int
    P: slice = field(init=False)
    Ru: slice = field(init=False)
    Rd: slice = field(init=False)
    d: slice = field(init=False)

    def __post_init__(self):
        g = self.n_gen
        self.P, self.Ru, self.Rd, self.d = (slice(k * g, (k + 1) * g) for k in range(4))

    @property
    def size(self) -> int:
        return 4 * self.n_gen


def _objective(network, layout, reserve_cost):
    gens = network.generators
    quad = np.zeros((layout.size, layout.size))
    quad[layout.P, layout.P] = np.diag([g.cost_quad for g in gens])
    lin = np.zeros(layout.size)
    lin[layout.P] = [g.cost_lin for g in gens]
    cr = _reserve_cost(network, reserve_cost)
    lin[layout.Ru] = cr
    lin[layout.Rd] = cr
    return quad, lin, float(sum(g.cost_const for g in gens))


def _var_names(network):
    names = []
    for prefix in ("P_G", "R_up", "R_dn", "d_G"):
        names += [f"{prefix}[{g.bus}]" for g in network.generators]
    return names


def build_problem(network: Network, moments: MomentData, support, config: AmbiguityConfig,
                  reserve_cost=None) -> DrccProblem:
    """Chance-constrained reserve-scheduling problem for one ambiguity set.

    ``support`` is the mode region over which every uncertain row must hold
    at the mode (applied to all ambiguity kinds so costs are comparable);
    pass ``None`` to skip it for D1/D4/D5.
    """
    n_w = network.n_wind
    if n_w == 0:
        raise ValidationError("network has no wind plants")
    if moments.dimension != n_w:
        raise DimensionMismatch(f"{n_w} wind plants but moments of dimension {moments.dimension}")
    G = network.n_gen
    lay = _Layout(G)
    l = lay.size
    ptdf = compute_ptdf(network)
    AG = ptdf @ network.gen_map()                 # lines x gens
    AW = ptdf @ network.wind_map()                # lines x wind
    forecast = np.array([w.forecast for w in network.wind])
    base_flow = AW @ forecast - ptdf @ network.loads
    ones = np.ones(n_w)

    rows: list[tuple[UncertainRow, str]] = []
    for i, br in enumerate(network.branches):
        if not np.isfinite(br.limit):
            continue
        a_mat = np.zeros((n_w, l))
        a_mat[:, lay.d] = -np.outer(ones, AG[i])
        b_vec = np.zeros(l)
        b_vec[lay.P] = -AG[i]
        pos = UncertainRow(a_mat, AW[i], b_vec, br.limit - base_flow[i])
        neg = UncertainRow(-a_mat, -AW[i], -b_vec, br.limit + base_flow[i])
        tag = f"line {br.from_bus}-{br.to_bus}"
        rows += [(pos, tag + " +"), (neg, tag + " -")]

    for k, g in enumerate(network.generators):
        col = lay.d.start + k
        down = np.zeros((n_w, l))
        down[:, col] = -1.0          # a(x) = -d_g 1
        e_P = np.zeros(l)
        e_P[lay.P.start + k] = 1.0
        e_Ru = np.zeros(l)
        e_Ru[lay.Ru.start + k] = 1.0
        e_Rd = np.zeros(l)
        e_Rd[lay.Rd.start + k] = 1.0
        zero = np.zeros(n_w)
        rows += [
            (UncertainRow(down, zero, -e_P, g.p_max), f"gen {g.bus} max"),
            (UncertainRow(-down, zero, e_P, -g.p_min), f"gen {g.bus} min"),
            (UncertainRow(down, zero, e_Ru, 0.0), f"gen {g.bus} reserve up"),
            (UncertainRow(-down, zero, e_Rd, 0.0), f"gen {g.bus} reserve down"),
        ]

    uncertain = [UncertainConstraint(r, config, moments, mode_region=support, name=name)
                 for r, name in rows]
    quad, lin, const = _objective(network, lay, reserve_cost)
    A_eq = np.zeros((2, l))
    A_eq[0, lay.P] = 1.0
    A_eq[1, lay.d] = 1.0
    b_eq = np.array([network.loads.sum() - forecast.sum(), 1.0])
    return DrccProblem(quad=quad, linear=lin, constant=const, A_eq=A_eq, b_eq=b_eq,
                       lb=np.zeros(l), uncertain=uncertain, var_names=_var_names(network))


def build_deterministic_problem(network: Network, reserve_cost=None) -> DrccProblem:
    """Plain DC-OPF on the same variables with wind fixed at its forecast."""
    G = network.n_gen
    lay = _Layout(G)
    l = lay.size
    ptdf = compute_ptdf(network)
    AG = ptdf @ network.gen_map()
    forecast = np.array([w.forecast for w in network.wind]) if network.wind else np.zeros(0)
    base_flow = (ptdf @ network.wind_map() @ forecast if network.wind else 0.0) - ptdf @ network.loads
    limits = network.line_limits
    finite = np.isfinite(limits)
    A_line = np.zeros((int(finite.sum()), l))
    A_line[:, lay.P] = AG[finite]
    A_ub = np.vstack([A_line, -A_line])
    b_ub = np.concatenate([limits[finite] - base_flow[finite], limits[finite] + base_flow[finite]])
    lb = np.zeros(l)
    ub = np.full(l, np.inf)
    lb[lay.P] = [g.p_min for g in network.generators]
    ub[lay.P] = [g.p_max for g in network.generators]
    quad, lin, const = _objective(network, lay, reserve_cost)
    A_eq = np.zeros((2, l))
    A_eq[0, lay.P] = 1.0
    A_eq[1, lay.d] = 1.0
    b_eq = np.array([network.loads.sum() - forecast.sum(), 1.0])
    return DrccProblem(quad=quad, linear=lin, constant=const, A_ub=A_ub, b_ub=b_ub,
                       A_eq=A_eq, b_eq=b_eq, lb=lb, ub=ub, var_names=_var_names(network))
