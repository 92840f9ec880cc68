"""Shared builders for the test suite."""

from __future__ import annotations

import numpy as np

from unimodal_drcc.ambiguity import AmbiguityConfig, UncertainRow
from unimodal_drcc.dcopf import build_problem
from unimodal_drcc.experiment import ExperimentConfig, SyntheticSpec
from unimodal_drcc.master import DrccProblem, UncertainConstraint
from unimodal_drcc.separation import SeparationInstance
from unimodal_drcc.uncertainty import MomentData, PointSupport, RectangleSupport, UnimodalityConfig

ALPHAS = (1.0, 2.0, 3.0, 5.0)
EPSILONS = (0.01, 0.05, 0.1, 0.3)

# lines printed by the acceptance suite, echoed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def record(criterion: int, ok: bool, detail: str) -> None:
    ACCEPTANCE_LINES.append(f"{'PASS' if ok else 'FAIL'}  criterion {criterion}: {detail}")
    print(ACCEPTANCE_LINES[-1])


def random_instance(rng: np.random.Generator) -> SeparationInstance:
    """Random feasible instance; about a quarter sit exactly on the supremum branch."""
    alpha = float(rng.choice(ALPHAS))
    eps = float(rng.choice(EPSILONS))
    R = float(np.exp(rng.uniform(-2.0, 2.0)))
    hs = np.sort(rng.uniform(-0.98, 0.98, 2)) * R
    if rng.random() < 0.2:
        hs[1] = hs[0]
    c = -alpha * hs[0] + float(np.exp(rng.uniform(-6.0, 2.0))) * R * rng.choice([0, 1, 1, 1])
    return SeparationInstance(alpha, eps, R, c, float(hs[0]), float(hs[1]))


def toy_problem(kind, moments=None, support=None, epsilon=0.05, alpha=1.0):
    """``min x`` subject to ``xi <= x`` with ``xi`` scalar."""
    moments = moments or MomentData.from_mean_cov([1.0], [[4.0]])
    unimod = UnimodalityConfig(alpha, epsilon)
    cfg = AmbiguityConfig(kind, unimod, support)
    row = UncertainRow(np.zeros((1, 1)), [1.0], [1.0], 0.0)
    uc = UncertainConstraint(row, cfg, moments, name="xi <= x")
    return DrccProblem(quad=None, linear=[1.0], uncertain=[uc])


IEEE30_SPEC = SyntheticSpec()


def ieee30_network():
    return ExperimentConfig().load_network()


def ieee30_support(half_width=1.0) -> RectangleSupport:
    m = IEEE30_SPEC.true_mode
    return RectangleSupport(m - half_width, m + half_width)


def ieee30_problems(epsilon=0.05, alpha=1.0):
    """Problems for every ambiguity kind on matched data (true moments, one mode box)."""
    net = ieee30_network()
    moments = IEEE30_SPEC.true_moments
    box = ieee30_support()
    unimod = UnimodalityConfig(alpha, epsilon)
    cr = 10.0 * np.array([g.cost_lin for g in net.generators])
    configs = {
        "D1": AmbiguityConfig("D1", unimod),
        "D2": AmbiguityConfig("D2", unimod, PointSupport(IEEE30_SPEC.true_mode)),
        "D3": AmbiguityConfig("D3", unimod, box),
        "D4": AmbiguityConfig("D4", unimod),
        "D5": AmbiguityConfig("D5", unimod),
    }
    return net, cr, {k: build_problem(net, moments, box, c, cr) for k, c in configs.items()}
