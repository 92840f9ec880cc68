"""
Reserve scheduling on the IEEE 30-bus system
============================================

Two wind plants (buses 22 and 5) feed a 30-bus DC network with load scaled
by 1.5 and the 1-2 line limited to 30 MW. Wind forecast errors come from a
skewed synthetic distribution whose mode, mean and covariance are known.
Each ambiguity set gives a different schedule; tighter information buys a
cheaper schedule. Out-of-sample checks use fresh draws.
"""

import logging

import numpy as np

from unimodal_drcc import AmbiguityConfig, UnimodalityConfig
from unimodal_drcc.dcopf import OpfDecision, build_deterministic_problem, build_problem
from unimodal_drcc.experiment import (
    ExperimentConfig,
    SyntheticSpec,
    evaluate_reliability,
    generate_synthetic_pool,
    reliability_floor,
)
from unimodal_drcc.master import solve_drcc
from unimodal_drcc.uncertainty import PointSupport, RectangleSupport

logging.basicConfig(level=logging.WARNING)

net = ExperimentConfig().load_network()
spec = SyntheticSpec()
moments = spec.true_moments
print("true mode", spec.true_mode, " mean", spec.true_mean.round(3))
print("true covariance\n", spec.true_covariance.round(2))

cr = 10.0 * np.array([g.cost_lin for g in net.generators])
det = solve_drcc(build_deterministic_problem(net, cr))
print(f"\ndeterministic cost (no reserves): {det.objective_value:.2f}")

# a 2 MW wide mode box around the true mode, shared by all sets
box = RectangleSupport(spec.true_mode - 1.0, spec.true_mode + 1.0)
u = UnimodalityConfig(1.0, 0.05)
sets = {
    "D1": AmbiguityConfig("D1", u),
    "D2": AmbiguityConfig("D2", u, PointSupport(spec.true_mode)),
    "D3": AmbiguityConfig("D3", u, box),
    "D4": AmbiguityConfig("D4", u),
    "D5": AmbiguityConfig("D5", u),
}

scenarios = generate_synthetic_pool(spec, seed=1, size=20 * 5000)
floor = reliability_floor(0.05, 5000)
print(f"\nper-row violation frequency must stay below {floor:.4f}")
print(f"{'set':4} {'cost':>10} {'gen':>10} {'reserve':>9} {'up MW':>7} {'dn MW':>7} {'iter':>5} {'joint %':>8} {'worst row':>9}")
for name, cfg in sets.items():
    prob = build_problem(net, moments, box, cfg, cr)
    rep = solve_drcc(prob)
    dec = OpfDecision.from_vector(rep.x_star, net.n_gen)
    gen, res = dec.cost_split(net, cr)
    rel = evaluate_reliability(dec, prob, scenarios)
    print(f"{name:4} {gen + res:10.2f} {gen:10.2f} {res:9.2f} {dec.R_up.sum():7.2f} "
          f"{dec.R_dn.sum():7.2f} {rep.iterations:5d} {rel.avg:8.2f} {rel.worst_row_frequency():9.4f}")

# D4 assumes the mode sits at the mean; this distribution is skewed so D4
# does not contain it, and its guarantee does not apply here
