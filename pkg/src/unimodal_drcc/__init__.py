"""Distributionally robust chance constraints under moment and unimodality information.

Modules: ``uncertainty`` (data and supports), ``ambiguity`` (cone cuts),
``separation`` (worst-case search), ``master`` (cutting-plane loop),
``dcopf`` (power-system instance) and ``experiment`` (end-to-end runs).
"""

from .ambiguity import AmbiguityConfig, AmbiguityKind, SocCut, UncertainRow, k_factor
from .dcopf import Network, OpfDecision, build_problem, bundled_case, compute_ptdf, parse_case
from .errors import DrccError
from .experiment import (
    ExperimentConfig,
    SyntheticSpec,
    evaluate_reliability,
    generate_synthetic_pool,
    run_experiment,
)
from .master import CvxpyAdapter, DrccProblem, SolveReport, UncertainConstraint, solve_drcc
from .separation import SeparationInstance, WorstCase, brute_force_worst_case, worst_case
from .uncertainty import (
    EllipsoidSupport,
    MomentData,
    PointSupport,
    RectangleSupport,
    ScenarioPool,
    UnimodalityConfig,
)

__version__ = "0.1.0"
