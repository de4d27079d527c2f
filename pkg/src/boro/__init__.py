"""Bootstrap-robust prescriptive analytics.

Contextual learners over empirical models, nominal and robust decision
rules over relative-entropy ambiguity sets, and a resampling harness that
measures how often a budgeted decision disappoints.
"""

from .bootstrap import (
    BootstrapPlan,
    DisappointmentReport,
    bound_curve,
    estimate_disappointment,
    nominal_costs_on_resamples,
    resample,
)
from .divergences import (
    ModelDistance,
    bootstrap_distance,
    burg_distance,
    f_divergence,
    model_distance,
    pearson_distance,
    table_distance,
)
from .engine import SolveSettings, log_sum_exp, minimize_convex, project_simplex
from .errors import (
    BoroError,
    ConfigError,
    EmptyContextWindow,
    ParseError,
    SingularCovariance,
    SolverError,
    UnsupportedDistance,
)
from .learners import (
    NeighborhoodChain,
    NnLearner,
    NwLearner,
    ProximityFn,
    build_neighborhoods,
    contextualize,
    mahalanobis_proximity,
    nn_contextualize,
    nw_contextualize,
    select_neighborhood,
)
from .model import (
    ContextualDistribution,
    Dataset,
    EmpiricalModel,
    LossSpec,
    SupervisedSample,
    empirical_model,
    expected_loss,
)
from .prescribe import Prescription, nominal_contextual_cost, nominal_prescribe, saa_prescribe
from .robust import (
    MinRadii,
    RobustConfig,
    RobustEvaluation,
    calibrate_radius_nn,
    calibrate_radius_nw,
    contextual_cost_at_weights,
    min_radii,
    nn_disappointment_bound,
    robust_nn_cost,
    robust_nn_partial_cost,
    robust_nw_cost,
    robust_prescribe,
)
from .smoothers import (
    Smoother,
    bandwidth_rule_of_thumb,
    evaluate_scaled,
    get_smoother,
    smoother_names,
    smoother_weights,
)

__version__ = "0.1.0"
