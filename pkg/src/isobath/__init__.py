"""Decentralized multi-vehicle survey planning around a critical isobath.

A team of autonomous surface vehicles maps the region of a lake deeper
than a critical level. Each vehicle keeps a Gaussian-process belief over
the depth field, plans informative paths with Monte Carlo tree search
against a Bayes-risk objective, coordinates sequentially with its
teammates through a bandwidth-limited acoustic broadcast channel, and
the whole mission runs on a deterministic event-driven simulator.
"""

from .comms import (
    CommEvent,
    CommLog,
    Packet,
    TdmaSchedule,
    decode_packet,
    encode_packet,
    measurement_capacity,
    select_measurements,
    tdma_active_agent,
)
from .coordination import (
    JointPlanSnapshot,
    PeerPlan,
    TeamOrdering,
    joint_reward,
    plan_with_predecessors,
)
from .environment import (
    AnalyticBathymetry,
    GriddedBathymetry,
    OperationalArea,
    SensorModel,
    depth_at,
    eval_grid,
    sample_depth,
    synthetic_lake,
)
from .errors import (
    ConfigurationError,
    DecodeError,
    DomainError,
    EncodeError,
    IsobathError,
    NumericalError,
)
from .gp import (
    Belief,
    DataSet,
    KernelSpec,
    Prediction,
    Sample,
    admissible_locations,
    local_subset,
    posterior_predict,
    posterior_predict_local,
    sparse_insert,
    variance_reduction,
)
from .mission import (
    MissionConfig,
    MissionResult,
    accumulated_reward_trace,
    compare_methods,
    global_data,
    risk_snapshot,
    run_mission,
    truth_grid,
    write_jsonl,
)
from .motion import (
    ACTION_SET,
    AgentState,
    MotionParams,
    Path,
    lawnmower_path,
    rollout,
    sample_locations,
    step,
    wrap_heading,
)
from .planner import (
    EpisodeEvaluator,
    PlanConfig,
    PlanContext,
    PlanResult,
    augmented_reward,
    bound_condition_check,
    mcts_plan,
    path_reward,
    plan_episode,
    receding_horizon_step,
)
from .risk import (
    ExpectedRiskInputs,
    LossParams,
    RiskField,
    bayes_estimate,
    bayes_risk,
    bayes_risk_batch,
    benefit_of_search,
    expected_bayes_risk_closed,
    expected_bayes_risk_closed_batch,
    expected_bayes_risk_mc,
    expected_bayes_risk_quadrature,
    expected_benefit_of_search,
    mu_star,
    risk_field,
)

__version__ = "0.1.0"

__all__ = [
    "ACTION_SET",
    "AgentState",
    "AnalyticBathymetry",
    "Belief",
    "CommEvent",
    "CommLog",
    "ConfigurationError",
    "DataSet",
    "DecodeError",
    "DomainError",
    "EncodeError",
    "EpisodeEvaluator",
    "ExpectedRiskInputs",
    "GriddedBathymetry",
    "IsobathError",
    "JointPlanSnapshot",
    "KernelSpec",
    "LossParams",
    "MissionConfig",
    "MissionResult",
    "MotionParams",
    "NumericalError",
    "OperationalArea",
    "Packet",
    "Path",
    "PeerPlan",
    "PlanConfig",
    "PlanContext",
    "PlanResult",
    "Prediction",
    "RiskField",
    "Sample",
    "SensorModel",
    "TdmaSchedule",
    "TeamOrdering",
    "accumulated_reward_trace",
    "admissible_locations",
    "augmented_reward",
    "bayes_estimate",
    "bayes_risk",
    "bayes_risk_batch",
    "benefit_of_search",
    "bound_condition_check",
    "compare_methods",
    "decode_packet",
    "depth_at",
    "encode_packet",
    "eval_grid",
    "expected_bayes_risk_closed",
    "expected_bayes_risk_closed_batch",
    "expected_bayes_risk_mc",
    "expected_bayes_risk_quadrature",
    "expected_benefit_of_search",
    "global_data",
    "joint_reward",
    "lawnmower_path",
    "local_subset",
    "mcts_plan",
    "measurement_capacity",
    "mu_star",
    "path_reward",
    "plan_episode",
    "plan_with_predecessors",
    "posterior_predict",
    "posterior_predict_local",
    "receding_horizon_step",
    "risk_field",
    "risk_snapshot",
    "rollout",
    "run_mission",
    "sample_depth",
    "sample_locations",
    "select_measurements",
    "sparse_insert",
    "step",
    "synthetic_lake",
    "tdma_active_agent",
    "truth_grid",
    "variance_reduction",
    "wrap_heading",
    "write_jsonl",
]
