"""Deterministic simulator for decentralized federated multi-task learning.

Nodes in task groups train locally, average backbones within each group,
and exchange backbone deltas between rotating group leaders, which merge
them with a conflict-averse update. Everything is reproducible from
(config, seed): identical runs produce byte-identical metrics and message
transcripts.
"""

from .aggregation import (
    DualWeights,
    HcaConfig,
    LinearCombineWeights,
    compute_round_delta,
    dual_grid_search,
    dual_objective,
    hca_merge,
    intra_aggregate,
    linear_combine,
    plain_cross_average,
    solve_dual_weights,
)
from .analysis import ContractionEstimate, MetricsRecord, compute_phi, estimate_contraction
from .errors import TaskfedError
from .harness import (
    ExperimentConfig,
    ExperimentResult,
    config_from_dict,
    generate_scenario,
    initial_states,
    load_config,
    run_experiment,
)
from .netsim import SCHEMES, Federation, SimClock, Topology, build_topology, check_connected
from .params import BackboneDelta, ModelParams, ParamVector
from .protocol import (
    CROSS_SCHEMES,
    Message,
    NodeState,
    TaskGroup,
    follower_apply,
    intra_round,
    leader_round,
    rotate_leader,
    run_local_training,
)
from .tasks import (
    AnalysisParams,
    TaskSpec,
    analysis_params,
    batch_seed,
    global_optimum,
    gradient,
    logistic_task,
    loss,
    mlp_task,
    quadratic_task,
    sgd_step,
    validation_loss,
)

__version__ = "0.1.0"

__all__ = [
    "AnalysisParams",
    "BackboneDelta",
    "ContractionEstimate",
    "CROSS_SCHEMES",
    "DualWeights",
    "ExperimentConfig",
    "ExperimentResult",
    "Federation",
    "HcaConfig",
    "LinearCombineWeights",
    "Message",
    "MetricsRecord",
    "ModelParams",
    "NodeState",
    "ParamVector",
    "SCHEMES",
    "SimClock",
    "TaskGroup",
    "TaskSpec",
    "TaskfedError",
    "Topology",
    "analysis_params",
    "batch_seed",
    "build_topology",
    "check_connected",
    "compute_phi",
    "compute_round_delta",
    "config_from_dict",
    "dual_grid_search",
    "dual_objective",
    "estimate_contraction",
    "follower_apply",
    "generate_scenario",
    "global_optimum",
    "gradient",
    "hca_merge",
    "initial_states",
    "intra_aggregate",
    "intra_round",
    "leader_round",
    "linear_combine",
    "load_config",
    "logistic_task",
    "loss",
    "mlp_task",
    "plain_cross_average",
    "quadratic_task",
    "rotate_leader",
    "run_experiment",
    "run_local_training",
    "sgd_step",
    "solve_dual_weights",
    "validation_loss",
    "__version__",
]
