"""Goal-directed Bayesian experimental design for causal models."""

__version__ = "0.1.0"

from .scm import (  # noqa: F401
    Dag,
    Design,
    ErdosRenyi,
    FixedGraph,
    FromFile,
    History,
    Mechanism,
    MechanismPrior,
    Query,
    ScaleFree,
    Scm,
    load_adjacency,
    sample_dag,
    sample_mechanism,
    sample_query_value,
    simulate,
)
from .oracle import (  # noqa: F401
    GaussianLaw,
    GaussianMixtureLaw,
    NodePosterior,
    incremental_eig,
    interventional_law,
    prior_belief,
    update_belief,
    update_node_posterior,
)
from .autodiff import Tensor  # noqa: F401
from .estimators import (  # noqa: F401
    Estimate,
    RolloutBatch,
    bound_gap_kl,
    estimate_bound,
    estimate_nmc,
)
from .evaluation import (  # noqa: F401
    EvalReport,
    expected_shd,
    f1_edges,
    random_policy,
    shd,
    stage_sweep,
)
from .networks import HistoryEncoder, PolicyNetwork  # noqa: F401
from .posteriors import (  # noqa: F401
    AmortizedFlowPosterior,
    AmortizedGraphPosterior,
    CouplingFlow,
    EdgeBernoulli,
    graph_sample,
)
from .trainer import TrainConfig, Trainer, parse_config  # noqa: F401
from .configs import load_config, named_config  # noqa: F401
