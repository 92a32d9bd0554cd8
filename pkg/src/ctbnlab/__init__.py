"""Structure learning for continuous-time and layered Bayesian networks.

The functional API lives in the submodules (``model``, ``simulate``,
``optim``, ``ctbn``, ``partial``, ``bn``, ``bench``, ``io``); the names
re-exported here are the stable surface.  Estimator-style wrappers are in
:mod:`ctbnlab.estimators`.
"""

__version__ = "0.1.0"

from ._util import split_seed, thread_count
from .model import (
    CtbnModel,
    EncodingScheme,
    ModelError,
    NodeFeatureMap,
    ParamSet,
    SufficientStats,
    Trajectory,
    cim_from_beta,
    collect_sufficient_stats,
    config_from_key,
    config_key,
    edges_from_beta,
    intensity,
)
from .simulate import (
    AmalgamatedSpace,
    ObservationSet,
    amalgamated_generator,
    gillespie_sample,
    observe,
    stationary_distribution,
)
from .optim import (
    DegenerateLossError,
    LassoPath,
    OptimizationError,
    SmoothLoss,
    bic_select,
    fista,
    gic_threshold,
    kkt_residuals,
    kkt_satisfied,
    lambda_max,
    lambda_path,
    soft_threshold,
)
from .ctbn import (
    CtbnLearnConfig,
    CtbnTransitionLoss,
    LearnResult,
    ctbn_subproblem_loss,
    learn_ctbn_full,
    penalized_dimension,
)
from .partial import (
    InfeasibleObservationError,
    PartialLearnConfig,
    RaoTehChain,
    SgdSchedule,
    SpgdDivergenceError,
    SpgdResult,
    UniformizationConfig,
    add_virtual_jumps,
    drop_virtual,
    ffbs,
    initial_trajectory,
    learn_ctbn_partial,
    mcmc_gradient,
    proximal_sgd,
    rao_teh_step,
    spgd_learn_partial,
)
from .bn import (
    BnLearnConfig,
    BnLearnResult,
    Dataset,
    GaussianNodeLoss,
    LayerPartition,
    LogisticNodeLoss,
    MultinomialNodeLoss,
    bn_node_loss,
    layers_from_dag,
    learn_bn,
    shd,
    simulate_gbn,
)
from .bench import (
    SUITES,
    BenchConfig,
    MetricsRow,
    SuiteResult,
    compute_metrics,
    make_model_m1,
    make_model_m2,
    make_model_m3,
    run_suite,
    write_results,
)
from .estimators import (
    BnStructureLearner,
    CtbnStructureLearner,
    PartialCtbnStructureLearner,
)
from .io import (
    bn_result_to_dict,
    learn_result_to_dict,
    load_model,
    load_observations,
    load_trajectory,
    save_model,
    save_observations,
    save_trajectory,
    sha256_file,
)

__all__ = [name for name in dir() if not name.startswith("_")]
