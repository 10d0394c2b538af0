"""Greedy stage-wise network enlarging under a MACs budget."""

__version__ = "0.1.0"

from .costs import MacsBreakdown, block_macs, conv_macs, network_macs, params_count
from .estimator import (
    EvaluationResult,
    EvaluatorError,
    ExternalEvaluator,
    ExternalRef,
    SurrogateParams,
    SurrogateRef,
    calibrate,
    spearman_rho,
    surrogate_accuracy,
)
from .growth import (
    Candidate,
    GrowthParams,
    generate_candidates,
    grow_resolution,
    proportional_collection,
)
from .model import (
    ArchConfig,
    GhostBlock,
    MBConv,
    NetworkTemplate,
    PlainConv,
    ResidualBasic,
    StageTemplate,
    ValidationError,
    base_config,
    dominates,
    load_template,
    save_template,
)
from .search import (
    EmptyCandidateSetError,
    IterationRecord,
    SearchSpec,
    SearchState,
    budget_schedule,
    run_search,
    select_best,
)
