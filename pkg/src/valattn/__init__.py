"""Kernel attention, value-aware sparse-approximation oracles, and practical
approximators (sliding window, LSH, ORF) with an error-measurement harness."""
from .approximators import (
    LshConfig,
    OrfConfig,
    lsh_attention,
    lsh_hash,
    orf_attention,
    orf_features,
    run_approximator,
    sliding_window_attention,
)
from .core import (
    AttentionInstance,
    Distribution,
    KernelSpec,
    RngStream,
    SelectionPlan,
    SimplexCombination,
    SolverError,
    ValidationError,
    gaussian_matrix,
    make_instance,
    make_plan,
)
from .engine import exact_attention, sparse_attention
from .kernels import SkewStats, attention_weights, feature_map, kernel_score, skew_stats
from .metrics import ApproximationReport, compare, error_curve
from .oracles import (
    caratheodory_reduce,
    optimal_v_aware,
    optimal_v_aware_1,
    optimal_v_oblivious,
    ranking_compare,
    simplex_lsq,
    single_value_objective,
    single_value_objectives,
    top_r_selection,
)

__version__ = "0.1.0"
