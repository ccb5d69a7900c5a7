"""Two-stage tensor screening for factorial experiments.

Low-rank Tucker completion prunes factor levels by their marginal
contribution, then sequential halving picks a winner among the surviving
combinations.
"""
from .completion import CompletionConfig, CompletionResult, ObservationLog, complete
from .diagnostics import diagnose, simple_regret
from .environment import Environment, GroundTruth, derive_seed, gen_additive, gen_cp, gen_tucker
from .errors import BudgetExhausted, InvalidArgument, NumericFailure, ParseError
from .harness import ExperimentConfig, default_paper_config, run_experiment, summarize
from .ingestion import cpv_rank, ingest
from .policies import ActiveDesign, TwoStageConfig, one_shot, sequential_halving, two_stage, vector_sh
from .tensor_core import TuckerFactors, hosvd_truncate, mode_product, unfold

__all__ = [
    "ActiveDesign", "BudgetExhausted", "CompletionConfig", "CompletionResult", "Environment",
    "ExperimentConfig", "GroundTruth", "InvalidArgument", "NumericFailure", "ObservationLog",
    "ParseError", "TuckerFactors", "TwoStageConfig", "complete", "cpv_rank", "default_paper_config",
    "derive_seed", "diagnose", "gen_additive", "gen_cp", "gen_tucker", "hosvd_truncate", "ingest",
    "mode_product", "one_shot", "run_experiment", "sequential_halving", "simple_regret",
    "summarize", "two_stage", "unfold", "vector_sh",
]
