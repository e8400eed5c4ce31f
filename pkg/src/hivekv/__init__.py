"""BUZZ KV-cache eviction and baselines over a small deterministic attention engine."""

from .attention import AttentionModel, ScoreTracker, StepOutput, attention_scale, decode_step, project_token, update_scores
from .cache import BuzzConfig, CacheState, KvEntry
from .errors import HivekvError, InvariantError, StateError
from .estimator import check_limsup_bounds, entropy_probe, optimal_ratio, simulate_recursion
from .numeric import matvec, seeded_gaussian_matrix, softmax
from .policies import (
    EvictionOutcome,
    Policy,
    baseline_evict,
    buzz_evict,
    interval_sample,
    local_max_sample,
    prefill_compact,
)
from .workload import ApproxReport, Workload, generate_workload, match_budget, positional_coverage, run_experiment

__version__ = "0.1.0"
