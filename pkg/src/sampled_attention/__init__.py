"""Sampling-based attention estimation: TopK, oracle sampling, SNIS and LSH sampling."""

from .core import (
    AttentionEstimate,
    AttentionScores,
    AttentionWorkload,
    attention_scores,
    full_attention,
    relative_error,
    softmax,
    topk_attention,
)
from .errors import (
    ArgumentError,
    AttentionError,
    ConfigError,
    DegenerateError,
    DistributionError,
    FormatError,
    InputValidationError,
    UnsupportedDimensionError,
)
from .lsh import (
    CandidateSet,
    LshConfig,
    LshIndex,
    build_index,
    center_keys,
    collision_prob,
    expected_budget,
    load_index,
    mips_transform,
    query_candidates,
    sampling_prob,
    save_index,
    simhash_encode,
)
from .magicpig import (
    MagicPigReport,
    StaticCachePolicy,
    build_dynamic_index,
    estimate_given_candidates,
    magicpig_estimate,
    partition_static,
)
from .rng import RandomSource
from .sampling import (
    DrawMultiset,
    ProposalDistribution,
    attention_proposal,
    expected_unique_count,
    optimal_snis_proposal,
    oracle_estimate,
    oracle_sample,
    oracle_theoretical_stddev,
    snis_estimate,
    snis_variance_estimate,
    uniform_proposal,
    value_norm_proposal,
)
from .workloads import WorkloadSpec, gen_workload, read_workload, write_workload, zoo_workload

__version__ = "0.1.0"
