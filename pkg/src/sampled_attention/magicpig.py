"""LSH-sampled attention with a static sink/local cache.

The sink and local-window tokens are always attended exactly. The remaining
("dynamic") tokens live in an ``LshIndex``; the ones that collide with the
query form the sample ``S``. Sampled logits are corrected by ``-log u_i`` and a
single softmax runs over ``S`` together with the static tokens.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import AttentionEstimate, AttentionWorkload, attention_logits, softmax
from .errors import ArgumentError, DegenerateError
from .lsh import CandidateSet, LshConfig, LshIndex, build_index, query_candidates

U_FLOOR = 1e-300


@dataclass(frozen=True)
class StaticCachePolicy:
    sink_count: int = 4
    local_window: int = 64

    def __post_init__(self):
        if self.sink_count < 0 or self.local_window < 0:
            raise ArgumentError("sink_count and local_window must be nonnegative")


@dataclass(frozen=True)
class MagicPigReport:
    estimate: AttentionEstimate
    sampled_count: int
    static_count: int
    sampled_indices: np.ndarray
    sampling_probs: np.ndarray
    empty_sample_flag: bool


def partition_static(n: int, policy: StaticCachePolicy) -> tuple[np.ndarray, np.ndarray]:
    """Split ``0..n-1`` into the static set (first sinks + last local window) and the rest."""
    if n < 1:
        raise ArgumentError(f"n must be positive, got {n}")
    is_static = np.zeros(n, dtype=bool)
    is_static[: min(policy.sink_count, n)] = True
    if policy.local_window > 0:
        is_static[max(n - policy.local_window, 0):] = True
    return np.flatnonzero(is_static), np.flatnonzero(~is_static)


def build_dynamic_index(
    workload: AttentionWorkload, policy: StaticCachePolicy, config: LshConfig
) -> LshIndex | None:
    """Index the non-static keys of ``workload``; ``None`` if every token is static."""
    _, dynamic = partition_static(workload.n, policy)
    if len(dynamic) == 0:
        return None
    return build_index(workload.keys[dynamic], config, token_ids=dynamic)


def _check_disjoint(n, candidates: CandidateSet, static):
    if len(candidates) and (candidates.indices.min() < 0 or candidates.indices.max() >= n):
        raise ArgumentError("candidate index out of range")
    if len(static) and (np.min(static) < 0 or np.max(static) >= n):
        raise ArgumentError("static index out of range")
    if np.intersect1d(candidates.indices, static).size:
        raise ArgumentError("candidate set and static set overlap")


def _fused_output(workload, candidates: CandidateSet, static):
    u = np.asarray(candidates.probs, dtype=np.float64)
    keep = u > 0
    idx = candidates.indices[keep]
    u = np.maximum(u[keep], U_FLOOR)
    static = np.asarray(static, dtype=np.int64)
    rows = np.concatenate([idx, static])
    if len(rows) == 0:
        raise DegenerateError("no sampled and no static tokens to attend to")
    logits = attention_logits(workload)
    corrected = np.concatenate([logits[idx] - np.log(u), logits[static]])
    return softmax(corrected) @ workload.values[rows], idx, u


def estimate_given_candidates(
    workload: AttentionWorkload, candidates: CandidateSet, static=()
) -> np.ndarray:
    """Bias-corrected attention output for a fixed sample ``S`` and static set ``T``.

    ``softmax([logit_S - log u_S, logit_T]) @ [V_S; V_T]``. Candidates with
    ``u = 0`` are dropped; the rest have ``u`` floored at 1e-300 before the log.
    """
    static = np.asarray(static, dtype=np.int64)
    _check_disjoint(workload.n, candidates, static)
    return _fused_output(workload, candidates, static)[0]


def magicpig_estimate(
    workload: AttentionWorkload,
    index: LshIndex | None,
    policy: StaticCachePolicy = StaticCachePolicy(),
) -> MagicPigReport:
    """Query ``index`` with ``q`` and fuse the sampled tokens with the static cache.

    ``index`` must cover exactly the dynamic tokens (see ``build_dynamic_index``);
    pass ``None`` when there are none. If nothing is sampled the output falls
    back to static-only attention and ``empty_sample_flag`` is set.
    """
    n = workload.n
    static, dynamic = partition_static(n, policy)
    if index is None:
        if len(dynamic):
            raise ArgumentError("an index over the dynamic tokens is required")
        candidates = CandidateSet(np.zeros(0, np.int64), np.zeros(0, np.int64), np.zeros(0))
    else:
        if not np.array_equal(np.sort(index.token_ids), dynamic):
            raise ArgumentError("index must be built over exactly the dynamic tokens")
        if index.d != workload.d:
            raise ArgumentError(f"index dimension {index.d} != workload dimension {workload.d}")
        candidates = query_candidates(index, workload.q)
    _check_disjoint(n, candidates, static)
    output, sampled, u = _fused_output(workload, candidates, static)
    touched = len(sampled) + len(static)
    return MagicPigReport(
        estimate=AttentionEstimate(
            output=output,
            unique_budget=touched,
            cost1=0.0,
            cost2=touched / n,
            method_tag="magicpig",
        ),
        sampled_count=len(sampled),
        static_count=len(static),
        sampled_indices=sampled,
        sampling_probs=u,
        empty_sample_flag=len(sampled) == 0,
    )
