"""Exact attention, TopK attention and the numeric primitives shared by all estimators.

Everything here works in float64 on a single decoding step: one query ``q``
attending over ``n`` cached keys/values of head dimension ``d``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np

from .errors import ArgumentError, DegenerateError, InputValidationError

MethodTag = Literal["full", "topk", "oracle", "snis", "magicpig"]

# Search cost charged to estimators that need every q.k score (TopK, oracle
# sampling): computing scores is half of full attention's FLOPs.
SCORE_COST = 0.5


@dataclass(frozen=True)
class AttentionWorkload:
    """One decoding step: query ``q`` (d,), ``keys`` (n, d), ``values`` (n, d)."""

    q: np.ndarray
    keys: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        q = np.asarray(self.q, dtype=np.float64)
        keys = np.asarray(self.keys, dtype=np.float64)
        values = np.asarray(self.values, dtype=np.float64)
        if q.ndim != 1:
            raise InputValidationError(f"q must be a vector, got shape {q.shape}")
        if keys.ndim != 2 or values.ndim != 2:
            raise InputValidationError("keys and values must be 2-D matrices")
        if keys.shape != values.shape:
            raise InputValidationError(
                f"keys {keys.shape} and values {values.shape} must have the same shape"
            )
        n, d = keys.shape
        if n < 1 or d < 1:
            raise InputValidationError(f"need n >= 1 and d >= 1, got n={n}, d={d}")
        if q.shape[0] != d:
            raise InputValidationError(f"q has length {q.shape[0]}, keys have d={d}")
        for name, arr in (("q", q), ("keys", keys), ("values", values)):
            if not np.all(np.isfinite(arr)):
                raise InputValidationError(f"{name} contains non-finite entries")
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "keys", keys)
        object.__setattr__(self, "values", values)

    @property
    def n(self) -> int:
        return self.keys.shape[0]

    @property
    def d(self) -> int:
        return self.keys.shape[1]


@dataclass(frozen=True)
class AttentionScores:
    """Scaled logits ``q.k_i / sqrt(d)``, their softmax, and ``log Z``.

    ``log_normalizer`` is ``log(sum(exp(logits)))`` evaluated after shifting by
    the max logit, so ``Z`` itself never has to be materialized.
    """

    logits: np.ndarray
    weights: np.ndarray
    log_normalizer: float

    @property
    def normalizer(self) -> float:
        return float(np.exp(self.log_normalizer))


@dataclass(frozen=True)
class AttentionEstimate:
    output: np.ndarray
    unique_budget: int
    cost1: float
    cost2: float
    method_tag: MethodTag


def attention_logits(workload: AttentionWorkload) -> np.ndarray:
    return workload.keys @ workload.q / np.sqrt(workload.d)


def softmax(logits: np.ndarray) -> np.ndarray:
    """Max-shifted softmax of a 1-D array."""
    logits = np.asarray(logits, dtype=np.float64)
    z = np.exp(logits - logits.max())
    return z / z.sum()


def attention_scores(workload: AttentionWorkload) -> AttentionScores:
    logits = attention_logits(workload)
    m = logits.max()
    shifted = np.exp(logits - m)
    total = shifted.sum()
    return AttentionScores(
        logits=logits, weights=shifted / total, log_normalizer=float(m + np.log(total))
    )


def full_attention(workload: AttentionWorkload) -> AttentionEstimate:
    """Exact ``softmax(q K^T / sqrt(d)) V``."""
    w = attention_scores(workload).weights
    return AttentionEstimate(
        output=w @ workload.values,
        unique_budget=workload.n,
        cost1=0.0,
        cost2=1.0,
        method_tag="full",
    )


def topk_indices(logits: np.ndarray, k: int) -> np.ndarray:
    """Indices of the ``k`` largest logits; ties go to the lower index."""
    order = np.argsort(-np.asarray(logits), kind="stable")
    return np.sort(order[:k])


def topk_attention(workload: AttentionWorkload, k: int) -> AttentionEstimate:
    """Attention restricted to the ``k`` highest-weight tokens, renormalized.

    ``cost1`` is reported as 0.5: selecting the top tokens exactly needs every
    ``q.k_i`` score.
    """
    n = workload.n
    if not isinstance(k, (int, np.integer)) or not 1 <= k <= n:
        raise ArgumentError(f"k must be an integer in [1, {n}], got {k!r}")
    k = int(k)
    logits = attention_logits(workload)
    idx = topk_indices(logits, k)
    w = softmax(logits[idx])
    return AttentionEstimate(
        output=w @ workload.values[idx],
        unique_budget=k,
        cost1=SCORE_COST,
        cost2=k / n,
        method_tag="topk",
    )


def relative_error(estimate, reference) -> float:
    """``||estimate - reference||_2 / ||reference||_2``."""
    estimate = np.asarray(estimate, dtype=np.float64)
    reference = np.asarray(reference, dtype=np.float64)
    if estimate.shape != reference.shape:
        raise InputValidationError(
            f"shape mismatch: estimate {estimate.shape} vs reference {reference.shape}"
        )
    ref_norm = np.linalg.norm(reference)
    if ref_norm == 0:
        raise DegenerateError("reference vector has zero norm")
    return float(np.linalg.norm(estimate - reference) / ref_norm)
