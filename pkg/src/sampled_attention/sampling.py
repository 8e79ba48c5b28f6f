"""Monte Carlo attention estimators.

Oracle sampling draws tokens iid from the exact attention distribution and
averages their values; self-normalized importance sampling (SNIS) draws from a
proposal ``u`` and reweights by ``exp(logit) / u``. Both only touch the unique
tokens they draw, which is what ``unique_budget`` / ``cost2`` report.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal, NamedTuple

import numpy as np

from .core import (
    SCORE_COST,
    AttentionEstimate,
    AttentionWorkload,
    attention_logits,
    attention_scores,
    full_attention,
)
from .errors import (
    ArgumentError,
    DegenerateError,
    DistributionError,
    UnsupportedDimensionError,
)
from .rng import as_generator

ProposalKind = Literal["attention_score", "score_value_norm", "lsh_collision", "custom"]

_NORM_TOL = 1e-9


@dataclass(frozen=True)
class DrawMultiset:
    """Deduplicated draws: unique ``indices`` with multiplicities ``counts``."""

    indices: np.ndarray
    counts: np.ndarray

    @property
    def total_draws(self) -> int:
        return int(self.counts.sum())

    @property
    def unique_count(self) -> int:
        return len(self.indices)

    def as_pairs(self):
        return [(int(i), int(c)) for i, c in zip(self.indices, self.counts)]

    @classmethod
    def from_pairs(cls, pairs) -> "DrawMultiset":
        merged: dict[int, int] = {}
        for i, c in pairs:
            if c < 1:
                raise ArgumentError(f"multiplicity must be positive, got {c} for index {i}")
            merged[int(i)] = merged.get(int(i), 0) + int(c)
        idx = np.array(sorted(merged), dtype=np.int64)
        return cls(idx, np.array([merged[i] for i in idx], dtype=np.int64))


@dataclass(frozen=True)
class ProposalDistribution:
    probs: np.ndarray
    kind: ProposalKind = "custom"

    def __post_init__(self):
        probs = np.asarray(self.probs, dtype=np.float64)
        if probs.ndim != 1 or not np.all(np.isfinite(probs)):
            raise DistributionError("proposal must be a finite 1-D vector")
        if np.any(probs < 0):
            raise DistributionError("proposal has negative entries")
        if self.kind == "lsh_collision":
            if np.any(probs > 1):
                raise DistributionError("collision probabilities must lie in [0, 1]")
        elif self.kind in ("attention_score", "score_value_norm"):
            if abs(probs.sum() - 1.0) > _NORM_TOL:
                raise DistributionError(f"{self.kind} proposal sums to {probs.sum()!r}")
        object.__setattr__(self, "probs", probs)


def attention_proposal(workload: AttentionWorkload) -> ProposalDistribution:
    return ProposalDistribution(attention_scores(workload).weights, "attention_score")


def value_norm_proposal(workload: AttentionWorkload) -> ProposalDistribution:
    """``u_i ∝ w_i ||v_i||``, the minimum-variance unbiased oracle proposal.

    Exposed for comparison only; plain attention-score sampling is the default
    everywhere else.
    """
    w = attention_scores(workload).weights
    u = w * np.linalg.norm(workload.values, axis=1)
    total = u.sum()
    if total == 0:
        raise DegenerateError("all attended value rows are zero")
    return ProposalDistribution(u / total, "score_value_norm")


def uniform_proposal(n: int) -> ProposalDistribution:
    return ProposalDistribution(np.full(n, 1.0 / n), "custom")


def optimal_snis_proposal(workload: AttentionWorkload) -> ProposalDistribution:
    """``u_i ∝ exp(logit_i) |v_i - o|`` for a ``d = 1`` workload."""
    if workload.d != 1:
        raise UnsupportedDimensionError("optimal SNIS proposal is defined for d = 1 only")
    w = attention_scores(workload).weights
    o = w @ workload.values[:, 0]
    u = w * np.abs(workload.values[:, 0] - o)
    total = u.sum()
    if total == 0:
        raise DegenerateError("every value equals the attention output")
    return ProposalDistribution(u / total, "custom")


def _check_probability_vector(weights, tol=1e-6) -> np.ndarray:
    weights = np.asarray(weights, dtype=np.float64)
    if weights.ndim != 1 or len(weights) == 0:
        raise DistributionError("weights must be a non-empty 1-D vector")
    if not np.all(np.isfinite(weights)) or np.any(weights < 0):
        raise DistributionError("weights must be finite and nonnegative")
    if abs(weights.sum() - 1.0) > tol:
        raise DistributionError(f"weights sum to {weights.sum()!r}, expected 1")
    return weights


def _check_budget(budget) -> int:
    if not isinstance(budget, (int, np.integer)) or budget < 1:
        raise ArgumentError(f"budget must be a positive integer, got {budget!r}")
    return int(budget)


def categorical_draws(weights: np.ndarray, budget: int, gen: np.random.Generator) -> np.ndarray:
    """``budget`` iid draws by inverse CDF on the prefix sums of ``weights``."""
    cdf = np.cumsum(weights)
    u = gen.random(budget) * cdf[-1]
    idx = np.searchsorted(cdf, u, side="right")
    return np.minimum(idx, len(weights) - 1)


def oracle_sample(weights, budget: int, rng) -> DrawMultiset:
    """Draw ``budget`` tokens iid from ``weights`` and deduplicate them."""
    weights = _check_probability_vector(weights)
    budget = _check_budget(budget)
    draws = categorical_draws(weights, budget, as_generator(rng))
    idx, counts = np.unique(draws, return_counts=True)
    return DrawMultiset(idx.astype(np.int64), counts.astype(np.int64))


def _check_draws(draws: DrawMultiset, n: int):
    if draws.unique_count == 0:
        raise ArgumentError("draw multiset is empty")
    if draws.indices.min() < 0 or draws.indices.max() >= n:
        raise ArgumentError(f"draw index out of range [0, {n})")


def oracle_estimate(
    workload: AttentionWorkload,
    draws: DrawMultiset,
    proposal: ProposalDistribution | None = None,
) -> AttentionEstimate:
    """``sum_i f_i / B * v_i`` over the unique drawn tokens.

    With ``proposal`` given (e.g. ``value_norm_proposal``), draws are assumed to
    come from it and each term is reweighted by ``w_i / u_i`` to stay unbiased.
    """
    n = workload.n
    _check_draws(draws, n)
    coef = draws.counts / draws.total_draws
    if proposal is not None:
        w = attention_scores(workload).weights
        coef = coef * w[draws.indices] / proposal.probs[draws.indices]
    return AttentionEstimate(
        output=coef @ workload.values[draws.indices],
        unique_budget=draws.unique_count,
        cost1=SCORE_COST,
        cost2=draws.unique_count / n,
        method_tag="oracle",
    )


def oracle_theoretical_stddev(workload: AttentionWorkload, budget: int) -> float:
    """Square root of the covariance trace of the oracle estimator at budget ``B``."""
    budget = _check_budget(budget)
    w = attention_scores(workload).weights
    o = w @ workload.values
    second_moment = w @ np.einsum("ij,ij->i", workload.values, workload.values)
    return float(np.sqrt(max(second_moment - o @ o, 0.0) / budget))


class UniqueCount(NamedTuple):
    expected: float
    bound: float


def expected_unique_count(weights, budget: int) -> UniqueCount:
    """Expected number of distinct tokens in ``B`` draws, with the ``1 + B*eps`` bound."""
    weights = _check_probability_vector(weights)
    budget = _check_budget(budget)
    miss = np.clip(1.0 - weights, 0.0, 1.0)
    expected = len(weights) - np.sum(miss**budget)
    eps = 1.0 - weights.max()
    return UniqueCount(float(expected), float(1.0 + budget * eps))


def snis_estimate(
    workload: AttentionWorkload,
    proposal: ProposalDistribution,
    budget: int,
    rng,
    return_draws: bool = False,
):
    """Self-normalized importance sampling estimate of the attention output.

    The ratio ``exp(logit_i) / u_i`` is formed in log space and exponentiated
    after subtracting its maximum over the drawn tokens.
    """
    n = workload.n
    if proposal.kind == "lsh_collision":
        raise DistributionError("SNIS needs a normalized proposal; got lsh_collision")
    if len(proposal.probs) != n:
        raise ArgumentError(f"proposal has length {len(proposal.probs)}, workload n={n}")
    draws = oracle_sample(proposal.probs, budget, rng)
    logits = attention_logits(workload)[draws.indices]
    u = proposal.probs[draws.indices]
    log_ratio = logits - np.log(u)
    r = draws.counts * np.exp(log_ratio - log_ratio.max())
    total = r.sum()
    if not total > 0:
        raise DegenerateError("importance weights sum to zero")
    est = AttentionEstimate(
        output=(r / total) @ workload.values[draws.indices],
        unique_budget=draws.unique_count,
        cost1=SCORE_COST,
        cost2=draws.unique_count / n,
        method_tag="snis",
    )
    return (est, draws) if return_draws else est


def snis_variance_estimate(
    workload: AttentionWorkload, proposal: ProposalDistribution, budget: int
) -> float:
    """Approximate SNIS variance ``E_u[(w_i / u_i)^2 (v_i - o)^2] / B`` for ``d = 1``.

    The expectation is summed exactly over all ``n`` tokens. Tokens with
    ``u_i = 0`` contribute nothing when ``w_i (v_i - o) = 0`` and make the
    variance infinite otherwise.
    """
    if workload.d != 1:
        raise UnsupportedDimensionError(
            f"variance approximation is implemented for d = 1 only, got d={workload.d}"
        )
    budget = _check_budget(budget)
    if len(proposal.probs) != workload.n:
        raise ArgumentError("proposal length does not match workload")
    w = attention_scores(workload).weights
    v = workload.values[:, 0]
    o = full_attention(workload).output[0]
    num = (w * (v - o)) ** 2
    u = proposal.probs
    support = u > 0
    if np.any(num[~support] > 0):
        return float("inf")
    return float(np.sum(num[support] / u[support]) / budget)
