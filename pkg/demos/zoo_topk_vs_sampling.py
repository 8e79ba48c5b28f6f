"""
The zoo: why the largest weights are not the whole story
=======================================================

A hundred tokens share the same attention weight, but their values differ:
ten of them carry 50, ten carry 20, ten carry 10 and the remaining seventy
carry 1. Attention output is the plain average, 8.7.

TopK has no way to rank tied scores by what they contribute, so it keeps the
first k tokens and renormalises over them. Sampling draws tokens in proportion
to their weight and stays unbiased at any budget.
"""

import numpy as np

from sampled_attention import (
    RandomSource,
    attention_scores,
    full_attention,
    oracle_estimate,
    oracle_sample,
    oracle_theoretical_stddev,
    topk_attention,
    zoo_workload,
)

zoo = zoo_workload()
truth = full_attention(zoo).output[0]
print(f"true average            : {truth:.4f}")

###############################################################################
# TopK keeps the first k of the tied tokens (lower index wins a tie), so the
# answer depends on where the cut lands relative to the value groups.

for k in (10, 20, 37, 47, 100):
    est = topk_attention(zoo, k).output[0]
    print(f"TopK(k={k:3d})             : {est:.4f}")

###############################################################################
# Oracle sampling: B draws from the attention weights, averaged with their
# multiplicities. The spread shrinks like 1/sqrt(B).

weights = attention_scores(zoo).weights
gen = RandomSource(seed=0).generator()
for B in (10, 20, 50):
    outs = np.array([oracle_estimate(zoo, oracle_sample(weights, B, gen)).output[0]
                     for _ in range(20_000)])
    print(f"sampling B={B:2d}: mean {outs.mean():.3f}, std {outs.std():.3f} "
          f"(theory {oracle_theoretical_stddev(zoo, B):.3f})")
