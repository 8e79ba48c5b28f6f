"""
How much of the cache does the hash index touch?
================================================

With K bits per table and L tables, a key lands in the candidate set once at
least two tables agree with the query. Its probability of doing so depends
only on the angle between key and query. Averaged over a uniform angle, that
probability is the expected fraction of tokens read, i.e. the budget.
"""

from sampled_attention import WorkloadSpec, gen_workload, sampling_prob
from sampled_attention.harness import budget_table, format_budget_grid

###############################################################################
# The inclusion probability as a function of the collision probability p.

for p in (0.5, 0.7, 0.8, 0.9, 0.95):
    print(f"p={p:.2f}: u(K=10, L=150) = {sampling_prob(p, 10, 150):.6f}")

###############################################################################
# The theoretical budget grid, then the measured fraction (in parentheses) on a
# clustered workload. The measured fraction depends on how the keys and the
# query are actually spread, not only on K and L.

print()
print(format_budget_grid(budget_table([8, 10], [75, 150, 300], 2)))

workload = gen_workload(WorkloadSpec("cone", n=2048, d=64, temperature=2.0, seed=5))
print()
print(format_budget_grid(budget_table([8, 10], [75, 150, 300], 2, workload=workload, reseeds=5)))
