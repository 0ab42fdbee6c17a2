"""How the two samplers turn contribution scores into corruption sets.

Value-based sampling draws items in proportion to their score; rank-based
sampling uses ranks 1..M instead, which flattens the gaps between scores.
"""
import numpy as np

from fcgssl import build_plan, generate_synthetic, preprocess
from fcgssl.corruption import rank_weights, sample_rank_based, sample_value_based

scores = np.array([0.05, 0.1, 0.2, 0.3, 0.9])
print("scores      ", scores)
print("rank weights", rank_weights(scores))

draws_v = sample_value_based(scores, 2, rng=0, n_draws=100_000)
draws_r = sample_rank_based(scores, 2, rng=0, n_draws=100_000)
freq_v = np.bincount(draws_v.ravel(), minlength=5) / len(draws_v)
freq_r = np.bincount(draws_r.ravel(), minlength=5) / len(draws_r)
print("inclusion (value)", np.round(freq_v, 3))
print("inclusion (rank) ", np.round(freq_r, 3))

# a full plan on a graph: union for the input views, intersection for contrast
g = generate_synthetic("sbm", (20, 20), seed=3)
prep = preprocess(g)
plan = build_plan(prep.scores, g, r_N=0.3, r_E=0.3, seed=11)
print(f"|P_N|={len(plan.P_N)} |Q_N|={len(plan.Q_N)} -> "
      f"|S_N|={len(plan.S_N.nodes)}, masked in contrast view {len(plan.S_C.nodes)}")
print(f"|P_E|={len(plan.P_E)} |Q_E|={len(plan.Q_E)} -> "
      f"|S_E|={len(plan.S_E.edges)}, dropped in contrast view {len(plan.S_C.edges)}")
