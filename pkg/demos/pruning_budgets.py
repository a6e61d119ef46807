"""
Choosing which experts to keep
==============================

Metrics turn counters into per-layer scores. A budget says how many experts
survive and how they split between encoder and decoder. An algorithm then
picks the experts.
"""
# %%
import numpy as np

from moeprune import stats as gs
from moeprune.pruning import (Budget, compute_metric, normalize_per_layer, prune_fixed_per_layer,
                              prune_global_threshold, solve_global_threshold, MetricTable)

# %%
# Budgets at the reference scale: 12 MoE layers of 128 experts.

for label, b in [
    ("75% balanced", Budget.from_rate(0.75, 1536, layers=(6, 6))),
    ("75% at 5:3", Budget.from_rate(0.75, 1536, layers=(6, 6), split="ratio", ratio=(5, 3))),
    ("80% at 3:1", Budget.from_rate(0.8, 1536, layers=(6, 6), split="ratio", ratio=(3, 1))),
]:
    print(f"{label:12s} keep {b.total_retain}, per layer {b.per_layer_quotas(6, 6, 128)}")

# %%
# 80% of 1536 is not a whole number of experts per layer at 3:1, so the
# budget rounds down to 288 (36 + 12 per layer), which prunes 81.25%.

# %%
# Scores for a small two-layer table. Importance multiplies top-1 frequency
# by exp(mean confidence), which separates experts that are picked equally
# often but with different certainty.

s = gs.ExpertStats.empty([0, 1], 4)
s.top1_count[:] = [[40, 40, 15, 5], [25, 25, 25, 25]]
s.top2_count[:] = [[80, 60, 40, 20], [50, 50, 50, 50]]
s.conf_sum[:] = [[36, 16, 6, 1], [20, 15, 10, 5]]
s.gate_sum[:] = [[50, 30, 15, 5], [30, 25, 25, 20]]
s.token_count[:] = 100
table = normalize_per_layer(compute_metric(gs.finalize(s), "importance", {0: "encoder", 1: "decoder"}))
print(np.round(table.values, 3))

# %%
# Fixed per layer keeps the same number everywhere.

print(prune_fixed_per_layer(table, Budget(4, min_per_layer=1)).layers)

# %%
# The global threshold finds one importance-mass level shared by every layer,
# so peaked layers keep fewer experts than flat ones.

mask = prune_global_threshold(table, 5, min_per_layer=1)
print(mask.layers)

# %%
# The worked example: at theta = 0.9 the first layer needs two experts and
# the second three.

ex = MetricTable("importance", (0, 1), np.array([[0.6, 0.3, 0.1, 0.0], [0.4, 0.3, 0.2, 0.1]]), normalized=True)
sol = solve_global_threshold(ex, 5, 1)
print(sol.theta, sol.kept)
