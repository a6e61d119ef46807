"""
Counting expert usage
=====================

Pruning decisions start from counters gathered while decoding a held-out
set: how often each expert is first choice, how often it is in the top two,
and how confident the gate was when it was first choice.
"""
# %%
import numpy as np
import torch

from moeprune import stats as gs
from moeprune.moe.gating import route

rng = np.random.default_rng(0)

# %%
# Simulate routing for 10,000 tokens in two layers with 8 experts.
# Each layer's gate favours a couple of experts.

counts = gs.ExpertStats.empty([0, 1], 8)
for lid in (0, 1):
    bias = rng.normal(scale=1.5, size=8)
    logits = torch.as_tensor(rng.normal(size=(10_000, 8)) + bias)
    r = route(logits)
    counts.record_many(lid, r.probs.numpy(), r.top_idx.numpy(), r.top_vals.numpy())

# %%
# Fractions per layer: top-1 sums to one and top-2 to two.

fin = gs.finalize(counts)
print("top1", np.round(fin.top1, 3))
print("row sums", fin.top1.sum(axis=1), fin.top2.sum(axis=1))

# %%
# Counters from separate shards merge by plain addition, so statistics can be
# gathered in pieces and combined in any order.

halves = [gs.ExpertStats.empty([0, 1], 8) for _ in range(2)]
for lid in (0, 1):
    r = route(torch.as_tensor(rng.normal(size=(100, 8))))
    halves[0].record_many(lid, r.probs[:50].numpy(), r.top_idx[:50].numpy(), r.top_vals[:50].numpy())
    halves[1].record_many(lid, r.probs[50:].numpy(), r.top_idx[50:].numpy(), r.top_vals[50:].numpy())
a, b = gs.merge(*halves), gs.merge(*halves[::-1])
print(np.array_equal(a.top1_count, b.top1_count))

# %%
# Stats files are plain TSV keyed by granularity.

key = gs.StatsKey("lang_pair", "encoder", "la-lb")
print(gs.dump_stats({key: counts}).splitlines()[:3])
