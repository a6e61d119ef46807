"""
chrF++ and memory arithmetic
============================

Translation quality is scored with chrF++ (character 6-grams plus word
bigrams, beta 2). Memory is parameters times two bytes, where pruning
removes whole experts.
"""
# %%
from moeprune.chrf import chrf_pp, corpus_chrf
from moeprune.evaluation import MemorySpec, estimate_memory
from moeprune.pruning import Budget

# %%
print(chrf_pp("the cat sat", "the cat sat"))
print(chrf_pp("cat sat", "the cat sat"))
print(chrf_pp("", "the cat sat"))
print(corpus_chrf(["cat sat", "abc"], ["the cat sat", "abd"]))

# %%
# A dense 3.3B model in half precision.

print(f"{estimate_memory(MemorySpec(3.3e9, 0, 0)).gib:.2f} GiB")

# %%
# The 54.5B MoE model, and what pruning leaves of it.

spec = MemorySpec.nllb_moe()
print(f"unpruned {estimate_memory(spec).gib:.1f} GiB")
for rate, kw in [(0.75, {}), (0.8, dict(split="ratio", ratio=(3, 1)))]:
    b = Budget.from_rate(rate, 1536, layers=(6, 6), **kw)
    print(f"{rate:.0%} pruned, {b.total_retain} experts kept: "
          f"{estimate_memory(spec, retained_experts=b.total_retain).gib:.1f} GiB")
