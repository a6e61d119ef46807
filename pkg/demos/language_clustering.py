"""
Clustering languages by the experts they use
============================================

Each language gets a vector of expert importances over all decoder MoE
layers. Average-linkage clustering of these vectors gives a dendrogram,
written as Newick and SVG.
"""
# %%
import numpy as np

from moeprune import stats as gs
from moeprune.analysis import (ExpertSet, build_importance_vectors, emit_dendrogram, hcluster, jaccard,
                               similarity_matrix, similarity_tsv)
from moeprune.mask import PruningMask

rng = np.random.default_rng(1)

# %%
# Three "families": languages in a family share a preference for the same
# experts, plus noise.

families = {"north": ["aa", "ab"], "south": ["ba", "bb", "bc"]}
centers = {f: rng.normal(scale=2.0, size=(2, 8)) for f in families}
lang_stats = {}
for fam, langs in families.items():
    for lang in langs:
        s = gs.ExpertStats.empty([2, 3], 8)
        for row, lid in enumerate((2, 3)):
            logits = centers[fam][row] + rng.normal(scale=0.5, size=(500, 8))
            probs = np.exp(logits) / np.exp(logits).sum(axis=1, keepdims=True)
            idx = np.argsort(-probs, axis=1, kind="stable")[:, :2]
            s.record_many(lid, probs, idx, np.take_along_axis(probs, idx, 1))
        lang_stats[lang] = s

tree = hcluster(build_importance_vectors(lang_stats, "decoder"))
groups = {lang: fam for fam, langs in families.items() for lang in langs}
newick, svg = emit_dendrogram(tree, groups)
print(newick)

# %%
# Jaccard similarity between the expert sets that two masks keep.

m1 = PruningMask({2: (0, 1, 2, 3), 3: (0, 1, 2, 3)}, 8, {2: "decoder", 3: "decoder"})
m2 = PruningMask({2: (0, 1, 2, 4), 3: (0, 1, 5, 6)}, 8, {2: "decoder", 3: "decoder"})
a, b = ExpertSet.from_mask(m1, "decoder"), ExpertSet.from_mask(m2, "decoder")
print(jaccard(a, b))
print(similarity_tsv(*similarity_matrix({"x": a, "y": b})))
