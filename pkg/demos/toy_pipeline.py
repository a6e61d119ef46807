"""
End to end on a small synthetic corpus
======================================

Generate a four-language corpus, train briefly, gather gate statistics on
the validation set, prune half the experts per language pair and compare
against the unpruned model and random pruning. A short run like this one
does not reach the accuracy of the default configuration; use
``moeprune pipeline`` for that.
"""
# %%
import logging
import tempfile
from dataclasses import replace

from moeprune import pipeline as pl

logging.basicConfig(level=logging.INFO, format="%(message)s")

out = tempfile.mkdtemp(prefix="moeprune-demo-")
config = replace(pl.PipelineConfig(), out=out, train_steps=300, eval_every=100, random_seeds=2)
result = pl.run_pipeline(config, with_random=True)

# %%
print(f"valid accuracy {result.valid_accuracy:.3f}")
print(f"unpruned chrF++ {result.baseline.mean_chrf:.2f}")
print(f"pruned chrF++   {result.pruned.mean_chrf:.2f}")
print("random chrF++  ", [round(r.mean_chrf, 2) for r in result.random])
print("artifacts in", out)
