"""
Top-2 gating and the MoE feed-forward layer
===========================================

A token is scored by a linear gate, softmaxed over the experts and sent to
the two best ones. Pruning an expert masks its logit to -inf, so it drops out
of the softmax instead of leaving a hole in the distribution.
"""
# %%
import numpy as np
import torch

from moeprune.moe import ModelConfig, MoEModel
from moeprune.moe.gating import gate_from_logits

# %%
# Four experts, no pruning: the two largest logits win.

d = gate_from_logits([2.0, 1.0, 0.0, -1.0])
print("probs", np.round(d.gate_probs, 4), "top", d.top1, d.top2)

# %%
# Keep only experts 2 and 3. Their gates are renormalized among themselves.

d = gate_from_logits([2.0, 1.0, 0.0, -1.0], retained=[2, 3])
print("probs", np.round(d.gate_probs, 4), "top", d.top1, d.top2)

# %%
# Equal logits tie, and the lower id goes first.

print(gate_from_logits([0.0, 0.0]).top1)

# %%
# Inside a model the selected outputs are mixed with the two gates rescaled
# to sum to one. Here is the first encoder MoE layer of the toy config.

torch.manual_seed(0)
model = MoEModel(ModelConfig())
x = torch.randn(model.config.d_model)
d = model.gate_forward(x, layer_id=0)
y = model.moe_layer_forward(x, layer_id=0)
print("experts", d.top1, d.top2, "output", tuple(y.shape))

# %%
# A model with 4 + 4 layers and an MoE block every second layer has four MoE
# layers: two in the encoder and two in the decoder.

print({info.layer_id: info.side for info in model.config.moe_layers})
