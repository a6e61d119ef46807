"""Top-2 softmax gating and the MoE feed-forward layer."""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np
import torch
from torch import nn
from torch.nn import functional as F


@dataclass(frozen=True)
class GateDecision:
    """Routing of one token through one MoE layer."""

    layer_id: int
    token_index: int
    gate_probs: np.ndarray
    top1: int
    top2: int
    gate_top1: float
    gate_top2: float


class Routing(NamedTuple):
    probs: torch.Tensor  # (..., N), zero on pruned experts
    top_idx: torch.Tensor  # (..., 2), first then second choice
    top_vals: torch.Tensor  # (..., 2)


def retained_bias(retained: Sequence[int] | None, num_experts: int, dtype=torch.float32) -> torch.Tensor | None:
    """Additive logit bias: 0 for retained experts, -inf for pruned ones.

    Returns None when every expert is retained so the unpruned path stays
    bit-for-bit identical.
    """
    if retained is None or len(retained) == num_experts:
        return None
    if len(retained) < 2:
        raise ValueError(f"top-2 gating needs at least 2 retained experts, got {len(retained)}")
    bias = torch.full((num_experts,), float("-inf"), dtype=dtype)
    bias[list(retained)] = 0.0
    return bias


def route(logits: torch.Tensor, bias: torch.Tensor | None = None) -> Routing:
    """Softmax over (retained) experts, then pick the two largest gates.

    Ties go to the lowest expert id: ``argmax`` returns the first maximum.
    """
    if bias is not None:
        logits = logits + bias.to(logits.dtype)
    probs = torch.softmax(logits, dim=-1)
    first = probs.argmax(dim=-1, keepdim=True)
    masked = probs.detach().scatter(-1, first, float("-inf"))
    if bias is not None:
        masked = masked.masked_fill(torch.isinf(bias), float("-inf"))
    second = masked.argmax(dim=-1, keepdim=True)
    top_idx = torch.cat([first, second], dim=-1)
    return Routing(probs, top_idx, probs.gather(-1, top_idx))


def gate_from_logits(logits, retained: Sequence[int] | None = None, layer_id: int = 0,
                     token_index: int = 0) -> GateDecision:
    """Route a single token given raw gate logits (a 1-d array of length N)."""
    logits = torch.as_tensor(np.asarray(logits, dtype=np.float64))
    bias = retained_bias(retained, logits.shape[-1], dtype=logits.dtype)
    r = route(logits, bias)
    return GateDecision(
        layer_id=layer_id,
        token_index=token_index,
        gate_probs=r.probs.numpy().copy(),
        top1=int(r.top_idx[0]),
        top2=int(r.top_idx[1]),
        gate_top1=float(r.top_vals[0]),
        gate_top2=float(r.top_vals[1]),
    )


def combination_weights(top_vals: torch.Tensor) -> torch.Tensor:
    """Renormalize the selected gates so they sum to one."""
    return top_vals / top_vals.sum(dim=-1, keepdim=True)


class FeedForward(nn.Module):
    def __init__(self, d_model: int, d_ffn: int):
        super().__init__()
        self.fc1 = nn.Linear(d_model, d_ffn)
        self.fc2 = nn.Linear(d_ffn, d_model)

    def forward(self, x):
        return self.fc2(F.relu(self.fc1(x)))


class MoELayer(nn.Module):
    """N expert FFNs behind a linear softmax gate; each token visits its top-2."""

    def __init__(self, d_model: int, d_ffn: int, num_experts: int):
        super().__init__()
        self.num_experts = num_experts
        self.gate = nn.Linear(d_model, num_experts, bias=False)
        self.experts = nn.ModuleList(FeedForward(d_model, d_ffn) for _ in range(num_experts))

    def forward(self, x: torch.Tensor, bias: torch.Tensor | None = None) -> tuple[torch.Tensor, Routing]:
        routing = route(self.gate(x), bias)
        weights = combination_weights(routing.top_vals)
        flat_x = x.reshape(-1, x.shape[-1])
        flat_idx = routing.top_idx.reshape(-1, 2)
        flat_w = weights.reshape(-1, 2)
        out = torch.zeros_like(flat_x)
        for e, expert in enumerate(self.experts):
            hit = flat_idx == e
            rows = hit.any(dim=-1).nonzero(as_tuple=True)[0]
            if rows.numel() == 0:
                continue
            w = (flat_w[rows] * hit[rows]).sum(dim=-1, keepdim=True)
            out = out.index_add(0, rows, w * expert(flat_x[rows]))
        return out.reshape(x.shape), routing


def load_balancing_loss(routing: Routing, valid: torch.Tensor | None = None) -> torch.Tensor:
    """N * sum_e f_e * P_e over the valid (non-padding) tokens.

    f_e is the fraction of tokens whose first choice is e, P_e the mean gate
    probability of e. Uniform routing gives 1; collapse onto one expert gives N.
    """
    probs = routing.probs.reshape(-1, routing.probs.shape[-1])
    top1 = routing.top_idx[..., 0].reshape(-1)
    if valid is not None:
        keep = valid.reshape(-1)
        probs, top1 = probs[keep], top1[keep]
    if probs.shape[0] == 0:
        raise ValueError("load balancing loss over zero tokens")
    n = probs.shape[-1]
    frac = torch.bincount(top1, minlength=n).to(probs.dtype) / probs.shape[0]
    return n * (frac * probs.mean(dim=0)).sum()
