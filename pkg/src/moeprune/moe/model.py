"""Pre-norm encoder-decoder transformer with MoE feed-forward sublayers."""

from __future__ import annotations

import math
from typing import NamedTuple

import torch
from torch import nn

from ..mask import PruningMask
from .config import ModelConfig
from .gating import FeedForward, GateDecision, MoELayer, Routing, retained_bias, route

PAD_ID = 0


class LayerRouting(NamedTuple):
    layer_id: int
    side: str
    routing: Routing
    valid: torch.Tensor  # (B, T) bool, False on padding


class MultiHeadAttention(nn.Module):
    def __init__(self, d_model: int, n_heads: int):
        super().__init__()
        self.n_heads = n_heads
        self.d_head = d_model // n_heads
        self.q = nn.Linear(d_model, d_model)
        self.k = nn.Linear(d_model, d_model)
        self.v = nn.Linear(d_model, d_model)
        self.o = nn.Linear(d_model, d_model)

    def _split(self, x):
        b, t, _ = x.shape
        return x.view(b, t, self.n_heads, self.d_head).transpose(1, 2)

    def forward(self, query, key, key_pad=None, causal=False):
        q, k, v = self._split(self.q(query)), self._split(self.k(key)), self._split(self.v(key))
        scores = q @ k.transpose(-1, -2) / math.sqrt(self.d_head)
        if key_pad is not None:
            scores = scores.masked_fill(key_pad[:, None, None, :], float("-inf"))
        if causal:
            tq, tk = scores.shape[-2:]
            future = torch.ones(tq, tk, dtype=torch.bool).triu(1)
            scores = scores.masked_fill(future, float("-inf"))
        attn = torch.softmax(scores, dim=-1)
        out = (attn @ v).transpose(1, 2).reshape(query.shape[0], query.shape[1], -1)
        return self.o(out)


class _Block(nn.Module):
    def __init__(self, config: ModelConfig, moe_layer_id: int | None, cross: bool):
        super().__init__()
        d = config.d_model
        self.moe_layer_id = moe_layer_id
        self.self_norm = nn.LayerNorm(d)
        self.self_attn = MultiHeadAttention(d, config.n_heads)
        if cross:
            self.cross_norm = nn.LayerNorm(d)
            self.cross_attn = MultiHeadAttention(d, config.n_heads)
        self.ffn_norm = nn.LayerNorm(d)
        if moe_layer_id is None:
            self.ffn = FeedForward(d, config.d_ffn)
        else:
            self.ffn = MoELayer(d, config.d_ffn, config.num_experts)

    def _ffn(self, x, biases):
        h = self.ffn_norm(x)
        if self.moe_layer_id is None:
            return x + self.ffn(h), None
        y, routing = self.ffn(h, biases.get(self.moe_layer_id))
        return x + y, routing


class EncoderLayer(_Block):
    def __init__(self, config, moe_layer_id):
        super().__init__(config, moe_layer_id, cross=False)

    def forward(self, x, src_pad, biases):
        h = self.self_norm(x)
        x = x + self.self_attn(h, h, key_pad=src_pad)
        return self._ffn(x, biases)


class DecoderLayer(_Block):
    def __init__(self, config, moe_layer_id):
        super().__init__(config, moe_layer_id, cross=True)

    def forward(self, x, memory, src_pad, biases):
        h = self.self_norm(x)
        x = x + self.self_attn(h, h, causal=True)
        h = self.cross_norm(x)
        x = x + self.cross_attn(h, memory, key_pad=src_pad)
        return self._ffn(x, biases)


def sinusoidal_positions(n: int, d: int) -> torch.Tensor:
    pos = torch.arange(n, dtype=torch.float64)[:, None]
    i = torch.arange(0, d, 2, dtype=torch.float64)
    angle = pos / torch.pow(10000.0, i / d)
    table = torch.zeros(n, d, dtype=torch.float64)
    table[:, 0::2] = torch.sin(angle)
    table[:, 1::2] = torch.cos(angle[:, : d // 2])
    return table


class MoEModel(nn.Module):
    """Shared-vocabulary seq2seq transformer; every ``moe_frequency``-th FFN is an MoE layer.

    The output projection is tied to the token embedding.
    """

    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = config
        d = config.d_model
        self.embed = nn.Embedding(config.vocab_size, d, padding_idx=PAD_ID)
        nn.init.normal_(self.embed.weight, std=d ** -0.5)
        with torch.no_grad():
            self.embed.weight[PAD_ID].zero_()
        self.register_buffer("positions", sinusoidal_positions(config.max_positions, d).float(), persistent=False)
        self.encoder = nn.ModuleList(
            EncoderLayer(config, config.moe_layer_id("encoder", i + 1)) for i in range(config.enc_layers)
        )
        self.decoder = nn.ModuleList(
            DecoderLayer(config, config.moe_layer_id("decoder", i + 1)) for i in range(config.dec_layers)
        )
        self.enc_norm = nn.LayerNorm(d)
        self.dec_norm = nn.LayerNorm(d)
        self._moe = {}
        for block in list(self.encoder) + list(self.decoder):
            if block.moe_layer_id is not None:
                self._moe[block.moe_layer_id] = block.ffn

    def moe_layer(self, layer_id: int) -> MoELayer:
        try:
            return self._moe[layer_id]
        except KeyError:
            raise ValueError(f"{layer_id} is not an MoE layer id (valid: {sorted(self._moe)})") from None

    def mask_biases(self, mask: PruningMask | None) -> dict[int, torch.Tensor]:
        if mask is None:
            return {}
        mask.validate_for(self.config)
        dtype = self.embed.weight.dtype
        out = {}
        for layer_id, ids in mask.layers.items():
            bias = retained_bias(ids, self.config.num_experts, dtype=dtype)
            if bias is not None:
                out[layer_id] = bias
        return out

    def _embed(self, tokens):
        if tokens.shape[1] > self.config.max_positions:
            raise ValueError(f"sequence length {tokens.shape[1]} exceeds max_positions")
        x = self.embed(tokens) * math.sqrt(self.config.d_model)
        return x + self.positions[: tokens.shape[1]].to(x.dtype)

    def encode(self, src: torch.Tensor, mask: PruningMask | None = None, biases=None):
        """Returns (memory, src_pad, routings)."""
        if biases is None:
            biases = self.mask_biases(mask)
        src_pad = src == PAD_ID
        x = self._embed(src)
        routings = []
        for layer in self.encoder:
            x, routing = layer(x, src_pad, biases)
            if routing is not None:
                routings.append(LayerRouting(layer.moe_layer_id, "encoder", routing, ~src_pad))
        return self.enc_norm(x), src_pad, routings

    def decode(self, tgt_in: torch.Tensor, memory, src_pad, mask: PruningMask | None = None, biases=None):
        """Returns (logits, routings) for every decoder input position."""
        if biases is None:
            biases = self.mask_biases(mask)
        x = self._embed(tgt_in)
        routings = []
        for layer in self.decoder:
            x, routing = layer(x, memory, src_pad, biases)
            if routing is not None:
                routings.append(LayerRouting(layer.moe_layer_id, "decoder", routing, tgt_in != PAD_ID))
        logits = self.dec_norm(x) @ self.embed.weight.t()
        return logits, routings

    def forward(self, src, tgt_in, mask: PruningMask | None = None):
        biases = self.mask_biases(mask)
        memory, src_pad, enc_r = self.encode(src, biases=biases)
        logits, dec_r = self.decode(tgt_in, memory, src_pad, biases=biases)
        return logits, enc_r + dec_r

    # single-token views of one MoE layer

    def gate_forward(self, x_t: torch.Tensor, layer_id: int, mask: PruningMask | None = None,
                     token_index: int = 0) -> GateDecision:
        layer = self.moe_layer(layer_id)
        if x_t.shape != (self.config.d_model,):
            raise ValueError(f"x_t must have shape ({self.config.d_model},)")
        bias = self.mask_biases(mask).get(layer_id) if mask is not None else None
        with torch.no_grad():
            r = route(layer.gate(x_t), bias)
        return GateDecision(layer_id, token_index, r.probs.double().numpy().copy(),
                            int(r.top_idx[0]), int(r.top_idx[1]),
                            float(r.top_vals[0]), float(r.top_vals[1]))

    def moe_layer_forward(self, x_t: torch.Tensor, layer_id: int, mask: PruningMask | None = None) -> torch.Tensor:
        layer = self.moe_layer(layer_id)
        bias = self.mask_biases(mask).get(layer_id) if mask is not None else None
        y, _ = layer(x_t.reshape(1, 1, -1), bias)
        return y.reshape(x_t.shape)
