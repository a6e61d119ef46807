"""Model hyperparameters and MoE layer placement."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import NamedTuple


class MoELayerInfo(NamedTuple):
    layer_id: int
    side: str  # "encoder" or "decoder"
    depth: int  # 1-indexed transformer layer on that side


@dataclass(frozen=True)
class ModelConfig:
    vocab_size: int = 72
    d_model: int = 64
    d_ffn: int = 128
    n_heads: int = 2
    enc_layers: int = 4
    dec_layers: int = 4
    moe_frequency: int = 2
    num_experts: int = 8
    top_k: int = 2
    beam_size: int = 4
    label_smoothing: float = 0.1
    lb_loss_coeff: float = 0.01
    max_positions: int = 256
    moe_layers: tuple[MoELayerInfo, ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.moe_frequency < 1:
            raise ValueError("moe_frequency must be >= 1")
        if self.top_k != 2:
            raise ValueError("only top-2 gating is supported")
        if self.num_experts < self.top_k:
            raise ValueError("num_experts must be >= top_k")
        if self.d_model % self.n_heads:
            raise ValueError("d_model must be divisible by n_heads")
        if self.beam_size < 1:
            raise ValueError("beam_size must be >= 1")
        if not 0.0 <= self.label_smoothing < 1.0:
            raise ValueError("label_smoothing must be in [0, 1)")
        layers = []
        for side, n in (("encoder", self.enc_layers), ("decoder", self.dec_layers)):
            for depth in range(1, n + 1):
                if depth % self.moe_frequency == 0:
                    layers.append(MoELayerInfo(len(layers), side, depth))
        object.__setattr__(self, "moe_layers", tuple(layers))

    @property
    def num_moe_layers(self) -> int:
        return len(self.moe_layers)

    @property
    def total_experts(self) -> int:
        return self.num_moe_layers * self.num_experts

    def side_layers(self, side: str) -> list[int]:
        """MoE layer ids belonging to one side, in ascending depth."""
        if side not in ("encoder", "decoder"):
            raise ValueError(f"unknown side {side!r}")
        return [info.layer_id for info in self.moe_layers if info.side == side]

    def moe_layer_id(self, side: str, depth: int) -> int | None:
        for info in self.moe_layers:
            if info.side == side and info.depth == depth:
                return info.layer_id
        return None

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in dataclasses.fields(self) if f.init}

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        names = {f.name for f in dataclasses.fields(cls) if f.init}
        unknown = set(d) - names
        if unknown:
            raise ValueError(f"unknown ModelConfig fields: {sorted(unknown)}")
        return cls(**d)


# The 54.5B NLLB-200 MoE architecture, used for arithmetic checks only.
NLLB_MOE_CONFIG = ModelConfig(
    vocab_size=256206,
    d_model=2048,
    d_ffn=8192,
    n_heads=16,
    enc_layers=24,
    dec_layers=24,
    moe_frequency=4,
    num_experts=128,
)
