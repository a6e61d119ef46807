from .config import NLLB_MOE_CONFIG, ModelConfig, MoELayerInfo
from .gating import GateDecision, MoELayer, gate_from_logits, load_balancing_loss, route
from .model import MoEModel

__all__ = [
    "GateDecision",
    "ModelConfig",
    "MoEModel",
    "MoELayer",
    "MoELayerInfo",
    "NLLB_MOE_CONFIG",
    "gate_from_logits",
    "load_balancing_loss",
    "route",
]
