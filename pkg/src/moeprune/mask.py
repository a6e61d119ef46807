"""Retained-expert masks and their on-disk text format.

A mask file looks like::

    MOEPRUNE-MASK 1
    metric_kind importance
    granularity lang_pair:la-lb
    algorithm fixed
    min_per_layer 4
    num_experts 8
    layer 0 encoder 0 2 3 7
    layer 1 encoder 1 2 4 5
    ...

Layers appear in ascending id order and expert ids are sorted, so
``dumps(loads(text)) == text`` for any file written by :func:`dumps`.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

MASK_MAGIC = "MOEPRUNE-MASK"
MASK_VERSION = 1


@dataclass(frozen=True)
class PruningMask:
    """Sorted retained expert ids for every MoE layer."""

    layers: Mapping[int, tuple[int, ...]]
    num_experts: int
    sides: Mapping[int, str] = field(default_factory=dict)
    metric_kind: str = "none"
    granularity: str = "none"
    algorithm: str = "none"
    min_per_layer: int = 4

    def __post_init__(self):
        clean = {}
        for layer_id, ids in sorted(self.layers.items()):
            ids = tuple(sorted(int(e) for e in ids))
            if len(set(ids)) != len(ids):
                raise ValueError(f"duplicate expert ids in layer {layer_id}")
            if ids and (ids[0] < 0 or ids[-1] >= self.num_experts):
                raise ValueError(f"expert id out of range [0, {self.num_experts}) in layer {layer_id}")
            clean[int(layer_id)] = ids
        object.__setattr__(self, "layers", clean)
        object.__setattr__(self, "sides", {int(k): v for k, v in sorted(self.sides.items())})

    @classmethod
    def full(cls, config, **meta) -> "PruningMask":
        """Mask that retains every expert of every MoE layer of ``config``."""
        layers = {info.layer_id: tuple(range(config.num_experts)) for info in config.moe_layers}
        sides = {info.layer_id: info.side for info in config.moe_layers}
        return cls(layers, config.num_experts, sides, **meta)

    def retained(self, layer_id: int) -> tuple[int, ...]:
        return self.layers[layer_id]

    @property
    def total_retained(self) -> int:
        return sum(len(ids) for ids in self.layers.values())

    def side_count(self, side: str) -> int:
        return sum(len(ids) for lid, ids in self.layers.items() if self.sides.get(lid) == side)

    def counts(self) -> dict[int, int]:
        return {lid: len(ids) for lid, ids in self.layers.items()}

    def is_full(self) -> bool:
        return all(len(ids) == self.num_experts for ids in self.layers.values())

    def validate_for(self, config) -> None:
        """Raise unless the mask covers exactly the MoE layers of ``config``."""
        if self.num_experts != config.num_experts:
            raise ValueError(f"mask has {self.num_experts} experts per layer, model has {config.num_experts}")
        expected = {info.layer_id for info in config.moe_layers}
        if set(self.layers) != expected:
            raise ValueError(f"mask layers {sorted(self.layers)} do not match MoE layers {sorted(expected)}")

    def with_meta(self, **meta) -> "PruningMask":
        kw = dict(
            layers=self.layers, num_experts=self.num_experts, sides=self.sides,
            metric_kind=self.metric_kind, granularity=self.granularity,
            algorithm=self.algorithm, min_per_layer=self.min_per_layer,
        )
        kw.update(meta)
        return PruningMask(**kw)

    @classmethod
    def combine(cls, parts: Iterable["PruningMask"], **meta) -> "PruningMask":
        """Union of masks over disjoint layer sets (e.g. encoder + decoder halves)."""
        parts = list(parts)
        layers: dict[int, tuple[int, ...]] = {}
        sides: dict[int, str] = {}
        for p in parts:
            overlap = set(layers) & set(p.layers)
            if overlap:
                raise ValueError(f"masks overlap on layers {sorted(overlap)}")
            layers.update(p.layers)
            sides.update(p.sides)
        first = parts[0]
        kw = dict(metric_kind=first.metric_kind, granularity=first.granularity,
                  algorithm=first.algorithm, min_per_layer=first.min_per_layer)
        kw.update(meta)
        return cls(layers, first.num_experts, sides, **kw)


def _token(value: str) -> str:
    if not value or any(c.isspace() for c in value):
        raise ValueError(f"mask metadata must be a non-empty token without whitespace, got {value!r}")
    return value


def dumps(mask: PruningMask) -> str:
    lines = [
        f"{MASK_MAGIC} {MASK_VERSION}",
        f"metric_kind {_token(mask.metric_kind)}",
        f"granularity {_token(mask.granularity)}",
        f"algorithm {_token(mask.algorithm)}",
        f"min_per_layer {mask.min_per_layer}",
        f"num_experts {mask.num_experts}",
    ]
    for layer_id, ids in mask.layers.items():
        side = mask.sides.get(layer_id, "-")
        lines.append(" ".join(["layer", str(layer_id), side, *map(str, ids)]))
    return "\n".join(lines) + "\n"


def loads(text: str) -> PruningMask:
    lines = text.splitlines()
    if not lines or lines[0].split() != [MASK_MAGIC, str(MASK_VERSION)]:
        raise ValueError("not a mask file (bad magic or version)")
    header: dict[str, str] = {}
    layers: dict[int, tuple[int, ...]] = {}
    sides: dict[int, str] = {}
    for line in lines[1:]:
        parts = line.split()
        if not parts:
            continue
        if parts[0] == "layer":
            layer_id = int(parts[1])
            if parts[2] != "-":
                sides[layer_id] = parts[2]
            layers[layer_id] = tuple(int(p) for p in parts[3:])
        else:
            header[parts[0]] = parts[1]
    return PruningMask(
        layers,
        int(header["num_experts"]),
        sides,
        metric_kind=header["metric_kind"],
        granularity=header["granularity"],
        algorithm=header["algorithm"],
        min_per_layer=int(header["min_per_layer"]),
    )


def save_mask(mask: PruningMask, path: str | Path) -> None:
    Path(path).write_text(dumps(mask), encoding="utf-8")


def load_mask(path: str | Path) -> PruningMask:
    return loads(Path(path).read_text(encoding="utf-8"))
