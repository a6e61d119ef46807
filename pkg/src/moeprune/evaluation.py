"""Corpus evaluation reports and memory-footprint arithmetic."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

from .analysis import length_ratio
from .chrf import ChrfParams, corpus_chrf
from .data import CorpusSample, Vocabulary, by_direction
from .mask import PruningMask
from .moe.decode import translate_corpus

GIB = 2 ** 30


# memory

@dataclass(frozen=True)
class MemorySpec:
    total_params: float
    expert_params_each: float
    num_experts_total: int
    bytes_per_param: int = 2
    dense_params: float | None = None

    @property
    def dense(self) -> float:
        if self.dense_params is not None:
            return self.dense_params
        return self.total_params - self.num_experts_total * self.expert_params_each

    @classmethod
    def nllb_moe(cls) -> "MemorySpec":
        """The 54.5B NLLB-200 MoE: 1536 experts of 33.6M parameters each."""
        return cls(total_params=54.5e9, expert_params_each=33.6e6, num_experts_total=1536)

    @classmethod
    def from_model_config(cls, config, bytes_per_param: int = 2) -> "MemorySpec":
        from .moe.model import MoEModel
        import torch

        with torch.device("meta"):
            model = MoEModel(config)
        total = sum(p.numel() for p in model.parameters())
        each = sum(p.numel() for p in model.moe_layer(0).experts[0].parameters())
        return cls(total, each, config.total_experts, bytes_per_param)


@dataclass(frozen=True)
class MemoryEstimate:
    params: float
    bytes: float

    @property
    def gib(self) -> float:
        return self.bytes / GIB


def estimate_memory(spec: MemorySpec, mask: PruningMask | None = None,
                    retained_experts: int | None = None) -> MemoryEstimate:
    """Bytes for dense parameters plus the retained experts."""
    if mask is not None and retained_experts is not None:
        raise ValueError("pass either a mask or retained_experts, not both")
    if mask is not None:
        retained_experts = mask.total_retained
        if retained_experts > spec.num_experts_total:
            raise ValueError(f"mask retains {retained_experts} experts but the model has {spec.num_experts_total}")
    elif retained_experts is None:
        retained_experts = spec.num_experts_total
    if not 0 <= retained_experts <= spec.num_experts_total:
        raise ValueError("retained expert count out of range")
    params = spec.dense + retained_experts * spec.expert_params_each
    return MemoryEstimate(params, params * spec.bytes_per_param)


# corpus evaluation

@dataclass
class DirectionResult:
    src: str
    tgt: str
    chrf_pp: float
    length_ratio: float


@dataclass
class EvalReport:
    rows: list[DirectionResult]
    label: str = ""
    hypotheses: dict[tuple[str, str], list[str]] = field(default_factory=dict, repr=False)

    def by_direction(self) -> dict[tuple[str, str], DirectionResult]:
        return {(r.src, r.tgt): r for r in self.rows}

    @property
    def mean_chrf(self) -> float:
        return float(np.mean([r.chrf_pp for r in self.rows]))

    def group_averages(self) -> list[tuple[str, str, float, float]]:
        """(src, tgt, mean chrF++, mean ratio) for x->tgt groups, src->x groups and all ('*' = any)."""
        out = []
        tgts = sorted({r.tgt for r in self.rows})
        srcs = sorted({r.src for r in self.rows})
        for t in tgts:
            sel = [r for r in self.rows if r.tgt == t]
            out.append(("*", t, np.mean([r.chrf_pp for r in sel]), np.mean([r.length_ratio for r in sel])))
        for s in srcs:
            sel = [r for r in self.rows if r.src == s]
            out.append((s, "*", np.mean([r.chrf_pp for r in sel]), np.mean([r.length_ratio for r in sel])))
        out.append(("*", "*", self.mean_chrf, float(np.mean([r.length_ratio for r in self.rows]))))
        return out

    def to_tsv(self) -> str:
        lines = ["src\ttgt\tchrf_pp\tlength_ratio"]
        for r in self.rows:
            lines.append(f"{r.src}\t{r.tgt}\t{r.chrf_pp:.4f}\t{r.length_ratio:.4f}")
        for s, t, c, lr in self.group_averages():
            lines.append(f"avg:{s}\t{t}\t{c:.4f}\t{lr:.4f}")
        return "\n".join(lines) + "\n"

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_tsv(), encoding="utf-8")


MaskResolver = Callable[[str, str], PruningMask | None]


def score_direction(src: str, tgt: str, hyps: Sequence[str], refs: Sequence[str],
                    params: ChrfParams = ChrfParams()) -> DirectionResult:
    return DirectionResult(src, tgt, corpus_chrf(hyps, refs, params), length_ratio(hyps, refs))


def corpus_eval(model, vocab: Vocabulary, test: Sequence[CorpusSample],
                masks: Mapping[tuple[str, str], PruningMask | None] | MaskResolver | PruningMask | None = None,
                directions: Sequence[tuple[str, str]] | None = None, label: str = "",
                beam_size: int | None = None) -> EvalReport:
    """Decode every requested direction of ``test`` with its mask and score it.

    ``masks`` may be a single mask for all directions, a mapping from
    direction to mask, or a callable (src, tgt) -> mask.
    """
    grouped = by_direction(test)
    directions = sorted(grouped) if directions is None else list(directions)
    rows, hyps_out = [], {}
    for d in directions:
        if d not in grouped:
            raise ValueError(f"no test data for direction {d[0]}-{d[1]}")
        if masks is None or isinstance(masks, PruningMask):
            mask = masks
        elif callable(masks):
            mask = masks(*d)
        else:
            if d not in masks:
                raise ValueError(f"no mask for direction {d[0]}-{d[1]}")
            mask = masks[d]
        samples = grouped[d]
        hyps = translate_corpus(samples, model, vocab, mask=mask, beam_size=beam_size)
        hyps_out[d] = hyps
        rows.append(score_direction(*d, hyps, [s.tgt_text for s in samples]))
    return EvalReport(rows, label, hyps_out)


def reference_report(test: Sequence[CorpusSample], label: str = "reference") -> EvalReport:
    """Scores the references against themselves (sanity check: all 100)."""
    rows = []
    for (src, tgt), samples in sorted(by_direction(test).items()):
        refs = [s.tgt_text for s in samples]
        rows.append(score_direction(src, tgt, refs, refs))
    return EvalReport(rows, label)
