"""Per-expert gate statistics: recording, merging, finalizing, aggregating, persisting.

Counters are kept raw (integer counts plus float64 sums) so that statistics
from any number of sentences, directions or workers merge losslessly; the
fractions used by the pruning metrics are only derived in :func:`finalize`.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, NamedTuple, Sequence

import numpy as np

from .moe.gating import GateDecision

GRANULARITIES = ("global", "lang_pair", "lang_specific")
SIDES = ("encoder", "decoder")
_COUNT_LIMIT = np.iinfo(np.int64).max


class StatsKey(NamedTuple):
    granularity: str
    side: str
    src_lang: str | None = None
    tgt_lang: str | None = None

    def validate(self) -> "StatsKey":
        if self.granularity not in GRANULARITIES:
            raise ValueError(f"unknown granularity {self.granularity!r}")
        if self.side not in SIDES:
            raise ValueError(f"unknown side {self.side!r}")
        has_src, has_tgt = self.src_lang is not None, self.tgt_lang is not None
        if self.granularity == "global":
            ok = not has_src and not has_tgt
        elif self.granularity == "lang_pair":
            ok = has_src and has_tgt
        else:
            ok = (has_src, has_tgt) == ((True, False) if self.side == "encoder" else (False, True))
        if not ok:
            raise ValueError(f"inconsistent language fields for {self}")
        return self

    def label(self) -> str:
        if self.granularity == "global":
            return "global"
        if self.granularity == "lang_pair":
            return f"lang_pair:{self.src_lang}-{self.tgt_lang}"
        return f"lang:{self.src_lang if self.side == 'encoder' else self.tgt_lang}"


@dataclass
class ExpertStats:
    """Raw counters for a fixed set of MoE layers, each with ``num_experts`` experts.

    Arrays are indexed ``[row, expert]`` where ``row`` is the position of the
    layer id in ``layer_ids``.
    """

    layer_ids: tuple[int, ...]
    top1_count: np.ndarray
    top2_count: np.ndarray
    gate_sum: np.ndarray
    conf_sum: np.ndarray
    token_count: np.ndarray

    @classmethod
    def empty(cls, layer_ids: Sequence[int], num_experts: int) -> "ExpertStats":
        layer_ids = tuple(int(l) for l in layer_ids)
        shape = (len(layer_ids), num_experts)
        return cls(
            layer_ids,
            np.zeros(shape, dtype=np.int64),
            np.zeros(shape, dtype=np.int64),
            np.zeros(shape, dtype=np.float64),
            np.zeros(shape, dtype=np.float64),
            np.zeros(len(layer_ids), dtype=np.int64),
        )

    @property
    def num_experts(self) -> int:
        return self.top1_count.shape[1]

    def row(self, layer_id: int) -> int:
        try:
            return self.layer_ids.index(layer_id)
        except ValueError:
            raise ValueError(f"layer {layer_id} not tracked (tracked: {self.layer_ids})") from None

    def copy(self) -> "ExpertStats":
        return ExpertStats(self.layer_ids, self.top1_count.copy(), self.top2_count.copy(),
                           self.gate_sum.copy(), self.conf_sum.copy(), self.token_count.copy())

    def record(self, decision: GateDecision) -> None:
        r = self.row(decision.layer_id)
        if self.token_count[r] >= _COUNT_LIMIT:
            raise OverflowError("token counter overflow")
        self.token_count[r] += 1
        self.top1_count[r, decision.top1] += 1
        self.top2_count[r, decision.top1] += 1
        self.top2_count[r, decision.top2] += 1
        self.conf_sum[r, decision.top1] += decision.gate_top1
        self.gate_sum[r] += np.asarray(decision.gate_probs, dtype=np.float64)

    def record_many(self, layer_id: int, probs: np.ndarray, top_idx: np.ndarray, top_vals: np.ndarray) -> None:
        """Vectorized :meth:`record` for T tokens of one layer."""
        r = self.row(layer_id)
        n = self.num_experts
        top_idx = np.asarray(top_idx)
        if top_idx.shape[0] == 0:
            return
        if self.token_count[r] > _COUNT_LIMIT - top_idx.shape[0]:
            raise OverflowError("token counter overflow")
        self.token_count[r] += top_idx.shape[0]
        self.top1_count[r] += np.bincount(top_idx[:, 0], minlength=n)
        self.top2_count[r] += np.bincount(top_idx[:, :2].ravel(), minlength=n)
        self.conf_sum[r] += np.bincount(top_idx[:, 0], weights=np.asarray(top_vals, np.float64)[:, 0], minlength=n)
        self.gate_sum[r] += np.asarray(probs, dtype=np.float64).sum(axis=0)

    def __eq__(self, other) -> bool:
        if not isinstance(other, ExpertStats):
            return NotImplemented
        return (self.layer_ids == other.layer_ids
                and all(np.array_equal(getattr(self, f), getattr(other, f)) for f in _FIELDS))


_FIELDS = ("top1_count", "top2_count", "gate_sum", "conf_sum", "token_count")


def merge(a: ExpertStats, b: ExpertStats) -> ExpertStats:
    """Field-wise sum. Associative and commutative on the integer counters."""
    if a.layer_ids != b.layer_ids or a.num_experts != b.num_experts:
        raise ValueError(
            f"cannot merge stats over layers {a.layer_ids}x{a.num_experts} and {b.layer_ids}x{b.num_experts}"
        )
    return ExpertStats(a.layer_ids, *(getattr(a, f) + getattr(b, f) for f in _FIELDS))


def merge_all(items: Iterable[ExpertStats]) -> ExpertStats:
    items = list(items)
    if not items:
        raise ValueError("nothing to merge")
    out = items[0].copy()
    for s in items[1:]:
        out = merge(out, s)
    return out


@dataclass(frozen=True)
class FinalStats:
    """Per-layer fractions derived from :class:`ExpertStats`; arrays are (layers, experts)."""

    layer_ids: tuple[int, ...]
    top1: np.ndarray
    top2: np.ndarray
    mean: np.ndarray
    conf: np.ndarray


def finalize(stats: ExpertStats, key: object = None) -> FinalStats:
    empty = [lid for lid, n in zip(stats.layer_ids, stats.token_count) if n == 0]
    if empty:
        where = f" for {key}" if key is not None else ""
        raise ValueError(f"no tokens recorded in layer(s) {empty}{where}")
    tokens = stats.token_count[:, None].astype(np.float64)
    top1 = stats.top1_count / tokens
    conf = np.divide(stats.conf_sum, stats.top1_count, out=np.zeros_like(stats.conf_sum),
                     where=stats.top1_count > 0)
    return FinalStats(stats.layer_ids, top1, stats.top2_count / tokens, stats.gate_sum / tokens, conf)


class StatsRecorder:
    """Accumulates raw stats per (src_lang, tgt_lang, side).

    Implements the decoder's routing sink protocol. Each worker should own a
    recorder; combine them with :meth:`merge_from`.
    """

    def __init__(self, config):
        self.config = config
        self.per_direction: dict[tuple[str, str], dict[str, ExpertStats]] = {}

    def _acc(self, src_lang: str, tgt_lang: str, side: str) -> ExpertStats:
        sides = self.per_direction.setdefault((src_lang, tgt_lang), {})
        if side not in sides:
            sides[side] = ExpertStats.empty(self.config.side_layers(side), self.config.num_experts)
        return sides[side]

    def record(self, decision: GateDecision, src_lang: str, tgt_lang: str, side: str) -> None:
        self._acc(src_lang, tgt_lang, side).record(decision)

    def record_routing(self, layer_id, side, probs, top_idx, top_vals, src_lang, tgt_lang) -> None:
        self._acc(src_lang, tgt_lang, side).record_many(layer_id, probs, top_idx, top_vals)

    def merge_from(self, other: "StatsRecorder") -> None:
        for direction, sides in other.per_direction.items():
            for side, stats in sides.items():
                mine = self.per_direction.setdefault(direction, {})
                mine[side] = merge(mine[side], stats) if side in mine else stats.copy()


def aggregate_by_granularity(
    per_direction: Mapping[tuple[str, str], Mapping[str, ExpertStats]],
    granularity: str,
    directions: Iterable[tuple[str, str]] | None = None,
) -> dict[StatsKey, ExpertStats]:
    """Merge raw per-direction counters into the keys of one granularity.

    global merges everything per side; lang_specific merges encoder stats by
    source and decoder stats by target; lang_pair is the identity.
    """
    if granularity not in GRANULARITIES:
        raise ValueError(f"unknown granularity {granularity!r}")
    wanted = list(per_direction) if directions is None else list(directions)
    missing = [d for d in wanted if d not in per_direction or set(per_direction[d]) != set(SIDES)]
    if missing:
        raise ValueError(f"missing statistics for direction(s): {', '.join(f'{a}-{b}' for a, b in missing)}")
    groups: dict[StatsKey, list[ExpertStats]] = {}
    for src, tgt in sorted(wanted):
        for side in SIDES:
            if granularity == "global":
                key = StatsKey("global", side)
            elif granularity == "lang_pair":
                key = StatsKey("lang_pair", side, src, tgt)
            elif side == "encoder":
                key = StatsKey("lang_specific", side, src, None)
            else:
                key = StatsKey("lang_specific", side, None, tgt)
            groups.setdefault(key, []).append(per_direction[(src, tgt)][side])
    return {key: merge_all(items) for key, items in groups.items()}


def stats_key_for(granularity: str, side: str, src_lang: str, tgt_lang: str) -> StatsKey:
    """The key whose statistics govern ``side`` when translating src_lang -> tgt_lang."""
    if granularity == "global":
        return StatsKey("global", side)
    if granularity == "lang_pair":
        return StatsKey("lang_pair", side, src_lang, tgt_lang)
    if granularity == "lang_specific":
        return StatsKey("lang_specific", side, src_lang, None) if side == "encoder" else \
            StatsKey("lang_specific", side, None, tgt_lang)
    raise ValueError(f"unknown granularity {granularity!r}")


# stats file: one tab-separated record per (key, layer, expert)

STATS_FIELDS = ("granularity", "side", "src_lang", "tgt_lang", "layer_id", "expert_id",
                "top1_count", "top2_count", "gate_sum", "conf_sum", "token_count")


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def dump_stats(table: Mapping[StatsKey, ExpertStats]) -> str:
    lines = ["\t".join(STATS_FIELDS)]
    for key in sorted(table, key=lambda k: tuple("" if v is None else v for v in k)):
        s = table[key]
        for r, layer_id in enumerate(s.layer_ids):
            for e in range(s.num_experts):
                lines.append("\t".join([
                    key.granularity, key.side, key.src_lang or "-", key.tgt_lang or "-",
                    str(layer_id), str(e), str(int(s.top1_count[r, e])), str(int(s.top2_count[r, e])),
                    _fmt(s.gate_sum[r, e]), _fmt(s.conf_sum[r, e]), str(int(s.token_count[r])),
                ]))
    return "\n".join(lines) + "\n"


def parse_stats(text: str) -> dict[StatsKey, ExpertStats]:
    rows = [line.split("\t") for line in text.splitlines() if line]
    if not rows or tuple(rows[0]) != STATS_FIELDS:
        raise ValueError("stats file header mismatch")
    grouped: dict[StatsKey, list[list[str]]] = {}
    for row in rows[1:]:
        if len(row) != len(STATS_FIELDS):
            raise ValueError(f"malformed stats record: {row}")
        key = StatsKey(row[0], row[1], None if row[2] == "-" else row[2], None if row[3] == "-" else row[3])
        grouped.setdefault(key.validate(), []).append(row)
    out = {}
    for key, recs in grouped.items():
        layer_ids = sorted({int(r[4]) for r in recs})
        num_experts = max(int(r[5]) for r in recs) + 1
        s = ExpertStats.empty(layer_ids, num_experts)
        for r in recs:
            i, e = layer_ids.index(int(r[4])), int(r[5])
            s.top1_count[i, e] = int(r[6])
            s.top2_count[i, e] = int(r[7])
            s.gate_sum[i, e] = float(r[8])
            s.conf_sum[i, e] = float(r[9])
            s.token_count[i] = int(r[10])
        out[key] = s
    return out


def save_stats(table: Mapping[StatsKey, ExpertStats], path: str | Path) -> None:
    Path(path).write_text(dump_stats(table), encoding="utf-8")


def load_stats(path: str | Path) -> dict[StatsKey, ExpertStats]:
    return parse_stats(Path(path).read_text(encoding="utf-8"))


def per_direction_table(recorder: StatsRecorder) -> dict[StatsKey, ExpertStats]:
    """Lang-pair keyed view of a recorder, suitable for :func:`save_stats`."""
    return {StatsKey("lang_pair", side, src, tgt): s
            for (src, tgt), sides in recorder.per_direction.items() for side, s in sides.items()}


def per_direction_from_table(table: Mapping[StatsKey, ExpertStats]) -> dict[tuple[str, str], dict[str, ExpertStats]]:
    out: dict[tuple[str, str], dict[str, ExpertStats]] = {}
    for key, s in table.items():
        if key.granularity != "lang_pair":
            raise ValueError("expected lang_pair statistics")
        out.setdefault((key.src_lang, key.tgt_lang), {})[key.side] = s
    return out
