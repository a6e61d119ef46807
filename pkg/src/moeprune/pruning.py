"""Pruning metrics and the three expert selection algorithms."""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Mapping, NamedTuple, Sequence

import numpy as np

from .mask import PruningMask
from .stats import FinalStats

METRIC_KINDS = ("top1", "top2", "load_balancing", "importance_vanilla", "importance")
THETA_STEPS = 1000  # threshold grid {0, 0.001, ..., 1}
MASS_TOL = 1e-12


@dataclass(frozen=True)
class MetricTable:
    """Per-layer expert scores; ``values[i]`` belongs to ``layer_ids[i]``."""

    kind: str
    layer_ids: tuple[int, ...]
    values: np.ndarray
    normalized: bool = False
    sides: Mapping[int, str] = field(default_factory=dict)

    @property
    def num_experts(self) -> int:
        return self.values.shape[1]

    def subset(self, layer_ids: Sequence[int]) -> "MetricTable":
        rows = [self.layer_ids.index(l) for l in layer_ids]
        return replace(self, layer_ids=tuple(layer_ids), values=self.values[rows],
                       sides={l: self.sides[l] for l in layer_ids if l in self.sides})

    def side_layers(self, side: str) -> list[int]:
        return [l for l in self.layer_ids if self.sides.get(l) == side]


def compute_metric(stats: FinalStats, kind: str, sides: Mapping[int, str] | None = None) -> MetricTable:
    """Raw (unnormalized) scores of one metric kind."""
    if kind == "top1":
        values = stats.top1
    elif kind == "top2":
        values = stats.top2
    elif kind == "load_balancing":
        values = stats.top1 * stats.mean
    elif kind == "importance_vanilla":
        values = stats.top1 * stats.conf
    elif kind == "importance":
        values = stats.top1 * np.exp(stats.conf)
    else:
        raise ValueError(f"unknown metric kind {kind!r}; expected one of {METRIC_KINDS}")
    return MetricTable(kind, tuple(stats.layer_ids), np.array(values, dtype=np.float64), False, dict(sides or {}))


def normalize_per_layer(table: MetricTable) -> MetricTable:
    if np.any(table.values < 0):
        raise ValueError("metric values must be nonnegative")
    totals = table.values.sum(axis=1)
    zero = [lid for lid, t in zip(table.layer_ids, totals) if t <= 0]
    if zero:
        raise ValueError(f"all-zero metric in layer(s) {zero}")
    return replace(table, values=table.values / totals[:, None], normalized=True)


def ranked_experts(scores: np.ndarray) -> np.ndarray:
    """Expert ids from most to least important; ties go to the lower id."""
    return np.lexsort((np.arange(len(scores)), -scores))


def _require_normalized(table: MetricTable) -> None:
    if not table.normalized:
        raise ValueError("pruning expects a normalized MetricTable (see normalize_per_layer)")


def _mask(table: MetricTable, kept: Mapping[int, Sequence[int]], algorithm: str, granularity: str,
          min_per_layer: int) -> PruningMask:
    return PruningMask(dict(kept), table.num_experts, dict(table.sides), metric_kind=table.kind,
                       granularity=granularity, algorithm=algorithm, min_per_layer=min_per_layer)


# budgets

@dataclass(frozen=True)
class Budget:
    """How many experts to keep overall and how to split them across encoder and decoder.

    split is "balanced", "ratio" (uses ``ratio=(enc, dec)``) or "explicit"
    (uses ``enc_count``/``dec_count``).
    """

    total_retain: int
    split: str = "balanced"
    ratio: tuple[int, int] = (1, 1)
    enc_count: int | None = None
    dec_count: int | None = None
    min_per_layer: int = 4

    @classmethod
    def from_rate(cls, rate: float, total_experts: int, layers: tuple[int, int] | None = None,
                  **kw) -> "Budget":
        """``rate`` is the pruned fraction, e.g. 0.75 keeps a quarter.

        Without ``layers`` the retained count must come out integral. With
        ``layers=(n_enc, n_dec)`` the count is rounded down to the largest one
        whose split gives whole per-layer quotas, so "80% at 3:1" over 6+6
        layers of 128 experts keeps 216 + 72.
        """
        if not 0.0 <= rate < 1.0:
            raise ValueError("pruning rate must be in [0, 1)")
        keep = Fraction(str(rate)).limit_denominator(10**6)
        retain = (1 - keep) * total_experts
        if layers is None:
            if retain.denominator != 1:
                raise ValueError(f"pruning {rate:.2%} of {total_experts} experts leaves a fractional count "
                                 f"{float(retain)}")
            return cls(int(retain), **kw)
        n_enc, n_dec = layers
        per_layer = total_experts // (n_enc + n_dec)
        for count in range(math.floor(retain), 0, -1):
            budget = cls(count, **kw)
            try:
                budget.per_layer_quotas(n_enc, n_dec, per_layer)
            except ValueError:
                continue
            return budget
        raise ValueError(f"no feasible budget retains at most {float(retain)} experts")

    def side_totals(self, n_enc_layers: int, n_dec_layers: int) -> tuple[int, int]:
        if self.split == "balanced":
            per, rem = divmod(self.total_retain, n_enc_layers + n_dec_layers)
            if rem:
                raise ValueError(f"{self.total_retain} experts do not split evenly over "
                                 f"{n_enc_layers + n_dec_layers} MoE layers")
            return per * n_enc_layers, per * n_dec_layers
        if self.split == "ratio":
            e, d = self.ratio
            enc = Fraction(self.total_retain * e, e + d)
            if enc.denominator != 1:
                raise ValueError(f"{self.total_retain} experts cannot be split {e}:{d}")
            return int(enc), self.total_retain - int(enc)
        if self.split == "explicit":
            if self.enc_count is None or self.dec_count is None:
                raise ValueError("explicit split needs enc_count and dec_count")
            if self.enc_count + self.dec_count != self.total_retain:
                raise ValueError("explicit counts must sum to total_retain")
            return self.enc_count, self.dec_count
        raise ValueError(f"unknown split {self.split!r}")

    def per_layer_quotas(self, n_enc_layers: int, n_dec_layers: int, num_experts: int) -> tuple[int, int]:
        """Experts kept per encoder layer and per decoder layer under fixed-per-layer pruning."""
        enc_total, dec_total = self.side_totals(n_enc_layers, n_dec_layers)
        quotas = []
        for total, n, side in ((enc_total, n_enc_layers, "encoder"), (dec_total, n_dec_layers, "decoder")):
            if n == 0:
                if total:
                    raise ValueError(f"{total} {side} experts requested but there are no {side} MoE layers")
                quotas.append(0)
                continue
            q, rem = divmod(total, n)
            if rem:
                raise ValueError(f"{total} {side} experts do not divide evenly over {n} layers")
            if q > num_experts:
                raise ValueError(f"{side} quota {q} exceeds {num_experts} experts per layer")
            if q < min(self.min_per_layer, num_experts):
                raise ValueError(f"{side} quota {q} is below min_per_layer={self.min_per_layer}")
            quotas.append(q)
        return quotas[0], quotas[1]


def prune_fixed_per_layer(table: MetricTable, budget: Budget, granularity: str = "none") -> PruningMask:
    """Keep the top-quota experts of every layer."""
    _require_normalized(table)
    enc, dec = table.side_layers("encoder"), table.side_layers("decoder")
    if len(enc) + len(dec) != len(table.layer_ids):
        raise ValueError("every layer of the table needs a side for fixed-per-layer pruning")
    q_enc, q_dec = budget.per_layer_quotas(len(enc), len(dec), table.num_experts)
    kept = {}
    for row, layer_id in enumerate(table.layer_ids):
        quota = q_enc if table.sides[layer_id] == "encoder" else q_dec
        kept[layer_id] = ranked_experts(table.values[row])[:quota].tolist()
    return _mask(table, kept, "fixed", granularity, budget.min_per_layer)


# global threshold

class ThresholdSolution(NamedTuple):
    theta: float
    scan_counts: np.ndarray  # (THETA_STEPS + 1, layers): n_k(theta) over the grid
    threshold_counts: np.ndarray  # n_k at the chosen theta
    counts: np.ndarray  # after residual repair; sums to the requested count
    kept: dict[int, list[int]]


def threshold_scan(table: MetricTable, min_per_layer: int) -> np.ndarray:
    """n_k(theta) for every grid theta and every layer.

    n_k(theta) is the smallest n whose top-n cumulative mass reaches theta,
    floored at min(min_per_layer, N).
    """
    n = table.num_experts
    floor = min(min_per_layer, n)
    thetas = np.arange(THETA_STEPS + 1) / THETA_STEPS
    out = np.empty((len(thetas), len(table.layer_ids)), dtype=np.int64)
    for row in range(len(table.layer_ids)):
        scores = table.values[row]
        cum = np.cumsum(scores[ranked_experts(scores)])
        first = np.searchsorted(cum, thetas - MASS_TOL, side="left") + 1
        out[:, row] = np.maximum(np.minimum(first, n), floor)
    return out


def solve_global_threshold(table: MetricTable, count: int, min_per_layer: int = 4) -> ThresholdSolution:
    _require_normalized(table)
    n_layers, n = len(table.layer_ids), table.num_experts
    floor = min(min_per_layer, n)
    if not n_layers * floor <= count <= n_layers * n:
        raise ValueError(f"cannot retain {count} experts over {n_layers} layers "
                         f"(feasible range {n_layers * floor}..{n_layers * n})")
    scan = threshold_scan(table, min_per_layer)
    feasible = np.nonzero(scan.sum(axis=1) <= count)[0]
    j = int(feasible[-1])
    counts = scan[j].copy()

    ranked = [ranked_experts(table.values[row]) for row in range(n_layers)]
    heap = []
    for row in range(n_layers):
        if counts[row] < n:
            e = ranked[row][counts[row]]
            heapq.heappush(heap, (-table.values[row, e], int(e), table.layer_ids[row], row))
    for _ in range(count - int(counts.sum())):
        _, _, _, row = heapq.heappop(heap)
        counts[row] += 1
        if counts[row] < n:
            e = ranked[row][counts[row]]
            heapq.heappush(heap, (-table.values[row, e], int(e), table.layer_ids[row], row))
    kept = {lid: ranked[row][: counts[row]].tolist() for row, lid in enumerate(table.layer_ids)}
    return ThresholdSolution(j / THETA_STEPS, scan, scan[j].copy(), counts, kept)


def prune_global_threshold(table: MetricTable, count: int, min_per_layer: int = 4,
                           granularity: str = "none") -> PruningMask:
    """Shared importance-mass threshold across all layers, then repaired to exactly ``count``."""
    sol = solve_global_threshold(table, count, min_per_layer)
    return _mask(table, sol.kept, "global-threshold", granularity, min_per_layer)


def prune_encdec_thresholds(table: MetricTable, enc_count: int, dec_count: int, min_per_layer: int = 4,
                            granularity: str = "none") -> PruningMask:
    """Independent global-threshold solves for the encoder and decoder layers."""
    parts = []
    for side, count in (("encoder", enc_count), ("decoder", dec_count)):
        layers = table.side_layers(side)
        if not layers:
            if count:
                raise ValueError(f"no {side} layers to hold {count} experts")
            continue
        try:
            sol = solve_global_threshold(table.subset(layers), count, min_per_layer)
        except ValueError as exc:
            raise ValueError(f"{side}: {exc}") from None
        parts.append(_mask(table.subset(layers), sol.kept, "encdec-threshold", granularity, min_per_layer))
    return PruningMask.combine(parts)


def random_mask(table: MetricTable, budget: Budget, seed: int, granularity: str = "none") -> PruningMask:
    """Uniformly random experts with the same per-layer quotas as fixed-per-layer pruning."""
    enc, dec = table.side_layers("encoder"), table.side_layers("decoder")
    q_enc, q_dec = budget.per_layer_quotas(len(enc), len(dec), table.num_experts)
    rng = np.random.default_rng(seed)
    kept = {}
    for layer_id in table.layer_ids:
        quota = q_enc if table.sides[layer_id] == "encoder" else q_dec
        kept[layer_id] = sorted(rng.choice(table.num_experts, size=quota, replace=False).tolist())
    return PruningMask(kept, table.num_experts, dict(table.sides), metric_kind="random",
                       granularity=granularity, algorithm="fixed", min_per_layer=budget.min_per_layer)


def prune(table: MetricTable, algorithm: str, budget: Budget, granularity: str = "none") -> PruningMask:
    """Dispatch on algorithm name: fixed, global-threshold or encdec-threshold."""
    if algorithm == "fixed":
        return prune_fixed_per_layer(table, budget, granularity)
    if algorithm == "global-threshold":
        return prune_global_threshold(table, budget.total_retain, budget.min_per_layer, granularity)
    if algorithm == "encdec-threshold":
        enc, dec = budget.side_totals(len(table.side_layers("encoder")), len(table.side_layers("decoder")))
        return prune_encdec_thresholds(table, enc, dec, budget.min_per_layer, granularity)
    raise ValueError(f"unknown pruning algorithm {algorithm!r}")
