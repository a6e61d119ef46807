import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from moeprune.mask import PruningMask, dumps, load_mask, loads, save_mask
from moeprune.moe import ModelConfig
from moeprune.pruning import (Budget, MetricTable, compute_metric, normalize_per_layer, prune,
                              prune_encdec_thresholds, prune_fixed_per_layer, prune_global_threshold,
                              random_mask, ranked_experts, solve_global_threshold, threshold_scan)
from moeprune.stats import FinalStats

import oracles


def table(rows, sides=None, kind="importance"):
    values = np.asarray(rows, dtype=np.float64)
    ids = tuple(range(len(values)))
    if sides is None:
        half = len(ids) // 2
        sides = {i: "encoder" if i < half else "decoder" for i in ids}
    return normalize_per_layer(MetricTable(kind, ids, values, False, sides))


def final(top1, conf, mean=None, top2=None):
    top1 = np.atleast_2d(top1)
    conf = np.atleast_2d(conf)
    mean = top1 if mean is None else np.atleast_2d(mean)
    top2 = top1 if top2 is None else np.atleast_2d(top2)
    return FinalStats(tuple(range(top1.shape[0])), top1, top2, mean, conf)


# metrics

def test_metric_formulas():
    f = final([[0.5, 0.5]], [[0.8, 0.2]], mean=[[0.3, 0.7]], top2=[[1.0, 1.0]])
    assert compute_metric(f, "importance_vanilla").values[0, 0] == pytest.approx(0.40)
    assert compute_metric(f, "importance").values[0, 0] == pytest.approx(0.5 * math.exp(0.8))
    assert compute_metric(f, "importance").values[0, 0] == pytest.approx(1.1128, abs=1e-4)
    assert compute_metric(f, "load_balancing").values[0, 1] == pytest.approx(0.35)
    assert compute_metric(f, "top2").values.tolist() == [[1.0, 1.0]]


def test_zero_top1_zeroes_every_metric():
    f = final([[0.0, 1.0]], [[0.0, 0.9]], mean=[[0.2, 0.8]], top2=[[0.0, 2.0]])
    for kind in ("top1", "top2", "load_balancing", "importance_vanilla", "importance"):
        assert compute_metric(f, kind).values[0, 0] == 0.0


def test_unknown_metric_rejected():
    with pytest.raises(ValueError):
        compute_metric(final([[1.0]], [[1.0]]), "bogus")


def test_importance_reorders_against_vanilla():
    # expert 0: frequent but unsure; expert 1: rarer but confident
    f = final([[0.55, 0.45]], [[0.5, 0.62]])
    vanilla = compute_metric(f, "importance_vanilla").values[0]
    smoothed = compute_metric(f, "importance").values[0]
    assert vanilla[1] > vanilla[0]
    assert smoothed[0] > smoothed[1]


def test_importance_keeps_conf_order_at_fixed_top1():
    f = final([[0.25] * 4], [[0.9, 0.3, 0.6, 0.5]])
    assert ranked_experts(compute_metric(f, "importance").values[0]).tolist() == [0, 2, 3, 1]


def test_normalize_per_layer():
    t = normalize_per_layer(MetricTable("top1", (0,), np.array([[1.0, 1.0, 2.0]])))
    assert t.values.tolist() == [[0.25, 0.25, 0.5]]


def test_normalize_rejects_zero_layer():
    with pytest.raises(ValueError, match="7"):
        normalize_per_layer(MetricTable("top1", (3, 7), np.array([[1.0, 0.0], [0.0, 0.0]])))


def test_ranking_breaks_ties_by_lower_id():
    assert ranked_experts(np.array([0.2, 0.4, 0.2, 0.4])).tolist() == [1, 3, 0, 2]


# budgets at reference scale

def test_reference_budget_balanced_75():
    b = Budget.from_rate(0.75, 1536)
    assert b.total_retain == 384
    assert b.per_layer_quotas(6, 6, 128) == (32, 32)


def test_reference_budget_unbalanced_75():
    b = Budget.from_rate(0.75, 1536, split="explicit", enc_count=240, dec_count=144)
    assert b.side_totals(6, 6) == (240, 144)
    assert b.per_layer_quotas(6, 6, 128) == (40, 24)
    assert Budget.from_rate(0.75, 1536, split="ratio", ratio=(5, 3)).per_layer_quotas(6, 6, 128) == (40, 24)


def test_reference_budget_80_at_three_to_one():
    b = Budget.from_rate(0.8, 1536, layers=(6, 6), split="ratio", ratio=(3, 1))
    assert b.total_retain == 288
    assert b.side_totals(6, 6) == (216, 72)
    assert b.per_layer_quotas(6, 6, 128) == (36, 12)


def test_fractional_budget_without_layers_is_rejected():
    with pytest.raises(ValueError):
        Budget.from_rate(0.8, 1536)


def test_non_integral_quota_is_rejected():
    with pytest.raises(ValueError):
        Budget(18).per_layer_quotas(2, 2, 8)  # 4.5 per layer


def test_quota_below_floor_is_rejected():
    with pytest.raises(ValueError):
        Budget(8, min_per_layer=4).per_layer_quotas(2, 2, 8)


# fixed per layer

def test_fixed_per_layer_keeps_top_quota():
    t = table([[0.1, 0.4, 0.3, 0.2], [0.4, 0.3, 0.2, 0.1]])
    mask = prune_fixed_per_layer(t, Budget(4, min_per_layer=1))
    assert mask.layers == {0: (1, 2), 1: (0, 1)}


def test_fixed_per_layer_needs_normalized_table():
    raw = MetricTable("top1", (0, 1), np.ones((2, 4)), False, {0: "encoder", 1: "decoder"})
    with pytest.raises(ValueError):
        prune_fixed_per_layer(raw, Budget(4, min_per_layer=1))


# global threshold

EXAMPLE = [[0.7, 0.2, 0.06, 0.04], [0.4, 0.3, 0.2, 0.1]]


def test_global_threshold_worked_example():
    # Oracle: theta=0.900 gives n=(2,3) summing to 5; theta=0.901 gives (3,4).
    theta, kept = oracles.threshold_oracle(EXAMPLE, 5, 1)
    assert theta == 0.9
    assert kept == {0: [0, 1], 1: [0, 1, 2]}
    sol = solve_global_threshold(table(EXAMPLE), 5, 1)
    assert sol.theta == theta
    assert prune_global_threshold(table(EXAMPLE), 5, 1).layers == {0: (0, 1), 1: (0, 1, 2)}


def test_global_threshold_full_count_is_full_mask():
    t = table(np.random.default_rng(0).random((4, 6)))
    assert prune_global_threshold(t, 24, 2).is_full()


def test_global_threshold_infeasible_count():
    with pytest.raises(ValueError):
        prune_global_threshold(table(EXAMPLE), 1, 1)
    with pytest.raises(ValueError):
        prune_global_threshold(table(EXAMPLE), 9, 1)


def test_uniform_metrics_spread_evenly():
    for layers, n, count in [(3, 8, 10), (5, 4, 13), (4, 16, 30)]:
        mask = prune_global_threshold(table(np.ones((layers, n))), count, 1)
        counts = list(mask.counts().values())
        assert sum(counts) == count
        assert max(counts) - min(counts) <= 1


def random_tables(draw_layers=st.integers(1, 6), experts=st.sampled_from([4, 8, 16])):
    @st.composite
    def build(draw):
        layers, n = draw(draw_layers), draw(experts)
        seed = draw(st.integers(0, 2**32 - 1))
        rng = np.random.default_rng(seed)
        values = rng.random((layers, n)) ** draw(st.sampled_from([1, 3, 8]))
        values[:, 0] += 1e-6
        floor = draw(st.integers(1, min(4, n)))
        count = draw(st.integers(layers * floor, layers * n))
        return values, floor, count
    return build()


@settings(max_examples=80, deadline=None)
@given(random_tables())
def test_global_threshold_properties(case):
    values, floor, count = case
    t = table(values)
    sol = solve_global_threshold(t, count, floor)
    assert int(sol.counts.sum()) == count
    assert sol.counts.min() >= floor
    assert np.all(np.diff(sol.scan_counts, axis=0) >= 0)
    # each layer keeps a prefix of its ranking
    for row, lid in enumerate(t.layer_ids):
        assert sol.kept[lid] == ranked_experts(t.values[row])[: sol.counts[row]].tolist()


@settings(max_examples=60, deadline=None)
@given(random_tables(st.integers(1, 3), st.sampled_from([2, 3, 4, 5])))
def test_global_threshold_matches_oracle(case):
    values, floor, count = case
    t = table(values)
    theta, kept = oracles.threshold_oracle(t.values.tolist(), count, floor)
    sol = solve_global_threshold(t, count, floor)
    assert sol.theta == theta
    assert {k: sorted(v) for k, v in sol.kept.items()} == kept


@settings(max_examples=30, deadline=None)
@given(random_tables(), st.sampled_from([2.0**k for k in range(-8, 9)]))
def test_global_threshold_is_scale_invariant(case, scale):
    # power-of-two scales keep normalization bit-exact
    values, floor, count = case
    a = prune_global_threshold(table(values), count, floor)
    b = prune_global_threshold(table(values * scale), count, floor)
    assert a.layers == b.layers


def test_threshold_scan_floor_applies_at_zero():
    scan = threshold_scan(table(EXAMPLE), 2)
    assert scan[0].tolist() == [2, 2]
    assert scan[-1].tolist() == [4, 4]


# encoder/decoder thresholds

def test_encdec_full_counts_give_full_mask():
    t = table(np.random.default_rng(1).random((4, 4)))
    assert prune_encdec_thresholds(t, 8, 8, 1).is_full()


def test_encdec_symmetric_table_gives_mirrored_masks():
    rows = np.random.default_rng(2).random((2, 8))
    t = table(np.vstack([rows, rows]))
    mask = prune_encdec_thresholds(t, 7, 7, 2)
    assert mask.layers[0] == mask.layers[2]
    assert mask.layers[1] == mask.layers[3]


def test_encdec_infeasible_side_is_named():
    with pytest.raises(ValueError, match="decoder"):
        prune_encdec_thresholds(table(np.ones((4, 4))), 4, 1, 1)


def test_prune_dispatch_and_counts():
    t = table(np.random.default_rng(3).random((4, 8)))
    budget = Budget(16, min_per_layer=2)
    for algo in ("fixed", "global-threshold", "encdec-threshold"):
        mask = prune(t, algo, budget)
        assert mask.total_retained == 16
        assert mask.algorithm == algo
    with pytest.raises(ValueError):
        prune(t, "magic", budget)


def test_random_mask_respects_quotas_and_seed():
    t = table(np.ones((4, 8)))
    a = random_mask(t, Budget(16), seed=7)
    assert a.counts() == {0: 4, 1: 4, 2: 4, 3: 4}
    assert a.layers == random_mask(t, Budget(16), seed=7).layers
    assert a.layers != random_mask(t, Budget(16), seed=8).layers


# masks

def test_mask_file_round_trip(tmp_path):
    mask = prune_global_threshold(table(EXAMPLE), 5, 1, granularity="lang_pair:la-lb")
    text = dumps(mask)
    assert dumps(loads(text)) == text
    save_mask(mask, tmp_path / "m.mask")
    assert (tmp_path / "m.mask").read_text() == text
    back = load_mask(tmp_path / "m.mask")
    assert back.layers == mask.layers and back.granularity == "lang_pair:la-lb"


def test_full_mask_for_config():
    cfg = ModelConfig()
    mask = PruningMask.full(cfg)
    assert mask.total_retained == cfg.total_experts == 32
    mask.validate_for(cfg)


def test_mask_rejects_out_of_range_and_duplicate_ids():
    with pytest.raises(ValueError):
        PruningMask({0: (3, 8)}, 8, {0: "encoder"})
    with pytest.raises(ValueError):
        PruningMask({0: (3, 3)}, 8, {0: "encoder"})
