import math

import numpy as np
import pytest
import torch

from moeprune.data import CorpusSample, LanguageSpec, Vocabulary, collate, generate_corpora
from moeprune.mask import PruningMask
from moeprune.moe import MoEModel, ModelConfig, gate_from_logits, load_balancing_loss, route
from moeprune.moe.checkpoint import load_checkpoint, read_checkpoint, save_checkpoint
from moeprune.moe.decode import translate_beam, translate_greedy
from moeprune.moe.gating import MoELayer, Routing, combination_weights, retained_bias
from moeprune.moe.train import compute_loss, token_accuracy, train, training_step


def small_config(**kw):
    base = dict(vocab_size=16, d_model=8, d_ffn=16, n_heads=2, enc_layers=2, dec_layers=2,
                moe_frequency=1, num_experts=4)
    base.update(kw)
    return ModelConfig(**base)


# gating

def test_tied_logits_pick_lowest_id():
    g = gate_from_logits([0.0, 0.0])
    np.testing.assert_allclose(g.gate_probs, [0.5, 0.5])
    assert (g.top1, g.top2) == (0, 1)


def test_descending_logits():
    g = gate_from_logits([2.0, 1.0, 0.0, -1.0])
    assert (g.top1, g.top2) == (0, 1)
    assert g.gate_top1 > g.gate_top2


def test_masked_gating_renormalizes_over_retained():
    g = gate_from_logits([2.0, 1.0, 0.0, -1.0], retained=[2, 3])
    assert (g.top1, g.top2) == (2, 3)
    assert g.gate_probs[2] + g.gate_probs[3] == pytest.approx(1.0, abs=1e-12)
    # hand softmax over logits (0, -1)
    assert g.gate_probs[2] == pytest.approx(1 / (1 + math.exp(-1)), abs=1e-12)
    assert g.gate_probs[0] == g.gate_probs[1] == 0.0


def test_mask_with_one_expert_is_rejected():
    with pytest.raises(ValueError):
        gate_from_logits([1.0, 2.0, 3.0], retained=[1])


def test_full_retention_gives_no_bias():
    assert retained_bias([0, 1, 2, 3], 4) is None
    assert retained_bias(None, 4) is None


def test_second_choice_never_pruned_even_with_tiny_probabilities():
    logits = torch.tensor([[50.0, -50.0, -60.0, 40.0]], dtype=torch.float64)
    r = route(logits, retained_bias([1, 2], 4, torch.float64))
    assert set(r.top_idx[0].tolist()) == {1, 2}


def test_gate_forward_rejects_dense_layer():
    model = MoEModel(small_config(moe_frequency=2))
    with pytest.raises(ValueError):
        model.gate_forward(torch.zeros(8), layer_id=99)


def test_gate_forward_matches_gate_from_logits():
    torch.manual_seed(0)
    model = MoEModel(small_config())
    x = torch.randn(8)
    d = model.gate_forward(x, 1)
    ref = gate_from_logits(model.moe_layer(1).gate(x).detach().double().numpy(), layer_id=1)
    assert (d.top1, d.top2) == (ref.top1, ref.top2)
    np.testing.assert_allclose(d.gate_probs, ref.gate_probs, atol=1e-6)


# combination

def test_combination_weights_renormalize():
    w = combination_weights(torch.tensor([0.3, 0.1], dtype=torch.float64))
    np.testing.assert_allclose(w.numpy(), [0.75, 0.25])


def _one_dim_layer(scales):
    layer = MoELayer(1, 1, len(scales)).double()
    with torch.no_grad():
        for expert, s in zip(layer.experts, scales):
            # relu(x) - relu(-x) = x, so fc2 weights (s, -s) realise x -> s*x
            expert.fc1 = torch.nn.Linear(1, 2).double()
            expert.fc1.weight.copy_(torch.tensor([[1.0], [-1.0]]))
            expert.fc1.bias.zero_()
            expert.fc2 = torch.nn.Linear(2, 1).double()
            expert.fc2.weight.copy_(torch.tensor([[s, -s]]))
            expert.fc2.bias.zero_()
    return layer


def test_identity_experts_pass_input_through():
    layer = _one_dim_layer([1.0, 1.0, 1.0])
    torch.manual_seed(3)
    with torch.no_grad():
        layer.gate.weight.copy_(torch.randn(3, 1))
    x = torch.linspace(-2, 2, 9, dtype=torch.float64).reshape(-1, 1)
    y, _ = layer(x)
    np.testing.assert_allclose(y.detach().numpy(), x.numpy(), atol=1e-12)


def test_one_dimensional_toy_combination():
    # E0(x)=2x, E1(x)=-x with gates (0.5, 0.25): (0.5*2x - 0.25x)/0.75 = x
    layer = _one_dim_layer([2.0, -1.0, 0.0])
    x = torch.tensor([[3.0]], dtype=torch.float64)
    # probabilities (0.5, 0.25, 0.25) from logits log p, with the tie broken towards expert 1
    logits = torch.log(torch.tensor([0.5, 0.25, 0.25], dtype=torch.float64))
    with torch.no_grad():
        layer.gate.weight.copy_((logits / 3.0).reshape(3, 1))
    y, routing = layer(x)
    assert routing.top_idx[0].tolist() == [0, 1]
    assert y.item() == pytest.approx(3.0, abs=1e-12)


def test_moe_layer_is_positively_homogeneous_in_gate_scale():
    torch.manual_seed(1)
    layer = MoELayer(4, 8, 4).double()
    x = torch.randn(5, 4, dtype=torch.float64)
    _, routing = layer(x)
    w = combination_weights(routing.top_vals)
    w2 = combination_weights(routing.top_vals * 7.0)
    np.testing.assert_allclose(w.detach().numpy(), w2.detach().numpy(), atol=1e-15)


def test_moe_layer_matches_dense_reference():
    torch.manual_seed(2)
    layer = MoELayer(4, 8, 4).double()
    x = torch.randn(6, 4, dtype=torch.float64)
    y, routing = layer(x)
    w = combination_weights(routing.top_vals)
    for t in range(6):
        i, j = routing.top_idx[t].tolist()
        ref = w[t, 0] * layer.experts[i](x[t]) + w[t, 1] * layer.experts[j](x[t])
        np.testing.assert_allclose(y[t].detach().numpy(), ref.detach().numpy(), atol=1e-12)


# load balancing

def _routing(probs, top1):
    probs = torch.as_tensor(probs, dtype=torch.float64)
    top1 = torch.as_tensor(top1)
    top_idx = torch.stack([top1, (top1 + 1) % probs.shape[-1]], dim=-1)
    return Routing(probs, top_idx, probs.gather(-1, top_idx))


def test_lb_loss_uniform_is_one():
    n = 4
    probs = torch.full((8, n), 1 / n)
    assert load_balancing_loss(_routing(probs, torch.arange(8) % n)).item() == pytest.approx(1.0)


def test_lb_loss_collapse_is_n():
    n = 4
    probs = torch.zeros(8, n)
    probs[:, 2] = 1.0
    assert load_balancing_loss(_routing(probs, torch.full((8,), 2))).item() == pytest.approx(n)


def test_lb_loss_ignores_padding():
    probs = torch.tensor([[1.0, 0.0], [0.0, 1.0]])
    valid = torch.tensor([True, False])
    assert load_balancing_loss(_routing(probs, torch.tensor([0, 1])), valid).item() == pytest.approx(2.0)


# training

def _toy_batch():
    vocab = Vocabulary(["aa", "bb"], 8)
    batch = [CorpusSample("aa", "bb", "w01 w02 w03", "w03 w02 w01"),
             CorpusSample("bb", "aa", "w04 w05", "w05 w04 w06")]
    return vocab, batch


def test_training_step_rejects_empty_batch():
    vocab, _ = _toy_batch()
    with pytest.raises(ValueError):
        training_step([], MoEModel(small_config(vocab_size=len(vocab))), vocab)


def test_training_step_returns_both_losses():
    vocab, batch = _toy_batch()
    torch.manual_seed(0)
    model = MoEModel(small_config(vocab_size=len(vocab)))
    losses = training_step(batch, model, vocab)
    assert losses.task.item() > 0
    # one lb term per MoE layer, each at least 1
    assert losses.lb.item() >= model.config.num_moe_layers - 1e-6
    assert losses.total.item() == pytest.approx(losses.task.item() + 0.01 * losses.lb.item(), rel=1e-6)


def test_gradient_check_task_plus_load_balancing():
    """Central differences (step 1e-4) vs autograd, 2 experts, d_model 4, float64."""
    vocab, batch = _toy_batch()
    cfg = ModelConfig(vocab_size=len(vocab), d_model=4, d_ffn=8, n_heads=1, enc_layers=1, dec_layers=1,
                      moe_frequency=1, num_experts=2, lb_loss_coeff=0.5)
    torch.manual_seed(0)
    model = MoEModel(cfg).double()
    src, tgt_in, tgt_out = collate(batch, vocab)

    def loss():
        return compute_loss(model, src, tgt_in, tgt_out).total

    model.zero_grad()
    loss().backward()
    h = 1e-4
    worst = 0.0
    for name, p in model.named_parameters():
        analytic = p.grad.detach().clone()
        numeric = torch.zeros_like(p)
        flat, nflat = p.data.view(-1), numeric.view(-1)
        with torch.no_grad():
            for i in range(flat.numel()):
                orig = flat[i].item()
                flat[i] = orig + h
                up = loss().item()
                flat[i] = orig - h
                down = loss().item()
                flat[i] = orig
                nflat[i] = (up - down) / (2 * h)
        scale = max(analytic.norm().item(), numeric.norm().item())
        if scale < 1e-10:
            continue
        rel = (analytic - numeric).norm().item() / scale
        worst = max(worst, rel)
        assert rel <= 1e-3, f"{name}: relative error {rel:.2e}"
    assert worst <= 1e-3


# decoding

@pytest.fixture(scope="module")
def tiny_model():
    torch.manual_seed(0)
    langs = [LanguageSpec("aa"), LanguageSpec("bb", 5)]
    corpora = generate_corpora(langs, {"train": 30, "valid": 5, "test": 5}, seed=1, base_vocab=8, num_words=8)
    vocab = Vocabulary(["aa", "bb"], 8)
    model = MoEModel(small_config(vocab_size=len(vocab)))
    train(model, corpora["train"], vocab, steps=30, batch_size=16, lr=3e-3)
    return model, vocab, corpora


def test_beam_one_equals_greedy(tiny_model):
    model, vocab, corpora = tiny_model
    for s in corpora["test"]:
        assert translate_beam(s, model, vocab, beam_size=1) == translate_greedy(s, model, vocab)


def test_full_mask_decodes_token_identically(tiny_model):
    model, vocab, corpora = tiny_model
    full = PruningMask.full(model.config)
    for s in corpora["test"]:
        assert translate_beam(s, model, vocab, mask=full) == translate_beam(s, model, vocab)


def test_unknown_language_is_rejected(tiny_model):
    model, vocab, _ = tiny_model
    with pytest.raises(ValueError):
        translate_beam(CorpusSample("aa", "zz", "w01", "w01"), model, vocab)


def test_pruned_decoding_never_visits_pruned_experts(tiny_model):
    model, vocab, corpora = tiny_model
    mask = PruningMask({l: (1, 3) for l in range(model.config.num_moe_layers)}, 4,
                       {i.layer_id: i.side for i in model.config.moe_layers})
    seen = set()

    class Sink:
        def record_routing(self, layer_id, side, probs, top_idx, top_vals, src_lang, tgt_lang):
            seen.update(np.asarray(top_idx).ravel().tolist())
            assert np.all(np.asarray(probs)[..., [0, 2]] == 0)

    for s in corpora["test"]:
        translate_beam(s, model, vocab, mask=mask, recorder=Sink())
    assert seen == {1, 3}


def test_copy_task_reproduces_source():
    torch.manual_seed(0)
    langs = [LanguageSpec("src"), LanguageSpec("cpy")]
    corpora = generate_corpora(langs, {"train": 600, "valid": 20, "test": 10}, seed=0,
                               base_vocab=10, num_words=10, min_len=3, max_len=6)
    vocab = Vocabulary(["src", "cpy"], 10)
    model = MoEModel(small_config(vocab_size=len(vocab), d_model=32, d_ffn=64, n_heads=2))
    history = train(model, corpora["train"], vocab, steps=600, batch_size=32, lr=3e-3,
                    valid=corpora["valid"], eval_every=100, target_accuracy=0.995)
    assert history[-1]["valid_acc"] >= 0.99
    for s in corpora["test"]:
        if s.direction == ("src", "cpy"):
            assert translate_beam(s, model, vocab) == s.src_text


# checkpoints

def test_checkpoint_round_trip(tmp_path, tiny_model):
    model, vocab, corpora = tiny_model
    path = tmp_path / "m.ckpt"
    save_checkpoint(model, path, extra={"languages": ["aa", "bb"]})
    loaded, extra = load_checkpoint(path)
    assert extra == {"languages": ["aa", "bb"]}
    assert loaded.config == model.config
    for (k, a), (_, b) in zip(model.state_dict().items(), loaded.state_dict().items()):
        assert torch.equal(a, b), k
    assert token_accuracy(loaded, corpora["test"], vocab) == token_accuracy(model, corpora["test"], vocab)


def test_checkpoint_rejects_foreign_file(tmp_path):
    p = tmp_path / "x"
    p.write_bytes(b"not a checkpoint")
    with pytest.raises(ValueError):
        read_checkpoint(p)
