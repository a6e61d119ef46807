"""Length-normalized beam search with optional gate-statistics recording."""

from __future__ import annotations

from typing import Protocol, Sequence

import numpy as np
import torch

from ..data import EOS, CorpusSample, Vocabulary, pad_batch
from ..mask import PruningMask
from .model import LayerRouting, MoEModel


class RoutingSink(Protocol):
    def record_routing(self, layer_id: int, side: str, probs: np.ndarray, top_idx: np.ndarray,
                       top_vals: np.ndarray, src_lang: str, tgt_lang: str) -> None: ...


def default_max_len(src_len: int) -> int:
    return 2 * src_len + 8


def _banned(vocab: Vocabulary, size: int) -> torch.Tensor:
    ban = torch.zeros(size, dtype=torch.bool)
    ban[vocab.special_ids] = True
    return ban


@torch.no_grad()
def beam_search(model: MoEModel, src_ids: Sequence[int], tgt_lang_id: int, banned: torch.Tensor,
                beam_size: int, max_len: int, biases: dict) -> list[int]:
    """Output word ids of the best hypothesis, including the final EOS if one was produced."""
    src = torch.tensor([list(src_ids)], dtype=torch.long)
    memory, src_pad, _ = model.encode(src, biases=biases)
    live: list[tuple[list[int], float]] = [([], 0.0)]
    finished: list[tuple[float, int, list[int]]] = []
    for step in range(max_len):
        k = len(live)
        tgt_in = torch.tensor([[tgt_lang_id] + toks for toks, _ in live], dtype=torch.long)
        logits, _ = model.decode(tgt_in, memory.expand(k, -1, -1), src_pad.expand(k, -1), biases=biases)
        logp = torch.log_softmax(logits[:, -1].double(), dim=-1)
        logp[:, banned] = float("-inf")
        scores = torch.tensor([s for _, s in live], dtype=torch.float64)[:, None] + logp
        flat = scores.reshape(-1)
        order = torch.sort(flat, descending=True, stable=True).indices
        vocab_size = logp.shape[1]
        new_live = []
        for rank, idx in enumerate(order.tolist()):
            if len(new_live) == beam_size:
                break
            score = float(flat[idx])
            if score == float("-inf"):
                break
            h, tok = divmod(idx, vocab_size)
            toks = live[h][0] + [tok]
            if tok == EOS:
                if rank < beam_size:
                    finished.append((score / len(toks), len(finished), toks))
                continue
            new_live.append((toks, score))
        if len(finished) >= beam_size or not new_live:
            break
        live = new_live
    else:
        # max length reached: unfinished hypotheses compete as they are
        for toks, score in live:
            finished.append((score / max(len(toks), 1), len(finished), toks))
    if not finished:
        finished = [(s / max(len(t), 1), i, t) for i, (t, s) in enumerate(live)]
    best = max(finished, key=lambda f: (f[0], -f[1]))
    return best[2]


@torch.no_grad()
def greedy_search(model: MoEModel, src_ids: Sequence[int], tgt_lang_id: int, banned: torch.Tensor,
                  max_len: int, biases: dict) -> list[int]:
    src = torch.tensor([list(src_ids)], dtype=torch.long)
    memory, src_pad, _ = model.encode(src, biases=biases)
    toks: list[int] = []
    for _ in range(max_len):
        tgt_in = torch.tensor([[tgt_lang_id] + toks], dtype=torch.long)
        logits, _ = model.decode(tgt_in, memory, src_pad, biases=biases)
        logit = logits[0, -1].double()
        logit[banned] = float("-inf")
        tok = int(logit.argmax())
        toks.append(tok)
        if tok == EOS:
            break
    return toks


@torch.no_grad()
def record_hypothesis(model: MoEModel, src_ids: Sequence[int], tgt_lang_id: int, out_ids: Sequence[int],
                      biases: dict, recorder: RoutingSink, src_lang: str, tgt_lang: str) -> None:
    """Re-run the selected hypothesis teacher-forced and forward its gate decisions.

    Encoder positions cover the whole source; decoder positions are the inputs
    that produced each output token (target tag plus all but the last token).
    """
    src = torch.tensor([list(src_ids)], dtype=torch.long)
    tgt_in = torch.tensor([[tgt_lang_id] + list(out_ids[:-1])], dtype=torch.long)
    memory, src_pad, enc_r = model.encode(src, biases=biases)
    _, dec_r = model.decode(tgt_in, memory, src_pad, biases=biases)
    for lr in enc_r + dec_r:
        _forward_routing(lr, recorder, src_lang, tgt_lang)


def _forward_routing(lr: LayerRouting, recorder: RoutingSink, src_lang: str, tgt_lang: str) -> None:
    keep = lr.valid[0]
    r = lr.routing
    recorder.record_routing(
        lr.layer_id,
        lr.side,
        r.probs[0][keep].double().numpy(),
        r.top_idx[0][keep].numpy(),
        r.top_vals[0][keep].double().numpy(),
        src_lang,
        tgt_lang,
    )


def translate_beam(
    sample: CorpusSample,
    model: MoEModel,
    vocab: Vocabulary,
    mask: PruningMask | None = None,
    recorder: RoutingSink | None = None,
    beam_size: int | None = None,
    max_len: int | None = None,
    biases: dict | None = None,
) -> str:
    """Translate ``sample.src_text`` into ``sample.tgt_lang``; returns whitespace-joined words."""
    model.eval()
    beam_size = model.config.beam_size if beam_size is None else beam_size
    if beam_size < 1:
        raise ValueError("beam_size must be >= 1")
    src_ids = vocab.encode_source(sample)
    tgt_id = vocab.lang_id(sample.tgt_lang)
    if max_len is None:
        max_len = default_max_len(len(sample.src_text.split()))
    if biases is None:
        biases = model.mask_biases(mask)
    banned = _banned(vocab, model.config.vocab_size)
    out = beam_search(model, src_ids, tgt_id, banned, beam_size, max_len, biases)
    if recorder is not None and out:
        record_hypothesis(model, src_ids, tgt_id, out, biases, recorder, sample.src_lang, sample.tgt_lang)
    return vocab.decode_words(out)


def translate_greedy(sample: CorpusSample, model: MoEModel, vocab: Vocabulary,
                     mask: PruningMask | None = None, max_len: int | None = None) -> str:
    model.eval()
    if max_len is None:
        max_len = default_max_len(len(sample.src_text.split()))
    banned = _banned(vocab, model.config.vocab_size)
    out = greedy_search(model, vocab.encode_source(sample), vocab.lang_id(sample.tgt_lang), banned,
                        max_len, model.mask_biases(mask))
    return vocab.decode_words(out)


def translate_corpus(samples: Sequence[CorpusSample], model: MoEModel, vocab: Vocabulary,
                     mask: PruningMask | None = None, recorder: RoutingSink | None = None,
                     beam_size: int | None = None) -> list[str]:
    biases = model.mask_biases(mask)
    return [translate_beam(s, model, vocab, recorder=recorder, beam_size=beam_size, biases=biases)
            for s in samples]
