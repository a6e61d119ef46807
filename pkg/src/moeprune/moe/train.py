"""Label-smoothed cross-entropy plus load balancing, and a plain Adam loop."""

from __future__ import annotations

import logging
import time
from typing import NamedTuple, Sequence

import numpy as np
import torch
from torch.nn import functional as F

from ..data import PAD, CorpusSample, Vocabulary, collate
from .gating import load_balancing_loss
from .model import MoEModel

log = logging.getLogger(__name__)


class LossComponents(NamedTuple):
    task: torch.Tensor
    lb: torch.Tensor  # summed over MoE layers, unweighted
    total: torch.Tensor


def compute_loss(model: MoEModel, src, tgt_in, tgt_out) -> LossComponents:
    if src.shape[0] == 0:
        raise ValueError("empty batch")
    logits, routings = model(src, tgt_in)
    task = F.cross_entropy(
        logits.reshape(-1, logits.shape[-1]),
        tgt_out.reshape(-1),
        ignore_index=PAD,
        label_smoothing=model.config.label_smoothing,
    )
    lb = sum(load_balancing_loss(r.routing, r.valid) for r in routings)
    if not routings:
        lb = torch.zeros((), dtype=task.dtype)
    return LossComponents(task, lb, task + model.config.lb_loss_coeff * lb)


def training_step(batch: Sequence[CorpusSample], model: MoEModel, vocab: Vocabulary,
                  optimizer: torch.optim.Optimizer | None = None) -> LossComponents:
    """One forward/backward pass; steps ``optimizer`` when given."""
    if len(batch) == 0:
        raise ValueError("empty batch")
    model.train()
    src, tgt_in, tgt_out = collate(batch, vocab)
    if optimizer is not None:
        optimizer.zero_grad()
    losses = compute_loss(model, src, tgt_in, tgt_out)
    losses.total.backward()
    if optimizer is not None:
        optimizer.step()
    return losses


@torch.no_grad()
def token_accuracy(model: MoEModel, samples: Sequence[CorpusSample], vocab: Vocabulary,
                   batch_size: int = 256) -> float:
    """Teacher-forced argmax accuracy over non-padding target tokens (EOS included)."""
    model.eval()
    correct = total = 0
    for i in range(0, len(samples), batch_size):
        src, tgt_in, tgt_out = collate(samples[i : i + batch_size], vocab)
        logits, _ = model(src, tgt_in)
        keep = tgt_out != PAD
        correct += int(((logits.argmax(-1) == tgt_out) & keep).sum())
        total += int(keep.sum())
    return correct / total


def train(
    model: MoEModel,
    samples: Sequence[CorpusSample],
    vocab: Vocabulary,
    steps: int = 3000,
    batch_size: int = 64,
    lr: float = 2e-3,
    seed: int = 0,
    valid: Sequence[CorpusSample] | None = None,
    eval_every: int = 500,
    target_accuracy: float | None = None,
) -> list[dict]:
    """Train with Adam at a fixed learning rate.

    Stops early once ``valid`` accuracy reaches ``target_accuracy``.
    Returns the evaluation history.
    """
    torch.manual_seed(seed)
    rng = np.random.default_rng(seed)
    opt = torch.optim.Adam(model.parameters(), lr=lr)
    history = []
    start = time.perf_counter()
    order = rng.permutation(len(samples))
    pos = 0
    for step in range(1, steps + 1):
        if pos + batch_size > len(order):
            order, pos = rng.permutation(len(samples)), 0
        batch = [samples[j] for j in order[pos : pos + batch_size]]
        pos += batch_size
        losses = training_step(batch, model, vocab, opt)
        if valid is not None and (step % eval_every == 0 or step == steps):
            acc = token_accuracy(model, valid, vocab)
            entry = dict(step=step, task=losses.task.item(), lb=losses.lb.item(), valid_acc=acc,
                         seconds=time.perf_counter() - start)
            history.append(entry)
            log.info("step %d task %.4f lb %.4f valid_acc %.4f (%.0fs)", step, entry["task"],
                     entry["lb"], acc, entry["seconds"])
            if target_accuracy is not None and acc >= target_accuracy:
                break
    model.eval()
    return history
