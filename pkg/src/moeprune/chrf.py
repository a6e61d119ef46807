"""chrF++: character 1-6-gram plus word 1-2-gram F-score.

Corpus scores sum n-gram statistics over all segments first, then average
precision and recall over the effective orders (those with hypothesis and
reference n-grams) and combine them into F-beta.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Sequence

_PUNCTUATION = set("!\"#$%&'()*+,-./:;<=>?@[\\]^_`{|}~")


@dataclass(frozen=True)
class ChrfParams:
    char_ngram_max: int = 6
    word_ngram_max: int = 2
    beta: float = 2.0

    def __post_init__(self):
        if self.beta <= 0:
            raise ValueError("beta must be positive")
        if self.char_ngram_max < 1 or self.word_ngram_max < 0:
            raise ValueError("invalid n-gram orders")

    @property
    def num_orders(self) -> int:
        return self.char_ngram_max + self.word_ngram_max


def _ngrams(items: Sequence, n: int) -> Counter:
    return Counter(tuple(items[i : i + n]) for i in range(len(items) - n + 1))


def _words(text: str) -> list[str]:
    out = []
    for w in text.split():
        if len(w) > 1 and w[-1] in _PUNCTUATION:
            out += [w[:-1], w[-1]]
        elif len(w) > 1 and w[0] in _PUNCTUATION:
            out += [w[0], w[1:]]
        else:
            out.append(w)
    return out


def _match(h: Counter, r: Counter) -> list[int]:
    # hypothesis n-grams of an order the reference lacks entirely are not counted
    return [sum(h.values()) if r else 0, sum(r.values()), sum((h & r).values())]


def segment_statistics(hyp: str, ref: str, params: ChrfParams = ChrfParams()) -> list[int]:
    """[hyp_count, ref_count, match_count] per order: char orders first, then word orders."""
    stats = []
    hyp_chars, ref_chars = "".join(hyp.split()), "".join(ref.split())
    for n in range(1, params.char_ngram_max + 1):
        stats += _match(_ngrams(hyp_chars, n), _ngrams(ref_chars, n))
    hyp_words, ref_words = _words(hyp), _words(ref)
    for n in range(1, params.word_ngram_max + 1):
        stats += _match(_ngrams(hyp_words, n), _ngrams(ref_words, n))
    return stats


def f_score(stats: Sequence[float], params: ChrfParams = ChrfParams()) -> float:
    """Score in [0, 100] from summed statistics."""
    prec = rec = 0.0
    effective = 0
    for i in range(params.num_orders):
        n_hyp, n_ref, n_match = stats[3 * i : 3 * i + 3]
        if n_hyp > 0 and n_ref > 0:
            prec += n_match / n_hyp
            rec += n_match / n_ref
            effective += 1
    if effective == 0:
        return 0.0
    prec /= effective
    rec /= effective
    if prec + rec == 0:
        return 0.0
    b2 = params.beta ** 2
    return 100.0 * (1 + b2) * prec * rec / (b2 * prec + rec)


def _best_reference_stats(hyp: str, refs: Sequence[str], params: ChrfParams) -> list[int]:
    best, best_f = None, -1.0
    for ref in refs:
        s = segment_statistics(hyp, ref, params)
        f = f_score(s, params)
        if f > best_f:
            best, best_f = s, f
    return best


def corpus_chrf(hypotheses: Sequence[str], references: Sequence[Sequence[str]] | Sequence[str],
                params: ChrfParams = ChrfParams()) -> float:
    """Corpus chrF++.

    ``references`` holds one entry per hypothesis: either a string or a list
    of alternative references (the best-scoring one is used per segment).
    """
    if len(hypotheses) != len(references):
        raise ValueError(f"{len(hypotheses)} hypotheses but {len(references)} references")
    totals = [0] * (3 * params.num_orders)
    for hyp, refs in zip(hypotheses, references):
        refs = [refs] if isinstance(refs, str) else list(refs)
        if not refs:
            raise ValueError("each hypothesis needs at least one reference")
        for i, v in enumerate(_best_reference_stats(hyp, refs, params)):
            totals[i] += v
    return f_score(totals, params)


def chrf_pp(hypothesis: str, references: Sequence[str] | str, params: ChrfParams = ChrfParams()) -> float:
    """Sentence-level chrF++ against one or more references."""
    refs = [references] if isinstance(references, str) else list(references)
    if not refs:
        raise ValueError("at least one reference is required")
    return corpus_chrf([hypothesis], [refs], params)
