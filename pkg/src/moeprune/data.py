"""Synthetic multilingual parallel corpora, vocabulary and TSV I/O.

Each artificial language maps a shared base vocabulary onto surface word
tokens through a deterministic substitution cipher and then applies a
sequence transform (identity, reversal or rotation). Sentences are sampled
in the base vocabulary, so every direction has a checkable ground truth.
"""

from __future__ import annotations

import itertools
import zlib
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import torch

SPECIALS = ("<pad>", "<unk>", "</s>", "<s>")
PAD, UNK, EOS, BOS = range(4)
TRANSFORMS = ("identity", "reverse", "rotate")


@dataclass(frozen=True)
class CorpusSample:
    src_lang: str
    tgt_lang: str
    src_text: str
    tgt_text: str

    @property
    def direction(self) -> tuple[str, str]:
        return self.src_lang, self.tgt_lang


@dataclass(frozen=True)
class LanguageSpec:
    """``cipher_seed=None`` is the identity cipher (base word i -> surface word i)."""

    code: str
    cipher_seed: int | None = None
    transform: str = "identity"
    shift: int = 1  # for rotate

    def __post_init__(self):
        if self.transform not in TRANSFORMS:
            raise ValueError(f"unknown transform {self.transform!r}; expected one of {TRANSFORMS}")
        if not self.code or any(c.isspace() for c in self.code) or "-" in self.code:
            raise ValueError(f"invalid language code {self.code!r}")


def word_token(i: int) -> str:
    return f"w{i:02d}"


class SyntheticLanguage:
    """``pool`` is the surface word ids the cipher may use (ignored by the identity cipher)."""

    def __init__(self, spec: LanguageSpec, base_vocab: int, pool: Sequence[int]):
        if base_vocab > len(pool):
            raise ValueError("base vocabulary larger than the surface word pool")
        self.spec = spec
        if spec.cipher_seed is None:
            self.cipher = np.arange(base_vocab)
        else:
            rng = np.random.default_rng([spec.cipher_seed, 0xC1FE])
            self.cipher = np.asarray(pool)[rng.permutation(len(pool))[:base_vocab]]

    @property
    def code(self) -> str:
        return self.spec.code

    def apply_transform(self, seq: Sequence) -> list:
        seq = list(seq)
        if self.spec.transform == "reverse":
            return seq[::-1]
        if self.spec.transform == "rotate" and seq:
            k = self.spec.shift % len(seq)
            return seq[k:] + seq[:k]
        return seq

    def realize(self, base: Sequence[int]) -> str:
        """Surface text of a base-vocabulary sentence."""
        return " ".join(word_token(int(self.cipher[b])) for b in self.apply_transform(base))


class Vocabulary:
    """Specials, then one tag per language, then surface words ``w00..``."""

    def __init__(self, lang_codes: Iterable[str], num_words: int):
        self.lang_codes = list(lang_codes)
        self.num_words = num_words
        self.tokens = list(SPECIALS) + [self.lang_tag(c) for c in self.lang_codes] + [
            word_token(i) for i in range(num_words)
        ]
        self.index = {t: i for i, t in enumerate(self.tokens)}
        if len(self.index) != len(self.tokens):
            raise ValueError("duplicate vocabulary entries")

    @staticmethod
    def lang_tag(code: str) -> str:
        return f"__{code}__"

    def __len__(self) -> int:
        return len(self.tokens)

    def lang_id(self, code: str) -> int:
        try:
            return self.index[self.lang_tag(code)]
        except KeyError:
            raise ValueError(f"unknown language code {code!r}") from None

    @property
    def special_ids(self) -> list[int]:
        """Ids never emitted by the decoder (everything but words and EOS)."""
        return [i for i in range(len(SPECIALS) + len(self.lang_codes)) if i != EOS]

    def encode_words(self, text: str) -> list[int]:
        return [self.index.get(t, UNK) for t in text.split()]

    def decode_words(self, ids: Iterable[int]) -> str:
        out = []
        for i in ids:
            if i == EOS:
                break
            out.append(self.tokens[i])
        return " ".join(out)

    def encode_source(self, sample: CorpusSample) -> list[int]:
        return [self.lang_id(sample.src_lang)] + self.encode_words(sample.src_text) + [EOS]

    def encode_target(self, sample: CorpusSample) -> tuple[list[int], list[int]]:
        """(decoder input, decoder output); the target tag only enters the decoder."""
        words = self.encode_words(sample.tgt_text)
        return [self.lang_id(sample.tgt_lang)] + words, words + [EOS]


def pad_batch(seqs: Sequence[Sequence[int]]) -> torch.Tensor:
    width = max(len(s) for s in seqs)
    out = torch.full((len(seqs), width), PAD, dtype=torch.long)
    for i, s in enumerate(seqs):
        out[i, : len(s)] = torch.tensor(s, dtype=torch.long)
    return out


def collate(samples: Sequence[CorpusSample], vocab: Vocabulary):
    """Padded (src, tgt_in, tgt_out) tensors."""
    if not samples:
        raise ValueError("empty batch")
    src = pad_batch([vocab.encode_source(s) for s in samples])
    pairs = [vocab.encode_target(s) for s in samples]
    return src, pad_batch([p[0] for p in pairs]), pad_batch([p[1] for p in pairs])


# corpus generation

def _rng(seed: int, *names: str) -> np.random.Generator:
    return np.random.default_rng([seed, *(zlib.crc32(n.encode()) for n in names)])


def _sample_base(rng, n: int, base_vocab: int, min_len: int, max_len: int, exclude: set) -> list[tuple]:
    out: list[tuple] = []
    seen = set(exclude)
    while len(out) < n:
        length = int(rng.integers(min_len, max_len + 1))
        sent = tuple(int(x) for x in rng.integers(0, base_vocab, size=length))
        if sent in seen:
            continue
        seen.add(sent)
        out.append(sent)
    return out


def surface_pools(languages: Sequence[LanguageSpec], base_vocab: int, num_words: int,
                  surface: str = "disjoint") -> dict[str, list[int]]:
    """Surface word ids available to each language's cipher.

    "shared": every cipher permutes the same words ``0..base_vocab-1``, so a
    surface token means different things in different languages.
    "disjoint": ciphered languages get separate blocks after the identity
    block while the inventory allows, then fall back to the whole inventory.
    """
    if surface not in ("shared", "disjoint"):
        raise ValueError(f"unknown surface mode {surface!r}")
    pools = {}
    block = 1
    for lang in languages:
        if lang.cipher_seed is None or surface == "shared":
            pools[lang.code] = list(range(base_vocab))
        elif (block + 1) * base_vocab <= num_words:
            pools[lang.code] = list(range(block * base_vocab, (block + 1) * base_vocab))
            block += 1
        else:
            pools[lang.code] = list(range(num_words))
    return pools


def build_languages(languages: Sequence[LanguageSpec], base_vocab: int, num_words: int,
                    surface: str = "disjoint") -> dict[str, SyntheticLanguage]:
    codes = [l.code for l in languages]
    if len(set(codes)) != len(codes):
        raise ValueError(f"language codes must be unique: {codes}")
    if base_vocab > num_words:
        raise ValueError("base vocabulary larger than the surface word inventory")
    pools = surface_pools(languages, base_vocab, num_words, surface)
    return {l.code: SyntheticLanguage(l, base_vocab, pools[l.code]) for l in languages}


def directions(codes: Sequence[str]) -> list[tuple[str, str]]:
    return [(a, b) for a, b in itertools.permutations(codes, 2)]


def generate_corpora(
    languages: Sequence[LanguageSpec],
    sizes: dict[str, int],
    seed: int,
    base_vocab: int = 16,
    num_words: int = 64,
    min_len: int = 3,
    max_len: int = 9,
    surface: str = "disjoint",
) -> dict[str, list[CorpusSample]]:
    """Parallel samples for every ordered language pair, keyed by split name.

    The valid and test splits are multi-way parallel (every direction shares
    the same base sentences) and disjoint from each other and from train.
    """
    if any(n <= 0 for n in sizes.values()):
        raise ValueError("all corpus sizes must be positive")
    langs = build_languages(languages, base_vocab, num_words, surface)
    codes = list(langs)
    dirs = directions(codes)
    out: dict[str, list[CorpusSample]] = {}
    held_out: set = set()
    for split in ("valid", "test"):
        if split not in sizes:
            continue
        bases = _sample_base(_rng(seed, split), sizes[split], base_vocab, min_len, max_len, held_out)
        held_out.update(bases)
        out[split] = [
            CorpusSample(a, b, langs[a].realize(s), langs[b].realize(s)) for a, b in dirs for s in bases
        ]
    if "train" in sizes:
        train = []
        for a, b in dirs:
            bases = _sample_base(_rng(seed, "train", a, b), sizes["train"], base_vocab, min_len, max_len, held_out)
            train.extend(CorpusSample(a, b, langs[a].realize(s), langs[b].realize(s)) for s in bases)
        out["train"] = train
    return out


def write_tsv(samples: Iterable[CorpusSample], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for s in samples:
            for field in (s.src_lang, s.tgt_lang, s.src_text, s.tgt_text):
                if "\t" in field or "\n" in field:
                    raise ValueError("corpus fields may not contain tabs or newlines")
            f.write(f"{s.src_lang}\t{s.tgt_lang}\t{s.src_text}\t{s.tgt_text}\n")


def read_tsv(path: str | Path) -> list[CorpusSample]:
    samples = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 4:
                raise ValueError(f"{path}:{lineno}: expected 4 tab-separated fields, got {len(parts)}")
            samples.append(CorpusSample(*parts))
    return samples


def by_direction(samples: Iterable[CorpusSample]) -> dict[tuple[str, str], list[CorpusSample]]:
    out: dict[tuple[str, str], list[CorpusSample]] = {}
    for s in samples:
        out.setdefault(s.direction, []).append(s)
    return out
