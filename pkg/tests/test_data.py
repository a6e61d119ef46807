import pytest

from moeprune.data import (EOS, CorpusSample, LanguageSpec, SyntheticLanguage, Vocabulary, build_languages,
                           by_direction, collate, generate_corpora, read_tsv, surface_pools, write_tsv)

LANGS = [LanguageSpec("la"), LanguageSpec("lb", 11), LanguageSpec("lc", 12, "reverse"),
         LanguageSpec("ld", 13, "rotate")]
SIZES = {"train": 20, "valid": 5, "test": 5}


def corpora(**kw):
    return generate_corpora(LANGS, SIZES, seed=3, **kw)


def test_identity_pair_copies_source():
    langs = [LanguageSpec("xx"), LanguageSpec("yy")]
    for split in generate_corpora(langs, SIZES, seed=0).values():
        for s in split:
            assert s.src_text == s.tgt_text


def test_same_seed_same_files(tmp_path):
    a, b = corpora(), corpora()
    for split in SIZES:
        write_tsv(a[split], tmp_path / f"a.{split}")
        write_tsv(b[split], tmp_path / f"b.{split}")
        assert (tmp_path / f"a.{split}").read_bytes() == (tmp_path / f"b.{split}").read_bytes()
    assert corpora() != generate_corpora(LANGS, SIZES, seed=4)


def test_reversal_language_reverses_ciphered_source():
    langs = build_languages(LANGS, 16, 64, "disjoint")
    pool = surface_pools(LANGS, 16, 64, "disjoint")["lc"]
    plain = SyntheticLanguage(LanguageSpec("lc", 12), 16, pool)
    for s in corpora(base_vocab=16, surface="disjoint")["test"]:
        if s.direction == ("la", "lc"):
            base = [int(t[1:]) for t in s.src_text.split()]  # la is the identity cipher
            assert s.tgt_text.split() == plain.realize(base).split()[::-1]
            assert s.tgt_text == langs["lc"].realize(base)


def test_rotation():
    lang = SyntheticLanguage(LanguageSpec("r", None, "rotate", shift=2), 8, range(8))
    assert lang.realize([0, 1, 2, 3]) == "w02 w03 w00 w01"


def test_heldout_splits_are_multiway_parallel_and_disjoint():
    c = corpora()
    for split in ("valid", "test"):
        groups = by_direction(c[split])
        assert len(groups) == 12
        sources = {d: [s.src_text for s in g] for d, g in groups.items()}
        assert sources[("la", "lb")] == sources[("la", "lc")] == sources[("la", "ld")]
    la = lambda split: {s.src_text for s in c[split] if s.src_lang == "la"}
    assert not (la("valid") & la("test"))
    assert not (la("train") & (la("valid") | la("test")))


def test_surface_pools():
    shared = surface_pools(LANGS, 16, 64, "shared")
    assert all(p == list(range(16)) for p in shared.values())
    disjoint = surface_pools(LANGS, 16, 64, "disjoint")
    assert disjoint["la"] == list(range(16)) and disjoint["ld"] == list(range(48, 64))
    with pytest.raises(ValueError):
        surface_pools(LANGS, 16, 64, "other")


def test_bad_language_specs():
    with pytest.raises(ValueError):
        LanguageSpec("a-b")
    with pytest.raises(ValueError):
        LanguageSpec("x", transform="shuffle")
    with pytest.raises(ValueError):
        generate_corpora([LanguageSpec("x"), LanguageSpec("x")], SIZES, 0)
    with pytest.raises(ValueError):
        generate_corpora(LANGS, {"train": 0}, 0)


def test_vocabulary_layout():
    v = Vocabulary(["la", "lb", "lc", "ld"], 64)
    assert len(v) == 72
    assert v.tokens[:4] == ["<pad>", "<unk>", "</s>", "<s>"]
    assert v.lang_id("la") == 4 and v.tokens[8] == "w00"
    with pytest.raises(ValueError):
        v.lang_id("zz")
    s = CorpusSample("la", "lb", "w01 w02", "w03")
    assert v.encode_source(s) == [4, 9, 10, EOS]
    assert v.encode_target(s) == ([5, 11], [11, EOS])
    assert v.decode_words([11, 12, EOS, 13]) == "w03 w04"


def test_collate_pads():
    v = Vocabulary(["la", "lb"], 8)
    src, tgt_in, tgt_out = collate([CorpusSample("la", "lb", "w01", "w01 w02"),
                                    CorpusSample("lb", "la", "w01 w02 w03", "w03")], v)
    assert src.shape == (2, 5) and tgt_in.shape == tgt_out.shape == (2, 3)
    assert src[0, -1].item() == 0
    with pytest.raises(ValueError):
        collate([], v)


def test_tsv_round_trip_and_errors(tmp_path):
    c = corpora()["test"]
    write_tsv(c, tmp_path / "t.tsv")
    assert read_tsv(tmp_path / "t.tsv") == c
    (tmp_path / "bad.tsv").write_text("a\tb\tc\n")
    with pytest.raises(ValueError, match="bad.tsv:1"):
        read_tsv(tmp_path / "bad.tsv")
    with pytest.raises(ValueError):
        write_tsv([CorpusSample("a", "b", "x\ty", "z")], tmp_path / "x.tsv")
