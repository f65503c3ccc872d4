import math
import random
from collections import Counter
from fractions import Fraction

import pytest
from hypothesis import given
from hypothesis import strategies as st

from dialmask.corpus import build_corpus
from dialmask.errors import CorpusTooShort, EmptyInput, NoEligiblePositions
from dialmask.fixtures import TASK_UTTERANCES
from dialmask.maskgen import (
    MASK,
    GenerationConfig,
    MaskedExample,
    Provenance,
    Task,
    detokenize,
    generate,
    gen_rm,
    gen_sentence_variant,
    gen_tapt,
    gen_tlm,
    gen_xdm,
    mask_count,
    select_mask_positions,
    shard_range,
    split_words,
    tokenize,
    validate_example,
)


def cfg(**kw):
    kw.setdefault("n_examples", 200)
    return GenerationConfig(**kw)


# --- tokenization -----------------------------------------------------------


def test_tokenize_whitespace():
    toks = tokenize("Who is  it, Martin?", "en", 3)
    assert [t.surface for t in toks] == ["Who", "is", "it,", "Martin?"]
    assert {t.language for t in toks} == {"en"}
    assert {t.utterance_ordinal for t in toks} == {3}


def test_tokenize_cjk_per_character():
    assert split_words("我想 订 hotel") == ["我", "想", "订", "hotel"]
    assert detokenize(["我", "想", "订", "hotel"]) == "我想订 hotel"


def test_tokenize_blank():
    assert tokenize("   ", "en") == []


@given(st.lists(st.text(alphabet="abcXYZ,.?!'", min_size=1, max_size=6), max_size=10))
def test_split_detokenize_round_trip(words):
    assert split_words(detokenize(words)) == words


# --- mask selection ---------------------------------------------------------


def test_mask_count_examples():
    assert mask_count(100, 0.15) == 15
    assert mask_count(3, 0.15) == 1
    assert mask_count(40, 0.15) == 6
    assert mask_count(66, 0.15) == 9
    assert mask_count(13, 0.15) == 1
    assert mask_count(10, 0.15) == 1
    # 0.15 * 20 is exactly 3, even though the float product is not
    assert mask_count(20, 0.15) == 3


def test_select_positions_basic():
    pos = select_mask_positions(100, 0.15, random.Random(0))
    assert len(pos) == 15 and pos == sorted(set(pos))
    assert len(select_mask_positions(3, 0.15, random.Random(0))) == 1


def test_select_positions_protected():
    for seed in range(50):
        pos = select_mask_positions(20, 0.15, random.Random(seed), protected=set(range(10)))
        assert len(pos) == 1 and 10 <= pos[0] <= 19


def test_select_positions_errors():
    with pytest.raises(NoEligiblePositions):
        select_mask_positions(0, 0.15, random.Random(0))
    with pytest.raises(NoEligiblePositions):
        select_mask_positions(3, 0.15, random.Random(0), protected={0, 1, 2})


@given(st.integers(1, 400), st.sampled_from([0.1, 0.15, 0.2, 0.5, 0.99]), st.integers(0, 10**6))
def test_select_positions_law(n, rate, seed):
    pos = select_mask_positions(n, rate, random.Random(seed))
    assert len(pos) == max(1, math.floor(Fraction(str(rate)) * n))
    assert all(0 <= p < n for p in pos)
    assert all(a < b for a, b in zip(pos, pos[1:]))


def test_select_positions_roughly_uniform():
    counts = Counter()
    rng = random.Random(3)
    for _ in range(4000):
        counts.update(select_mask_positions(20, 0.15, rng))
    expected = 4000 * 3 / 20
    assert all(abs(counts[i] - expected) < 0.15 * expected for i in range(20))


# --- config -----------------------------------------------------------------


@pytest.mark.parametrize("mult,expected", [(1.0, 100_000), (0.5, 50_000), (2.0, 200_000), (4.0, 400_000)])
def test_budget(mult, expected):
    assert GenerationConfig(budget_multiplier=mult).budget == expected


@pytest.mark.parametrize(
    "kw",
    [
        {"mask_rate": 0.0},
        {"mask_rate": 1.0},
        {"n_examples": 0},
        {"k_min": 3, "k_max": 2},
        {"budget_multiplier": 0},
        {"direction_policy": "sideways"},
        {"sides": "left"},
    ],
)
def test_config_rejects(kw):
    with pytest.raises(ValueError):
        GenerationConfig(**kw)


def test_task_names():
    assert Task.parse("monodm-sent") is Task.MONODM_SENT
    assert Task.TLM_SENT.cli_name == "tlm-sent"
    with pytest.raises(ValueError):
        Task.parse("mlm")


# --- generators on hand-built corpora ---------------------------------------


def words_corpus(lines_per_doc, words_per_line, n_docs=1):
    src, tgt, bounds = [], [], []
    for d in range(n_docs):
        bounds.append(len(src))
        for i in range(lines_per_doc):
            src.append(" ".join(f"s{d}.{i}.{j}" for j in range(words_per_line)))
            tgt.append(" ".join(f"t{d}.{i}.{j}" for j in range(words_per_line)))
    return build_corpus(src, tgt, bounds, src_lang="en", tgt_lang="de")


def test_monodm_ten_lines_of_four():
    corpus = words_corpus(10, 4)
    c = cfg(k_min=10, k_max=10)
    for ex in generate(Task.MONODM, corpus, c, stop=20):
        assert len(ex.tokens) == 40
        assert len(ex.mask_positions) == 6
        assert len(ex.language_spans) == 1


def test_monodm_alternates_sides():
    corpus = words_corpus(20, 3)
    exs = list(generate(Task.MONODM, corpus, cfg(n_examples=10)))
    langs = Counter(ex.language_spans[0][2] for ex in exs)
    assert langs == {"en": 5, "de": 5}
    assert [ex.language_spans[0][2] for ex in exs[:2]] == ["en", "de"]


def test_monodm_single_side():
    corpus = words_corpus(20, 3)
    exs = list(generate(Task.MONODM, corpus, cfg(n_examples=10, sides="tgt")))
    assert {ex.language_spans[0][2] for ex in exs} == {"de"}


def test_tlm_concatenates_window_in_both_languages():
    # 66 tokens over a 6-line window: 33 per side
    corpus = build_corpus(
        [" ".join(["w"] * n) for n in (5, 6, 5, 6, 5, 6)],
        [" ".join(["v"] * n) for n in (6, 5, 6, 5, 6, 5)],
        src_lang="en",
        tgt_lang="de",
    )
    for ex in gen_tlm(corpus, cfg(k_min=6, k_max=6, n_examples=30)):
        assert len(ex.tokens) == 66
        assert len(ex.mask_positions) == 9
        assert ex.language_spans == [(0, 33, "en"), (33, 66, "de")]
        assert len(ex.utterance_boundaries) == 12


def test_xdm_small_window_single_mask():
    # context of 2 short lines plus a reply: 13 tokens total
    corpus = build_corpus(["a b c d", "e f g h", "i j k l m"], ["A B C D", "E F G H", "I J K L M"])
    for ex in gen_xdm(corpus, cfg(k_min=2, k_max=2, n_examples=20, direction_policy="fixed-src-context")):
        assert len(ex.tokens) == 13
        assert len(ex.mask_positions) == 1
        assert ex.language_spans == [(0, 8, "src"), (8, 13, "tgt")]
        assert ex.provenance.direction == "src>tgt"


def test_xdm_alternates_direction():
    corpus = words_corpus(10, 2)
    dirs = [ex.provenance.direction for ex in gen_xdm(corpus, cfg(n_examples=6))]
    assert dirs == ["src>tgt", "tgt>src"] * 3


def test_rm_masks_whole_reply():
    corpus = words_corpus(12, 3)
    for ex in gen_rm(corpus, cfg(n_examples=100)):
        lo, hi = ex.final_utterance_range()
        assert ex.mask_positions == list(range(lo, hi))
        assert hi - lo == 3
        assert all(t != MASK for t in ex.tokens[:lo])
        assert validate_example(ex)


def test_rm_needs_a_reply_line():
    corpus = build_corpus(["a", "b"], ["x", "y"])
    with pytest.raises(CorpusTooShort):
        list(gen_rm(corpus, cfg(k_min=2, k_max=2)))


def test_sentence_variants_have_k1():
    corpus = words_corpus(30, 4, n_docs=2)
    for task in (Task.MONODM_SENT, Task.TLM_SENT):
        for ex in gen_sentence_variant(task, corpus, cfg(n_examples=50)):
            assert ex.provenance.k == 1
            assert validate_example(ex, mask_rate=0.15)


def test_monodm_sent_balances_languages():
    corpus = words_corpus(30, 4)
    exs = list(gen_sentence_variant(Task.MONODM_SENT, corpus, cfg(n_examples=1000)))
    assert Counter(ex.language_spans[0][2] for ex in exs) == {"en": 500, "de": 500}


def test_tapt_round_robin():
    exs = list(gen_tapt(TASK_UTTERANCES, cfg(n_examples=25)))
    assert [ex.provenance.start for ex in exs] == [i % 10 for i in range(25)]
    assert all(ex.provenance.direction == "task" for ex in exs)
    assert exs[0].demasked() == split_words(TASK_UTTERANCES[0])


def test_tapt_ten_token_utterance_single_mask():
    utt = "one two three four five six seven eight nine ten"
    (ex,) = gen_tapt([utt], cfg(n_examples=1))
    assert len(ex.mask_positions) == 1


def test_tapt_skips_blank_and_rejects_empty():
    exs = list(gen_tapt(["", "hello there", "  "], cfg(n_examples=3)))
    assert all(ex.provenance.start == 1 for ex in exs)
    with pytest.raises(EmptyInput):
        list(gen_tapt(["", " "], cfg()))


def test_blank_windows_are_redrawn():
    corpus = build_corpus(["", "", "a b", "c d"], ["", "", "x y", "z w"])
    for ex in gen_tlm(corpus, cfg(k_min=2, k_max=2, n_examples=30)):
        assert ex.provenance.start in (1, 2)


def test_corruption_keeps_targets():
    corpus = words_corpus(20, 8)
    c = cfg(n_examples=300, corruption=True)
    kinds = Counter()
    for ex in generate(Task.TLM, corpus, c):
        assert validate_example(ex, mask_rate=0.15, allow_corruption=True)
        assert ex.demasked() != ex.tokens or all(ex.tokens[p] == t for p, t in zip(ex.mask_positions, ex.targets))
        for p, t in zip(ex.mask_positions, ex.targets):
            kinds["mask" if ex.tokens[p] == MASK else ("same" if ex.tokens[p] == t else "swap")] += 1
    total = sum(kinds.values())
    assert 0.75 < kinds["mask"] / total < 0.85
    assert kinds["swap"] > 0


# --- determinism and sharding -----------------------------------------------


def test_same_seed_same_stream(mini_corpus):
    a = list(generate(Task.XDM, mini_corpus, cfg(seed=4)))
    b = list(generate(Task.XDM, mini_corpus, cfg(seed=4)))
    c = list(generate(Task.XDM, mini_corpus, cfg(seed=5)))
    assert a == b
    assert a != c


@pytest.mark.parametrize("task", list(Task))
def test_slices_concatenate(task, mini_corpus):
    source = TASK_UTTERANCES if task is Task.TAPT else mini_corpus
    c = cfg(n_examples=97, seed=2)
    whole = list(generate(task, source, c))
    parts = []
    for i in range(4):
        lo, hi = shard_range(97, 4, i)
        parts.extend(generate(task, source, c, lo, hi))
    assert parts == whole


@given(st.integers(0, 500), st.integers(1, 16))
def test_shard_range_partitions(total, n):
    ranges = [shard_range(total, n, i) for i in range(n)]
    assert ranges[0][0] == 0 and ranges[-1][1] == total
    assert all(a[1] == b[0] for a, b in zip(ranges, ranges[1:]))
    sizes = [hi - lo for lo, hi in ranges]
    assert max(sizes) - min(sizes) <= 1


# --- validation -------------------------------------------------------------


def good_tlm():
    return MaskedExample(
        Task.TLM,
        ["a", MASK, "x", "y"],
        [1],
        ["b"],
        [(0, 2, "en"), (2, 4, "de")],
        [0, 2],
        Provenance("d", 0, 1, "src+tgt"),
    )


def test_validate_accepts_good():
    assert validate_example(good_tlm(), mask_rate=0.15).valid


@pytest.mark.parametrize(
    "change,message",
    [
        ({"mask_positions": [], "targets": []}, "no masked positions"),
        ({"mask_positions": [1, 1], "targets": ["b", "b"]}, "positions not increasing"),
        ({"mask_positions": [9]}, "mask position out of range"),
        ({"tokens": ["a", "b", "x", "y"]}, "masked position does not hold the mask sentinel"),
        ({"tokens": ["a b", MASK, "x", "y"]}, "empty token or token containing whitespace"),
        ({"language_spans": [(0, 2, "en"), (2, 3, "de")]}, "language spans do not tile the token sequence"),
        ({"language_spans": [(0, 4, "en")]}, "TLM needs exactly two language spans"),
        ({"utterance_boundaries": [1, 2]}, "utterance boundaries malformed"),
        ({"mask_positions": [1, 2], "targets": ["b", "c"], "tokens": ["a", MASK, MASK, "y"]}, "mask count"),
    ],
)
def test_validate_reports(change, message):
    ex = good_tlm()
    for k, v in change.items():
        setattr(ex, k, v)
    verdict = validate_example(ex, mask_rate=0.15)
    assert not verdict
    assert any(message in m for m in verdict.violations)


def test_validate_rm_outside_reply():
    ex = MaskedExample(
        Task.RM,
        [MASK, "b", MASK],
        [0, 2],
        ["a", "c"],
        [(0, 2, "en"), (2, 3, "de")],
        [0, 1, 2],
        Provenance("d", 0, 2, "src>tgt"),
    )
    v = validate_example(ex)
    assert "RM mask outside reply" in v.violations
    assert "RM reply not fully masked" in v.violations


@pytest.mark.parametrize("task", list(Task))
def test_generated_examples_validate(task, mini_corpus):
    source = TASK_UTTERANCES if task is Task.TAPT else mini_corpus
    for ex in generate(task, source, cfg(n_examples=300, seed=9)):
        verdict = validate_example(ex, mask_rate=0.15)
        assert verdict, verdict.violations


@pytest.mark.parametrize("task", [Task.MONODM, Task.TLM, Task.XDM, Task.RM])
def test_demasking_reconstructs_window(task, mini_corpus):
    by_id = {d.doc_id: d for d in mini_corpus.documents}
    for ex in generate(task, mini_corpus, cfg(n_examples=200, seed=1)):
        p = ex.provenance
        doc = by_id[p.doc_id]
        assert p.start + p.k <= len(doc)
        words = ex.demasked()
        spans = {lang: words[s:e] for s, e, lang in ex.language_spans}
        if task is Task.MONODM:
            side = p.direction
            expect = {mini_corpus.lang(side): [w for u in doc.side(side)[p.start : p.start + p.k] for w in split_words(u.text)]}
        elif task is Task.TLM:
            expect = {
                mini_corpus.lang(s): [w for u in doc.side(s)[p.start : p.start + p.k] for w in split_words(u.text)]
                for s in ("src", "tgt")
            }
        else:
            ctx, reply = p.direction.split(">")
            expect = {
                mini_corpus.lang(ctx): [w for u in doc.side(ctx)[p.start : p.start + p.k] for w in split_words(u.text)],
                mini_corpus.lang(reply): split_words(doc.side(reply)[p.start + p.k].text),
            }
        assert spans == expect
