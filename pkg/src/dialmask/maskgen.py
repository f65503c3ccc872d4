"""Masked-prediction example construction for the intermediate tasks.

Every generator is a pull-based stream indexed by example number.  Example
``i`` draws all of its randomness from its own stream seeded with
``(cfg.seed, i)``, so any contiguous slice ``[start, stop)`` can be produced
independently and slices concatenate to the full stream.
"""

from __future__ import annotations

import bisect
import enum
import functools
import random
import re
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from typing import Callable, Iterator, Optional, Sequence, Union

from .corpus import DEFAULT_K_MAX, DEFAULT_K_MIN, ParallelCorpus, Utterance, WindowSampler
from .errors import CorpusTooShort, EmptyCorpus, EmptyInput, NoEligiblePositions

MASK = "[MASK]"
UNK = "[UNK]"

DEFAULT_N_EXAMPLES = 100_000
DEFAULT_MASK_RATE = 0.15
DIRECTION_POLICIES = ("alternate", "fixed-src-context", "fixed-tgt-context")
SIDES = ("both", "src", "tgt")
# draws of an all-blank window before giving up
_MAX_RESAMPLES = 1000


class Task(str, enum.Enum):
    TAPT = "TAPT"
    MONODM = "MONODM"
    TLM = "TLM"
    XDM = "XDM"
    RM = "RM"
    MONODM_SENT = "MONODM_SENT"
    TLM_SENT = "TLM_SENT"

    @property
    def cli_name(self) -> str:
        return self.value.lower().replace("_", "-")

    @classmethod
    def parse(cls, name: Union[str, "Task"]) -> "Task":
        if isinstance(name, Task):
            return name
        key = name.strip().upper().replace("-", "_")
        try:
            return cls[key]
        except KeyError:
            raise ValueError(f"unknown task {name!r}") from None


MONOLINGUAL_TASKS = frozenset({Task.TAPT, Task.MONODM, Task.MONODM_SENT})
BILINGUAL_TASKS = frozenset({Task.TLM, Task.XDM, Task.RM, Task.TLM_SENT})


# --- tokenization -----------------------------------------------------------

_CJK = (
    "\u3000-\u303f\u3040-\u309f\u30a0-\u30ff\u3400-\u4dbf\u4e00-\u9fff"
    "\uf900-\ufaff\uff00-\uffef\U00020000-\U0002fa1f"
)
_WORD_RE = re.compile(f"[{_CJK}]|[^\\s{_CJK}]+")
_CJK_RE = re.compile(f"[{_CJK}]")


@dataclass(frozen=True)
class Token:
    surface: str
    utterance_ordinal: int
    language: str


def split_words(text: str) -> list[str]:
    """Whitespace split, except that every CJK codepoint is a token of its own."""
    return _WORD_RE.findall(text)


def tokenize(text: str, language: str, utterance_ordinal: int = 0) -> list[Token]:
    return [Token(s, utterance_ordinal, language) for s in split_words(text)]


def detokenize(surfaces: Sequence[str]) -> str:
    """Join with single spaces, dropping the space between adjacent CJK characters."""
    out: list[str] = []
    prev_cjk = False
    for s in surfaces:
        cjk = len(s) == 1 and bool(_CJK_RE.match(s))
        if out and not (cjk and prev_cjk):
            out.append(" ")
        out.append(s)
        prev_cjk = cjk
    return "".join(out)


# --- examples ---------------------------------------------------------------


@dataclass(frozen=True)
class Provenance:
    doc_id: str
    start: int
    k: int
    direction: str


@dataclass
class MaskedExample:
    task: Task
    tokens: list[str]
    mask_positions: list[int]
    targets: list[str]
    language_spans: list[tuple[int, int, str]]
    utterance_boundaries: list[int]
    provenance: Provenance

    def demasked(self) -> list[str]:
        out = list(self.tokens)
        for p, t in zip(self.mask_positions, self.targets):
            out[p] = t
        return out

    def token_objects(self) -> list[Token]:
        """Tokens with per-token utterance ordinal and language filled in."""
        langs: list[str] = []
        for start, end, lang in self.language_spans:
            langs.extend([lang] * (end - start))
        out = []
        for i, surface in enumerate(self.tokens):
            ordinal = bisect.bisect_right(self.utterance_boundaries, i) - 1
            out.append(Token(surface, ordinal, langs[i] if i < len(langs) else ""))
        return out

    def final_utterance_range(self) -> tuple[int, int]:
        return (self.utterance_boundaries[-1] if self.utterance_boundaries else 0, len(self.tokens))


@dataclass(frozen=True)
class GenerationConfig:
    n_examples: int = DEFAULT_N_EXAMPLES
    mask_rate: float = DEFAULT_MASK_RATE
    k_min: int = DEFAULT_K_MIN
    k_max: int = DEFAULT_K_MAX
    seed: int = 0
    direction_policy: str = "alternate"
    budget_multiplier: float = 1.0
    # MonoDM only: which side(s) to draw windows from
    sides: str = "both"
    # BERT-style 80/10/10 corruption of selected positions instead of pure [MASK]
    corruption: bool = False

    def __post_init__(self):
        if not 0 < self.mask_rate < 1:
            raise ValueError(f"mask_rate must be in (0, 1), got {self.mask_rate}")
        if self.n_examples < 1:
            raise ValueError(f"n_examples must be >= 1, got {self.n_examples}")
        if self.budget_multiplier <= 0:
            raise ValueError(f"budget_multiplier must be > 0, got {self.budget_multiplier}")
        if self.k_min < 1 or self.k_max < self.k_min:
            raise ValueError(f"need 1 <= k_min <= k_max, got {self.k_min}, {self.k_max}")
        if self.direction_policy not in DIRECTION_POLICIES:
            raise ValueError(f"direction_policy must be one of {DIRECTION_POLICIES}")
        if self.sides not in SIDES:
            raise ValueError(f"sides must be one of {SIDES}")

    @property
    def budget(self) -> int:
        exact = Fraction(self.n_examples) * _exact(self.budget_multiplier)
        return max(1, exact.numerator // exact.denominator)

    def as_record(self) -> dict:
        return asdict(self)


@functools.lru_cache(maxsize=64)
def _exact(x: float) -> Fraction:
    # decimal reading of the float, so 0.15 behaves as 3/20
    return Fraction(repr(float(x)))


def mask_count(n_eligible: int, mask_rate: float) -> int:
    """``max(1, floor(mask_rate * n_eligible))`` evaluated in exact arithmetic."""
    rate = _exact(mask_rate)
    return max(1, (rate.numerator * n_eligible) // rate.denominator)


def select_mask_positions(
    n_tokens: int,
    mask_rate: float,
    rng: random.Random,
    protected: Optional[set[int]] = None,
) -> list[int]:
    if n_tokens < 1:
        raise NoEligiblePositions("no tokens to mask")
    if protected:
        eligible: Sequence[int] = [i for i in range(n_tokens) if i not in protected]
        if not eligible:
            raise NoEligiblePositions(f"all {n_tokens} positions are protected")
    else:
        eligible = range(n_tokens)
    m = mask_count(len(eligible), mask_rate)
    return sorted(rng.sample(eligible, m))


def example_rng(seed: int, index: int) -> random.Random:
    return random.Random(f"{seed}:{index}")


def _assemble(
    task: Task,
    segments: Sequence[tuple[list[str], str]],
    positions: list[int],
    provenance: Provenance,
    rng: random.Random,
    corruption: bool,
) -> MaskedExample:
    """Concatenate tokenized utterances and mask ``positions`` (already sorted)."""
    tokens: list[str] = []
    boundaries: list[int] = []
    spans: list[tuple[int, int, str]] = []
    for words, lang in segments:
        boundaries.append(len(tokens))
        if words:
            if spans and spans[-1][2] == lang:
                s, _, _ = spans[-1]
                spans[-1] = (s, len(tokens) + len(words), lang)
            else:
                spans.append((len(tokens), len(tokens) + len(words), lang))
            tokens.extend(words)
    targets = [tokens[p] for p in positions]
    if corruption:
        pool = tokens[:]
        for p in positions:
            r = rng.random()
            if r < 0.8:
                tokens[p] = MASK
            elif r < 0.9:
                tokens[p] = rng.choice(pool)
    else:
        for p in positions:
            tokens[p] = MASK
    return MaskedExample(task, tokens, positions, targets, spans, boundaries, provenance)


class _TokenCache:
    """Per-document tokenized lines for both sides, computed once per generator."""

    def __init__(self, corpus: ParallelCorpus):
        self.src = [[split_words(u.text) for u in d.src_lines] for d in corpus.documents]
        self.tgt = [[split_words(u.text) for u in d.tgt_lines] for d in corpus.documents]

    def side(self, side: str) -> list[list[list[str]]]:
        return self.src if side == "src" else self.tgt


def _other(side: str) -> str:
    return "tgt" if side == "src" else "src"


class _CorpusGenerator:
    task: Task
    reserve = 0

    def __init__(self, corpus: ParallelCorpus, cfg: GenerationConfig):
        if not corpus.documents or corpus.total_lines == 0:
            raise EmptyCorpus("cannot generate examples from an empty corpus")
        self.corpus = corpus
        self.cfg = cfg
        self.cache = _TokenCache(corpus)
        self.sampler = WindowSampler(corpus, cfg.k_min, cfg.k_max, reserve=self.reserve)

    def example(self, i: int) -> MaskedExample:
        rng = example_rng(self.cfg.seed, i)
        for _ in range(_MAX_RESAMPLES):
            ex = self._build(i, rng)
            if ex is not None:
                return ex
        raise CorpusTooShort("could not draw a window with tokens on every required side")

    def _build(self, i: int, rng: random.Random) -> Optional[MaskedExample]:
        raise NotImplementedError

    def _masked(self, segments, provenance, rng, protected=None) -> Optional[MaskedExample]:
        n = sum(len(w) for w, _ in segments)
        if n == 0:
            return None
        positions = select_mask_positions(n, self.cfg.mask_rate, rng, protected)
        return _assemble(self.task, segments, positions, provenance, rng, self.cfg.corruption)


class _MonoDM(_CorpusGenerator):
    task = Task.MONODM

    def __init__(self, corpus, cfg, side=None):
        super().__init__(corpus, cfg)
        self.side = side or cfg.sides

    def _build(self, i, rng):
        side = self.side if self.side != "both" else ("src" if i % 2 == 0 else "tgt")
        w = self.sampler.sample(rng)
        lines = self.cache.side(side)[w.doc_pos][w.start : w.start + w.k]
        lang = self.corpus.lang(side)
        return self._masked([(l, lang) for l in lines], Provenance(w.doc_id, w.start, w.k, side), rng)


class _TLM(_CorpusGenerator):
    task = Task.TLM

    def _build(self, i, rng):
        w = self.sampler.sample(rng)
        src = self.cache.src[w.doc_pos][w.start : w.start + w.k]
        tgt = self.cache.tgt[w.doc_pos][w.start : w.start + w.k]
        if not any(src) or not any(tgt):
            return None
        segments = [(l, self.corpus.src_lang) for l in src] + [(l, self.corpus.tgt_lang) for l in tgt]
        return self._masked(segments, Provenance(w.doc_id, w.start, w.k, "src+tgt"), rng)


class _XDM(_CorpusGenerator):
    task = Task.XDM
    reserve = 1

    def _context_side(self, i: int) -> str:
        policy = self.cfg.direction_policy
        if policy == "fixed-src-context":
            return "src"
        if policy == "fixed-tgt-context":
            return "tgt"
        return "src" if i % 2 == 0 else "tgt"

    def _chat(self, i, rng):
        ctx_side = self._context_side(i)
        reply_side = _other(ctx_side)
        w = self.sampler.sample(rng)
        context = self.cache.side(ctx_side)[w.doc_pos][w.start : w.start + w.k]
        reply = self.cache.side(reply_side)[w.doc_pos][w.start + w.k]
        if not any(context) or not reply:
            return None
        segments = [(l, self.corpus.lang(ctx_side)) for l in context]
        segments.append((reply, self.corpus.lang(reply_side)))
        return segments, Provenance(w.doc_id, w.start, w.k, f"{ctx_side}>{reply_side}")

    def _build(self, i, rng):
        chat = self._chat(i, rng)
        if chat is None:
            return None
        return self._masked(chat[0], chat[1], rng)


class _RM(_XDM):
    task = Task.RM

    def _build(self, i, rng):
        chat = self._chat(i, rng)
        if chat is None:
            return None
        segments, prov = chat
        n_ctx = sum(len(w) for w, _ in segments[:-1])
        positions = list(range(n_ctx, n_ctx + len(segments[-1][0])))
        # the whole reply is the target; corruption does not apply here
        return _assemble(self.task, segments, positions, prov, rng, corruption=False)


class _SentenceVariant(_CorpusGenerator):
    def __init__(self, corpus, cfg, task: Task):
        if task not in (Task.MONODM_SENT, Task.TLM_SENT):
            raise ValueError(f"not a sentence-level task: {task}")
        self.task = task
        if not corpus.documents or corpus.total_lines == 0:
            raise EmptyCorpus("cannot generate examples from an empty corpus")
        self.corpus = corpus
        self.cfg = cfg
        self.cache = _TokenCache(corpus)
        self._cum = []
        total = 0
        for d in corpus.documents:
            total += len(d)
            self._cum.append(total)

    def _build(self, i, rng):
        r = rng.randrange(self._cum[-1])
        pos = bisect.bisect_right(self._cum, r)
        line = r - (self._cum[pos - 1] if pos else 0)
        doc_id = self.corpus.documents[pos].doc_id
        src = self.cache.src[pos][line]
        tgt = self.cache.tgt[pos][line]
        if self.task == Task.MONODM_SENT:
            side = "src" if i % 2 == 0 else "tgt"
            words = src if side == "src" else tgt
            return self._masked([(words, self.corpus.lang(side))], Provenance(doc_id, line, 1, side), rng)
        if not src or not tgt:
            return None
        segments = [(src, self.corpus.src_lang), (tgt, self.corpus.tgt_lang)]
        return self._masked(segments, Provenance(doc_id, line, 1, "src+tgt"), rng)


class _TAPT:
    task = Task.TAPT

    def __init__(self, utterances: Sequence[Union[Utterance, str]], cfg: GenerationConfig, language: str = "src"):
        pool = []
        for pos, u in enumerate(utterances):
            if isinstance(u, str):
                u = Utterance(u, pos, language)
            words = split_words(u.text)
            if words:
                pool.append((u, words))
        if not pool:
            raise EmptyInput("no non-blank task utterances")
        self.pool = pool
        self.cfg = cfg

    def example(self, i: int) -> MaskedExample:
        rng = example_rng(self.cfg.seed, i)
        u, words = self.pool[i % len(self.pool)]
        positions = select_mask_positions(len(words), self.cfg.mask_rate, rng)
        return _assemble(
            self.task, [(words, u.language)], positions, Provenance("task", u.index, 1, "task"), rng, self.cfg.corruption
        )


def _stream(gen, cfg: GenerationConfig, start: int, stop: Optional[int]) -> Iterator[MaskedExample]:
    stop = cfg.budget if stop is None else min(stop, cfg.budget)
    for i in range(start, stop):
        yield gen.example(i)


def gen_monodm(corpus, cfg, side=None, start=0, stop=None) -> Iterator[MaskedExample]:
    """K consecutive utterances from one side; ``side=None`` follows ``cfg.sides``."""
    return _stream(_MonoDM(corpus, cfg, side), cfg, start, stop)


def gen_tlm(corpus, cfg, start=0, stop=None) -> Iterator[MaskedExample]:
    return _stream(_TLM(corpus, cfg), cfg, start, stop)


def gen_xdm(corpus, cfg, start=0, stop=None) -> Iterator[MaskedExample]:
    return _stream(_XDM(corpus, cfg), cfg, start, stop)


def gen_rm(corpus, cfg, start=0, stop=None) -> Iterator[MaskedExample]:
    return _stream(_RM(corpus, cfg), cfg, start, stop)


def gen_tapt(task_utterances, cfg, language="src", start=0, stop=None) -> Iterator[MaskedExample]:
    """Single task utterances, reused round-robin once the list is exhausted."""
    return _stream(_TAPT(task_utterances, cfg, language), cfg, start, stop)


def gen_sentence_variant(task, corpus, cfg, start=0, stop=None) -> Iterator[MaskedExample]:
    return _stream(_SentenceVariant(corpus, cfg, Task.parse(task)), cfg, start, stop)


def generate(task, source, cfg: GenerationConfig, start: int = 0, stop: Optional[int] = None, language: str = "src"):
    """Dispatch on task; ``source`` is a corpus, or an utterance list for TAPT."""
    task = Task.parse(task)
    if task == Task.TAPT:
        return gen_tapt(source, cfg, language, start, stop)
    if task == Task.MONODM:
        return gen_monodm(source, cfg, start=start, stop=stop)
    if task in (Task.MONODM_SENT, Task.TLM_SENT):
        return gen_sentence_variant(task, source, cfg, start, stop)
    fn: Callable = {Task.TLM: gen_tlm, Task.XDM: gen_xdm, Task.RM: gen_rm}[task]
    return fn(source, cfg, start, stop)


def shard_range(total: int, n_shards: int, index: int) -> tuple[int, int]:
    """Contiguous ``[start, stop)`` slice of ``total`` for shard ``index``."""
    if not 0 <= index < n_shards:
        raise ValueError(f"shard index {index} out of range for {n_shards} shards")
    base, extra = divmod(total, n_shards)
    start = index * base + min(index, extra)
    return start, start + base + (1 if index < extra else 0)


# --- validation -------------------------------------------------------------


@dataclass
class Verdict:
    violations: list[str] = field(default_factory=list)

    @property
    def valid(self) -> bool:
        return not self.violations

    def __bool__(self):
        return self.valid


def validate_example(
    ex: MaskedExample,
    mask_rate: Optional[float] = None,
    allow_corruption: bool = False,
) -> Verdict:
    """Check every structural invariant and report all violations.

    With ``mask_rate`` given, the mask-count law is checked too (not for RM).
    """
    v: list[str] = []
    n = len(ex.tokens)
    pos = ex.mask_positions
    if len(pos) != len(ex.targets):
        v.append("mask_positions and targets differ in length")
    if not pos:
        v.append("no masked positions")
    if any(b <= a for a, b in zip(pos, pos[1:])):
        v.append("positions not increasing")
    if any(p < 0 or p >= n for p in pos):
        v.append("mask position out of range")
    elif not allow_corruption and any(ex.tokens[p] != MASK for p in pos):
        v.append("masked position does not hold the mask sentinel")
    if any(not t or any(c.isspace() for c in t) for t in ex.tokens):
        v.append("empty token or token containing whitespace")

    spans = ex.language_spans
    expect = 0
    for s, e, _ in spans:
        if s != expect or e <= s:
            v.append("language spans do not tile the token sequence")
            break
        expect = e
    else:
        if expect != n:
            v.append("language spans do not tile the token sequence")

    bounds = ex.utterance_boundaries
    if not bounds or bounds[0] != 0 or any(b < a for a, b in zip(bounds, bounds[1:])) or bounds[-1] > n:
        v.append("utterance boundaries malformed")

    task = ex.task
    n_utt = len(bounds)
    if task in MONOLINGUAL_TASKS and len(spans) != 1:
        v.append(f"{task.value} needs exactly one language span")
    if task in BILINGUAL_TASKS:
        if len(spans) != 2:
            v.append(f"{task.value} needs exactly two language spans")
        elif spans[0][2] == spans[1][2]:
            v.append(f"{task.value} language spans share a language")
    if task in (Task.XDM, Task.RM) and len(spans) == 2 and bounds:
        if (spans[1][0], spans[1][1]) != ex.final_utterance_range():
            v.append("second language span is not exactly the reply")
    if task == Task.RM and bounds:
        lo, hi = ex.final_utterance_range()
        if any(p < lo for p in pos):
            v.append("RM mask outside reply")
        if list(pos) != list(range(lo, hi)):
            v.append("RM reply not fully masked")
    if task in (Task.TAPT, Task.MONODM_SENT) and n_utt != 1:
        v.append(f"{task.value} needs exactly one utterance")
    if task == Task.TLM_SENT and n_utt != 2:
        v.append("TLM_SENT needs exactly two utterances")
    if task in (Task.MONODM_SENT, Task.TLM_SENT, Task.TAPT) and ex.provenance.k != 1:
        v.append("utterance-level example must have k=1")
    if task in (Task.MONODM, Task.TLM, Task.XDM, Task.RM):
        per_side = n_utt - 1 if task in (Task.XDM, Task.RM) else (n_utt // 2 if task == Task.TLM else n_utt)
        if per_side != ex.provenance.k:
            v.append("utterance count does not match provenance k")
    if mask_rate is not None and task != Task.RM and pos:
        if len(pos) != mask_count(n, mask_rate):
            v.append(f"mask count {len(pos)} violates max(1, floor(rate * {n}))")
    return Verdict(v)
