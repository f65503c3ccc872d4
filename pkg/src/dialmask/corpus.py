"""Line-aligned parallel corpora: loading, ordered extraction and window sampling.

A corpus is two plain-text files with one utterance per line, where line ``i``
of the source file translates line ``i`` of the target file.  An optional
boundaries file lists the 0-based line indices at which a new document (film)
starts, one per line, optionally followed by a tab and a document id.
"""

from __future__ import annotations

import bisect
import random
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

from .errors import CorpusTooShort, EmptyCorpus, LineCountMismatch, MalformedBoundaries, NoReplyAvailable

DEFAULT_K_MIN = 2
DEFAULT_K_MAX = 15
DEFAULT_EXTRACT_LINES = 200_000


@dataclass(frozen=True)
class Utterance:
    text: str
    index: int
    language: str


@dataclass(frozen=True)
class ParallelDocument:
    doc_id: str
    src_lines: tuple[Utterance, ...]
    tgt_lines: tuple[Utterance, ...]

    def __post_init__(self):
        if len(self.src_lines) != len(self.tgt_lines):
            raise LineCountMismatch(len(self.src_lines), len(self.tgt_lines))

    def __len__(self):
        return len(self.src_lines)

    def side(self, side: str) -> tuple[Utterance, ...]:
        if side == "src":
            return self.src_lines
        if side == "tgt":
            return self.tgt_lines
        raise ValueError(f"side must be 'src' or 'tgt', got {side!r}")


@dataclass(frozen=True)
class ParallelCorpus:
    documents: tuple[ParallelDocument, ...]
    src_lang: str
    tgt_lang: str

    @property
    def total_lines(self) -> int:
        return sum(len(d) for d in self.documents)

    def lang(self, side: str) -> str:
        return self.src_lang if side == "src" else self.tgt_lang

    def boundaries(self) -> list[int]:
        out, pos = [], 0
        for doc in self.documents:
            out.append(pos)
            pos += len(doc)
        return out


@dataclass(frozen=True)
class DialogueWindow:
    doc_id: str
    start: int
    k: int
    src_utterances: tuple[Utterance, ...]
    tgt_utterances: tuple[Utterance, ...]
    # document position, so callers can reach lines past the window (replies)
    doc_pos: int = field(default=0, compare=False)


def build_corpus(
    src_texts: Sequence[str],
    tgt_texts: Sequence[str],
    boundaries: Optional[Sequence[int]] = None,
    doc_ids: Optional[Sequence[str]] = None,
    src_lang: str = "src",
    tgt_lang: str = "tgt",
) -> ParallelCorpus:
    """Partition aligned line lists into documents at ``boundaries``."""
    if len(src_texts) != len(tgt_texts):
        raise LineCountMismatch(len(src_texts), len(tgt_texts))
    n = len(src_texts)
    if n == 0:
        raise EmptyCorpus("corpus has no lines")
    if boundaries is None:
        boundaries = [0]
    boundaries = list(boundaries)
    _check_boundaries(boundaries, n)
    if doc_ids is None:
        doc_ids = [f"doc{i:05d}" for i in range(len(boundaries))]
    elif len(doc_ids) != len(boundaries):
        raise MalformedBoundaries("number of document ids differs from number of boundaries")
    if len(set(doc_ids)) != len(doc_ids):
        raise MalformedBoundaries("document ids are not unique")
    ends = boundaries[1:] + [n]
    docs = []
    for doc_id, lo, hi in zip(doc_ids, boundaries, ends):
        src = tuple(Utterance(src_texts[i], i - lo, src_lang) for i in range(lo, hi))
        tgt = tuple(Utterance(tgt_texts[i], i - lo, tgt_lang) for i in range(lo, hi))
        docs.append(ParallelDocument(doc_id, src, tgt))
    return ParallelCorpus(tuple(docs), src_lang, tgt_lang)


def _check_boundaries(boundaries: list[int], n: int) -> None:
    if not boundaries or boundaries[0] != 0:
        raise MalformedBoundaries("boundaries must start with 0")
    for a, b in zip(boundaries, boundaries[1:]):
        if b <= a:
            raise MalformedBoundaries(f"boundaries not strictly increasing at {a} -> {b}")
    if boundaries[-1] >= n:
        raise MalformedBoundaries(f"boundary {boundaries[-1]} out of range for {n} lines")


def read_lines(path) -> list[str]:
    """Read a UTF-8 file as a list of lines with trailing line breaks removed."""
    with open(path, encoding="utf-8", newline="") as f:
        text = f.read()
    if not text:
        return []
    lines = text.split("\n")
    if lines[-1] == "":
        lines.pop()
    return [line[:-1] if line.endswith("\r") else line for line in lines]


def read_boundaries(path) -> tuple[list[int], Optional[list[str]]]:
    starts, ids = [], []
    for lineno, raw in enumerate(read_lines(path), 1):
        if not raw.strip():
            continue
        head, _, doc_id = raw.partition("\t")
        try:
            starts.append(int(head))
        except ValueError:
            raise MalformedBoundaries(f"{path}:{lineno}: not an integer: {head!r}") from None
        ids.append(doc_id.strip())
    if any(ids) and not all(ids):
        raise MalformedBoundaries(f"{path}: document ids given for some boundaries only")
    return starts, (ids if ids and all(ids) else None)


def load_parallel_corpus(
    src_path,
    tgt_path,
    boundaries_path=None,
    src_lang: str = "src",
    tgt_lang: str = "tgt",
) -> ParallelCorpus:
    src = read_lines(src_path)
    tgt = read_lines(tgt_path)
    if len(src) != len(tgt):
        raise LineCountMismatch(len(src), len(tgt))
    if not src:
        raise EmptyCorpus(f"{src_path} and {tgt_path} are empty")
    starts, ids = (None, None) if boundaries_path is None else read_boundaries(boundaries_path)
    if starts is not None and not starts:
        raise MalformedBoundaries(f"{boundaries_path}: no boundaries listed (missing leading 0)")
    return build_corpus(src, tgt, starts, ids, src_lang, tgt_lang)


def write_corpus(corpus: ParallelCorpus, out_dir) -> dict[str, Path]:
    """Write ``src.txt``, ``tgt.txt`` and ``boundaries.txt`` (with document ids)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {name: out / f"{name}.txt" for name in ("src", "tgt", "boundaries")}
    with open(paths["src"], "w", encoding="utf-8", newline="\n") as fs, open(
        paths["tgt"], "w", encoding="utf-8", newline="\n"
    ) as ft:
        for doc in corpus.documents:
            for s, t in zip(doc.src_lines, doc.tgt_lines):
                fs.write(s.text + "\n")
                ft.write(t.text + "\n")
    with open(paths["boundaries"], "w", encoding="utf-8", newline="\n") as fb:
        for start, doc in zip(corpus.boundaries(), corpus.documents):
            fb.write(f"{start}\t{doc.doc_id}\n")
    return paths


def extract_ordered_prefix(corpus: ParallelCorpus, n_lines: int) -> ParallelCorpus:
    """First ``n_lines`` aligned pairs in corpus order; the last document may be cut."""
    if n_lines < 1:
        raise ValueError("n_lines must be >= 1")
    if not corpus.documents or corpus.total_lines == 0:
        raise EmptyCorpus("cannot extract from an empty corpus")
    if n_lines >= corpus.total_lines:
        return corpus
    docs, remaining = [], n_lines
    for doc in corpus.documents:
        if remaining <= 0:
            break
        if len(doc) <= remaining:
            docs.append(doc)
            remaining -= len(doc)
        else:
            docs.append(ParallelDocument(doc.doc_id, doc.src_lines[:remaining], doc.tgt_lines[:remaining]))
            remaining = 0
    return ParallelCorpus(tuple(docs), corpus.src_lang, corpus.tgt_lang)


def shuffle_documents(corpus: ParallelCorpus, seed: int) -> ParallelCorpus:
    """Permute whole documents; lines inside a document keep their order."""
    docs = list(corpus.documents)
    random.Random(seed).shuffle(docs)
    return ParallelCorpus(tuple(docs), corpus.src_lang, corpus.tgt_lang)


class WindowSampler:
    """Uniform sampler over all valid (document, start) pairs for a drawn K.

    ``reserve`` extra lines must exist after the window inside the same
    document (1 for tasks that need a reply utterance).
    """

    def __init__(
        self,
        corpus: ParallelCorpus,
        k_min: int = DEFAULT_K_MIN,
        k_max: int = DEFAULT_K_MAX,
        reserve: int = 0,
    ):
        if k_min < 1 or k_max < k_min:
            raise ValueError(f"need 1 <= k_min <= k_max, got k_min={k_min}, k_max={k_max}")
        self.corpus = corpus
        self.k_min = k_min
        self.k_max = k_max
        self.reserve = reserve
        self._lengths = [len(d) for d in corpus.documents]
        longest = max(self._lengths, default=0)
        if longest < k_min:
            raise CorpusTooShort(f"no document has {k_min} lines (longest has {longest})")
        if longest < k_min + reserve:
            raise NoReplyAvailable(f"no document has {k_min} lines plus a following reply line")
        self.k_cap = min(k_max, longest - reserve)
        self._cumulative: dict[int, list[int]] = {}

    def _cum(self, k: int) -> list[int]:
        cum = self._cumulative.get(k)
        if cum is None:
            cum, total = [], 0
            for n in self._lengths:
                total += max(0, n - k - self.reserve + 1)
                cum.append(total)
            self._cumulative[k] = cum
        return cum

    def sample(self, rng: random.Random) -> DialogueWindow:
        k = rng.randint(self.k_min, self.k_max)
        if k > self.k_cap:
            k = rng.randint(self.k_min, self.k_cap)
        cum = self._cum(k)
        r = rng.randrange(cum[-1])
        pos = bisect.bisect_right(cum, r)
        start = r - (cum[pos - 1] if pos else 0)
        doc = self.corpus.documents[pos]
        return DialogueWindow(
            doc.doc_id, start, k, doc.src_lines[start : start + k], doc.tgt_lines[start : start + k], pos
        )


def sample_window(
    corpus: ParallelCorpus,
    rng: random.Random,
    k_min: int = DEFAULT_K_MIN,
    k_max: int = DEFAULT_K_MAX,
) -> DialogueWindow:
    return WindowSampler(corpus, k_min, k_max).sample(rng)


@dataclass
class CorpusStats:
    documents: int = 0
    lines: int = 0
    src_tokens: int = 0
    tgt_tokens: int = 0
    blank_lines: int = 0
    duplicate_src_lines: int = 0
    src_length_histogram: dict[int, int] = field(default_factory=dict)
    tgt_length_histogram: dict[int, int] = field(default_factory=dict)

    def as_record(self) -> dict:
        return {
            "documents": self.documents,
            "lines": self.lines,
            "src_tokens": self.src_tokens,
            "tgt_tokens": self.tgt_tokens,
            "blank_lines": self.blank_lines,
            "duplicate_src_lines": self.duplicate_src_lines,
            "src_length_histogram": {str(k): v for k, v in sorted(self.src_length_histogram.items())},
            "tgt_length_histogram": {str(k): v for k, v in sorted(self.tgt_length_histogram.items())},
        }

    def as_text(self) -> str:
        lines = [f"{k}: {v}" for k, v in self.as_record().items() if not isinstance(v, dict)]
        for side in ("src", "tgt"):
            hist = getattr(self, f"{side}_length_histogram")
            body = " ".join(f"{k}={v}" for k, v in sorted(hist.items()))
            lines.append(f"{side}_length_histogram: {body}")
        return "\n".join(lines) + "\n"


def corpus_stats(corpus: Optional[ParallelCorpus]) -> CorpusStats:
    """Counts per side; token lengths use the same segmentation as example generation."""
    from .maskgen import split_words

    stats = CorpusStats()
    if corpus is None:
        return stats
    src_hist: Counter = Counter()
    tgt_hist: Counter = Counter()
    seen: set[str] = set()
    for doc in corpus.documents:
        stats.documents += 1
        for s, t in zip(doc.src_lines, doc.tgt_lines):
            stats.lines += 1
            ns = len(split_words(s.text))
            nt = len(split_words(t.text))
            stats.src_tokens += ns
            stats.tgt_tokens += nt
            src_hist[ns] += 1
            tgt_hist[nt] += 1
            if not s.text.strip() or not t.text.strip():
                stats.blank_lines += 1
            if s.text in seen:
                stats.duplicate_src_lines += 1
            seen.add(s.text)
    stats.src_length_histogram = dict(src_hist)
    stats.tgt_length_histogram = dict(tgt_hist)
    return stats


def iter_positions(corpus: ParallelCorpus) -> Iterable[tuple[str, int]]:
    for doc in corpus.documents:
        for u in doc.src_lines:
            yield doc.doc_id, u.index
