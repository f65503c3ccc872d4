"""A tied-embedding bag-of-context masked word predictor and an alignment probe.

For an example with unmasked context ids ``c`` the context vector is
``h = mean(E[c])`` and every masked position is scored as ``softmax(E @ h)``.
The output projection is the embedding matrix itself, so each row collects a
gradient from the output side and, when it occurs in context, from the input
side too.  Everything runs in float64.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np
import scipy.sparse as sp

from .corpus import ParallelCorpus, build_corpus
from .errors import AllDegenerate, DegenerateContext, EmptyInput, NonFiniteLoss, RecordError, UnknownProbeWord
from .maskgen import MASK, UNK, MaskedExample

UNK_ID = 0
MASK_ID = 1


class Vocabulary:
    def __init__(self, surfaces: Sequence[str]):
        if list(surfaces[:2]) != [UNK, MASK]:
            raise ValueError(f"vocabulary must start with {UNK} and {MASK}")
        self.surfaces = list(surfaces)
        self.id_of = {s: i for i, s in enumerate(self.surfaces)}
        if len(self.id_of) != len(self.surfaces):
            raise ValueError("duplicate surface in vocabulary")

    def __len__(self):
        return len(self.surfaces)

    def __contains__(self, surface):
        return surface in self.id_of

    def __eq__(self, other):
        return isinstance(other, Vocabulary) and self.surfaces == other.surfaces

    def encode(self, surface: str) -> int:
        return self.id_of.get(surface, UNK_ID)

    def save(self, path) -> None:
        Path(path).write_text("".join(s + "\n" for s in self.surfaces), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "Vocabulary":
        return cls(Path(path).read_text(encoding="utf-8").splitlines())


def build_vocab(examples: Iterable[MaskedExample], min_count: int = 1) -> Vocabulary:
    """Ids by descending frequency, ties broken lexicographically; rare surfaces become [UNK]."""
    counts: Counter = Counter()
    seen = False
    for ex in examples:
        seen = True
        counts.update(ex.demasked())
    if not seen:
        raise EmptyInput("cannot build a vocabulary from an empty stream")
    counts.pop(UNK, None)
    counts.pop(MASK, None)
    kept = sorted((s for s, c in counts.items() if c >= min_count), key=lambda s: (-counts[s], s))
    return Vocabulary([UNK, MASK] + kept)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.1
    epochs: int = 30
    batch_size: int = 16
    seed: int = 0
    init_scale: float = 0.01

    def __post_init__(self):
        if not self.learning_rate >= 0:
            raise ValueError("learning_rate must be >= 0")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


class ToyMlm:
    def __init__(self, vocab_size: int, dim: int = 16, seed: int = 0, init_scale: float = 0.01, task: str = ""):
        rng = np.random.default_rng(seed)
        self.embeddings = rng.uniform(-init_scale, init_scale, size=(vocab_size, dim)).astype(np.float64)
        self.seed = seed
        self.task = task
        self.trained = False

    @classmethod
    def from_embeddings(cls, embeddings: np.ndarray, seed: int = 0, task: str = "") -> "ToyMlm":
        model = cls.__new__(cls)
        model.embeddings = np.array(embeddings, dtype=np.float64)
        model.seed = seed
        model.task = task
        model.trained = False
        return model

    @property
    def vocab_size(self) -> int:
        return self.embeddings.shape[0]

    @property
    def dim(self) -> int:
        return self.embeddings.shape[1]

    def save(self, path) -> None:
        header = f"toymlm vocab_size={self.vocab_size} dim={self.dim} seed={self.seed} task={self.task or '-'}"
        np.savetxt(path, self.embeddings, fmt="%.17g", header=header, encoding="utf-8")

    @classmethod
    def load(cls, path) -> "ToyMlm":
        with open(path, encoding="utf-8") as f:
            first = f.readline()
        if not first.startswith("# toymlm "):
            raise RecordError("not a toymlm checkpoint", path, 1)
        fields = dict(kv.split("=", 1) for kv in first[len("# toymlm ") :].split())
        try:
            v, d, seed = int(fields["vocab_size"]), int(fields["dim"]), int(fields["seed"])
        except (KeyError, ValueError):
            raise RecordError("malformed checkpoint header", path, 1) from None
        emb = np.loadtxt(path, dtype=np.float64, ndmin=2, encoding="utf-8")
        if emb.shape != (v, d):
            raise RecordError(f"checkpoint holds a {emb.shape} matrix, header says ({v}, {d})", path)
        task = fields.get("task", "-")
        return cls.from_embeddings(emb, seed, "" if task == "-" else task)


def encode_example(ex: MaskedExample, vocab: Vocabulary) -> tuple[np.ndarray, np.ndarray]:
    """Context ids (masked positions, [UNK] and [MASK] dropped) and target ids."""
    masked = set(ex.mask_positions)
    ctx = [vocab.encode(t) for i, t in enumerate(ex.tokens) if i not in masked]
    ctx = np.array([c for c in ctx if c > MASK_ID], dtype=np.int64)
    targets = np.array([vocab.encode(t) for t in ex.targets], dtype=np.int64)
    return ctx, targets


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    shift = logits.max(axis=-1, keepdims=True)
    z = logits - shift
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def forward(model: ToyMlm, ex: MaskedExample, vocab: Vocabulary) -> np.ndarray:
    """One probability row over the vocabulary per masked position."""
    ctx, targets = encode_example(ex, vocab)
    if ctx.size == 0:
        raise DegenerateContext("example has no unmasked in-vocabulary context")
    h = model.embeddings[ctx].mean(axis=0)
    probs = np.exp(_log_softmax(model.embeddings @ h))
    return np.tile(probs, (len(targets), 1))


@dataclass
class EncodedBatch:
    """Row-normalized context weights ``A`` and target counts ``C``, both (B, V) sparse."""

    context: sp.csr_matrix
    targets: sp.csr_matrix
    n_masked: np.ndarray
    skipped: int = 0

    def __len__(self):
        return self.context.shape[0]

    def rows(self, idx) -> "EncodedBatch":
        return EncodedBatch(self.context[idx], self.targets[idx], self.n_masked[idx])


def encode_batch(examples: Iterable[MaskedExample], vocab: Vocabulary) -> EncodedBatch:
    """Encode examples, skipping those with no usable context."""
    a_rows, a_cols, a_vals = [], [], []
    c_rows, c_cols = [], []
    n_masked = []
    skipped = 0
    r = 0
    for ex in examples:
        ctx, targets = encode_example(ex, vocab)
        if ctx.size == 0 or targets.size == 0:
            skipped += 1
            continue
        a_rows.append(np.full(ctx.size, r))
        a_cols.append(ctx)
        a_vals.append(np.full(ctx.size, 1.0 / ctx.size))
        c_rows.append(np.full(targets.size, r))
        c_cols.append(targets)
        n_masked.append(targets.size)
        r += 1
    v = len(vocab)
    if r == 0:
        empty = sp.csr_matrix((0, v))
        return EncodedBatch(empty, empty, np.zeros(0), skipped)
    # duplicate (row, col) entries are summed by the constructor
    a = sp.csr_matrix((np.concatenate(a_vals), (np.concatenate(a_rows), np.concatenate(a_cols))), shape=(r, v))
    c = sp.csr_matrix(
        (np.ones(sum(n_masked)), (np.concatenate(c_rows), np.concatenate(c_cols))), shape=(r, v)
    )
    return EncodedBatch(a, c, np.array(n_masked, dtype=np.float64), skipped)


def batch_loss_and_grad(emb: np.ndarray, batch: EncodedBatch, need_grad: bool = True):
    """Summed cross-entropy over masked positions and its gradient (unnormalized)."""
    h = batch.context @ emb
    logp = _log_softmax(h @ emb.T)
    loss = -float(batch.targets.multiply(logp).sum())
    if not need_grad:
        return loss, None
    g = np.exp(logp) * batch.n_masked[:, None]
    g -= batch.targets.toarray()
    grad = g.T @ h + batch.context.T @ (g @ emb)
    return loss, grad


def loss_and_grad(model: ToyMlm, batch: Sequence[MaskedExample], vocab: Vocabulary) -> tuple[float, np.ndarray]:
    """Mean cross-entropy over all masked positions in ``batch`` and its gradient wrt the embeddings."""
    enc = encode_batch(batch, vocab)
    if len(enc) == 0:
        raise AllDegenerate("every example in the batch lacks context")
    total, grad = batch_loss_and_grad(model.embeddings, enc)
    m = enc.n_masked.sum()
    return total / m, grad / m


def dataset_loss(emb: np.ndarray, data: EncodedBatch, chunk: int = 4096) -> float:
    total = 0.0
    for lo in range(0, len(data), chunk):
        part, _ = batch_loss_and_grad(emb, data.rows(slice(lo, lo + chunk)), need_grad=False)
        total += part
    return total / data.n_masked.sum()


@dataclass
class TrainResult:
    model: ToyMlm
    # entry 0 is the loss before the first update, entry e the loss after epoch e
    losses: list[float] = field(default_factory=list)
    skipped: int = 0

    def curve_csv(self) -> str:
        return "epoch,loss\n" + "".join(f"{e},{loss!r}\n" for e, loss in enumerate(self.losses))


def train(model: ToyMlm, examples: Iterable[MaskedExample], cfg: TrainConfig, vocab: Vocabulary) -> TrainResult:
    """Plain minibatch gradient descent; batch order reshuffled each epoch from ``(seed, epoch)``."""
    data = encode_batch(examples, vocab)
    if len(data) == 0:
        raise AllDegenerate("no trainable examples")
    if data.context.shape[1] != model.vocab_size:
        raise ValueError(f"model has {model.vocab_size} rows but vocabulary has {len(vocab)}")
    emb = model.embeddings
    losses = [dataset_loss(emb, data)]
    for epoch in range(1, cfg.epochs + 1):
        order = np.random.default_rng([cfg.seed, epoch]).permutation(len(data))
        # overflow is caught below and reported as NonFiniteLoss
        with np.errstate(over="ignore", invalid="ignore"):
            for lo in range(0, len(order), cfg.batch_size):
                part = data.rows(order[lo : lo + cfg.batch_size])
                _, grad = batch_loss_and_grad(emb, part)
                emb -= cfg.learning_rate * (grad / part.n_masked.sum())
            loss = dataset_loss(emb, data)
        if not math.isfinite(loss) or not np.isfinite(emb).all():
            raise NonFiniteLoss(f"loss diverged at epoch {epoch}; try a smaller learning rate than {cfg.learning_rate}")
        losses.append(loss)
    model.trained = True
    return TrainResult(model, losses, data.skipped)


# --- alignment probe ------------------------------------------------------------


@dataclass
class AlignmentProbeSpec:
    word_pairs: list[tuple[str, str]]
    # target-language candidates for retrieval; defaults to the pairs' target words
    candidates: Optional[list[str]] = None

    def pool(self) -> list[str]:
        if self.candidates is not None:
            return list(self.candidates)
        return list(dict.fromkeys(t for _, t in self.word_pairs))

    def save(self, path) -> None:
        Path(path).write_text("".join(f"{s}\t{t}\n" for s, t in self.word_pairs), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "AlignmentProbeSpec":
        pairs = []
        for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise RecordError("expected 'source<TAB>target'", path, lineno)
            pairs.append((parts[0], parts[1]))
        return cls(pairs)


@dataclass
class AlignmentResult:
    mean_cosine: float
    precision_at_1: float
    n_pairs: int


def _unit_rows(m: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(m, axis=1, keepdims=True)
    return np.divide(m, norms, out=np.zeros_like(m), where=norms > 0)


def alignment_score(model: ToyMlm, probe: AlignmentProbeSpec, vocab: Vocabulary) -> AlignmentResult:
    """Mean cosine of gold pairs and nearest-neighbour precision@1 over the candidate pool."""
    words = [w for pair in probe.word_pairs for w in pair] + probe.pool()
    missing = [w for w in words if w not in vocab]
    if missing:
        raise UnknownProbeWord(f"{len(missing)} probe word(s) not in vocabulary, e.g. {missing[0]!r}")
    if not probe.word_pairs:
        raise ValueError("probe has no word pairs")
    unit = _unit_rows(model.embeddings)
    src = np.array([vocab.id_of[s] for s, _ in probe.word_pairs])
    gold = np.array([vocab.id_of[t] for _, t in probe.word_pairs])
    cos = np.einsum("ij,ij->i", unit[src], unit[gold])
    pool = np.array(sorted({vocab.id_of[w] for w in probe.pool()}))
    sims = unit[src] @ unit[pool].T
    # argmax returns the first maximum; pool is sorted, so ties go to the lower id
    best = pool[np.argmax(sims, axis=1)]
    return AlignmentResult(float(cos.mean()), float(np.mean(best == gold)), len(src))


# --- synthetic data -------------------------------------------------------------


def make_synthetic_bilingual_corpus(
    n_docs: int = 20,
    doc_len: int = 60,
    vocab_size: int = 50,
    seed: int = 0,
    utterance_length: tuple[int, int] = (3, 8),
    src_lang: str = "xa",
    tgt_lang: str = "xb",
) -> tuple[ParallelCorpus, AlignmentProbeSpec]:
    """A word-aligned mirror corpus: source words ``a{i}`` from a Markov chain, target ``b{i}``.

    Each document is one chain run split into utterances of random length.
    """
    if vocab_size < 10:
        raise ValueError("vocab_size must be >= 10")
    rng = np.random.default_rng(seed)
    trans = 0.85 * rng.dirichlet(np.full(vocab_size, 0.2), size=vocab_size) + 0.15 / vocab_size
    cdf = np.cumsum(trans, axis=1)
    cdf[:, -1] = 1.0
    lo, hi = utterance_length
    src, tgt, bounds = [], [], []
    for _ in range(n_docs):
        bounds.append(len(src))
        state = int(rng.integers(vocab_size))
        for _ in range(doc_len):
            n = int(rng.integers(lo, hi + 1))
            ids = []
            for _ in range(n):
                ids.append(state)
                state = int(np.searchsorted(cdf[state], rng.random(), side="right"))
            src.append(" ".join(f"a{i}" for i in ids))
            tgt.append(" ".join(f"b{i}" for i in ids))
    corpus = build_corpus(src, tgt, bounds, [f"syn{d:03d}" for d in range(n_docs)], src_lang, tgt_lang)
    probe = AlignmentProbeSpec([(f"a{i}", f"b{i}") for i in range(vocab_size)])
    return corpus, probe


# --- alignment experiment -------------------------------------------------------


@dataclass(frozen=True)
class AlignmentExperiment:
    """Train the toy model on one task's examples from the synthetic corpus and probe it.

    The defaults are the demo settings: larger step and init than
    :class:`TrainConfig` so that TLM training leaves the symmetric start within 30 epochs.
    """

    n_examples: int = 2000
    dim: int = 16
    learning_rate: float = 1.0
    init_scale: float = 0.1
    epochs: int = 30
    batch_size: int = 16
    corpus_seed: int = 0


def run_alignment_experiment(
    task, seed: int, exp: AlignmentExperiment = AlignmentExperiment()
) -> tuple[AlignmentResult, TrainResult]:
    from .maskgen import GenerationConfig, generate

    corpus, probe = make_synthetic_bilingual_corpus(seed=exp.corpus_seed)
    examples = list(generate(task, corpus, GenerationConfig(n_examples=exp.n_examples, seed=seed)))
    vocab = build_vocab(examples)
    model = ToyMlm(len(vocab), exp.dim, seed, exp.init_scale, task=str(getattr(task, "value", task)))
    cfg = TrainConfig(exp.learning_rate, exp.epochs, exp.batch_size, seed, exp.init_scale)
    result = train(model, examples, cfg, vocab)
    return alignment_score(model, probe, vocab), result
