"""Command line: ``dialmask <subcommand> ...``.

Exit codes: 0 success, 2 input or configuration error, 3 numeric failure.
Diagnostics go to stderr as ``code<TAB>message``; reports go to stdout.
"""

from __future__ import annotations

import argparse
import hashlib
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Optional, Sequence

from . import corpus as corpus_mod
from .dstmetrics import SCOPES, Ontology, evaluate, load_turn_file, pair_turns
from .errors import ConfigError, DialmaskError
from .maskgen import DIRECTION_POLICIES, SIDES, GenerationConfig, Task, generate
from .records import dumps, make_header, read_header, serialize_example, write_example_file

TASK_CHOICES = [t.cli_name for t in Task]
BOOL_FLAGS = {"corrupt", "strict", "json"}


def warn(message: str) -> None:
    print(f"warning\t{message}", file=sys.stderr)


def file_digest(paths: Sequence[Optional[str]]) -> str:
    h = hashlib.sha256()
    for p in paths:
        h.update(b"\0")
        if p is not None:
            with open(p, "rb") as f:
                for block in iter(lambda: f.read(1 << 20), b""):
                    h.update(block)
    return h.hexdigest()


def read_config_file(path) -> dict[str, str]:
    """``key=value`` lines; ``#`` starts a comment; keys use flag names without dashes."""
    out = {}
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e.strerror}") from None
    for lineno, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key.lstrip("-").replace("-", "_")] = value
    return out


# --- subcommands -------------------------------------------------------------------


def _corpus_paths(args) -> list[Optional[str]]:
    if getattr(args, "corpus", None):
        d = Path(args.corpus)
        bnd = d / "boundaries.txt"
        return [str((d / "src.txt").resolve()), str((d / "tgt.txt").resolve()), str(bnd.resolve()) if bnd.exists() else None]
    if not (args.src and args.tgt):
        raise ConfigError("give --corpus DIR or both --src and --tgt")
    return [
        str(Path(args.src).resolve()),
        str(Path(args.tgt).resolve()),
        str(Path(args.boundaries).resolve()) if args.boundaries else None,
    ]


def _load_corpus(args):
    return corpus_mod.load_parallel_corpus(*_corpus_paths(args), args.src_lang, args.tgt_lang)


def cmd_extract(args) -> int:
    corpus = _load_corpus(args)
    if args.shuffle_documents is not None:
        corpus = corpus_mod.shuffle_documents(corpus, args.shuffle_documents)
    if args.budget >= corpus.total_lines:
        warn(f"budget {args.budget} >= corpus size {corpus.total_lines}; writing the full corpus")
    out = corpus_mod.extract_ordered_prefix(corpus, args.budget)
    corpus_mod.write_corpus(out, args.out)
    stats = corpus_mod.corpus_stats(out)
    text = f"src_lang: {out.src_lang}\ntgt_lang: {out.tgt_lang}\n" + stats.as_text()
    (Path(args.out) / "stats.txt").write_text(text, encoding="utf-8")
    if args.stats_record:
        Path(args.stats_record).write_text(dumps(stats.as_record()) + "\n", encoding="utf-8")
    return 0


def cmd_stats(args) -> int:
    corpus = _load_corpus(args)
    stats = corpus_mod.corpus_stats(corpus)
    sys.stdout.write(stats.as_text())
    if args.record:
        Path(args.record).write_text(dumps(stats.as_record()) + "\n", encoding="utf-8")
    return 0


def _generation_config(args) -> GenerationConfig:
    return GenerationConfig(
        n_examples=args.n,
        mask_rate=args.mask_rate,
        k_min=args.k_min,
        k_max=args.k_max,
        seed=args.seed,
        direction_policy=args.direction_policy,
        budget_multiplier=args.budget_multiplier,
        sides=args.sides,
        corruption=args.corrupt,
    )


def _load_source(task: Task, source: dict):
    if task == Task.TAPT:
        lines = corpus_mod.read_lines(source["tapt_input"])
        return [corpus_mod.Utterance(t, i, source["language"]) for i, t in enumerate(lines)]
    return corpus_mod.load_parallel_corpus(
        source["src"], source["tgt"], source.get("boundaries"), source["src_lang"], source["tgt_lang"]
    )


def _render_range(task_value: str, source: dict, cfg_record: dict, start: int, stop: int) -> str:
    task = Task.parse(task_value)
    cfg = GenerationConfig(**cfg_record)
    data = _load_source(task, source)
    lang = source.get("language", "src")
    return "".join(serialize_example(ex) + "\n" for ex in generate(task, data, cfg, start, stop, lang))


def run_generation(task: Task, source: dict, cfg: GenerationConfig, out, shards: int = 1) -> int:
    """Write header plus records; with ``shards > 1`` slices are generated in worker processes."""
    from .maskgen import shard_range

    header = make_header(task, cfg.as_record(), source)
    total = cfg.budget
    if shards <= 1:
        data = _load_source(task, source)
        lang = source.get("language", "src")
        lines = (serialize_example(ex) for ex in generate(task, data, cfg, 0, None, lang))
        return write_example_file(out, header, lines)
    ranges = [shard_range(total, shards, i) for i in range(shards)]
    with ProcessPoolExecutor(max_workers=shards) as pool:
        futures = [
            pool.submit(_render_range, task.value, source, cfg.as_record(), lo, hi) for lo, hi in ranges
        ]
        with open(out, "w", encoding="utf-8", newline="\n") as f:
            f.write(dumps(header) + "\n")
            for fut in futures:
                f.write(fut.result())
    return total


def _source_record(task: Task, args) -> dict:
    if task == Task.TAPT:
        if not args.tapt_input:
            raise ConfigError("--task tapt needs --tapt-input (one task utterance per line)")
        path = str(Path(args.tapt_input).resolve())
        return {"tapt_input": path, "language": args.tapt_lang, "sha256": file_digest([path])}
    paths = _corpus_paths(args)
    return {
        "src": paths[0],
        "tgt": paths[1],
        "boundaries": paths[2],
        "src_lang": args.src_lang,
        "tgt_lang": args.tgt_lang,
        "sha256": file_digest(paths),
    }


def cmd_generate(args) -> int:
    task = Task.parse(args.task)
    cfg = _generation_config(args)
    source = _source_record(task, args)
    n = run_generation(task, source, cfg, args.out, args.shards)
    print(f"info\twrote {n} {task.cli_name} records to {args.out}", file=sys.stderr)
    return 0


def cmd_replay(args) -> int:
    header = read_header(args.header_file)
    task = Task.parse(header["task"])
    source = dict(header["source"])
    paths = [source["tapt_input"]] if task == Task.TAPT else [source["src"], source["tgt"], source.get("boundaries")]
    if file_digest(paths) != source.get("sha256"):
        raise ConfigError("input files changed since the header was written (digest mismatch)")
    try:
        cfg = GenerationConfig(**header["config"])
    except TypeError as e:
        raise ConfigError(f"header config not understood: {e}") from None
    run_generation(task, source, cfg, args.out, args.shards)
    return 0


def cmd_eval(args) -> int:
    gold = load_turn_file(args.gold)
    pred = load_turn_file(args.pred)
    ontology = Ontology.load(args.ontology)
    report = evaluate(pair_turns(pred, gold), ontology, args.scope, args.strict)
    sys.stdout.write(report.as_text())
    if args.report:
        with open(args.report, "w", encoding="utf-8", newline="\n") as f:
            for rec in report.dialogue_records():
                f.write(dumps(rec) + "\n")
    if args.record:
        Path(args.record).write_text(dumps(report.as_record()) + "\n", encoding="utf-8")
    return 0


def cmd_train_toy(args) -> int:
    from .records import iter_example_file
    from .toymlm import ToyMlm, TrainConfig, build_vocab, train

    header = read_header(args.examples)
    examples = list(iter_example_file(args.examples))
    vocab = build_vocab(examples, args.min_count)
    cfg = TrainConfig(args.learning_rate, args.epochs, args.batch_size, args.seed, args.init_scale)
    model = ToyMlm(len(vocab), args.dim, args.seed, args.init_scale, task=header.get("task", ""))
    result = train(model, examples, cfg, vocab)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    model.save(out / "checkpoint.txt")
    vocab.save(out / "vocab.txt")
    (out / "loss.csv").write_text(result.curve_csv(), encoding="utf-8")
    print(f"examples: {len(examples) - result.skipped}")
    print(f"skipped: {result.skipped}")
    print(f"vocab_size: {len(vocab)}")
    print(f"initial_loss: {result.losses[0]:.6f}")
    print(f"final_loss: {result.losses[-1]:.6f}")
    return 0


def cmd_probe(args) -> int:
    from .toymlm import AlignmentProbeSpec, ToyMlm, Vocabulary, alignment_score

    model = ToyMlm.load(args.checkpoint)
    vocab = Vocabulary.load(args.vocab)
    if len(vocab) != model.vocab_size:
        raise ConfigError(f"vocabulary has {len(vocab)} entries, checkpoint has {model.vocab_size} rows")
    res = alignment_score(model, AlignmentProbeSpec.load(args.pairs), vocab)
    print(f"pairs: {res.n_pairs}")
    print(f"mean_cosine: {res.mean_cosine:.4f}")
    print(f"precision_at_1: {res.precision_at_1:.4f}")
    return 0


def cmd_make_synthetic(args) -> int:
    from .toymlm import make_synthetic_bilingual_corpus

    corpus, probe = make_synthetic_bilingual_corpus(args.n_docs, args.doc_len, args.vocab_size, args.seed)
    corpus_mod.write_corpus(corpus, args.out)
    probe.save(Path(args.out) / "pairs.tsv")
    return 0


# --- parser ----------------------------------------------------------------------------


def _corpus_args(p: argparse.ArgumentParser, dir_option: bool = True) -> None:
    if dir_option:
        p.add_argument("--corpus", help="directory holding src.txt, tgt.txt and optional boundaries.txt")
    p.add_argument("--src", help="source-side text file, one utterance per line")
    p.add_argument("--tgt", help="target-side text file, line-aligned with --src")
    p.add_argument("--boundaries", help="file of 0-based document start lines (first must be 0)")
    p.add_argument("--src-lang", default="src")
    p.add_argument("--tgt-lang", default="tgt")


def build_parser() -> tuple[argparse.ArgumentParser, dict[str, argparse.ArgumentParser]]:
    parser = argparse.ArgumentParser(prog="dialmask", description=__doc__.splitlines()[0])
    parser.add_argument("--config", help="key=value file of defaults; flags on the command line win")
    sub = parser.add_subparsers(dest="command", required=True)
    subs = {}

    p = subs["extract"] = sub.add_parser("extract", help="ordered prefix of a parallel corpus")
    _corpus_args(p, dir_option=False)
    p.add_argument("--budget", type=int, default=corpus_mod.DEFAULT_EXTRACT_LINES, help="aligned lines to keep")
    p.add_argument("--shuffle-documents", type=int, metavar="SEED", help="permute whole documents first")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--stats-record", help="also write stats as one JSON line here")
    p.set_defaults(func=cmd_extract)

    p = subs["stats"] = sub.add_parser("stats", help="corpus statistics")
    _corpus_args(p)
    p.add_argument("--record", help="also write stats as one JSON line here")
    p.set_defaults(func=cmd_stats)

    p = subs["generate"] = sub.add_parser("generate", help="write masked examples for one task")
    _corpus_args(p)
    p.add_argument("--task", required=True, choices=TASK_CHOICES)
    p.add_argument("--n", type=int, default=100_000, help="examples before the budget multiplier")
    p.add_argument("--mask-rate", type=float, default=0.15)
    p.add_argument("--k-min", type=int, default=corpus_mod.DEFAULT_K_MIN)
    p.add_argument("--k-max", type=int, default=corpus_mod.DEFAULT_K_MAX)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--direction-policy", choices=DIRECTION_POLICIES, default="alternate")
    p.add_argument("--budget-multiplier", type=float, default=1.0)
    p.add_argument("--sides", choices=SIDES, default="both", help="MonoDM window side(s)")
    p.add_argument("--corrupt", action="store_true", help="80/10/10 mask/random/keep instead of pure [MASK]")
    p.add_argument("--tapt-input", help="task utterances for --task tapt, one per line")
    p.add_argument("--tapt-lang", default="src")
    p.add_argument("--shards", type=int, default=1, help="worker processes")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_generate)

    p = subs["replay"] = sub.add_parser("replay", help="regenerate an example file from its header")
    p.add_argument("header_file")
    p.add_argument("--out", required=True)
    p.add_argument("--shards", type=int, default=1)
    p.set_defaults(func=cmd_replay)

    p = subs["eval"] = sub.add_parser("eval", help="score DST predictions against gold")
    p.add_argument("--pred", required=True)
    p.add_argument("--gold", required=True)
    p.add_argument("--ontology", required=True)
    p.add_argument("--scope", choices=SCOPES, default="full-universe")
    p.add_argument("--strict", action="store_true", help="fail on predicted slots outside the ontology")
    p.add_argument("--report", help="per-dialogue breakdown, one JSON line per dialogue")
    p.add_argument("--record", help="metrics as one JSON line")
    p.set_defaults(func=cmd_eval)

    p = subs["train-toy"] = sub.add_parser("train-toy", help="train the toy tied-embedding model")
    p.add_argument("--examples", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--dim", type=int, default=16)
    p.add_argument("--learning-rate", type=float, default=0.1)
    p.add_argument("--epochs", type=int, default=30)
    p.add_argument("--batch-size", type=int, default=16)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--init-scale", type=float, default=0.01)
    p.add_argument("--min-count", type=int, default=1)
    p.set_defaults(func=cmd_train_toy)

    p = subs["probe"] = sub.add_parser("probe", help="cross-lingual alignment of a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--pairs", required=True, help="source<TAB>target per line")
    p.set_defaults(func=cmd_probe)

    p = subs["make-synthetic"] = sub.add_parser("make-synthetic", help="write a mirrored synthetic corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--n-docs", type=int, default=20)
    p.add_argument("--doc-len", type=int, default=60)
    p.add_argument("--vocab-size", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_make_synthetic)

    for p in subs.values():
        p.add_argument("--config", help=argparse.SUPPRESS)
    return parser, subs


def parse_args(argv: Optional[Sequence[str]] = None) -> argparse.Namespace:
    parser, subs = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, rest = pre.parse_known_args(argv)
    command = next((a for a in rest if a in subs), None)
    if known.config and command is not None:
        values = read_config_file(known.config)
        sp = subs[command]
        actions = {a.dest: a for a in sp._actions}
        for key, value in values.items():
            if key not in actions or key in ("help", "func", "command"):
                raise ConfigError(f"unknown config key {key!r} for {command}")
            if key in BOOL_FLAGS:
                values[key] = value.lower() in ("1", "true", "yes", "on")
            elif actions[key].choices is not None and value not in actions[key].choices:
                raise ConfigError(f"config {key}={value!r} not one of {list(actions[key].choices)}")
            actions[key].required = False
        # string defaults are type-converted by argparse; explicit flags still win
        sp.set_defaults(**values)
    return parser.parse_args(argv)


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        args = parse_args(argv)
        return args.func(args)
    except DialmaskError as e:
        print(f"{e.code}\t{e}", file=sys.stderr)
        return e.exit_code
    except FileNotFoundError as e:
        print(f"FileNotFound\t{e.filename}: {e.strerror}", file=sys.stderr)
        return 2
    except OSError as e:
        print(f"IOError\t{e}", file=sys.stderr)
        return 2
    except ValueError as e:
        print(f"ConfigError\t{e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
