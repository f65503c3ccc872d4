#!/usr/bin/env python3
"""Time single-process example generation on a large parallel corpus built from the mini fixture."""

import argparse
import tempfile
import time
from pathlib import Path

from dialmask.cli import run_generation
from dialmask.corpus import build_corpus, extract_ordered_prefix, write_corpus
from dialmask.fixtures import data_dir
from dialmask.maskgen import GenerationConfig, Task


def rotated_corpus(n_lines: int, doc_len: int = 150):
    mini = data_dir("mini_bilingual")
    src = (mini / "src.txt").read_text(encoding="utf-8").splitlines()
    tgt = (mini / "tgt.txt").read_text(encoding="utf-8").splitlines()
    total = n_lines + doc_len
    s = [src[(i * 7) % len(src)] for i in range(total)]
    t = [tgt[(i * 7) % len(tgt)] for i in range(total)]
    return extract_ordered_prefix(build_corpus(s, t, list(range(0, total, doc_len)), src_lang="en", tgt_lang="de"), n_lines)


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--lines", type=int, default=200_000)
    ap.add_argument("--n", type=int, default=100_000)
    ap.add_argument("--task", default="tlm")
    ap.add_argument("--shards", type=int, default=1)
    args = ap.parse_args()

    task = Task.parse(args.task)
    with tempfile.TemporaryDirectory() as tmp:
        paths = write_corpus(rotated_corpus(args.lines), Path(tmp) / "corpus")
        source = {
            "src": str(paths["src"]),
            "tgt": str(paths["tgt"]),
            "boundaries": str(paths["boundaries"]),
            "src_lang": "en",
            "tgt_lang": "de",
        }
        out = Path(tmp) / "out.jsonl"
        t0 = time.perf_counter()
        n = run_generation(task, source, GenerationConfig(n_examples=args.n), out, args.shards)
        dt = time.perf_counter() - t0
        print(f"{task.cli_name}: {n} records from {args.lines} lines in {dt:.1f}s ({n / dt:,.0f}/s), {out.stat().st_size / 1e6:.0f} MB")


if __name__ == "__main__":
    main()
