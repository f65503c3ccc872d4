"""On-disk example files: one header object line, then one record per line.

Records are JSON objects with a fixed key order and no insignificant
whitespace, so ``serialize(parse(line)) == line`` and file digests are stable.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Iterable, Iterator, Optional

from .errors import RecordError
from .maskgen import MaskedExample, Provenance, Task, validate_example

SCHEMA_VERSION = 1
EXAMPLE_FIELDS = (
    "task",
    "tokens",
    "mask_positions",
    "targets",
    "language_spans",
    "utterance_boundaries",
    "provenance",
    "schema_version",
)
PROVENANCE_FIELDS = ("doc_id", "start", "k", "direction")


def dumps(obj) -> str:
    return json.dumps(obj, ensure_ascii=False, separators=(",", ":"))


def example_to_record(ex: MaskedExample) -> dict:
    p = ex.provenance
    return {
        "task": ex.task.value,
        "tokens": ex.tokens,
        "mask_positions": ex.mask_positions,
        "targets": ex.targets,
        "language_spans": [[s, e, lang] for s, e, lang in ex.language_spans],
        "utterance_boundaries": ex.utterance_boundaries,
        "provenance": {"doc_id": p.doc_id, "start": p.start, "k": p.k, "direction": p.direction},
        "schema_version": SCHEMA_VERSION,
    }


def serialize_example(ex: MaskedExample) -> str:
    return dumps(example_to_record(ex))


def _int_list(value, name) -> list[int]:
    if not isinstance(value, list) or not all(isinstance(x, int) and not isinstance(x, bool) for x in value):
        raise RecordError(f"{name} must be a list of integers")
    return value


def _str_list(value, name) -> list[str]:
    if not isinstance(value, list) or not all(isinstance(x, str) for x in value):
        raise RecordError(f"{name} must be a list of strings")
    return value


def record_to_example(rec: dict, strict: bool = True, allow_corruption: bool = False) -> MaskedExample:
    if not isinstance(rec, dict):
        raise RecordError("record is not an object")
    missing = [k for k in EXAMPLE_FIELDS if k not in rec]
    if missing:
        raise RecordError(f"missing fields: {', '.join(missing)}")
    if strict:
        unknown = sorted(set(rec) - set(EXAMPLE_FIELDS))
        if unknown:
            raise RecordError(f"unknown fields: {', '.join(unknown)}")
    if rec["schema_version"] != SCHEMA_VERSION:
        raise RecordError(f"unsupported schema_version {rec['schema_version']!r}")
    try:
        task = Task.parse(rec["task"])
    except (ValueError, AttributeError):
        raise RecordError(f"unknown task {rec['task']!r}") from None
    spans = rec["language_spans"]
    if not isinstance(spans, list) or not all(
        isinstance(s, list) and len(s) == 3 and isinstance(s[0], int) and isinstance(s[1], int) and isinstance(s[2], str)
        for s in spans
    ):
        raise RecordError("language_spans must be a list of [start, end, language] triples")
    prov = rec["provenance"]
    if not isinstance(prov, dict) or set(prov) != set(PROVENANCE_FIELDS):
        raise RecordError(f"provenance must have exactly the fields {', '.join(PROVENANCE_FIELDS)}")
    ex = MaskedExample(
        task=task,
        tokens=_str_list(rec["tokens"], "tokens"),
        mask_positions=_int_list(rec["mask_positions"], "mask_positions"),
        targets=_str_list(rec["targets"], "targets"),
        language_spans=[(s, e, lang) for s, e, lang in spans],
        utterance_boundaries=_int_list(rec["utterance_boundaries"], "utterance_boundaries"),
        provenance=Provenance(str(prov["doc_id"]), int(prov["start"]), int(prov["k"]), str(prov["direction"])),
    )
    verdict = validate_example(ex, allow_corruption=allow_corruption)
    if strict and not verdict.valid:
        raise RecordError("invalid example: " + "; ".join(verdict.violations))
    return ex


def parse_example(line: str, strict: bool = True, allow_corruption: bool = False) -> MaskedExample:
    try:
        rec = json.loads(line)
    except json.JSONDecodeError as e:
        raise RecordError(f"not valid JSON: {e}") from None
    return record_to_example(rec, strict, allow_corruption)


def make_header(task: Task, config: dict, source: dict) -> dict:
    return {
        "kind": "header",
        "schema_version": SCHEMA_VERSION,
        "task": task.value,
        "seed": config.get("seed"),
        "config": config,
        "source": source,
    }


def is_header(rec) -> bool:
    return isinstance(rec, dict) and rec.get("kind") == "header"


def write_example_file(path, header: dict, lines: Iterable[str]) -> int:
    """Write the header and pre-serialized record lines; returns the record count."""
    n = 0
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(dumps(header) + "\n")
        for line in lines:
            f.write(line + "\n")
            n += 1
    return n


def read_header(path) -> dict:
    with open(path, encoding="utf-8") as f:
        first = f.readline()
    try:
        rec = json.loads(first)
    except json.JSONDecodeError:
        raise RecordError("first line is not a JSON header", path, 1) from None
    if not is_header(rec):
        raise RecordError("first line is not a header record", path, 1)
    return rec


def iter_example_file(path, strict: bool = True, allow_corruption: Optional[bool] = None) -> Iterator[MaskedExample]:
    """Parse every record after the header, naming the file and line on errors."""
    header = read_header(path)
    if allow_corruption is None:
        allow_corruption = bool(header.get("config", {}).get("corruption", False))
    with open(path, encoding="utf-8") as f:
        next(f)
        for lineno, line in enumerate(f, 2):
            line = line.rstrip("\n")
            if not line:
                continue
            try:
                yield parse_example(line, strict, allow_corruption)
            except RecordError as e:
                raise RecordError(str(e), path, lineno) from None


def load_example_file(path, strict: bool = True) -> tuple[dict, list[MaskedExample]]:
    return read_header(path), list(iter_example_file(Path(path), strict))
