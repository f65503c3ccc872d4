"""Dialogue state tracking metrics: JGA, Slot F1, Slot Accuracy, Request Accuracy.

Conventions:

* JGA compares informable (slot, value) pairs only; requestables are scored
  by :func:`request_accuracy`.
* Slot F1 is the unweighted mean over turns of the per-turn set F1, with
  F1 = 1 when both sets are empty and F1 = 0 when exactly one is.
* Slot and value strings are lowercased and whitespace-collapsed on entry.

Averages are accumulated in exact rational arithmetic and rounded once, so the
result does not depend on turn order.
"""

from __future__ import annotations

import json
from collections import defaultdict
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping, Optional, Sequence, Union

from .errors import EmptyEvaluation, RecordError, UnknownSlot

SCOPES = ("full-universe", "informable")

Pair = tuple[str, str]


def normalize(text: str) -> str:
    return " ".join(str(text).lower().split())


@dataclass(frozen=True)
class Ontology:
    informable: Mapping[str, frozenset]
    requestable: frozenset = frozenset()
    slot_universe_size: Optional[int] = None

    def __post_init__(self):
        inf = {normalize(k): frozenset(normalize(v) for v in vs) for k, vs in self.informable.items()}
        req = frozenset(normalize(r) for r in self.requestable)
        object.__setattr__(self, "informable", inf)
        object.__setattr__(self, "requestable", req)
        overlap = set(inf) & req
        if overlap:
            raise ValueError(f"slots both informable and requestable: {sorted(overlap)}")
        if self.slot_universe_size is None:
            object.__setattr__(self, "slot_universe_size", len(inf))
        elif self.slot_universe_size < len(inf):
            raise ValueError("slot_universe_size is smaller than the number of informable slots")

    @classmethod
    def from_record(cls, rec: dict) -> "Ontology":
        return cls(
            {k: frozenset(v) for k, v in rec.get("informable", {}).items()},
            frozenset(rec.get("requestable", [])),
            rec.get("slot_universe_size"),
        )

    @classmethod
    def load(cls, path) -> "Ontology":
        try:
            with open(path, encoding="utf-8") as f:
                rec = json.load(f)
        except json.JSONDecodeError as e:
            raise RecordError(f"ontology is not valid JSON: {e}", path) from None
        if not isinstance(rec, dict):
            raise RecordError("ontology must be a JSON object", path)
        return cls.from_record(rec)


@dataclass(frozen=True)
class DialogueState:
    informable_pairs: frozenset = frozenset()
    requested: frozenset = frozenset()

    def __post_init__(self):
        slots = [s for s, _ in self.informable_pairs]
        if len(slots) != len(set(slots)):
            raise ValueError("more than one value for an informable slot")

    @classmethod
    def of(cls, informable: Union[Mapping[str, str], Iterable[Pair], None] = None, requested: Iterable[str] = ()):
        items = informable.items() if isinstance(informable, Mapping) else (informable or ())
        pairs = frozenset((normalize(s), normalize(v)) for s, v in items)
        return cls(pairs, frozenset(normalize(r) for r in requested))

    def as_dict(self) -> dict[str, str]:
        return dict(self.informable_pairs)


@dataclass(frozen=True)
class TurnRecord:
    dialogue_id: str
    turn_index: int
    predicted: DialogueState
    gold: DialogueState


def _require(turns: Sequence[TurnRecord]) -> None:
    if not turns:
        raise EmptyEvaluation("no turns to evaluate")


def joint_goal_accuracy(turns: Sequence[TurnRecord]) -> float:
    _require(turns)
    hits = sum(t.predicted.informable_pairs == t.gold.informable_pairs for t in turns)
    return hits / len(turns)


def turn_f1(predicted: frozenset, gold: frozenset) -> Fraction:
    if not predicted and not gold:
        return Fraction(1)
    if not predicted or not gold:
        return Fraction(0)
    # 2PR/(P+R) with P = tp/|pred|, R = tp/|gold| simplifies to this
    tp = len(predicted & gold)
    return Fraction(2 * tp, len(predicted) + len(gold))


def slot_f1(turns: Sequence[TurnRecord]) -> float:
    _require(turns)
    total = sum((turn_f1(t.predicted.informable_pairs, t.gold.informable_pairs) for t in turns), Fraction(0))
    return float(total / len(turns))


def _scope(scope: str) -> str:
    if scope in ("informable", "informable-only"):
        return "informable"
    if scope == "full-universe":
        return scope
    raise ValueError(f"scope must be one of {SCOPES}, got {scope!r}")


def _turn_slot_correct(t: TurnRecord, ontology: Ontology, scope: str, strict: bool) -> tuple[int, int]:
    pred = t.predicted.as_dict()
    gold = t.gold.as_dict()
    if strict:
        unknown = sorted(set(pred) - set(ontology.informable))
        if unknown:
            raise UnknownSlot(f"turn {t.dialogue_id}/{t.turn_index} predicts unknown slot(s) {unknown}")
    if scope == "informable":
        slots = ontology.informable
        return sum(pred.get(s) == gold.get(s) for s in slots), len(slots)
    wrong = sum(pred.get(s) != gold.get(s) for s in set(pred) | set(gold))
    universe = ontology.slot_universe_size
    return max(0, universe - wrong), universe


def slot_accuracy(
    turns: Sequence[TurnRecord],
    ontology: Ontology,
    scope: str = "full-universe",
    strict: bool = False,
) -> float:
    """Correct slot decisions over ``turns x slots-in-scope``; absence counts as a decision.

    ``full-universe`` counts every slot type of the ontology universe, so slots
    absent from both states are correct.  ``informable`` restricts to the
    ontology's informable slots.  In non-strict mode a predicted slot outside
    the ontology is a mismatch; in strict mode it raises :class:`UnknownSlot`.
    """
    _require(turns)
    scope = _scope(scope)
    correct = total = 0
    for t in turns:
        c, n = _turn_slot_correct(t, ontology, scope, strict)
        correct += c
        total += n
    if total == 0:
        raise EmptyEvaluation("no slots in scope")
    return correct / total


def request_accuracy(turns: Sequence[TurnRecord]) -> float:
    _require(turns)
    return sum(t.predicted.requested == t.gold.requested for t in turns) / len(turns)


@dataclass
class SlotCounts:
    correct: int = 0
    wrong_value: int = 0
    missed: int = 0
    spurious: int = 0


@dataclass
class TurnError:
    dialogue_id: str
    turn_index: int
    missing: list[Pair]
    spurious: list[Pair]
    # every error of this turn was already present in the dialogue's previous turn
    inherited: bool


@dataclass
class MetricsReport:
    joint_goal_accuracy: float
    slot_f1: float
    slot_accuracy: float
    request_accuracy: float
    scope: str
    n_turns: int
    n_dialogues: int
    per_dialogue_jga: dict[str, float] = field(default_factory=dict)
    first_error: dict[str, int] = field(default_factory=dict)
    slot_confusion: dict[str, SlotCounts] = field(default_factory=dict)
    turn_errors: list[TurnError] = field(default_factory=list)

    def as_text(self) -> str:
        return (
            f"JGA: {self.joint_goal_accuracy:.4f}\n"
            f"Slot F1: {self.slot_f1:.4f}\n"
            f"Slot Accuracy: {self.slot_accuracy:.4f}\n"
            f"Request Accuracy: {self.request_accuracy:.4f}\n"
            f"turns: {self.n_turns}\n"
            f"dialogues: {self.n_dialogues}\n"
            f"scope: {self.scope}\n"
        )

    def as_record(self) -> dict:
        return {
            "jga": self.joint_goal_accuracy,
            "slot_f1": self.slot_f1,
            "slot_accuracy": self.slot_accuracy,
            "request_accuracy": self.request_accuracy,
            "scope": self.scope,
            "n_turns": self.n_turns,
            "n_dialogues": self.n_dialogues,
        }

    def dialogue_records(self) -> list[dict]:
        """Per-dialogue breakdown: JGA, first failing turn, and each failing turn's errors."""
        errors = defaultdict(list)
        for e in self.turn_errors:
            errors[e.dialogue_id].append(
                {
                    "turn_index": e.turn_index,
                    "missing": [f"{s}={v}" for s, v in e.missing],
                    "spurious": [f"{s}={v}" for s, v in e.spurious],
                    "inherited": e.inherited,
                }
            )
        return [
            {
                "dialogue_id": d,
                "jga": jga,
                "first_error": self.first_error.get(d),
                "errors": errors.get(d, []),
            }
            for d, jga in self.per_dialogue_jga.items()
        ]


def group_dialogues(turns: Sequence[TurnRecord]) -> dict[str, list[TurnRecord]]:
    """Group turns by dialogue in order of first appearance; turn indices must increase."""
    out: dict[str, list[TurnRecord]] = {}
    for t in turns:
        seq = out.setdefault(t.dialogue_id, [])
        if seq and t.turn_index <= seq[-1].turn_index:
            raise ValueError(f"turn_index not increasing in dialogue {t.dialogue_id!r} at {t.turn_index}")
        seq.append(t)
    return out


def evaluate(
    turns: Sequence[TurnRecord],
    ontology: Ontology,
    scope: str = "full-universe",
    strict: bool = False,
) -> MetricsReport:
    _require(turns)
    dialogues = group_dialogues(turns)
    report = MetricsReport(
        joint_goal_accuracy=joint_goal_accuracy(turns),
        slot_f1=slot_f1(turns),
        slot_accuracy=slot_accuracy(turns, ontology, scope, strict),
        request_accuracy=request_accuracy(turns),
        scope=_scope(scope),
        n_turns=len(turns),
        n_dialogues=len(dialogues),
    )
    confusion: dict[str, SlotCounts] = defaultdict(SlotCounts)
    for did, seq in dialogues.items():
        report.per_dialogue_jga[did] = joint_goal_accuracy(seq)
        prev: Optional[tuple[frozenset, frozenset]] = None
        for t in seq:
            pred, gold = t.predicted.informable_pairs, t.gold.informable_pairs
            p, g = t.predicted.as_dict(), t.gold.as_dict()
            for s in set(p) | set(g):
                c = confusion[s]
                if s not in p:
                    c.missed += 1
                elif s not in g:
                    c.spurious += 1
                elif p[s] == g[s]:
                    c.correct += 1
                else:
                    c.wrong_value += 1
            missing, spurious = gold - pred, pred - gold
            if missing or spurious:
                report.first_error.setdefault(did, t.turn_index)
                inherited = prev is not None and missing <= prev[0] and spurious <= prev[1]
                report.turn_errors.append(TurnError(did, t.turn_index, sorted(missing), sorted(spurious), inherited))
            prev = (missing, spurious)
    report.slot_confusion = dict(sorted(confusion.items()))
    return report


# --- turn files ---------------------------------------------------------------


def parse_turn_record(rec, path=None, lineno=None) -> tuple[str, int, DialogueState]:
    def fail(msg):
        raise RecordError(msg, path, lineno)

    if not isinstance(rec, dict):
        fail("turn record is not an object")
    for key in ("dialogue_id", "turn_index", "state"):
        if key not in rec:
            fail(f"missing field {key!r}")
    idx = rec["turn_index"]
    if not isinstance(idx, int) or isinstance(idx, bool) or idx < 0:
        fail("turn_index must be a non-negative integer")
    state = rec["state"]
    if not isinstance(state, dict):
        fail("state must be an object")
    inf = state.get("informable", {})
    req = state.get("requested", [])
    if not isinstance(inf, dict) or not all(isinstance(v, str) for v in inf.values()):
        fail("state.informable must map slot names to string values")
    if not isinstance(req, list) or not all(isinstance(r, str) for r in req):
        fail("state.requested must be a list of slot names")
    try:
        st = DialogueState.of(inf, req)
    except ValueError as e:
        fail(str(e))
    return str(rec["dialogue_id"]), idx, st


def load_turn_file(path) -> dict[tuple[str, int], DialogueState]:
    out: dict[tuple[str, int], DialogueState] = {}
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as e:
                raise RecordError(f"not valid JSON: {e.msg}", path, lineno) from None
            did, idx, st = parse_turn_record(rec, path, lineno)
            if (did, idx) in out:
                raise RecordError(f"duplicate turn {did}/{idx}", path, lineno)
            out[(did, idx)] = st
    return out


def pair_turns(
    predicted: Mapping[tuple[str, int], DialogueState],
    gold: Mapping[tuple[str, int], DialogueState],
) -> list[TurnRecord]:
    """Join on (dialogue_id, turn_index) in gold order; unpredicted gold turns get an empty state."""
    extra = sorted(set(predicted) - set(gold))
    if extra:
        did, idx = extra[0]
        raise RecordError(f"{len(extra)} predicted turn(s) have no gold turn, e.g. {did}/{idx}")
    turns = [TurnRecord(did, idx, predicted.get((did, idx), DialogueState()), g) for (did, idx), g in gold.items()]
    turns.sort(key=lambda t: (t.dialogue_id, t.turn_index))
    return turns


def state_record(dialogue_id: str, turn_index: int, state: DialogueState) -> dict:
    return {
        "dialogue_id": dialogue_id,
        "turn_index": turn_index,
        "state": {"informable": dict(sorted(state.informable_pairs)), "requested": sorted(state.requested)},
    }
