"""Bundled fixtures: the mini En/De corpus, the bat-scene excerpt, and small DST cases."""

from __future__ import annotations

import json
from importlib import resources
from pathlib import Path

from .corpus import ParallelCorpus, load_parallel_corpus
from .dstmetrics import DialogueState, Ontology, TurnRecord, state_record


def data_dir(name: str) -> Path:
    return Path(str(resources.files("dialmask") / "data" / name))


def load_mini_corpus() -> ParallelCorpus:
    """~300 aligned En/De lines in two films."""
    d = data_dir("mini_bilingual")
    return load_parallel_corpus(d / "src.txt", d / "tgt.txt", d / "boundaries.txt", "en", "de")


def load_bat_scene() -> ParallelCorpus:
    """The six-line En/De subtitle excerpt (one document)."""
    d = data_dir("bat_scene")
    return load_parallel_corpus(d / "en.txt", d / "de.txt", None, "en", "de")


def cascade_ontology() -> Ontology:
    return Ontology(
        {
            "hotel-stars": {"3", "4"},
            "hotel-type": {"guesthouse", "hotel"},
            "hotel-name": {"bridge guest house"},
            "hotel-area": {"south", "centre"},
            "train-destination": {"norwich", "cambridge"},
            "train-day": {"saturday"},
            "train-arriveby": {"17:00"},
            "train-departure": {"cambridge", "norwich"},
            "restaurant-food": {"indian"},
            "restaurant-area": {"centre", "south"},
        },
        {"hotel-phone", "restaurant-address", "train-price"},
    )


def cascade_turns() -> list[TurnRecord]:
    """Baseline ('None') predictions against gold for the hotel and train examples.

    The train dialogue's turn 0 is an added opening turn the baseline gets
    right; turns 1 and 2 are the two consecutive train/restaurant turns, both
    missing ``train-arriveby``.
    """
    hotel_gold = DialogueState.of(
        {"hotel-stars": "3", "hotel-type": "guesthouse", "hotel-name": "bridge guest house", "hotel-area": "south"}
    )
    hotel_pred = DialogueState.of({"hotel-stars": "4", "hotel-type": "guesthouse"})
    t0 = {"train-destination": "norwich", "train-day": "saturday"}
    t1 = dict(t0, **{"train-arriveby": "17:00", "train-departure": "cambridge"})
    t2 = dict(t1, **{"restaurant-food": "indian", "restaurant-area": "centre"})
    missing_arrive = lambda d: {k: v for k, v in d.items() if k != "train-arriveby"}  # noqa: E731
    return [
        TurnRecord("hotel-1", 0, hotel_pred, hotel_gold),
        TurnRecord("train-1", 0, DialogueState.of(t0), DialogueState.of(t0)),
        TurnRecord("train-1", 1, DialogueState.of(missing_arrive(t1)), DialogueState.of(t1)),
        TurnRecord("train-1", 2, DialogueState.of(missing_arrive(t2)), DialogueState.of(t2)),
    ]


def slot_accuracy_pathology() -> tuple[list[TurnRecord], Ontology]:
    """One turn over a 135-slot universe: 3 slots right, 2 with wrong values, 130 absent in both."""
    slots = [f"slot-{i:03d}" for i in range(135)]
    ontology = Ontology({s: {"a", "b"} for s in slots}, frozenset(), 135)
    gold = DialogueState.of({s: "a" for s in slots[:5]})
    pred = DialogueState.of({**{s: "a" for s in slots[:3]}, **{s: "b" for s in slots[3:5]}})
    return [TurnRecord("d0", 0, pred, gold)], ontology


def write_turn_files(turns, out_dir, ontology: Ontology = None) -> dict[str, Path]:
    """Write ``pred.jsonl``, ``gold.jsonl`` and (optionally) ``ontology.json`` for the CLI."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {"pred": out / "pred.jsonl", "gold": out / "gold.jsonl"}
    for key, attr in (("pred", "predicted"), ("gold", "gold")):
        with open(paths[key], "w", encoding="utf-8", newline="\n") as f:
            for t in turns:
                rec = state_record(t.dialogue_id, t.turn_index, getattr(t, attr))
                f.write(json.dumps(rec, ensure_ascii=False) + "\n")
    if ontology is not None:
        paths["ontology"] = out / "ontology.json"
        rec = {
            "informable": {k: sorted(v) for k, v in sorted(ontology.informable.items())},
            "requestable": sorted(ontology.requestable),
            "slot_universe_size": ontology.slot_universe_size,
        }
        paths["ontology"].write_text(json.dumps(rec, indent=1) + "\n", encoding="utf-8")
    return paths


TASK_UTTERANCES = (
    "I need to take a train from cambridge, I need to arrive at my destination by 17:00",
    "Can you also find me a place to get some food?",
    "I would like an indian restaurant in the centre, please",
    "I am looking for a cheap guesthouse in the south",
    "Does it have free parking?",
    "Please book it for two people on saturday",
    "What is the phone number of the hotel?",
    "I want to leave after 09:15",
    "Is there anything in the east that serves italian food?",
    "That is all, thank you very much",
)
