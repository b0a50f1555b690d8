"""Small synthetic grounded-claim corpora for smoke runs and tests.

Documents are a handful of templated facts about invented people. A consistent
claim copies one or two document sentences verbatim; an inconsistent claim
copies a sentence and swaps one attribute for a value the document never uses.
"""
from __future__ import annotations

import random

from .core import LabeledSample

_FIRST = ["Ada", "Bram", "Chiara", "Dmitri", "Elif", "Farid", "Greta", "Hugo", "Ines", "Jonas", "Kaito", "Lena"]
_LAST = ["Okafor", "Lindqvist", "Moreau", "Takahashi", "Novak", "Ferreira", "Haddad", "Kowalski", "Brennan"]
_CITIES = ["Lisbon", "Osaka", "Tallinn", "Quito", "Accra", "Perth", "Bergen", "Tucson", "Lyon", "Hanoi"]
_JOBS = ["carpenter", "botanist", "pilot", "chemist", "librarian", "surveyor", "violinist", "dentist"]
_YEARS = [str(y) for y in range(1950, 2001)]
_HOBBIES = ["chess", "sailing", "pottery", "archery", "birdwatching", "rowing", "origami", "fencing"]

_SLOTS = {
    "city": (_CITIES, "{name} was born in {city}."),
    "job": (_JOBS, "{name} works as a {job}."),
    "year": (_YEARS, "{name} moved abroad in {year}."),
    "hobby": (_HOBBIES, "In the evenings {name} enjoys {hobby}."),
}


def _sentence(slot: str, name: str, value: str) -> str:
    return _SLOTS[slot][1].format(name=name, **{slot: value})


def make_sample(rng: random.Random, idx: int, label: int, prefix: str = "syn") -> LabeledSample:
    name = f"{rng.choice(_FIRST)} {rng.choice(_LAST)}"
    facts = {slot: rng.choice(values) for slot, (values, _) in _SLOTS.items()}
    slots = list(facts)
    rng.shuffle(slots)
    doc = " ".join(_sentence(s, name, facts[s]) for s in slots)
    if label == 1:
        picked = sorted(rng.sample(slots, rng.choice([1, 2])), key=slots.index)
        claim = " ".join(_sentence(s, name, facts[s]) for s in picked)
    else:
        slot = rng.choice(slots)
        wrong = rng.choice([v for v in _SLOTS[slot][0] if v != facts[slot]])
        claim = _sentence(slot, name, wrong)
    return LabeledSample(id=f"{prefix}-{idx:05d}", doc=doc, claim=claim, label=label, source="synthetic")


def make_samples(n: int, seed: int = 0, prefix: str = "syn") -> list[LabeledSample]:
    """`n` samples with labels alternating 1, 0, 1, ... so both classes are present."""
    rng = random.Random(seed)
    return [make_sample(rng, i, 1 - i % 2, prefix) for i in range(n)]


def write_micro_data(out_dir, n_samples: int = 50, task_sizes: tuple[int, ...] = (12, 12), seed: int = 0) -> dict:
    """Training samples, one JSONL per evaluation task, and a claims file for the preprocessors."""
    from pathlib import Path

    from .core import write_jsonl

    out = Path(out_dir)
    write_jsonl(out / "samples.jsonl", (s.to_dict() for s in make_samples(n_samples, seed)))
    for i, size in enumerate(task_sizes):
        task = make_samples(size, seed + 1000 + i, prefix=f"task{i}")
        write_jsonl(out / "tasks" / f"task{i}.jsonl", (s.to_dict() for s in task))
    claims = [
        {"id": "c0", "claim": "Ines Novak works as a pilot and enjoys rowing.", "context": "Ines Novak works as a pilot."},
        {"id": "c1", "claim": "It also flies to Quito.", "context": "The airline started in Lisbon. It also flies to Quito."},
    ]
    write_jsonl(out / "claims.jsonl", claims)
    return {"samples": out / "samples.jsonl", "tasks_dir": out / "tasks", "claims": out / "claims.jsonl"}
