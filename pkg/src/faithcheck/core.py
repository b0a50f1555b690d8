"""Domain types, the tagged-response grammar, and JSONL corpus I/O."""
from __future__ import annotations

import json
import re
import string
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, Optional

TAGS = ("think", "reason", "answer")
_PUNCT = string.punctuation + string.whitespace


class InvalidSample(ValueError):
    pass


@dataclass(frozen=True)
class LabeledSample:
    id: str
    doc: str
    claim: str
    label: int
    source: str = ""

    def __post_init__(self):
        if self.label not in (0, 1):
            raise InvalidSample(f"{self.id}: label must be 0 or 1, got {self.label!r}")
        if not self.doc.strip():
            raise InvalidSample(f"{self.id}: empty document")
        if not self.claim.strip():
            raise InvalidSample(f"{self.id}: empty claim")

    @property
    def answer_text(self) -> str:
        return label_to_answer(self.label)

    def to_dict(self) -> dict:
        return {"id": self.id, "doc": self.doc, "claim": self.claim, "label": self.label, "source": self.source}

    @classmethod
    def from_dict(cls, d: dict) -> "LabeledSample":
        return cls(id=str(d["id"]), doc=d["doc"], claim=d["claim"], label=int(d["label"]), source=d.get("source", ""))


@dataclass(frozen=True)
class TaggedResponse:
    think: str = ""
    reason: str = ""
    answer_text: str = ""
    answer_label: Optional[int] = None
    well_formed: bool = False


@dataclass(frozen=True)
class SynthRecord:
    sample: LabeledSample
    response: TaggedResponse
    raw_response: str
    generator_id: str = ""

    @property
    def id(self) -> str:
        return self.sample.id

    @classmethod
    def from_raw(cls, sample: LabeledSample, raw: str, generator_id: str = "") -> "SynthRecord":
        return cls(sample=sample, response=parse_tagged_response(raw), raw_response=raw, generator_id=generator_id)

    def to_dict(self) -> dict:
        d = self.sample.to_dict()
        d.update(
            cot=self.response.think,
            explanation=self.response.reason,
            predicted_label=self.response.answer_label,
            raw_response=self.raw_response,
            generator_id=self.generator_id,
        )
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SynthRecord":
        # raw_response is authoritative; the derived fields are for readers of the file.
        return cls.from_raw(LabeledSample.from_dict(d), d["raw_response"], d.get("generator_id", ""))


def label_to_answer(label: int) -> str:
    return "Yes" if label == 1 else "No"


def normalize_answer(answer_text: str) -> Optional[int]:
    """Map an answer span to 1 ("Yes") or 0 ("No"); anything else is None."""
    word = answer_text.strip(_PUNCT).casefold()
    if word == "yes":
        return 1
    if word == "no":
        return 0
    return None


def _first_span(raw: str, tag: str) -> Optional[str]:
    m = re.search(f"<{tag}>(.*?)</{tag}>", raw, flags=re.DOTALL)
    return m.group(1) if m else None


def _is_well_formed(raw: str, tags: tuple[str, ...] = TAGS) -> bool:
    positions = []
    for tag in TAGS:
        if tag not in tags:
            if f"<{tag}>" in raw or f"</{tag}>" in raw:
                return False
            continue
        for marker in (f"<{tag}>", f"</{tag}>"):
            if raw.count(marker) != 1:
                return False
            positions.append(raw.index(marker))
    if positions != sorted(positions):
        return False
    # only whitespace may sit outside the three spans
    outside = re.sub(r"<(think|reason|answer)>.*?</\1>", "", raw, flags=re.DOTALL)
    return outside.strip() == ""


def parse_tagged_response(raw: str, tags: tuple[str, ...] = TAGS) -> TaggedResponse:
    """Parse `<think>..</think><reason>..</reason><answer>..</answer>`.

    Never raises. On malformed input the first occurrence of each closed tag
    pair is still recovered so the answer can be scored independently of the
    format. `tags` narrows the grammar for responses that omit a span.
    """
    spans = {tag: _first_span(raw, tag) for tag in TAGS}
    answer_text = spans["answer"] or ""
    return TaggedResponse(
        think=spans["think"] or "",
        reason=spans["reason"] or "",
        answer_text=answer_text,
        answer_label=normalize_answer(answer_text) if spans["answer"] is not None else None,
        well_formed=_is_well_formed(raw, tags),
    )


def serialize_tagged(think: str, reason: str, answer_text: str) -> str:
    return f"<think>{think}</think><reason>{reason}</reason><answer>{answer_text}</answer>"


def serialize_response(resp: TaggedResponse) -> str:
    return serialize_tagged(resp.think, resp.reason, resp.answer_text)


# -- JSONL ------------------------------------------------------------------

def read_jsonl(path: str | Path) -> Iterator[dict]:
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.strip()
            if not line:
                continue
            try:
                yield json.loads(line)
            except json.JSONDecodeError as e:
                raise ValueError(f"{path}:{lineno}: {e}") from e


def write_jsonl(path: str | Path, rows: Iterable[dict], append: bool = False) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "a" if append else "w", encoding="utf-8") as f:
        for row in rows:
            f.write(json.dumps(row, ensure_ascii=False) + "\n")


def load_samples(path: str | Path) -> list[LabeledSample]:
    samples = [LabeledSample.from_dict(d) for d in read_jsonl(path)]
    seen = set()
    for s in samples:
        if s.id in seen:
            raise InvalidSample(f"duplicate id {s.id!r} in {path}")
        seen.add(s.id)
    return samples


def load_records(path: str | Path) -> list[SynthRecord]:
    return [SynthRecord.from_dict(d) for d in read_jsonl(path)]
