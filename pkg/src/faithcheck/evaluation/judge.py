"""LLM-as-judge scoring of explanations."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Sequence

from ..gateway.base import GenerationParams
from ..gateway.remote import ChatClient
from ..prompts import JUDGE, render_prompt
from .claims import JudgeParseFailure, _PARSE_ATTEMPTS, extract_json_object
from .metrics import EmptyInput

DIMENSIONS = ("readability", "helpfulness", "informativeness")


class RangeViolation(ValueError):
    pass


@dataclass(frozen=True)
class JudgeScores:
    readability: int
    helpfulness: int
    informativeness: int

    def __post_init__(self):
        for d in DIMENSIONS:
            v = getattr(self, d)
            if isinstance(v, bool) or not isinstance(v, int) or not 1 <= v <= 5:
                raise RangeViolation(f"{d} must be an integer in [1, 5], got {v!r}")

    def to_dict(self) -> dict:
        return asdict(self)


def _parse_scores(text: str) -> JudgeScores:
    obj = extract_json_object(text)
    values = {}
    for d in DIMENSIONS:
        v = obj[d]
        if isinstance(v, float) and v.is_integer():
            v = int(v)
        values[d] = v
    return JudgeScores(**values)


def judge_explanation(task_instruction: str, explanation: str, client: ChatClient) -> JudgeScores:
    if not task_instruction.strip() or not explanation.strip():
        raise ValueError("task instruction and explanation must be non-empty")
    prompt = render_prompt(JUDGE, {"Task Instruction": task_instruction, "Explanation_Text": explanation})
    params = GenerationParams(temperature=0.0, max_new_tokens=256)
    last = ""
    for _ in range(_PARSE_ATTEMPTS):
        last = client.complete(prompt, params)
        try:
            return _parse_scores(last)
        except RangeViolation:
            raise
        except (ValueError, KeyError, TypeError):
            continue
    raise JudgeParseFailure(f"could not parse judge response: {last[:200]!r}")


def explainability_summary(scores: Sequence[JudgeScores], threshold: int = 4) -> dict[str, float]:
    """Percentage of explanations scoring at least `threshold`, per dimension, plus their average."""
    if not scores:
        raise EmptyInput("no judge scores")
    out = {d: 100.0 * sum(getattr(s, d) >= threshold for s in scores) / len(scores) for d in DIMENSIONS}
    out["average"] = math.fsum(out[d] for d in DIMENSIONS) / len(DIMENSIONS)
    return out
