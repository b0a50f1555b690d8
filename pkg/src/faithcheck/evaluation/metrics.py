from __future__ import annotations

import math
import statistics
from dataclasses import dataclass, field
from typing import Optional, Sequence


class LengthMismatch(ValueError):
    pass


class EmptyInput(ValueError):
    pass


def _f1(tp: int, fp: int, fn: int) -> float:
    denom = 2 * tp + fp + fn
    return 0.0 if denom == 0 else 2 * tp / denom


def macro_f1(predictions: Sequence[Optional[int]], golds: Sequence[int]) -> float:
    """Unweighted mean of the F1 of class 0 and class 1, in [0, 100].

    A missing prediction counts as the label opposite to gold, so it is wrong
    for both precision and recall.
    """
    if len(predictions) != len(golds):
        raise LengthMismatch(f"{len(predictions)} predictions vs {len(golds)} golds")
    if not golds:
        raise EmptyInput("no predictions")
    preds = [1 - g if p is None else p for p, g in zip(predictions, golds)]
    scores = []
    for cls in (0, 1):
        tp = sum(p == cls and g == cls for p, g in zip(preds, golds))
        fp = sum(p == cls and g != cls for p, g in zip(preds, golds))
        fn = sum(p != cls and g == cls for p, g in zip(preds, golds))
        scores.append(_f1(tp, fp, fn))
    return 100.0 * (scores[0] + scores[1]) / 2


@dataclass
class EvalResult:
    per_task: dict[str, float]
    mean: float
    std: float
    runs: int
    per_run: dict[str, list[float]] = field(default_factory=dict)

    @classmethod
    def from_scores(cls, per_task: dict[str, float], runs: int, per_run: Optional[dict] = None) -> "EvalResult":
        vals = list(per_task.values())
        return cls(per_task, math.fsum(vals) / len(vals), statistics.pstdev(vals), runs, per_run or {})

    def to_dict(self) -> dict:
        return {"per_task": self.per_task, "mean": self.mean, "std": self.std, "runs": self.runs, "per_run": self.per_run}

    def table(self) -> str:
        names = list(self.per_task)
        header = names + ["Std (σ)", "Avg (μ)"]
        values = [f"{self.per_task[n]:.1f}" for n in names] + [f"{self.std:.1f}", f"{self.mean:.1f}"]
        widths = [max(len(h), len(v)) for h, v in zip(header, values)]
        line = " | ".join(h.rjust(w) for h, w in zip(header, widths))
        return line + "\n" + "-+-".join("-" * w for w in widths) + "\n" + " | ".join(v.rjust(w) for v, w in zip(values, widths))


def aggregate_atomic_verdicts(verdicts: Sequence[int]) -> int:
    """A claim is supported only if every atomic fact is."""
    if not verdicts:
        raise EmptyInput("no atomic verdicts")
    return int(all(v == 1 for v in verdicts))
