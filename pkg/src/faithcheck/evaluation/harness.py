"""Multi-task evaluation: load task files, run the detector, score macro-F1 per task."""
from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

from ..core import LabeledSample, TaggedResponse, load_samples, parse_tagged_response
from ..gateway.base import GenerationParams, LanguageModel, generate
from ..gateway.mock import stable_hash
from ..gateway.remote import ChatClient
from ..prompts import DETECTION, detection_prompt, render_prompt
from .judge import JudgeScores, explainability_summary, judge_explanation
from .metrics import EmptyInput, EvalResult, macro_f1

log = logging.getLogger(__name__)


@dataclass
class TaskDataset:
    name: str
    samples: list[LabeledSample]

    def __post_init__(self):
        if not self.name:
            raise ValueError("task name must be non-empty")
        if not self.samples:
            raise EmptyInput(f"task {self.name!r} has no samples")
        if len({s.label for s in self.samples}) == 1:
            log.warning("task %s has a single label class", self.name)

    @property
    def single_class(self) -> bool:
        return len({s.label for s in self.samples}) == 1


def load_tasks(tasks_dir: str | Path) -> list[TaskDataset]:
    """One JSONL per task; the file stem is the task name. Sorted by name."""
    files = sorted(Path(tasks_dir).glob("*.jsonl"))
    if not files:
        raise FileNotFoundError(f"no *.jsonl task files in {tasks_dir}")
    return [TaskDataset(f.stem, load_samples(f)) for f in files]


def predict(
    model: LanguageModel,
    sample: LabeledSample,
    temperature: float = 0.0,
    seed: Optional[int] = None,
    max_new_tokens: int = 1024,
) -> tuple[Optional[int], TaggedResponse]:
    prompt = detection_prompt(sample)
    params = GenerationParams(temperature=temperature, max_new_tokens=max_new_tokens, seed=seed,
                              stop_sequences=("</answer>",))
    parsed = parse_tagged_response(generate(model, prompt, params))
    return parsed.answer_label, parsed


@dataclass
class TaskPredictions:
    task: str
    run: int
    labels: list[Optional[int]]
    responses: list[TaggedResponse]


def run_predictions(
    model: LanguageModel, tasks: Sequence[TaskDataset], runs: int = 2, temperature: float = 0.0,
    seed: int = 0, max_new_tokens: int = 1024,
) -> list[TaskPredictions]:
    if runs < 1:
        raise ValueError("runs must be >= 1")
    out = []
    for run in range(runs):
        for task in tasks:
            labels, responses = [], []
            for s in task.samples:
                sample_seed = (seed + 7919 * run + stable_hash(task.name, s.id)) % 2**63
                label, parsed = predict(model, s, temperature, sample_seed, max_new_tokens)
                labels.append(label)
                responses.append(parsed)
            out.append(TaskPredictions(task.name, run, labels, responses))
    return out


def score_predictions(tasks: Sequence[TaskDataset], preds: Sequence[TaskPredictions], runs: int) -> EvalResult:
    golds = {t.name: [s.label for s in t.samples] for t in tasks}
    per_run: dict[str, list[float]] = {t.name: [] for t in tasks}
    for p in preds:
        per_run[p.task].append(macro_f1(p.labels, golds[p.task]))
    per_task = {name: math.fsum(v) / len(v) for name, v in per_run.items()}
    return EvalResult.from_scores(per_task, runs, per_run)


def evaluate_suite(
    model: LanguageModel, tasks: Sequence[TaskDataset], runs: int = 2, temperature: float = 0.0,
    seed: int = 0, max_new_tokens: int = 1024,
) -> EvalResult:
    """Macro-F1 per task averaged over `runs` inference passes; mean and population std across tasks."""
    if not tasks:
        raise EmptyInput("no tasks")
    preds = run_predictions(model, tasks, runs, temperature, seed, max_new_tokens)
    return score_predictions(tasks, preds, runs)


def judgeable(tasks: Sequence[TaskDataset], preds: Sequence[TaskPredictions]) -> list[tuple[LabeledSample, TaggedResponse]]:
    """Correctly predicted samples with a non-empty explanation; only these get judged."""
    by_name = {t.name: t for t in tasks}
    out = []
    for p in preds:
        for s, label, parsed in zip(by_name[p.task].samples, p.labels, p.responses):
            if label is not None and label == s.label and parsed.reason.strip():
                out.append((s, parsed))
    return out


def judge_suite(
    pairs: Sequence[tuple[LabeledSample, TaggedResponse]], client: ChatClient, threshold: int = 4,
) -> tuple[list[JudgeScores], dict[str, float]]:
    scores = []
    for s, parsed in pairs:
        instruction = render_prompt(DETECTION, {"DOCUMENT": s.doc, "CLAIM": s.claim})
        scores.append(judge_explanation(instruction, parsed.reason, client))
    return scores, explainability_summary(scores, threshold)


def write_eval_outputs(out_dir: str | Path, result: EvalResult, fingerprint: str = "") -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "eval_results.json").write_text(json.dumps({**result.to_dict(), "config_fingerprint": fingerprint}, indent=2))
    (out / "eval_table.txt").write_text(result.table() + "\n")
