"""Cold-start supervised fine-tuning on filtered synthetic records."""
from __future__ import annotations

import hashlib
import json
import logging
import random
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Optional, Sequence

import torch

from .core import SynthRecord, label_to_answer, parse_tagged_response, write_jsonl
from .gateway.base import LanguageModel
from .prompts import detection_prompt

log = logging.getLogger(__name__)

TARGET_MODES = {
    "cot_exp_answer": ("think", "reason", "answer"),
    "exp_answer": ("reason", "answer"),
    "cot_answer": ("think", "answer"),
}


class EmptyBatch(ValueError):
    pass


@dataclass
class SftConfig:
    learning_rate: float = 1e-5
    weight_decay: float = 0.1
    batch_size: int = 16
    epochs: int = 3
    target_mode: str = "cot_exp_answer"
    seed: int = 0
    max_sequence_length: int = 8192

    def __post_init__(self):
        problems = sft_config_problems(self)
        if problems:
            raise ValueError("; ".join(problems))


def sft_config_problems(cfg) -> list[str]:
    out = []
    if not cfg.learning_rate > 0:
        out.append("learning_rate must be > 0")
    if cfg.epochs < 1:
        out.append("epochs must be >= 1")
    if cfg.batch_size < 1:
        out.append("batch_size must be >= 1")
    if cfg.target_mode not in TARGET_MODES:
        out.append(f"target_mode must be one of {sorted(TARGET_MODES)}")
    if cfg.max_sequence_length < 1:
        out.append("max_sequence_length must be >= 1")
    return out


@dataclass(frozen=True)
class SftExample:
    input_text: str
    target_text: str


def build_sft_example(record: SynthRecord, mode: str = "cot_exp_answer") -> SftExample:
    r = record.response
    spans = {"think": r.think, "reason": r.reason, "answer": label_to_answer(record.sample.label)}
    target = "".join(f"<{t}>{spans[t]}</{t}>" for t in TARGET_MODES[mode])
    assert parse_tagged_response(target, TARGET_MODES[mode]).well_formed, target
    return SftExample(detection_prompt(record.sample, mode), target)


def sft_loss(model: LanguageModel, batch: Sequence[SftExample]) -> torch.Tensor:
    """Mean negative log-likelihood per target token; prompt tokens carry no loss."""
    if not batch:
        raise EmptyBatch("empty batch")
    lps = model.batch_token_logprobs([(ex.input_text, ex.target_text) for ex in batch])
    flat = torch.cat(lps)
    return -flat.sum() / flat.numel()


def dataset_nll(model: LanguageModel, examples: Sequence[SftExample], chunk: int = 16) -> float:
    """Token-weighted mean target NLL over a whole dataset."""
    total, count = 0.0, 0
    with torch.no_grad():
        for i in range(0, len(examples), chunk):
            lps = model.batch_token_logprobs([(e.input_text, e.target_text) for e in examples[i:i + chunk]])
            flat = torch.cat(lps)
            total += float(-flat.sum())
            count += flat.numel()
    return total / count


def data_fingerprint(records: Sequence[SynthRecord]) -> str:
    h = hashlib.sha256()
    for r in records:
        h.update(json.dumps(r.to_dict(), sort_keys=True, ensure_ascii=False).encode("utf-8"))
    return h.hexdigest()


def train_sft(
    model: LanguageModel,
    dataset: Sequence[SynthRecord],
    cfg: SftConfig,
    out_dir: Optional[str | Path] = None,
) -> tuple[LanguageModel, dict]:
    """Fine-tune `model` in place. Returns the model and a metrics dict.

    The loss trajectory is deterministic for a fixed seed. When `out_dir` is
    given, the checkpoint and `metrics.jsonl` are written there.
    """
    if not dataset:
        raise ValueError("empty dataset")
    examples = []
    skipped = 0
    for rec in dataset:
        ex = build_sft_example(rec, cfg.target_mode)
        n = model.count_tokens(ex.input_text) + model.count_tokens(ex.target_text)
        if n > cfg.max_sequence_length:
            skipped += 1
            continue
        examples.append(ex)
    if skipped:
        log.warning("skipped %d examples longer than %d tokens", skipped, cfg.max_sequence_length)
    if not examples:
        raise ValueError("every example exceeds max_sequence_length")

    opt = torch.optim.AdamW(model.parameters(), lr=cfg.learning_rate, weight_decay=cfg.weight_decay)
    rng = random.Random(cfg.seed)
    initial = dataset_nll(model, examples)
    steps = []
    step = 0
    model.train()
    for epoch in range(cfg.epochs):
        order = list(range(len(examples)))
        rng.shuffle(order)
        for start in range(0, len(order), cfg.batch_size):
            batch = [examples[i] for i in order[start:start + cfg.batch_size]]
            loss = sft_loss(model, batch)
            opt.zero_grad()
            loss.backward()
            opt.step()
            value = float(loss.detach())
            steps.append({"step": step, "epoch": epoch, "loss": value})
            log.info("sft step %d epoch %d loss %.4f", step, epoch, value)
            step += 1
    model.eval()
    final = dataset_nll(model, examples)
    metrics = {"initial_nll": initial, "final_nll": final, "skipped": skipped, "steps": steps}

    if out_dir is not None:
        out = Path(out_dir)
        model.save(out, {"stage": "sft", "config": asdict(cfg), "seed": cfg.seed,
                         "data_fingerprint": data_fingerprint(dataset), "examples": len(examples)})
        write_jsonl(out / "metrics.jsonl", steps)
    return model, metrics
