"""Rule-based rewards: prediction correctness, explanation quality via a novice model, format."""
from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Optional

from .core import LabeledSample, TaggedResponse, label_to_answer, parse_tagged_response
from .gateway.base import GenerationParams, LanguageModel, generate, score_continuation
from .gateway.mock import stable_hash
from .prompts import EXPLANATION_REWARD, EXPLANATION_REWARD_BARE, RESPONSE_SEP, render_prompt

EXP_REWARD_MODES = ("correctness", "perplexity")


@dataclass(frozen=True)
class RewardBreakdown:
    r_pred: int
    r_exp: int
    r_format: int

    @property
    def r_final(self) -> int:
        return self.r_pred + self.r_exp + self.r_format

    def to_dict(self) -> dict:
        return {**asdict(self), "r_final": self.r_final}


@dataclass
class RewardConfig:
    novice: Optional[LanguageModel] = None
    novice_temperature: float = 0.6
    exp_reward_mode: str = "correctness"
    novice_max_new_tokens: int = 64
    seed: int = 0

    def __post_init__(self):
        if self.novice_temperature < 0:
            raise ValueError("novice_temperature must be >= 0")
        if self.exp_reward_mode not in EXP_REWARD_MODES:
            raise ValueError(f"exp_reward_mode must be one of {EXP_REWARD_MODES}")


def reward_prediction(parsed: TaggedResponse, gold: int) -> int:
    return int(parsed.answer_label is not None and parsed.answer_label == gold)


def reward_format(raw_response: str) -> int:
    """1 for a well-formed response whose answer is a recognisable Yes/No."""
    parsed = parse_tagged_response(raw_response)
    return int(parsed.well_formed and parsed.answer_label is not None)


def _novice_prompt(doc: str, claim: str, explanation: Optional[str]) -> str:
    if explanation is None:
        return render_prompt(EXPLANATION_REWARD_BARE, {"DOCUMENT": doc, "CLAIM": claim})
    return render_prompt(EXPLANATION_REWARD, {"DOCUMENT": doc, "CLAIM": claim, "EXPLANATION": explanation})


def reward_explanation(doc: str, claim: str, explanation: str, gold: int, cfg: RewardConfig) -> int:
    """1 if the explanation helps the novice model towards the gold answer.

    correctness mode: one novice sample at `novice_temperature` must answer
    correctly. perplexity mode: the explanation must strictly lower the
    novice's perplexity of the gold answer.
    """
    if not explanation.strip():
        return 0
    if cfg.exp_reward_mode == "perplexity":
        answer = label_to_answer(gold)
        with_exp = score_continuation(cfg.novice, _novice_prompt(doc, claim, explanation) + RESPONSE_SEP + "<answer>", answer)
        without = score_continuation(cfg.novice, _novice_prompt(doc, claim, None) + RESPONSE_SEP + "<answer>", answer)
        return int(with_exp.perplexity < without.perplexity)
    prompt = _novice_prompt(doc, claim, explanation) + RESPONSE_SEP
    params = GenerationParams(
        temperature=cfg.novice_temperature,
        max_new_tokens=cfg.novice_max_new_tokens,
        seed=(cfg.seed + stable_hash(prompt)) % 2**63,
        stop_sequences=("</answer>",),
    )
    label = parse_tagged_response(generate(cfg.novice, prompt, params)).answer_label
    return int(label is not None and label == gold)


def composite_reward(raw_response: str, gold: int, sample: LabeledSample, cfg: RewardConfig) -> RewardBreakdown:
    parsed = parse_tagged_response(raw_response)
    return RewardBreakdown(
        r_pred=reward_prediction(parsed, gold),
        r_exp=reward_explanation(sample.doc, sample.claim, parsed.reason, gold, cfg),
        r_format=int(parsed.well_formed),
    )


def prediction_only_reward(raw_response: str, gold: int, sample: LabeledSample, cfg: RewardConfig) -> RewardBreakdown:
    """Correctness reward alone; the other components are held at 0."""
    return RewardBreakdown(reward_prediction(parse_tagged_response(raw_response), gold), 0, 0)
