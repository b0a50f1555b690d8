"""Group-relative policy optimisation with a clipped sequence-level ratio and a KL penalty.

Per prompt, G responses are sampled and scored; advantages are the rewards
standardised within the group (population std, zero when the group has no
variance). The objective for a group is

    mean_i min(w_i A_i, clip(w_i, 1-eps, 1+eps) A_i) - beta * KL

where w_i is the ratio of current to rollout-time probability of the whole
response, and KL is the per-token estimator r - log r - 1 with
r = p_ref / p_current, averaged over the group's generated tokens.
"""
from __future__ import annotations

import logging
import math
import random
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Callable, Optional, Sequence

import torch

from .core import LabeledSample, write_jsonl
from .gateway.base import GenerationParams, LanguageModel, generate
from .prompts import detection_prompt
from .rewards import RewardBreakdown, RewardConfig, composite_reward

log = logging.getLogger(__name__)

RewardFn = Callable[[str, int, LabeledSample, RewardConfig], RewardBreakdown]


class StaleRollout(RuntimeError):
    pass


@dataclass
class GrpoConfig:
    group_size: int = 7
    clip_epsilon: float = 0.2
    kl_coefficient: float = 0.001
    learning_rate: float = 1e-6
    rollout_temperature: float = 0.6
    minibatch_size: int = 16
    epochs: int = 2
    seed: int = 0
    max_new_tokens: int = 1024
    updates_per_batch: int = 1
    max_steps: Optional[int] = None
    # Accepted for config compatibility; the objective never reads it.
    gamma_decay: float = 0.2

    def __post_init__(self):
        problems = grpo_config_problems(self)
        if problems:
            raise ValueError("; ".join(problems))


def grpo_config_problems(cfg) -> list[str]:
    out = []
    if cfg.group_size < 2:
        out.append("group_size must be >= 2")
    if not cfg.clip_epsilon > 0:
        out.append("clip_epsilon must be > 0")
    if cfg.kl_coefficient < 0:
        out.append("kl_coefficient must be >= 0")
    if not cfg.learning_rate > 0:
        out.append("learning_rate must be > 0")
    if cfg.rollout_temperature < 0:
        out.append("rollout_temperature must be >= 0")
    if cfg.minibatch_size < 1:
        out.append("minibatch_size must be >= 1")
    if cfg.epochs < 1:
        out.append("epochs must be >= 1")
    if cfg.updates_per_batch < 1:
        out.append("updates_per_batch must be >= 1")
    if cfg.max_new_tokens < 1:
        out.append("max_new_tokens must be >= 1")
    return out


@dataclass
class RolloutGroup:
    sample: LabeledSample
    prompt: str
    responses: list[str]
    rewards: list[RewardBreakdown]
    advantages: list[float]
    old_logprobs: list[torch.Tensor]


def compute_advantages(rewards: Sequence[float]) -> list[float]:
    n = len(rewards)
    mean = math.fsum(rewards) / n
    std = math.sqrt(math.fsum((r - mean) ** 2 for r in rewards) / n)
    if std == 0:
        return [0.0] * n
    return [(r - mean) / std for r in rewards]


def rollout_group(
    policy: LanguageModel,
    sample: LabeledSample,
    cfg: GrpoConfig,
    reward_cfg: RewardConfig,
    reward_fn: RewardFn = composite_reward,
    seed: int = 0,
) -> RolloutGroup:
    prompt = detection_prompt(sample)
    responses = []
    for i in range(cfg.group_size):
        params = GenerationParams(
            temperature=cfg.rollout_temperature,
            max_new_tokens=cfg.max_new_tokens,
            seed=seed * cfg.group_size + i,
            stop_sequences=("</answer>",),
        )
        responses.append(generate(policy, prompt, params))
    rewards = [reward_fn(r, sample.label, sample, reward_cfg) for r in responses]
    with torch.no_grad():
        old = [policy.token_logprobs(prompt, r).detach().clone() for r in responses]
    return RolloutGroup(sample, prompt, responses, rewards, compute_advantages([r.r_final for r in rewards]), old)


def kl_estimate(current: torch.Tensor, reference: torch.Tensor) -> torch.Tensor:
    """Per-token r - log r - 1 with r = p_ref / p_current; nonnegative, zero when equal."""
    log_r = reference - current
    return torch.exp(log_r) - log_r - 1


def grpo_terms(policy: LanguageModel, reference: LanguageModel, groups: Sequence[RolloutGroup], cfg: GrpoConfig) -> dict:
    objectives, kls = [], []
    clipped, total = 0, 0
    eps = cfg.clip_epsilon
    for g in groups:
        cur = policy.batch_token_logprobs([(g.prompt, r) for r in g.responses])
        with torch.no_grad():
            ref = reference.batch_token_logprobs([(g.prompt, r) for r in g.responses])
        for c, o in zip(cur, g.old_logprobs):
            if c.numel() != o.numel():
                raise StaleRollout(f"rollout has {o.numel()} tokens, current tokenization {c.numel()}")
        w = torch.exp(torch.stack([c.sum() - o.sum() for c, o in zip(cur, g.old_logprobs)]))
        A = torch.tensor(g.advantages, dtype=w.dtype)
        surrogate = torch.minimum(w * A, torch.clamp(w, 1 - eps, 1 + eps) * A).mean()
        kl = kl_estimate(torch.cat(cur), torch.cat(ref).to(w.dtype)).mean()
        objectives.append(surrogate - cfg.kl_coefficient * kl)
        kls.append(kl.detach())
        clipped += int(((w.detach() - 1).abs() > eps).sum())
        total += len(g.responses)
    loss = -torch.stack(objectives).mean()
    return {"loss": loss, "kl": float(torch.stack(kls).mean()), "clip_fraction": clipped / total}


def grpo_loss(policy: LanguageModel, reference: LanguageModel, groups: Sequence[RolloutGroup], cfg: GrpoConfig) -> torch.Tensor:
    """Negated group objective, averaged over groups; minimise it."""
    return grpo_terms(policy, reference, groups, cfg)["loss"]


def train_grpo(
    policy: LanguageModel,
    reference: LanguageModel,
    dataset: Sequence[LabeledSample],
    cfg: GrpoConfig,
    reward_cfg: RewardConfig,
    reward_fn: RewardFn = composite_reward,
    out_dir: Optional[str | Path] = None,
) -> tuple[LanguageModel, list[dict]]:
    if not dataset:
        raise ValueError("empty dataset")
    for p in reference.parameters():
        p.requires_grad_(False)
    opt = torch.optim.Adam([p for p in policy.parameters() if p.requires_grad], lr=cfg.learning_rate)
    rng = random.Random(cfg.seed)
    metrics: list[dict] = []
    step = 0
    for epoch in range(cfg.epochs):
        order = list(range(len(dataset)))
        rng.shuffle(order)
        for start in range(0, len(order), cfg.minibatch_size):
            if cfg.max_steps is not None and step >= cfg.max_steps:
                break
            batch = [dataset[i] for i in order[start:start + cfg.minibatch_size]]
            policy.eval()
            groups = [
                rollout_group(policy, s, cfg, reward_cfg, reward_fn, seed=cfg.seed * 1_000_003 + step * 1009 + j)
                for j, s in enumerate(batch)
            ]
            policy.train()
            for _ in range(cfg.updates_per_batch):
                terms = grpo_terms(policy, reference, groups, cfg)
                opt.zero_grad()
                terms["loss"].backward()
                opt.step()
            rewards = [r for g in groups for r in g.rewards]
            row = {
                "step": step,
                "epoch": epoch,
                "mean_reward": sum(r.r_final for r in rewards) / len(rewards),
                "mean_r_pred": sum(r.r_pred for r in rewards) / len(rewards),
                "mean_r_exp": sum(r.r_exp for r in rewards) / len(rewards),
                "mean_r_format": sum(r.r_format for r in rewards) / len(rewards),
                "kl": terms["kl"],
                "clip_fraction": terms["clip_fraction"],
                "loss": float(terms["loss"].detach()),
            }
            metrics.append(row)
            log.info("grpo step %d reward %.3f kl %.5f", step, row["mean_reward"], row["kl"])
            step += 1
    policy.eval()
    if out_dir is not None:
        out = Path(out_dir)
        if hasattr(policy, "save"):
            policy.save(out, {"stage": "rl", "config": asdict(cfg), "seed": cfg.seed})
        else:
            out.mkdir(parents=True, exist_ok=True)
        write_jsonl(out / "metrics.jsonl", metrics)
    return policy, metrics
