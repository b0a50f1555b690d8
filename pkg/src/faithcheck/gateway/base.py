from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Protocol, Sequence, runtime_checkable

import numpy as np
import torch


class GatewayError(RuntimeError):
    pass


class EmptyContinuation(GatewayError):
    pass


class EmptyInput(GatewayError):
    pass


class ContextOverflow(GatewayError):
    def __init__(self, limit: int, length: int):
        super().__init__(f"sequence of {length} tokens exceeds context window of {limit}")
        self.limit = limit
        self.length = length


@dataclass(frozen=True)
class ContinuationScore:
    total_nll: float
    token_count: int

    @property
    def perplexity(self) -> float:
        return math.exp(self.total_nll / self.token_count)


@dataclass(frozen=True)
class GenerationParams:
    temperature: float = 0.0
    max_new_tokens: int = 256
    seed: Optional[int] = None
    stop_sequences: tuple[str, ...] = field(default_factory=tuple)

    def __post_init__(self):
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.max_new_tokens <= 0:
            raise ValueError("max_new_tokens must be > 0")


class Tokenizer(Protocol):
    vocab_size: int

    def encode(self, text: str) -> list[int]: ...

    def decode(self, ids: Sequence[int]) -> str: ...


class LanguageModel:
    """Base class for every model handle.

    Subclasses implement `token_logprobs`; generation is optional. Token ids
    never leave the handle.
    """

    tokenizer: Tokenizer
    context_window: Optional[int] = None
    model_id: str = "model"

    def token_logprobs(self, prompt: str, continuation: str) -> torch.Tensor:
        """Per-token log-probabilities of `continuation` given `prompt` (1-D, may carry grad)."""
        raise NotImplementedError

    def batch_token_logprobs(self, pairs: Sequence[tuple[str, str]]) -> list[torch.Tensor]:
        return [self.token_logprobs(p, c) for p, c in pairs]

    def generate(self, prompt: str, params: GenerationParams) -> str:
        raise NotImplementedError(f"{type(self).__name__} does not generate")

    def count_tokens(self, text: str) -> int:
        return len(self.tokenizer.encode(text))

    def check_fits(self, prompt: str, continuation: str = "") -> None:
        if self.context_window is None:
            return
        n = self.count_tokens(prompt) + self.count_tokens(continuation)
        if n > self.context_window:
            raise ContextOverflow(self.context_window, n)


def score_continuation(model: LanguageModel, prompt: str, continuation: str) -> ContinuationScore:
    if not continuation or model.count_tokens(continuation) == 0:
        raise EmptyContinuation("continuation has no tokens")
    model.check_fits(prompt, continuation)
    with torch.no_grad():
        lp = model.token_logprobs(prompt, continuation)
    lp = lp.detach().to(torch.float64)
    return ContinuationScore(total_nll=float(-lp.sum()), token_count=int(lp.numel()))


def generate(model: LanguageModel, prompt: str, params: GenerationParams) -> str:
    model.check_fits(prompt)
    return model.generate(prompt, params)


@runtime_checkable
class Embedder(Protocol):
    dim: int
    embedder_id: str

    def encode(self, texts: Sequence[str]) -> np.ndarray: ...


def embed(embedder: Embedder, content: str) -> np.ndarray:
    if not content.strip():
        raise EmptyInput("cannot embed empty content")
    return embed_many(embedder, [content])[0]


def embed_many(embedder: Embedder, contents: Sequence[str]) -> np.ndarray:
    for c in contents:
        if not c.strip():
            raise EmptyInput("cannot embed empty content")
    out = np.asarray(embedder.encode(list(contents)), dtype=np.float64)
    if out.shape != (len(contents), embedder.dim):
        raise GatewayError(f"embedder returned shape {out.shape}, expected ({len(contents)}, {embedder.dim})")
    return out
