"""Deterministic stand-ins for real models.

They satisfy the same contracts as the torch models so the filter, reward and
evaluation code can run with no weights at all.
"""
from __future__ import annotations

import hashlib
import math
import re
from typing import Callable, Iterable, Optional, Sequence

import numpy as np
import torch

from ..core import LabeledSample, label_to_answer, serialize_tagged
from ..prompts import detection_prompt
from .base import GenerationParams, LanguageModel


def stable_hash(*parts: str) -> int:
    h = hashlib.sha256("\x1f".join(parts).encode("utf-8")).digest()
    return int.from_bytes(h[:8], "big")


class WhitespaceTokenizer:
    """Whitespace-split tokens hashed into a fixed vocabulary."""

    def __init__(self, vocab_size: int = 50_000):
        self.vocab_size = vocab_size
        self._names: dict[int, str] = {}

    def encode(self, text: str) -> list[int]:
        ids = []
        for w in text.split():
            i = stable_hash(w) % self.vocab_size
            self._names.setdefault(i, w)
            ids.append(i)
        return ids

    def decode(self, ids: Sequence[int]) -> str:
        return " ".join(self._names.get(i, f"<{i}>") for i in ids)


class MockLM(LanguageModel):
    """Per-token log-probabilities from a function of (prompt, continuation tokens)."""

    def __init__(self, logprob_fn: Callable[[str, str, int], float], tokenizer=None, model_id: str = "mock"):
        self.tokenizer = tokenizer or WhitespaceTokenizer()
        self.logprob_fn = logprob_fn
        self.model_id = model_id
        self.calls = 0

    def token_logprobs(self, prompt: str, continuation: str) -> torch.Tensor:
        self.calls += 1
        n = self.count_tokens(continuation)
        return torch.tensor([self.logprob_fn(prompt, continuation, i) for i in range(n)], dtype=torch.float64)


class UniformLM(MockLM):
    def __init__(self, vocab_size: int):
        super().__init__(lambda p, c, i: -math.log(vocab_size), WhitespaceTokenizer(vocab_size), "uniform")


class ConstantProbLM(MockLM):
    def __init__(self, prob: float):
        super().__init__(lambda p, c, i: math.log(prob), model_id=f"constant-{prob}")


class ScriptedScorer(MockLM):
    """Every continuation token gets probability 1/ppl, so the perplexity is exactly `ppl_fn(prompt, continuation)`."""

    def __init__(self, ppl_fn: Callable[[str, str], float], model_id: str = "scripted-scorer"):
        self.ppl_fn = ppl_fn
        super().__init__(lambda p, c, i: -math.log(ppl_fn(p, c)), model_id=model_id)


def hash_perplexity(prompt: str, continuation: str, lo: float = 1.0, hi: float = 20.0) -> float:
    u = stable_hash(prompt, continuation) / 2**64
    return lo + (hi - lo) * u


class HashScorer(ScriptedScorer):
    """Pseudo-random but deterministic perplexities; used to fuzz the filters."""

    def __init__(self):
        super().__init__(hash_perplexity, model_id="hash-scorer")


class ScriptedLM(LanguageModel):
    """Generation from a function of the prompt; scoring is uniform."""

    def __init__(self, respond: Callable[[str], str] | str, model_id: str = "scripted"):
        self.tokenizer = WhitespaceTokenizer()
        self.respond = respond if callable(respond) else (lambda prompt: respond)
        self.model_id = model_id
        self.calls = 0

    def generate(self, prompt: str, params: GenerationParams) -> str:
        self.calls += 1
        return _apply_stops(self.respond(prompt), params)

    def token_logprobs(self, prompt: str, continuation: str) -> torch.Tensor:
        n = self.count_tokens(continuation)
        return torch.full((n,), -math.log(self.tokenizer.vocab_size), dtype=torch.float64)


def _apply_stops(text: str, params: GenerationParams) -> str:
    cut = len(text)
    for stop in params.stop_sequences:
        i = text.find(stop)
        if i >= 0:
            cut = min(cut, i + len(stop))
    return text[:cut]


class OracleLM(ScriptedLM):
    """Answers every detection prompt of a known sample set correctly."""

    def __init__(self, samples: Iterable[LabeledSample], mode: str = "cot_exp_answer"):
        table = {detection_prompt(s, mode): s.label for s in samples}

        def respond(prompt: str) -> str:
            label = table.get(prompt)
            if label is None:
                return "<think></think><reason></reason><answer></answer>"
            return serialize_tagged("Checked each statement against the document.",
                                    "The claim matches the document." if label else "The document does not support the claim.",
                                    label_to_answer(label))

        super().__init__(respond, model_id="oracle")


class HashEmbedder:
    """Hashed word and character-trigram features, L2-normalised."""

    def __init__(self, dim: int = 64):
        self.dim = dim
        self.embedder_id = f"hash-{dim}"

    def _one(self, text: str) -> np.ndarray:
        v = np.zeros(self.dim)
        low = text.lower()
        feats = re.findall(r"\w+", low) + [low[i:i + 3] for i in range(max(len(low) - 2, 1))]
        for f in feats:
            h = stable_hash(f)
            v[h % self.dim] += 1.0 if (h >> 32) & 1 else -1.0
        # a text-level component keeps distinct inputs apart even when features collide
        rng = np.random.default_rng(stable_hash(text) % 2**32)
        v += 0.25 * rng.standard_normal(self.dim)
        return v / np.linalg.norm(v)

    def encode(self, texts: Sequence[str]) -> np.ndarray:
        return np.stack([self._one(t) for t in texts])


class FixedEmbedder:
    """Returns caller-supplied vectors keyed by text; used to script cluster geometry."""

    def __init__(self, table: dict[str, Sequence[float]], embedder_id: str = "fixed"):
        self.table = {k: np.asarray(v, dtype=np.float64) for k, v in table.items()}
        self.dim = len(next(iter(self.table.values())))
        self.embedder_id = embedder_id

    def encode(self, texts: Sequence[str]) -> np.ndarray:
        return np.stack([self.table[t] for t in texts])


class LogitBandit(LanguageModel, torch.nn.Module):
    """Two-action policy: a single generation step emits a "Yes" or a "No" response.

    Each full tagged response is one token, so the sequence probability is the
    softmax probability of the action.
    """

    def __init__(self, init_logits: Optional[Sequence[float]] = None):
        torch.nn.Module.__init__(self)
        init = torch.zeros(2, dtype=torch.float64) if init_logits is None else torch.tensor(init_logits, dtype=torch.float64)
        self.logits = torch.nn.Parameter(init.clone())
        self.actions = [serialize_tagged("", "", "No"), serialize_tagged("", "", "Yes")]
        self.tokenizer = _ActionTokenizer(self.actions)
        self.model_id = "logit-bandit"

    def token_logprobs(self, prompt: str, continuation: str) -> torch.Tensor:
        ids = self.tokenizer.encode(continuation)
        return torch.log_softmax(self.logits, dim=0)[ids]

    def generate(self, prompt: str, params: GenerationParams) -> str:
        g = torch.Generator().manual_seed(params.seed if params.seed is not None else 0)
        with torch.no_grad():
            if params.temperature == 0:
                a = int(torch.argmax(self.logits))
            else:
                probs = torch.softmax(self.logits / params.temperature, dim=0)
                a = int(torch.multinomial(probs, 1, generator=g))
        return self.actions[a]

    def probabilities(self) -> torch.Tensor:
        return torch.softmax(self.logits.detach(), dim=0)


class _ActionTokenizer:
    def __init__(self, actions: list[str]):
        self.actions = actions
        self.vocab_size = len(actions)

    def encode(self, text: str) -> list[int]:
        if text in self.actions:
            return [self.actions.index(text)]
        raise ValueError(f"not a bandit action: {text!r}")

    def decode(self, ids: Sequence[int]) -> str:
        return "".join(self.actions[i] for i in ids)
