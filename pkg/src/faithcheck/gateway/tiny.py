"""A small byte-level recurrent LM for desk-scale training runs."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Optional, Sequence

import torch
from torch import nn

from .base import GenerationParams, LanguageModel

BOS = 256


class ByteTokenizer:
    vocab_size = 257

    def encode(self, text: str) -> list[int]:
        return list(text.encode("utf-8"))

    def decode(self, ids: Sequence[int]) -> str:
        return bytes(i for i in ids if i < 256).decode("utf-8", errors="replace")


# Sampling is restricted to printable ASCII and newline so every generated
# string re-encodes to exactly the sampled bytes.
_SAMPLEABLE = torch.zeros(257, dtype=torch.bool)
_SAMPLEABLE[32:127] = True
_SAMPLEABLE[10] = True


@dataclass
class TinyLMConfig:
    embed_dim: int = 64
    hidden_dim: int = 192
    context_window: int = 8192
    seed: int = 0


class TinyLM(LanguageModel, nn.Module):
    def __init__(self, config: Optional[TinyLMConfig] = None):
        nn.Module.__init__(self)
        self.config = config or TinyLMConfig()
        self.tokenizer = ByteTokenizer()
        self.context_window = self.config.context_window
        self.model_id = f"tiny-gru-{self.config.hidden_dim}"
        with torch.random.fork_rng():
            torch.manual_seed(self.config.seed)
            self.embed = nn.Embedding(257, self.config.embed_dim)
            self.rnn = nn.GRU(self.config.embed_dim, self.config.hidden_dim, batch_first=True)
            self.head = nn.Linear(self.config.hidden_dim, 257)
        self.to(torch.float64)

    def num_parameters(self) -> int:
        return sum(p.numel() for p in self.parameters())

    def _logits(self, ids: torch.Tensor, h=None):
        out, h = self.rnn(self.embed(ids), h)
        return self.head(out), h

    def token_logprobs(self, prompt: str, continuation: str) -> torch.Tensor:
        p = self.tokenizer.encode(prompt)
        c = self.tokenizer.encode(continuation)
        ids = torch.tensor([[BOS] + p + c[:-1]])
        logits, _ = self._logits(ids)
        lp = torch.log_softmax(logits[0, len(p):], dim=-1)
        return lp.gather(1, torch.tensor(c).unsqueeze(1)).squeeze(1)

    def batch_token_logprobs(self, pairs: Sequence[tuple[str, str]]) -> list[torch.Tensor]:
        # Right padding is harmless for a causal RNN: padded steps come after every real one.
        enc = [(self.tokenizer.encode(p), self.tokenizer.encode(c)) for p, c in pairs]
        seqs = [[BOS] + p + c[:-1] for p, c in enc]
        width = max(len(s) for s in seqs)
        ids = torch.tensor([s + [0] * (width - len(s)) for s in seqs])
        logits, _ = self._logits(ids)
        lp = torch.log_softmax(logits, dim=-1)
        out = []
        for row, (p, c) in enumerate(enc):
            pos = torch.arange(len(p), len(p) + len(c))
            out.append(lp[row, pos, torch.tensor(c)])
        return out

    @torch.no_grad()
    def generate(self, prompt: str, params: GenerationParams) -> str:
        g = torch.Generator()
        if params.seed is not None:
            g.manual_seed(params.seed)
        else:
            g.seed()
        ids = torch.tensor([[BOS] + self.tokenizer.encode(prompt)])
        logits, h = self._logits(ids)
        last = logits[0, -1]
        out: list[int] = []
        text = ""
        for _ in range(params.max_new_tokens):
            masked = last.masked_fill(~_SAMPLEABLE, float("-inf"))
            if params.temperature == 0:
                tok = int(torch.argmax(masked))
            else:
                probs = torch.softmax(masked / params.temperature, dim=-1)
                tok = int(torch.multinomial(probs, 1, generator=g))
            out.append(tok)
            text = self.tokenizer.decode(out)
            if any(text.endswith(s) for s in params.stop_sequences):
                break
            logits, h = self._logits(torch.tensor([[tok]]), h)
            last = logits[0, -1]
        return text

    def save(self, directory: str | Path, metadata: Optional[dict] = None) -> Path:
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        torch.save(self.state_dict(), d / "model.pt")
        meta = {"model_type": "tiny-gru", "model_config": asdict(self.config)}
        meta.update(metadata or {})
        (d / "metadata.json").write_text(json.dumps(meta, indent=2, default=str))
        return d

    @classmethod
    def load(cls, directory: str | Path) -> "TinyLM":
        d = Path(directory)
        meta = json.loads((d / "metadata.json").read_text())
        model = cls(TinyLMConfig(**meta["model_config"]))
        model.load_state_dict(torch.load(d / "model.pt", weights_only=True))
        return model

    def copy(self) -> "TinyLM":
        clone = TinyLM(self.config)
        clone.load_state_dict(self.state_dict())
        return clone
