"""Build model and embedder handles from short string specs used in configs.

Model specs: ``tiny`` or ``tiny:<seed>`` (fresh TinyLM), ``checkpoint:<dir>``,
``uniform:<V>``, ``hash-scorer``, ``constant:<p>``.
Embedder specs: ``hash`` or ``hash:<dim>``, ``st:<sentence-transformers model>``.
"""
from __future__ import annotations

from pathlib import Path

import numpy as np

from .base import LanguageModel
from .mock import ConstantProbLM, HashEmbedder, HashScorer, UniformLM
from .tiny import TinyLM, TinyLMConfig


class SentenceTransformerEmbedder:
    def __init__(self, model_name: str):
        from sentence_transformers import SentenceTransformer

        self._model = SentenceTransformer(model_name)
        self.dim = self._model.get_sentence_embedding_dimension()
        self.embedder_id = f"st:{model_name}"

    def encode(self, texts):
        return np.asarray(self._model.encode(list(texts), normalize_embeddings=True), dtype=np.float64)


def load_model(spec: str) -> LanguageModel:
    kind, _, arg = spec.partition(":")
    if kind == "tiny":
        return TinyLM(TinyLMConfig(seed=int(arg) if arg else 0))
    if kind == "checkpoint":
        return TinyLM.load(Path(arg))
    if kind == "uniform":
        return UniformLM(int(arg or 50_000))
    if kind == "hash-scorer":
        return HashScorer()
    if kind == "constant":
        return ConstantProbLM(float(arg))
    raise ValueError(f"unknown model spec {spec!r}")


def load_embedder(spec: str):
    kind, _, arg = spec.partition(":")
    if kind == "hash":
        return HashEmbedder(int(arg) if arg else 64)
    if kind == "st":
        return SentenceTransformerEmbedder(arg)
    raise ValueError(f"unknown embedder spec {spec!r}")


MODEL_KINDS = ("tiny", "checkpoint", "uniform", "hash-scorer", "constant")
EMBEDDER_KINDS = ("hash", "st")
