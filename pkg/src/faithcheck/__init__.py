"""Explainable faithfulness-hallucination detection: data curation, SFT, GRPO and evaluation."""

__version__ = "0.1.0"
