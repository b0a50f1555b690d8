"""Claim preprocessing for long-form checking: decontextualization and atomic-fact decomposition."""
from __future__ import annotations

import json
import re
from typing import Optional

from ..gateway.base import GenerationParams
from ..gateway.remote import ChatClient
from ..prompts import DECOMPOSITION, DECONTEXTUALIZATION, render_prompt

MAX_FACTS = 8
_PARSE_ATTEMPTS = 2


class JudgeParseFailure(ValueError):
    pass


def extract_json_object(text: str) -> dict:
    """First `{...}` object in `text` that decodes; raises ValueError otherwise."""
    decoder = json.JSONDecoder()
    for m in re.finditer(r"\{", text):
        try:
            obj, _ = decoder.raw_decode(text, m.start())
        except json.JSONDecodeError:
            continue
        if isinstance(obj, dict):
            return obj
    raise ValueError("no JSON object found")


def _ask(client: ChatClient, prompt: str, parse, what: str, max_new_tokens: int = 512):
    params = GenerationParams(temperature=0.0, max_new_tokens=max_new_tokens)
    last = ""
    for _ in range(_PARSE_ATTEMPTS):
        last = client.complete(prompt, params)
        try:
            return parse(last)
        except (ValueError, KeyError, TypeError):
            continue
    raise JudgeParseFailure(f"could not parse {what} response after {_PARSE_ATTEMPTS} attempts: {last[:200]!r}")


def _parse_decontext(text: str) -> tuple[bool, Optional[str]]:
    obj = extract_json_object(text)
    label = str(obj["label"]).strip().lower()
    if label == "yes":
        return True, None
    if label == "no":
        rewritten = str(obj["decontext"]).strip()
        if not rewritten or rewritten == "NA":
            raise ValueError("label no without a rewritten claim")
        return False, rewritten
    raise ValueError(f"label must be yes or no, got {label!r}")


def decontextualize_claim(claim: str, context: str, client: ChatClient) -> tuple[bool, Optional[str]]:
    """Returns (standalone, rewritten); `rewritten` is set only when the claim needs its context."""
    if not claim.strip():
        raise ValueError("empty claim")
    prompt = render_prompt(DECONTEXTUALIZATION, {"CONTEXT": context, "CLAIM": claim})
    return _ask(client, prompt, _parse_decontext, "decontextualization")


def parse_fact_lines(text: str) -> list[str]:
    facts = [line.strip()[2:].strip() for line in text.splitlines() if line.strip().startswith("- ")]
    facts = [f for f in facts if f]
    if not facts:
        raise ValueError("no fact lines")
    return facts[:MAX_FACTS]


def decompose_claim(claim: str, client: ChatClient) -> list[str]:
    if not claim.strip():
        raise ValueError("empty claim")
    prompt = render_prompt(DECOMPOSITION, {"SENTENCE": claim})
    return _ask(client, prompt, parse_fact_lines, "decomposition")
