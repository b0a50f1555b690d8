"""Chat-completion client with retries, full-jitter backoff and a concurrency cap."""
from __future__ import annotations

import json
import logging
import os
import random
import re
import threading
import time
from dataclasses import dataclass
from typing import Callable, Optional

import httpx

from .base import GenerationParams

log = logging.getLogger(__name__)

RETRYABLE_STATUS = {429, 500, 502, 503, 504}


class RemoteError(RuntimeError):
    pass


class MissingCredentials(RemoteError):
    pass


class FatalStatus(RemoteError):
    def __init__(self, status: int, body: str = ""):
        super().__init__(f"non-retryable HTTP {status}: {body[:200]}")
        self.status = status


class ExhaustedRetries(RemoteError):
    def __init__(self, attempts: int, last_status: Optional[int]):
        super().__init__(f"gave up after {attempts} attempts (last status {last_status})")
        self.attempts = attempts
        self.last_status = last_status


class RequestTimeout(ExhaustedRetries):
    """Retries ran out and the final attempt timed out."""


@dataclass
class RemoteClientConfig:
    base_url: str = "https://api.deepseek.com/v1"
    api_key_env: str = "FAITHCHECK_API_KEY"
    model_name: str = "deepseek-reasoner"
    max_retries: int = 3
    backoff_base: float = 1.0
    request_timeout: float = 120.0
    max_concurrency: int = 8

    def __post_init__(self):
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")
        if self.max_concurrency < 1:
            raise ValueError("max_concurrency must be >= 1")


class ChatClient:
    """Thread-safe client; at most `max_concurrency` requests are in flight."""

    def __init__(
        self,
        config: RemoteClientConfig,
        transport: Optional[httpx.BaseTransport] = None,
        sleep: Callable[[float], None] = time.sleep,
        rng: Optional[random.Random] = None,
    ):
        self.config = config
        if transport is None and config.base_url.startswith("mock://"):
            transport = offline_transport(config.base_url[len("mock://"):])
        self._http = httpx.Client(transport=transport, timeout=config.request_timeout)
        self._slots = threading.BoundedSemaphore(config.max_concurrency)
        self._sleep = sleep
        self._rng = rng or random.Random()
        self.attempts = 0

    def _api_key(self) -> str:
        key = os.environ.get(self.config.api_key_env, "")
        if not key and not self.config.base_url.startswith("mock://"):
            raise MissingCredentials(f"environment variable {self.config.api_key_env} is not set")
        return key

    def _url(self) -> str:
        base = self.config.base_url
        if base.startswith("mock://"):
            base = "http://offline.invalid"
        return base.rstrip("/") + "/chat/completions"

    def complete(self, prompt: str, params: GenerationParams) -> str:
        key = self._api_key()
        payload = {
            "model": self.config.model_name,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": params.temperature,
            "max_tokens": params.max_new_tokens,
        }
        if params.seed is not None:
            payload["seed"] = params.seed
        if params.stop_sequences:
            payload["stop"] = list(params.stop_sequences)
        headers = {"Authorization": f"Bearer {key}"}

        last_status: Optional[int] = None
        timed_out = False
        for attempt in range(self.config.max_retries + 1):
            if attempt:
                self._sleep(self._rng.uniform(0, self.config.backoff_base * 2 ** (attempt - 1)))
            self.attempts += 1
            try:
                with self._slots:
                    resp = self._http.post(self._url(), json=payload, headers=headers)
            except httpx.TimeoutException:
                timed_out, last_status = True, None
                log.warning("chat request timed out (attempt %d)", attempt + 1)
                continue
            except httpx.TransportError as e:
                timed_out, last_status = False, None
                log.warning("transport error (attempt %d): %s", attempt + 1, e)
                continue
            timed_out = False
            if resp.status_code == 200:
                return resp.json()["choices"][0]["message"]["content"]
            last_status = resp.status_code
            if resp.status_code not in RETRYABLE_STATUS:
                raise FatalStatus(resp.status_code, resp.text)
            log.warning("HTTP %d (attempt %d)", resp.status_code, attempt + 1)
        attempts = self.config.max_retries + 1
        if timed_out:
            raise RequestTimeout(attempts, None)
        raise ExhaustedRetries(attempts, last_status)

    def close(self):
        self._http.close()


def chat_complete(client: ChatClient, prompt: str, params: GenerationParams) -> str:
    return client.complete(prompt, params)


# -- offline transports ------------------------------------------------------

def completion_response(content: str, status: int = 200) -> httpx.Response:
    return httpx.Response(status, json={"choices": [{"message": {"role": "assistant", "content": content}}]})


def _prompt_of(request: httpx.Request) -> str:
    return json.loads(request.content)["messages"][-1]["content"]


def _field(prompt: str, name: str) -> str:
    # last occurrence: few-shot prompts carry example fields before the real one
    matches = re.findall(rf"^{name}: (.*?)(?:\n\n|\Z)", prompt, flags=re.MULTILINE | re.DOTALL)
    return matches[-1].strip() if matches else ""


def _offline_synth(prompt: str) -> str:
    # Heuristic annotator: a claim is consistent iff every sentence of it occurs
    # verbatim in the document; a fixed 20% of answers are flipped so label
    # filtering has something to remove.
    from .mock import stable_hash

    doc, claim = _field(prompt, "Document"), _field(prompt, "Claim")
    parts = [p.strip() for p in re.split(r"(?<=\.)\s+", claim) if p.strip()]
    supported = all(p in doc for p in parts)
    if stable_hash("flip", prompt) % 5 == 0:
        supported = not supported
    think = f"The claim says: {claim} I look for each part of it in the document."
    if supported:
        reason = "Every statement in the claim appears in the document, so it is supported."
    else:
        reason = "The claim states something the document does not say, so it is not supported."
    answer = "Yes" if supported else "No"
    return f"<think>{think}</think><reason>{reason}</reason><answer>{answer}</answer>"


def _offline_judge(prompt: str) -> str:
    from .mock import stable_hash

    h = stable_hash(prompt)
    return json.dumps({"readability": 3 + h % 3, "helpfulness": 3 + (h >> 8) % 3, "informativeness": 2 + (h >> 16) % 4})


def _offline_decompose(prompt: str) -> str:
    sentence = prompt.rsplit("Sentence: ", 1)[-1].split("\n\nFacts:")[0].strip()
    parts = [p.strip(" .") for p in re.split(r",? and |; ", sentence) if p.strip(" .")]
    return "\n".join(f"- {p}." for p in parts)


def _offline_decontext(prompt: str) -> str:
    claim = _field(prompt, "Claim")
    standalone = not re.match(r"(?i)(it|this|they|he|she|these|those)\b", claim)
    return json.dumps({"label": "yes" if standalone else "no", "decontext": "NA" if standalone else claim})


_OFFLINE = {
    "synth": _offline_synth,
    "judge": _offline_judge,
    "decompose": _offline_decompose,
    "decontext": _offline_decontext,
}


def offline_transport(kind: str) -> httpx.MockTransport:
    """Transports behind `mock://<kind>` base URLs; they speak the real wire format."""
    if kind not in _OFFLINE:
        raise ValueError(f"unknown offline endpoint mock://{kind}; choose from {sorted(_OFFLINE)}")
    fn = _OFFLINE[kind]
    return httpx.MockTransport(lambda request: completion_response(fn(_prompt_of(request))))
