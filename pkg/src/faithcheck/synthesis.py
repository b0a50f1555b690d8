"""Synthesize explanation-bearing records by querying a remote reasoning model."""
from __future__ import annotations

import json
import logging
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

from .core import LabeledSample, SynthRecord, parse_tagged_response, read_jsonl
from .gateway.base import GenerationParams
from .gateway.remote import ChatClient, MissingCredentials, RemoteClientConfig, RemoteError
from .prompts import SYNTHESIS, render_prompt

log = logging.getLogger(__name__)


class SynthesisParseFailure(RuntimeError):
    def __init__(self, sample_id: str, attempts: int):
        super().__init__(f"{sample_id}: no well-formed response after {attempts} attempts")
        self.sample_id = sample_id
        self.attempts = attempts


@dataclass
class SynthesisConfig:
    client: RemoteClientConfig = field(default_factory=RemoteClientConfig)
    temperature: float = 1.0
    max_new_tokens: int = 4096
    max_attempts_per_sample: int = 3

    def __post_init__(self):
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.max_attempts_per_sample < 1:
            raise ValueError("max_attempts_per_sample must be >= 1")


@dataclass
class SynthesisReport:
    requested: int = 0
    succeeded: int = 0
    parse_failed: int = 0
    transport_failed: int = 0
    skipped: int = 0
    failures: list = field(default_factory=list)

    def check(self) -> None:
        assert self.requested == self.succeeded + self.parse_failed + self.transport_failed, asdict(self)

    def to_dict(self) -> dict:
        return asdict(self)


def synthesize_record(sample: LabeledSample, cfg: SynthesisConfig, client: Optional[ChatClient] = None) -> SynthRecord:
    client = client or ChatClient(cfg.client)
    prompt = render_prompt(SYNTHESIS, {"DOCUMENT": sample.doc, "CLAIM": sample.claim})
    params = GenerationParams(temperature=cfg.temperature, max_new_tokens=cfg.max_new_tokens)
    for attempt in range(1, cfg.max_attempts_per_sample + 1):
        raw = client.complete(prompt, params)
        parsed = parse_tagged_response(raw)
        if parsed.well_formed and parsed.answer_label is not None:
            return SynthRecord(sample, parsed, raw, cfg.client.model_name)
        log.info("%s: malformed response on attempt %d", sample.id, attempt)
    raise SynthesisParseFailure(sample.id, cfg.max_attempts_per_sample)


def existing_ids(path: str | Path) -> set[str]:
    p = Path(path)
    if not p.exists():
        return set()
    return {str(d["id"]) for d in read_jsonl(p)}


def synthesize_corpus(
    samples: list[LabeledSample],
    cfg: SynthesisConfig,
    client: Optional[ChatClient] = None,
    out_path: Optional[str | Path] = None,
    skip_ids: Optional[set[str]] = None,
) -> tuple[list[SynthRecord], SynthesisReport]:
    """Synthesize every sample not already present in `out_path` (or `skip_ids`).

    Successes are appended to `out_path` as they arrive, so an interrupted run
    resumes where it stopped. The returned list follows input order.
    """
    ids = [s.id for s in samples]
    if len(set(ids)) != len(ids):
        raise ValueError("sample ids must be unique")
    client = client or ChatClient(cfg.client)
    skip = set(skip_ids or ())
    if out_path is not None:
        skip |= existing_ids(out_path)
    todo = [s for s in samples if s.id not in skip]
    report = SynthesisReport(requested=len(todo), skipped=len(samples) - len(todo))
    write_lock = threading.Lock()

    def work(sample: LabeledSample):
        try:
            rec = synthesize_record(sample, cfg, client)
        except SynthesisParseFailure as e:
            return sample, None, ("parse", str(e))
        except MissingCredentials:
            raise
        except RemoteError as e:
            return sample, None, ("transport", str(e))
        if out_path is not None:
            with write_lock, open(out_path, "a", encoding="utf-8") as f:
                f.write(json.dumps(rec.to_dict(), ensure_ascii=False) + "\n")
        return sample, rec, None

    if out_path is not None:
        Path(out_path).parent.mkdir(parents=True, exist_ok=True)
    with ThreadPoolExecutor(max_workers=cfg.client.max_concurrency) as pool:
        results = list(pool.map(work, todo))

    records = []
    for sample, rec, failure in results:
        if rec is not None:
            records.append(rec)
            report.succeeded += 1
        elif failure[0] == "parse":
            report.parse_failed += 1
            report.failures.append((sample.id, failure[1]))
        else:
            report.transport_failed += 1
            report.failures.append((sample.id, failure[1]))
    report.check()
    return records, report
