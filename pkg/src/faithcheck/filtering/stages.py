"""Label-correctness, explanation-quality and diversity filters, applied in that order."""
from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

from ..core import SynthRecord, write_jsonl
from ..gateway.base import Embedder, LanguageModel, embed_many, score_continuation
from ..prompts import (
    DIVERSITY_PROBE,
    DIVERSITY_PROBE_WITH_EXAMPLE,
    EXPLANATION_FILTER_WITH,
    EXPLANATION_FILTER_WITHOUT,
    demonstration_text,
    gold_answer,
    split_at_answer,
)
from .kmedoids import cosine_distance_matrix, pam

log = logging.getLogger(__name__)

STAGES = ("label", "explanation", "diversity")


class CorpusTooSmall(ValueError):
    pass


@dataclass
class FilterDecision:
    record_id: str
    stage: str
    retained: bool
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class ProbeSet:
    medoids: list[SynthRecord]
    k: int
    base_perplexities: list[float]
    embedder_id: str
    medoid_indices: list[int] = field(default_factory=list)

    def __post_init__(self):
        if not (len(self.medoids) == self.k == len(self.base_perplexities)):
            raise ValueError("probe set sizes disagree")


@dataclass
class FilterReport:
    input_count: int = 0
    removed_by_label: int = 0
    removed_by_explanation: int = 0
    removed_by_diversity: int = 0
    retained: int = 0

    def is_consistent(self) -> bool:
        return self.input_count == (
            self.removed_by_label + self.removed_by_explanation + self.removed_by_diversity + self.retained
        )

    def to_dict(self) -> dict:
        return asdict(self)


# -- stage 1 ----------------------------------------------------------------

def filter_label(record: SynthRecord) -> FilterDecision:
    pred, gold = record.response.answer_label, record.sample.label
    if pred is None:
        return FilterDecision(record.id, "label", False, {"predicted": None, "gold": gold, "error": "MissingPrediction"})
    return FilterDecision(record.id, "label", pred == gold, {"predicted": pred, "gold": gold})


# -- stage 2 ----------------------------------------------------------------

def explanation_prompts(record: SynthRecord) -> tuple[str, str]:
    """(prompt without explanation, prompt with explanation); both end right before the answer."""
    s, r = record.sample, record.response
    base = {"DOCUMENT": s.doc, "CLAIM": s.claim, "CoT": r.think}
    without = split_at_answer(EXPLANATION_FILTER_WITHOUT, base)
    with_exp = split_at_answer(EXPLANATION_FILTER_WITH, {**base, "Explanation": r.reason})
    return without, with_exp


def filter_explanation(record: SynthRecord, scorer: LanguageModel) -> FilterDecision:
    without, with_exp = explanation_prompts(record)
    answer = gold_answer(record)
    ppl_without = score_continuation(scorer, without, answer).perplexity
    ppl_with = score_continuation(scorer, with_exp, answer).perplexity
    return FilterDecision(
        record.id, "explanation", ppl_with < ppl_without, {"ppl_without": ppl_without, "ppl_with": ppl_with}
    )


# -- stage 3 ----------------------------------------------------------------

def pair_text(record: SynthRecord) -> str:
    return f"Document: {record.sample.doc}\nClaim: {record.sample.claim}"


def _probe_bindings(probe: SynthRecord) -> dict:
    s, r = probe.sample, probe.response
    return {"DOCUMENT": s.doc, "CLAIM": s.claim, "CoT": r.think, "Explanation": r.reason}


def probe_prompt(probe: SynthRecord) -> str:
    return split_at_answer(DIVERSITY_PROBE, _probe_bindings(probe))


def probe_prompt_with_example(probe: SynthRecord, candidate: SynthRecord) -> str:
    return split_at_answer(
        DIVERSITY_PROBE_WITH_EXAMPLE, {**_probe_bindings(probe), "Tested Sample": demonstration_text(candidate)}
    )


def build_probe_set(
    corpus: list[SynthRecord], embedder: Embedder, k: int, scorer: LanguageModel, seed: int = 0
) -> ProbeSet:
    if k < 1 or len(corpus) < k:
        raise CorpusTooSmall(f"need at least k={k} records, got {len(corpus)}")
    X = embed_many(embedder, [pair_text(r) for r in corpus])
    result = pam(cosine_distance_matrix(X), k, seed=seed)
    medoids = [corpus[i] for i in result.medoids]
    base = [score_continuation(scorer, probe_prompt(m), gold_answer(m)).perplexity for m in medoids]
    return ProbeSet(medoids, k, base, embedder.embedder_id, medoid_indices=list(result.medoids))


def filter_diversity(record: SynthRecord, probes: ProbeSet, scorer: LanguageModel) -> FilterDecision:
    pairs = []
    improved = 0
    for probe, base in zip(probes.medoids, probes.base_perplexities):
        cond = score_continuation(scorer, probe_prompt_with_example(probe, record), gold_answer(probe)).perplexity
        pairs.append({"probe_id": probe.id, "ppl": base, "ppl_given_candidate": cond})
        improved += cond < base
    # improved >= K/2 without floating point
    retained = 2 * improved >= probes.k
    return FilterDecision(record.id, "diversity", retained, {"probes": pairs, "improved_count": improved, "k": probes.k})


# -- pipeline ---------------------------------------------------------------

@dataclass
class FilterConfig:
    k: int = 10
    seed: int = 0
    embedder: Optional[Embedder] = None
    scorer: Optional[LanguageModel] = None
    stages: tuple[str, ...] = STAGES


def run_filter_pipeline(
    records: list[SynthRecord], cfg: FilterConfig
) -> tuple[list[SynthRecord], FilterReport, list[FilterDecision]]:
    """Apply label -> explanation -> diversity; stages not in `cfg.stages` pass everything through.

    The probe set is built once, from the records that survive the explanation
    stage. When fewer than `k` records survive, k shrinks to their number.
    """
    unknown = set(cfg.stages) - set(STAGES)
    if unknown:
        raise ValueError(f"unknown stages {sorted(unknown)}")
    report = FilterReport(input_count=len(records))
    decisions: list[FilterDecision] = []
    survivors = list(records)

    if "label" in cfg.stages:
        kept = []
        for r in survivors:
            d = filter_label(r)
            decisions.append(d)
            if d.retained:
                kept.append(r)
        report.removed_by_label = len(survivors) - len(kept)
        survivors = kept

    if "explanation" in cfg.stages and survivors:
        kept = []
        for r in survivors:
            d = filter_explanation(r, cfg.scorer)
            decisions.append(d)
            if d.retained:
                kept.append(r)
        report.removed_by_explanation = len(survivors) - len(kept)
        survivors = kept

    if "diversity" in cfg.stages and survivors:
        k = min(cfg.k, len(survivors))
        if k < cfg.k:
            log.warning("only %d records reach the diversity stage; using k=%d", len(survivors), k)
        probes = build_probe_set(survivors, cfg.embedder, k, cfg.scorer, cfg.seed)
        log.info("probe set: %s", [m.id for m in probes.medoids])
        kept = []
        for r in survivors:
            d = filter_diversity(r, probes, cfg.scorer)
            decisions.append(d)
            if d.retained:
                kept.append(r)
        report.removed_by_diversity = len(survivors) - len(kept)
        survivors = kept

    report.retained = len(survivors)
    assert report.is_consistent(), report
    return survivors, report, decisions


def write_filter_outputs(out_dir: str | Path, kept: list[SynthRecord], report: FilterReport,
                         decisions: list[FilterDecision]) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "filter_report.json").write_text(json.dumps(report.to_dict(), indent=2))
    write_jsonl(out / "filter_decisions.jsonl", (d.to_dict() for d in decisions))
    write_jsonl(out / "filtered.jsonl", (r.to_dict() for r in kept))
