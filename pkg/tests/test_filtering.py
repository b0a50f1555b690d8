import logging

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from faithcheck.filtering import (
    CorpusTooSmall,
    FilterConfig,
    FilterReport,
    ProbeSet,
    build_probe_set,
    filter_diversity,
    filter_explanation,
    filter_label,
    run_filter_pipeline,
    write_filter_outputs,
)
from faithcheck.gateway import score_continuation
from faithcheck.gateway.mock import FixedEmbedder, HashEmbedder, ScriptedScorer

from conftest import make_record
from oracles import FilterCase, compare_filter_case


def scorer_for(with_value, without_value):
    return ScriptedScorer(lambda p, c: with_value if "<reason>" in p.split("Claim:")[-1] else without_value)


def test_label_filter_keeps_agreement():
    assert filter_label(make_record(0, label=1, predicted=1)).retained
    assert not filter_label(make_record(0, label=1, predicted=0)).retained


def test_label_filter_missing_prediction():
    d = filter_label(make_record(0, label=1, predicted="maybe"))
    assert not d.retained and d.diagnostics["error"] == "MissingPrediction"


@pytest.mark.parametrize("with_v,without_v,kept", [(2.0, 3.0, True), (3.0, 3.0, False), (4.0, 3.0, False)])
def test_explanation_filter_is_strict(with_v, without_v, kept):
    d = filter_explanation(make_record(0), scorer_for(with_v, without_v))
    assert d.retained is kept
    assert d.diagnostics == pytest.approx({"ppl_with": with_v, "ppl_without": without_v}, rel=1e-12)


def probes_with(k, base=3.0):
    medoids = [make_record(100 + j) for j in range(k)]
    return ProbeSet(medoids, k, [base] * k, "fixed")


def cond_scorer(improving_probe_ids):
    # a probe prompt with the candidate as example gets ppl 1 for the listed probes, else 5
    def ppl(prompt, cont):
        head = prompt.split("Example: ")[0]
        return 1.0 if any(f"x{i}." in head for i in improving_probe_ids) else 5.0
    return ScriptedScorer(ppl)


@pytest.mark.parametrize("k,improving,kept", [
    (2, [], False), (2, [100], True), (2, [100, 101], True),
    (3, [100], False), (3, [100, 101], True),
    (4, [100], False), (4, [100, 101], True),
    (1, [], False), (1, [100], True),
])
def test_diversity_half_threshold(k, improving, kept):
    d = filter_diversity(make_record(0), probes_with(k), cond_scorer(improving))
    assert d.retained is kept
    assert d.diagnostics["improved_count"] == len(improving)


def test_diversity_ties_do_not_count():
    # the base perplexity must come through the same scoring path as the conditional one
    base = score_continuation(ScriptedScorer(lambda p, c: 5.0), "p", "Yes").perplexity
    d = filter_diversity(make_record(0), probes_with(2, base=base), cond_scorer([]))
    assert d.diagnostics["improved_count"] == 0 and not d.retained


def test_no_scoring_when_every_label_fails():
    scorer = ScriptedScorer(lambda p, c: 1.0)
    recs = [make_record(i, label=1, predicted=0) for i in range(5)]
    kept, report, _ = run_filter_pipeline(recs, FilterConfig(k=2, embedder=HashEmbedder(), scorer=scorer))
    assert kept == [] and report.removed_by_label == 5
    assert scorer.calls == 0


def test_report_checker_accepts_full_scale_counts():
    r = FilterReport(input_count=35554, removed_by_label=14258, removed_by_explanation=4363,
                     removed_by_diversity=5004, retained=11929)
    assert r.is_consistent()
    r.retained += 1
    assert not r.is_consistent()


def test_probe_set_too_small():
    with pytest.raises(CorpusTooSmall):
        build_probe_set([make_record(0)], HashEmbedder(), 2, ScriptedScorer(lambda p, c: 1.0))


def test_probe_set_uses_medoids():
    recs = [make_record(i) for i in range(6)]
    table = {}
    for i, r in enumerate(recs):
        angle = (0.0 if i < 3 else np.pi / 2) + 0.05 * (i % 3 - 1)
        table[f"Document: {r.sample.doc}\nClaim: {r.sample.claim}"] = [np.cos(angle), np.sin(angle)]
    probes = build_probe_set(recs, FixedEmbedder(table), 2, ScriptedScorer(lambda p, c: 2.0))
    # the middle point of each tight cluster is its medoid
    assert sorted(probes.medoid_indices) == [1, 4]
    assert probes.base_perplexities == [2.0, 2.0]


def test_k_shrinks_to_survivors(caplog):
    case = FilterCase(3)
    with caplog.at_level(logging.WARNING):
        _, report, decisions = run_filter_pipeline(case.records, FilterConfig(k=50, embedder=case.embedder, scorer=case.scorer))
    div = [d for d in decisions if d.stage == "diversity"]
    if div:
        assert div[0].diagnostics["k"] == len(div)


@pytest.mark.parametrize("stages", [("label",), ("label", "explanation"), ("explanation",), ("diversity",)])
def test_stage_subsets_pass_through(stages):
    case = FilterCase(11)
    kept, report, decisions = run_filter_pipeline(
        case.records, FilterConfig(k=case.k, embedder=case.embedder, scorer=case.scorer, stages=stages))
    assert {d.stage for d in decisions} <= set(stages)
    assert report.is_consistent()


@settings(max_examples=60)
@given(st.integers(0, 10_000))
def test_matches_oracle(seed):
    mismatches, report = compare_filter_case(FilterCase(seed, max_n=16, max_k=4), run_filter_pipeline, FilterConfig)
    assert mismatches == []
    assert report.is_consistent()


def test_outputs_written(tmp_path):
    case = FilterCase(5)
    kept, report, decisions = run_filter_pipeline(case.records, FilterConfig(k=case.k, embedder=case.embedder, scorer=case.scorer))
    write_filter_outputs(tmp_path, kept, report, decisions)
    assert {p.name for p in tmp_path.iterdir()} == {"filter_report.json", "filter_decisions.jsonl", "filtered.jsonl"}
