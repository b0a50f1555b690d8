"""Acceptance criteria, one test per criterion, each reporting a PASS/FAIL line."""
import contextlib
import dataclasses
import itertools
import json
import math
import random
import time

import httpx
import numpy as np
import pytest
import torch
import yaml
from pathlib import Path

from faithcheck.cli import run_stage
from faithcheck.core import LabeledSample, SynthRecord, load_records, parse_tagged_response, serialize_tagged
from faithcheck.evaluation import aggregate_atomic_verdicts, decompose_claim, decontextualize_claim, macro_f1
from faithcheck.filtering import FilterConfig, FilterReport, cosine_distance_matrix, pam, run_filter_pipeline
from faithcheck.gateway import ChatClient, RemoteClientConfig, TinyLM, TinyLMConfig, score_continuation
from faithcheck.gateway.mock import LogitBandit, ScriptedLM, UniformLM
from faithcheck.gateway.remote import completion_response
from faithcheck.grpo import GrpoConfig, compute_advantages, grpo_terms, kl_estimate, rollout_group, train_grpo
from faithcheck.rewards import RewardBreakdown, RewardConfig, composite_reward, prediction_only_reward, reward_format
from faithcheck.sft import SftConfig, SftExample, sft_loss, train_sft
from faithcheck.synthetic import make_samples, write_micro_data

import conftest
from oracles import (
    FilterCase,
    compare_filter_case,
    confusion_macro_f1,
    cosine_distances,
    exhaustive_best_cost,
    improving_swap,
    medoid_cost,
)

ROOT = Path(__file__).resolve().parents[1]


@contextlib.contextmanager
def criterion(number, title):
    t0 = time.perf_counter()
    detail = {}
    try:
        yield detail
    except BaseException:
        conftest.ACCEPTANCE_LINES.append(f"FAIL C{number:>2} {title} ({time.perf_counter() - t0:.2f}s) {detail.get('info', '')}")
        raise
    line = f"PASS C{number:>2} {title} ({time.perf_counter() - t0:.2f}s) {detail.get('info', '')}"
    conftest.ACCEPTANCE_LINES.append(line)
    print(line)


def test_c01_filter_oracle_equivalence():
    with criterion(1, "filter pipeline matches brute-force oracle") as d:
        t0 = time.perf_counter()
        bad = []
        for seed in range(200):
            mismatches, _ = compare_filter_case(FilterCase(seed), run_filter_pipeline, FilterConfig)
            bad += [(seed, m) for m in mismatches]
        elapsed = time.perf_counter() - t0
        d["info"] = f"200 cases, {len(bad)} mismatches"
        assert bad == []
        assert elapsed < 10


def test_c02_report_conservation():
    with criterion(2, "filter report conservation") as d:
        for seed in range(200):
            _, report = compare_filter_case(FilterCase(seed), run_filter_pipeline, FilterConfig)
            assert report.is_consistent()
            assert report.input_count == len(FilterCase(seed).records)
        full_scale = FilterReport(input_count=35_554, removed_by_label=14_258, removed_by_explanation=4_363,
                                 removed_by_diversity=5_004, retained=11_929)
        assert full_scale.is_consistent()
        for field in ("removed_by_label", "removed_by_explanation", "removed_by_diversity", "retained"):
            off = dataclasses.replace(full_scale, **{field: getattr(full_scale, field) + 1})
            assert not off.is_consistent()
        d["info"] = "200 fuzz reports + full-scale counts"


def test_c03_kmedoids_local_optimality():
    with criterion(3, "k-medoids local and small-case global optimality") as d:
        t0 = time.perf_counter()
        exhaustive_checked = 0
        for seed in range(50):
            rng = random.Random(seed)
            n = rng.randint(1, 12)
            k = rng.randint(1, min(3, n))
            X = np.random.default_rng(seed).standard_normal((n, rng.randint(2, 6)))
            D = cosine_distances(X)
            res = pam(cosine_distance_matrix(X), k)
            assert improving_swap(D, res.medoids) is None, seed
            if n <= 8:
                exhaustive_checked += 1
                assert medoid_cost(D, res.medoids) == pytest.approx(exhaustive_best_cost(D, k), abs=1e-9), seed
        assert time.perf_counter() - t0 < 5
        d["info"] = f"50 sets, {exhaustive_checked} exhaustive"


def hint_following_novice():
    return ScriptedLM(lambda p: "<answer>Yes</answer>" if "HELPFUL" in p else "<answer>No</answer>")


def test_c04_reward_truth_table():
    with criterion(4, "reward truth table") as d:
        sample = LabeledSample("s", "The sky is blue.", "The sky is blue.", 1)
        cfg = RewardConfig(novice=hint_following_novice())
        for correct, helps, well_formed in itertools.product([0, 1], repeat=3):
            raw = serialize_tagged("t", "HELPFUL" if helps else "vague", "Yes" if correct else "No")
            if not well_formed:
                raw = raw + " trailing"
            r = composite_reward(raw, 1, sample, cfg)
            assert r == RewardBreakdown(correct, helps, well_formed)
            assert r.r_final == correct + helps + well_formed
        d["info"] = "8/8 rows"


def test_c05_perplexity_contracts():
    with criterion(5, "perplexity contracts") as d:
        for V in (2, 17, 50_000):
            assert score_continuation(UniformLM(V), "ctx", "a b c d").perplexity == pytest.approx(V, rel=1e-12)
        lm = TinyLM(TinyLMConfig(embed_dim=8, hidden_dim=16))
        rng = random.Random(0)
        alphabet = "abcxyz <>/\n."
        text = lambda lo: "".join(rng.choices(alphabet, k=rng.randint(lo, 24)))
        for _ in range(20):
            p, a, b = text(0), text(1), text(1)
            whole = score_continuation(lm, p, a + b).total_nll
            parts = score_continuation(lm, p, a).total_nll + score_continuation(lm, p + a, b).total_nll
            assert whole == pytest.approx(parts, abs=1e-6)
        for _ in range(50):
            batch = [SftExample(text(0), text(1)) for _ in range(rng.randint(1, 4))]
            scores = [score_continuation(lm, e.input_text, e.target_text) for e in batch]
            expected = sum(s.total_nll for s in scores) / sum(s.token_count for s in scores)
            with torch.no_grad():
                assert sft_loss(lm, batch).item() == pytest.approx(expected, abs=1e-6)
        d["info"] = "uniform PPL, factorization, 50 loss batches"


def test_c06_grpo_mechanics():
    with criterion(6, "grpo mechanics") as d:
        rng = random.Random(1)
        for _ in range(200):
            rewards = [rng.randint(0, 3) for _ in range(rng.randint(2, 12))]
            assert abs(math.fsum(compute_advantages(rewards))) <= 1e-6
        assert compute_advantages([2, 2, 2]) == [0.0, 0.0, 0.0]
        policy, reference = LogitBandit([0.4, -0.3]), LogitBandit([-0.2, 0.5])
        beta = 0.25
        cfg = GrpoConfig(group_size=6, kl_coefficient=beta, rollout_temperature=1.0)
        sample = LabeledSample("b", "d", "c", 1)
        groups = [rollout_group(policy, sample, cfg, RewardConfig(), lambda *a: RewardBreakdown(1, 0, 1), seed=s)
                  for s in range(3)]
        terms = grpo_terms(policy, reference, groups, cfg)
        assert terms["clip_fraction"] == 0.0
        assert terms["loss"].item() == pytest.approx(beta * terms["kl"], abs=1e-6)
        for _ in range(200):
            cur = torch.tensor([rng.uniform(-15, 0) for _ in range(5)], dtype=torch.float64)
            ref = torch.tensor([rng.uniform(-15, 0) for _ in range(5)], dtype=torch.float64)
            assert bool((kl_estimate(cur, ref) >= 0).all())
            assert torch.equal(kl_estimate(cur, cur), torch.zeros(5, dtype=torch.float64))
        d["info"] = "advantages, flat-group loss, KL sign"


def test_c07_bandit_learning():
    with criterion(7, "grpo bandit learning") as d:
        t0 = time.perf_counter()
        data = [LabeledSample(f"s{i}", "doc", "claim", 1) for i in range(8)]
        policy = LogitBandit()
        before = float(policy.probabilities()[1])
        cfg = GrpoConfig(group_size=7, minibatch_size=4, learning_rate=0.1, kl_coefficient=0.001,
                         rollout_temperature=1.0, epochs=25, max_steps=50, max_new_tokens=4, seed=0)
        policy, rows = train_grpo(policy, LogitBandit(), data, cfg, RewardConfig(), prediction_only_reward)
        after = float(policy.probabilities()[1])
        late = sum(r["mean_reward"] for r in rows[-5:]) / 5
        d["info"] = f"expected reward {before:.3f} -> {after:.3f}, last-5 sampled {late:.3f}"
        assert len(rows) == 50
        assert before <= 0.6 and rows[0]["mean_reward"] <= 0.6
        assert after >= 0.9 and late >= 0.9
        assert time.perf_counter() - t0 < 60


def sft_corpus():
    return [SynthRecord.from_raw(s, serialize_tagged(
        "Compare the claim with the document.",
        "The claim matches the document." if s.label else "The document does not support the claim.",
        s.answer_text), "fixture") for s in make_samples(64, seed=3)]


def test_c08_sft_learning():
    with criterion(8, "sft smoke learning") as d:
        t0 = time.perf_counter()
        cfg = SftConfig(learning_rate=3e-3, batch_size=8, epochs=3, seed=0)
        runs = []
        for _ in range(2):
            model = TinyLM()
            assert sum(p.numel() for p in model.parameters()) <= 1_000_000
            runs.append(train_sft(model, sft_corpus(), cfg)[1])
        first = runs[0]
        drop = 1 - first["final_nll"] / first["initial_nll"]
        d["info"] = f"NLL {first['initial_nll']:.3f} -> {first['final_nll']:.3f} ({100 * drop:.1f}% drop)"
        assert drop >= 0.30
        assert [s["loss"] for s in runs[0]["steps"]] == [s["loss"] for s in runs[1]["steps"]]
        assert time.perf_counter() - t0 < 300


def test_c09_macro_f1():
    with criterion(9, "macro-F1 oracle") as d:
        assert round(macro_f1([1, 0, 0, 0], [1, 1, 0, 0]), 2) == 73.33
        rng = random.Random(9)
        for _ in range(100):
            n = rng.randint(1, 50)
            golds = [rng.randint(0, 1) for _ in range(n)]
            preds = [rng.choice([0, 1, None]) for _ in range(n)]
            assert abs(macro_f1(preds, golds) - confusion_macro_f1(preds, golds)) <= 1e-9
        d["info"] = "fixture + 100 random sets"


MALFORMED = {
    "missing tag": "<think>t</think><answer>Yes</answer>",
    "missing close": "<think>t</think><reason>r</reason><answer>Yes",
    "reorder": "<reason>r</reason><think>t</think><answer>Yes</answer>",
    "duplicate": "<think>t</think><think>t</think><reason>r</reason><answer>Yes</answer>",
    "bad answer word": "<think>t</think><reason>r</reason><answer>Probably</answer>",
    "trailing text": "<think>t</think><reason>r</reason><answer>No</answer> extra",
    "empty": "",
}


def test_c10_parsing_and_format():
    with criterion(10, "tagged parsing and format reward") as d:
        rng = random.Random(10)
        chars = "abc XYZ.,\n\t!?é中0123"
        for _ in range(500):
            think = "".join(rng.choices(chars, k=rng.randint(0, 30)))
            reason = "".join(rng.choices(chars, k=rng.randint(0, 30)))
            answer = rng.choice(["Yes", "No", "yes", " NO. "])
            raw = serialize_tagged(think, reason, answer)
            parsed = parse_tagged_response(raw)
            assert parsed.well_formed and (parsed.think, parsed.reason, parsed.answer_text) == (think, reason, answer)
            assert reward_format(raw) == 1
        for name, raw in MALFORMED.items():
            parsed = parse_tagged_response(raw)
            assert reward_format(raw) == 0, name
            if name == "bad answer word":
                assert parsed.answer_label is None
        d["info"] = f"500 round trips, {len(MALFORMED)} malformation classes"


def micro_config(tmp_path):
    data = write_micro_data(tmp_path / "data", n_samples=50, task_sizes=(12, 12), seed=0)
    cfg = yaml.safe_load((ROOT / "configs" / "micro.yaml").read_text())
    cfg["paths"] = {"run_dir": str(tmp_path / "run"), "samples": str(data["samples"]),
                    "tasks_dir": str(data["tasks_dir"]), "claims": str(data["claims"])}
    path = tmp_path / "micro.yaml"
    path.write_text(yaml.safe_dump(cfg))
    return path


def test_c11_end_to_end_micro(tmp_path):
    with criterion(11, "end-to-end micro pipeline") as d:
        t0 = time.perf_counter()
        config = micro_config(tmp_path)
        run = tmp_path / "run"
        for stage in ("synthesize", "filter", "sft", "rl", "eval", "judge", "decompose"):
            assert run_stage(stage, config) == 0, stage
            manifest = json.loads((run / f"manifest_{stage}.json").read_text())
            assert manifest["status"] == "ok" and manifest["config_fingerprint"]
            for path, digest in manifest["inputs"].items():
                assert len(digest) == 64, path
        synth = load_records(run / "synthesize" / "synth.jsonl")
        assert len(synth) == 50
        report = json.loads((run / "filter" / "filter_report.json").read_text())
        assert report["input_count"] == 50
        assert sum(v for k, v in report.items() if k != "input_count") == 50
        assert (run / "sft" / "metadata.json").exists() and (run / "rl" / "metadata.json").exists()
        rl_rows = [json.loads(l) for l in (run / "rl" / "metrics.jsonl").read_text().splitlines()]
        assert len(rl_rows) == 10
        result = json.loads((run / "eval" / "eval_results.json").read_text())
        assert set(result["per_task"]) == {"task0", "task1"}
        assert all(0 <= v <= 100 for v in result["per_task"].values())
        assert result["mean"] == pytest.approx(sum(result["per_task"].values()) / 2, abs=1e-9)
        elapsed = time.perf_counter() - t0
        d["info"] = f"retained {report['retained']}/50, mean macro-F1 {result['mean']:.1f}, {elapsed:.0f}s"
        assert elapsed < 600


def replying(content):
    cfg = RemoteClientConfig(base_url="mock://fixture", api_key_env="UNUSED_KEY", model_name="m")
    return ChatClient(cfg, transport=httpx.MockTransport(lambda r: completion_response(content)))


def test_c12_aggregation_and_figure_examples():
    with criterion(12, "aggregation rule and claim preprocessing examples") as d:
        for n in range(1, 7):
            for v in itertools.product([0, 1], repeat=n):
                assert aggregate_atomic_verdicts(list(v)) == int(all(v))
        facts = ["Lord Steven Regal won the World Television Championship.",
                 "The Nasty Boys won the World Tag Team Championship."]
        sentence = ("Other title changes included Lord Steven Regal and The Nasty Boys winning the World "
                    "Television Championship and the World Tag Team Championship respectively.")
        assert decompose_claim(sentence, replying(f"- {facts[0]}\n\n- {facts[1]}")) == facts
        rewrite = "Poetry can provide an easy way for children to remember a lesson or value."
        claim = "It can also provide an easy way for children to remember a lesson or value."
        got = decontextualize_claim(claim, "ctx", replying(json.dumps({"label": "no", "decontext": rewrite})))
        assert got == (False, rewrite)
        assert decontextualize_claim("c", "ctx", replying('{"label": "yes", "decontext": "NA"}')) == (True, None)
        d["info"] = "AND-fold to length 6, 3 figure examples"
