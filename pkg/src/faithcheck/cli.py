"""Command-line entry point. Each subcommand runs exactly one stage.

    faithcheck <stage> --config cfg.yaml [--set key=value ...]
    faithcheck validate --config cfg.yaml [--for-stage eval]

Artifacts go under `paths.run_dir`; every stage writes `manifest_<stage>.json`
at the run-dir root, and on failure `error_<stage>.json` next to it.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import platform
import sys
import time
import traceback
from dataclasses import asdict
from pathlib import Path
from typing import Callable, Optional

import torch

from . import __version__
from .config import STAGE_NAMES, ConfigInvalid, PipelineConfig, load_config, stage_input_problems, validate_config
from .core import load_records, load_samples, read_jsonl, write_jsonl
from .filtering import STAGES, FilterConfig, run_filter_pipeline, write_filter_outputs
from .gateway.registry import load_embedder, load_model
from .gateway.remote import ChatClient, RemoteClientConfig

log = logging.getLogger("faithcheck")

FILTER_PREFIXES = {"all": STAGES, "label": STAGES[:1], "explanation": STAGES[:2], "diversity": STAGES}


class StageFailure(RuntimeError):
    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"{stage} failed: {type(cause).__name__}: {cause}")
        self.stage = stage
        self.cause = cause


def sha256_path(path: Path) -> str:
    h = hashlib.sha256()
    files = sorted(p for p in path.rglob("*") if p.is_file()) if path.is_dir() else [path]
    for f in files:
        if path.is_dir():
            h.update(str(f.relative_to(path)).encode())
        with open(f, "rb") as fh:
            for chunk in iter(lambda: fh.read(1 << 20), b""):
                h.update(chunk)
    return h.hexdigest()


def _client(section) -> ChatClient:
    return ChatClient(RemoteClientConfig(**asdict(section)))


def _model(spec: str, default_dir: Path):
    return load_model(spec or f"checkpoint:{default_dir}")


# -- stages -----------------------------------------------------------------
# Each returns (inputs, outputs, summary); inputs/outputs are paths.

def stage_synthesize(cfg: PipelineConfig, run_dir: Path, args) -> tuple[list, list, dict]:
    from .synthesis import SynthesisConfig, synthesize_corpus

    s = cfg.synthesis
    samples_path = Path(cfg.paths.samples)
    out_path = cfg.paths.resolve("synth")
    scfg = SynthesisConfig(RemoteClientConfig(**asdict(s.client)), s.temperature, s.max_new_tokens, s.max_attempts_per_sample)
    records, report = synthesize_corpus(load_samples(samples_path), scfg, out_path=out_path)
    report_path = run_dir / "synthesize" / "synthesis_report.json"
    report_path.parent.mkdir(parents=True, exist_ok=True)
    report_path.write_text(json.dumps(report.to_dict(), indent=2))
    if report.requested and not report.succeeded:
        raise RuntimeError(f"no sample was synthesized ({report.parse_failed} parse, {report.transport_failed} transport failures)")
    return [samples_path], [out_path, report_path], report.to_dict()


def _filter_stages(cfg: PipelineConfig, args) -> tuple[str, ...]:
    if getattr(args, "only", None):
        return (args.only,)
    prefix = getattr(args, "stage", None)
    if prefix:
        return FILTER_PREFIXES[prefix]
    return tuple(cfg.filtering.stages)


def stage_filter(cfg: PipelineConfig, run_dir: Path, args) -> tuple[list, list, dict]:
    f = cfg.filtering
    synth = cfg.paths.resolve("synth")
    fcfg = FilterConfig(k=f.k, seed=f.seed, embedder=load_embedder(f.embedder), scorer=load_model(f.scorer),
                        stages=_filter_stages(cfg, args))
    kept, report, decisions = run_filter_pipeline(load_records(synth), fcfg)
    if not report.is_consistent():
        raise RuntimeError(f"filter report does not partition the input: {report.to_dict()}")
    out_dir = cfg.paths.resolve("filtered").parent
    write_filter_outputs(out_dir, kept, report, decisions)
    if cfg.paths.resolve("filtered").name != "filtered.jsonl":
        write_jsonl(cfg.paths.resolve("filtered"), (r.to_dict() for r in kept))
    summary = {**report.to_dict(), "stages": list(fcfg.stages)}
    return [synth], [out_dir / "filter_report.json", cfg.paths.resolve("filtered")], summary


def stage_sft(cfg: PipelineConfig, run_dir: Path, args) -> tuple[list, list, dict]:
    from .sft import SftConfig, train_sft

    s = asdict(cfg.sft)
    base = s.pop("base_model")
    filtered = cfg.paths.resolve("filtered")
    out_dir = cfg.paths.resolve("sft_checkpoint")
    torch.manual_seed(cfg.sft.seed)
    model = load_model(base)
    _, metrics = train_sft(model, load_records(filtered), SftConfig(**s), out_dir=out_dir)
    summary = {k: v for k, v in metrics.items() if k != "steps"}
    summary["steps"] = len(metrics["steps"])
    if not metrics["final_nll"] == metrics["final_nll"]:
        raise RuntimeError("training diverged: final NLL is NaN")
    return [filtered], [out_dir], summary


def stage_rl(cfg: PipelineConfig, run_dir: Path, args) -> tuple[list, list, dict]:
    from .grpo import GrpoConfig, train_grpo
    from .rewards import RewardConfig

    g = asdict(cfg.grpo)
    init = g.pop("init_model") or f"checkpoint:{cfg.paths.resolve('sft_checkpoint')}"
    torch.manual_seed(cfg.grpo.seed)
    policy = load_model(init)
    reference = load_model(init)
    r = cfg.rewards
    rcfg = RewardConfig(novice=load_model(r.novice), novice_temperature=r.novice_temperature,
                        exp_reward_mode=r.exp_reward_mode, novice_max_new_tokens=r.novice_max_new_tokens, seed=r.seed)
    samples_path = Path(cfg.paths.samples)
    out_dir = cfg.paths.resolve("rl_checkpoint")
    _, rows = train_grpo(policy, reference, load_samples(samples_path), GrpoConfig(**g), rcfg, out_dir=out_dir)
    summary = {"steps": len(rows), "first": rows[0] if rows else None, "last": rows[-1] if rows else None}
    inputs = [samples_path]
    if init.startswith("checkpoint:"):
        inputs.append(Path(init.partition(":")[2]))
    return inputs, [out_dir], summary


def _eval_model(cfg: PipelineConfig, tasks):
    from .gateway.mock import OracleLM

    spec = cfg.evaluation.model
    if spec == "oracle":
        return OracleLM([s for t in tasks for s in t.samples])
    return _model(spec, cfg.paths.resolve("rl_checkpoint"))


def stage_eval(cfg: PipelineConfig, run_dir: Path, args) -> tuple[list, list, dict]:
    from .evaluation import load_tasks, run_predictions, score_predictions, write_eval_outputs

    e = cfg.evaluation
    tasks_dir = Path(cfg.paths.tasks_dir)
    tasks = load_tasks(tasks_dir)
    model = _eval_model(cfg, tasks)
    preds = run_predictions(model, tasks, e.runs, e.temperature, e.seed, e.max_new_tokens)
    result = score_predictions(tasks, preds, e.runs)
    pred_path = cfg.paths.resolve("predictions")
    out_dir = pred_path.parent
    write_eval_outputs(out_dir, result, cfg.fingerprint())
    by_name = {t.name: t for t in tasks}
    rows = []
    for p in preds:
        for s, label, parsed in zip(by_name[p.task].samples, p.labels, p.responses):
            rows.append({"task": p.task, "run": p.run, "id": s.id, "gold": s.label, "predicted": label,
                         "well_formed": parsed.well_formed, "cot": parsed.think, "explanation": parsed.reason})
    write_jsonl(pred_path, rows)
    print(result.table())
    return [tasks_dir], [out_dir / "eval_results.json", out_dir / "eval_table.txt", pred_path], result.to_dict()


def stage_judge(cfg: PipelineConfig, run_dir: Path, args) -> tuple[list, list, dict]:
    from .core import TaggedResponse
    from .evaluation import judge_suite, load_tasks

    tasks_dir = Path(cfg.paths.tasks_dir)
    samples = {(t.name, s.id): s for t in load_tasks(tasks_dir) for s in t.samples}
    pred_path = cfg.paths.resolve("predictions")
    pairs = []
    for row in read_jsonl(pred_path):
        # one explanation per sample: the first run's
        if row["run"] != 0 or row["predicted"] != row["gold"] or not row["explanation"].strip():
            continue
        pairs.append((samples[(row["task"], row["id"])], TaggedResponse(reason=row["explanation"])))
    out_dir = run_dir / "judge"
    out_dir.mkdir(parents=True, exist_ok=True)
    if pairs:
        scores, summary = judge_suite(pairs, _client(cfg.evaluation.judge_client), cfg.evaluation.judge_threshold)
    else:
        log.warning("no correctly predicted sample has an explanation; nothing to judge")
        scores, summary = [], {}
    write_jsonl(out_dir / "judge_scores.jsonl", ({"id": s.id, **sc.to_dict()} for (s, _), sc in zip(pairs, scores)))
    summary = {**summary, "judged": len(pairs), "threshold": cfg.evaluation.judge_threshold}
    (out_dir / "explainability.json").write_text(json.dumps(summary, indent=2))
    return [tasks_dir, pred_path], [out_dir / "judge_scores.jsonl", out_dir / "explainability.json"], summary


def stage_decompose(cfg: PipelineConfig, run_dir: Path, args) -> tuple[list, list, dict]:
    from .evaluation import decompose_claim

    claims = Path(cfg.paths.claims)
    client = _client(cfg.evaluation.claims_client)
    rows = [{"id": d.get("id"), "claim": d["claim"], "facts": decompose_claim(d["claim"], client)} for d in read_jsonl(claims)]
    out = run_dir / "decompose" / "facts.jsonl"
    write_jsonl(out, rows)
    return [claims], [out], {"claims": len(rows), "facts": sum(len(r["facts"]) for r in rows)}


def stage_decontextualize(cfg: PipelineConfig, run_dir: Path, args) -> tuple[list, list, dict]:
    from .evaluation import decontextualize_claim

    claims = Path(cfg.paths.claims)
    client = _client(cfg.evaluation.claims_client)
    rows = []
    for d in read_jsonl(claims):
        standalone, rewritten = decontextualize_claim(d["claim"], d.get("context", ""), client)
        rows.append({"id": d.get("id"), "claim": d["claim"], "standalone": standalone,
                     "decontextualized": rewritten if rewritten is not None else d["claim"]})
    out = run_dir / "decontextualize" / "claims.jsonl"
    write_jsonl(out, rows)
    return [claims], [out], {"claims": len(rows), "rewritten": sum(not r["standalone"] for r in rows)}


STAGES_BY_NAME: dict[str, Callable] = {
    "synthesize": stage_synthesize,
    "filter": stage_filter,
    "sft": stage_sft,
    "rl": stage_rl,
    "eval": stage_eval,
    "judge": stage_judge,
    "decompose": stage_decompose,
    "decontextualize": stage_decontextualize,
}


# -- orchestration ------------------------------------------------------------

def _seeds(cfg: PipelineConfig) -> dict:
    return {"filtering": cfg.filtering.seed, "sft": cfg.sft.seed, "grpo": cfg.grpo.seed,
            "rewards": cfg.rewards.seed, "evaluation": cfg.evaluation.seed}


def _error_record(stage: str, exc: BaseException) -> dict:
    rec = {"stage": stage, "error": type(exc).__name__, "message": str(exc)}
    if isinstance(exc, ConfigInvalid):
        rec["diagnostics"] = exc.diagnostics
    if isinstance(exc, StageFailure):
        rec["cause"] = type(exc.cause).__name__
        rec["traceback"] = "".join(traceback.format_exception(type(exc.cause), exc.cause, exc.cause.__traceback__))
    return rec


def run_stage(stage: str, config_path: str | Path, overrides: Optional[list[str]] = None,
              args: Optional[argparse.Namespace] = None) -> int:
    """Run one stage; returns the process exit status (0 ok, 2 invalid config, 1 stage failure)."""
    args = args or argparse.Namespace()
    run_dir: Optional[Path] = None
    try:
        cfg, problems = load_config(config_path, overrides)
        run_dir = Path(cfg.paths.run_dir)
        problems += stage_input_problems(cfg, stage)
        if problems:
            raise ConfigInvalid(problems)
        run_dir.mkdir(parents=True, exist_ok=True)
        started = time.time()
        t0 = time.perf_counter()
        try:
            inputs, outputs, summary = STAGES_BY_NAME[stage](cfg, run_dir, args)
        except Exception as e:
            raise StageFailure(stage, e) from e
        manifest = {
            "stage": stage,
            "status": "ok",
            "version": __version__,
            "started_at": started,
            "wall_time_s": time.perf_counter() - t0,
            "argv": sys.argv,
            "overrides": list(overrides or []),
            "config_path": str(config_path),
            "config": cfg.to_dict(),
            "config_fingerprint": cfg.fingerprint(),
            "seeds": _seeds(cfg),
            "inputs": {str(p): sha256_path(Path(p)) for p in inputs},
            "outputs": [str(p) for p in outputs],
            "summary": summary,
            "python": platform.python_version(),
            "torch": torch.__version__,
        }
        (run_dir / f"manifest_{stage}.json").write_text(json.dumps(manifest, indent=2, default=str))
        log.info("%s finished in %.1fs", stage, manifest["wall_time_s"])
        return 0
    except (ConfigInvalid, StageFailure, FileNotFoundError) as e:
        rec = _error_record(stage, e)
        print(json.dumps(rec), file=sys.stderr)
        if run_dir is not None:
            run_dir.mkdir(parents=True, exist_ok=True)
            (run_dir / f"error_{stage}.json").write_text(json.dumps(rec, indent=2))
        return 1 if isinstance(e, StageFailure) else 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="faithcheck", description="Train and evaluate an explainable claim-consistency checker.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in STAGE_NAMES:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True)
        p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                       help="dotted-key override, e.g. grpo.group_size=7")
        if name == "filter":
            g = p.add_mutually_exclusive_group()
            g.add_argument("--stage", choices=sorted(FILTER_PREFIXES),
                           help="run the filters up to and including this one")
            g.add_argument("--only", choices=STAGES, help="run a single filter")
    p = sub.add_parser("validate")
    p.add_argument("--config", required=True)
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE")
    p.add_argument("--for-stage", choices=STAGE_NAMES)
    return parser


def main(argv: Optional[list[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(levelname)s %(message)s")
    if args.command == "validate":
        try:
            problems = validate_config(args.config, args.for_stage, args.overrides)
        except FileNotFoundError as e:
            print(json.dumps({"error": "FileNotFoundError", "message": str(e)}), file=sys.stderr)
            return 2
        for p in problems:
            print(p)
        return 1 if problems else 0
    return run_stage(args.command, args.config, args.overrides, args)


if __name__ == "__main__":
    sys.exit(main())
