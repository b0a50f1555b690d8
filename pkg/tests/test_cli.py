import json
import subprocess
import sys
from pathlib import Path

import yaml

from faithcheck.cli import main, run_stage
from faithcheck.config import load_config, parse_config, validate_config
from faithcheck.core import write_jsonl
from faithcheck.synthetic import write_micro_data

from conftest import make_record

ROOT = Path(__file__).resolve().parents[1]


def write_config(tmp_path, **sections):
    data = {"paths": {"run_dir": str(tmp_path / "run")}}
    for k, v in sections.items():
        data.setdefault(k, {}).update(v)
    path = tmp_path / "config.yaml"
    path.write_text(yaml.safe_dump(data))
    return path


def test_shipped_configs_validate():
    for name in ("default.yaml", "micro.yaml"):
        assert validate_config(ROOT / "configs" / name) == []


def test_group_size_one_diagnostic():
    problems = validate_config(ROOT / "configs" / "default.yaml", overrides=["grpo.group_size=1"])
    assert problems == ["grpo.group_size: must be >= 2"]


def test_negative_learning_rate_named():
    problems = validate_config(ROOT / "configs" / "default.yaml", overrides=["sft.learning_rate=-1e-5"])
    assert any(p.startswith("sft.learning_rate:") for p in problems)


def test_unknown_key_rejected():
    _, problems = parse_config({"grpo": {"group_sise": 4}})
    assert problems == ["grpo.group_sise: unknown key"]


def test_wrong_type_rejected():
    _, problems = parse_config({"sft": {"epochs": "three"}})
    assert any(p.startswith("sft.epochs:") for p in problems)


def test_scientific_notation_string_accepted():
    cfg, problems = parse_config({"sft": {"learning_rate": "2e-5"}})
    assert problems == [] and cfg.sft.learning_rate == 2e-5


def test_fingerprint_tracks_content():
    a, _ = parse_config({})
    b, _ = parse_config({}, ["grpo.kl_coefficient=0.5"])
    assert a.fingerprint() == parse_config({})[0].fingerprint() != b.fingerprint()


def test_invalid_override_gives_exit_2(tmp_path, capsys):
    cfg = write_config(tmp_path)
    assert run_stage("rl", cfg, ["grpo.group_size=1"]) == 2
    err = json.loads(capsys.readouterr().err)
    assert err["error"] == "ConfigInvalid"
    assert "grpo.group_size: must be >= 2" in err["diagnostics"]
    assert (tmp_path / "run" / "error_rl.json").exists()


def test_missing_tasks_dir_diagnosed(tmp_path, capsys):
    cfg = write_config(tmp_path, paths={"tasks_dir": str(tmp_path / "absent")}, evaluation={"model": "oracle"})
    assert run_stage("eval", cfg) == 2
    assert any("tasks_dir" in d for d in json.loads(capsys.readouterr().err)["diagnostics"])


def test_filter_stage_partitions_input(tmp_path):
    synth = tmp_path / "synth.jsonl"
    recs = [make_record(i, label=i % 2, predicted=i % 2 if i % 3 else 1 - i % 2) for i in range(10)]
    write_jsonl(synth, (r.to_dict() for r in recs))
    cfg = write_config(tmp_path, paths={"synth": str(synth)}, filtering={"k": 2, "scorer": "hash-scorer"})
    assert run_stage("filter", cfg) == 0
    report = json.loads((tmp_path / "run" / "filter" / "filter_report.json").read_text())
    removed = report["removed_by_label"] + report["removed_by_explanation"] + report["removed_by_diversity"]
    assert report["input_count"] == 10 and removed + report["retained"] == 10
    manifest = json.loads((tmp_path / "run" / "manifest_filter.json").read_text())
    assert manifest["status"] == "ok" and str(synth) in manifest["inputs"]
    assert len(manifest["inputs"][str(synth)]) == 64
    assert manifest["config_fingerprint"] == load_config(cfg)[0].fingerprint()
    assert {"seeds", "wall_time_s", "outputs", "summary", "config"} <= set(manifest)


def test_filter_prefix_only_runs_label_stage(tmp_path):
    synth = tmp_path / "synth.jsonl"
    write_jsonl(synth, (make_record(i, label=1, predicted=i % 2).to_dict() for i in range(6)))
    cfg = write_config(tmp_path, paths={"synth": str(synth)}, filtering={"scorer": "hash-scorer"})
    assert main(["filter", "--config", str(cfg), "--stage", "label"]) == 0
    report = json.loads((tmp_path / "run" / "filter" / "filter_report.json").read_text())
    assert report["removed_by_label"] == 3 and report["retained"] == 3


def test_eval_with_oracle(tmp_path):
    data = write_micro_data(tmp_path / "data", n_samples=4, task_sizes=(6, 6))
    cfg = write_config(tmp_path, paths={"tasks_dir": str(data["tasks_dir"])}, evaluation={"model": "oracle"})
    assert run_stage("eval", cfg) == 0
    result = json.loads((tmp_path / "run" / "eval" / "eval_results.json").read_text())
    assert result["per_task"] == {"task0": 100.0, "task1": 100.0}
    assert result["mean"] == 100.0 and result["std"] == 0.0 and result["runs"] == 2
    rows = [json.loads(l) for l in (tmp_path / "run" / "eval" / "predictions.jsonl").read_text().splitlines()]
    assert len(rows) == 24 and all(r["predicted"] == r["gold"] for r in rows)


def test_stage_failure_exit_1(tmp_path, capsys):
    synth = tmp_path / "synth.jsonl"
    synth.write_text("{not json\n")
    cfg = write_config(tmp_path, paths={"synth": str(synth)}, filtering={"scorer": "hash-scorer"})
    assert run_stage("filter", cfg) == 1
    assert json.loads(capsys.readouterr().err)["stage"] == "filter"


def test_validate_subcommand(tmp_path):
    cfg = write_config(tmp_path)
    assert main(["validate", "--config", str(cfg)]) == 0
    assert main(["validate", "--config", str(cfg), "--set", "grpo.group_size=1"]) == 1


def test_module_entry_point():
    out = subprocess.run([sys.executable, "-m", "faithcheck", "--help"], capture_output=True, text=True)
    assert out.returncode == 0
    for stage in ("synthesize", "filter", "sft", "rl", "eval", "judge", "decompose", "decontextualize"):
        assert stage in out.stdout
