"""Pipeline configuration: one YAML file, dotted-key overrides, and validation diagnostics.

Sections mirror the stages. Constructing a section does not validate it;
`validate` collects every problem as "<section>.<key>: <constraint>" so a bad
file reports all of its issues at once.
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any, Optional

import yaml

from .gateway.registry import EMBEDDER_KINDS, MODEL_KINDS
from .grpo import grpo_config_problems
from .rewards import EXP_REWARD_MODES
from .sft import sft_config_problems

STAGE_NAMES = ("synthesize", "filter", "sft", "rl", "eval", "judge", "decompose", "decontextualize")


class ConfigInvalid(ValueError):
    def __init__(self, diagnostics: list[str]):
        super().__init__("; ".join(diagnostics))
        self.diagnostics = diagnostics


@dataclass
class ClientSection:
    base_url: str = "https://api.deepseek.com/v1"
    api_key_env: str = "FAITHCHECK_API_KEY"
    model_name: str = "deepseek-reasoner"
    max_retries: int = 3
    backoff_base: float = 1.0
    request_timeout: float = 120.0
    max_concurrency: int = 8


@dataclass
class PathsSection:
    run_dir: str = "runs/default"
    samples: str = ""
    synth: str = ""
    filtered: str = ""
    sft_checkpoint: str = ""
    rl_checkpoint: str = ""
    tasks_dir: str = ""
    predictions: str = ""
    claims: str = ""

    def resolve(self, name: str) -> Path:
        """Explicit path if set, else the stage default under `run_dir`."""
        value = getattr(self, name)
        if value:
            return Path(value)
        defaults = {
            "synth": "synthesize/synth.jsonl",
            "filtered": "filter/filtered.jsonl",
            "sft_checkpoint": "sft",
            "rl_checkpoint": "rl",
            "predictions": "eval/predictions.jsonl",
        }
        if name not in defaults:
            raise KeyError(f"paths.{name} has no default and is not set")
        return Path(self.run_dir) / defaults[name]


@dataclass
class SynthesisSection:
    client: ClientSection = field(default_factory=ClientSection)
    temperature: float = 1.0
    max_new_tokens: int = 4096
    max_attempts_per_sample: int = 3


@dataclass
class FilteringSection:
    k: int = 10
    seed: int = 0
    scorer: str = "tiny:0"
    embedder: str = "hash:64"
    stages: list = field(default_factory=lambda: ["label", "explanation", "diversity"])


@dataclass
class SftSection:
    base_model: str = "tiny:0"
    learning_rate: float = 1e-5
    weight_decay: float = 0.1
    batch_size: int = 16
    epochs: int = 3
    target_mode: str = "cot_exp_answer"
    seed: int = 0
    max_sequence_length: int = 8192


@dataclass
class GrpoSection:
    # empty means the sft stage's checkpoint
    init_model: str = ""
    group_size: int = 7
    clip_epsilon: float = 0.2
    kl_coefficient: float = 0.001
    learning_rate: float = 1e-6
    rollout_temperature: float = 0.6
    minibatch_size: int = 16
    epochs: int = 2
    seed: int = 0
    max_new_tokens: int = 1024
    updates_per_batch: int = 1
    max_steps: Optional[int] = None
    gamma_decay: float = 0.2


@dataclass
class RewardsSection:
    novice: str = "tiny:0"
    novice_temperature: float = 0.6
    exp_reward_mode: str = "correctness"
    novice_max_new_tokens: int = 64
    seed: int = 0


@dataclass
class EvaluationSection:
    # empty means the rl stage's checkpoint; "oracle" answers every task correctly
    model: str = ""
    runs: int = 2
    temperature: float = 0.0
    seed: int = 0
    max_new_tokens: int = 1024
    judge_threshold: int = 4
    judge_client: ClientSection = field(default_factory=lambda: ClientSection(model_name="gpt-4.1", base_url="https://api.openai.com/v1"))
    claims_client: ClientSection = field(default_factory=lambda: ClientSection(model_name="gpt-4.1", base_url="https://api.openai.com/v1"))


@dataclass
class PipelineConfig:
    paths: PathsSection = field(default_factory=PathsSection)
    synthesis: SynthesisSection = field(default_factory=SynthesisSection)
    filtering: FilteringSection = field(default_factory=FilteringSection)
    sft: SftSection = field(default_factory=SftSection)
    grpo: GrpoSection = field(default_factory=GrpoSection)
    rewards: RewardsSection = field(default_factory=RewardsSection)
    evaluation: EvaluationSection = field(default_factory=EvaluationSection)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def fingerprint(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()


def _build(cls, data: Any, prefix: str, problems: list[str]):
    if data is None:
        data = {}
    if not isinstance(data, dict):
        problems.append(f"{prefix or 'config'}: expected a mapping, got {type(data).__name__}")
        return cls()
    known = {f.name: f for f in fields(cls)}
    kwargs = {}
    for key, value in data.items():
        where = f"{prefix}.{key}" if prefix else key
        if key not in known:
            problems.append(f"{where}: unknown key")
            continue
        default = getattr(cls(), key)
        if dataclasses.is_dataclass(default):
            kwargs[key] = _build(type(default), value, where, problems)
        else:
            kwargs[key] = _coerce(value, default, where, problems)
    return cls(**kwargs)


def _coerce(value, default, where, problems):
    if value is None or default is None:
        return value
    if isinstance(default, bool):
        if isinstance(value, bool):
            return value
    elif isinstance(default, int):
        if isinstance(value, int) and not isinstance(value, bool):
            return value
    elif isinstance(default, float):
        if isinstance(value, (int, float)) and not isinstance(value, bool):
            return float(value)
        if isinstance(value, str):
            # PyYAML reads "1e-5" as a string
            try:
                return float(value)
            except ValueError:
                pass
    elif isinstance(default, str):
        if isinstance(value, str):
            return value
    elif isinstance(default, list):
        if isinstance(value, list):
            return value
    problems.append(f"{where}: expected {type(default).__name__}, got {value!r}")
    return default


def _set_dotted(tree: dict, dotted: str, raw: str) -> None:
    keys = dotted.split(".")
    node = tree
    for k in keys[:-1]:
        node = node.setdefault(k, {})
        if not isinstance(node, dict):
            raise ConfigInvalid([f"{dotted}: cannot override inside a scalar"])
    node[keys[-1]] = yaml.safe_load(raw)


def parse_config(data: dict, overrides: Optional[list[str]] = None) -> tuple[PipelineConfig, list[str]]:
    data = json.loads(json.dumps(data or {}))
    for item in overrides or []:
        key, sep, raw = item.partition("=")
        if not sep or not key:
            raise ConfigInvalid([f"override {item!r}: expected key=value"])
        _set_dotted(data, key.strip(), raw)
    problems: list[str] = []
    cfg = _build(PipelineConfig, data, "", problems)
    return cfg, problems


def load_config(path: str | Path, overrides: Optional[list[str]] = None) -> tuple[PipelineConfig, list[str]]:
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"config file not found: {p}")
    data = yaml.safe_load(p.read_text()) or {}
    cfg, problems = parse_config(data, overrides)
    return cfg, problems + validate(cfg)


def _model_spec_problem(spec: str, key: str, allow_empty: bool = False, extra: tuple = ()) -> list[str]:
    if not spec:
        return [] if allow_empty else [f"{key}: must name a model"]
    kind = spec.partition(":")[0]
    if kind not in MODEL_KINDS + extra:
        return [f"{key}: unknown model kind {kind!r}; expected one of {list(MODEL_KINDS + extra)}"]
    if kind == "checkpoint" and not Path(spec.partition(":")[2]).is_dir():
        return [f"{key}: checkpoint directory {spec.partition(':')[2]!r} does not exist"]
    return []


def _client_problems(c: ClientSection, key: str) -> list[str]:
    out = []
    if not c.base_url:
        out.append(f"{key}.base_url: must be set")
    if c.max_retries < 0:
        out.append(f"{key}.max_retries: must be >= 0")
    if c.max_concurrency < 1:
        out.append(f"{key}.max_concurrency: must be >= 1")
    if not c.request_timeout > 0:
        out.append(f"{key}.request_timeout: must be > 0")
    if c.backoff_base < 0:
        out.append(f"{key}.backoff_base: must be >= 0")
    return out


def validate(cfg: PipelineConfig, stage: Optional[str] = None) -> list[str]:
    """Every constraint violation as "<key>: <constraint>". With `stage`, also check that stage's inputs exist."""
    out: list[str] = []
    s = cfg.synthesis
    out += _client_problems(s.client, "synthesis.client")
    if s.temperature < 0:
        out.append("synthesis.temperature: must be >= 0")
    if s.max_new_tokens < 1:
        out.append("synthesis.max_new_tokens: must be >= 1")
    if s.max_attempts_per_sample < 1:
        out.append("synthesis.max_attempts_per_sample: must be >= 1")

    f = cfg.filtering
    if f.k < 1:
        out.append("filtering.k: must be >= 1")
    out += _model_spec_problem(f.scorer, "filtering.scorer")
    if f.embedder.partition(":")[0] not in EMBEDDER_KINDS:
        out.append(f"filtering.embedder: unknown embedder kind; expected one of {list(EMBEDDER_KINDS)}")
    bad = [x for x in f.stages if x not in ("label", "explanation", "diversity")]
    if bad:
        out.append(f"filtering.stages: unknown stages {bad}")

    out += [f"sft.{p}" for p in _prefixed(sft_config_problems(cfg.sft))]
    if cfg.sft.weight_decay < 0:
        out.append("sft.weight_decay: must be >= 0")
    out += _model_spec_problem(cfg.sft.base_model, "sft.base_model")

    out += [f"grpo.{p}" for p in _prefixed(grpo_config_problems(cfg.grpo))]
    if cfg.grpo.max_steps is not None and cfg.grpo.max_steps < 1:
        out.append("grpo.max_steps: must be >= 1 when set")
    out += _model_spec_problem(cfg.grpo.init_model, "grpo.init_model", allow_empty=True)

    r = cfg.rewards
    out += _model_spec_problem(r.novice, "rewards.novice")
    if r.novice_temperature < 0:
        out.append("rewards.novice_temperature: must be >= 0")
    if r.exp_reward_mode not in EXP_REWARD_MODES:
        out.append(f"rewards.exp_reward_mode: must be one of {list(EXP_REWARD_MODES)}")
    if r.novice_max_new_tokens < 1:
        out.append("rewards.novice_max_new_tokens: must be >= 1")

    e = cfg.evaluation
    out += _model_spec_problem(e.model, "evaluation.model", allow_empty=True, extra=("oracle",))
    if e.runs < 1:
        out.append("evaluation.runs: must be >= 1")
    if e.temperature < 0:
        out.append("evaluation.temperature: must be >= 0")
    if not 1 <= e.judge_threshold <= 5:
        out.append("evaluation.judge_threshold: must be in [1, 5]")
    out += _client_problems(e.judge_client, "evaluation.judge_client")
    out += _client_problems(e.claims_client, "evaluation.claims_client")

    if stage is not None:
        out += stage_input_problems(cfg, stage)
    return out


def _prefixed(problems: list[str]) -> list[str]:
    # module validators say "learning_rate must be > 0"; turn that into "learning_rate: must be > 0"
    return [p.replace(" must", ": must", 1) for p in problems]


_STAGE_INPUTS = {
    "synthesize": [("samples", True)],
    "filter": [("synth", False)],
    "sft": [("filtered", False)],
    "rl": [("samples", True)],
    "eval": [("tasks_dir", True)],
    "judge": [("tasks_dir", True), ("predictions", False)],
    "decompose": [("claims", True)],
    "decontextualize": [("claims", True)],
}


def stage_input_problems(cfg: PipelineConfig, stage: str) -> list[str]:
    if stage not in STAGE_NAMES:
        return [f"stage: unknown stage {stage!r}"]
    out = []
    for name, required in _STAGE_INPUTS[stage]:
        value = getattr(cfg.paths, name)
        if required and not value:
            out.append(f"paths.{name}: required by the {stage} stage")
            continue
        p = cfg.paths.resolve(name)
        if not p.exists():
            out.append(f"paths.{name}: {p} does not exist")
    upstream = {"rl": (cfg.grpo.init_model, "sft_checkpoint"), "eval": (cfg.evaluation.model, "rl_checkpoint")}
    if stage in upstream:
        spec, name = upstream[stage]
        if not spec and not (cfg.paths.resolve(name) / "metadata.json").exists():
            out.append(f"paths.{name}: no checkpoint at {cfg.paths.resolve(name)}; run the upstream stage or set a model")
    return out


def validate_config(path: str | Path, stage: Optional[str] = None, overrides: Optional[list[str]] = None) -> list[str]:
    """Empty iff the file is runnable (for `stage`, if given)."""
    cfg, problems = load_config(path, overrides)
    if stage is not None:
        problems += stage_input_problems(cfg, stage)
    return problems


def dump_config(cfg: PipelineConfig) -> str:
    return yaml.safe_dump(cfg.to_dict(), sort_keys=False)
