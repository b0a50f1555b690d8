"""Run every stage of configs/micro.yaml in order: data, synthesize, filter, sft, rl, eval, judge, decompose."""
import argparse
import json
import logging
import sys
from pathlib import Path

from faithcheck.cli import run_stage
from faithcheck.config import load_config
from faithcheck.synthetic import write_micro_data

STAGES = ["synthesize", "filter", "sft", "rl", "eval", "judge", "decompose"]

if __name__ == "__main__":
    ap = argparse.ArgumentParser()
    ap.add_argument("--config", default="configs/micro.yaml")
    ap.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    a = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")

    cfg, problems = load_config(a.config, a.set)
    if problems:
        sys.exit("\n".join(problems))
    write_micro_data(Path(cfg.paths.samples).parent)
    for stage in STAGES:
        rc = run_stage(stage, a.config, a.set)
        if rc:
            sys.exit(f"{stage} failed with exit status {rc}")
    run = Path(cfg.paths.run_dir)
    print(json.dumps(json.loads((run / "filter" / "filter_report.json").read_text()), indent=2))
    print((run / "eval" / "eval_table.txt").read_text())
