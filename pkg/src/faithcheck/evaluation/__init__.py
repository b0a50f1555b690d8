from .claims import MAX_FACTS, JudgeParseFailure, decompose_claim, decontextualize_claim, parse_fact_lines
from .harness import (
    TaskDataset,
    TaskPredictions,
    evaluate_suite,
    judge_suite,
    judgeable,
    load_tasks,
    predict,
    run_predictions,
    score_predictions,
    write_eval_outputs,
)
from .judge import DIMENSIONS, JudgeScores, RangeViolation, explainability_summary, judge_explanation
from .metrics import EmptyInput, EvalResult, LengthMismatch, aggregate_atomic_verdicts, macro_f1
