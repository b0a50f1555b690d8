from .kmedoids import KMedoidsResult, cosine_distance_matrix, pam, total_cost
from .stages import (
    STAGES,
    CorpusTooSmall,
    FilterConfig,
    FilterDecision,
    FilterReport,
    ProbeSet,
    build_probe_set,
    filter_diversity,
    filter_explanation,
    filter_label,
    run_filter_pipeline,
    write_filter_outputs,
)
