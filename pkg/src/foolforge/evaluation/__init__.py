"""Transfer metrics, baselines, representation statistics and report emission."""

from foolforge.evaluation.metrics import (
    PIXEL_SCALE,
    baseline_fgsm_targeted,
    rmsd,
    rtd,
    top1_labels,
    transfer_success_rate,
)
from foolforge.evaluation.report import (
    REPORT_HEADER,
    AttackReport,
    ReportRow,
    evaluate_attack,
    write_report_csv,
    write_series_csv,
)
from foolforge.evaluation.stats import (
    StatsSummary,
    channel_stat_vectors,
    representation_stats,
    separation_score,
)

__all__ = [
    "PIXEL_SCALE",
    "REPORT_HEADER",
    "AttackReport",
    "ReportRow",
    "StatsSummary",
    "baseline_fgsm_targeted",
    "channel_stat_vectors",
    "evaluate_attack",
    "representation_stats",
    "rmsd",
    "rtd",
    "separation_score",
    "top1_labels",
    "transfer_success_rate",
    "write_report_csv",
    "write_series_csv",
]
