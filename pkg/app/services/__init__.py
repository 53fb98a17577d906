"""Services package: training, evaluation and reporting."""

from .trainer_service import PretrainService, PretrainResult, pretrain
from .probe_service import LinearProbe, ProbeResult, knn_probe, labelled_subset, linear_probe
from .calibration_service import calibrate_spread, resolve_run_config
from .analysis_service import AnalysisService, AnalysisSummary, embedding_set, emit_report

__all__ = [
    "PretrainService",
    "PretrainResult",
    "pretrain",
    "LinearProbe",
    "ProbeResult",
    "linear_probe",
    "knn_probe",
    "labelled_subset",
    "calibrate_spread",
    "resolve_run_config",
    "AnalysisService",
    "AnalysisSummary",
    "embedding_set",
    "emit_report",
]
