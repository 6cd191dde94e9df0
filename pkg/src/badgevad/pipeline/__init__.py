"""Training, model selection, evaluation and streaming prediction."""
from .crossval import class_weights, stratified_kfold
from .evaluation import (BETWEEN, OVERALL, WHOLE, EvalRow, EvaluationTable, MetricCheck,
                         PhaseInterval, evaluate_phases, parse_phases, read_table, verify_metrics)
from .metrics import (ConfusionMatrix, MetricsRow, UndefinedMetricError, balanced_accuracy,
                      confusion, metrics, pooled_metrics)
from .streaming import (StreamDecision, StreamPredictor, decisions_csv, predict_stream,
                        replay_frames)
from .sweep import SweepReport, SweepRow, crossval_sweep, derived_seed, grid, selection_key
from .training import History, train, train_to_convergence

__all__ = [
    "BETWEEN", "OVERALL", "WHOLE", "ConfusionMatrix", "EvalRow", "EvaluationTable", "History",
    "MetricCheck", "MetricsRow", "PhaseInterval", "StreamDecision", "StreamPredictor",
    "SweepReport", "SweepRow", "UndefinedMetricError", "balanced_accuracy", "class_weights",
    "confusion", "crossval_sweep", "decisions_csv", "derived_seed", "evaluate_phases", "grid",
    "metrics", "parse_phases", "pooled_metrics", "predict_stream", "read_table",
    "replay_frames", "selection_key", "stratified_kfold", "train", "train_to_convergence",
    "verify_metrics",
]
