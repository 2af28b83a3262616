"""prtriage: predict whether a pull request will be accepted within 30 days."""

from .core import (
    WINDOW_SECONDS,
    AuthorActivityEvent,
    Label,
    PullRequestRecord,
    age_seconds,
    is_labelable,
    label,
)
from .features import FeatureSchema, FeatureVector, build_dataset
from .forest import ForestModel, ForestParams, fit, predict_proba, tune
from .metrics import EvaluationReport, SplitPlan, auc_roc, evaluate, split

__version__ = "0.1.0"

__all__ = [
    "WINDOW_SECONDS",
    "AuthorActivityEvent",
    "EvaluationReport",
    "FeatureSchema",
    "FeatureVector",
    "ForestModel",
    "ForestParams",
    "Label",
    "PullRequestRecord",
    "SplitPlan",
    "age_seconds",
    "auc_roc",
    "build_dataset",
    "evaluate",
    "fit",
    "is_labelable",
    "label",
    "predict_proba",
    "split",
    "tune",
]
