"""Sparse logistic regression with nonconvex penalties and self-paced sample selection."""

from .data import DataError, Dataset, load_csv, save_csv, split, standardize
from .penalties import Penalty, PenaltySpec, oracle_threshold, threshold
from .solver import FitOptions, ModelFit, SolverError, cross_validate, fit, lambda_max, predict_proba
from .spl import SplConfig, spl_fit, update_weights
from .sim import SimConfig, generate, run_replicated, support_metrics
from .metrics import auc, confusion_report, descriptor_pvalues, welch_pvalue

__version__ = "0.1.0"

__all__ = [
    "DataError", "Dataset", "load_csv", "save_csv", "split", "standardize",
    "Penalty", "PenaltySpec", "oracle_threshold", "threshold",
    "FitOptions", "ModelFit", "SolverError", "cross_validate", "fit", "lambda_max", "predict_proba",
    "SplConfig", "spl_fit", "update_weights",
    "SimConfig", "generate", "run_replicated", "support_metrics",
    "auc", "confusion_report", "descriptor_pvalues", "welch_pvalue",
]
