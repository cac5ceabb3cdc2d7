"""Least-squares single-index regression with an adaptive-to-model,
martingale-transformed goodness-of-fit test."""

__version__ = "0.1.0"

from .baselines import BaselineReport, gwz, icm, stute_zhu, zheng
from .cvm import CvmDistribution, cvm_quantiles, default_table
from .exceptions import (
    DegenerateFitError,
    EstimationError,
    IngestionError,
    StageError,
    StudyError,
)
from .gof import AdaptiveModelCheck, TestReport, acm_statistic, run_test
from .kernel import SmoothingConfig, conditional_moments, nw
from .model import FAMILIES, Dataset, ModelFamily, ParamVector, get_family, register_family
from .nls import FitOptions, FitResult, SingleIndexRegressor, fit, sigma_matrix
from .process import (
    annihilation_check,
    direction_grid,
    marked_process,
    sup_process,
    transform,
    transform_marks,
)
from .sdr import CumulativeSlicing, SdrResult, cse_matrix, mrer, reduce, standardize
from .sim import Scenario, SizePowerTable, dims_for, generate, run_study

__all__ = [
    "AdaptiveModelCheck", "BaselineReport", "CumulativeSlicing", "CvmDistribution",
    "Dataset", "DegenerateFitError", "EstimationError", "FAMILIES", "FitOptions",
    "FitResult", "IngestionError", "ModelFamily", "ParamVector", "Scenario",
    "SdrResult", "SingleIndexRegressor", "SizePowerTable", "SmoothingConfig",
    "StageError", "StudyError", "TestReport", "acm_statistic", "annihilation_check",
    "conditional_moments", "cse_matrix", "cvm_quantiles", "default_table",
    "dims_for", "direction_grid", "fit", "generate", "get_family", "gwz", "icm",
    "marked_process", "mrer", "nw", "reduce", "register_family", "run_study",
    "run_test", "sigma_matrix", "standardize", "stute_zhu", "sup_process",
    "transform", "transform_marks", "zheng",
]
