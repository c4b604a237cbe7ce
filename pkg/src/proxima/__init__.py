"""Adaptive proxy-function calibration for least-squares Monte Carlo.

Regression back ends (OLS, GLM, GAM, FGLS, MARS, kernel) are driven by a
forward selection loop over monomial basis terms that respects the
principle of marginality.
"""

__version__ = "0.1.0"

from .basis import Restrictions, design_matrix, format_term, marginality_candidates, parse_term
from .data import FittingSet, ValidationSet, read_fitting_csv, read_validation_csv
from .engine import EngineConfig, SelectionTrace, calibrate, exhaustive_reference
from .errors import (ConvergenceError, DegenerateFitError, DomainError, ParseError, PreconditionError,
                     ProximaError, RankDeficiencyError)
from .fgls import aic_fgls, breusch_pagan, fit_fgls, run_type2, select_variance_model_type1
from .gam import aic_gam, fit_gam, gcv_gam, select_lambda
from .glm import aic_glm, fit_glm
from .kernel import KernelModel, KernelSpec, aic_hurvich, fit_kernel, hat_trace, loocv, select_bandwidths
from .linalg import solve_ls, solve_wls
from .mars import backward_pass, fit_mars, forward_pass, gcv_mars, initial_candidates
from .modelio import read_model, write_model
from .ols import aic_ols, fit_ols
from .sobol import sobol_points
from .synthetic import SyntheticModelSpec, default_spec, make_fitting_set, make_validation_set, true_value
from .validation import ValidationFigures, compute_figures, report

__all__ = [
    "Restrictions", "design_matrix", "format_term", "marginality_candidates", "parse_term",
    "FittingSet", "ValidationSet", "read_fitting_csv", "read_validation_csv",
    "EngineConfig", "SelectionTrace", "calibrate", "exhaustive_reference",
    "ConvergenceError", "DegenerateFitError", "DomainError", "ParseError", "PreconditionError",
    "ProximaError", "RankDeficiencyError",
    "aic_fgls", "breusch_pagan", "fit_fgls", "run_type2", "select_variance_model_type1",
    "aic_gam", "fit_gam", "gcv_gam", "select_lambda", "aic_glm", "fit_glm",
    "KernelModel", "KernelSpec", "aic_hurvich", "fit_kernel", "hat_trace", "loocv", "select_bandwidths",
    "solve_ls", "solve_wls", "backward_pass", "fit_mars", "forward_pass", "gcv_mars", "initial_candidates",
    "read_model", "write_model", "aic_ols", "fit_ols", "sobol_points",
    "SyntheticModelSpec", "default_spec", "make_fitting_set", "make_validation_set", "true_value",
    "ValidationFigures", "compute_figures", "report",
]
