"""Distributionally robust probabilistic prediction for linear stochastic systems."""

from .ambiguity import AmbiguitySet, Gamma0, SdsStepRealization, contains
from .core import GaussianPdf, gaussian_log_density
from .predictors import PredictorKind, eig_drpp_value, noise_drpp_value, p3_solve, predict
from .worstcase import compute_bounds, diagnose_ambiguity

__version__ = "0.1.0"
