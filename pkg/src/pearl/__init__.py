"""Recover consumer utility from revealed-preference data.

Fits Cobb-Douglas or input-concave neural network utilities by minimising
the gap between observed and money-metric expenditure, then predicts demand
and price elasticities from the fitted model.
"""

from .dataset import Dataset, Observation, load_dataset, save_dataset, train_test_split
from .errors import (DegenerateGradientError, FitError, ParseError, PearlError,
                     PreconditionError, ValidationError)
from .fitting import FitConfig, FitReport, fit, predict_demand, pretrain
from .garp import afriat_index, afriat_numbers, check_garp, direct_relations, transitive_closure
from .sim import EndogeneityNoise, RandomUtilityNoise, SimSpec, generate
from .solvers import SolverConfig, elasticity_matrix, maximize_utility, money_metric
from .utility import CobbDouglasModel, IcnnModel, init_model, load_model, save_model

__version__ = "0.1.0"

__all__ = [
    "CobbDouglasModel", "Dataset", "DegenerateGradientError", "EndogeneityNoise", "FitConfig",
    "FitError", "FitReport", "IcnnModel", "Observation", "ParseError", "PearlError",
    "PreconditionError", "RandomUtilityNoise", "SimSpec", "SolverConfig", "ValidationError",
    "afriat_index", "afriat_numbers", "check_garp", "direct_relations", "elasticity_matrix",
    "fit", "generate", "init_model", "load_dataset", "load_model", "maximize_utility",
    "money_metric", "predict_demand", "pretrain", "save_dataset", "save_model",
    "train_test_split", "transitive_closure",
]
