"""Counterfactual dose-response estimation with a hierarchical adversarial
generator, set-structured discriminators and a numpy autodiff substrate."""

from .baselines import BaselineConfig, BaselineNet, baseline_fit, baseline_predict
from .gan import VARIANTS, SciganModel, TrainConfig, Variant, fit_scigan, gan_train, inference_train
from .metrics import EvalReport, ResponseOracle, dpe, evaluate, find_optimal_dosage, mise, pe
from .nn import DimensionError, TrainingDivergence
from .simulate import Dataset, ResponseModel, SimulationConfig, make_dataset, sample_treatment_params

__all__ = [
    "BaselineConfig", "BaselineNet", "baseline_fit", "baseline_predict",
    "VARIANTS", "SciganModel", "TrainConfig", "Variant", "fit_scigan", "gan_train", "inference_train",
    "EvalReport", "ResponseOracle", "dpe", "evaluate", "find_optimal_dosage", "mise", "pe",
    "DimensionError", "TrainingDivergence",
    "Dataset", "ResponseModel", "SimulationConfig", "make_dataset", "sample_treatment_params",
]
