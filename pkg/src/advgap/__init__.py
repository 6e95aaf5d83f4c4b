"""Adversarial training under directed attacks: linear theory, experiments and image attacks."""
from .adv_train import PerturbationKind, PerturbationSet, TrainConfig, adv_logistic_regression
from .evaluation import EvalReport, decomposition_curve, evaluate_exact, evaluate_mc
from .lin_data import DistributionSpec, LinDataset, sample_dataset
from .maxmargin import LinearClassifier, robust_maxmargin, solve_margin

__all__ = ["DistributionSpec", "LinDataset", "sample_dataset", "LinearClassifier",
           "solve_margin", "robust_maxmargin", "PerturbationKind", "PerturbationSet",
           "TrainConfig", "adv_logistic_regression", "EvalReport", "evaluate_mc",
           "evaluate_exact", "decomposition_curve"]
