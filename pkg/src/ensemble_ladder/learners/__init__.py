from .gbt import GbtHyper, GradientBoostedClassifier
from .gp import GaussianProcess, GpHyper, GpKernelParams, log_marginal_likelihood
from .models import (
    ClassifierModel,
    RegressorModel,
    TrainingSample,
    classifier_ladder,
    expand_samples,
    load_model,
    predict_class,
    predict_classes,
    predict_crossover,
    regressor_ladder,
    rfe_select,
    save_model,
    train_classifier,
    train_regressor,
)

__all__ = [
    "ClassifierModel",
    "GaussianProcess",
    "GbtHyper",
    "GpHyper",
    "GpKernelParams",
    "GradientBoostedClassifier",
    "RegressorModel",
    "TrainingSample",
    "classifier_ladder",
    "expand_samples",
    "load_model",
    "log_marginal_likelihood",
    "predict_class",
    "predict_classes",
    "predict_crossover",
    "regressor_ladder",
    "rfe_select",
    "save_model",
    "train_classifier",
    "train_regressor",
]
