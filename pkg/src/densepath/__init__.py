"""DenseNet-style binary classifier for pathology patches, built on a small
numpy autograd engine."""

from . import functional, kernels
from .architectures import Model, ModelSpec, build_model, preset
from .data import AugmentSpec, Dataset, Sample, load_dataset, split
from .harness import TrainConfig, evaluate, evaluate_tta, train, tta_predict
from .metrics import accuracy, auc, roc_curve
from .optim import Adam, AdamHyper, AdamState, adam_step
from .tensor import Tensor, backward, no_grad, zero_grads

__version__ = "0.1.0"

__all__ = [
    "Adam",
    "AdamHyper",
    "AdamState",
    "AugmentSpec",
    "Dataset",
    "Model",
    "ModelSpec",
    "Sample",
    "Tensor",
    "TrainConfig",
    "accuracy",
    "adam_step",
    "auc",
    "backward",
    "build_model",
    "evaluate",
    "evaluate_tta",
    "functional",
    "kernels",
    "load_dataset",
    "no_grad",
    "preset",
    "roc_curve",
    "split",
    "train",
    "tta_predict",
    "zero_grads",
]
