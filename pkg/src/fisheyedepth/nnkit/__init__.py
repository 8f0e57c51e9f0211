"""Network-side arithmetic: activations, Adam with step decay, shape checks, toy trainer."""
from .activations import ActivationParams, swish, swish_beta, swish_beta_grad, swish_grad
from .arch import ArchitectureError, load_architecture, verify_architecture
from .optim import AdamConfig, AdamState, adam_step, lr_schedule
from .toy import ToyModel, TrainingPair, objective, pixel_features, train_toy

__all__ = [
    "ActivationParams", "swish", "swish_grad", "swish_beta", "swish_beta_grad",
    "ArchitectureError", "load_architecture", "verify_architecture",
    "AdamConfig", "AdamState", "adam_step", "lr_schedule",
    "ToyModel", "TrainingPair", "objective", "pixel_features", "train_toy",
]
