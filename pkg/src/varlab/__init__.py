"""Variability, collapse-to-constants and depth/width experiments for fully connected nets."""
from .budget import WidthPlan, activation_ratio, width_for_depth
from .estimators import FCNetClassifier
from .network import (
    Activation,
    ForwardTrace,
    InitScheme,
    NetworkConfig,
    ParameterSet,
    default_scheme,
    forward,
    init_params,
    input_jacobian,
    loss_and_gradient,
)
from .numerics import Rng

__version__ = "0.1.0"

__all__ = [
    "Activation",
    "FCNetClassifier",
    "ForwardTrace",
    "InitScheme",
    "NetworkConfig",
    "ParameterSet",
    "Rng",
    "WidthPlan",
    "activation_ratio",
    "default_scheme",
    "forward",
    "init_params",
    "input_jacobian",
    "loss_and_gradient",
    "width_for_depth",
]
