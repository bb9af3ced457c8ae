"""Minimal float64 neural-network core.

Layers are plain spec dataclasses interpreted by :func:`fedqsim.nn.network.forward`
and friends; parameters live in an ordered :class:`fedqsim.nn.params.ParameterSet`.
All computation is float64; float32 appears only at the serialization and
compression boundaries.
"""

from __future__ import annotations

from fedqsim.nn.params import GradientSet, ParameterSet, load_parameter_set, save_parameter_set
from fedqsim.nn.layers import (
    BatchNorm,
    Concat,
    Embedding,
    FullyConnected,
    GroupNorm,
    LayerSpec,
    MeanPoolOverSequence,
    ReLU,
)
from fedqsim.nn.losses import LossKind, loss_and_grad, softmax
from fedqsim.nn.network import (
    BatchNormState,
    backward,
    finite_difference_gradient,
    forward,
    init_parameters,
    loss_and_param_gradients,
    sgd_step,
    sgd_step_inplace,
)

__all__ = [
    "ParameterSet",
    "GradientSet",
    "save_parameter_set",
    "load_parameter_set",
    "LayerSpec",
    "Embedding",
    "FullyConnected",
    "GroupNorm",
    "BatchNorm",
    "ReLU",
    "MeanPoolOverSequence",
    "Concat",
    "LossKind",
    "softmax",
    "loss_and_grad",
    "forward",
    "backward",
    "loss_and_param_gradients",
    "sgd_step",
    "sgd_step_inplace",
    "init_parameters",
    "finite_difference_gradient",
    "BatchNormState",
]
