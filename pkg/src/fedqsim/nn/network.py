"""Interprets a layer-spec sequence: forward, backward, SGD, gradient checking.

The interpreter keeps a stack of pending branch outputs.  Embeddings push a
branch; ``MeanPoolOverSequence`` pools the top branch; ``Concat`` merges all
pending branches (plus scalar batch fields); dense layers require exactly one
pending branch and transform it.  The final activation is returned as logits;
any softmax is applied by the loss or by prediction helpers.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dataclass_field

import numpy as np

from fedqsim.errors import ConfigurationError
from fedqsim.nn import layers as L
from fedqsim.nn.losses import LossKind, loss_and_grad
from fedqsim.nn.params import GradientSet, ParameterSet


@dataclass
class BatchNormState:
    """Running mean/var per BatchNorm layer name.  Central training only."""

    stats: dict[str, tuple[np.ndarray, np.ndarray]] = dataclass_field(default_factory=dict)

    def copy(self) -> "BatchNormState":
        return BatchNormState({k: (m.copy(), v.copy()) for k, (m, v) in self.stats.items()})

    @classmethod
    def initialized(cls, model_spec: list["L.LayerSpec"]) -> "BatchNormState":
        """Mean 0, variance 1 per BatchNorm layer, so eval is defined before
        any training batch has contributed."""
        stats = {
            layer.name: (np.zeros(layer.channels), np.ones(layer.channels))
            for layer in model_spec
            if isinstance(layer, L.BatchNorm)
        }
        return cls(stats)

    def to_parameter_set(self) -> ParameterSet:
        entries = []
        for name, (mean, var) in self.stats.items():
            entries.append((f"{name}.running_mean", mean))
            entries.append((f"{name}.running_var", var))
        return ParameterSet(entries)

    @classmethod
    def from_parameter_set(cls, params: ParameterSet) -> "BatchNormState":
        stats: dict[str, tuple[np.ndarray, np.ndarray]] = {}
        means = {n[: -len(".running_mean")]: a for n, a in params if n.endswith(".running_mean")}
        variances = {n[: -len(".running_var")]: a for n, a in params if n.endswith(".running_var")}
        for name in means:
            stats[name] = (means[name], variances[name])
        return cls(stats)


def validate_model_spec(model_spec: list[L.LayerSpec]) -> None:
    seen: set[str] = set()
    for layer in model_spec:
        layer.validate()
        name = getattr(layer, "name", None)
        if name is not None:
            if name in seen:
                raise ConfigurationError(f"duplicate layer name {name!r}")
            seen.add(name)


def param_shapes(model_spec: list[L.LayerSpec]) -> dict[str, tuple[int, ...]]:
    """Ordered name -> shape map over every trainable parameter."""
    shapes: dict[str, tuple[int, ...]] = {}
    for layer in model_spec:
        for name, shape in layer.param_shapes().items():
            if name in shapes:
                raise ConfigurationError(f"duplicate parameter name {name!r}")
            shapes[name] = shape
    return shapes


def parameter_count(model_spec: list[L.LayerSpec]) -> int:
    return sum(int(np.prod(s, dtype=np.int64)) for s in param_shapes(model_spec).values())


def init_parameters(model_spec: list[L.LayerSpec], rng: np.random.Generator) -> ParameterSet:
    """Deterministic initialization, drawn in declaration order.

    Embeddings: normal with std 1/sqrt(dim).  Fully-connected weights and
    biases: uniform in +/- 1/sqrt(fan_in).  Norm layers: gamma 1, beta 0.
    """
    validate_model_spec(model_spec)
    params = ParameterSet()
    for layer in model_spec:
        if isinstance(layer, L.Embedding):
            std = 1.0 / np.sqrt(layer.dim)
            params.add(f"{layer.name}.weight", rng.normal(0.0, std, size=(layer.vocab_size, layer.dim)))
        elif isinstance(layer, L.FullyConnected):
            bound = 1.0 / np.sqrt(layer.in_dim)
            params.add(f"{layer.name}.weight", rng.uniform(-bound, bound, size=(layer.out_dim, layer.in_dim)))
            params.add(f"{layer.name}.bias", rng.uniform(-bound, bound, size=(layer.out_dim,)))
        elif isinstance(layer, (L.GroupNorm, L.BatchNorm)):
            params.add(f"{layer.name}.gamma", np.ones(layer.channels))
            params.add(f"{layer.name}.beta", np.zeros(layer.channels))
    return params


def _require_single(branches: list, layer) -> None:
    if len(branches) != 1:
        raise ConfigurationError(
            f"layer {layer} requires a single pending branch, found {len(branches)}; "
            f"concatenate branches first"
        )


def forward_with_cache(
    model_spec: list[L.LayerSpec],
    params: ParameterSet,
    batch,
    *,
    train: bool = True,
    bn_state: BatchNormState | None = None,
):
    """Runs the network, returning (logits, cache) for a later backward pass.

    ``batch`` is any object exposing the attributes named by the embedding
    ``field``, pooling ``lengths_field`` and concat ``scalar_fields`` specs.
    In train mode, BatchNorm layers normalize with batch statistics and, when
    ``bn_state`` is given, update its running estimates in place.
    """
    branches: list[np.ndarray] = []
    caches: list = []
    for layer in model_spec:
        if isinstance(layer, L.Embedding):
            indices = getattr(batch, layer.field)
            out, cache = L.embedding_forward(params[f"{layer.name}.weight"], indices, layer.name)
            branches.append(out)
            caches.append(cache)
        elif isinstance(layer, L.MeanPoolOverSequence):
            if not branches:
                raise ConfigurationError("pooling layer with no pending branch")
            lengths = getattr(batch, layer.lengths_field)
            out, cache = L.meanpool_forward(branches.pop(), lengths, "mean_pool")
            branches.append(out)
            caches.append(cache)
        elif isinstance(layer, L.Concat):
            scalars = [getattr(batch, f) for f in layer.scalar_fields]
            out, cache = L.concat_forward(branches, scalars, "concat")
            branches = [out]
            caches.append(cache)
        elif isinstance(layer, L.FullyConnected):
            _require_single(branches, layer)
            out, cache = L.fc_forward(
                branches.pop(), params[f"{layer.name}.weight"], params[f"{layer.name}.bias"], layer.name
            )
            branches.append(out)
            caches.append(cache)
        elif isinstance(layer, L.GroupNorm):
            _require_single(branches, layer)
            out, cache = L.groupnorm_forward(
                branches.pop(),
                params[f"{layer.name}.gamma"],
                params[f"{layer.name}.beta"],
                layer.num_groups,
                layer.eps,
                layer.name,
            )
            branches.append(out)
            caches.append(cache)
        elif isinstance(layer, L.BatchNorm):
            _require_single(branches, layer)
            rm = rv = None
            if bn_state is not None and layer.name in bn_state.stats:
                rm, rv = bn_state.stats[layer.name]
            out, cache, new_m, new_v = L.batchnorm_forward(
                branches.pop(),
                params[f"{layer.name}.gamma"],
                params[f"{layer.name}.beta"],
                layer.eps,
                layer.momentum,
                rm,
                rv,
                train,
                layer.name,
            )
            if train and bn_state is not None:
                bn_state.stats[layer.name] = (new_m, new_v)
            branches.append(out)
            caches.append(cache)
        elif isinstance(layer, L.ReLU):
            _require_single(branches, layer)
            out, cache = L.relu_forward(branches.pop())
            branches.append(out)
            caches.append(cache)
        else:
            raise ConfigurationError(f"unknown layer spec: {layer!r}")
    if len(branches) != 1:
        raise ConfigurationError(f"{len(branches)} unconsumed branches at network output")
    return branches[0], caches


def forward(
    model_spec: list[L.LayerSpec],
    params: ParameterSet,
    batch,
    *,
    train: bool = False,
    bn_state: BatchNormState | None = None,
) -> np.ndarray:
    """Logits of shape (batch_size, output_dim).  Defaults to eval mode."""
    logits, _ = forward_with_cache(model_spec, params, batch, train=train, bn_state=bn_state)
    return logits


def backward(
    model_spec: list[L.LayerSpec],
    params: ParameterSet,
    caches: list,
    dlogits: np.ndarray,
) -> GradientSet:
    """Gradients for every trainable parameter given d(loss)/d(logits)."""
    grads: dict[str, np.ndarray] = {}
    grad_stack: list[np.ndarray] = [dlogits]
    for layer, cache in zip(reversed(model_spec), reversed(caches)):
        if isinstance(layer, L.Embedding):
            grads[f"{layer.name}.weight"] = L.embedding_backward(grad_stack.pop(), cache)
        elif isinstance(layer, L.MeanPoolOverSequence):
            grad_stack.append(L.meanpool_backward(grad_stack.pop(), cache))
        elif isinstance(layer, L.Concat):
            branch_grads = L.concat_backward(grad_stack.pop(), cache)
            grad_stack.extend(branch_grads)
        elif isinstance(layer, L.FullyConnected):
            dx, dw, db = L.fc_backward(grad_stack.pop(), cache, params[f"{layer.name}.weight"])
            grads[f"{layer.name}.weight"] = dw
            grads[f"{layer.name}.bias"] = db
            grad_stack.append(dx)
        elif isinstance(layer, L.GroupNorm):
            dx, dgamma, dbeta = L.groupnorm_backward(grad_stack.pop(), cache)
            grads[f"{layer.name}.gamma"] = dgamma
            grads[f"{layer.name}.beta"] = dbeta
            grad_stack.append(dx)
        elif isinstance(layer, L.BatchNorm):
            dx, dgamma, dbeta = L.batchnorm_backward(grad_stack.pop(), cache)
            grads[f"{layer.name}.gamma"] = dgamma
            grads[f"{layer.name}.beta"] = dbeta
            grad_stack.append(dx)
        elif isinstance(layer, L.ReLU):
            grad_stack.append(L.relu_backward(grad_stack.pop(), cache))
    out = GradientSet()
    for name, _ in params:
        if name in grads:
            out.add(name, grads[name])
        else:
            out.add(name, np.zeros_like(params[name]))
    params.require_congruent(out, "params and gradients")
    return out


def loss_and_param_gradients(
    model_spec: list[L.LayerSpec],
    params: ParameterSet,
    batch,
    targets: np.ndarray,
    loss_kind: LossKind,
    *,
    train: bool = True,
    bn_state: BatchNormState | None = None,
):
    """(mean loss, GradientSet, logits) for one batch."""
    logits, caches = forward_with_cache(model_spec, params, batch, train=train, bn_state=bn_state)
    loss, dlogits = loss_and_grad(loss_kind, logits, targets)
    grads = backward(model_spec, params, caches, dlogits)
    return loss, grads, logits


def sgd_step(params: ParameterSet, grads: GradientSet, eta: float) -> ParameterSet:
    """Pure SGD update: returns params - eta * grads, inputs untouched."""
    params.require_congruent(grads, "params and gradients")
    return ParameterSet((name, a - eta * grads[name]) for name, a in params)


def sgd_step_inplace(params: ParameterSet, grads: GradientSet, eta: float) -> None:
    """In-place variant for tight training loops; caller owns ``params``."""
    params.require_congruent(grads, "params and gradients")
    for name, a in params:
        a -= eta * grads[name]


def finite_difference_gradient(
    model_spec: list[L.LayerSpec],
    params: ParameterSet,
    batch,
    targets: np.ndarray,
    loss_kind: LossKind,
    epsilon: float = 1e-5,
) -> GradientSet:
    """Central-difference gradient of the batch loss, parameter by parameter.

    O(total parameter count) forward passes; intended for desk-scale checks
    of the analytic backward pass.
    """

    def batch_loss() -> float:
        logits, _ = forward_with_cache(model_spec, params, batch, train=True, bn_state=None)
        loss, _ = loss_and_grad(loss_kind, logits, targets)
        return float(loss)

    grads = GradientSet()
    for name, array in params:
        g = np.zeros_like(array)
        flat = array.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            original = flat[i]
            flat[i] = original + epsilon
            plus = batch_loss()
            flat[i] = original - epsilon
            minus = batch_loss()
            flat[i] = original
            gflat[i] = (plus - minus) / (2.0 * epsilon)
        grads.add(name, g)
    return grads
