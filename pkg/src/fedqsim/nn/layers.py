"""Layer specs and their forward/backward kernels.

A model is described by a sequence of small frozen dataclasses (the layer
specs).  Parameterized specs carry a ``name``; their parameters live in a
:class:`~fedqsim.nn.params.ParameterSet` under ``"<name>.weight"``,
``"<name>.bias"``, ``"<name>.gamma"`` or ``"<name>.beta"``.

Kernels follow the (out, cache) / (dout, cache) convention: ``*_forward``
returns the output plus whatever the matching ``*_backward`` needs.
Everything is float64.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Union

import numpy as np

from fedqsim.errors import ConfigurationError, DataError


@dataclass(frozen=True)
class Embedding:
    """Table lookup.  ``field`` names the batch attribute holding the indices.

    1-D index arrays (batch,) produce (batch, dim); 2-D arrays
    (batch, seq) produce (batch, seq, dim) and are expected to be followed by
    a pooling layer.  Index 0 may be reserved as padding by the surrounding
    model; the table still allocates a row for it.
    """

    name: str
    vocab_size: int
    dim: int
    field: str

    def param_shapes(self) -> dict[str, tuple[int, ...]]:
        return {f"{self.name}.weight": (self.vocab_size, self.dim)}

    def validate(self) -> None:
        if self.vocab_size < 1:
            raise ConfigurationError(f"{self.name}: vocab_size must be >= 1, got {self.vocab_size}")
        if self.dim < 1:
            raise ConfigurationError(f"{self.name}: dim must be >= 1, got {self.dim}")


@dataclass(frozen=True)
class FullyConnected:
    """Affine map.  Weight is stored (out_dim, in_dim); y = x @ W.T + b."""

    name: str
    in_dim: int
    out_dim: int

    def param_shapes(self) -> dict[str, tuple[int, ...]]:
        return {
            f"{self.name}.weight": (self.out_dim, self.in_dim),
            f"{self.name}.bias": (self.out_dim,),
        }

    def validate(self) -> None:
        if self.in_dim < 1 or self.out_dim < 1:
            raise ConfigurationError(
                f"{self.name}: dims must be >= 1, got in={self.in_dim} out={self.out_dim}"
            )


@dataclass(frozen=True)
class GroupNorm:
    """Per-sample normalization over channel groups; batch-size independent."""

    name: str
    num_groups: int
    channels: int
    eps: float = 1e-5

    def param_shapes(self) -> dict[str, tuple[int, ...]]:
        return {f"{self.name}.gamma": (self.channels,), f"{self.name}.beta": (self.channels,)}

    def validate(self) -> None:
        if self.num_groups < 1:
            raise ConfigurationError(f"{self.name}: num_groups must be >= 1, got {self.num_groups}")
        if self.channels % self.num_groups != 0:
            raise ConfigurationError(
                f"{self.name}: channels={self.channels} not divisible by num_groups={self.num_groups}"
            )
        if self.channels == self.num_groups:
            raise ConfigurationError(
                f"{self.name}: one channel per group normalizes every activation to zero; "
                f"use fewer groups than channels"
            )


@dataclass(frozen=True)
class BatchNorm:
    """Per-channel normalization over the batch; keeps running statistics.

    Intended for central training only: its output depends on the batch
    composition, which a federated client population makes unstable.
    """

    name: str
    channels: int
    eps: float = 1e-5
    momentum: float = 0.1

    def param_shapes(self) -> dict[str, tuple[int, ...]]:
        return {f"{self.name}.gamma": (self.channels,), f"{self.name}.beta": (self.channels,)}

    def validate(self) -> None:
        if self.channels < 1:
            raise ConfigurationError(f"{self.name}: channels must be >= 1, got {self.channels}")
        if not 0.0 < self.momentum <= 1.0:
            raise ConfigurationError(f"{self.name}: momentum must be in (0, 1], got {self.momentum}")


@dataclass(frozen=True)
class ReLU:
    def param_shapes(self) -> dict[str, tuple[int, ...]]:
        return {}

    def validate(self) -> None:
        pass


@dataclass(frozen=True)
class MeanPoolOverSequence:
    """Masked mean over the sequence axis of the preceding embedding output.

    ``lengths_field`` names the batch attribute with per-row valid lengths;
    positions at or beyond a row's length are padding and contribute nothing,
    so appending padding never changes the result.
    """

    lengths_field: str

    def param_shapes(self) -> dict[str, tuple[int, ...]]:
        return {}

    def validate(self) -> None:
        pass


@dataclass(frozen=True)
class Concat:
    """Concatenates all pending branch outputs, plus named scalar batch fields."""

    scalar_fields: tuple[str, ...] = field(default_factory=tuple)

    def param_shapes(self) -> dict[str, tuple[int, ...]]:
        return {}

    def validate(self) -> None:
        pass


LayerSpec = Union[Embedding, FullyConnected, GroupNorm, BatchNorm, ReLU, MeanPoolOverSequence, Concat]


# ---------------------------------------------------------------------------
# Kernels


def embedding_forward(table: np.ndarray, indices: np.ndarray, layer_name: str):
    idx = np.asarray(indices)
    if not np.issubdtype(idx.dtype, np.integer):
        raise DataError(f"{layer_name}: indices must be integer, got dtype {idx.dtype}")
    if idx.size:
        lo, hi = int(idx.min()), int(idx.max())
        if lo < 0 or hi >= table.shape[0]:
            bad = lo if lo < 0 else hi
            raise DataError(
                f"{layer_name}: embedding index {bad} out of range for vocab size {table.shape[0]}"
            )
    out = table[idx]
    cache = (idx, table.shape)
    return out, cache


def embedding_backward(dout: np.ndarray, cache) -> np.ndarray:
    idx, table_shape = cache
    dtable = np.zeros(table_shape, dtype=np.float64)
    np.add.at(dtable, idx.reshape(-1), dout.reshape(-1, table_shape[1]))
    return dtable


def fc_forward(x: np.ndarray, weight: np.ndarray, bias: np.ndarray, layer_name: str):
    if x.ndim != 2 or x.shape[1] != weight.shape[1]:
        raise ConfigurationError(
            f"{layer_name}: input shape {x.shape} incompatible with weight {weight.shape}"
        )
    out = x @ weight.T + bias
    return out, (x,)


def fc_backward(dout: np.ndarray, cache, weight: np.ndarray):
    (x,) = cache
    dx = dout @ weight
    dweight = dout.T @ x
    dbias = dout.sum(axis=0)
    return dx, dweight, dbias


def _norm_over_axis(x_grouped: np.ndarray, eps: float):
    # x_grouped: (..., m) normalized over the last axis with biased variance.
    mu = x_grouped.mean(axis=-1, keepdims=True)
    var = x_grouped.var(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x_grouped - mu) * inv
    return xhat, inv


def groupnorm_forward(x: np.ndarray, gamma: np.ndarray, beta: np.ndarray, num_groups: int, eps: float, layer_name: str):
    b, c = x.shape
    if c != gamma.shape[0]:
        raise ConfigurationError(f"{layer_name}: input width {c} != channels {gamma.shape[0]}")
    g = num_groups
    xg = x.reshape(b, g, c // g)
    xhat_g, inv = _norm_over_axis(xg, eps)
    xhat = xhat_g.reshape(b, c)
    out = gamma * xhat + beta
    return out, (xhat_g, inv, gamma, g)


def groupnorm_backward(dout: np.ndarray, cache):
    xhat_g, inv, gamma, g = cache
    b, c = dout.shape
    m = c // g
    dxhat = (dout * gamma).reshape(b, g, m)
    mean_dxhat = dxhat.mean(axis=-1, keepdims=True)
    mean_dxhat_xhat = (dxhat * xhat_g).mean(axis=-1, keepdims=True)
    dx = inv * (dxhat - mean_dxhat - xhat_g * mean_dxhat_xhat)
    xhat = xhat_g.reshape(b, c)
    dgamma = (dout * xhat).sum(axis=0)
    dbeta = dout.sum(axis=0)
    return dx.reshape(b, c), dgamma, dbeta


def batchnorm_forward(
    x: np.ndarray,
    gamma: np.ndarray,
    beta: np.ndarray,
    eps: float,
    momentum: float,
    running_mean: np.ndarray | None,
    running_var: np.ndarray | None,
    train: bool,
    layer_name: str,
):
    """Returns (out, cache, new_running_mean, new_running_var).

    Training mode normalizes with batch statistics (biased variance) and
    blends them into the running estimates; eval mode uses the running
    estimates unchanged.
    """
    b, c = x.shape
    if c != gamma.shape[0]:
        raise ConfigurationError(f"{layer_name}: input width {c} != channels {gamma.shape[0]}")
    if train:
        mu = x.mean(axis=0)
        var = x.var(axis=0)
        inv = 1.0 / np.sqrt(var + eps)
        xhat = (x - mu) * inv
        if running_mean is None:
            new_mean, new_var = mu.copy(), var.copy()
        else:
            new_mean = (1.0 - momentum) * running_mean + momentum * mu
            new_var = (1.0 - momentum) * running_var + momentum * var
        cache = (xhat, inv, gamma)
        return gamma * xhat + beta, cache, new_mean, new_var
    if running_mean is None:
        raise ConfigurationError(f"{layer_name}: eval mode requires running statistics")
    inv = 1.0 / np.sqrt(running_var + eps)
    xhat = (x - running_mean) * inv
    cache = (xhat, inv, gamma)
    return gamma * xhat + beta, cache, running_mean, running_var


def batchnorm_backward(dout: np.ndarray, cache):
    # Train-mode gradient (statistics depend on x).
    xhat, inv, gamma = cache
    b = dout.shape[0]
    dxhat = dout * gamma
    dx = inv * (dxhat - dxhat.mean(axis=0) - xhat * (dxhat * xhat).mean(axis=0))
    dgamma = (dout * xhat).sum(axis=0)
    dbeta = dout.sum(axis=0)
    return dx, dgamma, dbeta


def relu_forward(x: np.ndarray):
    return np.maximum(x, 0.0), (x > 0.0,)


def relu_backward(dout: np.ndarray, cache):
    (mask,) = cache
    return dout * mask


def meanpool_forward(x: np.ndarray, lengths: np.ndarray, layer_name: str):
    if x.ndim != 3:
        raise ConfigurationError(f"{layer_name}: expected (batch, seq, dim) input, got shape {x.shape}")
    b, w, d = x.shape
    lengths = np.asarray(lengths)
    if lengths.shape != (b,):
        raise ConfigurationError(f"{layer_name}: lengths shape {lengths.shape} != ({b},)")
    if lengths.size and (lengths.min() < 1 or lengths.max() > w):
        raise DataError(f"{layer_name}: lengths must be in [1, {w}], got range "
                        f"[{int(lengths.min())}, {int(lengths.max())}]")
    mask = (np.arange(w)[None, :] < lengths[:, None]).astype(np.float64)
    denom = lengths.astype(np.float64)
    out = (x * mask[:, :, None]).sum(axis=1) / denom[:, None]
    return out, (mask, denom, (b, w, d))


def meanpool_backward(dout: np.ndarray, cache):
    mask, denom, (b, w, d) = cache
    dx = (dout / denom[:, None])[:, None, :] * mask[:, :, None]
    return dx


def concat_forward(branches: list[np.ndarray], scalars: list[np.ndarray], layer_name: str):
    cols = []
    widths = []
    for arr in branches:
        if arr.ndim != 2:
            raise ConfigurationError(
                f"{layer_name}: cannot concatenate branch of shape {arr.shape}; pool sequences first"
            )
        cols.append(arr)
        widths.append(arr.shape[1])
    for s in scalars:
        s = np.asarray(s, dtype=np.float64)
        if s.ndim != 1:
            raise ConfigurationError(f"{layer_name}: scalar field must be 1-D, got shape {s.shape}")
        cols.append(s[:, None])
        widths.append(1)
    out = np.concatenate(cols, axis=1)
    return out, (widths, len(branches))


def concat_backward(dout: np.ndarray, cache):
    widths, n_branches = cache
    grads = []
    start = 0
    for wdt in widths[:n_branches]:
        grads.append(dout[:, start : start + wdt])
        start += wdt
    return grads  # scalar-field gradients are dropped: inputs, not parameters
