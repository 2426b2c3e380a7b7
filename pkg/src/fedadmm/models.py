"""Client loss models: ridge regression and a ReLU MLP with softmax cross-entropy.

Parameters always travel as one flat float64 vector. For the MLP the layout
is, layer by layer, the weight matrix of shape ``(fan_in, fan_out)`` in
row-major order followed by that layer's bias.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .data import DataShard

Array = np.ndarray


def _check_params(params: Array, n: int) -> Array:
    params = np.asarray(params, dtype=np.float64)
    if params.shape != (n,):
        raise ValueError(f"expected a parameter vector of length {n}, got shape {params.shape}")
    if not np.all(np.isfinite(params)):
        raise ValueError("parameter vector contains non-finite entries")
    return params


@dataclass(frozen=True)
class RidgeSpec:
    gamma: float
    feature_dim: int

    def __post_init__(self):
        if not self.gamma >= 0:
            raise ValueError(f"gamma must be nonnegative, got {self.gamma}")
        if self.feature_dim < 1:
            raise ValueError(f"feature_dim must be positive, got {self.feature_dim}")

    @property
    def num_params(self) -> int:
        return self.feature_dim


def _check_ridge(params, shard: DataShard, spec: RidgeSpec) -> Array:
    params = _check_params(params, spec.feature_dim)
    if shard.features.shape[1] != spec.feature_dim:
        raise ValueError(
            f"shard has {shard.features.shape[1]} features, model expects {spec.feature_dim}"
        )
    return params


def ridge_value(params: Array, shard: DataShard, spec: RidgeSpec) -> float:
    params = _check_ridge(params, shard, spec)
    r = shard.features @ params - shard.targets
    return float(r @ r / (2 * shard.count) + 0.5 * spec.gamma * (params @ params))


def ridge_grad(params: Array, shard: DataShard, spec: RidgeSpec) -> Array:
    params = _check_ridge(params, shard, spec)
    r = shard.features @ params - shard.targets
    return shard.features.T @ r / shard.count + spec.gamma * params


def convexity_constant(spec: RidgeSpec) -> float:
    """Strong-convexity lower bound of the ridge loss; the data term only adds curvature."""
    return float(spec.gamma)


@dataclass(frozen=True)
class MlpSpec:
    layer_sizes: tuple[int, ...] = (784, 200, 200, 10)

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.layer_sizes)
        object.__setattr__(self, "layer_sizes", sizes)
        if len(sizes) < 3:
            raise ValueError("an MLP needs an input, at least one hidden layer and an output")
        if min(sizes) < 1:
            raise ValueError(f"layer sizes must be positive, got {sizes}")

    @property
    def num_classes(self) -> int:
        return self.layer_sizes[-1]

    @property
    def shapes(self) -> list[tuple[int, int]]:
        return list(zip(self.layer_sizes[:-1], self.layer_sizes[1:]))

    @property
    def num_params(self) -> int:
        return sum(i * o + o for i, o in self.shapes)


def unpack_mlp(params: Array, spec: MlpSpec) -> list[tuple[Array, Array]]:
    """Split a flat parameter vector into per-layer ``(W, b)`` views."""
    layers = []
    offset = 0
    for fan_in, fan_out in spec.shapes:
        w = params[offset : offset + fan_in * fan_out].reshape(fan_in, fan_out)
        offset += fan_in * fan_out
        b = params[offset : offset + fan_out]
        offset += fan_out
        layers.append((w, b))
    return layers


def _check_mlp(params, shard: DataShard, spec: MlpSpec) -> tuple[Array, Array]:
    params = _check_params(params, spec.num_params)
    if shard.features.shape[1] != spec.layer_sizes[0]:
        raise ValueError(
            f"shard has {shard.features.shape[1]} features, network input is {spec.layer_sizes[0]}"
        )
    labels = np.asarray(shard.targets)
    if labels.size and (labels.min() < 0 or labels.max() >= spec.num_classes):
        raise ValueError(f"labels must lie in [0, {spec.num_classes}), got range "
                         f"[{labels.min()}, {labels.max()}]")
    return params, labels.astype(np.int64)


def mlp_logits(params: Array, features: Array, spec: MlpSpec) -> Array:
    layers = unpack_mlp(params, spec)
    h = features
    for w, b in layers[:-1]:
        h = np.maximum(h @ w + b, 0.0)
    w, b = layers[-1]
    return h @ w + b


def _log_softmax(logits: Array) -> Array:
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def mlp_value(params: Array, shard: DataShard, spec: MlpSpec) -> float:
    params, labels = _check_mlp(params, shard, spec)
    logp = _log_softmax(mlp_logits(params, shard.features, spec))
    return float(-logp[np.arange(labels.size), labels].mean())


def mlp_value_and_grad(params: Array, shard: DataShard, spec: MlpSpec) -> tuple[float, Array]:
    params, labels = _check_mlp(params, shard, spec)
    layers = unpack_mlp(params, spec)
    n = labels.size

    acts = [shard.features]
    for w, b in layers[:-1]:
        acts.append(np.maximum(acts[-1] @ w + b, 0.0))
    w_out, b_out = layers[-1]
    logp = _log_softmax(acts[-1] @ w_out + b_out)
    rows = np.arange(n)
    value = float(-logp[rows, labels].mean())

    delta = np.exp(logp)
    delta[rows, labels] -= 1.0
    delta /= n

    grads = []
    for layer in range(len(layers) - 1, -1, -1):
        w, _ = layers[layer]
        a_in = acts[layer]
        grads.append((a_in.T @ delta, delta.sum(axis=0)))
        if layer > 0:
            delta = (delta @ w.T) * (a_in > 0)
    flat = np.empty(spec.num_params)
    offset = 0
    for gw, gb in reversed(grads):
        flat[offset : offset + gw.size] = gw.ravel()
        offset += gw.size
        flat[offset : offset + gb.size] = gb
        offset += gb.size
    return value, flat


def mlp_grad(params: Array, shard: DataShard, spec: MlpSpec) -> Array:
    return mlp_value_and_grad(params, shard, spec)[1]


def mlp_init(spec: MlpSpec, rng: np.random.Generator) -> Array:
    """Glorot-uniform weights, zero biases."""
    parts = []
    for fan_in, fan_out in spec.shapes:
        limit = math.sqrt(6.0 / (fan_in + fan_out))
        parts.append(rng.uniform(-limit, limit, size=fan_in * fan_out))
        parts.append(np.zeros(fan_out))
    return np.concatenate(parts)


@dataclass(frozen=True)
class RidgeModel:
    spec: RidgeSpec

    @property
    def num_params(self) -> int:
        return self.spec.num_params

    def value(self, params, shard):
        return ridge_value(params, shard, self.spec)

    def grad(self, params, shard):
        return ridge_grad(params, shard, self.spec)

    def predict(self, params, features):
        return features @ params

    def init_params(self, rng):
        return np.zeros(self.num_params)


@dataclass(frozen=True)
class MlpModel:
    spec: MlpSpec = field(default_factory=MlpSpec)

    @property
    def num_params(self) -> int:
        return self.spec.num_params

    def value(self, params, shard):
        return mlp_value(params, shard, self.spec)

    def grad(self, params, shard):
        return mlp_grad(params, shard, self.spec)

    def predict(self, params, features):
        """Class predictions; ties resolve to the lowest class index."""
        return np.argmax(mlp_logits(params, features, self.spec), axis=1)

    def init_params(self, rng):
        return mlp_init(self.spec, rng)


LossModel = RidgeModel | MlpModel
