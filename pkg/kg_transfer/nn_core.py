"""
Dense network substrate for the transition network, generator and discriminator

Each layer is linear -> optional activation (LeakyReLU or sigmoid) ->
optional layer normalization. Forward passes return a cache holding every
intermediate needed by the exact backward pass. Optimizers are Adam over
dense parameter dicts and a lazy per-row Adam for embedding tables.
Everything runs in float64.
"""

import enum
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .exceptions import ShapeError, StateError, TrainingError

LAYER_NORM_EPS = 1e-5


class Activation(str, enum.Enum):
    NONE = 'none'
    LEAKY_RELU = 'leaky_relu'
    SIGMOID = 'sigmoid'


class InitScheme(str, enum.Enum):
    ORTHOGONAL = 'orthogonal'
    FAN_UNIFORM = 'fan_uniform'


def sigmoid(x: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def init_dense(shape: Tuple[int, int], scheme: InitScheme, rng: np.random.Generator) -> np.ndarray:
    """
    Initialize an (out, in) weight matrix

    orthogonal: QR of a Gaussian matrix with the signs of R's diagonal folded
    into Q, giving W^T W = I for tall and W W^T = I for wide shapes.
    fan_uniform: U(-sqrt(6 / fan_in), +sqrt(6 / fan_in)).
    """
    rows, cols = shape
    scheme = InitScheme(scheme)
    if scheme is InitScheme.ORTHOGONAL:
        tall = rows >= cols
        gaussian = rng.standard_normal((rows, cols) if tall else (cols, rows))
        q, r = np.linalg.qr(gaussian)
        signs = np.sign(np.diag(r))
        signs[signs == 0] = 1.0
        q = q * signs
        return np.ascontiguousarray(q if tall else q.T)
    bound = np.sqrt(6.0 / cols)
    return rng.uniform(-bound, bound, size=(rows, cols))


@dataclass
class DenseLayer:
    weight: np.ndarray
    bias: np.ndarray
    activation: Activation = Activation.NONE
    slope: float = 0.01
    layer_norm: bool = False
    gain: Optional[np.ndarray] = None
    shift: Optional[np.ndarray] = None

    def __post_init__(self):
        self.activation = Activation(self.activation)
        if self.bias.shape != (self.weight.shape[0],):
            raise ShapeError(f"bias shape {self.bias.shape} does not match weight shape {self.weight.shape}")
        if self.layer_norm:
            if self.gain is None:
                self.gain = np.ones(self.out_dim)
            if self.shift is None:
                self.shift = np.zeros(self.out_dim)

    @property
    def in_dim(self) -> int:
        return int(self.weight.shape[1])

    @property
    def out_dim(self) -> int:
        return int(self.weight.shape[0])

    def parameters(self) -> Dict[str, np.ndarray]:
        params = {'weight': self.weight, 'bias': self.bias}
        if self.layer_norm:
            params['gain'] = self.gain
            params['shift'] = self.shift
        return params


@dataclass
class LayerCache:
    inputs: np.ndarray
    pre_activation: np.ndarray
    activated: np.ndarray
    normalized: Optional[np.ndarray] = None
    inv_std: Optional[np.ndarray] = None


@dataclass
class ForwardCache:
    layers: List[LayerCache]
    signature: Tuple[Tuple[int, int], ...]
    single: bool


@dataclass
class DenseNet:
    layers: List[DenseLayer] = field(default_factory=list)

    def __post_init__(self):
        for previous, current in zip(self.layers, self.layers[1:]):
            if previous.out_dim != current.in_dim:
                raise ShapeError(f"layer output {previous.out_dim} does not chain into input {current.in_dim}")

    @property
    def in_dim(self) -> int:
        return self.layers[0].in_dim

    @property
    def out_dim(self) -> int:
        return self.layers[-1].out_dim

    def signature(self) -> Tuple[Tuple[int, int], ...]:
        return tuple((layer.out_dim, layer.in_dim) for layer in self.layers)

    def parameters(self) -> Dict[str, np.ndarray]:
        """Live parameter arrays keyed '<layer index>.<name>'"""
        params: Dict[str, np.ndarray] = {}
        for index, layer in enumerate(self.layers):
            for name, value in layer.parameters().items():
                params[f"{index}.{name}"] = value
        return params

    def snapshot(self) -> Dict[str, np.ndarray]:
        return {name: value.copy() for name, value in self.parameters().items()}

    def forward(self, x: np.ndarray) -> Tuple[np.ndarray, ForwardCache]:
        """Run a vector (in,) or a batch (B, in) through the network"""
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == 1
        batch = x[None, :] if single else x
        if batch.ndim != 2 or batch.shape[1] != self.in_dim:
            raise ShapeError(f"network expects inputs of width {self.in_dim}, got shape {x.shape}")

        caches: List[LayerCache] = []
        out = batch
        for layer in self.layers:
            pre = out @ layer.weight.T + layer.bias
            if layer.activation is Activation.LEAKY_RELU:
                activated = np.where(pre > 0, pre, layer.slope * pre)
            elif layer.activation is Activation.SIGMOID:
                activated = sigmoid(pre)
            else:
                activated = pre
            cache = LayerCache(inputs=out, pre_activation=pre, activated=activated)
            if layer.layer_norm:
                mean = activated.mean(axis=1, keepdims=True)
                var = activated.var(axis=1, keepdims=True)
                # Exact standardization above eps; zero-variance rows map to the shift
                std = np.where(var > LAYER_NORM_EPS, np.sqrt(var), np.sqrt(var + LAYER_NORM_EPS))
                cache.inv_std = 1.0 / std
                cache.normalized = (activated - mean) * cache.inv_std
                out = layer.gain * cache.normalized + layer.shift
            else:
                out = activated
            caches.append(cache)

        result = out[0] if single else out
        return result, ForwardCache(caches, self.signature(), single)

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self.forward(x)[0]

    def backward(self, cache: ForwardCache, dy: np.ndarray) -> Tuple[Dict[str, np.ndarray], np.ndarray]:
        """
        Backpropagate ``dy`` through the pass recorded in ``cache``

        Returns:
            Tuple of (parameter gradients keyed like parameters(), input gradient)
        """
        if cache.signature != self.signature() or len(cache.layers) != len(self.layers):
            raise StateError("forward cache was recorded on a network with different shapes")
        grad = np.asarray(dy, dtype=np.float64)
        grad = grad[None, :] if cache.single else grad
        expected = (cache.layers[-1].activated.shape[0], self.out_dim)
        if grad.shape != expected:
            raise StateError(f"output gradient shape {grad.shape} does not match cached output {expected}")

        grads: Dict[str, np.ndarray] = {}
        for index in range(len(self.layers) - 1, -1, -1):
            layer = self.layers[index]
            lc = cache.layers[index]
            if layer.layer_norm:
                grads[f"{index}.gain"] = (grad * lc.normalized).sum(axis=0)
                grads[f"{index}.shift"] = grad.sum(axis=0)
                d_norm = grad * layer.gain
                width = d_norm.shape[1]
                grad = (lc.inv_std / width) * (
                    width * d_norm
                    - d_norm.sum(axis=1, keepdims=True)
                    - lc.normalized * (d_norm * lc.normalized).sum(axis=1, keepdims=True)
                )
            if layer.activation is Activation.LEAKY_RELU:
                grad = grad * np.where(lc.pre_activation > 0, 1.0, layer.slope)
            elif layer.activation is Activation.SIGMOID:
                grad = grad * lc.activated * (1.0 - lc.activated)
            grads[f"{index}.weight"] = grad.T @ lc.inputs
            grads[f"{index}.bias"] = grad.sum(axis=0)
            grad = grad @ layer.weight

        ordered = {name: grads[name] for name in self.parameters()}
        dx = grad[0] if cache.single else grad
        return ordered, dx


def build_dense_net(
    dims: Sequence[int],
    activations: Sequence[Activation],
    rng: np.random.Generator,
    scheme: InitScheme = InitScheme.FAN_UNIFORM,
    layer_norms: Optional[Sequence[bool]] = None,
    slope: float = 0.01,
) -> DenseNet:
    """Stack len(dims) - 1 layers with freshly initialized weights and zero biases"""
    if len(activations) != len(dims) - 1:
        raise ShapeError(f"{len(dims) - 1} layers need {len(dims) - 1} activations, got {len(activations)}")
    norms = list(layer_norms) if layer_norms is not None else [False] * len(activations)
    layers = []
    for in_dim, out_dim, activation, norm in zip(dims[:-1], dims[1:], activations, norms):
        layers.append(DenseLayer(
            weight=init_dense((out_dim, in_dim), scheme, rng),
            bias=np.zeros(out_dim),
            activation=activation,
            slope=slope,
            layer_norm=norm,
        ))
    return DenseNet(layers)


@dataclass
class AdamState:
    first: Dict[str, np.ndarray]
    second: Dict[str, np.ndarray]
    step_count: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params: Mapping[str, np.ndarray], **kwargs) -> 'AdamState':
        return cls(
            first={name: np.zeros_like(value) for name, value in params.items()},
            second={name: np.zeros_like(value) for name, value in params.items()},
            **kwargs,
        )


def _check_finite(name: str, grad: np.ndarray) -> None:
    if not np.all(np.isfinite(grad)):
        raise TrainingError(f"non-finite gradient for tensor '{name}'")


def adam_step(
    params: Mapping[str, np.ndarray],
    grads: Mapping[str, np.ndarray],
    state: AdamState,
    lr: float,
) -> None:
    """Bias-corrected Adam update applied to ``params`` in place"""
    for name, grad in grads.items():
        if name not in params or name not in state.first:
            raise ShapeError(f"gradient for unknown tensor '{name}'")
        if grad.shape != params[name].shape:
            raise ShapeError(f"gradient shape {grad.shape} for '{name}' does not match {params[name].shape}")
        _check_finite(name, grad)

    state.step_count += 1
    correction1 = 1.0 - state.beta1 ** state.step_count
    correction2 = 1.0 - state.beta2 ** state.step_count
    for name, grad in grads.items():
        m = state.first[name]
        v = state.second[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * grad
        v *= state.beta2
        v += (1.0 - state.beta2) * grad * grad
        params[name] -= lr * (m / correction1) / (np.sqrt(v / correction2) + state.eps)


class SparseRowAdam:
    """
    Lazy Adam over the rows of one embedding matrix

    Only rows present in a step's gradient have their moments and values
    updated; bias correction uses the optimizer's global step count.
    """

    def __init__(self, shape: Tuple[int, int], name: str, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.name = name
        self.first = np.zeros(shape)
        self.second = np.zeros(shape)
        self.step_count = 0
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps

    def step(self, matrix: np.ndarray, rows: np.ndarray, grads: np.ndarray, lr: float) -> None:
        """Update ``matrix[rows]`` with coalesced (unique-row) gradients"""
        if grads.shape != (len(rows), matrix.shape[1]):
            raise ShapeError(f"row gradients {grads.shape} do not fit {len(rows)} rows of '{self.name}'")
        _check_finite(self.name, grads)
        self.step_count += 1
        if len(rows) == 0:
            return
        correction1 = 1.0 - self.beta1 ** self.step_count
        correction2 = 1.0 - self.beta2 ** self.step_count
        m = self.beta1 * self.first[rows] + (1.0 - self.beta1) * grads
        v = self.beta2 * self.second[rows] + (1.0 - self.beta2) * grads * grads
        self.first[rows] = m
        self.second[rows] = v
        matrix[rows] -= lr * (m / correction1) / (np.sqrt(v / correction2) + self.eps)
