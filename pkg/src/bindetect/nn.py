"""Feedforward classifier: dropout -> dense -> PReLU, twice, then dropout ->
dense -> sigmoid. Forward pass, cross-entropy, backprop and Adam in numpy.

Shapes follow the row-major batch convention: ``X`` is (n, d_in) and each
weight matrix ``W[l]`` is (d_out, d_in), so ``z = d @ W.T + b``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

log = logging.getLogger(__name__)

DEFAULT_LAYERS = (1024, 1024, 1024, 1)
PRELU_INIT = 0.25
CLAMP = 1e-7


@dataclass
class MlpModel:
    layer_sizes: tuple[int, ...]
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    prelu_slopes: list[np.ndarray]
    keep_prob: float = 0.8
    rng_seed: int = 0

    @property
    def n_inputs(self) -> int:
        return self.layer_sizes[0]

    def params(self) -> dict[str, np.ndarray]:
        """Name -> array view of every trainable parameter, in a fixed order."""
        out = {}
        for i, (w, b) in enumerate(zip(self.weights, self.biases), start=1):
            out[f"W{i}"] = w
            out[f"b{i}"] = b
        for i, a in enumerate(self.prelu_slopes, start=1):
            out[f"a{i}"] = a
        return out

    def all_finite(self) -> bool:
        return all(np.isfinite(p).all() for p in self.params().values())


@dataclass
class Cache:
    masks: list[np.ndarray]
    inputs: list[np.ndarray]   # d(l): masked, rescaled layer inputs
    pre: list[np.ndarray]      # z(l)
    output: np.ndarray


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


@dataclass
class TrainResult:
    model: MlpModel
    loss_history: list[float]
    epochs_run: int
    stopped_early: bool


def init_glorot(layer_sizes=DEFAULT_LAYERS, seed=0, keep_prob=0.8) -> MlpModel:
    """Gaussian weights with variance 2/(fan_in + fan_out); zero biases."""
    if any(int(s) <= 0 for s in layer_sizes) or len(layer_sizes) < 2:
        raise ValueError(f"layer sizes must be positive, got {layer_sizes}")
    if not 0.0 < keep_prob <= 1.0:
        raise ValueError(f"keep_prob must lie in (0, 1], got {keep_prob}")
    rng = np.random.default_rng([seed, 0])
    sizes = tuple(int(s) for s in layer_sizes)
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        std = np.sqrt(2.0 / (fan_in + fan_out))
        weights.append(rng.normal(0.0, std, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    slopes = [np.full(s, PRELU_INIT) for s in sizes[1:-1]]
    return MlpModel(sizes, weights, biases, slopes, keep_prob=float(keep_prob), rng_seed=seed)


def sigmoid(z):
    # split by sign so neither branch overflows
    out = np.empty_like(z, dtype=np.float64)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


_MIN_ROWS = 8


def _rows_matmul(A, B):
    """``A @ B`` whose rows do not depend on how many other rows ride along.

    OpenBLAS sends very short batches through different kernels than long
    ones, so a row's result would change with batch size; pad to a floor.
    """
    n = A.shape[0]
    if n >= _MIN_ROWS:
        return A @ B
    pad = np.zeros((_MIN_ROWS, A.shape[1]))
    pad[:n] = A
    return (pad @ B)[:n]


def prelu(z, a):
    return np.where(z < 0, a * z, z)


def sample_masks(model: MlpModel, n: int, rng) -> list[np.ndarray]:
    """Bernoulli(keep_prob) masks for each dropout site, pre-scaled by 1/keep_prob."""
    h = model.keep_prob
    return [(rng.random((n, d)) < h) / h for d in model.layer_sizes[:-1]]


def forward(model: MlpModel, X, training=False, rng=None, masks=None):
    """Return ``(y_star, cache)`` with ``y_star`` of shape (n,).

    In training mode each layer input is multiplied by an inverted-dropout
    mask (kept units scaled by 1/keep_prob); inference applies no mask.
    Pass ``masks`` to replay a specific draw.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != model.n_inputs:
        raise ValueError(f"expected input of shape (n, {model.n_inputs}), got {X.shape}")
    n = X.shape[0]
    if masks is None and training and model.keep_prob < 1.0:
        if rng is None:
            raise ValueError("training mode needs an rng to draw dropout masks")
        masks = sample_masks(model, n, rng)
    inputs, pre = [], []
    y = X
    n_layers = len(model.weights)
    for l in range(n_layers):
        d = y * masks[l] if masks is not None else y
        z = _rows_matmul(d, model.weights[l].T) + model.biases[l]
        inputs.append(d)
        pre.append(z)
        y = prelu(z, model.prelu_slopes[l]) if l < n_layers - 1 else sigmoid(z)
    y_star = y[:, 0]
    return y_star, Cache(masks or [], inputs, pre, y_star)


def predict(model: MlpModel, X) -> np.ndarray:
    return forward(model, X, training=False)[0]


def loss(y_star, y_hat) -> float:
    """Summed binary cross-entropy (natural log) with outputs clamped to [1e-7, 1-1e-7]."""
    y_star = np.clip(np.asarray(y_star, dtype=np.float64), CLAMP, 1.0 - CLAMP)
    y_hat = np.asarray(y_hat, dtype=np.float64)
    if y_star.shape != y_hat.shape:
        raise ValueError("prediction and label lengths differ")
    return float(-np.sum(y_hat * np.log(y_star) + (1.0 - y_hat) * np.log(1.0 - y_star)))


def backward(model: MlpModel, y_hat, cache: Cache) -> dict[str, np.ndarray]:
    """Gradients of the summed cross-entropy w.r.t. every parameter.

    The sigmoid/cross-entropy pair gives ``dL/dz3 = y* - y_hat`` directly;
    the output clamp only guards the reported loss value.
    """
    y_hat = np.asarray(y_hat, dtype=np.float64)
    g = (cache.output - y_hat)[:, None]
    grads = {}
    n_layers = len(model.weights)
    for l in reversed(range(n_layers)):
        grads[f"W{l + 1}"] = g.T @ cache.inputs[l]
        grads[f"b{l + 1}"] = g.sum(axis=0)
        if l == 0:
            break
        dy = _rows_matmul(g, model.weights[l])
        if cache.masks:
            dy = dy * cache.masks[l]
        z = cache.pre[l - 1]
        neg = z < 0
        grads[f"a{l}"] = np.sum(np.where(neg, dy * z, 0.0), axis=0)
        g = np.where(neg, model.prelu_slopes[l - 1] * dy, dy)
    return grads


def adam_step(model: MlpModel, state: AdamState, grads) -> tuple[MlpModel, AdamState]:
    """One bias-corrected Adam update, applied in place."""
    state.t += 1
    bc1 = 1.0 - state.beta1 ** state.t
    bc2 = 1.0 - state.beta2 ** state.t
    for name, p in model.params().items():
        g = grads[name]
        if g.shape != p.shape:
            raise ValueError(f"gradient for {name} has shape {g.shape}, expected {p.shape}")
        if name not in state.m:
            state.m[name] = np.zeros_like(p)
            state.v[name] = np.zeros_like(p)
        m, v = state.m[name], state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        p -= state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
    return model, state


def train(model: MlpModel, X, y, epochs=200, stop_train_error=0.02, batch_size=256,
          seed=0, lr=1e-3, callback=None) -> TrainResult:
    """Minibatch Adam on summed cross-entropy.

    Stops after ``epochs`` or once the epoch's mean per-sample training loss
    (measured on the dropout-perturbed batches as they are trained) falls
    below ``stop_train_error``.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if len(X) == 0:
        raise ValueError("empty training set")
    if not np.isin(y, (0.0, 1.0)).all():
        raise ValueError("labels must be 0 or 1")
    if len(np.unique(y)) < 2:
        raise ValueError("training data contains a single class; need both benign and malware")

    rng = np.random.default_rng([seed, 1])
    state = AdamState(lr=lr)
    history = []
    stopped = False
    n = len(X)
    for epoch in range(epochs):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, batch_size):
            idx = order[start:start + batch_size]
            y_star, cache = forward(model, X[idx], training=True, rng=rng)
            total += loss(y_star, y[idx])
            adam_step(model, state, backward(model, y[idx], cache))
            if not model.all_finite():
                raise FloatingPointError(f"non-finite parameter after step {state.t}")
        mean = total / n
        history.append(mean)
        log.debug("epoch %d mean loss %.6f", epoch + 1, mean)
        if callback is not None:
            callback(epoch, mean)
        if mean < stop_train_error:
            stopped = True
            break
    return TrainResult(model, history, len(history), stopped)
