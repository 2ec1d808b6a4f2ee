"""Minimal dense-network machinery for the denoiser.

Plain numpy: dense layers, LeakyReLU, batch normalization with running
statistics, MSE loss, exact reverse-mode gradients and Adam. 2-D float64
batches throughout (rows = samples, columns = features). Nothing here knows
about diffusion; the layer set is exactly what the encoder-decoder denoiser
needs.
"""

from __future__ import annotations

import numpy as np

from .exceptions import (
    BatchTooSmallError,
    NoCachedForwardError,
    ShapeMismatchError,
)

BN_EPS = 1e-5
BN_MOMENTUM = 0.9


def leaky_relu(x: np.ndarray, slope: float) -> np.ndarray:
    """y = x for x >= 0 else slope * x."""
    x = np.asarray(x, dtype=np.float64)
    return np.where(x >= 0.0, x, slope * x)


def leaky_relu_grad(x: np.ndarray, slope: float) -> np.ndarray:
    """Derivative wrt x; 1 at x == 0 by convention."""
    x = np.asarray(x, dtype=np.float64)
    return np.where(x >= 0.0, 1.0, slope)


class DenseLayer:
    """Affine map y = x W^T + b with weights of shape (out, in)."""

    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator):
        # Uniform +/- sqrt(6/(fan_in+fan_out)): scale-stable under LeakyReLU depth.
        bound = np.sqrt(6.0 / (n_in + n_out))
        self.weights = rng.uniform(-bound, bound, size=(n_out, n_in))
        self.biases = np.zeros(n_out)
        self.grad_weights = np.zeros_like(self.weights)
        self.grad_biases = np.zeros_like(self.biases)
        self._x = None

    @property
    def n_in(self) -> int:
        return self.weights.shape[1]

    @property
    def n_out(self) -> int:
        return self.weights.shape[0]

    def forward(self, x: np.ndarray, train: bool) -> np.ndarray:
        if x.shape[1] != self.n_in:
            raise ShapeMismatchError(f"dense layer expects {self.n_in} columns, got {x.shape[1]}")
        self._x = x if train else None
        return x @ self.weights.T + self.biases

    def backward(self, grad: np.ndarray) -> np.ndarray:
        if self._x is None:
            raise NoCachedForwardError("dense backward without train-mode forward")
        self.grad_weights = grad.T @ self._x
        self.grad_biases = grad.sum(axis=0)
        return grad @ self.weights

    def parameters(self):
        return [self.weights, self.biases]

    def gradients(self):
        return [self.grad_weights, self.grad_biases]

    def state(self) -> dict:
        return {"kind": "dense", "weights": _pack(self.weights), "biases": _pack(self.biases)}


class LeakyReluLayer:
    def __init__(self, slope: float = 0.2):
        if not 0.0 < slope < 1.0:
            raise ShapeMismatchError(f"leaky slope must be in (0,1), got {slope}")
        self.slope = slope
        self._x = None

    def forward(self, x: np.ndarray, train: bool) -> np.ndarray:
        self._x = x if train else None
        return leaky_relu(x, self.slope)

    def backward(self, grad: np.ndarray) -> np.ndarray:
        if self._x is None:
            raise NoCachedForwardError("activation backward without train-mode forward")
        return grad * leaky_relu_grad(self._x, self.slope)

    def parameters(self):
        return []

    def gradients(self):
        return []

    def state(self) -> dict:
        return {"kind": "leaky_relu", "slope": self.slope}


class BatchNormLayer:
    """Standard batch norm: batch statistics while training, running
    statistics (momentum 0.9) at inference."""

    def __init__(self, n_units: int):
        self.gamma = np.ones(n_units)
        self.beta = np.zeros(n_units)
        self.running_mean = np.zeros(n_units)
        self.running_var = np.ones(n_units)
        self.grad_gamma = np.zeros_like(self.gamma)
        self.grad_beta = np.zeros_like(self.beta)
        self._cache = None

    def forward(self, x: np.ndarray, train: bool) -> np.ndarray:
        if x.shape[1] != self.gamma.shape[0]:
            raise ShapeMismatchError(
                f"batch norm expects {self.gamma.shape[0]} columns, got {x.shape[1]}"
            )
        if train:
            if x.shape[0] < 2:
                raise BatchTooSmallError("batch norm needs >= 2 rows in train mode")
            mean = x.mean(axis=0)
            var = x.var(axis=0)
            inv_std = 1.0 / np.sqrt(var + BN_EPS)
            x_hat = (x - mean) * inv_std
            self.running_mean = BN_MOMENTUM * self.running_mean + (1 - BN_MOMENTUM) * mean
            self.running_var = BN_MOMENTUM * self.running_var + (1 - BN_MOMENTUM) * var
            self._cache = (x_hat, inv_std)
        else:
            self._cache = None
            x_hat = (x - self.running_mean) / np.sqrt(self.running_var + BN_EPS)
        return self.gamma * x_hat + self.beta

    def backward(self, grad: np.ndarray) -> np.ndarray:
        if self._cache is None:
            raise NoCachedForwardError("batch norm backward without train-mode forward")
        x_hat, inv_std = self._cache
        n = grad.shape[0]
        self.grad_gamma = (grad * x_hat).sum(axis=0)
        self.grad_beta = grad.sum(axis=0)
        dxhat = grad * self.gamma
        # Exact gradient through the batch mean and variance.
        return (inv_std / n) * (
            n * dxhat - dxhat.sum(axis=0) - x_hat * (dxhat * x_hat).sum(axis=0)
        )

    def parameters(self):
        return [self.gamma, self.beta]

    def gradients(self):
        return [self.grad_gamma, self.grad_beta]

    def state(self) -> dict:
        return {
            "kind": "batch_norm",
            "gamma": _pack(self.gamma),
            "beta": _pack(self.beta),
            "running_mean": _pack(self.running_mean),
            "running_var": _pack(self.running_var),
        }


class Network:
    """A feed-forward stack of layers sharing one forward/backward cache."""

    def __init__(self, layers: list):
        self.layers = layers
        self._forward_mode = None

    @property
    def n_in(self) -> int:
        return self.layers[0].n_in

    @property
    def n_out(self) -> int:
        return self.layers[-1].n_out

    def forward(self, batch: np.ndarray, train: bool = False) -> np.ndarray:
        batch = np.asarray(batch, dtype=np.float64)
        if batch.ndim != 2:
            raise ShapeMismatchError(f"expected a 2-D batch, got shape {batch.shape}")
        if train and batch.shape[0] < 2:
            raise BatchTooSmallError("train-mode forward needs >= 2 rows")
        out = batch
        for layer in self.layers:
            out = layer.forward(out, train)
        self._forward_mode = "train" if train else "infer"
        return out

    def backward(self, loss_grad: np.ndarray) -> list[np.ndarray]:
        """Propagate d(loss)/d(output); returns the parameter gradients."""
        if self._forward_mode != "train":
            raise NoCachedForwardError("backward requires a preceding train-mode forward")
        grad = np.asarray(loss_grad, dtype=np.float64)
        for layer in reversed(self.layers):
            grad = layer.backward(grad)
        return self.gradients()

    def parameters(self) -> list[np.ndarray]:
        return [p for layer in self.layers for p in layer.parameters()]

    def gradients(self) -> list[np.ndarray]:
        return [g for layer in self.layers for g in layer.gradients()]

    def set_parameters(self, params: list[np.ndarray]) -> None:
        own = self.parameters()
        if len(own) != len(params):
            raise ShapeMismatchError("parameter list length mismatch")
        for dst, src in zip(own, params):
            if dst.shape != src.shape:
                raise ShapeMismatchError("parameter shape mismatch")
            dst[...] = src

    def snapshot(self) -> list[np.ndarray]:
        """Copies of parameters plus batch-norm running stats."""
        state = [p.copy() for p in self.parameters()]
        for layer in self.layers:
            if isinstance(layer, BatchNormLayer):
                state += [layer.running_mean.copy(), layer.running_var.copy()]
        return state

    def restore(self, state: list[np.ndarray]) -> None:
        n_params = len(self.parameters())
        self.set_parameters(state[:n_params])
        extra = iter(state[n_params:])
        for layer in self.layers:
            if isinstance(layer, BatchNormLayer):
                layer.running_mean = next(extra).copy()
                layer.running_var = next(extra).copy()


def build_mlp(n_in: int, hidden_widths, n_out: int, slope: float,
              rng: np.random.Generator) -> Network:
    """Dense -> BatchNorm -> LeakyReLU per hidden width, then a linear head."""
    layers: list = []
    width_in = n_in
    for width in hidden_widths:
        layers.append(DenseLayer(width_in, width, rng))
        layers.append(BatchNormLayer(width))
        layers.append(LeakyReluLayer(slope))
        width_in = width
    layers.append(DenseLayer(width_in, n_out, rng))
    return Network(layers)


def mse_loss(pred: np.ndarray, target: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean squared error over all entries, with its gradient wrt pred."""
    if pred.shape != target.shape:
        raise ShapeMismatchError(f"prediction {pred.shape} vs target {target.shape}")
    diff = pred - target
    loss = float(np.mean(diff * diff))
    return loss, (2.0 / diff.size) * diff


class Adam:
    """Bias-corrected adaptive moment optimizer (beta1=0.9, beta2=0.999)."""

    def __init__(self, params: list[np.ndarray], lr: float,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]

    def step(self, params: list[np.ndarray], grads: list[np.ndarray]) -> None:
        """Update params in place from grads."""
        if len(params) != len(self.m) or len(grads) != len(self.m):
            raise ShapeMismatchError("optimizer state does not match parameter list")
        self.step_count += 1
        b1c = 1.0 - self.beta1 ** self.step_count
        b2c = 1.0 - self.beta2 ** self.step_count
        for p, g, m, v in zip(params, grads, self.m, self.v):
            if p.shape != g.shape or p.shape != m.shape:
                raise ShapeMismatchError("gradient shape does not match parameter")
            m[...] = self.beta1 * m + (1 - self.beta1) * g
            v[...] = self.beta2 * v + (1 - self.beta2) * (g * g)
            p -= self.lr * (m / b1c) / (np.sqrt(v / b2c) + self.eps)


def _pack(arr: np.ndarray) -> dict:
    return {"shape": list(arr.shape), "data": [float(v) for v in arr.ravel()]}


def _unpack(obj: dict) -> np.ndarray:
    return np.array(obj["data"], dtype=np.float64).reshape(obj["shape"])


def network_state(net: Network) -> list[dict]:
    return [layer.state() for layer in net.layers]


def network_from_state(states: list[dict]) -> Network:
    layers: list = []
    for s in states:
        kind = s["kind"]
        if kind == "dense":
            w = _unpack(s["weights"])
            layer = DenseLayer(w.shape[1], w.shape[0], np.random.default_rng(0))
            layer.weights = w
            layer.biases = _unpack(s["biases"])
        elif kind == "batch_norm":
            layer = BatchNormLayer(len(s["gamma"]["data"]))
            layer.gamma = _unpack(s["gamma"])
            layer.beta = _unpack(s["beta"])
            layer.running_mean = _unpack(s["running_mean"])
            layer.running_var = _unpack(s["running_var"])
        elif kind == "leaky_relu":
            layer = LeakyReluLayer(s["slope"])
        else:
            raise ShapeMismatchError(f"unknown layer kind {kind!r} in checkpoint")
        layers.append(layer)
    return Network(layers)
