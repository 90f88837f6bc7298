"""Small dense feed-forward networks with exact reverse-mode gradients, and Adam.

All parameters of a :class:`DenseNet` live in one flat float64 vector.  The
layout is layer-major: for each layer in order, the weight matrix
(``out x in``, row-major) followed by its bias vector.  Layer weights and
biases are views into that vector, so updating ``net.params`` in place updates
the network.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

ACTIVATIONS = ("identity", "leaky_relu", "sigmoid")


@dataclass(frozen=True)
class LayerSpec:
    in_dim: int
    out_dim: int
    activation: str = "identity"
    alpha: float = 0.3  # leaky_relu slope, ignored otherwise

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.in_dim < 1 or self.out_dim < 1:
            raise ValueError("layer dimensions must be positive")

    @property
    def size(self) -> int:
        return self.out_dim * self.in_dim + self.out_dim


class DenseNet:
    """Composition of affine maps and elementwise activations.

    Inputs may carry any number of leading batch axes; the last axis is the
    feature axis.
    """

    def __init__(self, layers, params=None):
        layers = tuple(layers)
        if not layers:
            raise ValueError("need at least one layer")
        for a, b in zip(layers[:-1], layers[1:]):
            if a.out_dim != b.in_dim:
                raise ValueError(
                    f"incompatible layers: {a.out_dim} outputs feed {b.in_dim} inputs"
                )
        self.layers = layers
        n = sum(layer.size for layer in layers)
        if params is None:
            params = np.zeros(n)
        params = np.asarray(params, dtype=np.float64)
        if params.shape != (n,):
            raise ValueError(f"expected {n} parameters, got shape {params.shape}")
        if not np.all(np.isfinite(params)):
            raise ValueError("parameters must be finite")
        self.params = params.copy()

    @classmethod
    def build(cls, sizes, activation="leaky_relu", alpha=0.3,
              final_activation="identity", rng=None, zero_last=False):
        """Network with the given layer widths and Glorot-uniform weights.

        ``sizes`` lists input width, hidden widths, and output width.  Biases
        start at zero.  ``zero_last`` also zeroes the final layer's weights.
        """
        if len(sizes) < 2:
            raise ValueError("sizes needs at least input and output width")
        specs = []
        for i, (n_in, n_out) in enumerate(zip(sizes[:-1], sizes[1:])):
            last = i == len(sizes) - 2
            specs.append(LayerSpec(n_in, n_out,
                                   final_activation if last else activation, alpha))
        net = cls(specs)
        rng = np.random.default_rng() if rng is None else rng
        for i, (w, _) in enumerate(net.weights()):
            if zero_last and i == len(specs) - 1:
                continue
            s = np.sqrt(6.0 / (w.shape[0] + w.shape[1]))
            w[...] = rng.uniform(-s, s, size=w.shape)
        return net

    @property
    def input_dim(self) -> int:
        return self.layers[0].in_dim

    @property
    def output_dim(self) -> int:
        return self.layers[-1].out_dim

    @property
    def n_params(self) -> int:
        return self.params.size

    def weights(self):
        """List of ``(W, b)`` views into the flat parameter vector."""
        out = []
        offset = 0
        for layer in self.layers:
            nw = layer.out_dim * layer.in_dim
            w = self.params[offset:offset + nw].reshape(layer.out_dim, layer.in_dim)
            b = self.params[offset + nw:offset + layer.size]
            out.append((w, b))
            offset += layer.size
        return out

    def copy(self) -> "DenseNet":
        return DenseNet(self.layers, self.params)

    def __call__(self, x):
        return forward(self, x)


def _activate(layer, z):
    if layer.activation == "identity":
        return z
    if layer.activation == "leaky_relu":
        if 0.0 <= layer.alpha <= 1.0:
            return np.maximum(z, layer.alpha * z)
        return np.where(z > 0, z, layer.alpha * z)
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def _activation_grad(layer, z, a):
    if layer.activation == "identity":
        return None
    if layer.activation == "leaky_relu":
        return (z > 0) * (1.0 - layer.alpha) + layer.alpha
    return a * (1.0 - a)


def _check_input(net, x):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 0 or x.shape[-1] != net.input_dim:
        raise ValueError(
            f"input has trailing size {x.shape[-1] if x.ndim else None}, "
            f"network expects {net.input_dim}"
        )
    return x


def forward(net: DenseNet, x) -> np.ndarray:
    x = _check_input(net, x)
    a = x
    for layer, (w, b) in zip(net.layers, net.weights()):
        a = _activate(layer, a @ w.T + b)
    return a


def vjp(net: DenseNet, x, cotangent):
    """Reverse-mode product of ``cotangent`` with the network Jacobians.

    Returns ``(input_grad, param_grad)``.  ``input_grad`` has the shape of
    ``x``; ``param_grad`` is flat, in parameter order, and summed over any
    leading batch axes.
    """
    x = _check_input(net, x)
    cotangent = np.asarray(cotangent, dtype=np.float64)
    if cotangent.shape != x.shape[:-1] + (net.output_dim,):
        raise ValueError(
            f"cotangent shape {cotangent.shape} does not match output shape "
            f"{x.shape[:-1] + (net.output_dim,)}"
        )
    batch_shape = x.shape[:-1]
    a = x.reshape(-1, net.input_dim)
    ct = cotangent.reshape(-1, net.output_dim)

    pairs = net.weights()
    acts, pre = [a], []
    for layer, (w, b) in zip(net.layers, pairs):
        z = a @ w.T + b
        a = _activate(layer, z)
        pre.append(z)
        acts.append(a)

    grads = []
    delta = ct
    for i in range(len(net.layers) - 1, -1, -1):
        layer = net.layers[i]
        dz = _activation_grad(layer, pre[i], acts[i + 1])
        if dz is not None:
            delta = delta * dz
        grads.append((delta.sum(axis=0), delta.T @ acts[i]))
        delta = delta @ pairs[i][0]

    param_grad = np.concatenate(
        [np.concatenate([gw.ravel(), gb]) for gb, gw in reversed(grads)]
    )
    return delta.reshape(batch_shape + (net.input_dim,)), param_grad


@dataclass
class AdamState:
    size: int
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step_count: int = 0
    first_moment: np.ndarray = field(default=None, repr=False)
    second_moment: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if self.first_moment is None:
            self.first_moment = np.zeros(self.size)
        if self.second_moment is None:
            self.second_moment = np.zeros(self.size)


def adam_step(params, grad, state: AdamState, lr: float) -> np.ndarray:
    """One bias-corrected Adam descent step; returns the new parameters.

    Advances ``state`` in place.  Non-finite gradients raise
    ``FloatingPointError`` and leave both ``state`` and ``params`` untouched.
    """
    params = np.asarray(params, dtype=np.float64)
    grad = np.asarray(grad, dtype=np.float64)
    if params.shape != (state.size,) or grad.shape != (state.size,):
        raise ValueError("params, grad and Adam state must have matching lengths")
    if not np.all(np.isfinite(grad)):
        raise FloatingPointError("non-finite gradient passed to adam_step")
    t = state.step_count + 1
    m = state.beta1 * state.first_moment + (1.0 - state.beta1) * grad
    v = state.beta2 * state.second_moment + (1.0 - state.beta2) * grad * grad
    m_hat = m / (1.0 - state.beta1 ** t)
    v_hat = v / (1.0 - state.beta2 ** t)
    state.first_moment, state.second_moment, state.step_count = m, v, t
    return params - lr * m_hat / (np.sqrt(v_hat) + state.eps)
