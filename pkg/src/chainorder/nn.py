"""Minimal dense-network substrate: layers, dropout, ADAM, gradient checking.

Everything runs in double precision on plain numpy arrays. Forward passes
accept a single vector or a stack of row vectors and backward passes mirror
whatever shape the forward saw. There is no autograd; each operation knows
its own derivative.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

ACTIVATIONS = ("identity", "relu", "sigmoid")


def xavier_uniform(in_dim: int, out_dim: int, rng: np.random.Generator) -> np.ndarray:
    limit = np.sqrt(6.0 / (in_dim + out_dim))
    return rng.uniform(-limit, limit, size=(out_dim, in_dim))


class DenseLayer:
    """Fully connected layer: activation(W x + b)."""

    def __init__(self, weights, bias, activation: str):
        weights = np.array(weights, dtype=float)
        bias = np.array(bias, dtype=float)
        if activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {activation!r}")
        if weights.ndim != 2:
            raise ValueError("weights must be a 2-D (out x in) matrix")
        if bias.shape != (weights.shape[0],):
            raise ValueError(
                f"bias shape {bias.shape} inconsistent with {weights.shape[0]} outputs"
            )
        self.weights = weights
        self.bias = bias
        self.activation = activation

    @property
    def in_dim(self) -> int:
        return self.weights.shape[1]

    @property
    def out_dim(self) -> int:
        return self.weights.shape[0]

    @classmethod
    def init(cls, in_dim: int, out_dim: int, activation: str, rng: np.random.Generator):
        """Xavier-uniform weights, zero bias."""
        return cls(xavier_uniform(in_dim, out_dim, rng), np.zeros(out_dim), activation)

    def activate(self, z: np.ndarray) -> np.ndarray:
        if self.activation == "identity":
            return z
        if self.activation == "relu":
            return np.maximum(z, 0.0)
        # numerically stable sigmoid, output strictly in (0, 1)
        out = np.empty_like(z)
        pos = z >= 0
        out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
        ez = np.exp(z[~pos])
        out[~pos] = ez / (1.0 + ez)
        return out

    def activation_grad(self, z: np.ndarray, a: np.ndarray) -> np.ndarray:
        """d activation / d z, using the cached output `a` where cheaper."""
        if self.activation == "identity":
            return np.ones_like(z)
        if self.activation == "relu":
            return (z > 0).astype(float)
        return a * (1.0 - a)


class Mlp:
    """A stack of DenseLayers with inverted dropout on hidden activations.

    The final layer's output is never dropped; in eval mode the whole forward
    pass is deterministic and needs no rescaling.
    """

    def __init__(self, layers, dropout_rate: float = 0.2):
        layers = list(layers)
        if not layers:
            raise ValueError("Mlp needs at least one layer")
        for a, b in zip(layers, layers[1:]):
            if a.out_dim != b.in_dim:
                raise ValueError(
                    f"layer dims do not chain: {a.out_dim} -> {b.in_dim}"
                )
        if not 0.0 <= dropout_rate < 1.0:
            raise ValueError("dropout_rate must lie in [0, 1)")
        self.layers = layers
        self.dropout_rate = float(dropout_rate)

    @property
    def in_dim(self) -> int:
        return self.layers[0].in_dim

    @property
    def out_dim(self) -> int:
        return self.layers[-1].out_dim

    @classmethod
    def build(cls, sizes, activations, dropout_rate: float, rng: np.random.Generator):
        """Construct from a size chain [d0, d1, ..., dk] and one activation per layer."""
        sizes = list(sizes)
        activations = list(activations)
        if len(activations) != len(sizes) - 1:
            raise ValueError("need one activation per layer")
        layers = [
            DenseLayer.init(sizes[i], sizes[i + 1], activations[i], rng)
            for i in range(len(sizes) - 1)
        ]
        return cls(layers, dropout_rate)


@dataclass
class MlpCache:
    """Activation record from one mlp_forward call, consumed by mlp_backward."""

    inputs: list        # per layer: input rows (B, in_dim)
    pre_acts: list      # per layer: z = x W^T + b
    outputs: list       # per layer: activation(z), before dropout
    masks: list         # per hidden layer: keep mask or None
    mode: str
    squeezed: bool      # forward saw a single vector


def mlp_forward(net: Mlp, x, mode: str = "eval", rng: np.random.Generator | None = None):
    """Run the network; returns (output, cache).

    `x` may be a vector (in_dim,) or rows (B, in_dim). In train mode hidden
    activations get inverted dropout with the net's rate, which requires an rng.
    """
    if mode not in ("train", "eval"):
        raise ValueError(f"unknown mode {mode!r}")
    x = np.asarray(x, dtype=float)
    squeezed = x.ndim == 1
    a = x[None, :] if squeezed else x
    if a.ndim != 2 or a.shape[1] != net.in_dim:
        raise ValueError(f"input of dim {a.shape[-1]} fed to net expecting {net.in_dim}")
    dropping = mode == "train" and net.dropout_rate > 0.0
    if dropping and rng is None:
        raise ValueError("train mode with dropout needs an rng")

    inputs, pre_acts, outputs, masks = [], [], [], []
    last = len(net.layers) - 1
    for i, layer in enumerate(net.layers):
        z = a @ layer.weights.T + layer.bias
        h = layer.activate(z)
        inputs.append(a)
        pre_acts.append(z)
        outputs.append(h)
        if dropping and i < last:
            keep = rng.random(h.shape) >= net.dropout_rate
            masks.append(keep)
            a = h * keep / (1.0 - net.dropout_rate)
        else:
            masks.append(None)
            a = h
    y = a[0] if squeezed else a
    return y, MlpCache(inputs, pre_acts, outputs, masks, mode, squeezed)


def mlp_backward(net: Mlp, cache: MlpCache, dy):
    """Backpropagate an upstream gradient dy through a cached forward pass.

    Returns (param_grads, dx) where param_grads is a list of (dW, db) per
    layer and dx is the gradient with respect to the forward input.
    """
    if len(cache.inputs) != len(net.layers):
        raise ValueError("cache does not match this network (layer count differs)")
    dy = np.asarray(dy, dtype=float)
    d = dy[None, :] if cache.squeezed else dy
    if d.shape != cache.outputs[-1].shape:
        raise ValueError(
            f"upstream gradient shape {d.shape} does not match cached output "
            f"{cache.outputs[-1].shape}"
        )
    param_grads = [None] * len(net.layers)
    for i in range(len(net.layers) - 1, -1, -1):
        layer = net.layers[i]
        if cache.inputs[i].shape[1] != layer.in_dim:
            raise ValueError("cache does not match this network (layer shape differs)")
        if cache.masks[i] is not None:
            d = d * cache.masks[i] / (1.0 - net.dropout_rate)
        dz = d * layer.activation_grad(cache.pre_acts[i], cache.outputs[i])
        dw = dz.T @ cache.inputs[i]
        db = dz.sum(axis=0)
        param_grads[i] = (dw, db)
        d = dz @ layer.weights
    dx = d[0] if cache.squeezed else d
    return param_grads, dx


@dataclass
class AdamState:
    """Moment estimates and hyperparameters for one ADAM-tracked parameter array."""

    first_moment: np.ndarray
    second_moment: np.ndarray
    step_count: int = 0
    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    @classmethod
    def fresh(cls, n_params: int, lr: float = 0.001, beta1: float = 0.9,
              beta2: float = 0.999, epsilon: float = 1e-8):
        return cls(np.zeros(n_params), np.zeros(n_params), 0, lr, beta1, beta2, epsilon)


def adam_step(params: np.ndarray, grads: np.ndarray, state: AdamState) -> np.ndarray:
    """One bias-corrected ADAM descent step; mutates `state`, returns new params."""
    params = np.asarray(params, dtype=float)
    grads = np.asarray(grads, dtype=float)
    if params.shape != grads.shape or params.shape != state.first_moment.shape:
        raise ValueError(
            f"shape mismatch: params {params.shape}, grads {grads.shape}, "
            f"moments {state.first_moment.shape}"
        )
    state.step_count += 1
    t = state.step_count
    state.first_moment = state.beta1 * state.first_moment + (1.0 - state.beta1) * grads
    state.second_moment = state.beta2 * state.second_moment + (1.0 - state.beta2) * grads ** 2
    m_hat = state.first_moment / (1.0 - state.beta1 ** t)
    v_hat = state.second_moment / (1.0 - state.beta2 ** t)
    return params - state.lr * m_hat / (np.sqrt(v_hat) + state.epsilon)


def grad_check(f, params: np.ndarray, eps: float = 1e-5) -> float:
    """Compare f's analytic gradient against central finite differences.

    `f(params)` must return (loss, grad). Returns the maximum over parameters
    of |analytic - numeric| / max(|analytic|, |numeric|, 1e-8).
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    params = np.asarray(params, dtype=float)
    loss, grad = f(params)
    if not np.isfinite(loss):
        raise ValueError("loss is not finite at the given parameters")
    grad = np.asarray(grad, dtype=float)
    if grad.shape != params.shape:
        raise ValueError("analytic gradient shape does not match parameters")
    worst = 0.0
    for i in range(params.size):
        bumped = params.copy()
        bumped.flat[i] += eps
        hi, _ = f(bumped)
        bumped.flat[i] -= 2.0 * eps
        lo, _ = f(bumped)
        if not (np.isfinite(hi) and np.isfinite(lo)):
            raise ValueError(f"non-finite loss while perturbing parameter {i}")
        numeric = (hi - lo) / (2.0 * eps)
        analytic = grad.flat[i]
        rel = abs(analytic - numeric) / max(abs(analytic), abs(numeric), 1e-8)
        worst = max(worst, rel)
    return worst
