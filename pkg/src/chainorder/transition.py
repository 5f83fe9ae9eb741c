"""Gated neural transition operator with exact conditional log-densities.

A single network reads the current state, produces a per-coordinate gate U,
a candidate update, and (for continuous states) a log-variance, and emits a
proper conditional distribution over the next state:

  continuous: next ~ Normal(m, diag v),  m = U * cand + (1 - U) * s
  binary:     next_j ~ Bernoulli(f_j),   f = U * sigmoid(cand) + (1 - U) * clamp(s)

Both heads are fully normalized, so log-likelihoods of different states are
directly comparable and sampling needs no correction term.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .nn import Mlp, mlp_backward, mlp_forward

KINDS = ("continuous", "binary")

LOG_VAR_MIN = -10.0
LOG_VAR_MAX = 10.0
BINARY_EPS = 1e-4  # keeps gated previous-state probabilities off {0, 1}
SIGMOID_EPS = 1e-12  # float64 sigmoid saturates to exactly 0/1 beyond |z| ~ 37
LOG_2PI = float(np.log(2.0 * np.pi))


def check_binary(values: np.ndarray) -> None:
    vals = np.asarray(values)
    if not np.all((vals == 0.0) | (vals == 1.0)):
        raise ValueError("binary state must have every component in {0, 1}")


class GatedTransitionNet:
    """Encoder plus gate/candidate/variance heads over a fixed state dimension."""

    def __init__(self, encoder: Mlp, gate_head: Mlp, candidate_head: Mlp,
                 variance_head: Mlp | None, kind: str, dropout_rate: float = 0.2):
        if kind not in KINDS:
            raise ValueError(f"unknown state kind {kind!r}")
        p = encoder.in_dim
        hidden = encoder.out_dim
        heads = {"gate_head": gate_head, "candidate_head": candidate_head}
        if kind == "continuous":
            if variance_head is None:
                raise ValueError("continuous operator needs a variance head")
            heads["variance_head"] = variance_head
        elif variance_head is not None:
            raise ValueError("binary operator must not carry a variance head")
        for name, head in heads.items():
            if head.in_dim != hidden or head.out_dim != p:
                raise ValueError(f"{name} must map hidden ({hidden}) to state dim ({p})")
        if gate_head.layers[-1].activation != "sigmoid":
            raise ValueError("gate head must end in a sigmoid layer")
        if candidate_head.layers[-1].activation != "identity":
            raise ValueError("candidate head must end in an identity layer")
        if variance_head is not None and variance_head.layers[-1].activation != "identity":
            raise ValueError("variance head must end in an identity layer")
        if not 0.0 <= dropout_rate < 1.0:
            raise ValueError("dropout_rate must lie in [0, 1)")
        self.encoder = encoder
        self.gate_head = gate_head
        self.candidate_head = candidate_head
        self.variance_head = variance_head
        self.kind = kind
        self.dropout_rate = float(dropout_rate)
        # provenance metadata, persisted by the model file
        self.seed = 0
        self.train_steps = 0

    @property
    def state_dim(self) -> int:
        return self.encoder.in_dim

    @property
    def hidden_dim(self) -> int:
        return self.encoder.out_dim

    @classmethod
    def build(cls, state_dim: int, hidden_sizes, kind: str,
              dropout_rate: float = 0.2, rng: np.random.Generator | None = None):
        """Random net: relu encoder state_dim -> hidden_sizes, one linear layer per head."""
        if rng is None:
            raise ValueError("build needs an rng for weight initialization")
        hidden_sizes = [int(h) for h in hidden_sizes]
        if not hidden_sizes:
            raise ValueError("need at least one hidden layer size")
        enc_sizes = [int(state_dim)] + hidden_sizes
        encoder = Mlp.build(enc_sizes, ["relu"] * len(hidden_sizes), dropout_rate, rng)
        hidden = hidden_sizes[-1]
        gate = Mlp.build([hidden, state_dim], ["sigmoid"], dropout_rate, rng)
        cand = Mlp.build([hidden, state_dim], ["identity"], dropout_rate, rng)
        var = None
        if kind == "continuous":
            var = Mlp.build([hidden, state_dim], ["identity"], dropout_rate, rng)
        return cls(encoder, gate, cand, var, kind, dropout_rate)

    def _mlps(self):
        mlps = [self.encoder, self.gate_head, self.candidate_head]
        if self.variance_head is not None:
            mlps.append(self.variance_head)
        return mlps

    @property
    def n_params(self) -> int:
        return sum(l.weights.size + l.bias.size for m in self._mlps() for l in m.layers)

    def flat_params(self) -> np.ndarray:
        """All parameters as one vector: encoder, gate, candidate, variance;
        within a layer row-major weights then bias."""
        chunks = []
        for mlp in self._mlps():
            for layer in mlp.layers:
                chunks.append(layer.weights.ravel())
                chunks.append(layer.bias)
        return np.concatenate(chunks)

    def set_flat_params(self, theta: np.ndarray) -> None:
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.n_params,):
            raise ValueError(f"expected {self.n_params} parameters, got {theta.shape}")
        pos = 0
        for mlp in self._mlps():
            for layer in mlp.layers:
                k = layer.weights.size
                layer.weights = theta[pos:pos + k].reshape(layer.weights.shape).copy()
                pos += k
                k = layer.bias.size
                layer.bias = theta[pos:pos + k].copy()
                pos += k


@dataclass
class _Forward:
    """All intermediates of one operator forward pass, kept for the backward."""

    states: np.ndarray
    enc_cache: object
    h_mask: np.ndarray | None
    gate: np.ndarray
    gate_cache: object
    cand: np.ndarray
    cand_cache: object
    raw_log_var: np.ndarray | None
    var_cache: object | None
    var_mask: np.ndarray | None
    mean: np.ndarray | None
    var: np.ndarray | None
    probs: np.ndarray | None
    cand_sig: np.ndarray | None
    sig_mask: np.ndarray | None
    prev_clamped: np.ndarray | None
    squeezed: bool


def _forward(net: GatedTransitionNet, s, mode: str, rng) -> _Forward:
    s = np.asarray(s, dtype=float)
    squeezed = s.ndim == 1
    S = s[None, :] if squeezed else s
    if S.shape[1] != net.state_dim:
        raise ValueError(f"state dim {S.shape[1]} does not match operator dim {net.state_dim}")
    if net.kind == "binary":
        check_binary(S)

    h, enc_cache = mlp_forward(net.encoder, S, mode, rng)
    h_mask = None
    if mode == "train" and net.dropout_rate > 0.0:
        # the encoder output is a hidden activation of the composite net
        h_mask = rng.random(h.shape) >= net.dropout_rate
        h = h * h_mask / (1.0 - net.dropout_rate)
    gate, gate_cache = mlp_forward(net.gate_head, h, mode, rng)
    cand, cand_cache = mlp_forward(net.candidate_head, h, mode, rng)

    if net.kind == "continuous":
        raw, var_cache = mlp_forward(net.variance_head, h, mode, rng)
        clamped = np.clip(raw, LOG_VAR_MIN, LOG_VAR_MAX)
        var_mask = ((raw > LOG_VAR_MIN) & (raw < LOG_VAR_MAX)).astype(float)
        var = np.exp(clamped)
        mean = gate * cand + (1.0 - gate) * S
        return _Forward(S, enc_cache, h_mask, gate, gate_cache, cand, cand_cache,
                        raw, var_cache, var_mask, mean, var, None, None, None, None,
                        squeezed)

    raw_sig = 1.0 / (1.0 + np.exp(-cand))
    cand_sig = np.clip(raw_sig, SIGMOID_EPS, 1.0 - SIGMOID_EPS)
    sig_mask = ((raw_sig > SIGMOID_EPS) & (raw_sig < 1.0 - SIGMOID_EPS)).astype(float)
    prev = np.clip(S, BINARY_EPS, 1.0 - BINARY_EPS)
    probs = gate * cand_sig + (1.0 - gate) * prev
    return _Forward(S, enc_cache, h_mask, gate, gate_cache, cand, cand_cache,
                    None, None, None, None, None, probs, cand_sig, sig_mask, prev,
                    squeezed)


def transition_stats(net: GatedTransitionNet, s, mode: str = "eval",
                     rng: np.random.Generator | None = None):
    """Distribution parameters of the next state given `s`.

    Continuous: (mean, variance), both positive-variance vectors. Binary:
    per-bit probabilities strictly inside (0, 1). Accepts a single state or
    rows of states; output shapes follow the input.
    """
    fw = _forward(net, s, mode, rng)
    if net.kind == "continuous":
        if fw.squeezed:
            return fw.mean[0], fw.var[0]
        return fw.mean, fw.var
    return fw.probs[0] if fw.squeezed else fw.probs


def gaussian_log_density(m, v, s_next):
    """Fully normalized diagonal-Gaussian log-density, summed over coordinates.

    Row inputs give one value per row; vector inputs give a scalar.
    """
    m = np.asarray(m, dtype=float)
    v = np.asarray(v, dtype=float)
    x = np.asarray(s_next, dtype=float)
    if m.shape != v.shape or m.shape != x.shape:
        raise ValueError("mean, variance and target must share a shape")
    if np.any(v <= 0):
        raise ValueError("variance must be strictly positive")
    terms = -0.5 * ((x - m) ** 2 / v + np.log(v) + LOG_2PI)
    out = terms.sum(axis=-1)
    return float(out) if out.ndim == 0 else out


def bernoulli_log_mass(f, s_next):
    """Factorized Bernoulli log-mass of a binary target, summed over bits."""
    f = np.asarray(f, dtype=float)
    x = np.asarray(s_next, dtype=float)
    if f.shape != x.shape:
        raise ValueError("probabilities and target must share a shape")
    if np.any(f <= 0) or np.any(f >= 1):
        raise ValueError("probabilities must lie strictly inside (0, 1)")
    check_binary(x)
    terms = x * np.log(f) + (1.0 - x) * np.log(1.0 - f)
    out = terms.sum(axis=-1)
    return float(out) if out.ndim == 0 else out


def log_transition(net: GatedTransitionNet, s, s_next):
    """log T(s_next | s) under the operator, deterministic (eval-mode) stats.

    Pairs up rows when given row inputs. Both distribution heads are proper,
    so values are comparable across different conditioning states.
    """
    stats = transition_stats(net, s, "eval")
    if net.kind == "continuous":
        m, v = stats
        return gaussian_log_density(m, v, s_next)
    return bernoulli_log_mass(stats, s_next)


def sample_next(net: GatedTransitionNet, s, rng: np.random.Generator):
    """Draw the next state; deterministic given the rng stream."""
    stats = transition_stats(net, s, "eval")
    if net.kind == "continuous":
        m, v = stats
        return m + np.sqrt(v) * rng.standard_normal(m.shape)
    f = stats
    return (rng.random(f.shape) < f).astype(float)


def log_transition_grad(net: GatedTransitionNet, s, s_next, mode: str = "eval",
                        rng: np.random.Generator | None = None):
    """Log-transition value and its gradient with respect to all parameters.

    Returns (logp, grad) with grad flattened in the same canonical order as
    GatedTransitionNet.flat_params. Row inputs are treated as a batch of
    transitions whose log-probabilities (and gradients) are summed. In train
    mode, dropout masks are shared between this forward and backward pass.
    Coordinates whose log-variance hit the clamp get zero gradient there.
    """
    fw = _forward(net, s, mode, rng)
    T = np.asarray(s_next, dtype=float)
    T = T[None, :] if T.ndim == 1 else T
    if T.shape != fw.states.shape:
        raise ValueError("current and next states must share a shape")

    if net.kind == "continuous":
        resid = T - fw.mean
        logp = float(np.sum(-0.5 * (resid ** 2 / fw.var + np.log(fw.var) + LOG_2PI)))
        d_mean = resid / fw.var
        d_var = 0.5 * (resid ** 2 / fw.var - 1.0) / fw.var
        d_raw = d_var * fw.var * fw.var_mask
        d_gate = d_mean * (fw.cand - fw.states)
        d_cand = d_mean * fw.gate
        var_grads, dh_var = mlp_backward(net.variance_head, fw.var_cache, d_raw)
    else:
        check_binary(T)
        f = fw.probs
        logp = float(np.sum(T * np.log(f) + (1.0 - T) * np.log(1.0 - f)))
        d_f = T / f - (1.0 - T) / (1.0 - f)
        d_gate = d_f * (fw.cand_sig - fw.prev_clamped)
        d_cand = d_f * fw.gate * fw.cand_sig * (1.0 - fw.cand_sig) * fw.sig_mask
        var_grads, dh_var = None, 0.0

    if not np.isfinite(logp):
        raise FloatingPointError("non-finite transition log-probability")

    gate_grads, dh_gate = mlp_backward(net.gate_head, fw.gate_cache, d_gate)
    cand_grads, dh_cand = mlp_backward(net.candidate_head, fw.cand_cache, d_cand)
    dh = dh_gate + dh_cand + dh_var
    if fw.h_mask is not None:
        dh = dh * fw.h_mask / (1.0 - net.dropout_rate)
    enc_grads, _ = mlp_backward(net.encoder, fw.enc_cache, dh)

    chunks = []
    for grads in (enc_grads, gate_grads, cand_grads, var_grads):
        if grads is None:
            continue
        for dw, db in grads:
            chunks.append(dw.ravel())
            chunks.append(db)
    return logp, np.concatenate(chunks)


def log_transition_matrix(net: GatedTransitionNet, values: np.ndarray) -> np.ndarray:
    """All-pairs matrix M[i, j] = log T(values[j] | values[i]), eval mode."""
    values = np.asarray(values, dtype=float)
    if values.ndim != 2:
        raise ValueError("expected a 2-D array of states")
    stats = transition_stats(net, values, "eval")
    if net.kind == "continuous":
        m, v = stats
        # extreme inputs may overflow to -inf scores; callers diagnose those
        with np.errstate(over="ignore", invalid="ignore"):
            sq = ((values[None, :, :] - m[:, None, :]) ** 2 / v[:, None, :]).sum(axis=2)
            norm = (np.log(v).sum(axis=1) + values.shape[1] * LOG_2PI)[:, None]
            return -0.5 * (sq + norm)
    f = stats
    return np.log(f) @ values.T + np.log(1.0 - f) @ (1.0 - values).T
