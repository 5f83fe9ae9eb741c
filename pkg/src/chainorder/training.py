"""Batch-wise permutation training and model persistence.

Each step re-derives the greedy order of the current batch under the current
operator, then takes one ADAM step up the log-likelihood of that ordered
trajectory. Batches refresh every `refresh_period` steps and carry their
first `overlap` entries forward so consecutive batches stay connected in the
transition graph.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .data import Dataset
from .nn import AdamState, Mlp, adam_step
from .ordering import (ModelScorer, greedy_order, greedy_order_sampled,
                       sequence_log_likelihood)
from .seeding import derive_rng
from .transition import GatedTransitionNet, log_transition_grad

MODEL_FORMAT_VERSION = 1


class TrainingError(RuntimeError):
    """Training aborted (non-finite likelihood or gradient)."""


class ModelFormatError(ValueError):
    """Model file is malformed."""


class ModelVersionError(ModelFormatError):
    """Model file uses an unsupported format version."""


class ModelDimensionError(ModelFormatError):
    """Model file's parameters are inconsistent with its declared sizes."""


@dataclass
class TrainConfig:
    batch_size: int
    total_steps: int
    overlap: int = 0
    refresh_period: int = 1
    num_starts: int | None = None  # None: sweep every start in the batch
    hidden_sizes: tuple = (32,)
    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    dropout_rate: float = 0.2
    seed: int = 0

    def validate(self, n_data: int) -> None:
        if not 0 <= self.overlap < self.batch_size:
            raise ValueError(f"need 0 <= overlap < batch_size, got {self.overlap} / {self.batch_size}")
        if self.batch_size > n_data:
            raise ValueError(f"batch_size {self.batch_size} exceeds dataset size {n_data}")
        if self.refresh_period < 1:
            raise ValueError("refresh_period must be >= 1")
        if self.total_steps < 1:
            raise ValueError("total_steps must be >= 1")
        if self.num_starts is not None and not 1 <= self.num_starts <= self.batch_size:
            raise ValueError("num_starts must lie in 1..batch_size")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError("dropout_rate must lie in [0, 1)")
        if not self.hidden_sizes:
            raise ValueError("hidden_sizes must not be empty")


@dataclass
class TrainHistory:
    steps: list = field(default_factory=list)
    log_likelihoods: list = field(default_factory=list)
    grad_norms: list = field(default_factory=list)

    def append(self, step: int, log_likelihood: float, grad_norm: float) -> None:
        if self.steps and step <= self.steps[-1]:
            raise ValueError("step indices must be strictly increasing")
        self.steps.append(step)
        self.log_likelihoods.append(float(log_likelihood))
        self.grad_norms.append(float(grad_norm))

    def __len__(self) -> int:
        return len(self.steps)


def sample_batch(n_data: int, prev_batch, b: int, b0: int,
                 rng: np.random.Generator) -> np.ndarray:
    """Fresh batch of b indices carrying over the first b0 of the previous one.

    The b - b0 fresh indices are drawn uniformly without replacement from the
    dataset excluding the previous batch, so consecutive batches share exactly
    the b0 carried indices; fresh indices come first, carried ones follow. A
    None/empty prev_batch means a full fresh sample. When the dataset is too
    small to supply b - b0 unseen indices (e.g. full-batch training), only the
    carried set is excluded and extra overlap is unavoidable.
    """
    if b > n_data:
        raise ValueError(f"batch size {b} exceeds dataset size {n_data}")
    if not 0 <= b0 < b:
        raise ValueError(f"need 0 <= b0 < b, got {b0} / {b}")
    if prev_batch is None or len(prev_batch) == 0:
        carried = np.empty(0, dtype=int)
        exclude = carried
    else:
        prev_batch = np.asarray(prev_batch, dtype=int)
        if len(prev_batch) < b0:
            raise ValueError(f"previous batch has {len(prev_batch)} entries, need >= {b0}")
        carried = prev_batch[:b0]
        exclude = prev_batch
    pool = np.setdiff1d(np.arange(n_data), exclude)
    if len(pool) < b - len(carried):
        pool = np.setdiff1d(np.arange(n_data), carried)
    fresh = rng.choice(pool, size=b - len(carried), replace=False)
    return np.concatenate([fresh, carried])


def _batch_order(net, values, num_starts, starts_rng):
    scorer = ModelScorer(net, values)
    if num_starts is None or num_starts >= len(values):
        perm = greedy_order(scorer)
    else:
        perm = greedy_order_sampled(scorer, num_starts, starts_rng)
    return scorer, perm


def _locate_bad_pair(scorer, perm):
    m = scorer.matrix()
    for t in range(1, len(perm)):
        if not np.isfinite(m[perm[t - 1], perm[t]]):
            return int(perm[t - 1]), int(perm[t])
    return None


def train(dataset: Dataset, config: TrainConfig) -> tuple[GatedTransitionNet, TrainHistory]:
    """Fit a transition operator to an unordered dataset.

    Deterministic given config.seed: initialization, batch sampling, start
    sampling and dropout each use their own derived stream.
    """
    config.validate(dataset.n)
    init_rng = derive_rng(config.seed, "init")
    batch_rng = derive_rng(config.seed, "batch")
    starts_rng = derive_rng(config.seed, "starts")
    dropout_rng = derive_rng(config.seed, "dropout")

    net = GatedTransitionNet.build(dataset.dim, config.hidden_sizes, dataset.kind,
                                   config.dropout_rate, init_rng)
    net.seed = config.seed
    params = net.flat_params()
    adam = AdamState.fresh(params.size, lr=config.lr, beta1=config.beta1,
                           beta2=config.beta2, epsilon=config.epsilon)
    history = TrainHistory()
    batch = None
    grad_mode = "train" if config.dropout_rate > 0 else "eval"

    for k in range(1, config.total_steps + 1):
        if k == 1 or config.refresh_period == 1 or k % config.refresh_period == 1:
            batch = sample_batch(dataset.n, batch, config.batch_size, config.overlap,
                                 batch_rng)
        values = dataset.values[batch]
        scorer, perm = _batch_order(net, values, config.num_starts, starts_rng)
        ll = sequence_log_likelihood(scorer, perm)
        if not np.isfinite(ll):
            pair = _locate_bad_pair(scorer, perm)
            raise TrainingError(
                f"step {k}: non-finite batch log-likelihood at transition {pair}"
            )
        try:
            _, grad = log_transition_grad(net, values[perm[:-1]], values[perm[1:]],
                                          mode=grad_mode, rng=dropout_rng)
        except FloatingPointError as exc:
            raise TrainingError(f"step {k}: {exc}") from None
        if not np.all(np.isfinite(grad)):
            raise TrainingError(f"step {k}: non-finite parameter gradient")
        params = adam_step(params, -grad, adam)  # ascent on the log-likelihood
        net.set_flat_params(params)
        history.append(k, ll, float(np.linalg.norm(grad)))

    net.train_steps = config.total_steps
    return net, history


def _fmt17(x: float) -> str:
    return format(float(x), ".17g")


def save_model(net: GatedTransitionNet, path) -> None:
    """Write the versioned model document; parameters keep full double precision."""
    sizes = {
        "encoder": [net.encoder.in_dim] + [l.out_dim for l in net.encoder.layers],
        "gate": [net.gate_head.in_dim] + [l.out_dim for l in net.gate_head.layers],
        "candidate": [net.candidate_head.in_dim] + [l.out_dim for l in net.candidate_head.layers],
        "variance": None if net.variance_head is None
        else [net.variance_head.in_dim] + [l.out_dim for l in net.variance_head.layers],
    }
    flat = net.flat_params()
    if not np.all(np.isfinite(flat)):
        raise ValueError("refusing to save a model with non-finite parameters")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("{\n")
        fh.write(f'  "format_version": {MODEL_FORMAT_VERSION},\n')
        fh.write(f'  "kind": {json.dumps(net.kind)},\n')
        fh.write(f'  "state_dim": {net.state_dim},\n')
        fh.write(f'  "layer_sizes": {json.dumps(sizes)},\n')
        fh.write(f'  "dropout_rate": {_fmt17(net.dropout_rate)},\n')
        fh.write(f'  "seed": {int(net.seed)},\n')
        fh.write(f'  "train_steps": {int(net.train_steps)},\n')
        fh.write('  "params": [' + ", ".join(_fmt17(x) for x in flat) + "]\n")
        fh.write("}\n")


def _rebuild_mlp(sizes, final_activation: str, dropout_rate: float) -> Mlp:
    acts = ["relu"] * (len(sizes) - 2) + [final_activation]
    layers = Mlp.build(sizes, acts, dropout_rate,
                       np.random.default_rng(0))  # placeholder weights, overwritten
    return layers


def load_model(path) -> GatedTransitionNet:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"{path}: not valid JSON ({exc})") from None
    if not isinstance(doc, dict):
        raise ModelFormatError(f"{path}: expected a JSON object")
    version = doc.get("format_version")
    if version != MODEL_FORMAT_VERSION:
        raise ModelVersionError(
            f"{path}: format_version {version!r} unsupported (expected {MODEL_FORMAT_VERSION})"
        )
    required = ("kind", "state_dim", "layer_sizes", "dropout_rate", "seed",
                "train_steps", "params")
    missing = [k for k in required if k not in doc]
    if missing:
        raise ModelFormatError(f"{path}: missing fields {missing}")
    kind = doc["kind"]
    if kind not in ("continuous", "binary"):
        raise ModelFormatError(f"{path}: unknown kind {kind!r}")
    sizes = doc["layer_sizes"]
    try:
        p = int(doc["state_dim"])
        dropout = float(doc["dropout_rate"])
        enc_sizes = [int(x) for x in sizes["encoder"]]
        gate_sizes = [int(x) for x in sizes["gate"]]
        cand_sizes = [int(x) for x in sizes["candidate"]]
        var_sizes = None if sizes.get("variance") is None else [int(x) for x in sizes["variance"]]
    except (TypeError, KeyError, ValueError) as exc:
        raise ModelFormatError(f"{path}: bad layer_sizes ({exc})") from None
    hidden = enc_sizes[-1]
    if enc_sizes[0] != p or gate_sizes[0] != hidden or gate_sizes[-1] != p \
            or cand_sizes[0] != hidden or cand_sizes[-1] != p:
        raise ModelDimensionError(f"{path}: head sizes inconsistent with state_dim/hidden")
    if kind == "continuous":
        if var_sizes is None or var_sizes[0] != hidden or var_sizes[-1] != p:
            raise ModelDimensionError(f"{path}: variance head sizes inconsistent")
    elif var_sizes is not None:
        raise ModelDimensionError(f"{path}: binary model must not carry a variance head")
    try:
        encoder = _rebuild_mlp(enc_sizes, "relu", dropout)
        gate = _rebuild_mlp(gate_sizes, "sigmoid", dropout)
        cand = _rebuild_mlp(cand_sizes, "identity", dropout)
        var = _rebuild_mlp(var_sizes, "identity", dropout) if var_sizes else None
        net = GatedTransitionNet(encoder, gate, cand, var, kind, dropout)
    except ValueError as exc:
        raise ModelDimensionError(f"{path}: {exc}") from None
    params = np.asarray(doc["params"], dtype=float)
    if params.ndim != 1 or params.size != net.n_params:
        raise ModelDimensionError(
            f"{path}: expected {net.n_params} parameters, file holds {params.size}"
        )
    net.set_flat_params(params)
    net.seed = int(doc["seed"])
    net.train_steps = int(doc["train_steps"])
    return net
