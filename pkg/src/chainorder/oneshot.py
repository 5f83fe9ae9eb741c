"""Generative one-shot classification on top of the learned transition operator.

Each class is represented by a single support instance. A short chain is
sampled from every support; a query is scored per class by the average
log-transition from the support and each chain state to the query, and the
best-scoring class wins.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .transition import (GatedTransitionNet, bernoulli_log_mass, gaussian_log_density,
                         log_transition, sample_next, transition_stats)


@dataclass
class Episode:
    """One way-class, 1-shot classification task."""

    supports: np.ndarray       # (way, p), one support per class
    query_values: np.ndarray   # (m, p)
    query_labels: np.ndarray   # (m,), values in 0..way-1
    k: int                     # chain length sampled per class

    def __post_init__(self):
        self.supports = np.asarray(self.supports, dtype=float)
        self.query_values = np.asarray(self.query_values, dtype=float)
        self.query_labels = np.asarray(self.query_labels, dtype=int)
        if self.supports.ndim != 2:
            raise ValueError("supports must be (way x p)")
        if self.query_values.ndim != 2 or self.query_values.shape[1] != self.supports.shape[1]:
            raise ValueError("queries must match the support dimension")
        if len(self.query_labels) != len(self.query_values):
            raise ValueError("one label per query required")
        if len(self.query_labels) and not (
            (self.query_labels >= 0) & (self.query_labels < self.way)
        ).all():
            raise ValueError("query labels must lie in 0..way-1")
        if self.k < 0:
            raise ValueError("chain length k must be >= 0")

    @property
    def way(self) -> int:
        return self.supports.shape[0]


@dataclass
class EpisodeResult:
    predictions: np.ndarray            # (m,)
    accuracy: float | None             # None when the episode has no queries
    class_log_likelihoods: np.ndarray  # (m, way)


def class_chain(net: GatedTransitionNet, support, k: int,
                rng: np.random.Generator) -> np.ndarray:
    """Sample a k-state chain seeded at the support; k = 0 gives an empty chain."""
    if k < 0:
        raise ValueError("k must be >= 0")
    support = np.asarray(support, dtype=float)
    chain = np.empty((k, support.shape[0]))
    cur = support
    for i in range(k):
        cur = sample_next(net, cur, rng)
        chain[i] = cur
    return chain


def class_log_likelihood(net: GatedTransitionNet, support, chain, query) -> float:
    """Average log-transition into the query from the support and its chain."""
    chain = np.asarray(chain, dtype=float)
    terms = [log_transition(net, support, query)]
    for state in chain:
        terms.append(log_transition(net, state, query))
    return float(np.mean(terms))


def _score_queries(net, sources, queries):
    """(m x len(sources)) log-transition scores, vectorized over queries."""
    scores = np.empty((len(queries), len(sources)))
    stats = transition_stats(net, sources, "eval")
    for j in range(len(sources)):
        if net.kind == "continuous":
            m, v = stats[0][j], stats[1][j]
            scores[:, j] = gaussian_log_density(
                np.broadcast_to(m, queries.shape), np.broadcast_to(v, queries.shape), queries
            )
        else:
            f = stats[j]
            scores[:, j] = bernoulli_log_mass(np.broadcast_to(f, queries.shape), queries)
    return scores


def classify(net: GatedTransitionNet, episode: Episode,
             rng: np.random.Generator) -> EpisodeResult:
    """Predict each query's class; one chain draw per class per episode.

    Ties in the per-query argmax break toward the smallest class index.
    Accuracy is None for an episode without queries.
    """
    m = len(episode.query_values)
    lls = np.empty((m, episode.way))
    for c in range(episode.way):
        chain = class_chain(net, episode.supports[c], episode.k, rng)
        sources = np.vstack([episode.supports[c][None, :], chain])
        if m:
            lls[:, c] = _score_queries(net, sources, episode.query_values).mean(axis=1)
    if m == 0:
        return EpisodeResult(np.empty(0, dtype=int), None, lls)
    preds = np.argmax(lls, axis=1)
    accuracy = float(np.mean(preds == episode.query_labels))
    return EpisodeResult(preds, accuracy, lls)


def build_episode(class_datasets, way: int, queries_per_class: int, k: int,
                  rng: np.random.Generator) -> Episode:
    """Sample an episode: `way` classes, one support plus queries per class.

    Instances are drawn without replacement within a class; classes are drawn
    without replacement from the available datasets.
    """
    if way < 1:
        raise ValueError("way must be >= 1")
    if queries_per_class < 0:
        raise ValueError("queries_per_class must be >= 0")
    if way > len(class_datasets):
        raise ValueError(f"asked for {way} classes, only {len(class_datasets)} available")
    values = [np.asarray(getattr(d, "values", d), dtype=float) for d in class_datasets]
    chosen = rng.choice(len(values), size=way, replace=False)
    supports = []
    q_vals, q_labels = [], []
    for label, cls in enumerate(chosen):
        pool = values[cls]
        if len(pool) < 1 + queries_per_class:
            raise ValueError(
                f"class {cls} has {len(pool)} instances, needs {1 + queries_per_class}"
            )
        picks = rng.choice(len(pool), size=1 + queries_per_class, replace=False)
        supports.append(pool[picks[0]])
        for q in picks[1:]:
            q_vals.append(pool[q])
            q_labels.append(label)
    q_arr = (np.array(q_vals) if q_vals
             else np.empty((0, supports[0].shape[0])))
    return Episode(np.array(supports), q_arr, np.array(q_labels, dtype=int), k)
