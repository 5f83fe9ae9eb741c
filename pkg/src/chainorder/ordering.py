"""Permutation search over a dataset given a pairwise transition scorer.

Implements the cubic greedy search (one chain grown from every start), its
sampled-start quadratic variant, and an exhaustive oracle for small n. All
searches share one convention: score(i, j) is the log-probability of moving
from instance i to instance j, ties in an argmax break toward the smallest
index, and ties between candidate chains break toward the smallest start.
"""

from __future__ import annotations

import itertools

import numpy as np

from .transition import log_transition_matrix

BRUTE_FORCE_LIMIT = 10
_CHUNK = 100_000


def check_permutation(perm, n: int) -> np.ndarray:
    perm = np.asarray(perm, dtype=int)
    if perm.shape != (n,) or not np.array_equal(np.sort(perm), np.arange(n)):
        raise ValueError(f"not a permutation of 0..{n - 1}: {perm!r}")
    return perm


class TransitionScorer:
    """Deterministic pairwise scores over a fixed set of n instances.

    Subclasses provide `score_matrix`; `score(i, j)` reads from it. Self
    scores score(i, i) are legal (propagation uses them) but orderings never
    take them.
    """

    def __init__(self, n: int):
        self.n = int(n)
        self._matrix = None

    def score_matrix(self) -> np.ndarray:
        raise NotImplementedError

    def matrix(self) -> np.ndarray:
        if self._matrix is None:
            m = np.asarray(self.score_matrix(), dtype=float)
            if m.shape != (self.n, self.n):
                raise ValueError(f"score matrix must be {self.n} x {self.n}")
            self._matrix = m
        return self._matrix

    def score(self, i: int, j: int) -> float:
        return float(self.matrix()[i, j])


class TabularScorer(TransitionScorer):
    """Scores read straight from an explicit n x n matrix."""

    def __init__(self, matrix):
        matrix = np.asarray(matrix, dtype=float)
        if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
            raise ValueError("tabular scorer needs a square matrix")
        super().__init__(matrix.shape[0])
        self._table = matrix

    def score_matrix(self) -> np.ndarray:
        return self._table


class EuclideanScorer(TransitionScorer):
    """score(i, j) = -||x_i - x_j||_2, the fixed-metric baseline."""

    def __init__(self, values):
        values = np.asarray(values, dtype=float)
        if values.ndim != 2:
            raise ValueError("expected a 2-D array of instances")
        super().__init__(values.shape[0])
        self._values = values

    def score_matrix(self) -> np.ndarray:
        diff = self._values[:, None, :] - self._values[None, :, :]
        return -np.sqrt((diff ** 2).sum(axis=2))


class ModelScorer(TransitionScorer):
    """Scores from a frozen transition operator over a bound dataset."""

    def __init__(self, net, values):
        values = np.asarray(values, dtype=float)
        if values.ndim != 2:
            raise ValueError("expected a 2-D array of instances")
        if values.shape[1] != net.state_dim:
            raise ValueError(
                f"dataset dim {values.shape[1]} does not match model dim {net.state_dim}"
            )
        super().__init__(values.shape[0])
        self.net = net
        self._values = values

    def score_matrix(self) -> np.ndarray:
        return log_transition_matrix(self.net, self._values)


def sequence_log_likelihood(scorer: TransitionScorer, perm) -> float:
    """Sum of scores along the chain perm[0] -> perm[1] -> ... -> perm[n-1]."""
    perm = check_permutation(perm, scorer.n)
    if scorer.n < 2:
        raise ValueError("a chain needs at least 2 instances")
    total = 0.0
    m = scorer.matrix()
    for t in range(1, len(perm)):
        total += m[perm[t - 1], perm[t]]
    return float(total)


def _greedy_from_starts(matrix: np.ndarray, starts: np.ndarray):
    """Grow one greedy chain per start; return (best_perm, best_ll).

    Vectorized across starts. The accumulation order of each chain's
    likelihood matches sequence_log_likelihood exactly, so comparisons
    between the two are bitwise safe.
    """
    n = matrix.shape[0]
    starts = np.asarray(starts, dtype=int)
    k = len(starts)
    if n == 1:
        return np.array([0]), 0.0
    perms = np.empty((k, n), dtype=int)
    perms[:, 0] = starts
    avail = np.ones((k, n), dtype=bool)
    avail[np.arange(k), starts] = False
    cur = starts.copy()
    lls = None
    for t in range(1, n):
        scores = np.where(avail, matrix[cur], -np.inf)
        nxt = np.argmax(scores, axis=1)  # first max: smallest index wins ties
        # rows whose available scores are all -inf tie with the masked
        # entries; force the smallest available index to keep a bijection
        bad = ~avail[np.arange(k), nxt]
        if bad.any():
            nxt[bad] = np.argmax(avail[bad], axis=1)
        step = matrix[cur, nxt]
        lls = step if lls is None else lls + step
        perms[:, t] = nxt
        avail[np.arange(k), nxt] = False
        cur = nxt
    best = int(np.argmax(lls))  # first max: smallest start wins ties
    return perms[best], float(lls[best])


def greedy_order(scorer: TransitionScorer) -> np.ndarray:
    """Best chain over all n greedy starts; O(n^3) score reads."""
    n = scorer.n
    if n < 1:
        raise ValueError("need at least one instance")
    perm, _ = _greedy_from_starts(scorer.matrix(), np.arange(n))
    return perm


def greedy_order_sampled(scorer: TransitionScorer, num_starts: int,
                         rng: np.random.Generator) -> np.ndarray:
    """Greedy search restricted to num_starts starts drawn without replacement.

    num_starts == n sweeps every start and reproduces greedy_order exactly.
    """
    n = scorer.n
    if not 1 <= num_starts <= n:
        raise ValueError(f"num_starts must lie in 1..{n}, got {num_starts}")
    starts = np.sort(rng.choice(n, size=num_starts, replace=False))
    perm, _ = _greedy_from_starts(scorer.matrix(), starts)
    return perm


def brute_force_order(scorer: TransitionScorer) -> np.ndarray:
    """Exhaustive global maximizer; guarded to n <= 10, ties lexicographic."""
    n = scorer.n
    if n > BRUTE_FORCE_LIMIT:
        raise ValueError(f"brute force is limited to n <= {BRUTE_FORCE_LIMIT}, got {n}")
    if n < 1:
        raise ValueError("need at least one instance")
    if n == 1:
        return np.array([0])
    matrix = scorer.matrix()
    best_perm = None
    best_ll = -np.inf
    perm_iter = itertools.permutations(range(n))
    while True:
        chunk = list(itertools.islice(perm_iter, _CHUNK))
        if not chunk:
            break
        perms = np.array(chunk, dtype=int)
        lls = matrix[perms[:, 0], perms[:, 1]].copy()
        for t in range(2, n):
            lls += matrix[perms[:, t - 1], perms[:, t]]
        i = int(np.argmax(lls))
        # strict comparison keeps the lexicographically first maximizer,
        # because itertools enumerates permutations in lexicographic order
        if lls[i] > best_ll:
            best_ll = float(lls[i])
            best_perm = perms[i].copy()
    return best_perm
