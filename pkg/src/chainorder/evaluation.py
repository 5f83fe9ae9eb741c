"""Order-quality metrics, the fixed-metric baseline, and state propagation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ordering import EuclideanScorer, TransitionScorer, check_permutation, greedy_order, _greedy_from_starts


@dataclass
class OrderReport:
    """Rank correlation of a recovered order against the ground truth.

    A chain and its reverse are equally valid discoveries, so both directions
    are reported; tau_best is the direction-agnostic score.
    """

    tau_forward: float
    tau_reverse: float
    tau_best: float
    recovered: np.ndarray
    method: str = "model"


def _count_inversions(seq: np.ndarray) -> int:
    """Merge-sort inversion count, O(n log n)."""
    seq = list(seq)

    def rec(arr):
        if len(arr) <= 1:
            return arr, 0
        mid = len(arr) // 2
        left, linv = rec(arr[:mid])
        right, rinv = rec(arr[mid:])
        merged = []
        inv = linv + rinv
        i = j = 0
        while i < len(left) and j < len(right):
            if left[i] <= right[j]:
                merged.append(left[i])
                i += 1
            else:
                merged.append(right[j])
                inv += len(left) - i
                j += 1
        merged.extend(left[i:])
        merged.extend(right[j:])
        return merged, inv

    return rec(seq)[1]


def kendall_tau_b(a, b) -> float:
    """Kendall Tau-b between two permutations of the same indices.

    Permutations carry no ties, so this reduces to (C - D) over the number of
    item pairs: 1 for identical orders, -1 for exact reversal.
    """
    a = np.asarray(a, dtype=int)
    b = np.asarray(b, dtype=int)
    if a.shape != b.shape:
        raise ValueError(f"size mismatch: {a.shape} vs {b.shape}")
    n = len(a)
    if n < 2:
        raise ValueError("need at least two items")
    check_permutation(a, n)
    check_permutation(b, n)
    rank_b = np.empty(n, dtype=int)
    rank_b[b] = np.arange(n)
    # b-ranks of the items listed in a's order; inversions = discordant pairs
    seq = rank_b[a]
    total = n * (n - 1) // 2
    discordant = _count_inversions(seq)
    return (total - 2 * discordant) / total


def nn_order(dataset, start="best") -> np.ndarray:
    """Greedy chain under score(i, j) = -||x_i - x_j||.

    With start="best" every start is tried and the chain with the shortest
    total path wins; an integer start grows a single chain from there. Ties
    break toward the smallest index.
    """
    values = np.asarray(getattr(dataset, "values", dataset), dtype=float)
    scorer = EuclideanScorer(values)
    if scorer.n == 1:
        return np.array([0])
    if start == "best":
        return greedy_order(scorer)
    start = int(start)
    if not 0 <= start < scorer.n:
        raise ValueError(f"start index {start} out of range")
    perm, _ = _greedy_from_starts(scorer.matrix(), np.array([start]))
    return perm


def propagate(scorer: TransitionScorer, start: int, steps: int,
              revisit: bool = True) -> tuple[np.ndarray, bool]:
    """Iterated most-probable-successor sequence from a start instance.

    The current instance is always excluded from its own successors; with
    revisit=False every previously visited instance is excluded too. Returns
    (sequence including the start, truncated flag). The flag is set when the
    candidate pool empties before `steps` transitions were taken.
    """
    if steps < 1:
        raise ValueError("steps must be >= 1")
    if not 0 <= start < scorer.n:
        raise ValueError(f"start index {start} out of range")
    matrix = scorer.matrix()
    visited = np.zeros(scorer.n, dtype=bool)
    visited[start] = True
    seq = [start]
    cur = start
    truncated = False
    for _ in range(steps):
        if revisit:
            allowed = np.ones(scorer.n, dtype=bool)
            allowed[cur] = False
        else:
            allowed = ~visited
        if not allowed.any():
            truncated = True
            break
        scores = np.where(allowed, matrix[cur], -np.inf)
        nxt = int(np.argmax(scores))
        seq.append(nxt)
        visited[nxt] = True
        cur = nxt
    return np.array(seq, dtype=int), truncated


def evaluate_order(dataset, recovered, method: str = "model") -> OrderReport:
    """Score a recovered permutation against the dataset's ground truth."""
    truth = getattr(dataset, "true_order", None)
    if truth is None:
        raise ValueError("dataset carries no ground-truth order")
    recovered = np.asarray(recovered, dtype=int)
    tau_f = kendall_tau_b(recovered, truth)
    tau_r = kendall_tau_b(recovered, truth[::-1])
    return OrderReport(tau_f, tau_r, max(tau_f, tau_r), recovered, method)
