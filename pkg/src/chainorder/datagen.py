"""Synthetic trajectories with known generation order, plus truth-preserving shuffling.

Three families cover the regimes the rest of the library is tested on:
smooth loop dynamics (rotation), contracting linear dynamics (spiral), and
binary chains with an analytically known transition mass (bit flips).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import Dataset


@dataclass
class LabeledTrajectory:
    """Ordered states straight out of a generator; true_order is the identity."""

    states: np.ndarray
    kind: str
    generator: str
    params: dict = field(default_factory=dict)
    seed: int | None = None

    def __post_init__(self):
        self.states = np.asarray(self.states, dtype=float)
        if self.states.ndim != 2 or len(self.states) < 1:
            raise ValueError("states must be a non-empty (n x p) array")

    @property
    def n(self) -> int:
        return self.states.shape[0]

    @property
    def true_order(self) -> np.ndarray:
        return np.arange(self.n)


def gen_rotation_chain(n: int, radius: float, angular_step: float, noise_sd: float,
                       rng: np.random.Generator) -> LabeledTrajectory:
    """2-D loop: state t = radius * (cos t*step, sin t*step) plus isotropic noise."""
    if n < 2:
        raise ValueError("need n >= 2")
    if noise_sd < 0:
        raise ValueError("noise_sd must be non-negative")
    t = np.arange(n)
    angles = t * angular_step
    pts = radius * np.stack([np.cos(angles), np.sin(angles)], axis=1)
    if noise_sd > 0:
        pts = pts + rng.normal(0.0, noise_sd, size=pts.shape)
    return LabeledTrajectory(pts, "continuous", "rotation",
                             {"radius": radius, "angular_step": angular_step,
                              "noise_sd": noise_sd})


def gen_linear_dynamics(n: int, A: np.ndarray, x0: np.ndarray, noise_sd: float,
                        rng: np.random.Generator) -> LabeledTrajectory:
    """Linear chain x_{t+1} = A x_t + noise, starting at x0."""
    A = np.asarray(A, dtype=float)
    x0 = np.asarray(x0, dtype=float)
    if n < 2:
        raise ValueError("need n >= 2")
    if A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape[0] != x0.shape[0]:
        raise ValueError("A must be square and match x0")
    if not (np.all(np.isfinite(A)) and np.all(np.isfinite(x0))):
        raise ValueError("A and x0 must be finite")
    p = len(x0)
    states = np.empty((n, p))
    states[0] = x0
    for t in range(1, n):
        states[t] = A @ states[t - 1]
        if noise_sd > 0:
            states[t] += rng.normal(0.0, noise_sd, size=p)
    return LabeledTrajectory(states, "continuous", "linear",
                             {"noise_sd": noise_sd})


def rotation_matrix(theta: float) -> np.ndarray:
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s], [s, c]])


def gen_bitflip_chain(n: int, p: int, flip_prob: float,
                      rng: np.random.Generator) -> LabeledTrajectory:
    """Binary chain where each bit independently flips with flip_prob per step."""
    if not 0.0 < flip_prob < 0.5:
        raise ValueError("flip_prob must lie strictly in (0, 0.5)")
    if p < 1 or n < 2:
        raise ValueError("need p >= 1 and n >= 2")
    states = np.empty((n, p))
    states[0] = (rng.random(p) < 0.5).astype(float)
    for t in range(1, n):
        flips = rng.random(p) < flip_prob
        states[t] = np.where(flips, 1.0 - states[t - 1], states[t - 1])
    return LabeledTrajectory(states, "binary", "bitflip",
                             {"p": p, "flip_prob": flip_prob})


def shuffle_with_permutation(traj: LabeledTrajectory, perm) -> tuple[Dataset, np.ndarray]:
    """Reorder the trajectory by an explicit permutation.

    Returns (dataset, truth) where dataset.values[truth] reproduces the
    generated sequence exactly.
    """
    perm = np.asarray(perm, dtype=int)
    if not np.array_equal(np.sort(perm), np.arange(traj.n)):
        raise ValueError("perm is not a permutation of the trajectory")
    shuffled = traj.states[perm]
    truth = np.argsort(perm)
    return Dataset(shuffled, traj.kind, true_order=truth), truth


def shuffle_with_truth(traj: LabeledTrajectory,
                       rng: np.random.Generator) -> tuple[Dataset, np.ndarray]:
    """Uniformly shuffle a trajectory, remembering how to undo it."""
    return shuffle_with_permutation(traj, rng.permutation(traj.n))
