"""Named, independently derived random streams from a single root seed."""

import hashlib

import numpy as np


def derive_rng(seed: int, name: str) -> np.random.Generator:
    """Return a Generator for the stream `name`, derived from `seed`.

    Streams with different names are statistically independent and stable
    across runs and platforms, so components (training, shuffling, episode
    sampling, dropout) can be re-seeded without touching each other.
    """
    digest = hashlib.sha256(name.encode("utf-8")).digest()
    salt = int.from_bytes(digest[:8], "little")
    return np.random.default_rng(np.random.SeedSequence([int(seed), salt]))
