"""Deterministic RNG derivation.

Every random draw in the package flows from a single root seed. A component
obtains its own independent stream by hashing its name (and any extra integer
tags such as iteration or bag index) together with the root seed into a
``numpy.random.SeedSequence``. Rerunning with the same root seed therefore
reproduces every stream bit for bit.
"""

import hashlib

import numpy as np


def _tag_to_int(tag) -> int:
    if isinstance(tag, str):
        digest = hashlib.sha256(tag.encode("utf-8")).digest()
        return int.from_bytes(digest[:8], "little")
    return int(tag)


def derive_seed_sequence(root_seed: int, *tags) -> np.random.SeedSequence:
    """Seed sequence for the component identified by ``tags`` under ``root_seed``."""
    entropy = [int(root_seed)] + [_tag_to_int(t) for t in tags]
    return np.random.SeedSequence(entropy)


def make_rng(root_seed: int, *tags) -> np.random.Generator:
    """Independent PCG64 generator for ``(root_seed, *tags)``."""
    return np.random.default_rng(derive_seed_sequence(root_seed, *tags))


def as_generator(rng) -> np.random.Generator:
    """Accept either a ready generator or a plain integer seed."""
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(int(rng))
