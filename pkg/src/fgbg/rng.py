"""Seed discipline: every random draw flows from one root seed.

Streams are derived statelessly from (root seed, string labels, integers),
so any point in the pipeline can be reproduced without replaying prior
draws. Labels hash through SHA-256, independent of PYTHONHASHSEED.
"""

from __future__ import annotations

import hashlib

import numpy as np


def _tag(value) -> int:
    if isinstance(value, (int, np.integer)):
        return int(value) & 0xFFFFFFFFFFFFFFFF
    digest = hashlib.sha256(str(value).encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def seed_sequence(root_seed: int, *labels) -> np.random.SeedSequence:
    return np.random.SeedSequence([_tag(root_seed)] + [_tag(x) for x in labels])


def stream(root_seed: int, *labels) -> np.random.Generator:
    """A fresh generator for the stream named by ``labels``."""
    return np.random.default_rng(seed_sequence(root_seed, *labels))


def derive_seed(root_seed: int, *labels) -> int:
    """A u64 sub-seed, for handing to components that take plain seeds."""
    return int(seed_sequence(root_seed, *labels).generate_state(1, np.uint64)[0])
