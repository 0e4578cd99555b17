"""Per-trial random generators derived from a master seed.

Each trial gets a Philox (counter-based) generator keyed by the first 128
bits of ``sha256(f"{master}:{trial}")``, so a trial's stream depends only
on its own index and never on scheduling.
"""
import hashlib

import numpy as np

RNG_ALGORITHM = "numpy Philox4x64, key = sha256('<master>:<trial>')[:16]"


def seed_key(master, trial):
    digest = hashlib.sha256(f"{int(master)}:{int(trial)}".encode()).digest()
    return int.from_bytes(digest[:16], "little")


def derive_seed(master, trial):
    """Generator for ``trial`` of a run seeded with ``master``."""
    return np.random.Generator(np.random.Philox(key=seed_key(master, trial)))
