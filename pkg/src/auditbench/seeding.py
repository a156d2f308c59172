"""Stable seed derivation so that adding a pipeline stage never perturbs another's stream."""

import hashlib

import numpy as np


def derive_seed(master_seed, *keys):
    """Hash ``master_seed`` and any number of keys into a 64-bit unsigned seed."""
    h = hashlib.sha256()
    h.update(str(int(master_seed)).encode())
    for key in keys:
        h.update(b"\x1f")
        h.update(str(key).encode())
    return int.from_bytes(h.digest()[:8], "little")


def rng(seed, *keys):
    if keys:
        seed = derive_seed(seed, *keys)
    return np.random.default_rng(int(seed))
