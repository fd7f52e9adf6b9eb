"""Deterministic per-task random streams derived from one root seed."""

import hashlib

import numpy as np


def _key_int(part) -> int:
    digest = hashlib.sha256(repr(part).encode()).digest()
    return int.from_bytes(digest[:8], "little")


def derive_seed(root: int, *key) -> int:
    """A 63-bit seed that depends only on ``root`` and the task ``key``."""
    ss = np.random.SeedSequence(entropy=int(root), spawn_key=tuple(_key_int(k) for k in key))
    return int(ss.generate_state(2, dtype=np.uint32).astype(np.uint64) @ np.array([1, 1 << 32], dtype=np.uint64)) & (2**63 - 1)


def derive_rng(root: int, *key) -> np.random.Generator:
    return np.random.default_rng(derive_seed(root, *key))
