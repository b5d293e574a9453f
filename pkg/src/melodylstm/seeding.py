"""Deterministic seed derivation.

Every random choice in the pipeline flows from one top-level seed, fanned out
by labeled derivation so each component (split, synth file #17, dropout at
epoch 3 batch 5, ...) gets an independent, reproducible stream.
"""

import hashlib


def derive_seed(seed: int, label: str) -> int:
    """Derive a child seed from `seed` for the given purpose label.

    Uses SHA-256 rather than hash() so the result is stable across processes
    and Python versions.
    """
    digest = hashlib.sha256(f"{seed}:{label}".encode()).digest()
    return int.from_bytes(digest[:8], "big") >> 1  # keep it a positive int64
