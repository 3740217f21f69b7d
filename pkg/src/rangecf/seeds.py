"""Deterministic derivation of per-component RNG seeds from a single master seed."""

from __future__ import annotations

import hashlib


def derive_seed(master: int, label: str) -> int:
    """Map (master seed, component label) to a stable 32-bit seed.

    The mapping is the first four bytes of sha256("<master>:<label>"), so any
    sub-experiment can be reproduced in isolation from the master seed and the
    component label alone.
    """
    digest = hashlib.sha256(f"{master}:{label}".encode()).digest()
    return int.from_bytes(digest[:4], "big")
