"""Labelled sub-seed derivation, stable across processes and platforms."""

from __future__ import annotations

import hashlib


def derive_seed(master: int, label: str) -> int:
    """A 63-bit seed determined by (master, label) via SHA-256."""
    digest = hashlib.sha256(f"{master}:{label}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") >> 1
