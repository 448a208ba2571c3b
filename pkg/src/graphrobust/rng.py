"""Seeded random streams.

All randomness in the package flows through labeled, counter-based Philox
streams derived from a single experiment seed.  A (seed, label) pair always
yields the same stream, and distinct labels yield statistically independent
streams, so dataset sampling, parameter init, dropout, attacks, and
discretization are each independently reproducible.
"""

from __future__ import annotations

import numpy as np


def labeled_rng(seed: int, label: str) -> np.random.Generator:
    """Return the deterministic generator for (seed, label).

    The label bytes are folded into the SeedSequence entropy pool, so e.g.
    ("attack", seed 3) and ("dropout", seed 3) never share a stream.
    """
    raw = label.encode("utf-8")
    raw = raw.ljust(max(4, (len(raw) + 3) // 4 * 4), b"\0")
    entropy = [np.uint32(seed & 0xFFFFFFFF), np.uint32((seed >> 32) & 0xFFFFFFFF)]
    entropy.extend(np.frombuffer(raw, dtype=np.uint32))
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))


def child_seed(seed: int, label: str, index: int = 0) -> int:
    """Derive a 63-bit sub-seed for handing to nested components."""
    rng = labeled_rng(seed, f"{label}#{index}")
    return int(rng.integers(0, 2**63 - 1))
