"""Deterministic random substreams.

Every random draw in a run flows from the single run seed.  Independent
substreams are derived per purpose ("srs.pairs", "det.ch2", ...) with a
fixed mixing function, so adding or removing one channel never perturbs
the draws of any other channel, and regeneration with the same
(seed, label) is bit-identical on any host.

Mixing function: the UTF-8 label is hashed with SHA-256, the first
128 bits become the spawn key of a ``numpy.random.SeedSequence`` whose
entropy is the run seed; the sequence keys a Philox counter-based
generator.
"""

from __future__ import annotations

import hashlib

import numpy as np


def substream(seed: int, label: str) -> np.random.Generator:
    """Return the generator for one named substream of a run seed."""
    digest = hashlib.sha256(label.encode("utf-8")).digest()
    words = tuple(int.from_bytes(digest[i : i + 4], "little") for i in range(0, 16, 4))
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=words)
    return np.random.Generator(np.random.Philox(ss))


def child_seed(seed: int, label: str) -> int:
    """Derive a per-purpose integer seed (same mixing, folded to 63 bits).

    Used where an operation takes a seed of its own, e.g. one detector
    per channel: ``child_seed(run_seed, "detector.ch2")``.
    """
    h = hashlib.sha256()
    h.update(str(int(seed)).encode("ascii"))
    h.update(b"/")
    h.update(label.encode("utf-8"))
    return int.from_bytes(h.digest()[:8], "little") >> 1
