"""Counter-based stream splitting for reproducible experiments.

Every consumer of randomness asks for a substream identified by a path of
integers/strings under the run seed, e.g. ``substream(seed, "epoch", 3,
"iter", 7, "noise", k)``.  Streams are independent Philox generators whose
keys are derived by hashing the path, so adding consumers (or changing the
batch size) never perturbs existing streams.
"""

from __future__ import annotations

import hashlib

import numpy as np

__all__ = ["substream"]


def _key(seed, path):
    h = hashlib.sha256()
    h.update(int(seed).to_bytes(8, "little", signed=True))
    for part in path:
        if isinstance(part, str):
            h.update(b"s" + part.encode())
        else:
            h.update(b"i" + int(part).to_bytes(8, "little", signed=True))
    return int.from_bytes(h.digest()[:16], "little")


def substream(seed, *path):
    """Independent ``np.random.Generator`` for ``(seed, path)``."""
    return np.random.Generator(np.random.Philox(key=_key(seed, path)))
