"""Counter-based random streams keyed by (seed, purpose tag, replicate).

Philox is a counter-based generator, so the words for replicate r live at a
fixed counter position and do not depend on how replicates are scheduled.
"""
from __future__ import annotations

import os
import zlib

import numpy as np

DEFAULT_SEED = 20140915
_TWO_M53 = 2.0 ** -53


def default_seed() -> int:
    """Seed from ``ENDRISK_SEED`` when set, else the fixed default."""
    env = os.environ.get("ENDRISK_SEED")
    return int(env) if env not in (None, "") else DEFAULT_SEED


def _key(seed: int, tag: str) -> np.ndarray:
    return np.random.SeedSequence([int(seed) & (2**64 - 1), zlib.crc32(tag.encode())]) \
        .generate_state(2, np.uint64)


def slot_words(seed: int, tag: str, reps: int, start: int = 0) -> np.ndarray:
    """Four raw 64-bit words per replicate, shape (reps, 4).

    Row r is the Philox block at counter ``start + r``.
    """
    bg = np.random.Philox(key=_key(seed, tag), counter=int(start))
    return bg.random_raw(4 * int(reps)).reshape(int(reps), 4)


def to_unit(words) -> np.ndarray:
    """Map raw words to [0, 1) on the 2^-53 grid."""
    return (np.asarray(words, dtype=np.uint64) >> np.uint64(11)).astype(float) * _TWO_M53


def replicate_generator(seed: int, tag: str, rep: int) -> np.random.Generator:
    """Independent generator for one replicate (high counter words hold ``rep``)."""
    return np.random.Generator(np.random.Philox(key=_key(seed, tag), counter=int(rep) << 128))
