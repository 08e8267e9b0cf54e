"""Named random sub-streams derived from a single run seed.

Every consumer of randomness (corpus generation, parameter init, sampling
noise, batching) asks for its own stream by name, so adding a new consumer
never shifts the numbers another one sees.
"""

import zlib

import numpy as np

CORPUS = "corpus"
INIT = "init"
EPSILON = "epsilon"
BATCHING = "batching"


def stream_key(name: str) -> int:
    """Stable 32-bit key for a stream name (crc32, independent of PYTHONHASHSEED)."""
    return zlib.crc32(name.encode("utf-8"))


def substream(seed: int, name: str) -> np.random.Generator:
    """Return the generator for the named sub-stream of ``seed``."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), stream_key(name)]))


def child_seed(seed: int, name: str) -> int:
    """Derive an integer seed for a nested consumer (e.g. one synthesized sample)."""
    return int(np.random.SeedSequence([int(seed), stream_key(name)]).generate_state(1)[0])
