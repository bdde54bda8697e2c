"""Counter-based random number streams.

Every stochastic routine in the package draws from a Philox generator keyed
by ``(seed, stream label)``.  Philox is counter-based, so a stream's output
depends only on its key, never on how many draws other streams have made or
on scheduling.  Identical seeds therefore reproduce identical paths
regardless of evaluation order or thread count.
"""

import zlib

import numpy as np

__all__ = ["stream", "uniforms"]


def _stream_key(seed, label):
    # 128-bit Philox key: high word = user seed, low word = CRC of the label.
    seed = int(seed)
    if not 0 <= seed < 2**64:
        raise ValueError(f"seed must fit in an unsigned 64-bit integer, got {seed}")
    return (seed << 64) | zlib.crc32(label.encode("utf-8"))


def stream(seed, label):
    """Return a fresh ``numpy.random.Generator`` for the given stream label."""
    return np.random.Generator(np.random.Philox(key=_stream_key(seed, label)))


def uniforms(seed, label, shape):
    """Draw an array of uniforms on [0, 1) from the named stream."""
    return stream(seed, label).random(size=shape)
