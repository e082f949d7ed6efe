"""Counter-based hashing used to derive reproducible random streams.

Every random decision in the sampler is a pure function of a key tuple, so
results do not depend on execution order.
"""

import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_MASK64 = (1 << 64) - 1


def splitmix64(x):
    """Vectorised splitmix64 finaliser on uint64 arrays (wrapping arithmetic)."""
    z = np.asarray(x, dtype=np.uint64) + _GOLDEN
    with np.errstate(over="ignore"):
        z = (z ^ (z >> np.uint64(30))) * _M1
        z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def mix(h, x):
    """Combine a running hash ``h`` with a value ``x``; both broadcast."""
    h = np.asarray(h, dtype=np.uint64)
    x = np.asarray(x).astype(np.uint64)
    return splitmix64(h ^ splitmix64(x))


def key(*parts):
    """Hash a tuple of non-negative Python ints to a single uint64 scalar."""
    h = np.uint64(0x243F6A8885A308D3)
    for p in parts:
        h = mix(h, np.uint64(int(p) & _MASK64))
    return np.uint64(h)


def to_unit(h):
    """Map uint64 hashes to floats uniform on [0, 1)."""
    return (np.asarray(h, dtype=np.uint64) >> np.uint64(11)).astype(np.float64) * (2.0 ** -53)
