"""Counter-based random numbers for reproducible selection strategies.

A draw is a pure function of ``(seed, *key)``: the key words are mixed into
a 64-bit state with the splitmix64 finalizer.  The same key always yields
the same number, independent of draw order, process, or backend.  That lets
strategies evaluate at arbitrary (time, cell) keys without carrying mutable
generator state.
"""

import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_FIFTYTHREE = np.float64(2.0**-53)


def _mix(state):
    z = state + _GOLDEN
    z = (z ^ (z >> np.uint64(30))) * _MIX1
    z = (z ^ (z >> np.uint64(27))) * _MIX2
    return z ^ (z >> np.uint64(31))


def _absorb(state, word):
    return _mix(state ^ word)


def uniform(seed, *key):
    """Deterministic uniform in [0, 1) keyed by integers.

    Arrays in the key broadcast; the result has the broadcast shape (or is
    a scalar for an all-scalar key).
    """
    with np.errstate(over="ignore"):
        state = np.asarray(_mix(np.uint64(int(seed) % (1 << 64))))
        for word in key:
            w = np.asarray(word, dtype=np.int64).astype(np.uint64)
            state = _absorb(state, w)
        bits = state >> np.uint64(11)
    out = bits.astype(np.float64) * _FIFTYTHREE
    if out.ndim == 0:
        return float(out)
    return out


def symmetric(seed, *key):
    """Deterministic uniform in [-1, 1), same keying as :func:`uniform`."""
    u = uniform(seed, *key)
    return 2.0 * u - 1.0
