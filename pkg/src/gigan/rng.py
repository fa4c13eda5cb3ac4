"""Deterministic random number generation.

All stochastic draws in the library flow through a single named,
counter-based generator (Philox 4x64) so that a 64-bit seed plus a small
stream label reproduces every stream bit-for-bit on any platform.
Distinct purposes use distinct stream labels instead of sharing one
generator, which keeps concurrent components independent and makes
determinism invariant to evaluation order.
"""

from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1


def philox(seed: int, stream: int = 0) -> np.random.Generator:
    """Return a Generator over Philox keyed by ``(seed, stream)``.

    Parameters
    ----------
    seed : int
        Base seed; reduced modulo 2**64.
    stream : int, optional
        Stream label separating independent draws under one seed.
    """
    key = np.array([seed & _MASK64, stream & _MASK64], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


# Fixed stream labels; never reuse a value for a new purpose.
STREAM_SAMPLING = 1
STREAM_CPTS = 2
STREAM_INIT = 3
STREAM_GUMBEL = 4
STREAM_SHUFFLE = 5
STREAM_LATENT = 6
STREAM_RESTARTS = 7
STREAM_FAMILIES = 8
STREAM_INSTANCES = 9
STREAM_PROBES = 10
