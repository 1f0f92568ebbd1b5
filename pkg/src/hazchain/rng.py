"""Counter-based uniforms for reproducible, order-free replications.

Replication ``i`` of a run seeded with ``seed`` owns the SplitMix64 sequence
started at

    stream(seed, i) = mix64(key(seed) + (i + 1) * GOLDEN)
    key(seed)       = mix64((seed mod 2^64) ^ KEY_SALT)

and its ``d``-th uniform is ``(mix64(stream + (d + 1) * GOLDEN) >> 11 + 0.5) / 2^53``,
which lies strictly inside (0, 1).  Draw ``d`` of replication ``i`` therefore
does not depend on how many replications run, in which order, or on which
worker.  The numpy and numba versions below produce identical bits.
"""

from __future__ import annotations

import numpy as np
from numba import njit

GOLDEN = 0x9E3779B97F4A7C15
_MUL1 = 0xBF58476D1CE4E5B9
_MUL2 = 0x94D049BB133111EB
KEY_SALT = 0x5851F42D4C957F2D
_MASK = (1 << 64) - 1
_SCALE = 2.0 ** -53


def _mix64_int(z: int) -> int:
    z &= _MASK
    z = ((z ^ (z >> 30)) * _MUL1) & _MASK
    z = ((z ^ (z >> 27)) * _MUL2) & _MASK
    return z ^ (z >> 31)


def seed_key(seed: int) -> int:
    return _mix64_int((int(seed) & _MASK) ^ KEY_SALT)


def mix64(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=np.uint64)
    z = (z ^ (z >> np.uint64(30))) * np.uint64(_MUL1)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(_MUL2)
    return z ^ (z >> np.uint64(31))


def stream_keys(key: int, indices: np.ndarray) -> np.ndarray:
    idx = np.asarray(indices, dtype=np.uint64)
    return mix64(np.uint64(key) + (idx + np.uint64(1)) * np.uint64(GOLDEN))


def uniforms(streams: np.ndarray, draw: int) -> np.ndarray:
    """Draw number ``draw`` of each stream."""
    z = mix64(streams + np.uint64(((draw + 1) * GOLDEN) & _MASK))
    return ((z >> np.uint64(11)).astype(np.float64) + 0.5) * _SCALE


# scalar versions for compiled kernels; every operand is uint64 so numba
# never promotes to float

_G = np.uint64(GOLDEN)
_M1 = np.uint64(_MUL1)
_M2 = np.uint64(_MUL2)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_ONE = np.uint64(1)


@njit(cache=True)
def mix64_scalar(z):
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


@njit(cache=True)
def stream_key_scalar(key, index):
    return mix64_scalar(key + (np.uint64(index) + _ONE) * _G)


@njit(cache=True)
def uniform_scalar(stream, draw):
    z = mix64_scalar(stream + (np.uint64(draw) + _ONE) * _G)
    return (np.float64(z >> _S11) + 0.5) * 2.0 ** -53
