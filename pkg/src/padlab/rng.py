"""Counter-based Gaussian sampling.

Every draw is a pure function of ``(seed, stream, flat_index)``: the 64-bit
seed is the Philox4x32-10 key, and the 128-bit counter packs the pair index
``flat_index // 2`` (low 64 bits) with the stream (high 64 bits).  One Philox
block yields four 32-bit words, which become two 53-bit uniforms and, through
Box-Muller, the normals for flat indices ``2p`` and ``2p + 1``.

Nothing here carries state, so any partition of streams across workers
produces the same numbers.
"""

from __future__ import annotations

import numba
import numpy as np

PHILOX_M0 = 0xD2511F53
PHILOX_M1 = 0xCD9E8D57
PHILOX_W0 = 0x9E3779B9
PHILOX_W1 = 0xBB67AE85
PHILOX_ROUNDS = 10

_MASK32 = np.uint64(0xFFFFFFFF)
_TWO_PI = 2.0 * np.pi
_INV_2_53 = 1.0 / 9007199254740992.0


@numba.njit(cache=True, inline="always")
def _philox4x32(c0, c1, c2, c3, k0, k1):
    m0 = np.uint64(PHILOX_M0)
    m1 = np.uint64(PHILOX_M1)
    w0 = np.uint64(PHILOX_W0)
    w1 = np.uint64(PHILOX_W1)
    mask = np.uint64(0xFFFFFFFF)
    s32 = np.uint64(32)
    for r in range(PHILOX_ROUNDS):
        if r > 0:
            k0 = (k0 + w0) & mask
            k1 = (k1 + w1) & mask
        p0 = m0 * c0
        p1 = m1 * c2
        n0 = (p1 >> s32) ^ c1 ^ k0
        n1 = p1 & mask
        n2 = (p0 >> s32) ^ c3 ^ k1
        n3 = p0 & mask
        c0, c1, c2, c3 = n0, n1, n2, n3
    return c0, c1, c2, c3


def philox4x32(counter, key):
    """Single Philox4x32-10 block; ``counter`` is 4 words, ``key`` 2 words."""
    c = [np.uint64(int(v) & 0xFFFFFFFF) for v in counter]
    k = [np.uint64(int(v) & 0xFFFFFFFF) for v in key]
    return tuple(int(v) for v in _philox4x32(c[0], c[1], c[2], c[3], k[0], k[1]))


@numba.njit(cache=True)
def _normals_kernel(seed, streams, n_values, out):
    mask = np.uint64(0xFFFFFFFF)
    s32 = np.uint64(32)
    k0 = seed & mask
    k1 = seed >> s32
    n_blocks = (n_values + 1) // 2
    for s in range(streams.shape[0]):
        st = streams[s]
        c2 = st & mask
        c3 = st >> s32
        for b in range(n_blocks):
            bb = np.uint64(b)
            x0, x1, x2, x3 = _philox4x32(bb & mask, bb >> s32, c2, c3, k0, k1)
            u1 = (
                np.float64((x0 >> np.uint64(5)) * np.uint64(67108864) + (x1 >> np.uint64(6)))
                + 0.5
            ) * _INV_2_53
            u2 = (
                np.float64((x2 >> np.uint64(5)) * np.uint64(67108864) + (x3 >> np.uint64(6)))
                + 0.5
            ) * _INV_2_53
            rad = np.sqrt(-2.0 * np.log(u1))
            theta = _TWO_PI * u2
            out[s, 2 * b] = rad * np.cos(theta)
            if 2 * b + 1 < n_values:
                out[s, 2 * b + 1] = rad * np.sin(theta)


def gaussian_block(seed: int, streams, n_values: int) -> np.ndarray:
    """Standard normals of shape ``(len(streams), n_values)``.

    Row ``s`` holds flat indices ``0..n_values-1`` of stream ``streams[s]``.
    """
    streams = np.ascontiguousarray(np.asarray(streams, dtype=np.uint64).reshape(-1))
    out = np.empty((streams.shape[0], n_values), dtype=np.float64)
    if n_values > 0 and streams.shape[0] > 0:
        _normals_kernel(np.uint64(seed), streams, n_values, out)
    return out


@numba.njit(cache=True)
def _uniform_kernel(seed, streams, n_values, out):
    mask = np.uint64(0xFFFFFFFF)
    s32 = np.uint64(32)
    k0 = seed & mask
    k1 = seed >> s32
    n_blocks = (n_values + 1) // 2
    for s in range(streams.shape[0]):
        st = streams[s]
        for b in range(n_blocks):
            bb = np.uint64(b)
            x0, x1, x2, x3 = _philox4x32(bb & mask, bb >> s32, st & mask, st >> s32, k0, k1)
            out[s, 2 * b] = np.float64(
                (x0 >> np.uint64(5)) * np.uint64(67108864) + (x1 >> np.uint64(6))
            ) * _INV_2_53
            if 2 * b + 1 < n_values:
                out[s, 2 * b + 1] = np.float64(
                    (x2 >> np.uint64(5)) * np.uint64(67108864) + (x3 >> np.uint64(6))
                ) * _INV_2_53


def uniform_block(seed: int, streams, n_values: int) -> np.ndarray:
    """Uniforms on [0, 1) with 53-bit resolution, laid out like :func:`gaussian_block`."""
    streams = np.ascontiguousarray(np.asarray(streams, dtype=np.uint64).reshape(-1))
    out = np.empty((streams.shape[0], n_values), dtype=np.float64)
    if n_values > 0 and streams.shape[0] > 0:
        _uniform_kernel(np.uint64(seed), streams, n_values, out)
    return out
