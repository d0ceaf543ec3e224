"""Counter-based random streams.

Every draw is a pure function of ``(master seed, stream id, counter)``: the
master seed is the Philox4x32-10 key, the 128-bit counter block holds the
64-bit draw counter in its low half and the 64-bit stream id in its high half.
Rows of a reference table, replications of an experiment and so on each get
their own stream id, so results never depend on how work is scheduled.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri

_M0 = np.uint64(0xD2511F53)
_M1 = np.uint64(0xCD9E8D57)
_W0 = 0x9E3779B9
_W1 = 0xBB67AE85
_MASK32 = np.uint64(0xFFFFFFFF)
_SHIFT32 = np.uint64(32)
_MASK64 = (1 << 64) - 1


def philox4x32(c0, c1, c2, c3, k0: int, k1: int):
    """Philox4x32-10 block function, vectorized over the counter words.

    Counter words are arrays of values < 2**32 (any integer dtype); the key is
    two 32-bit integers. Returns four uint64 arrays holding 32-bit outputs.
    """
    c0 = np.asarray(c0, dtype=np.uint64)
    c1 = np.asarray(c1, dtype=np.uint64)
    c2 = np.asarray(c2, dtype=np.uint64)
    c3 = np.asarray(c3, dtype=np.uint64)
    k0 = int(k0) & 0xFFFFFFFF
    k1 = int(k1) & 0xFFFFFFFF
    for _ in range(10):
        p0 = c0 * _M0
        p1 = c2 * _M1
        c0, c1, c2, c3 = (
            (p1 >> _SHIFT32) ^ c1 ^ np.uint64(k0),
            p1 & _MASK32,
            (p0 >> _SHIFT32) ^ c3 ^ np.uint64(k1),
            p0 & _MASK32,
        )
        k0 = (k0 + _W0) & 0xFFFFFFFF
        k1 = (k1 + _W1) & 0xFFFFFFFF
    return c0, c1, c2, c3


def splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


def derive_seed(master_seed: int, *labels: int) -> int:
    """Deterministically mix a master seed with integer labels (task index, purpose...)."""
    h = splitmix64(int(master_seed) & _MASK64)
    for lab in labels:
        h = splitmix64(h ^ (int(lab) & _MASK64))
    return h


def _as_streams(stream_ids) -> np.ndarray:
    s = np.atleast_1d(np.asarray(stream_ids))
    if s.dtype.kind not in "iu":
        raise TypeError("stream ids must be integers")
    return s.astype(np.uint64)


def block_uniforms(master_seed: int, stream_ids, start: int, count: int) -> np.ndarray:
    """Uniforms on the open interval (0, 1) for many streams at once.

    Row ``r`` of the ``(len(stream_ids), count)`` result is what
    ``RngStream(master_seed, stream_ids[r], start).uniform(count)`` returns.
    Each Philox block yields two 53-bit uniforms.
    """
    streams = _as_streams(stream_ids)
    nblocks = (count + 1) // 2
    seed = int(master_seed) & _MASK64
    k0, k1 = seed & 0xFFFFFFFF, seed >> 32
    ctr = np.arange(start, start + nblocks, dtype=np.uint64)[None, :]
    ctr = np.broadcast_to(ctr, (streams.size, nblocks))
    st = np.broadcast_to(streams[:, None], (streams.size, nblocks))
    a, b, c, d = philox4x32(ctr & _MASK32, ctr >> _SHIFT32, st & _MASK32, st >> _SHIFT32, k0, k1)
    out = np.empty((streams.size, 2 * nblocks))
    scale = 1.0 / 9007199254740992.0
    out[:, 0::2] = ((a >> np.uint64(5)).astype(np.float64) * 67108864.0
                    + (b >> np.uint64(6)).astype(np.float64) + 0.5) * scale
    out[:, 1::2] = ((c >> np.uint64(5)).astype(np.float64) * 67108864.0
                    + (d >> np.uint64(6)).astype(np.float64) + 0.5) * scale
    return out[:, :count]


def blocks_for(count: int) -> int:
    """Number of counter increments consumed by ``count`` uniforms."""
    return (count + 1) // 2


@dataclass
class RngStream:
    """A single counter-based stream; the counter advances as draws are taken."""

    master_seed: int
    stream_id: int = 0
    counter: int = 0

    def uniform(self, size: int) -> np.ndarray:
        u = block_uniforms(self.master_seed, [self.stream_id], self.counter, size)[0]
        self.counter += blocks_for(size)
        return u

    def normal(self, size: int) -> np.ndarray:
        return ndtri(self.uniform(size))

    def spawn(self, label: int) -> "RngStream":
        """An independent stream keyed on this stream's identity and ``label``."""
        return RngStream(derive_seed(self.master_seed, self.stream_id, self.counter, label), 0, 0)
