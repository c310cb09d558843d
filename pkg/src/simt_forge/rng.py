"""Deterministic, splittable random streams backed by the Philox counter-based generator.

Every source of randomness in the engine flows through a Stream.  Streams are
keyed by (seed, stream_id) so independent components (scheduler, device image,
workers) can draw from non-overlapping sequences of the same master seed, and a
stream's exact position can be captured into bytes and restored later, which is
what lets a memory-image snapshot also pin the RNG position.
"""

from __future__ import annotations

import struct

import numpy as np

_STATE_FMT = "<4Q2Q4QQII"  # counter[4], key[2], buffer[4], buffer_pos, has_uint32, uinteger
_STATE_SIZE = struct.calcsize(_STATE_FMT)


class Stream:
    """A seekable random stream over numpy's Philox bit generator."""

    def __init__(self, seed: int, stream_id: int = 0):
        if seed < 0:
            raise ValueError("seed must be non-negative")
        self.seed = int(seed)
        self.stream_id = int(stream_id)
        # key = (seed, stream_id) gives disjoint counter spaces per stream.
        self._bitgen = np.random.Philox(key=np.array(
            [self.seed & 0xFFFFFFFFFFFFFFFF, self.stream_id & 0xFFFFFFFFFFFFFFFF],
            dtype=np.uint64))
        self._gen = np.random.Generator(self._bitgen)

    def child(self, stream_id: int) -> "Stream":
        """Derive an independent stream under the same seed."""
        return Stream(self.seed, stream_id)

    # -- draws ---------------------------------------------------------------

    def integers(self, lo: int, hi: int) -> int:
        """Uniform integer in [lo, hi)."""
        if hi <= lo:
            raise ValueError("empty range")
        return int(self._gen.integers(lo, hi))

    def u32(self) -> int:
        return int(self._gen.integers(0, 1 << 32))

    def u64(self) -> int:
        return int(self._gen.integers(0, 1 << 64, dtype=np.uint64))

    def random(self) -> float:
        """Uniform float64 in [0, 1)."""
        return float(self._gen.random())

    def choice(self, seq):
        if not seq:
            raise ValueError("empty sequence")
        return seq[self.integers(0, len(seq))]

    def weighted_choice(self, seq, weights):
        if len(seq) != len(weights) or not seq:
            raise ValueError("bad weighted choice arguments")
        total = float(sum(weights))
        x = self.random() * total
        acc = 0.0
        for item, w in zip(seq, weights):
            acc += w
            if x < acc:
                return item
        return seq[-1]

    def geometric_small(self, p: float, cap: int) -> int:
        """Number of failures before first success, capped; used for op-count draws."""
        n = 0
        while n < cap and self.random() >= p:
            n += 1
        return n

    def bytes(self, n: int) -> bytes:
        return self._gen.bytes(n)

    # -- position capture ----------------------------------------------------

    def state_bytes(self) -> bytes:
        st = self._bitgen.state
        counter = [int(x) for x in st["state"]["counter"]]
        key = [int(x) for x in st["state"]["key"]]
        buf = [int(x) for x in st["buffer"]]
        return struct.pack(
            _STATE_FMT,
            *counter,
            *key,
            *buf,
            int(st["buffer_pos"]),
            int(st["has_uint32"]),
            int(st["uinteger"]),
        )

    def set_state_bytes(self, blob: bytes) -> None:
        if len(blob) != _STATE_SIZE:
            raise ValueError("bad stream state blob")
        vals = struct.unpack(_STATE_FMT, blob)
        counter = np.array(vals[0:4], dtype=np.uint64)
        key = np.array(vals[4:6], dtype=np.uint64)
        buf = np.array(vals[6:10], dtype=np.uint64)
        self._bitgen.state = {
            "bit_generator": "Philox",
            "state": {"counter": counter, "key": key},
            "buffer": buf,
            "buffer_pos": int(vals[10]),
            "has_uint32": int(vals[11]),
            "uinteger": int(vals[12]),
        }

    def __repr__(self) -> str:
        return f"Stream(seed={self.seed}, stream_id={self.stream_id})"
