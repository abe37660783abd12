"""Deterministic random number generation for the engine.

All randomness in the engine flows through one named generator so that the
same seed reproduces the same subsamples, projections, and baseline
permutations across runs (and across re-implementations that match the
algorithm). The generator is splitmix64:

    output(i) = mix64(seed + (i + 1) * 0x9E3779B97F4A7C15)   (mod 2**64)

    mix64(z): z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
              z = (z ^ (z >> 27)) * 0x94D049BB133111EB
              return z ^ (z >> 31)

Because the stream is a pure function of (seed, index), any slice of it can
be generated independently, which the projection code uses to fill its
matrix in a fixed column-major order regardless of block size.

Derived streams, all documented here and pinned by vector tests:

  * doubles:   u = (x >> 11) * 2**-53, in [0, 1).
  * gaussians: pair p consumes raw outputs (2p, 2p+1);
               u1 = ((x0 >> 11) + 1) * 2**-53  in (0, 1],
               u2 = (x1 >> 11) * 2**-53        in [0, 1),
               g[2p]   = sqrt(-2 ln u1) * cos(2 pi u2)
               g[2p+1] = sqrt(-2 ln u1) * sin(2 pi u2)     (Box-Muller).
  * below(n):  unbiased bounded integer by rejection: accept a raw draw x
               iff x < 2**64 - (2**64 mod n), return x mod n.
  * permutation(n): Fisher-Yates, downward: for i = n-1 .. 1 swap a[i] with
               a[below(i+1)].
  * sample_prefix(items, m): partial Fisher-Yates: for i = 0 .. m-1 swap
               items[i] with items[i + below(len - i)]; take the first m.
"""

from __future__ import annotations

import numpy as np

_GOLDEN = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB
_MASK = (1 << 64) - 1

_INV_2_53 = 2.0 ** -53
_TWO_PI = 2.0 * np.pi


def mix64(z: int) -> int:
    """Scalar splitmix64 finalizer over Python ints (exact, no overflow)."""
    z &= _MASK
    z = ((z ^ (z >> 30)) * _MIX1) & _MASK
    z = ((z ^ (z >> 27)) * _MIX2) & _MASK
    return z ^ (z >> 31)


def derive_seed(seed: int, tag: str) -> int:
    """Deterministic child seed from (seed, tag); folds the tag bytes through
    the mixer so distinct tags give uncorrelated streams."""
    state = mix64(seed)
    for b in tag.encode("utf-8"):
        state = mix64(state ^ b)
    return state


def _raw_at_vec(seed: int, indices: np.ndarray) -> np.ndarray:
    """Vectorized stream access: raw uint64 outputs at absolute indices."""
    with np.errstate(over="ignore"):
        z = (np.uint64(seed) + (indices.astype(np.uint64) + np.uint64(1)) * np.uint64(_GOLDEN))
        z = (z ^ (z >> np.uint64(30))) * np.uint64(_MIX1)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(_MIX2)
        return z ^ (z >> np.uint64(31))


class SplitMix64:
    """Sequential view over the counter-based stream defined above.

    Scalar draws (`next_u64`, `below`) and block draws (`u64_block`,
    `gaussians`) consume the same underlying stream, so mixing access styles
    stays reproducible.
    """

    def __init__(self, seed: int):
        self.seed = int(seed) & _MASK
        self._counter = 0

    # -- raw stream ---------------------------------------------------------

    def next_u64(self) -> int:
        out = mix64((self.seed + ((self._counter + 1) * _GOLDEN)) & _MASK)
        self._counter += 1
        return out

    def u64_block(self, count: int) -> np.ndarray:
        idx = np.arange(self._counter, self._counter + count, dtype=np.uint64)
        self._counter += count
        return _raw_at_vec(self.seed, idx)

    def raw_at(self, start: int, count: int) -> np.ndarray:
        """Stateless absolute-index access; does not advance the counter."""
        idx = np.arange(start, start + count, dtype=np.uint64)
        return _raw_at_vec(self.seed, idx)

    # -- derived streams ------------------------------------------------------

    def doubles(self, count: int) -> np.ndarray:
        return (self.u64_block(count) >> np.uint64(11)).astype(np.float64) * _INV_2_53

    def gaussians(self, count: int) -> np.ndarray:
        pairs = (count + 1) // 2
        out = _gaussians_from_raw(self.u64_block(2 * pairs))
        return out[:count]

    def gaussians_at(self, start: int, count: int) -> np.ndarray:
        """Gaussian stream g[start : start+count] by absolute index.

        Gaussian index t lives in pair t // 2; the pair is regenerated from
        its two raw outputs, so any slice is independent of how previous
        slices were drawn. Does not advance the counter.
        """
        first_pair = start // 2
        last_pair = (start + count - 1) // 2
        raw = self.raw_at(2 * first_pair, 2 * (last_pair - first_pair + 1))
        g = _gaussians_from_raw(raw)
        offset = start - 2 * first_pair
        return g[offset:offset + count]

    # -- integers and shuffles ------------------------------------------------

    def below(self, bound: int) -> int:
        """Uniform integer in [0, bound), unbiased via modulo rejection."""
        if bound <= 0:
            raise ValueError("bound must be positive")
        threshold = (1 << 64) - ((1 << 64) % bound)
        while True:
            x = self.next_u64()
            if x < threshold:
                return x % bound

    def permutation(self, n: int) -> list[int]:
        a = list(range(n))
        for i in range(n - 1, 0, -1):
            j = self.below(i + 1)
            a[i], a[j] = a[j], a[i]
        return a

    def sample_prefix(self, items: list[int], m: int) -> list[int]:
        """m distinct elements of `items`, uniform without replacement."""
        pool = list(items)
        n = len(pool)
        if m > n:
            raise ValueError("cannot sample more elements than available")
        for i in range(m):
            j = i + self.below(n - i)
            pool[i], pool[j] = pool[j], pool[i]
        return pool[:m]


def _gaussians_from_raw(raw: np.ndarray) -> np.ndarray:
    x0 = raw[0::2]
    x1 = raw[1::2]
    u1 = ((x0 >> np.uint64(11)).astype(np.float64) + 1.0) * _INV_2_53
    u2 = (x1 >> np.uint64(11)).astype(np.float64) * _INV_2_53
    r = np.sqrt(-2.0 * np.log(u1))
    theta = _TWO_PI * u2
    out = np.empty(2 * x0.shape[0], dtype=np.float64)
    out[0::2] = r * np.cos(theta)
    out[1::2] = r * np.sin(theta)
    return out
