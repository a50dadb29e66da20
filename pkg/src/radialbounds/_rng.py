"""Counter-free per-path random streams for the exit-time kernel.

Generator: xoshiro256** (Blackman and Vigna).  Stream ``s`` of master seed
``seed`` is seeded with the first four outputs of SplitMix64 started at
``seed ^ (s * STREAM_MULT mod 2**64)``.  Standard normals come from a
256-layer ziggurat (Marsaglia and Tsang) driven by one 64-bit draw on the fast
path: the low 8 bits pick the layer, bit 8 the sign and the top 53 bits the
abscissa.  Everything here is deterministic and independent of the order in
which paths are processed.
"""

from __future__ import annotations

import math

import numba
import numpy as np
from numba import int64, uint64

STREAM_MULT = 0xD1B54A32D192ED03
ZIG_LAYERS = 256
ZIG_R = 3.6541528853610088
ZIG_V = 0.00492867323399
MASK64 = (1 << 64) - 1


def ziggurat_tables(n: int = ZIG_LAYERS, r: float = ZIG_R, v: float = ZIG_V):
    """Layer abscissae ``X`` (``X[0] = v/f(r)``, ``X[1] = r``, ``X[n] = 0``) and ``F = f(X)``."""
    f = lambda x: math.exp(-0.5 * x * x)  # noqa: E731
    x = np.zeros(n + 1)
    x[0], x[1] = v / f(r), r
    for i in range(2, n):
        x[i] = math.sqrt(-2.0 * math.log(v / x[i - 1] + f(x[i - 1])))
    return x, np.exp(-0.5 * x * x)


ZIG_X, ZIG_F = ziggurat_tables()


# -- pure Python references (used by tests and for seeding documentation) ----


def splitmix64_py(state: int):
    """One SplitMix64 step; returns ``(new_state, output)``."""
    state = (state + 0x9E3779B97F4A7C15) & MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return state, z ^ (z >> 31)


def stream_state_py(seed: int, stream: int) -> list[int]:
    x = (seed ^ (stream * STREAM_MULT)) & MASK64
    out = []
    for _ in range(4):
        x, z = splitmix64_py(x)
        out.append(z)
    return out


def xoshiro_py(s: list[int]) -> int:
    """One xoshiro256** step on a mutable 4-list; returns the output."""
    rotl = lambda x, k: ((x << k) | (x >> (64 - k))) & MASK64  # noqa: E731
    result = (rotl((s[1] * 5) & MASK64, 7) * 9) & MASK64
    t = (s[1] << 17) & MASK64
    s[2] ^= s[0]
    s[3] ^= s[1]
    s[1] ^= s[2]
    s[0] ^= s[3]
    s[2] ^= t
    s[3] = rotl(s[3], 45)
    return result


# -- numba kernels ------------------------------------------------------------


@numba.njit(inline="always", cache=True)
def _rotl(x, k):
    return (x << uint64(k)) | (x >> uint64(64 - k))


@numba.njit(inline="always", cache=True)
def next_u64(S, lane):
    s0, s1, s2, s3 = S[lane, 0], S[lane, 1], S[lane, 2], S[lane, 3]
    r = _rotl(s1 * uint64(5), 7) * uint64(9)
    t = s1 << uint64(17)
    s2 ^= s0
    s3 ^= s1
    s1 ^= s2
    s0 ^= s3
    s2 ^= t
    s3 = _rotl(s3, 45)
    S[lane, 0], S[lane, 1], S[lane, 2], S[lane, 3] = s0, s1, s2, s3
    return r


@numba.njit(inline="always", cache=True)
def u01(r):
    """Top 53 bits as a double in ``[0, 1)``."""
    return float(int64(r >> uint64(11))) * (1.0 / 9007199254740992.0)


@numba.njit(cache=True)
def _splitmix(x):
    x = x + uint64(0x9E3779B97F4A7C15)
    z = x
    z = (z ^ (z >> uint64(30))) * uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> uint64(27))) * uint64(0x94D049BB133111EB)
    return x, z ^ (z >> uint64(31))


@numba.njit(cache=True)
def seed_lane(S, lane, seed, stream):
    x = uint64(seed) ^ (uint64(stream) * uint64(STREAM_MULT))
    for j in range(4):
        x, z = _splitmix(x)
        S[lane, j] = z


@numba.njit(inline="never", cache=True)
def zig_slow(S, lane, X, F, i, x):
    """Continue the ziggurat after the fast path rejected layer ``i`` at ``x`` (magnitude)."""
    while True:
        if i == 0:
            while True:
                a = -math.log(1.0 - u01(next_u64(S, lane))) / ZIG_R
                b = -math.log(1.0 - u01(next_u64(S, lane)))
                if 2.0 * b > a * a:
                    return ZIG_R + a
        y = F[i + 1] + (F[i] - F[i + 1]) * u01(next_u64(S, lane))
        if y < math.exp(-0.5 * x * x):
            return x
        r = next_u64(S, lane)
        i = int64(r & uint64(255))
        x = u01(r) * X[i]
        if x < X[i + 1]:
            return x


@numba.njit(inline="always", cache=True)
def normal(S, lane, X, F):
    r = next_u64(S, lane)
    i = int64(r & uint64(255))
    x = u01(r) * X[i]
    if x >= X[i + 1]:
        x = zig_slow(S, lane, X, F, i, x)
    if (r >> uint64(8)) & uint64(1):
        return x
    return -x


@numba.njit(cache=True)
def normals(seed, stream, n, X, F):
    """``n`` standard normals from one stream (test and inspection helper)."""
    S = np.empty((1, 4), dtype=np.uint64)
    seed_lane(S, 0, seed, stream)
    out = np.empty(n)
    for k in range(n):
        out[k] = normal(S, 0, X, F)
    return out


@numba.njit(cache=True)
def raw_u64(seed, stream, n):
    S = np.empty((1, 4), dtype=np.uint64)
    seed_lane(S, 0, seed, stream)
    out = np.empty(n, dtype=np.uint64)
    for k in range(n):
        out[k] = next_u64(S, 0)
    return out
