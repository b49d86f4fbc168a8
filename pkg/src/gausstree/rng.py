"""Counter-based keyed Gaussian generator.

Every Gaussian in the package is a pure function of a 64-bit key and a
64-bit counter, so draws can be regenerated in any order (the streaming
sampler and the brute-force oracle see the same numbers) and replicas can be
split across workers without coordination.

Frozen contract
---------------
* ``mix64`` is the SplitMix64 finalizer.
* ``raw(key, g) = mix64(key + (g + 1) * GAMMA)`` (arithmetic mod 2^64).
* The raw word is turned into N(0,1) by the 256-layer ziggurat used by
  numpy's ``Generator.standard_normal`` (same tables, same bit layout).  If
  the first word is rejected, further words come from the private SplitMix64
  stream seeded with ``mix64(key ^ ((g + 1) * GAMMA2))``.
* ``substream(seed, i) = mix64(mix64(seed + GAMMA) + (i + 1) * GAMMA)``
  derives the key of replica (or call) ``i``.
"""
from __future__ import annotations

import math

import numpy as np
from numba import njit

MASK64 = (1 << 64) - 1
GAMMA = 0x9E3779B97F4A7C15
GAMMA2 = 0xD1B54A32D192ED03
_M1 = 0xBF58476D1CE4E5B9
_M2 = 0x94D049BB133111EB

ZIG_R = 3.6541528853610088
ZIG_INV_R = 1.0 / ZIG_R
# area of each ziggurat layer: r f(r) + int_r^inf f
ZIG_V = ZIG_R * math.exp(-0.5 * ZIG_R * ZIG_R) + math.sqrt(math.pi / 2) * math.erfc(
    ZIG_R / math.sqrt(2)
)


def mix64_int(z: int) -> int:
    """SplitMix64 finalizer on Python ints."""
    z &= MASK64
    z = ((z ^ (z >> 30)) * _M1) & MASK64
    z = ((z ^ (z >> 27)) * _M2) & MASK64
    return z ^ (z >> 31)


def substream(seed: int, i: int) -> int:
    """Key of substream ``i`` under master ``seed``."""
    if i < 0:
        raise ValueError("substream index must be nonnegative")
    base = mix64_int((int(seed) + GAMMA) & MASK64)
    return mix64_int((base + (i + 1) * GAMMA) & MASK64)


def substreams(seed: int, ids) -> np.ndarray:
    return np.array([substream(seed, int(i)) for i in ids], dtype=np.uint64)


def _build_tables():
    m = 2.0 ** 52
    ki = np.zeros(256, dtype=np.uint64)
    wi = np.zeros(256)
    fi = np.zeros(256)
    dn = ZIG_R
    tn = dn
    q = ZIG_V / math.exp(-0.5 * dn * dn)
    ki[0] = np.uint64(int((dn / q) * m))
    ki[1] = 0
    wi[0] = q / m
    wi[255] = dn / m
    fi[0] = 1.0
    fi[255] = math.exp(-0.5 * dn * dn)
    for i in range(254, 0, -1):
        dn = math.sqrt(-2.0 * math.log(ZIG_V / dn + math.exp(-0.5 * dn * dn)))
        ki[i + 1] = np.uint64(int((dn / tn) * m))
        tn = dn
        fi[i] = math.exp(-0.5 * dn * dn)
        wi[i] = dn / m
    return ki, wi, fi


KI, WI, FI = _build_tables()

_U_GAMMA = np.uint64(GAMMA)
_U_GAMMA2 = np.uint64(GAMMA2)
_U_M1 = np.uint64(_M1)
_U_M2 = np.uint64(_M2)
_U1 = np.uint64(1)
_U8 = np.uint64(8)
_U11 = np.uint64(11)
_MASK52 = np.uint64(0x000FFFFFFFFFFFFF)
_MASK8 = np.uint64(0xFF)


@njit(inline="always")
def mix64(z):
    z = (z ^ (z >> np.uint64(30))) * _U_M1
    z = (z ^ (z >> np.uint64(27))) * _U_M2
    return z ^ (z >> np.uint64(31))


@njit(inline="always")
def raw_word(key, g):
    return mix64(key + (np.uint64(g) + _U1) * _U_GAMMA)


@njit
def _next(buf, mode, arr):
    # mode 0: SplitMix64 state in buf[0]; mode 1: replay arr from position buf[0]
    if mode == 0:
        buf[0] = buf[0] + _U_GAMMA
        return mix64(buf[0])
    v = arr[np.int64(buf[0])]
    buf[0] = buf[0] + _U1
    return v


@njit
def _next_double(buf, mode, arr):
    return np.float64(_next(buf, mode, arr) >> _U11) * (1.0 / 9007199254740992.0)


@njit
def _ziggurat(r, buf, mode, arr, ki, wi, fi):
    while True:
        idx = np.int64(r & _MASK8)
        r = r >> _U8
        sign = r & _U1
        rabs = (r >> _U1) & _MASK52
        x = np.float64(rabs) * wi[idx]
        if sign == _U1:
            x = -x
        if rabs < ki[idx]:
            return x
        if idx == 0:
            while True:
                xx = -ZIG_INV_R * math.log1p(-_next_double(buf, mode, arr))
                yy = -math.log1p(-_next_double(buf, mode, arr))
                if yy + yy > xx * xx:
                    if ((rabs >> _U8) & _U1) == _U1:
                        return -(ZIG_R + xx)
                    return ZIG_R + xx
        else:
            if (fi[idx - 1] - fi[idx]) * _next_double(buf, mode, arr) + fi[idx] < math.exp(
                -0.5 * x * x
            ):
                return x
        r = _next(buf, mode, arr)


# The tables are read as globals inside the hot path: numba freezes them
# as constants, which avoids per-call reference counting on array arguments.


@njit
def normal_slow(r, key, g):
    buf = np.empty(1, dtype=np.uint64)
    buf[0] = mix64(key ^ ((np.uint64(g) + _U1) * _U_GAMMA2))
    return _ziggurat(r, buf, 0, buf, KI, WI, FI)


@njit(inline="always")
def normal_at(key, g):
    """N(0,1) draw number ``g`` of stream ``key``."""
    r = raw_word(key, g)
    idx = np.int64(r & _MASK8)
    rabs = (r >> np.uint64(9)) & _MASK52
    if rabs < KI[idx]:
        x = np.float64(rabs) * WI[idx]
        if ((r >> _U8) & _U1) == _U1:
            x = -x
    else:
        x = normal_slow(r, key, g)
    return x


@njit(cache=True)
def _normals_kernel(key, counters):
    out = np.empty(counters.size)
    for i in range(counters.size):
        out[i] = normal_at(key, counters[i])
    return out


def standard_normals(key: int, counters) -> np.ndarray:
    """Vectorized ``normal_at`` over an array of counters."""
    c = np.ascontiguousarray(counters, dtype=np.int64)
    return _normals_kernel(np.uint64(key), c.ravel()).reshape(c.shape)


@njit
def _replay_kernel(raws, n, ki, wi, fi):
    out = np.empty(n)
    buf = np.zeros(1, dtype=np.uint64)
    for i in range(n):
        r = _next(buf, 1, raws)
        out[i] = _ziggurat(r, buf, 1, raws, ki, wi, fi)
    return out, np.int64(buf[0])


def normals_from_raw(raws, n: int):
    """Run the ziggurat over a given stream of raw 64-bit words.

    Returns ``(normals, words_consumed)``.  Used to check the transform
    against numpy on the same raw stream.
    """
    raws = np.ascontiguousarray(raws, dtype=np.uint64)
    return _replay_kernel(raws, int(n), KI, WI, FI)
