"""Counter-based random streams usable from numba kernels.

Every logical purpose (edges of vertex i, window w of a graphical construction,
replica k, ...) gets its own splitmix64 stream whose starting state is a hash
of ``(key, index)``. Streams never depend on the order in which they are
consumed, so parallel or partial evaluation gives identical results.
"""

import math

import numpy as np
from numba import njit

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_INV53 = 1.0 / 9007199254740992.0

# Purpose tags; arbitrary distinct constants.
TAG_EDGES = 0x45444745
TAG_REFERENCE = 0x52454645
TAG_WINDOW = 0x57494E44
TAG_REPLICA = 0x5245504C


@njit(cache=True, inline="always")
def mix64(z):
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


@njit(cache=True)
def stream_key(key, index):
    """Starting state of substream ``index`` of stream ``key``."""
    return mix64(mix64(np.uint64(key) + _GOLDEN) ^ (np.uint64(index) * _GOLDEN + _M2))


@njit(cache=True, inline="always")
def next_uniform(state):
    """Advance ``state`` (1-element uint64 array) and return a draw in (0, 1)."""
    state[0] += _GOLDEN
    z = mix64(state[0])
    return (np.float64(z >> _S11) + 0.5) * _INV53


def derive_key(seed: int, tag: int) -> int:
    """Derive a 64-bit stream key from a user seed and a purpose tag."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(tag),))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def replica_seeds(root_seed: int, n: int) -> list:
    """Per-replica seeds, derived by ``SeedSequence.spawn`` from ``root_seed``.

    Replica ``k`` always receives the same seed regardless of ``n`` or of how
    replicas are scheduled.
    """
    children = np.random.SeedSequence(int(root_seed)).spawn(n)
    return [int(c.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1)) for c in children]


# -- exponential draws: 256-strip ziggurat on 53-bit integers ---------------

_ZIG_R = 7.69711747013104972
_ZIG_V = 0.0039496598225815571993


def _ziggurat_tables():
    m = 2.0 ** 53
    ke = np.zeros(256, np.uint64)
    we = np.zeros(256)
    fe = np.zeros(256)
    de = te = _ZIG_R
    q = _ZIG_V / np.exp(-de)
    ke[0] = np.uint64((de / q) * m)
    we[0] = q / m
    we[255] = de / m
    fe[0] = 1.0
    fe[255] = np.exp(-de)
    for i in range(254, 0, -1):
        de = -np.log(_ZIG_V / de + np.exp(-de))
        ke[i + 1] = np.uint64((de / te) * m)
        te = de
        fe[i] = np.exp(-de)
        we[i] = de / m
    return ke, we, fe


_ZKE, _ZWE, _ZFE = _ziggurat_tables()
_S3 = np.uint64(3)
_S8 = np.uint64(8)
_LOW8 = np.uint64(0xFF)


@njit(cache=True, inline="always")
def _u01(z):
    return (np.float64(mix64(z) >> _S11) + 0.5) * _INV53


@njit(cache=True, inline="always")
def exp_draw(z):
    """Standard exponential from stream state ``z``; returns (draw, new state)."""
    while True:
        z += _GOLDEN
        ri = mix64(z) >> _S3
        idx = np.int64(ri & _LOW8)
        ri = ri >> _S8
        x = np.float64(np.int64(ri)) * _ZWE[idx]
        if ri < _ZKE[idx]:
            return x, z
        z += _GOLDEN
        u = _u01(z)
        if idx == 0:
            return _ZIG_R - math.log(u), z
        if (_ZFE[idx - 1] - _ZFE[idx]) * u + _ZFE[idx] < math.exp(-x):
            return x, z
