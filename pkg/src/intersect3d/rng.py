"""Counter-based random streams (Philox4x32-10).

A stream is identified by ``(master_seed, stream_id)``. The 64-bit master seed
is the Philox key and the stream id fills the upper half of the 128-bit
counter, so any stream can be produced without knowing about any other one.

All hot-path consumers are numba kernels that operate on the raw state array
(``RandomStream.state``); the Python class is a thin convenience wrapper.
"""
from dataclasses import dataclass

import numpy as np
from numba import njit, uint64

from .errors import InvalidParameterError

# state layout (uint64[8])
SEED, SID, CTR, SPARE, HAS_SPARE, BITS, NBITS = range(7)
STATE_SIZE = 8

_M0 = uint64(0xD2511F53)
_M1 = uint64(0xCD9E8D57)
_W0 = uint64(0x9E3779B9)
_W1 = uint64(0xBB67AE85)
_MASK32 = uint64(0xFFFFFFFF)
_U64_MAX = 2**64 - 1


@njit(cache=True, nogil=True, inline='always')
def philox4x32(c0, c1, c2, c3, k0, k1):
    """Ten-round Philox4x32 bijection; all arguments are uint64 holding 32-bit values."""
    for r in range(10):
        p0 = _M0 * c0
        p1 = _M1 * c2
        hi0 = p0 >> uint64(32)
        lo0 = p0 & _MASK32
        hi1 = p1 >> uint64(32)
        lo1 = p1 & _MASK32
        c0 = (hi1 ^ c1 ^ k0) & _MASK32
        c1 = lo1
        c2 = (hi0 ^ c3 ^ k1) & _MASK32
        c3 = lo0
        if r < 9:
            k0 = (k0 + _W0) & _MASK32
            k1 = (k1 + _W1) & _MASK32
    return c0, c1, c2, c3


@njit(cache=True, nogil=True)
def init_state(state, seed, stream_id):
    state[SEED] = uint64(seed)
    state[SID] = uint64(stream_id)
    state[CTR] = uint64(0)
    state[SPARE] = uint64(0)
    state[HAS_SPARE] = uint64(0)
    state[BITS] = uint64(0)
    state[NBITS] = uint64(0)


@njit(cache=True, nogil=True, inline='always')
def next_u64(state):
    if state[HAS_SPARE] != uint64(0):
        state[HAS_SPARE] = uint64(0)
        return state[SPARE]
    ctr = state[CTR]
    sid = state[SID]
    seed = state[SEED]
    x0, x1, x2, x3 = philox4x32(
        ctr & _MASK32, ctr >> uint64(32), sid & _MASK32, sid >> uint64(32),
        seed & _MASK32, seed >> uint64(32))
    state[CTR] = ctr + uint64(1)
    state[SPARE] = x2 | (x3 << uint64(32))
    state[HAS_SPARE] = uint64(1)
    return x0 | (x1 << uint64(32))


@njit(cache=True, nogil=True, inline='always')
def next_double(state):
    """Uniform on [0, 1) with 53 random bits."""
    return float(next_u64(state) >> uint64(11)) * (1.0 / 9007199254740992.0)


@njit(cache=True, nogil=True, inline='always')
def step6(state):
    """Uniform integer in 0..5: bytes below 252 are accepted and reduced mod 6.

    Exact (252 = 6 * 42) and rejects only 1 byte in 64, which keeps the
    branch predictable in the stepping loops.
    """
    while True:
        if state[NBITS] == uint64(0):
            state[BITS] = next_u64(state)
            state[NBITS] = uint64(8)
        v = state[BITS] & uint64(255)
        state[BITS] = state[BITS] >> uint64(8)
        state[NBITS] = state[NBITS] - uint64(1)
        if v < uint64(252):
            return np.int64(v % uint64(6))


@njit(cache=True, nogil=True, inline='always')
def normal_pair(state):
    # Box-Muller; 1 - u keeps the log argument in (0, 1]
    u1 = 1.0 - next_double(state)
    u2 = next_double(state)
    r = np.sqrt(-2.0 * np.log(u1))
    t = 2.0 * np.pi * u2
    return r * np.cos(t), r * np.sin(t)


@njit(cache=True, nogil=True, inline='always')
def gaussian3_into(state, sigma, out):
    g0, g1 = normal_pair(state)
    g2, _ = normal_pair(state)
    out[0] = sigma * g0
    out[1] = sigma * g1
    out[2] = sigma * g2


@njit(cache=True, nogil=True)
def _fill_u64(state, out):
    for i in range(out.shape[0]):
        out[i] = next_u64(state)


@njit(cache=True, nogil=True)
def _fill_step6(state, out):
    for i in range(out.shape[0]):
        out[i] = step6(state)


@njit(cache=True, nogil=True)
def _fill_gaussian3(state, sigma, out):
    for i in range(out.shape[0]):
        gaussian3_into(state, sigma, out[i])


def _check_u64(name, value):
    if not isinstance(value, (int, np.integer)) or not 0 <= int(value) <= _U64_MAX:
        raise InvalidParameterError(f"{name} must be an unsigned 64-bit integer, got {value!r}")
    return int(value)


@dataclass(frozen=True)
class SeedSpec:
    master_seed: int
    stream_id: int = 0

    def __post_init__(self):
        _check_u64("master_seed", self.master_seed)
        _check_u64("stream_id", self.stream_id)


class RandomStream:
    """Sequential view of one Philox stream."""

    def __init__(self, seed: SeedSpec):
        self.seed = seed
        self.state = np.zeros(STATE_SIZE, dtype=np.uint64)
        init_state(self.state, np.uint64(seed.master_seed), np.uint64(seed.stream_id))

    def words(self, count: int) -> np.ndarray:
        out = np.empty(count, dtype=np.uint64)
        _fill_u64(self.state, out)
        return out

    def next_word(self) -> int:
        return int(next_u64(self.state))

    def uniform(self) -> float:
        return float(next_double(self.state))

    def steps6(self, count: int) -> np.ndarray:
        out = np.empty(count, dtype=np.int64)
        _fill_step6(self.state, out)
        return out

    def gaussian3(self, sigma: float, count: int | None = None) -> np.ndarray:
        if not sigma > 0:
            raise InvalidParameterError(f"sigma must be positive, got {sigma!r}")
        n = 1 if count is None else count
        out = np.empty((n, 3), dtype=np.float64)
        _fill_gaussian3(self.state, float(sigma), out)
        return out[0] if count is None else out


def derive_stream(seed: SeedSpec) -> RandomStream:
    """Fresh stream for ``seed``; equal specs give identical sequences."""
    return RandomStream(seed)


def uniform_step6(stream: RandomStream) -> int:
    return int(step6(stream.state))


def gaussian3(stream: RandomStream, sigma: float) -> np.ndarray:
    return stream.gaussian3(sigma)


def stream_id(*parts, widths):
    """Pack small non-negative integers into one 64-bit stream id.

    ``widths`` gives the bit width of each part, most significant first.
    """
    if len(parts) != len(widths) or sum(widths) > 64:
        raise InvalidParameterError("stream id layout does not fit in 64 bits")
    sid = 0
    for p, w in zip(parts, widths):
        if not 0 <= p < (1 << w):
            raise InvalidParameterError(f"stream id field {p} exceeds {w} bits")
        sid = (sid << w) | p
    return sid
