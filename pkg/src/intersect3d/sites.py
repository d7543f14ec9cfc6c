"""Open-addressing sets of lattice sites for numba kernels.

Sites are packed into one uint64 key, 21 bits per coordinate (offset by 2**20).
Tables are reused across pairs with generation stamps: a slot is occupied iff
its stamp equals the current generation, so clearing is O(1).
"""
import numpy as np
from numba import njit, uint64

COORD_LIMIT = 1 << 20
_OFFSET = 1 << 20
_MASK21 = (1 << 21) - 1


@njit(cache=True, nogil=True, inline='always')
def in_range(x, y, z):
    return (-COORD_LIMIT < x < COORD_LIMIT and -COORD_LIMIT < y < COORD_LIMIT
            and -COORD_LIMIT < z < COORD_LIMIT)


@njit(cache=True, nogil=True, inline='always')
def pack(x, y, z):
    return ((uint64(x + _OFFSET) << uint64(42)) | (uint64(y + _OFFSET) << uint64(21))
            | uint64(z + _OFFSET))


@njit(cache=True, nogil=True, inline='always')
def unpack(key):
    m = uint64(_MASK21)
    x = np.int64(key >> uint64(42)) - _OFFSET
    y = np.int64((key >> uint64(21)) & m) - _OFFSET
    z = np.int64(key & m) - _OFFSET
    return x, y, z


@njit(cache=True, nogil=True, inline='always')
def _mix(key):
    # splitmix64 finalizer
    key ^= key >> uint64(30)
    key *= uint64(0xBF58476D1CE4E5B9)
    key ^= key >> uint64(27)
    key *= uint64(0x94D049BB133111EB)
    key ^= key >> uint64(31)
    return key


def new_table(capacity):
    """Return (keys, stamps) arrays; ``capacity`` is rounded up to a power of two."""
    cap = 1 << max(4, int(capacity - 1).bit_length())
    return np.zeros(cap, dtype=np.uint64), np.zeros(cap, dtype=np.int64)


def capacity_for(n_sites):
    # load factor <= 1/2
    return 1 << max(4, int(2 * n_sites + 1).bit_length())


@njit(cache=True, nogil=True, inline='always')
def _slot(key, mask):
    return np.int64(_mix(key) & uint64(mask))


@njit(cache=True, nogil=True, inline='always')
def contains(keys, stamps, gen, key):
    mask = keys.shape[0] - 1
    i = _slot(key, mask)
    while stamps[i] == gen:
        if keys[i] == key:
            return True
        i = (i + 1) & mask
    return False


@njit(cache=True, nogil=True, inline='always')
def insert(keys, stamps, gen, key):
    """Insert ``key``; returns False if it was already present."""
    mask = keys.shape[0] - 1
    i = _slot(key, mask)
    while stamps[i] == gen:
        if keys[i] == key:
            return False
        i = (i + 1) & mask
    stamps[i] = gen
    keys[i] = key
    return True


@njit(cache=True, nogil=True)
def fill_from_points(keys, stamps, gen, pts):
    """Insert every non-origin row of an (L, 3) integer array."""
    for i in range(pts.shape[0]):
        x, y, z = pts[i, 0], pts[i, 1], pts[i, 2]
        if x == 0 and y == 0 and z == 0:
            continue
        insert(keys, stamps, gen, pack(x, y, z))


class SiteTable:
    """Growable table for kernels that need a fresh set per call."""

    def __init__(self, n_sites):
        self.keys, self.stamps = new_table(capacity_for(n_sites))
        self.gen = 0

    def next_generation(self, n_sites):
        if capacity_for(n_sites) > self.keys.shape[0]:
            self.keys, self.stamps = new_table(capacity_for(n_sites))
            self.gen = 0
        self.gen += 1
        return self.gen
