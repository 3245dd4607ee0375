"""Counter-keyed random number streams.

Every stream is an xoshiro256++ generator whose 256-bit state is derived
from a 64-bit key tuple (base seed, replica, domain, cell, window, factor)
by a splitmix64 absorb/expand construction:

    k = base_seed
    for w in (replica, domain, cell, window, factor):
        k = splitmix64_output(k XOR w)        # absorb one key word
    state[i] = splitmix64 stream seeded at k  # expand to 4 words

where ``splitmix64_output(x)`` advances x by the golden-ratio increment and
applies the standard splitmix64 finalizer.  The domain word keeps simulation,
schedule-drawing, and initial-condition streams disjoint.  Identical keys give
identical byte streams on every platform and for every worker count.

Uniform doubles are ``((x >> 11) + 1) * 2^-53``, i.e. in the half-open
interval (0, 1]; this keeps ``-log(u)`` finite.
"""

import numpy as np
from numba import njit

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_S17 = np.uint64(17)
_S23 = np.uint64(23)
_S41 = np.uint64(41)
_S45 = np.uint64(45)
_S19 = np.uint64(19)
_INV53 = 1.0 / 9007199254740992.0  # 2^-53

# domain words for stream derivation
DOMAIN_SIM = 1    # event simulation inside a cell/window/factor
DOMAIN_PLAN = 2   # randomized schedule draws
DOMAIN_INIT = 3   # random initial configurations
DOMAIN_SSA = 4    # serial whole-lattice engine (disjoint from cell streams)


@njit(cache=True, nogil=True)
def _splitmix64(state):
    state = state + _GOLDEN
    z = state
    z = (z ^ (z >> _S30)) * _MIX1
    z = (z ^ (z >> _S27)) * _MIX2
    return state, z ^ (z >> _S31)


@njit(cache=True, nogil=True)
def derive_state(base_seed, replica, domain, cell, window, factor):
    """256-bit xoshiro256++ state from a 6-word key (see module docstring)."""
    k = base_seed
    _, k = _splitmix64(k ^ replica)
    _, k = _splitmix64(k ^ domain)
    _, k = _splitmix64(k ^ cell)
    _, k = _splitmix64(k ^ window)
    _, k = _splitmix64(k ^ factor)
    s = np.empty(4, np.uint64)
    st = k
    for i in range(4):
        st, z = _splitmix64(st)
        s[i] = z
    if s[0] == 0 and s[1] == 0 and s[2] == 0 and s[3] == 0:
        s[0] = _GOLDEN  # all-zero state is invalid for xoshiro
    return s


@njit(cache=True, nogil=True)
def next_u64(s):
    """One xoshiro256++ output word; mutates the state array in place."""
    x = s[0] + s[3]
    result = ((x << _S23) | (x >> _S41)) + s[0]
    t = s[1] << _S17
    s[2] ^= s[0]
    s[3] ^= s[1]
    s[1] ^= s[2]
    s[0] ^= s[3]
    s[2] ^= t
    s[3] = (s[3] << _S45) | (s[3] >> _S19)
    return result


@njit(cache=True, nogil=True)
def next_uniform(s):
    """Uniform double in (0, 1]."""
    return (np.float64(next_u64(s) >> _S11) + 1.0) * _INV53


def make_state(base_seed, replica=0, domain=DOMAIN_SIM, cell=0, window=0, factor=0):
    """Python-side wrapper around :func:`derive_state` with safe casting."""
    u = np.uint64
    mask = 0xFFFFFFFFFFFFFFFF
    return derive_state(u(int(base_seed) & mask), u(int(replica) & mask),
                        u(int(domain) & mask), u(int(cell) & mask),
                        u(int(window) & mask), u(int(factor) & mask))
