"""Exact small-system reference via dense generator matrices.

States are encoded little-endian base-|S|: configuration s maps to
integer sum_x s(x) * |S|^x.  The generator matrix is column-oriented,
Q[i, j] = rate of the jump j -> i for i != j, and every column sums to
zero, so probability column vectors evolve as dv/dt = Q v.

``expm_apply`` evaluates e^{tQ} v by scaling and squaring with a
truncated Taylor series on the shifted matrix (trace/D shift folded into
each squaring block), relative tolerance 1e-10 by default -- far below
every statistical tolerance used in the acceptance tests.

The state space is capped at 4096 states; everything here is a
desk-scale oracle, not a production path.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import ResourceError, UsageError
from .models import apply_event, local_events

__all__ = ["DenseGenerator", "build_generator", "expm_apply",
           "exact_expectation", "splitting_expectation", "commutator",
           "encode_state", "decode_state"]

STATE_CAP = 4096


def encode_state(sigma, base=2):
    code = 0
    weight = 1
    for v in sigma:
        code += int(v) * weight
        weight *= base
    return code


def decode_state(code, n_sites, base=2):
    sigma = np.empty(n_sites, dtype=np.int8)
    for x in range(n_sites):
        sigma[x] = code % base
        code //= base
    return sigma


@dataclass(frozen=True)
class DenseGenerator:
    """Column-oriented CTMC generator restricted to events in a site set."""

    matrix: np.ndarray
    n_sites: int
    base: int

    @property
    def dim(self):
        return self.matrix.shape[0]


def build_generator(model, lat, sites):
    """Dense generator of all events rooted in ``sites``.

    The full lattice gives the complete generator; a cell or group gives
    the corresponding restricted term of the additive decomposition.
    """
    base = model.spin_max + 1
    n = lat.n_sites
    dim = base ** n
    if dim > STATE_CAP:
        raise ResourceError(
            f"state space {base}^{n} = {dim} exceeds cap {STATE_CAP}")
    q = np.zeros((dim, dim))
    for j in range(dim):
        sigma = decode_state(j, n, base)
        for event in local_events(model, lat, sigma, sites):
            target = apply_event(np.array(sigma, copy=True), event)
            i = encode_state(target, base)
            q[i, j] += event.rate
            q[j, j] -= event.rate
    return DenseGenerator(matrix=q, n_sites=n, base=base)


def _as_matrix(gen):
    return gen.matrix if isinstance(gen, DenseGenerator) else np.asarray(gen)


def _taylor_apply(m, w, rtol, max_terms=400):
    acc = w.copy()
    term = w.copy()
    small_streak = 0
    for k in range(1, max_terms):
        term = m @ term / k
        acc += term
        tn = np.linalg.norm(term, np.inf)
        if tn <= rtol * np.linalg.norm(acc, np.inf):
            small_streak += 1
            if small_streak >= 2:  # two consecutive small terms
                return acc
        else:
            small_streak = 0
    raise RuntimeError("matrix exponential Taylor series did not converge")


def expm_apply(gen, v, t, rtol=1e-10):
    """e^{tQ} v by scaling-and-squaring with a truncated Taylor series."""
    if t < 0:
        raise UsageError(f"time must be >= 0, got {t}")
    q = _as_matrix(gen)
    w = np.array(v, dtype=np.float64, copy=True)
    if t == 0:
        return w
    a = t * q
    dim = a.shape[0]
    mu = np.trace(a) / dim
    a = a - mu * np.eye(dim)
    norm1 = float(np.abs(a).sum(axis=0).max())
    s = int(np.ceil(np.log2(norm1))) if norm1 > 1.0 else 0
    blocks = 2 ** s
    a *= 1.0 / blocks
    eta = math.exp(mu / blocks)  # shift folded into each block
    for _ in range(blocks):
        w = _taylor_apply(a, w, rtol)
        w *= eta
    return w


def _observable_vector(f, n_sites, base):
    dim = base ** n_sites
    vals = np.empty(dim)
    for i in range(dim):
        vals[i] = f(decode_state(i, n_sites, base))
    return vals


def _point_mass(zeta, base):
    dim = base ** len(zeta)
    v = np.zeros(dim)
    v[encode_state(zeta, base)] = 1.0
    return v


def exact_expectation(model, lat, f, t, zeta):
    """E[f(sigma_t)] for the full dynamics started at configuration zeta."""
    gen = build_generator(model, lat, range(lat.n_sites))
    v = expm_apply(gen, _point_mass(zeta, gen.base), t)
    return float(_observable_vector(f, gen.n_sites, gen.base) @ v)


def splitting_expectation(l1, l2, scheme, dt, n_windows, f, zeta):
    """Noise-free expectation under the exact split product.

    Factors are applied in the chronological order of the stochastic
    scheduler (group 1 first), acting on the distribution of the chain:
    per window the Lie product is e^{dt Q2} e^{dt Q1} and the Strang
    product e^{dt/2 Q1} e^{dt Q2} e^{dt/2 Q1}, read right to left.
    """
    q1, q2 = _as_matrix(l1), _as_matrix(l2)
    if q1.shape != q2.shape:
        raise UsageError("split generators have incompatible dimensions")
    gen = l1 if isinstance(l1, DenseGenerator) else None
    n_sites = gen.n_sites if gen else len(zeta)
    base = gen.base if gen else 2
    scheme = scheme.lower()
    if scheme not in ("lie", "strang"):
        raise UsageError(f"scheme must be lie or strang, got {scheme!r}")
    v = _point_mass(zeta, base)
    for _ in range(n_windows):
        if scheme == "lie":
            v = expm_apply(q1, v, dt)
            v = expm_apply(q2, v, dt)
        else:
            v = expm_apply(q1, v, dt / 2)
            v = expm_apply(q2, v, dt)
            v = expm_apply(q1, v, dt / 2)
    return float(_observable_vector(f, n_sites, base) @ v)


def commutator(l1, l2):
    """Q1 Q2 - Q2 Q1 as a plain matrix."""
    q1, q2 = _as_matrix(l1), _as_matrix(l2)
    return q1 @ q2 - q2 @ q1
