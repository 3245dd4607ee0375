"""Exact serial SSA kernel on an arbitrary active site set.

This is the readable reference implementation of the event loop; the
harness runs the compiled twin in ``_kernels``.  Both consume random
streams identically (one uniform for the waiting time, one for the
selection scan, rates re-scanned after every event), which the test
suite checks bit for bit.

The window-end convention: an exponential draw that would land past the
end of the interval fires no event and the residual is discarded, which
is distribution-exact by memorylessness.  With zero total rate the state
is absorbing and the interval is exhausted immediately (the waiting-time
uniform is still consumed, keeping the stream aligned).
"""

import math
from dataclasses import dataclass, field

import numpy as np

from . import _rng
from ._rng import next_uniform
from .errors import UsageError
from .models import apply_event, local_events

__all__ = ["RngStream", "SimClock", "GridPathRecorder",
           "total_rate", "ssa_step", "run_interval"]


@dataclass
class RngStream:
    """xoshiro256++ stream keyed by (seed, replica, cell, window, factor)."""

    state: np.ndarray

    @classmethod
    def from_key(cls, base_seed, replica=0, cell=0, window=0, factor=0,
                 domain=_rng.DOMAIN_SIM):
        return cls(_rng.make_state(base_seed, replica, domain, cell,
                                   window, factor))

    def uniform(self):
        """Uniform double in (0, 1]."""
        return float(next_uniform(self.state))


@dataclass
class SimClock:
    t: float = 0.0
    event_count: int = 0


class GridPathRecorder:
    """Samples observables of a piecewise-constant path at fixed grid times.

    ``observe_until(t, sigma)`` records every pending grid time strictly
    before t with the current configuration (call it just before
    applying a jump at t, so a jump exactly at a grid time lands after
    the jump); ``finish(t, sigma)`` records the remaining grid times up
    to and including t.
    """

    def __init__(self, grid, observables):
        self.grid = np.asarray(grid, dtype=np.float64)
        self.observables = tuple(observables)
        self.values = np.full((len(self.grid), len(self.observables)),
                              np.nan)
        self._cursor = 0

    def skip_through(self, t):
        while self._cursor < len(self.grid) and self.grid[self._cursor] <= t:
            self._cursor += 1

    def record(self, index, sigma):
        for oi, obs in enumerate(self.observables):
            self.values[index, oi] = obs(sigma)

    def observe_until(self, t, sigma):
        while self._cursor < len(self.grid) and self.grid[self._cursor] < t:
            self.record(self._cursor, sigma)
            self._cursor += 1

    def finish(self, t, sigma):
        while self._cursor < len(self.grid) and self.grid[self._cursor] <= t:
            self.record(self._cursor, sigma)
            self._cursor += 1


def total_rate(model, lat, sigma, sites):
    """Sum of all admissible event rates rooted in ``sites``."""
    lam = 0.0
    for e in local_events(model, lat, sigma, sites):
        lam += e.rate
    return lam


def _draw_step(model, lat, sigma, sites, rng, t_now, t_end):
    """One waiting-time/selection draw; returns (event or None, t_new).

    Does not apply the event, so callers can record the pre-jump state.
    """
    events = local_events(model, lat, sigma, sites)
    lam = 0.0
    for e in events:
        lam += e.rate
    u1 = rng.uniform()
    if lam <= 0.0:
        return None, t_end
    t_new = t_now + (-math.log(u1) / lam)
    if t_new > t_end:
        return None, t_end
    u2 = rng.uniform()
    r = u2 * lam
    chosen = events[-1]
    for e in events:
        r -= e.rate
        chosen = e
        if r <= 0.0:
            break
    return chosen, t_new


def ssa_step(model, lat, sigma, sites, rng, clock, t_end):
    """Advance by one event, or exhaust the window; returns the event or None."""
    if clock.t > t_end:
        raise UsageError(f"clock.t={clock.t} is already past t_end={t_end}")
    event, t_new = _draw_step(model, lat, sigma, sites, rng, clock.t, t_end)
    clock.t = t_new
    if event is not None:
        apply_event(sigma, event)
        clock.event_count += 1
    return event


def run_interval(model, lat, sigma, sites, rng, clock, t0, t1,
                 recorder=None):
    """Repeat SSA steps over [t0, t1]; the recorder sees the cadlag path."""
    if not clock.t == t0 <= t1:
        raise UsageError(f"need clock.t == t0 <= t1, got "
                         f"clock.t={clock.t}, t0={t0}, t1={t1}")
    while True:
        event, t_new = _draw_step(model, lat, sigma, sites, rng, clock.t, t1)
        if event is None:
            if recorder is not None:
                recorder.finish(t1, sigma)
            clock.t = t1
            return sigma
        if recorder is not None:
            recorder.observe_until(t_new, sigma)
        apply_event(sigma, event)
        clock.t = t_new
        clock.event_count += 1
