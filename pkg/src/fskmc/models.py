"""Transition mechanisms: per-event rates and update rules.

Two built-in nearest-neighbour (range L=1) mechanisms on {0,1} spins:

* Arrhenius spin flip (adsorption/desorption).  At site x,

      rate = cd * (1 - s(x)) + ca * s(x) * exp(-beta * U(x)),
      U(x) = J * sum of s over the axis neighbours of x + h,

  i.e. adsorption at constant rate cd on empty sites and Arrhenius
  desorption on occupied ones.  No detailed-balance reparameterization
  is applied; the formula above is evaluated verbatim.

* Kawasaki exchange (particle-conserving hops).  An occupied site x can
  swap with an empty axis neighbour y at rate

      rate = ch * exp(-beta * J * sum of s over the axis neighbours of x).

Events are identified by (x, omega).  For spin flips omega is always 0;
for exchanges omega is the direction index into the lattice neighbour
table (+axis0, -axis0, +axis1, -axis1).  ``local_events`` enumerates
events in ascending (x, omega) order, omits zero-rate events, and keeps
every write inside the given site set: exchanges whose partner lies
outside the set are excluded (reads of frozen outside spins are fine).

The interaction range is structural: it reports which sites a rate *may*
read, so it stays 1 even when J = 0.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import UsageError

__all__ = ["Event", "ArrheniusSpinFlipModel", "KawasakiExchangeModel",
           "event_rate", "apply_event", "local_events", "interaction_range"]

FLIP = "flip"
EXCHANGE = "exchange"

# kernel dispatch codes
SPINFLIP_CODE = 0
KAWASAKI_CODE = 1


@dataclass(frozen=True)
class Event:
    """One admissible transition rooted at site x."""

    x: int
    omega: int
    rate: float
    kind: str = FLIP
    partner: int = -1  # second site of an exchange; -1 for flips


@dataclass(frozen=True)
class ArrheniusSpinFlipModel:
    beta: float = 1.0
    coupling: float = 0.0   # J
    field: float = 0.0      # h
    ca: float = 1.0         # desorption prefactor
    cd: float = 1.0         # adsorption rate

    interaction_range = 1
    spin_max = 1
    kernel_code = SPINFLIP_CODE

    def __post_init__(self):
        if self.ca < 0 or self.cd < 0 or self.beta < 0:
            raise UsageError("ca, cd and beta must be nonnegative")

    def kernel_params(self):
        return np.array([self.beta, self.coupling, self.field,
                         self.ca, self.cd], dtype=np.float64)


@dataclass(frozen=True)
class KawasakiExchangeModel:
    beta: float = 1.0
    coupling: float = 0.0   # J
    ch: float = 1.0         # hop prefactor

    interaction_range = 1
    spin_max = 1
    kernel_code = KAWASAKI_CODE

    def __post_init__(self):
        if self.ch < 0 or self.beta < 0:
            raise UsageError("ch and beta must be nonnegative")

    def kernel_params(self):
        return np.array([self.beta, self.coupling, self.ch], dtype=np.float64)


def interaction_range(model):
    return model.interaction_range


def _neighbor_sum(lat, sigma, x):
    c = lat.coords(x)
    total = 0
    for axis in range(lat.dimension):
        for step in (1, -1):
            cc = list(c)
            cc[axis] = cc[axis] + step
            total += int(sigma[lat.index(cc)])
    return total


def event_rate(model, lat, sigma, x, omega):
    """Exact rate of event (x, omega) on the current configuration."""
    if isinstance(model, ArrheniusSpinFlipModel):
        if omega != 0:
            raise UsageError(f"spin-flip events have omega=0, got {omega}")
        if sigma[x] == 0:
            return model.cd
        u = model.coupling * _neighbor_sum(lat, sigma, x) + model.field
        return model.ca * math.exp(-model.beta * u)
    if isinstance(model, KawasakiExchangeModel):
        if not 0 <= omega < 2 * lat.dimension:
            raise UsageError(f"exchange direction out of range: {omega}")
        y = _exchange_partner(lat, x, omega)
        if sigma[x] == 1 and sigma[y] == 0:
            u = model.coupling * _neighbor_sum(lat, sigma, x)
            return model.ch * math.exp(-model.beta * u)
        return 0.0
    raise UsageError(f"unknown model type {type(model).__name__}")


def _exchange_partner(lat, x, omega):
    axis, step = divmod(omega, 2)
    c = list(lat.coords(x))
    c[axis] = c[axis] + (1 if step == 0 else -1)
    return lat.index(c)


def apply_event(sigma, event):
    """Apply the update in place: toggle a flip, swap an exchange pair."""
    if event.kind == FLIP:
        sigma[event.x] = 1 - sigma[event.x]
    else:
        sigma[event.x], sigma[event.partner] = \
            sigma[event.partner], sigma[event.x]
    return sigma


def local_events(model, lat, sigma, sites):
    """Admissible events rooted in ``sites``, ascending (x, omega).

    Rates read the full configuration (frozen spins outside the set
    included); zero-rate events are omitted.  Exchange events whose
    partner site is outside the set are excluded so that all writes stay
    within the active set.
    """
    site_list = sorted(int(s) for s in sites)
    events = []
    if isinstance(model, ArrheniusSpinFlipModel):
        for x in site_list:
            r = event_rate(model, lat, sigma, x, 0)
            if r > 0.0:
                events.append(Event(x=x, omega=0, rate=r, kind=FLIP))
        return events
    in_set = set(site_list)
    for x in site_list:
        for omega in range(2 * lat.dimension):
            y = _exchange_partner(lat, x, omega)
            if y not in in_set:
                continue
            r = event_rate(model, lat, sigma, x, omega)
            if r > 0.0:
                events.append(Event(x=x, omega=omega, rate=r,
                                    kind=EXCHANGE, partner=y))
    return events
