"""Periodic lattice geometry and its decomposition into coarse cells.

Site indexing is row-major with axis 0 slowest: in d=2 the site at
coordinates ``(i0, i1)`` has index ``i0 * lengths[1] + i1``; in d=1 the
index is the coordinate itself.  All boundaries are periodic.

Distances are periodic per axis; in d=2 the site metric is Chebyshev
(``max`` over axes), so "within range L" means an L-box around a site.
This is the metric used to build cell closures, and it dominates the
nearest-neighbour (axis-aligned) adjacency the built-in models read.

A configuration is a length-N ``numpy`` integer array of spin values.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError

__all__ = ["Lattice", "Decomposition", "build_lattice", "decompose",
           "sites_within", "empty_configuration"]


@dataclass(frozen=True)
class Lattice:
    """Finite periodic lattice in 1 or 2 dimensions."""

    dimension: int
    lengths: tuple
    n_sites: int
    periodic: bool = True

    def coords(self, x):
        """Row-major coordinates of site index x."""
        if self.dimension == 1:
            return (x,)
        return divmod(x, self.lengths[1])

    def index(self, coords):
        if self.dimension == 1:
            return coords[0] % self.lengths[0]
        i0 = coords[0] % self.lengths[0]
        i1 = coords[1] % self.lengths[1]
        return i0 * self.lengths[1] + i1

    def neighbor_table(self):
        """(N, 2d) array; direction order +axis0, -axis0, +axis1, -axis1."""
        n = self.n_sites
        d = self.dimension
        nbr = np.empty((n, 2 * d), dtype=np.int64)
        for x in range(n):
            c = list(self.coords(x))
            j = 0
            for axis in range(d):
                for step in (1, -1):
                    cc = list(c)
                    cc[axis] = (cc[axis] + step) % self.lengths[axis]
                    nbr[x, j] = self.index(cc)
                    j += 1
        return nbr

    def distance(self, x, y):
        """Periodic distance: |x-y| in d=1, Chebyshev in d=2."""
        cx, cy = self.coords(x), self.coords(y)
        best = 0
        for axis in range(self.dimension):
            delta = abs(cx[axis] - cy[axis])
            delta = min(delta, self.lengths[axis] - delta)
            best = max(best, delta)
        return best


@dataclass(frozen=True)
class Decomposition:
    """Partition of a lattice into q^d coarse cells with two-group coloring.

    ``cells[m]`` lists the sites of cell m (ascending); ``group1``/``group2``
    hold the cell ids of the two stripe groups along axis 0; ``boundaries[m]``
    is the closure ring of cell m (all sites within distance L, outside it).
    """

    lattice: Lattice
    q: int
    interaction_range: int
    cells: np.ndarray            # (M, q^d) int64
    group1: np.ndarray           # cell ids, ascending
    group2: np.ndarray
    boundaries: tuple            # per-cell int64 arrays
    site_cell: np.ndarray = field(repr=False)  # (N,) cell id of each site

    @property
    def n_cells(self):
        return self.cells.shape[0]

    @property
    def cell_size(self):
        return self.cells.shape[1]

    def group_of(self, m):
        return 1 if m in set(self.group1.tolist()) else 2


def build_lattice(d, lengths):
    """Finite periodic lattice with d in {1, 2}.

    Sides of length 1 are allowed (the ring wraps onto itself); the
    two-state-chain oracle tests rely on single-site lattices.
    """
    if d not in (1, 2):
        raise ConfigurationError(f"dimension must be 1 or 2, got {d}")
    lengths = tuple(int(v) for v in lengths)
    if len(lengths) != d:
        raise ConfigurationError(
            f"expected {d} side lengths, got {len(lengths)}")
    if any(v < 1 for v in lengths):
        raise ConfigurationError(f"side lengths must be >= 1, got {lengths}")
    n = 1
    for v in lengths:
        n *= v
    return Lattice(dimension=d, lengths=lengths, n_sites=n)


def empty_configuration(lat):
    return np.zeros(lat.n_sites, dtype=np.int8)


def sites_within(lat, x, r):
    """All sites y != x with periodic distance(x, y) <= r, ascending."""
    if r < 0:
        raise ConfigurationError(f"radius must be >= 0, got {r}")
    if r == 0:
        return []
    out = []
    cx = lat.coords(x)
    if lat.dimension == 1:
        for dx in range(-r, r + 1):
            y = lat.index((cx[0] + dx,))
            if y != x:
                out.append(y)
    else:
        for dx in range(-r, r + 1):
            for dy in range(-r, r + 1):
                y = lat.index((cx[0] + dx, cx[1] + dy))
                if y != x:
                    out.append(y)
    return sorted(set(out))


def _cell_sites(lat, q, cell_coords):
    """Sites of the q^d block whose cell-grid coordinates are given."""
    if lat.dimension == 1:
        (c0,) = cell_coords
        return [c0 * q + i for i in range(q)]
    c0, c1 = cell_coords
    sites = []
    for i0 in range(c0 * q, (c0 + 1) * q):
        for i1 in range(c1 * q, (c1 + 1) * q):
            sites.append(i0 * lat.lengths[1] + i1)
    return sites


def decompose(lat, q, interaction_range):
    """Partition the lattice into q^d cells with alternating stripe groups.

    Requires q > interaction_range (so same-group closures cannot touch),
    every side length divisible by q, and an even stripe count along axis 0
    (so the two-coloring is consistent under periodic wrap).
    """
    q = int(q)
    L = int(interaction_range)
    if q <= 0:
        raise ConfigurationError(f"cell size q must be positive, got {q}")
    if L < 0:
        raise ConfigurationError(f"interaction range must be >= 0, got {L}")
    if q <= L:
        raise ConfigurationError(
            f"cell too small for interaction range: q={q} <= L={L}")
    for axis, length in enumerate(lat.lengths):
        if length % q != 0:
            raise ConfigurationError(
                f"lattice/cell mismatch: length {length} on axis {axis} "
                f"is not divisible by q={q}")
    n_axis = [length // q for length in lat.lengths]
    if n_axis[0] % 2 != 0:
        raise ConfigurationError(
            f"group coloring inconsistent under periodicity: "
            f"{n_axis[0]} cells along axis 0 (need an even count)")

    cell_grid = [(c0,) for c0 in range(n_axis[0])] if lat.dimension == 1 else \
        [(c0, c1) for c0 in range(n_axis[0]) for c1 in range(n_axis[1])]
    m_cells = len(cell_grid)
    cells = np.empty((m_cells, q ** lat.dimension), dtype=np.int64)
    site_cell = np.full(lat.n_sites, -1, dtype=np.int64)
    group1, group2 = [], []
    for m, cc in enumerate(cell_grid):
        sites = _cell_sites(lat, q, cc)
        cells[m] = sites
        site_cell[sites] = m
        (group1 if cc[0] % 2 == 0 else group2).append(m)

    boundaries = []
    for m in range(m_cells):
        ring = set()
        for x in cells[m]:
            ring.update(sites_within(lat, int(x), L))
        ring.difference_update(cells[m].tolist())
        boundaries.append(np.array(sorted(ring), dtype=np.int64))

    return Decomposition(lattice=lat, q=q, interaction_range=L,
                         cells=cells,
                         group1=np.array(group1, dtype=np.int64),
                         group2=np.array(group2, dtype=np.int64),
                         boundaries=tuple(boundaries),
                         site_cell=site_cell)
