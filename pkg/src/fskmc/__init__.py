"""Fractional-step kinetic Monte Carlo on periodic lattices.

Modules: ``lattice`` (geometry and coarse-cell decomposition), ``models``
(transition mechanisms), ``kmc`` (exact serial SSA kernel), ``scheduler``
(fractional-step execution under deterministic and randomized schedules),
``observables``, ``oracle`` (dense-generator exact reference), ``harness``
(ensembles, weak-error estimation, convergence studies, CLI).
"""

__version__ = "0.1.0"
