"""Retarded Casimir-Polder coefficients for clusters of neutral atoms.

Two independent routes to the same physics: a scalar worldline path-integral
formalism (TE and TM channels) and the electromagnetic Green-tensor
scattering expansion.  The two agree for pairs and disagree for triples,
where polarization mixing enters; this package computes both and quantifies
the gap.

All computations use natural units with the reference length scale set by
the atomic cluster (see `core.nondimensionalize`).
"""

__version__ = "0.1.0"

from .core import (
    AtomSystem,
    CoefficientResult,
    DimensionConfig,
    GeometryError,
    nondimensionalize,
)

__all__ = [
    "AtomSystem",
    "CoefficientResult",
    "DimensionConfig",
    "GeometryError",
    "nondimensionalize",
]
