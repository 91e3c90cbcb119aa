"""Shared domain types and nondimensionalization conventions.

Everything downstream works in natural units (hbar = c = eps0 = 1) with the
configuration's reference separation scaled to 1.  Coefficients are quoted
dimensionless under two fixed conventions:

  two_body:    V = value * hbar c a1 a2 / ((4 pi eps0)^2 r^7)
  three_body:  V = value * hbar c a1 a2 a3 / (pi (4 pi eps0)^3 R^10)

so the polarizability product and the power-law separation dependence are
carried by the convention, never by the value.
"""

from dataclasses import dataclass, replace

import numpy as np

METHODS = frozenset(
    {"worldline", "green_tensor_planewave", "green_tensor_oracle", "monte_carlo"}
)
MODES = frozenset({"TE", "TM", "cross_TE_TM", "total"})
CONVENTIONS = frozenset({"two_body", "three_body"})


class GeometryError(ValueError):
    """Raised for degenerate or otherwise invalid atom configurations."""


@dataclass(frozen=True)
class AtomSystem:
    """Atom positions (units of a scale R) and static polarizabilities.

    positions: (N, 3) array-like; polarizabilities: length-N array-like.
    The instance is treated as an immutable value record; the arrays are
    set non-writeable on construction.
    """

    positions: np.ndarray
    polarizabilities: np.ndarray
    scale: float = 1.0
    nondimensional: bool = False

    def __post_init__(self):
        pos = np.atleast_2d(np.asarray(self.positions, dtype=float))
        if pos.ndim != 2 or pos.shape[1] != 3:
            raise GeometryError(f"positions must be (N, 3), got shape {pos.shape}")
        alpha = np.atleast_1d(np.asarray(self.polarizabilities, dtype=float))
        if alpha.shape != (pos.shape[0],):
            raise GeometryError(
                f"need one polarizability per atom, got {alpha.shape[0]} "
                f"for {pos.shape[0]} atoms"
            )
        if pos.shape[0] < 1:
            raise GeometryError("need at least one atom")
        if not np.all(np.isfinite(pos)):
            raise GeometryError("positions must be finite")
        if not np.all(np.isfinite(alpha)) or np.any(alpha < 0):
            raise GeometryError("polarizabilities must be finite and >= 0")
        if pos.shape[0] > 1 and self.min_separation_of(pos) <= 0.0:
            raise GeometryError("coincident atoms: all pairwise positions "
                                "must be distinct")
        pos.setflags(write=False)
        alpha.setflags(write=False)
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "polarizabilities", alpha)

    @staticmethod
    def min_separation_of(pos):
        diff = pos[:, None, :] - pos[None, :, :]
        dists = np.sqrt((diff**2).sum(axis=-1))
        n = pos.shape[0]
        return float(dists[~np.eye(n, dtype=bool)].min())

    @property
    def n_atoms(self):
        return self.positions.shape[0]

    def min_separation(self):
        if self.n_atoms < 2:
            return 0.0
        return self.min_separation_of(self.positions)

    def max_separation(self):
        if self.n_atoms < 2:
            return 0.0
        diff = self.positions[:, None, :] - self.positions[None, :, :]
        return float(np.sqrt((diff**2).sum(axis=-1)).max())

    def pairwise_distances(self):
        diff = self.positions[:, None, :] - self.positions[None, :, :]
        return np.sqrt((diff**2).sum(axis=-1))


@dataclass(frozen=True)
class CoefficientResult:
    """A dimensionless Casimir-Polder coefficient with provenance tags."""

    value: float
    error_estimate: float
    method: str
    mode: str
    order: int
    convention: str

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}")
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.convention not in CONVENTIONS:
            raise ValueError(f"unknown convention {self.convention!r}")
        err = float(self.error_estimate)
        if not np.isfinite(err) or err < 0:
            raise ValueError("error_estimate must be finite and >= 0")


@dataclass(frozen=True)
class DimensionConfig:
    """Spacetime dimension D; spatial dimension is always d = D - 1."""

    D: int = 4

    def __post_init__(self):
        if self.D < 2:
            raise ValueError("need D >= 2")

    @property
    def d(self):
        return self.D - 1


def nondimensionalize(system):
    """Rescale positions so the reference separation (max pairwise) is 1.

    Returns a new AtomSystem flagged nondimensional, with the applied scale
    recorded (composed with any prior scale).  A single atom passes
    through with scale 1.
    """
    if system.n_atoms == 1:
        return replace(system, nondimensional=True)
    ref = system.max_separation()
    if ref <= 0.0:
        raise GeometryError("zero reference separation")
    return AtomSystem(
        positions=system.positions / ref,
        polarizabilities=system.polarizabilities,
        scale=system.scale * ref,
        nondimensional=True,
    )
