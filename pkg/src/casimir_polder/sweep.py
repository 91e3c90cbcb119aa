"""Geometry sweep comparing the scalar worldline sum with the full total.

Three atoms are placed in a plane: A at the origin, B on the x axis at
distance b, and C at unit distance from A at an angle theta.  Sweeping
cos(theta) at fixed b traces out how the three-body coefficient depends on
the triangle shape, once through the combined scalar TE+TM worldline value
and once through the electromagnetic position-space evaluator.  The two
curves quantify where the scalar approximation breaks down.

All coefficients are quoted in the three_body convention of
:mod:`casimir_polder.core` with the reference length fixed to the A-C
distance, so rows from different grid points are directly comparable.

The scalar coefficients couple through the full polarizability trace and so
count all three Cartesian components, while the electromagnetic total is
normalized per component.  The combined scalar value is therefore reported
divided by three; the ratio is fixed and geometry independent.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .core import AtomSystem, CoefficientResult, GeometryError
from .green_tensor import DEFAULT_ORACLE_SPEC, three_body_total_general
from .quadrature import ConvergenceError, IntegrandError
from .worldline import (
    DEFAULT_THREE_BODY_SPEC,
    te_three_body_coefficient,
    tm_three_body_coefficient,
)

__all__ = [
    "DEGENERACY_RADIUS",
    "SWEEP_METHODS",
    "SweepConfig",
    "SweepRow",
    "build_geometry",
    "default_grid",
    "flag_discontinuities",
    "run_sweep",
    "scalar_total_coefficient",
]

SWEEP_METHODS = ("worldline_sum", "green_tensor")

# Geometries whose smallest pairwise distance falls below this radius are
# treated as degenerate: the r^-10 scale of the coefficient makes them
# numerically meaningless long before the atoms actually coincide.
DEGENERACY_RADIUS = 1e-3

_ROW_STATUSES = ("ok", "excluded", "failed")

# Failures that poison one grid point but leave the rest of the sweep
# meaningful.  RuntimeError covers quadrature convergence failures and the
# internal consistency guards of the evaluators; anything else (bad config,
# programming errors) should propagate.
_RECOVERABLE = (GeometryError, IntegrandError, ConvergenceError, RuntimeError)


def default_grid(n_points=41):
    """Uniform grid of cos(theta) values covering [-1, 1] inclusive."""
    if n_points < 2:
        raise ValueError("need at least two grid points")
    return tuple(float(c) for c in np.linspace(-1.0, 1.0, n_points))


@dataclass(frozen=True)
class SweepConfig:
    """Sweep request: triangle family, grid, methods, and quadrature.

    b_over_c is the ratio of the A-B distance to the (unit) A-C distance.
    The per-method quadrature specifications are separate because the
    worldline value integrates a three-dimensional proper-time simplex
    while the electromagnetic value needs a single frequency axis; None
    selects the producing module's default.
    """

    b_over_c: float
    cos_theta_grid: tuple = field(default_factory=default_grid)
    methods: tuple = SWEEP_METHODS
    worldline_spec: object = None
    green_tensor_spec: object = None

    def __post_init__(self):
        b = float(self.b_over_c)
        if not math.isfinite(b) or b <= 0.0:
            raise ValueError("b_over_c must be positive and finite")
        grid = tuple(float(c) for c in self.cos_theta_grid)
        if not grid:
            raise ValueError("cos_theta_grid must not be empty")
        for c in grid:
            if not math.isfinite(c) or abs(c) > 1.0:
                raise ValueError(f"cos_theta {c} outside [-1, 1]")
        methods = tuple(self.methods)
        if not methods:
            raise ValueError("need at least one method")
        for name in methods:
            if name not in SWEEP_METHODS:
                raise ValueError(f"unknown sweep method {name!r}")
        if len(set(methods)) != len(methods):
            raise ValueError("methods must not repeat")
        object.__setattr__(self, "b_over_c", b)
        object.__setattr__(self, "cos_theta_grid", grid)
        object.__setattr__(self, "methods", methods)


@dataclass(frozen=True)
class SweepRow:
    """One (grid point, method) result.

    Rows with status "ok" carry finite value and error_estimate.  The other
    statuses carry NaN sentinels plus a nonempty message: "excluded" marks
    grid points inside the degeneracy radius (left out by design, not an
    error), "failed" marks genuine numerical breakdowns.  Downstream
    consumers must filter on status, not on NaN.
    """

    cos_theta: float
    b_over_c: float
    method: str
    value: float
    error_estimate: float
    status: str = "ok"
    message: str = ""

    def __post_init__(self):
        if self.method not in SWEEP_METHODS:
            raise ValueError(f"unknown sweep method {self.method!r}")
        if self.status not in _ROW_STATUSES:
            raise ValueError(f"unknown row status {self.status!r}")
        if self.status == "ok":
            if not (math.isfinite(self.value)
                    and math.isfinite(self.error_estimate)):
                raise ValueError("ok rows must have finite entries")
        else:
            if not self.message:
                raise ValueError("non-ok rows must carry a message")


def build_geometry(b_over_c, cos_theta):
    """Planar three-atom system for one sweep point.

    Atom A sits at the origin, B at (b, 0, 0), and C at
    (cos(theta), sin(theta), 0) with the A-C distance fixed to 1 as the
    reference length.  The returned system is marked nondimensional so the
    coefficient evaluators keep this reference instead of rescaling by the
    largest separation (which exceeds 1 whenever B and C sit on opposite
    sides of A).

    Raises GeometryError when any two atoms come closer than
    DEGENERACY_RADIUS, ValueError for parameters outside the family.
    """
    b = float(b_over_c)
    c = float(cos_theta)
    if not math.isfinite(b) or b <= 0.0:
        raise ValueError("b_over_c must be positive and finite")
    if not math.isfinite(c) or abs(c) > 1.0:
        raise ValueError(f"cos_theta {c} outside [-1, 1]")
    s = math.sqrt(max(0.0, 1.0 - c * c))
    positions = np.array([
        [0.0, 0.0, 0.0],
        [b, 0.0, 0.0],
        [c, s, 0.0],
    ])
    diffs = positions[None, :, :] - positions[:, None, :]
    dists = np.linalg.norm(diffs, axis=-1)
    closest = dists[~np.eye(3, dtype=bool)].min()
    if closest < DEGENERACY_RADIUS:
        raise GeometryError(
            f"degenerate geometry at b_over_c={b}, cos_theta={c}: atoms "
            f"{closest:.3e} apart (limit {DEGENERACY_RADIUS})")
    return AtomSystem(positions=positions, polarizabilities=np.ones(3),
                      scale=1.0, nondimensional=True)


def scalar_total_coefficient(system, spec=None):
    """Combined scalar three-body coefficient on the per-component scale.

    Sum of the TE and TM worldline coefficients divided by three (see the
    module docstring for why), so the value lands on the same scale as
    three_body_total_general and the two can be subtracted meaningfully.
    """
    te = te_three_body_coefficient(system, spec=spec)
    tm = tm_three_body_coefficient(system, spec=spec)
    return CoefficientResult(
        value=(te.value + tm.value) / 3.0,
        error_estimate=(te.error_estimate + tm.error_estimate) / 3.0,
        method="worldline", mode="total", order=3, convention="three_body")


def _worldline_entry(system, config):
    spec = config.worldline_spec or DEFAULT_THREE_BODY_SPEC
    result = scalar_total_coefficient(system, spec=spec)
    return result.value, result.error_estimate


def _green_tensor_entry(system, config):
    spec = config.green_tensor_spec or DEFAULT_ORACLE_SPEC
    result = three_body_total_general(system, spec=spec)
    return result.value, result.error_estimate


_METHOD_DISPATCH = {
    "worldline_sum": _worldline_entry,
    "green_tensor": _green_tensor_entry,
}


def run_sweep(config):
    """Evaluate every (grid point, method) cell of the sweep.

    Returns a tuple of SweepRow ordered by grid index first and by the
    configured method order second.  Grid points inside the degeneracy
    radius become "excluded" rows; per-method numerical breakdowns become
    "failed" rows carrying the best partial estimate in the message.
    Neither aborts the remaining points.
    """
    rows = []
    for cos_theta in config.cos_theta_grid:
        try:
            system = build_geometry(config.b_over_c, cos_theta)
            excluded = None
        except GeometryError as exc:
            system = None
            excluded = str(exc)
        for method in config.methods:
            if excluded is not None:
                rows.append(_sentinel_row(config, cos_theta, method,
                                          "excluded", excluded))
                continue
            try:
                value, err = _METHOD_DISPATCH[method](system, config)
            except _RECOVERABLE as exc:
                message = str(exc)
                partial = getattr(exc, "estimate", None)
                if partial is not None:
                    message += (f"; best partial estimate {partial.value!r}"
                                f" +- {partial.error_estimate!r}")
                rows.append(_sentinel_row(config, cos_theta, method,
                                          "failed", message))
                continue
            rows.append(SweepRow(
                cos_theta=cos_theta, b_over_c=config.b_over_c,
                method=method, value=value, error_estimate=err))
    return tuple(rows)


def _sentinel_row(config, cos_theta, method, status, message):
    return SweepRow(cos_theta=cos_theta, b_over_c=config.b_over_c,
                    method=method, value=float("nan"),
                    error_estimate=float("nan"), status=status,
                    message=message)


def flag_discontinuities(rows):
    """Sign flips between neighbors too large for a plain zero crossing.

    For each method, walks consecutive "ok" rows in grid order and flags a
    sign change whose jump exceeds twice the larger of the two surrounding
    slopes (scaled to the interval).  A genuine zero crossing of a smooth
    curve stays within that bound; a conventions mismatch between points
    shows up as a flagged pair.  Diagnostic only: returns a tuple of
    (method, cos_theta_left, cos_theta_right) and never raises.
    """
    flagged = []
    by_method = {}
    for row in rows:
        if row.status == "ok":
            by_method.setdefault(row.method, []).append(row)
    for method, seq in by_method.items():
        for i in range(1, len(seq)):
            lo, hi = seq[i - 1], seq[i]
            if lo.value == 0.0 or hi.value == 0.0:
                continue
            if math.copysign(1.0, lo.value) == math.copysign(1.0, hi.value):
                continue
            width = abs(hi.cos_theta - lo.cos_theta)
            if width == 0.0:
                continue
            slopes = []
            if i >= 2:
                prev = seq[i - 2]
                dw = abs(lo.cos_theta - prev.cos_theta)
                if dw > 0.0:
                    slopes.append(abs(lo.value - prev.value) / dw)
            if i + 1 < len(seq):
                nxt = seq[i + 1]
                dw = abs(nxt.cos_theta - hi.cos_theta)
                if dw > 0.0:
                    slopes.append(abs(nxt.value - hi.value) / dw)
            jump = abs(hi.value - lo.value)
            if not slopes or jump > 2.0 * max(slopes) * width:
                flagged.append((method, lo.cos_theta, hi.cos_theta))
    return tuple(flagged)
