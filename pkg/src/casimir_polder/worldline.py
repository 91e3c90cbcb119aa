"""Scalar worldline route: pinned Brownian bridges and their coefficients.

A closed Brownian bridge that starts and ends at one atom and is pinned to
visit the others reduces the vacuum path integral to a Gaussian chain
density over an ordered time simplex plus one loop-time integral.  The TE
channel integrates the chain density itself; the TM channel first applies
a bracket of position Laplacians, expanded into subset terms with scalar
weights and evaluated analytically so the quadrature only ever sees smooth
polynomial-times-Gaussian integrands.

Coefficients are quoted in the conventions of `core`: the dimensionless
two-body values converge to -3/(8 pi) (TE) and -43/(8 pi) (TM), whose sum
reproduces the Green-tensor total -23/(4 pi) exactly.  Three-body values
sum the loop over all base-point assignments; dividing the TE + TM sum by
three recovers the single-assignment quoting sometimes used for triples.
"""

import itertools
import math
from dataclasses import dataclass

import numpy as np
import sympy as sp

from .core import (
    AtomSystem,
    CoefficientResult,
    DimensionConfig,
    GeometryError,
    nondimensionalize,
)
from .quadrature import QuadratureSpec, integrate_product

_TWO_PI = 2.0 * math.pi
_DIMS = DimensionConfig(D=4)

# Gaussian factors with exponents below this are exact zeros in double
# precision; masking them out means the polynomial Laplacian prefactors
# are never evaluated where a segment length could underflow them to inf.
_EXPONENT_FLOOR = -700.0

DEFAULT_TWO_BODY_SPEC = QuadratureSpec(
    rule=("gauss_legendre_mapped", "double_exponential"),
    nodes=(64, 48),
    rel_tol=1e-8,
    max_refinements=4,
)
# The base resolution is chosen high enough that the first node doubling
# already confirms convergence; the time axes dominate the error, and the
# doubling ladder is what costs, not the single pass.
DEFAULT_THREE_BODY_SPEC = QuadratureSpec(
    rule=("gauss_legendre_mapped", "double_exponential", "double_exponential"),
    nodes=(64, 128, 128),
    rel_tol=1e-5,
    max_refinements=3,
)


def _odd_double_factorial(m):
    """(2m - 1)!! with the empty product (m = 0) equal to 1."""
    if m < 0:
        raise ValueError("need m >= 0")
    return math.prod(range(1, 2 * m, 2))


def _subset_weight(order, subset_size, total_time):
    """Scalar weight (2(k-s)-1)!! (-T/2)^s of one Laplacian subset term."""
    df = _odd_double_factorial(order - subset_size)
    return df * (-total_time / 2) ** subset_size


@dataclass(frozen=True)
class BridgePinning:
    """A closed unit-diffusion bridge pinned at ordered interior times.

    The path starts and ends at positions[0] (the base point, pinned at
    time 0 and again at total_time) and visits positions[j] at times[j].
    times[0] must be 0.0 and the remaining times strictly increasing and
    strictly inside (0, total_time).
    """

    total_time: float
    times: tuple
    positions: np.ndarray
    d: int = 3

    def __post_init__(self):
        if not (np.isfinite(self.total_time) and self.total_time > 0.0):
            raise ValueError("total_time must be finite and > 0")
        times = tuple(float(t) for t in self.times)
        if not times or times[0] != 0.0:
            raise ValueError("the first pin must sit at time 0")
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("pinned times must be strictly increasing")
        if times[-1] >= self.total_time:
            raise ValueError("interior times must stay below total_time")
        pos = np.asarray(self.positions, dtype=float)
        if pos.shape != (len(times), self.d):
            raise ValueError(
                f"positions must be ({len(times)}, {self.d}), got {pos.shape}"
            )
        if not np.all(np.isfinite(pos)):
            raise ValueError("positions must be finite")
        pos = pos.copy()
        pos.setflags(write=False)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "positions", pos)

    @property
    def order(self):
        return len(self.times)

    def segments(self):
        """The k loop-segment lengths between consecutive pins."""
        ends = self.times[1:] + (self.total_time,)
        return tuple(b - a for a, b in zip(self.times, ends))

    def jumps_squared(self):
        """Squared jump lengths around the closed loop of pins."""
        nxt = np.roll(np.arange(self.order), -1)
        diff = self.positions[nxt] - self.positions
        return tuple(float(x) for x in (diff**2).sum(axis=1))


def bridge_density(tau, total_time, start, target, d=3):
    """Density of the closed bridge at time tau, evaluated at target.

    The bridge starts and ends at start with unit diffusion, so x(tau) is
    an isotropic Gaussian around start with per-axis variance
    tau (1 - tau/total_time).  Underflow to an exact zero is allowed.
    """
    if not 0.0 < tau < total_time:
        raise ValueError(f"tau must lie in (0, {total_time}), got {tau}")
    var = tau * (1.0 - tau / total_time)
    disp = np.asarray(target, dtype=float) - np.asarray(start, dtype=float)
    return _gaussian_point(var, float(disp @ disp), d)


def conditional_density(tau_new, r_new, tau_prev, r_prev, total_time, base,
                        d=3):
    """Density of x(tau_new) at r_new given the pin x(tau_prev) = r_prev.

    Both times are interior to a closed bridge anchored at base.  Given
    one pin, the law between consecutive anchors is again a bridge, so
    the mean interpolates linearly between the bracketing anchors (the
    pin and whichever base anchor encloses tau_new) and the variance is
    the bridge variance of the enclosed interval.
    """
    for name, t in (("tau_new", tau_new), ("tau_prev", tau_prev)):
        if not 0.0 < t < total_time:
            raise ValueError(f"{name} must lie in (0, {total_time}), got {t}")
    if tau_new == tau_prev:
        raise ValueError("pinned times must be distinct")
    base = np.asarray(base, dtype=float)
    r_prev = np.asarray(r_prev, dtype=float)
    if tau_new > tau_prev:
        frac = (tau_new - tau_prev) / (total_time - tau_prev)
        var = (tau_new - tau_prev) * (1.0 - frac)
        mean = r_prev * (1.0 - frac) + base * frac
    else:
        frac = tau_new / tau_prev
        var = tau_new * (1.0 - frac)
        mean = base * (1.0 - frac) + r_prev * frac
    if var <= 0.0:
        raise ValueError("conditioning variance rounded to zero")
    disp = np.asarray(r_new, dtype=float) - mean
    return _gaussian_point(var, float(disp @ disp), d)


def _gaussian_point(var, dist_sq, d):
    expo = -dist_sq / (2.0 * var)
    if expo < _EXPONENT_FLOOR:
        return 0.0
    return (_TWO_PI * var) ** (-0.5 * d) * math.exp(expo)


@dataclass(frozen=True)
class LaplacianExpansion:
    """Subset expansion of the TM vertex bracket at a given order.

    Each pinned atom contributes either a scalar or -T/2 times its own
    Laplacian; expanding the product gives one term per subset of atoms
    (0-based pin indices), with a scalar weight collecting the double
    factorial of the atoms left scalar: (2(k-|S|)-1)!! (-T/2)^|S|.
    """

    order: int
    total_time: float
    terms: tuple

    def weight(self, subset):
        match = [w for s, w in self.terms if s == tuple(sorted(subset))]
        if not match:
            raise KeyError(f"no subset {subset!r} at order {self.order}")
        return match[0]


def laplacian_expansion(order, total_time):
    """All 2^k Laplacian subset terms of the order-k TM bracket."""
    if order < 1:
        raise ValueError("order must be >= 1")
    terms = []
    for size in range(order + 1):
        for subset in itertools.combinations(range(order), size):
            terms.append((subset, _subset_weight(order, size, total_time)))
    return LaplacianExpansion(order=order, total_time=float(total_time),
                              terms=tuple(terms))


@dataclass(frozen=True)
class GaussianChainDensity:
    """Joint Gaussian law of the pinned positions of a closed bridge.

    Conditioning pin by pin factorizes the joint density into order - 1
    Gaussian factors; factor j has a variance v_j and a mean affine in
    the previous pin and the base point.  The product telescopes into a
    single chain over the k loop segments D_i with squared jumps w_i:

        (2 pi)^(-d(k-1)/2) T^(d/2) (prod_i D_i)^(-d/2)
            exp(-sum_i w_i / (2 D_i)).
    """

    order: int
    d: int = 3

    def __post_init__(self):
        if self.order < 2:
            raise ValueError("need at least the base pin and one more")
        if self.d < 1:
            raise ValueError("need d >= 1")

    def factor_parameters(self, times, total_time):
        """Per-factor (variance, prev_weight, base_weight).

        Factor j (for pin j = 1..k-1, given pin j-1) is a Gaussian with
        the returned variance around prev_weight * r_{j-1} +
        base_weight * r_base.
        """
        times = tuple(float(t) for t in times)
        if len(times) != self.order or times[0] != 0.0:
            raise ValueError("need the base time 0 plus order-1 interior times")
        if any(b <= a for a, b in zip(times, times[1:])) \
                or times[-1] >= total_time:
            raise ValueError("times must increase strictly inside the loop")
        params = []
        for prev, new in zip(times, times[1:]):
            frac = (new - prev) / (total_time - prev)
            var = (new - prev) * (1.0 - frac)
            params.append((var, 1.0 - frac, frac))
        return params

    def evaluate(self, times, total_time, positions):
        """Joint density of the pinned positions (order, d) at the times."""
        pinning = BridgePinning(total_time=total_time, times=tuple(times),
                                positions=positions, d=self.d)
        val = _chain_terms(pinning.segments(), pinning.jumps_squared(),
                           self.d, None, None)
        return float(val)


def _chain_terms(deltas, jumps_sq, d, ratio_fn, flat_positions):
    """Chain density times an optional rational prefactor, underflow-safe.

    deltas are k broadcastable arrays of positive segment lengths and
    jumps_sq the k squared jump lengths.  Points whose Gaussian exponent
    falls below the underflow floor contribute exact zeros, and ratio_fn
    (a lambdified prefactor taking the segments then the flattened pinned
    positions) is only evaluated on the surviving points, where every
    segment is bounded below by its jump over 1400.
    """
    shape = np.broadcast_shapes(*[np.shape(x) for x in deltas])
    flat = [np.broadcast_to(np.asarray(x, dtype=float), shape).reshape(-1)
            for x in deltas]
    expo = np.zeros(flat[0].shape)
    with np.errstate(divide="ignore"):
        for dl, w in zip(flat, jumps_sq):
            expo -= w / (2.0 * dl)
    out = np.zeros(expo.shape)
    mask = expo > _EXPONENT_FLOOR
    if np.any(mask):
        kept = [dl[mask] for dl in flat]
        total = kept[0].copy()
        for dl in kept[1:]:
            total += dl
        norm = _TWO_PI ** (-0.5 * d * (len(kept) - 1)) * total ** (0.5 * d)
        for dl in kept:
            norm = norm * dl ** (-0.5 * d)
        vals = norm * np.exp(expo[mask])
        if ratio_fn is not None:
            vals = vals * ratio_fn(*kept, *flat_positions)
        out[mask] = vals
    return out.reshape(shape)


def _chain_density(deltas, jumps_sq, d=3):
    return _chain_terms(deltas, jumps_sq, d, None, None)


# --- analytic Laplacians of the chain ------------------------------------

_SUBSET_EXPR_CACHE = {}
_RATIO_FN_CACHE = {}
_BRACKET_FN_CACHE = {}


def _chain_symbols(k, d):
    """Segment symbols, pinned-position symbols, and the chain exponent."""
    dls = sp.symbols(f"dl0:{k}", positive=True)
    pos = [sp.symbols(f"p{i}_0:{d}", real=True) for i in range(k)]
    expo = sp.Integer(0)
    for i in range(k):
        j = (i + 1) % k
        w = sum((a - b) ** 2 for a, b in zip(pos[j], pos[i]))
        expo -= w / (2 * dls[i])
    return dls, pos, expo


def _apply_laplacian(poly, expo, coords):
    """One d-dim Laplacian of poly * exp(expo), divided by exp(expo)."""
    out = sp.Integer(0)
    for x in coords:
        px = sp.diff(poly, x)
        ex = sp.diff(expo, x)
        out += sp.diff(px, x) + 2 * px * ex + poly * (ex**2 + sp.diff(ex, x))
    return out


def _subset_exprs(k, d):
    """Rational prefactors (lap-product over S of chain)/chain, per subset."""
    key = (k, d)
    if key not in _SUBSET_EXPR_CACHE:
        dls, pos, expo = _chain_symbols(k, d)
        exprs = {(): sp.Integer(1)}
        for size in range(1, k + 1):
            for subset in itertools.combinations(range(k), size):
                prev = exprs[subset[:-1]]
                exprs[subset] = _apply_laplacian(prev, expo, pos[subset[-1]])
        args = list(dls) + [s for row in pos for s in row]
        _SUBSET_EXPR_CACHE[key] = (args, sum(dls), exprs)
    return _SUBSET_EXPR_CACHE[key]


def gaussian_laplacian(chain, subset):
    """Analytic Laplacians of the chain density at its pinned positions.

    Returns g(deltas, positions) evaluating prod_{i in subset} lap_i of
    the chain (0-based pin index; 0 is the base point), where lap_i is
    the d-dimensional Laplacian in pin i's position.  The derivative of
    a Gaussian is a rational prefactor times the same Gaussian; the
    prefactor is built symbolically once per (order, d, subset), cached,
    and evaluated under the chain's underflow mask.  deltas are the k
    loop segments (arrays allowed), positions the (order, d) pins.
    """
    subset = tuple(sorted({int(i) for i in subset}))
    if any(i < 0 or i >= chain.order for i in subset):
        raise ValueError(f"subset {subset!r} outside 0..{chain.order - 1}")
    key = (chain.order, chain.d, subset)
    if key not in _RATIO_FN_CACHE:
        args, _, exprs = _subset_exprs(chain.order, chain.d)
        fn = sp.lambdify(args, exprs[subset], modules="numpy", cse=True) \
            if subset else None
        _RATIO_FN_CACHE[key] = fn
    ratio = _RATIO_FN_CACHE[key]
    order, d = chain.order, chain.d

    def apply(deltas, positions):
        pos = np.asarray(positions, dtype=float)
        if pos.shape != (order, d):
            raise ValueError(f"positions must be ({order}, {d})")
        nxt = np.roll(np.arange(order), -1)
        jumps = ((pos[nxt] - pos) ** 2).sum(axis=1)
        return _chain_terms(tuple(deltas), tuple(jumps), d, ratio,
                            tuple(pos.reshape(-1)))

    return apply


def _tm_bracket_fn(k, d, subsets=None):
    """Lambdified sum of weighted Laplacian subset prefactors.

    The weights carry the physical loop time as the sum of the segment
    symbols, so the returned function needs only the segments and the
    flattened pinned positions.
    """
    key = (k, d, subsets)
    if key not in _BRACKET_FN_CACHE:
        args, total_sym, exprs = _subset_exprs(k, d)
        chosen = exprs if subsets is None else \
            {s: exprs[s] for s in subsets}
        bracket = sum(_subset_weight(k, len(s), total_sym) * e
                      for s, e in chosen.items())
        _BRACKET_FN_CACHE[key] = sp.lambdify(args, bracket, modules="numpy",
                                             cse=True)
    return _BRACKET_FN_CACHE[key]


# --- coefficient integrals ------------------------------------------------

def order_prefactor(order, mode="TE", dims=_DIMS):
    """Vertex prefactor of the order-k pinned-loop TE/TM integrand.

    (-1)^(k+1) (2k-1)!! / (2^(k+1) k (2 pi)^(D/2)) for TE; the TM bracket
    carries its double factorials inside the subset weights, so its
    prefactor drops the (2k-1)!!.
    """
    if order < 1:
        raise ValueError("order must be >= 1")
    if mode not in ("TE", "TM"):
        raise ValueError(f"mode must be TE or TM, got {mode!r}")
    df = _odd_double_factorial(order) if mode == "TE" else 1
    sign = 1.0 if order % 2 else -1.0
    return sign * df / (2 ** (order + 1) * order * _TWO_PI ** (0.5 * dims.D))


def _two_body_integrand(u, v, separation, ratio_fn, flat_positions):
    r2 = separation * separation
    total = r2 * u
    deltas = (total * v, total * (1.0 - v))
    val = _chain_terms(deltas, (r2, r2), 3, ratio_fn, flat_positions)
    # dT = r^2 du and dtau = T dv fold the loop-time measure T^-(2 + D/2)
    return r2 * total**-3 * val


def te_two_body_coefficient(spec=None, separation=1.0):
    """TE coefficient for two atoms in the two_body convention.

    The loop time is integrated as u = T/r^2 on a mapped semi-infinite
    axis and the interior pin as v = tau/T on (0, 1).  The quoted value
    (-3/(8 pi) exactly) is independent of the separation argument, which
    only exercises the r^-7 bookkeeping of the convention.
    """
    if separation <= 0.0:
        raise GeometryError("separation must be > 0")
    spec = spec or DEFAULT_TWO_BODY_SPEC
    est = integrate_product(
        lambda u, v: _two_body_integrand(u, v, separation, None, None),
        ("semi_infinite", "unit"), spec)
    conv = (4.0 * math.pi) ** 2 * order_prefactor(2, "TE") * 2.0 \
        * separation**7
    return CoefficientResult(value=conv * est.value,
                             error_estimate=abs(conv) * est.error_estimate,
                             method="worldline", mode="TE", order=2,
                             convention="two_body")


def tm_two_body_coefficient(spec=None, separation=1.0):
    """TM coefficient for two atoms in the two_body convention.

    Same quadrature as the TE route with the four-term Laplacian bracket
    applied analytically to the chain density; converges to -43/(8 pi),
    so TE + TM reproduces the Green-tensor total -23/(4 pi).
    """
    if separation <= 0.0:
        raise GeometryError("separation must be > 0")
    spec = spec or DEFAULT_TWO_BODY_SPEC
    bracket = _tm_bracket_fn(2, 3)
    flat_positions = (0.0, 0.0, 0.0, 0.0, 0.0, separation)
    est = integrate_product(
        lambda u, v: _two_body_integrand(u, v, separation, bracket,
                                         flat_positions),
        ("semi_infinite", "unit"), spec)
    conv = (4.0 * math.pi) ** 2 * order_prefactor(2, "TM") * 2.0 \
        * separation**7
    return CoefficientResult(value=conv * est.value,
                             error_estimate=abs(conv) * est.error_estimate,
                             method="worldline", mode="TM", order=2,
                             convention="two_body")


def _three_body_assignments(positions, symmetrize):
    """Per-assignment (squared jumps, flattened slot positions)."""
    perms = itertools.permutations(range(3)) if symmetrize else [(0, 1, 2)]
    out = []
    for perm in perms:
        slot = positions[list(perm)]
        jumps = tuple(((slot[[1, 2, 0]] - slot) ** 2).sum(axis=1))
        out.append((jumps, tuple(slot.reshape(-1))))
    return out


def _three_body_estimate(system, spec, ratio_builder, symmetrize):
    if system.n_atoms != 3:
        raise GeometryError("need exactly three atoms")
    if not system.nondimensional:
        system = nondimensionalize(system)
    assignments = _three_body_assignments(system.positions, symmetrize)
    weight = 6.0 / len(assignments)

    def f(u, a, b):
        # time fractions of the three loop segments; the factorized form
        # keeps each strictly positive even where v3 = a + (1-a)b would
        # round onto 1
        deltas = (u * a, u * (1.0 - a) * b, u * (1.0 - a) * (1.0 - b))
        tot = 0.0
        for jumps, flat_pos in assignments:
            tot = tot + _chain_terms(deltas, jumps, 3, ratio_builder,
                                     flat_pos)
        # dtau2 dtau3 = T^2 dv2 dv3 and the affine simplex Jacobian (1-a)
        # fold the loop-time measure T^-(3 + D/2)
        return weight * u**-3 * (1.0 - a) * tot

    return integrate_product(f, ("semi_infinite", "unit", "unit"), spec)


def te_three_body_coefficient(system, spec=None, symmetrize=True):
    """TE coefficient for three atoms in the three_body convention.

    Integrates the two-pin Gaussian chain over the ordered time simplex
    and the loop time u = T/R^2, summed over all six base-point
    assignments (symmetrize=False uses one assignment scaled by six,
    which agrees within quadrature error).
    """
    spec = spec or DEFAULT_THREE_BODY_SPEC
    est = _three_body_estimate(system, spec, None, symmetrize)
    conv = math.pi * (4.0 * math.pi) ** 3 * order_prefactor(3, "TE")
    return CoefficientResult(value=conv * est.value,
                             error_estimate=abs(conv) * est.error_estimate,
                             method="worldline", mode="TE", order=3,
                             convention="three_body")


def tm_three_body_coefficient(system, spec=None, symmetrize=True,
                              subsets=None):
    """TM coefficient for three atoms in the three_body convention.

    Same quadrature as the TE route with the eight-term Laplacian bracket
    applied to the chain.  subsets restricts the bracket to the given
    pin-index subsets (diagnostic use; the empty-subset term alone equals
    the TE coefficient because the weight 15 cancels the prefactor
    ratio).
    """
    spec = spec or DEFAULT_THREE_BODY_SPEC
    if subsets is not None:
        subsets = tuple(sorted(tuple(sorted(s)) for s in subsets))
    bracket = _tm_bracket_fn(3, 3, subsets)
    est = _three_body_estimate(system, spec, bracket, symmetrize)
    conv = math.pi * (4.0 * math.pi) ** 3 * order_prefactor(3, "TM")
    return CoefficientResult(value=conv * est.value,
                             error_estimate=abs(conv) * est.error_estimate,
                             method="worldline", mode="TM", order=3,
                             convention="three_body")


def n_body_te_integrand(system, order, assignment, times, total_time):
    """Pointwise TE chain integrand for one base-point assignment.

    assignment lists the atom index occupying each loop slot: the path
    starts and ends at atom assignment[0] and visits atom assignment[j]
    at times[j-1].  Returns the joint pinned-position density times the
    order-k TE vertex prefactor; the loop-time measure, the assignment
    sum, and the convention conversion are applied by the coefficient
    integrals, not here.
    """
    if total_time <= 0.0:
        raise ValueError("total_time must be > 0")
    assignment = tuple(int(i) for i in assignment)
    if len(assignment) != order or len(set(assignment)) != order:
        raise ValueError("assignment must list order distinct atoms")
    if order < 2 or order > system.n_atoms:
        raise ValueError("order must be between 2 and the atom count")
    if any(i < 0 or i >= system.n_atoms for i in assignment):
        raise ValueError("assignment indices out of range")
    times = tuple(float(t) for t in times)
    if len(times) != order - 1:
        raise ValueError("need order - 1 interior times")
    bounds = (0.0,) + times + (total_time,)
    if any(b <= a for a, b in zip(bounds, bounds[1:])):
        raise ValueError("times must be strictly increasing in "
                         "(0, total_time)")
    pos = system.positions[list(assignment)]
    pinning = BridgePinning(total_time=total_time, times=(0.0,) + times,
                            positions=pos, d=3)
    val = _chain_density(pinning.segments(), pinning.jumps_squared(), 3)
    return order_prefactor(order, "TE") * float(val)
