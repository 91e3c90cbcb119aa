"""Deterministic quadrature over semi-infinite and ordered-simplex domains.

Three per-axis rules:

  exp_transform         x = -ln(1 - t) with tanh-sinh nodes in t on (0, 1);
                        for integrands with exponential decay.
  gauss_legendre_mapped x = tan(pi t / 2), Gauss-Legendre in t on (0, 1);
                        for integrands with algebraic decay.
  double_exponential    exp-sinh (semi-infinite) / tanh-sinh (unit interval)
                        trapezoidal rules; absorb endpoint singularities.

Refinement doubles every axis's node count per level; the error estimate is
the difference between the two finest levels.  Evaluation order is fixed and
all reductions are pairwise, so results are bit-reproducible for a given
spec.  Integrands take one array argument per axis and must broadcast.
"""

from dataclasses import dataclass

import numpy as np

_LEG_CACHE = {}


class ConvergenceError(RuntimeError):
    """Refinement hit the level cap before the tolerance; carries .estimate."""

    def __init__(self, message, estimate):
        super().__init__(message)
        self.estimate = estimate


class IntegrandError(ValueError):
    """The integrand returned NaN/Inf; carries the offending .point."""

    def __init__(self, message, point):
        super().__init__(message)
        self.point = point


@dataclass(frozen=True)
class QuadratureSpec:
    """Per-axis rules and node counts, plus the refinement policy.

    rule and nodes may be a single value (applied to every axis) or a
    sequence with one entry per axis.
    """

    rule: object = "exp_transform"
    nodes: object = 48
    rel_tol: float = 1e-6
    max_refinements: int = 4

    def __post_init__(self):
        if not (0.0 < self.rel_tol < 1.0):
            raise ValueError("rel_tol must be in (0, 1)")
        if self.max_refinements < 1:
            raise ValueError("max_refinements must be >= 1")
        for n in np.atleast_1d(np.asarray(self.nodes, dtype=object)):
            if int(n) < 2:
                raise ValueError("node counts must be >= 2")

    def axis_rules(self, ndim):
        rules = self.rule if not isinstance(self.rule, str) else [self.rule] * ndim
        rules = list(rules)
        if len(rules) == 1:
            rules = rules * ndim
        if len(rules) != ndim:
            raise ValueError(f"need {ndim} axis rules, got {len(rules)}")
        for r in rules:
            if r not in ("exp_transform", "gauss_legendre_mapped",
                         "double_exponential"):
                raise ValueError(f"unknown rule {r!r}")
        return rules

    def axis_nodes(self, ndim):
        nodes = np.atleast_1d(np.asarray(self.nodes, dtype=int))
        if nodes.size == 1:
            nodes = np.repeat(nodes, ndim)
        if nodes.size != ndim:
            raise ValueError(f"need {ndim} axis node counts, got {nodes.size}")
        return [int(n) for n in nodes]


@dataclass(frozen=True)
class IntegralEstimate:
    value: float
    error_estimate: float
    evaluations: int

    def __post_init__(self):
        if not np.isfinite(self.error_estimate):
            raise ValueError("error_estimate must be finite")
        if self.evaluations <= 0:
            raise ValueError("evaluations must be > 0")


def pairwise_sum(values):
    """Fixed-order pairwise reduction; deterministic for a given input order."""
    a = np.asarray(values, dtype=float).ravel()
    if a.size == 0:
        return 0.0
    while a.size > 1:
        m = (a.size // 2) * 2
        folded = a[0:m:2] + a[1:m:2]
        if a.size % 2:
            a = np.concatenate([folded, a[m:]])
        else:
            a = folded
    return float(a[0])


def _leggauss(n):
    if n not in _LEG_CACHE:
        _LEG_CACHE[n] = np.polynomial.legendre.leggauss(n)
    return _LEG_CACHE[n]


def _nodes_semi_infinite(rule, n):
    """Nodes x in (0, inf) and total weights W for one axis."""
    if rule == "exp_transform":
        # x = -ln(1 - t) with t on tanh-sinh nodes.  Composition is computed
        # directly in the trapezoid variable so neither end under/overflows:
        # with g = (pi/2) sinh(tau), 1 - t = e^(-2g)/(1 + e^(-2g)) and
        # dx = (1 + tanh g) d g.
        half = max(2, n // 2)
        h = 6.2 / half
        tau = (np.arange(2 * half + 1) - half) * h
        g = 0.5 * np.pi * np.sinh(tau)
        x = np.empty_like(g)
        pos = g >= 0.0
        x[pos] = 2.0 * g[pos] + np.log1p(np.exp(-2.0 * g[pos]))
        x[~pos] = -np.log1p(-0.5 * (1.0 + np.tanh(g[~pos])))
        W = h * 0.5 * np.pi * np.cosh(tau) * (1.0 + np.tanh(g))
        keep = (x > 0.0) & np.isfinite(x) & np.isfinite(W) & (W > 0.0)
        return x[keep], W[keep]
    if rule == "gauss_legendre_mapped":
        t, w = _leggauss(n)
        u = 0.5 * (t + 1.0)
        x = np.tan(0.5 * np.pi * u)
        W = 0.5 * w * 0.5 * np.pi * (1.0 + x * x)
        return x, W
    if rule == "double_exponential":
        # exp-sinh: x = exp((pi/2) sinh(t)), trapezoid in t.  The range is
        # capped so the largest node stays ~e^36: powers of x up to ~x^20
        # then stay finite and the integrand's own decay does the rest.
        half = max(2, n // 2)
        h = 3.8 / half
        t = (np.arange(2 * half + 1) - half) * h
        g = 0.5 * np.pi * np.sinh(t)
        x = np.exp(g)
        W = h * x * 0.5 * np.pi * np.cosh(t)
        keep = np.isfinite(x) & np.isfinite(W) & (x > 0.0)
        return x[keep], W[keep]
    raise ValueError(f"unknown rule {rule!r}")


def _nodes_unit(rule, n):
    """Nodes x in (0, 1) and total weights W for one axis."""
    if rule in ("exp_transform", "gauss_legendre_mapped"):
        t, w = _leggauss(n)
        return 0.5 * (t + 1.0), 0.5 * w
    if rule == "double_exponential":
        # tanh-sinh: x = (1 + tanh((pi/2) sinh(t))) / 2, trapezoid in t.
        # tanh saturates to 1.0 in double precision near g = 19, so a wider
        # range would only produce nodes the keep-mask drops.
        half = max(2, n // 2)
        h = 3.25 / half
        t = (np.arange(2 * half + 1) - half) * h
        g = 0.5 * np.pi * np.sinh(t)
        x = 0.5 * (1.0 + np.tanh(g))
        W = h * 0.25 * np.pi * np.cosh(t) / np.cosh(g) ** 2
        keep = (x > 0.0) & (x < 1.0) & np.isfinite(W) & (W > 0.0)
        return x[keep], W[keep]
    raise ValueError(f"unknown rule {rule!r}")


def _tensor_estimate(f, axes):
    """One tensor-product pass.  axes: list of (x_nodes, weights) per axis.

    Evaluation is chunked along axis 0 in node order; the reduction is
    pairwise within each chunk and pairwise across chunks.
    """
    ndim = len(axes)
    if ndim == 1:
        x0, w0 = axes[0]
        vals = np.asarray(f(x0), dtype=float)
        _check_finite(vals, (x0,))
        return pairwise_sum(vals * w0), x0.size
    inner = axes[1:]
    grids = np.meshgrid(*[a[0] for a in inner], indexing="ij")
    wgrid = inner[0][1]
    for _, w in inner[1:]:
        wgrid = np.multiply.outer(wgrid, w)
    x0, w0 = axes[0]
    chunk_sums = np.empty(x0.size, dtype=float)
    for i in range(x0.size):
        lead = np.full(grids[0].shape, x0[i])
        vals = np.asarray(f(lead, *grids), dtype=float)
        _check_finite(vals, (lead, *grids))
        chunk_sums[i] = pairwise_sum(vals * wgrid) * w0[i]
    total = pairwise_sum(chunk_sums)
    count = x0.size * grids[0].size
    return total, count


def _check_finite(vals, grids):
    bad = ~np.isfinite(vals)
    if np.any(bad):
        idx = np.unravel_index(np.argmax(bad), np.shape(vals))
        point = tuple(float(np.broadcast_to(g, np.shape(vals))[idx]) for g in grids)
        raise IntegrandError(f"integrand not finite at {point}", point)


def _refine(f, spec, ndim, node_factory):
    rules = spec.axis_rules(ndim)
    base = spec.axis_nodes(ndim)
    prev = None
    evaluations = 0
    history = []
    for level in range(spec.max_refinements):
        axes = [node_factory(i, r, n * 2**level)
                for i, (r, n) in enumerate(zip(rules, base))]
        value, count = _tensor_estimate(f, axes)
        evaluations += count
        if prev is not None:
            err = abs(value - prev)
            history.append((value, err))
            tol = spec.rel_tol * max(abs(value), np.finfo(float).tiny)
            if err <= tol:
                return IntegralEstimate(value, err, evaluations)
        prev = value
    value, err = history[-1] if history else (prev, abs(prev))
    best = IntegralEstimate(value, err, evaluations)
    raise ConvergenceError(
        f"no convergence to rel_tol={spec.rel_tol:g} after "
        f"{spec.max_refinements} levels (last change {err:.3e})",
        best,
    )


def integrate_semi_infinite(f, spec, ndim=None):
    """Integrate f over [0, inf)^ndim.

    f takes ndim array arguments (one per axis) and returns an array of the
    broadcast shape.  ndim defaults to the length of the spec's per-axis
    sequences (1 if the spec is scalar).
    """
    if ndim is None:
        ndim = max(np.atleast_1d(np.asarray(spec.nodes, dtype=object)).size,
                   1 if isinstance(spec.rule, str) else len(list(spec.rule)))
    return _refine(f, spec, ndim, lambda i, r, n: _nodes_semi_infinite(r, n))


def integrate_product(f, domains, spec):
    """Integrate f over a product of per-axis domains.

    domains is a sequence whose entries are "semi_infinite" ([0, inf)) or
    "unit" ((0, 1)); axis i of f runs over domains[i].  Rules and node
    counts follow the spec's per-axis broadcasting, with len(domains) axes.
    """
    factories = {"semi_infinite": _nodes_semi_infinite, "unit": _nodes_unit}
    unknown = [d for d in domains if d not in factories]
    if unknown:
        raise ValueError(f"unknown domain {unknown[0]!r}")
    return _refine(f, spec, len(domains),
                   lambda i, r, n: factories[domains[i]](r, n))


def integrate_ordered_simplex(f, T, spec, ndim=None):
    """Integrate f over the ordered simplex 0 <= tau_2 <= ... <= tau_k <= T.

    ndim = k - 1 intermediate times; f takes them as separate array
    arguments (tau_2, ..., tau_k).  The simplex is mapped to the unit cube
    by the nested affine substitution tau_j = tau_{j-1} + (T - tau_{j-1}) u.
    """
    if T <= 0.0:
        raise ValueError("T must be > 0")
    if ndim is None:
        ndim = max(np.atleast_1d(np.asarray(spec.nodes, dtype=object)).size,
                   1 if isinstance(spec.rule, str) else len(list(spec.rule)))

    def mapped(*us):
        # Mapped times are kept strictly inside the open simplex: extreme
        # nodes can otherwise round onto a boundary, where integrable
        # endpoint singularities of f would evaluate to inf.
        taus = []
        prev = np.zeros(np.broadcast_shapes(*[np.shape(u) for u in us]))
        jac = np.ones_like(prev)
        upper = np.nextafter(T, -np.inf)
        for u in us:
            width = T - prev
            tau = prev + width * u
            tau = np.minimum(np.maximum(tau, np.nextafter(prev, np.inf)),
                             upper)
            jac = jac * width
            taus.append(tau)
            prev = tau
        return f(*taus) * jac

    return _refine(mapped, spec, ndim, lambda i, r, n: _nodes_unit(r, n))
