"""Electromagnetic scattering route: TE/TM projectors and Green tensors.

Two independent evaluators live here.  The plane-wave route decomposes each
dyadic Green tensor into TE/TM polarization projectors, integrates the
azimuthal angles analytically, and quadratures the remaining imaginary
frequency and radial wave-number axes.  The position-space route evaluates
the closed-form free-space dyadic tensor at imaginary frequency and reduces
any three-atom geometry to a single frequency integral; it serves as the
cross-check oracle for the plane-wave results and as the general-geometry
engine.

Conventions (natural units, nondimensional geometry):
  two-body   V = C * alpha1*alpha2 / ((4 pi eps0)^2 r^7)
  three-body V = C * alpha1*alpha2*alpha3 / (pi (4 pi eps0)^3 R^10)
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .core import AtomSystem, CoefficientResult, GeometryError, nondimensionalize
from .quadrature import QuadratureSpec, integrate_semi_infinite

TWO_BODY_MODES = ("TE", "TM", "cross", "total")
COLLINEAR_TERMS = ("eee", "hhh", "mix1", "mix2", "mix3", "mix4", "mix5",
                   "mix6", "half_sum", "total")
TRIPLE_COMBOS = ("eee", "eeh", "ehe", "hee", "ehh", "heh", "hhe", "hhh")

DEFAULT_TWO_BODY_SPEC = QuadratureSpec(rule="exp_transform", nodes=16,
                                       rel_tol=1e-6, max_refinements=4)
DEFAULT_COLLINEAR_SPEC = QuadratureSpec(rule="exp_transform", nodes=12,
                                        rel_tol=1e-6, max_refinements=4)
DEFAULT_ORACLE_SPEC = QuadratureSpec(rule="exp_transform", nodes=32,
                                     rel_tol=1e-8, max_refinements=5)


class OnAxisError(ValueError):
    """Transverse wave-vector magnitude vanished; ê is undefined there."""


@dataclass(frozen=True)
class EuclideanWaveVector:
    """Wick-rotated wave vector: k = is, k_z = i*kappa, transverse part real.

    s is the imaginary-frequency magnitude; kappa = sqrt(s^2 + k_rho^2) is
    real, so exponentials e^(i k_z z) become decaying e^(-kappa z).
    """

    s: float
    k_x: float
    k_y: float

    def __post_init__(self):
        if not np.isfinite([self.s, self.k_x, self.k_y]).all():
            raise ValueError("wave-vector components must be finite")
        if self.s < 0.0:
            raise ValueError("imaginary-frequency magnitude s must be >= 0")

    @property
    def k_rho(self):
        return math.hypot(self.k_x, self.k_y)

    @property
    def kappa(self):
        return math.sqrt(self.s**2 + self.k_x**2 + self.k_y**2)

    @property
    def k_z(self):
        return 1j * self.kappa

    @property
    def k(self):
        return 1j * self.s


def _components(wv):
    """(k_x, k_y, k_z, k, k_rho) with complex k_z, k for Euclidean input."""
    if isinstance(wv, EuclideanWaveVector):
        return wv.k_x, wv.k_y, wv.k_z, wv.k, wv.k_rho
    v = np.asarray(wv, dtype=float)
    if v.shape != (3,):
        raise ValueError("wave vector must be a 3-vector or EuclideanWaveVector")
    k_rho = math.hypot(v[0], v[1])
    return v[0], v[1], complex(v[2]), complex(np.linalg.norm(v)), k_rho


def unit_vectors(wv):
    """TE/TM unit vectors (ê, ĥ) for a wave vector with k_rho > 0.

    ê = (k_y, -k_x, 0)/k_rho is the TE direction; ĥ = ê x k̂ the TM one.
    Accepts a real 3-vector or an EuclideanWaveVector; components of ĥ are
    complex for the latter (k_z = i*kappa).
    """
    k_x, k_y, k_z, k, k_rho = _components(wv)
    if k_rho == 0.0:
        raise OnAxisError("k_rho = 0: TE/TM frame undefined on the z-axis")
    e_hat = np.array([k_y / k_rho, -k_x / k_rho, 0.0])
    h_hat = np.array([-k_z * k_x / (k * k_rho),
                      -k_z * k_y / (k * k_rho),
                      k_rho / k])
    if isinstance(wv, EuclideanWaveVector):
        return e_hat, h_hat
    return e_hat, h_hat.real


@dataclass(frozen=True)
class ProjectorPair:
    """Polarization projectors A_e = êê, A_h = ĥĥ with their wave vector."""

    wavevector: object
    A_e: np.ndarray
    A_h: np.ndarray


def projector_pair(wv):
    e_hat, h_hat = unit_vectors(wv)
    return ProjectorPair(wavevector=wv,
                         A_e=np.outer(e_hat, e_hat),
                         A_h=np.outer(h_hat, h_hat))


def _dot_ee(a, b):
    axx, axy, _, _, arho = a
    bxx, bxy, _, _, brho = b
    return (axx * bxx + axy * bxy) / (arho * brho)


def _dot_eh(a, b):
    """ê(a) . ĥ(b)."""
    axx, axy, _, _, arho = a
    bxx, bxy, bkz, bk, brho = b
    return bkz * (axx * bxy - axy * bxx) / (arho * brho * bk)


def _dot_hh(a, b):
    axx, axy, akz, ak, arho = a
    bxx, bxy, bkz, bk, brho = b
    return (akz * bkz * (axx * bxx + axy * bxy) + arho**2 * brho**2) \
        / (ak * bk * arho * brho)


def _dot(kind_a, kind_b, a, b):
    if kind_a == "e" and kind_b == "e":
        return _dot_ee(a, b)
    if kind_a == "e" and kind_b == "h":
        return _dot_eh(a, b)
    if kind_a == "h" and kind_b == "e":
        return _dot_eh(b, a)
    return _dot_hh(a, b)


def pair_trace(A, B, which):
    """Closed-form Tr[P P'] for one choice of TE/TM projectors per leg.

    which: 'ee', 'hh', 'he' or 'eh'.  Rank-1 projectors factor the trace
    into squared unit-vector dot products; the result is real for both real
    and Wick-rotated wave vectors.
    """
    if which not in ("ee", "hh", "he", "eh"):
        raise ValueError(f"unknown pair trace {which!r}")
    a = _components(A.wavevector)
    b = _components(B.wavevector)
    if a[4] == 0.0 or b[4] == 0.0:
        raise OnAxisError("pair trace undefined at k_rho = 0")
    d = _dot(which[0], which[1], a, b)
    return float((d * d).real)


def triple_trace(A, B, C, which):
    """Closed-form Tr[P P' P''] for one of the eight TE/TM leg choices.

    which: three letters from {e, h}, one per leg, e.g. 'eeh'.  The trace of
    a product of rank-1 projectors is the cyclic product of dot products
    (v1.v2)(v2.v3)(v3.v1); real-valued in both conventions.
    """
    if which not in TRIPLE_COMBOS:
        raise ValueError(f"unknown triple trace {which!r}")
    comps = [_components(P.wavevector) for P in (A, B, C)]
    if any(c[4] == 0.0 for c in comps):
        raise OnAxisError("triple trace undefined at k_rho = 0")
    d12 = _dot(which[0], which[1], comps[0], comps[1])
    d23 = _dot(which[1], which[2], comps[1], comps[2])
    d31 = _dot(which[2], which[0], comps[2], comps[0])
    return float((d12 * d23 * d31).real)


@dataclass(frozen=True)
class TraceTable:
    """All pair traces of one wave-vector pair and, when a third vector is
    supplied, all triple traces of the triple."""

    pair: dict = field(default_factory=dict)
    triple: dict = field(default_factory=dict)

    def __post_init__(self):
        for table in (self.pair, self.triple):
            for key, value in table.items():
                if not np.isfinite(value):
                    raise ValueError(f"non-finite trace entry {key!r}")


def trace_table(wv1, wv2, wv3=None):
    P1, P2 = projector_pair(wv1), projector_pair(wv2)
    pair = {w: pair_trace(P1, P2, w) for w in ("ee", "hh", "he", "eh")}
    triple = {}
    if wv3 is not None:
        P3 = projector_pair(wv3)
        triple = {w: triple_trace(P1, P2, P3, w) for w in TRIPLE_COMBOS}
    return TraceTable(pair=pair, triple=triple)


def _scaled(f, scales):
    """Rescale each axis so the integrand decays at unit rate; the Jacobian
    is folded into the returned integrand."""
    jac = float(np.prod(scales))

    def g(*xs):
        return f(*(x * c for x, c in zip(xs, scales))) * jac

    return g


def _quad(f, spec, ndim, scales):
    return integrate_semi_infinite(_scaled(f, scales), spec, ndim=ndim)


def two_body_coefficient(mode, spec=None):
    """Plane-wave coefficient for two atoms at unit separation on the z-axis.

    After azimuthal integration the three remaining axes are the imaginary
    frequency s and the two radial wave numbers rho, rho'; kappa decays both
    exponentials.  Mode selects the polarization content: TE, TM, their
    cross term (both orderings summed), or the total.
    """
    if mode not in TWO_BODY_MODES:
        raise ValueError(f"unknown two-body mode {mode!r}")
    spec = spec or DEFAULT_TWO_BODY_SPEC

    def integrand(s, rho, rho_p):
        kap = np.sqrt(s**2 + rho**2)
        kap_p = np.sqrt(s**2 + rho_p**2)
        if mode == "TE":
            t = s**4
        elif mode == "TM":
            t = kap**2 * kap_p**2 + 2.0 * rho**2 * rho_p**2
        elif mode == "cross":
            t = s**2 * (kap**2 + kap_p**2)
        else:
            t = (s**4 + kap**2 * kap_p**2 + 2.0 * rho**2 * rho_p**2
                 + s**2 * (kap**2 + kap_p**2))
        return rho * rho_p * t * np.exp(-kap - kap_p) / (kap * kap_p)

    est = _quad(integrand, spec, 3, (0.5, 1.0, 1.0))
    pref = 1.0 / (4.0 * math.pi)
    return CoefficientResult(value=-pref * est.value,
                             error_estimate=pref * est.error_estimate,
                             method="green_tensor_planewave",
                             mode="cross_TE_TM" if mode == "cross" else mode,
                             order=2, convention="two_body")


def _collinear_weight(term, s, kap, kap_p, kap_pp, rho, rho_p, rho_pp):
    """Azimuthally reduced numerator for one leg-polarization choice.

    Legs carry (rho, kappa) between atoms 1-2, (rho', kappa') between 2-3,
    (rho'', kappa'') between 3-1; mixN labels follow that leg order (mix1-3
    a single TM leg, mix4-6 two TM legs).
    """
    if term == "eee":
        return -s**6
    if term == "hhh":
        return 4.0 * rho**2 * rho_p**2 * rho_pp**2 \
            - kap**2 * kap_p**2 * kap_pp**2
    if term == "mix1":
        return -s**4 * kap**2
    if term == "mix2":
        return -s**4 * kap_p**2
    if term == "mix3":
        return -s**4 * kap_pp**2
    if term == "mix4":
        return -s**2 * kap**2 * kap_p**2
    if term == "mix5":
        return -s**2 * kap**2 * kap_pp**2
    if term == "mix6":
        return -s**2 * kap_p**2 * kap_pp**2
    raise ValueError(f"unknown collinear term {term!r}")


def three_body_collinear_coefficient(term, spec=None):
    """Plane-wave per-term coefficient for collinear atoms at z = 0, 1/2, 1.

    The eight polarization assignments of the single trace term are
    integrated over (s, rho, rho', rho''); half_sum integrates their sum and
    total doubles it (the interaction has two equal trace orderings).
    """
    if term not in COLLINEAR_TERMS:
        raise ValueError(f"unknown collinear term {term!r}")
    spec = spec or DEFAULT_COLLINEAR_SPEC
    parts = COLLINEAR_TERMS[:8] if term in ("half_sum", "total") else (term,)

    def integrand(s, rho, rho_p, rho_pp):
        kap = np.sqrt(s**2 + rho**2)
        kap_p = np.sqrt(s**2 + rho_p**2)
        kap_pp = np.sqrt(s**2 + rho_pp**2)
        m = sum(_collinear_weight(t, s, kap, kap_p, kap_pp,
                                  rho, rho_p, rho_pp) for t in parts)
        damp = np.exp(-0.5 * kap - 0.5 * kap_p - kap_pp)
        return rho * rho_p * rho_pp * m * damp / (kap * kap_p * kap_pp)

    est = _quad(integrand, spec, 4, (0.5, 2.0, 2.0, 1.0))
    factor = 0.25 if term == "total" else 0.125
    mode = {"eee": "TE", "hhh": "TM"}.get(term, "total")
    if term.startswith("mix"):
        mode = "cross_TE_TM"
    return CoefficientResult(value=-factor * est.value,
                             error_estimate=factor * est.error_estimate,
                             method="green_tensor_planewave", mode=mode,
                             order=3, convention="three_body")


def position_space_green(r1, r2, s):
    """Free-space dyadic Green tensor at imaginary frequency, closed form.

    Solves the impulse-driven vector wave equation after Wick rotation; the
    longitudinal (along the separation) and transverse parts carry different
    polynomials in s*u, both damped by e^(-s*u) with u the separation.
    """
    r1 = np.asarray(r1, dtype=float)
    r2 = np.asarray(r2, dtype=float)
    if s < 0.0:
        raise ValueError("imaginary frequency s must be >= 0")
    diff = r1 - r2
    u = float(np.linalg.norm(diff))
    if u == 0.0:
        raise GeometryError("Green tensor is singular at coincident points")
    uu = np.outer(diff, diff) / u**2
    su = s * u
    longitudinal = 2.0 * (su + 1.0) * uu
    transverse = -(su * su + su + 1.0) * (np.eye(3) - uu)
    return math.exp(-su) / (4.0 * math.pi * u**3) * (longitudinal + transverse)


def _triple_product_trace(system, s):
    """Tr[G12 G23 G31] and Tr[G13 G21 G32] at one frequency, dimensionless
    (each tensor scaled by 4 pi)."""
    r = system.positions
    g = {}
    for i in range(3):
        for j in range(3):
            if i != j:
                g[i, j] = 4.0 * math.pi * position_space_green(r[i], r[j], s)
    t1 = np.trace(g[0, 1] @ g[1, 2] @ g[2, 0])
    t2 = np.trace(g[0, 2] @ g[1, 0] @ g[2, 1])
    return t1, t2


def three_body_total_general(system, spec=None):
    """Total three-body coefficient for any three-atom geometry.

    A single semi-infinite frequency integral of the two trace orderings of
    the position-space tensors.  The orderings are verified equal on a
    sample frequency, then one is integrated and doubled.  Systems not yet
    nondimensional are rescaled by their largest separation first; prescaled
    systems keep their stated reference length.
    """
    if system.n_atoms != 3:
        raise GeometryError("exactly three atoms required")
    if not system.nondimensional:
        system = nondimensionalize(system)
    spec = spec or DEFAULT_ORACLE_SPEC

    s_probe = 0.8 / system.min_separation()
    t1, t2 = _triple_product_trace(system, s_probe)
    if not math.isclose(t1, t2, rel_tol=1e-9, abs_tol=1e-300):
        raise RuntimeError(
            f"trace orderings disagree at s = {s_probe}: {t1} vs {t2}")

    d = system.pairwise_distances()
    perimeter = d[0, 1] + d[1, 2] + d[2, 0]

    def integrand(s):
        return np.array([_triple_product_trace(system, si)[0] for si in s])

    est = _quad(integrand, spec, 1, (1.0 / perimeter,))
    return CoefficientResult(value=-est.value,
                             error_estimate=est.error_estimate,
                             method="green_tensor_oracle", mode="total",
                             order=3, convention="three_body")


def two_body_total_from_green(spec=None):
    """Cross-check: two-body total from the position-space tensor.

    Unit separation on the z-axis; integrates Tr[G12 G21] over imaginary
    frequency in the same convention as two_body_coefficient.
    """
    spec = spec or DEFAULT_ORACLE_SPEC
    r1, r2 = np.zeros(3), np.array([0.0, 0.0, 1.0])

    def integrand(s):
        out = np.empty_like(s)
        for i, si in enumerate(s):
            g12 = 4.0 * math.pi * position_space_green(r1, r2, si)
            g21 = 4.0 * math.pi * position_space_green(r2, r1, si)
            out[i] = np.trace(g12 @ g21)
        return out

    est = _quad(integrand, spec, 1, (0.5,))
    pref = 1.0 / (2.0 * math.pi)
    return CoefficientResult(value=-pref * est.value,
                             error_estimate=pref * est.error_estimate,
                             method="green_tensor_oracle", mode="total",
                             order=2, convention="two_body")
