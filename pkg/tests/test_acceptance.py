"""End-to-end acceptance gate: one criterion per test, one line each.

Run with `python3 -m pytest tests/test_acceptance.py -v -s` to see the
pass/fail line of every criterion alongside the pytest verdicts.  All
criteria are checked at their stated tolerances and runtime budgets.

Criterion 5b is expected to fail, deliberately: the computed equilateral
scalar sum is exactly -2791/1458 = -1.9143, which sits 2.8% from the
reference value -1.97 checked at a 2% tolerance.  The deviation is a
property of the computed quantity itself, not of the quadrature; see the
README section on known deviations before touching it.
"""

import itertools
import math
import time
from fractions import Fraction

import numpy as np

from casimir_polder import cli
from casimir_polder.bridge_mc import mc_te_two_body
from casimir_polder.core import AtomSystem
from casimir_polder.green_tensor import (
    projector_pair,
    three_body_collinear_coefficient,
    three_body_total_general,
    triple_trace,
    two_body_coefficient,
    pair_trace,
    EuclideanWaveVector,
    TRIPLE_COMBOS,
)
from casimir_polder.quadrature import QuadratureSpec
from casimir_polder.sweep import build_geometry, scalar_total_coefficient
from casimir_polder.worldline import (
    GaussianChainDensity,
    bridge_density,
    conditional_density,
    gaussian_laplacian,
    te_three_body_coefficient,
    te_two_body_coefficient,
    tm_three_body_coefficient,
    tm_two_body_coefficient,
)

GREEN_TWO_BODY = {
    "TE": -3.0 / (16.0 * math.pi),
    "TM": -73.0 / (16.0 * math.pi),
    "cross": -1.0 / math.pi,
    "total": -23.0 / (4.0 * math.pi),
}
WORLDLINE_TWO_BODY = {
    "TE": -3.0 / (8.0 * math.pi),
    "TM": -43.0 / (8.0 * math.pi),
    "total": -23.0 / (4.0 * math.pi),
}
COLLINEAR_TERMS_EXACT = {
    "eee": Fraction(45, 16),
    "hhh": Fraction(-3297, 16),
    "mix1": Fraction(153, 16),
    "mix2": Fraction(153, 16),
    "mix3": Fraction(87, 16),
    "mix4": Fraction(677, 16),
    "mix5": Fraction(347, 16),
    "mix6": Fraction(347, 16),
    "half_sum": Fraction(-93),
    "total": Fraction(-186),
}
WORLDLINE_COLLINEAR_TE = 22.5
WORLDLINE_COLLINEAR_TM = 1051.5
WORLDLINE_COLLINEAR_SUM = 358.0
TRIANGLE_SUM_REFERENCE = -1.97
EQUILATERAL_REFERENCE = 5.2
MC_TARGET = -3.0 / (8.0 * math.pi)

FROZEN_SWEEPS = {
    0.5: "tests/data/sweep_b_half.csv",
    1.0: "tests/data/sweep_b_one.csv",
}


def _report(label, ok, detail):
    print(f"\n{label}: {'PASS' if ok else 'FAIL'} ({detail})")
    return ok


def _rel(value, target):
    return abs(value - target) / abs(target)


# ---------------------------------------------------------------------------


def test_criterion_1_green_tensor_two_body():
    worst_rel = 0.0
    worst_time = 0.0
    for mode, target in GREEN_TWO_BODY.items():
        start = time.perf_counter()
        result = two_body_coefficient(mode)
        worst_time = max(worst_time, time.perf_counter() - start)
        worst_rel = max(worst_rel, _rel(result.value, target))
    ok = worst_rel < 1e-5 and worst_time < 30.0
    assert _report(
        "criterion 1 (electromagnetic two-body, 4 modes)", ok,
        f"max rel dev {worst_rel:.2e} vs 1e-5, slowest call "
        f"{worst_time:.2f} s vs 30 s")


def test_criterion_2_worldline_two_body():
    times = {}
    start = time.perf_counter()
    te = te_two_body_coefficient()
    times["TE"] = time.perf_counter() - start
    start = time.perf_counter()
    tm = tm_two_body_coefficient()
    times["TM"] = time.perf_counter() - start
    values = {"TE": te.value, "TM": tm.value, "total": te.value + tm.value}
    worst_rel = max(_rel(values[k], WORLDLINE_TWO_BODY[k]) for k in values)
    worst_time = max(times.values())
    ok = worst_rel < 1e-5 and worst_time < 30.0
    assert _report(
        "criterion 2 (worldline two-body TE/TM/sum)", ok,
        f"max rel dev {worst_rel:.2e} vs 1e-5, slowest call "
        f"{worst_time:.2f} s vs 30 s")


def test_criterion_3_collinear_per_term():
    start = time.perf_counter()
    worst_rel = 0.0
    for term, target in COLLINEAR_TERMS_EXACT.items():
        result = three_body_collinear_coefficient(term)
        worst_rel = max(worst_rel, _rel(result.value, float(target)))
    elapsed = time.perf_counter() - start
    ok = worst_rel < 1e-4 and elapsed < 300.0
    assert _report(
        "criterion 3 (collinear per-term wave-number route, 10 terms)", ok,
        f"max rel dev {worst_rel:.2e} vs 1e-4, total {elapsed:.1f} s vs "
        "300 s")


def test_criterion_4_position_space_oracle():
    start = time.perf_counter()
    collinear = three_body_total_general(build_geometry(0.5, 1.0))
    t_collinear = time.perf_counter() - start
    start = time.perf_counter()
    equilateral = three_body_total_general(build_geometry(1.0, 0.5))
    t_equilateral = time.perf_counter() - start
    rel_collinear = _rel(collinear.value, -186.0)
    rel_equilateral = _rel(equilateral.value, EQUILATERAL_REFERENCE)
    ok = (rel_collinear < 1e-6 and rel_equilateral < 2e-2
          and max(t_collinear, t_equilateral) < 10.0)
    assert _report(
        "criterion 4 (position-space totals: -186 and +5.2)", ok,
        f"collinear rel dev {rel_collinear:.2e} vs 1e-6, equilateral rel "
        f"dev {rel_equilateral:.2e} vs 2e-2, slowest call "
        f"{max(t_collinear, t_equilateral):.2f} s vs 10 s")


def test_criterion_5a_worldline_collinear():
    system = build_geometry(0.5, 1.0)
    te = te_three_body_coefficient(system)
    tm = tm_three_body_coefficient(system)
    rel_te = _rel(te.value, WORLDLINE_COLLINEAR_TE)
    rel_tm = _rel(tm.value, WORLDLINE_COLLINEAR_TM)
    rel_sum = _rel((te.value + tm.value) / 3.0, WORLDLINE_COLLINEAR_SUM)
    ok = max(rel_te, rel_tm, rel_sum) < 1e-4
    assert _report(
        "criterion 5a (worldline collinear 22.5 / 1051.5 / +358)", ok,
        f"TE rel dev {rel_te:.2e}, TM rel dev {rel_tm:.2e}, "
        f"factor-3 sum rel dev {rel_sum:.2e}, all vs 1e-4")


def test_criterion_5b_worldline_triangle_sum():
    total = scalar_total_coefficient(build_geometry(1.0, 0.5))
    rel_sum = _rel(total.value, TRIANGLE_SUM_REFERENCE)
    ok = rel_sum < 2e-2
    assert _report(
        "criterion 5b (equilateral scalar sum vs -1.97)", ok,
        f"computed {total.value:.6f} (exact -2791/1458), rel dev "
        f"{rel_sum:.2e} vs 2e-2; known deviation, see README")


def _load_sweep_csv(path):
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().strip().split("\n")
    assert lines[0] == cli.CSV_HEADER
    rows = []
    for line in lines[1:]:
        fields = line.split(",")
        rows.append((fields[1], float(fields[5]), float(fields[6]),
                     float(fields[7])))
    return rows


def test_criterion_6_figure_sweeps(tmp_path):
    start = time.perf_counter()
    fresh = {}
    for b_over_c, frozen_path in FROZEN_SWEEPS.items():
        out = tmp_path / f"sweep_{b_over_c}.csv"
        status = cli.main(["sweep", "--b-over-c", str(b_over_c),
                           "--grid", "41", "--output", str(out)])
        assert status == 0
        fresh[b_over_c] = _load_sweep_csv(out)
    elapsed = time.perf_counter() - start

    regressions = 0
    comparisons = 0
    for b_over_c, frozen_path in FROZEN_SWEEPS.items():
        frozen = _load_sweep_csv(frozen_path)
        assert len(frozen) == len(fresh[b_over_c]) == 82
        for (m_f, c_f, v_f, e_f), (m_n, c_n, v_n, e_n) in zip(
                frozen, fresh[b_over_c]):
            assert m_f == m_n and c_f == c_n
            comparisons += 1
            if math.isnan(v_f) != math.isnan(v_n):
                regressions += 1
            elif not math.isnan(v_f) and _rel(v_n, v_f) > 1e-7:
                regressions += 1

    def anchor_value(b_over_c, method, cos_theta):
        for m, c, v, _ in fresh[b_over_c]:
            if m == method and c == cos_theta:
                return v
        raise AssertionError(f"missing anchor row {method} at {cos_theta}")

    anchors = [
        (anchor_value(0.5, "green_tensor", 1.0), -186.0, 1e-6),
        (anchor_value(0.5, "worldline_sum", 1.0), 358.0, 1e-4),
        (anchor_value(1.0, "green_tensor", 0.5),
         float(Fraction(1264, 243)), 1e-6),
        (anchor_value(1.0, "worldline_sum", 0.5),
         float(Fraction(-2791, 1458)), 1e-4),
    ]
    worst_anchor = max(_rel(value, target) / tol
                       for value, target, tol in anchors)

    ok = (elapsed < 1800.0 and regressions == 0 and worst_anchor < 1.0)
    assert _report(
        "criterion 6 (41-point sweeps at b/c=0.5 and 1)", ok,
        f"{elapsed:.0f} s vs 1800 s, {comparisons} frozen rows, "
        f"{regressions} regressions, worst anchor at "
        f"{worst_anchor:.2e} of its tolerance")


def _check_projector_completeness(rng):
    done = 0
    while done < 1000:
        k = rng.standard_normal(3)
        if math.hypot(k[0], k[1]) < 1e-3:
            continue
        pair = projector_pair(k)
        khat = k / np.linalg.norm(k)
        resolved = pair.A_e + pair.A_h + np.outer(khat, khat)
        if np.abs(resolved - np.eye(3)).max() >= 1e-12:
            return False
        done += 1
    return True


def _random_wave_vector(rng):
    return EuclideanWaveVector(s=rng.uniform(0.3, 2.0),
                               k_x=rng.standard_normal(),
                               k_y=rng.standard_normal())


def _check_trace_oracles(rng):
    for i in range(1000):
        A = projector_pair(_random_wave_vector(rng))
        B = projector_pair(_random_wave_vector(rng))
        C = projector_pair(_random_wave_vector(rng))
        for which in ("ee", "hh", "he", "eh"):
            Ma = A.A_e if which[0] == "e" else A.A_h
            Mb = B.A_e if which[1] == "e" else B.A_h
            direct = np.trace(Ma @ Mb.T).real
            if abs(pair_trace(A, B, which) - direct) > \
                    1e-12 * max(1.0, abs(direct)):
                return False
        which = TRIPLE_COMBOS[i % len(TRIPLE_COMBOS)]
        mats = [P.A_e if c == "e" else P.A_h
                for P, c in zip((A, B, C), which)]
        direct = np.trace(mats[0] @ mats[1] @ mats[2]).real
        if abs(triple_trace(A, B, C, which) - direct) > \
                1e-12 * max(1.0, abs(direct)):
            return False
    return True


def _check_conditioning_and_variance(rng):
    checked = 0
    while checked < 100:
        total = rng.uniform(0.5, 3.0)
        t1, t2 = np.sort(rng.uniform(0.05, 0.95, size=2)) * total
        if t2 - t1 < 1e-3 * total:
            continue
        base = rng.standard_normal(3) * 0.2
        r1 = base + rng.standard_normal(3) * 0.3
        r2 = base + rng.standard_normal(3) * 0.3
        fwd = bridge_density(t1, total, base, r1) \
            * conditional_density(t2, r2, t1, r1, total, base)
        bwd = bridge_density(t2, total, base, r2) \
            * conditional_density(t1, r1, t2, r2, total, base)
        if abs(fwd - bwd) > 1e-12 * max(fwd, bwd):
            return False
        params = GaussianChainDensity(order=3).factor_parameters(
            (0.0, t1, t2), total)
        var1 = params[0][0]
        var2, prev_weight, _ = params[1]
        # Composing the two conditional factors must reproduce the
        # single-pin variance t2 (1 - t2/T).
        marginal = prev_weight ** 2 * var1 + var2
        bridge_var = t2 * (total - t2) / total
        if abs(marginal - bridge_var) > 1e-12 * bridge_var:
            return False
        checked += 1
    return True


def _check_laplacian_finite_differences(rng):
    h = 1e-4
    for order in (2, 3):
        chain = GaussianChainDensity(order=order)
        deltas = tuple(rng.uniform(0.3, 1.0, size=order))
        pos = rng.standard_normal((order, 3)) * 0.5
        for size in range(1, order + 1):
            for subset in itertools.combinations(range(order), size):
                g = gaussian_laplacian(chain, subset)
                inner = gaussian_laplacian(chain, subset[:-1])
                pin = subset[-1]
                fd = 0.0
                for axis in range(3):
                    shift = np.zeros((order, 3))
                    shift[pin, axis] = h
                    fd += float(inner(deltas, pos + shift)) \
                        - 2.0 * float(inner(deltas, pos)) \
                        + float(inner(deltas, pos - shift))
                fd /= h * h
                value = float(g(deltas, pos))
                if abs(value - fd) > 1e-6 * abs(fd):
                    return False
    return True


def _check_rigid_motion(rng):
    coarse = QuadratureSpec(
        rule=("gauss_legendre_mapped", "double_exponential",
              "double_exponential"),
        nodes=(32, 48, 48), rel_tol=1e-2, max_refinements=2)
    positions = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0],
                          [0.5, math.sqrt(3.0) / 2.0, 0.0]])
    Q, _ = np.linalg.qr(rng.standard_normal((3, 3)))
    moved = positions @ Q.T + rng.standard_normal(3)
    base = AtomSystem(positions=positions, polarizabilities=np.ones(3))
    alt = AtomSystem(positions=moved, polarizabilities=np.ones(3))
    pairs = [
        (te_three_body_coefficient(base, spec=coarse).value,
         te_three_body_coefficient(alt, spec=coarse).value, 1e-2),
        (tm_three_body_coefficient(base, spec=coarse).value,
         tm_three_body_coefficient(alt, spec=coarse).value, 1e-2),
        (three_body_total_general(base).value,
         three_body_total_general(alt).value, 1e-8),
    ]
    return all(_rel(b, a) < tol for a, b, tol in pairs)


def test_criterion_7_property_suites():
    # Independent deterministic streams so one suite's draw count can
    # never shift another suite onto different samples.
    checks = {
        "projector completeness (1000)":
            _check_projector_completeness(np.random.default_rng(11)),
        "trace oracles (1000)":
            _check_trace_oracles(np.random.default_rng(7)),
        "conditioning order + variance identity (100)":
            _check_conditioning_and_variance(np.random.default_rng(17)),
        "laplacian finite differences":
            _check_laplacian_finite_differences(np.random.default_rng(23)),
        "rigid motion invariance":
            _check_rigid_motion(np.random.default_rng(29)),
    }
    failed = [name for name, passed in checks.items() if not passed]
    ok = not failed
    assert _report(
        "criterion 7 (property suites)", ok,
        "all five suites green" if ok else f"failed: {', '.join(failed)}")


def test_criterion_8_monte_carlo():
    start = time.perf_counter()
    first = mc_te_two_body(1.0, 100000, seed=42)
    elapsed = time.perf_counter() - start
    second = mc_te_two_body(1.0, 100000, seed=42)
    deviation = abs(first.mean - MC_TARGET) / first.standard_error
    noise = first.standard_error / abs(first.mean)
    reproducible = (first.mean == second.mean
                    and first.standard_error == second.standard_error)
    ok = (deviation <= 3.0 and noise <= 0.05 and reproducible
          and elapsed < 60.0)
    assert _report(
        "criterion 8 (Monte Carlo validation, 1e5 paths)", ok,
        f"deviation {deviation:.2f} sigma vs 3, relative noise "
        f"{noise:.4f} vs 0.05, bit-reproducible {reproducible}, "
        f"{elapsed:.1f} s vs 60 s")
