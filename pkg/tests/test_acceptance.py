"""The twelve acceptance criteria, each at its stated tolerance and time limit."""

import json
import time

import numpy as np

from brascamp_lieb.catalog import (
    frame_120,
    holder,
    loomis_whitney,
    random_geometric_datum,
    random_rotation,
    random_simple_datum,
    young,
    young_closed_form,
)
from brascamp_lieb.cli import run_heatflow
from brascamp_lieb.core import BLDatum, Subspace, direct_sum_datum
from brascamp_lieb.finiteness import (
    FinitenessStatus,
    greedy_index_selection,
    rank_one_finiteness,
    rank_one_polytope,
)
from brascamp_lieb.gaussian import (
    GaussianInput,
    SolveStatus,
    fixed_point_solve,
    gaussian_functional,
    is_geometric,
    quadrature_oracle,
)
from brascamp_lieb.heatflow import (
    Direction,
    KernelSpec,
    PointMassList,
    assert_monotone,
    heat_extension_norm_trace,
    log_concave_trace,
    strictly_monotone,
)
from brascamp_lieb.structure import (
    Extremisability,
    classify_extremisability,
    criticality_defect,
    find_critical_subspace,
    verify_factorization,
)

from conftest import data_path, record_acceptance

TWO_POINTS = PointMassList(np.array([[-1.0], [1.0]]), np.array([1.0, 1.0]))


def _finish(number: int, started: float, limit: float, ok: bool, detail: str) -> None:
    elapsed = time.perf_counter() - started
    passed = ok and elapsed < limit
    record_acceptance(number, passed, f"{detail}; {elapsed:.2f} s (limit {limit:g} s)")
    assert ok, detail
    assert elapsed < limit, f"took {elapsed:.2f} s, limit {limit} s"


def test_01_holder():
    t0 = time.perf_counter()
    out = fixed_point_solve(holder())
    verdict = classify_extremisability(holder())
    ok = (
        out.status is SolveStatus.CONVERGED
        and abs(out.blg_value - 1.0) <= 1e-8
        and verdict.status is Extremisability.EXTREMISABLE
    )
    _finish(1, t0, 1.0, ok, f"BL_g={out.blg_value!r}, {verdict.status.value}")


def test_02_loomis_whitney():
    t0 = time.perf_counter()
    d = loomis_whitney(3)
    out = fixed_point_solve(d)
    rep = find_critical_subspace(d)
    chk = verify_factorization(d, rep)
    ok = (
        is_geometric(d)
        and out.converged
        and abs(out.blg_value - 1.0) <= 1e-8
        and rep.subspace.dim == 2
        and rep.subspace.is_coordinate()
        and rep.defect == 0.0
        and chk.complete
        and abs(chk.full - chk.restricted * chk.quotient) <= 1e-8
    )
    _finish(2, t0, 1.0, ok, f"BL_g={out.blg_value!r}, critical plane defect {rep.defect}, factorization gap {chk.relative_error:.2e}")


def test_03_sharp_young():
    t0 = time.perf_counter()
    out = fixed_point_solve(young())
    oracle = young_closed_form((2 / 3,) * 3)
    scale = 4.5 / out.extremiser[0][0, 0]
    normalized = [float(scale * a[0, 0]) for a in out.extremiser]
    ok = (
        out.converged
        and abs(oracle - 0.75**0.5) < 1e-15
        and abs(out.blg_value - oracle) <= 1e-7
        and all(abs(a - 4.5) <= 1e-6 for a in normalized)
    )
    _finish(3, t0, 1.0, ok, f"BL_g={out.blg_value!r} vs {oracle!r}, scaled extremiser {normalized}")


def test_04_rank_one_polytope():
    t0 = time.perf_counter()
    vecs = [[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]]

    def datum(p):
        return BLDatum(2, tuple(np.array([v]) for v in vecs), p)

    poly = rank_one_polytope(datum((2 / 3,) * 3))
    inside = rank_one_finiteness(datum((2 / 3,) * 3)).status
    # p_1 exceeds the facet p_1 <= 1 by 0.1 while the scaling equation still holds
    outside = rank_one_finiteness(datum((1.1, 0.45, 0.45))).status
    ok = (
        set(poly.vertices) == {(1, 1, 0), (0, 1, 1), (1, 0, 1)}
        and inside is FinitenessStatus.PROVEN_FINITE
        and outside is FinitenessStatus.PROVEN_INFINITE
    )
    _finish(4, t0, 1.0, ok, f"vertices {sorted(poly.vertices)}, interior {inside.value}, outside {outside.value}")


def test_05_edge_non_extremisable():
    t0 = time.perf_counter()
    d = young((1.0, 0.5, 0.5))
    out = fixed_point_solve(d)
    verdict = classify_extremisability(d)
    lines = [e.critical_subspace for e in verdict.evidence if e.critical_subspace is not None]
    certified = bool(lines) and lines[0].dim == 1 and abs(criticality_defect(d, lines[0])) <= 1e-12
    ok = (
        out.status is SolveStatus.DEGENERATED
        and verdict.status is Extremisability.NOT_EXTREMISABLE
        and certified
        and lines[0] == Subspace.coordinate(2, [1])
    )
    _finish(5, t0, 5.0, ok, f"{out.status.value}, {verdict.status.value}, critical line {lines[0].basis.ravel().round(12).tolist() if lines else None}")


SUM_SHAPES = [(1, [1, 1, 1]), (2, [1, 1, 1]), (3, [1, 1, 1, 1]), (3, [2, 2, 2, 2]), (4, [1, 1, 1, 1, 1]), (4, [2, 2, 2, 2, 2])]


def test_06_multiplicativity():
    t0 = time.perf_counter()
    worst = 0.0
    for k in range(10):
        rng = np.random.default_rng(600 + k)
        n, dims = SUM_SHAPES[k % len(SUM_SHAPES)]
        a, b = random_simple_datum(n, dims, rng), random_simple_datum(n, dims, rng)
        va, vb = fixed_point_solve(a).blg_value, fixed_point_solve(b).blg_value
        vs = fixed_point_solve(direct_sum_datum(a, b)).blg_value
        worst = max(worst, abs(vs - va * vb) / (va * vb))
    _finish(6, t0, 30.0, worst <= 1e-6, f"20 data in 10 sums, worst relative gap {worst:.2e}")


def test_07_oracle_equivalence():
    t0 = time.perf_counter()
    rng = np.random.default_rng(700)
    pool = [
        young(),
        young((0.9, 0.9, 0.2)),
        frame_120(),
        holder(),
        holder(1, (0.3, 0.7)),
        BLDatum(1, (np.array([[2.0]]), np.array([[-0.5]])), (0.5, 0.5)),
    ]
    worst = 0.0
    for k in range(50):
        d = pool[k % len(pool)] if k % 5 else random_simple_datum(2, [1, 1, 1], rng)
        A = GaussianInput.random(d, rng)
        exact = gaussian_functional(d, A)
        worst = max(worst, abs(quadrature_oracle(d, A) - exact) / exact)
    _finish(7, t0, 60.0, worst <= 1e-6, f"50 inputs, worst relative gap {worst:.2e}")


def _scale_free(A: GaussianInput) -> list[np.ndarray]:
    s = sum(np.trace(a) for a in A)
    return [a / s for a in A]


def test_08_uniqueness():
    t0 = time.perf_counter()
    shapes = [(2, [1, 1, 1]), (3, [1, 1, 1, 1]), (3, [2, 2, 2, 2]), (2, [1, 1, 1, 1]), (4, [2, 2, 2, 2, 2])]
    worst, unconverged = 0.0, 0
    for k in range(10):
        rng = np.random.default_rng(800 + k)
        n, dims = shapes[k % len(shapes)]
        d = random_simple_datum(n, dims, rng)
        ref = fixed_point_solve(d)
        base = _scale_free(ref.extremiser)
        for s in range(16):
            out = fixed_point_solve(d, seed=1000 * k + s)
            if not out.converged:
                unconverged += 1
                continue
            worst = max(worst, abs(out.blg_value - ref.blg_value) / ref.blg_value)
            for a, b in zip(_scale_free(out.extremiser), base):
                worst = max(worst, float(np.abs(a - b).max() / np.abs(b).max()))
    _finish(8, t0, 60.0, worst <= 1e-6 and unconverged == 0, f"10 data x 16 starts, worst gap {worst:.2e}, unconverged {unconverged}")


def test_09_heat_flow_monotonicity():
    t0 = time.perf_counter()
    with open(data_path("heatflow_frame.json"), encoding="utf-8") as fh:
        spec = json.load(fh)
    trace, direction, extra = run_heatflow(spec)
    check = assert_monotone(trace, Direction.NON_DECREASING)
    rel = abs(trace.values[-1] - trace.limit) / trace.limit
    ok = (
        direction is Direction.NON_DECREASING
        and check.passed
        and check.violations == 0
        and rel <= 0.02
        and trace.times.size == 25
        and trace.meta["points"] == 256
    )
    _finish(9, t0, 60.0, ok, f"{check.violations} violations, final/limit - 1 = {trace.values[-1] / trace.limit - 1:.2e}")


def test_10_heat_extension_growth():
    t0 = time.perf_counter()
    strict = {p: strictly_monotone(heat_extension_norm_trace(TWO_POINTS, p), Direction.NON_DECREASING) for p in (1.5, 2.0, 3.0)}
    single = heat_extension_norm_trace(PointMassList(np.array([[0.0]]), np.ones(1)), 2.0)
    flat = np.all(np.abs(np.diff(single.values)) <= single.error_bound[1:] + single.error_bound[:-1])
    ok = all(strict.values()) and bool(flat)
    _finish(10, t0, 10.0, ok, f"strictly increasing {strict}, single mass constant {bool(flat)}")


def test_11_log_concave_sliding():
    t0 = time.perf_counter()
    kernel = KernelSpec.exponential(1.0)
    sq = log_concave_trace(kernel, TWO_POINTS, 2.0)
    lin = log_concave_trace(kernel, TWO_POINTS, 1.0)
    spread = float(lin.values.max() - lin.values.min())
    ok = assert_monotone(sq, Direction.NON_INCREASING).passed and spread <= 1e-9
    _finish(11, t0, 10.0, ok, f"p=2 nonincreasing, p=1 spread {spread:.1e}")


def test_12_greedy_certificate():
    t0 = time.perf_counter()
    rng = np.random.default_rng(1200)
    shapes = [(3, [2, 2, 2, 2]), (3, [1, 1, 1, 1]), (4, [2, 2, 2, 2, 2]), (2, [1, 1, 1])]
    data = [loomis_whitney(3)] + [random_geometric_datum(*shapes[k % len(shapes)], rng) for k in range(10)]
    violations = 0
    for d in data:
        for _ in range(8):
            sel = greedy_index_selection(d, random_rotation(d.n, rng))
            violations += len(sel.prefix_violations(d.exponents, d.n))
    _finish(12, t0, 10.0, violations == 0, f"{len(data)} data x 8 bases, {violations} prefix violations")
