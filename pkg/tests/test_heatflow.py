import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from brascamp_lieb.catalog import frame_120, holder, loomis_whitney, young
from brascamp_lieb.errors import DomainError, PreconditionError, StructuralError, UnsupportedError
from brascamp_lieb.heatflow import (
    Direction,
    GridField,
    KernelSpec,
    MonotonicityTrace,
    PointMassList,
    assert_monotone,
    center_of_mass_divergence,
    evolve_geometric_heat,
    extreme_gaussian,
    gaussian_mixture,
    geometric_times,
    heat_evolve,
    heat_extension_norm_trace,
    log_concave_trace,
    log_concavity_defect,
    sliding_gaussian_trace,
    strictly_monotone,
)

R = 60.0
TWO_POINTS = PointMassList(np.array([[-1.0], [1.0]]), np.array([1.0, 1.0]))
SHORT_TIMES = geometric_times(count=8)


def _bump(dim, centre, width=0.5, points=256):
    return GridField.from_function(gaussian_mixture([(1.0, centre, width)]), dim, R, points)


# ---------------------------------------------------------------- containers


def test_default_times():
    t = geometric_times()
    assert t.size == 25 and t[0] == 0.05
    np.testing.assert_allclose(t[1:] / t[:-1], 1.3)


def test_grid_field_validation():
    with pytest.raises(StructuralError):
        GridField(np.ones((4, 5)), 1.0)
    with pytest.raises(StructuralError):
        GridField(np.ones(1024), 1.0)
    with pytest.raises(StructuralError):
        GridField(np.ones((4, 4, 4, 4)), 1.0)
    with pytest.raises(DomainError):
        GridField(-np.ones(8), 1.0)
    with pytest.raises(DomainError):
        GridField(np.zeros(8), 1.0)


def test_grid_field_geometry():
    f = _bump(1, [0.0], points=512)
    assert f.spacing == pytest.approx(2 * R / 512)
    assert f.axis()[0] == -R and f.axis()[-1] < R
    assert f.mass() == pytest.approx(1.0, rel=1e-12)
    assert f.coarsened().points == 256
    # exp(-r^2 / (2 sigma^2)) drops below 1e-14 at r = sigma sqrt(28 ln 10)
    assert abs(f.support_radius() - 0.5 * np.sqrt(28 * np.log(10))) <= f.spacing


def test_point_mass_validation():
    with pytest.raises(DomainError):
        PointMassList(np.zeros((0, 1)), np.zeros(0))
    with pytest.raises(DomainError):
        PointMassList(np.array([0.0]), np.array([-1.0]))
    with pytest.raises(StructuralError):
        PointMassList(np.array([0.0, 1.0]), np.array([1.0]))
    assert PointMassList(np.array([0.0, 0.0, 1.0]), np.ones(3)).distinct_points() == 2


def test_trace_validation_and_csv():
    with pytest.raises(DomainError):
        MonotonicityTrace(np.array([1.0, 1.0]), np.zeros(2), np.zeros(2))
    with pytest.raises(DomainError):
        MonotonicityTrace(np.array([1.0, 2.0]), np.array([1.0, np.nan]), np.zeros(2))
    with pytest.raises(StructuralError):
        MonotonicityTrace(np.array([1.0, 2.0]), np.zeros(3), np.zeros(2))
    csv = MonotonicityTrace(np.array([0.5, 1.0]), np.array([1.0, 2.0]), np.array([0.0, 0.1])).to_csv()
    assert csv.splitlines() == ["t,Q,error_bound", "0.5,1.0,0.0", "1.0,2.0,0.1"]


# ---------------------------------------------------------------- monotonicity checks


def test_assert_monotone_examples():
    flat = MonotonicityTrace(np.arange(3.0), np.ones(3), np.zeros(3))
    assert assert_monotone(flat, Direction.NON_DECREASING).passed
    assert assert_monotone(flat, "NonIncreasing").passed
    rising = MonotonicityTrace(np.arange(3.0), np.array([1.0, 1.1, 1.2]), np.full(3, 1e-9))
    assert assert_monotone(rising, Direction.NON_DECREASING).passed
    res = assert_monotone(rising, Direction.NON_INCREASING)
    assert not res.passed and res.violations == 2
    assert res.worst_violation == pytest.approx(0.1 - 2e-9)


def test_error_bounds_absorb_small_dips():
    t = MonotonicityTrace(np.arange(3.0), np.array([1.0, 0.99, 1.2]), np.array([0.006, 0.006, 0.0]))
    assert assert_monotone(t, Direction.NON_DECREASING).passed
    assert not strictly_monotone(t, Direction.NON_DECREASING)


# ---------------------------------------------------------------- heat evolution


def test_heat_evolution_of_extreme_gaussian_matches_closed_form():
    # e^{t Laplacian} exp(-pi x^2) = (1 + 4 pi t)^{-1/2} exp(-pi x^2 / (1 + 4 pi t))
    f = GridField.from_function(extreme_gaussian, 1, R, 512)
    for t in (0.1, 1.0, 5.0):
        s = 1 + 4 * np.pi * t
        exact = s**-0.5 * np.exp(-np.pi * f.axis() ** 2 / s)
        np.testing.assert_allclose(heat_evolve(f, t), exact, atol=1e-12)


@settings(max_examples=15)
@given(st.integers(0, 10_000), st.floats(0.01, 20.0))
def test_heat_evolution_conserves_mass(seed, t):
    rng = np.random.default_rng(seed)
    dim = 1 + seed % 2
    comps = [(float(rng.uniform(0.2, 2)), rng.uniform(-2, 2, dim), float(rng.uniform(0.3, 1))) for _ in range(3)]
    f = GridField.from_function(gaussian_mixture(comps), dim, R, 128)
    u = heat_evolve(f, t)
    assert abs(u.sum() * f.spacing**dim - f.mass()) <= 1e-6


def test_extreme_gaussians_give_a_constant_trace():
    d = loomis_whitney(3)
    # the support check only needs about 9 here; a tight box keeps the grid fine
    inputs = [GridField.from_function(extreme_gaussian, 2, 12.0, 128) for _ in range(3)]
    tr = evolve_geometric_heat(d, inputs, SHORT_TIMES, points=48)
    spread = tr.values.max() - tr.values.min()
    assert spread <= tr.error_bound.max() + 1e-9
    assert tr.limit == pytest.approx(1.0, rel=1e-9)


def test_holder_line_trace_is_the_conserved_mass():
    f = _bump(1, [0.3], points=512)
    tr = evolve_geometric_heat(holder(1, (0.5, 0.5)), [f, f], SHORT_TIMES, points=512)
    np.testing.assert_allclose(tr.values, f.mass(), rtol=1e-9)


def test_frame_trace_rises_towards_the_limit():
    f = _bump(1, [0.5], 0.6)
    g = GridField.from_function(gaussian_mixture([(0.5, [0.8], 0.5), (0.5, [-0.8], 0.5)]), 1, R, 256)
    tr = evolve_geometric_heat(frame_120(), [f, g, f], geometric_times(count=10), points=128)
    assert assert_monotone(tr, Direction.NON_DECREASING).passed
    assert tr.values[-1] <= tr.limit + tr.error_bound[-1]
    assert tr.meta["max_mass_drift"] <= 1e-6


def test_geometric_heat_refinement_contract():
    # halving every grid spacing moves each sample by less than 4x its error bound
    f = lambda pts: _bump(1, [0.5], 0.6, pts)  # noqa: E731
    g = lambda pts: GridField.from_function(  # noqa: E731
        gaussian_mixture([(0.5, [0.8], 0.5), (0.5, [-0.8], 0.5)]), 1, R, pts
    )
    times = geometric_times(count=6)
    coarse = evolve_geometric_heat(frame_120(), [f(128), g(128), f(128)], times, points=64)
    fine = evolve_geometric_heat(frame_120(), [f(256), g(256), f(256)], times, points=128)
    assert np.all(np.abs(fine.values - coarse.values) < 4 * coarse.error_bound + 1e-12)


def test_geometric_heat_preconditions():
    f = _bump(1, [0.0])
    with pytest.raises(PreconditionError):
        evolve_geometric_heat(young(), [f, f, f])
    with pytest.raises(StructuralError):
        evolve_geometric_heat(frame_120(), [f, f])
    narrow = GridField.from_function(extreme_gaussian, 1, 5.0, 64)
    with pytest.raises(DomainError):
        evolve_geometric_heat(frame_120(), [narrow] * 3)


# ---------------------------------------------------------------- sliding gaussians


def test_sliding_with_masses_at_origin_is_constant():
    d = frame_120()
    origin = PointMassList(np.zeros((1, 1)), np.ones(1))
    tr = sliding_gaussian_trace(d, [np.eye(1)] * 3, [origin] * 3, np.linspace(0, 2, 5), points=201)
    assert tr.values.max() - tr.values.min() <= 1e-12


def test_sliding_young_is_nonincreasing():
    tr = sliding_gaussian_trace(young(), [np.array([[4.5]])] * 3, [TWO_POINTS] * 3, np.linspace(0, 2, 9))
    res = assert_monotone(tr, Direction.NON_INCREASING)
    assert res.passed and tr.error_bound.max() < 1e-6


def test_sliding_hypothesis_is_checked_per_map():
    with pytest.raises(PreconditionError, match="map 1"):
        sliding_gaussian_trace(holder(1, (0.5, 0.5)), [np.eye(1), 3 * np.eye(1)], [TWO_POINTS] * 2, [0.0, 1.0])


# ---------------------------------------------------------------- log-concave kernels


def test_exponential_kernel_against_closed_form():
    # int (e^{-|x-t|} + e^{-|x+t|})^2 dx = 2 + 2 (1 + 2t) e^{-2t}
    tr = log_concave_trace(KernelSpec.exponential(), TWO_POINTS, 2.0)
    oracle = 2 + 2 * (1 + 2 * tr.times) * np.exp(-2 * tr.times)
    np.testing.assert_allclose(tr.values, oracle, rtol=1e-10)
    assert assert_monotone(tr, Direction.NON_INCREASING).passed


def test_p_one_and_single_mass_are_constant():
    tr = log_concave_trace(KernelSpec.exponential(), TWO_POINTS, 1.0)
    assert tr.values.max() - tr.values.min() <= 1e-9
    single = PointMassList(np.array([[2.0]]), np.ones(1))
    tr = log_concave_trace(KernelSpec.exponential(0.5), single, 3.0)
    assert tr.values.max() - tr.values.min() <= 1e-9


def test_log_concave_exponent_below_one_is_out_of_scope():
    with pytest.raises(UnsupportedError):
        log_concave_trace(KernelSpec.exponential(), TWO_POINTS, 0.5)


def test_tabulated_kernel_validation():
    bump = GridField.from_function(lambda x: np.exp(-np.abs(x[..., 0]) ** 1.5), 1, 8.0, 64)
    assert log_concavity_defect(bump) <= 1e-8
    KernelSpec.tabulated(bump)
    two_humps = GridField.from_function(gaussian_mixture([(1, [-3.0], 0.5), (1, [3.0], 0.5)]), 1, 8.0, 64)
    with pytest.raises(DomainError):
        KernelSpec.tabulated(two_humps)


def test_two_dimensional_gaussian_kernel_trace():
    masses = PointMassList(np.array([[1.0, 0.0], [-0.5, 0.5]]), np.array([1.0, 2.0]))
    tr = log_concave_trace(KernelSpec.gaussian(np.diag([1.0, 2.0])), masses, 2.0, geometric_times(count=6), points=201)
    assert assert_monotone(tr, Direction.NON_INCREASING).passed


@settings(max_examples=10)
@given(st.integers(0, 10_000))
def test_center_of_mass_divergence_is_nonnegative(seed):
    rng = np.random.default_rng(seed)
    gamma = rng.uniform(1.1, 2.0)
    table = GridField.from_function(lambda x: np.exp(-np.abs(x[..., 0]) ** gamma), 1, 10.0, 256)
    kernel = KernelSpec.tabulated(table)
    masses = PointMassList(rng.uniform(-2, 2, size=(2, 1)), rng.uniform(0.5, 2, size=2))
    assert center_of_mass_divergence(kernel, masses, float(rng.uniform(0.1, 2.0))) >= -1e-8


# ---------------------------------------------------------------- heat extension


def test_single_point_mass_norm_is_constant():
    for p in (1.5, 2.0, 3.0):
        tr = heat_extension_norm_trace(PointMassList(np.array([[0.7]]), np.ones(1)), p)
        exact = (4 * np.pi) ** (-(1 - 1 / p) / 2) * p ** (-1 / (2 * p))
        np.testing.assert_allclose(tr.values, exact, rtol=1e-10)
        assert not tr.meta["strictly_increasing"]


def test_p_one_gives_total_mass():
    tr = heat_extension_norm_trace(PointMassList(np.array([[-1.0], [2.0]]), np.array([0.5, 1.5])), 1.0)
    np.testing.assert_allclose(tr.values, 2.0, rtol=1e-10)


def test_two_point_mass_norm_strictly_increases():
    tr = heat_extension_norm_trace(TWO_POINTS, 3.0)
    assert tr.meta["strictly_increasing"]


def test_heat_extension_errors():
    with pytest.raises(DomainError):
        heat_extension_norm_trace(TWO_POINTS, 0.5)
    with pytest.raises(DomainError):
        heat_extension_norm_trace(TWO_POINTS, 2.0, times=[0.0, 1.0])
    with pytest.raises(UnsupportedError):
        heat_extension_norm_trace(PointMassList(np.zeros((1, 2)), np.ones(1)), 2.0)
