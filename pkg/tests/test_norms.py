import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.integrate import dblquad

from zklab.errors import InvalidInputError, PreconditionError, UnsupportedOrderError
from zklab.fields import gaussian, plane_wave, random_field
from zklab.norms import (
    AbsoluteSum,
    Polynomial,
    Trajectory,
    Truncated,
    fractional_1d,
    interpolation_check,
    leibniz_defect,
    mixed_norm,
    sobolev_norm,
    trapezoid_weights,
    triple_norm,
    truncated_weight_value,
    weighted_l2_norm,
)
from zklab.propagator import evolve_series
from zklab.spectral import Field2D, Grid2D, transform

G = Grid2D.square(128, 16.0)


def _field(seed, grid=G):
    return random_field(grid, np.random.default_rng(seed), n_packets=2, width_range=(0.7, 0.9), max_wavenumber=1.5)


def _free_trajectory(f, T=1.0, n=21):
    times = np.linspace(0.0, T, n)
    return Trajectory(f.grid, times, evolve_series(f, times))


# --- weighted and Sobolev norms ----------------------------------------------


def test_unit_weight_is_parseval_norm(gauss):
    v = weighted_l2_norm(gauss, Polynomial(0.0))
    assert v == pytest.approx(transform(gauss).l2_norm(), rel=1e-12)


@pytest.mark.parametrize("w", [Polynomial(1.0), AbsoluteSum(0.5), Truncated(4, 2.0)])
def test_zero_field_has_zero_weighted_norm(w):
    assert weighted_l2_norm(Field2D.zeros(G), w) == 0.0


def test_absolute_sum_on_gaussian_matches_quadrature():
    oracle = np.sqrt(4 * dblquad(lambda y, x: (x + y) * np.exp(-x * x - y * y), 0, 12, 0, 12, epsabs=1e-14, epsrel=1e-13)[0])
    assert oracle == pytest.approx(1.8827925275534296, rel=1e-12)
    assert oracle == pytest.approx(np.sqrt(2 * np.sqrt(np.pi)), rel=1e-12)
    g = Grid2D.square(256, 20.0)
    assert weighted_l2_norm(gaussian(g), AbsoluteSum(0.5)) == pytest.approx(oracle, rel=1e-6)


def test_polynomial_weight_on_gaussian_closed_form():
    # int (1 + r^2) exp(-r^2) = pi + pi
    assert weighted_l2_norm(gaussian(G), Polynomial(1.0)) == pytest.approx(np.sqrt(2 * np.pi), rel=1e-12)


def test_growing_weight_needs_decay():
    with pytest.raises(PreconditionError):
        weighted_l2_norm(plane_wave(G, 1, 1), Polynomial(0.5))
    # a bounded weight is fine
    weighted_l2_norm(plane_wave(G, 1, 1), Polynomial(0.0))


def test_truncated_weight_endpoint_values():
    for N in (1, 2, 8, 50):
        assert truncated_weight_value(N, 0.0) == 1.0
        assert truncated_weight_value(N, 5 * N) == 2 * N
        assert truncated_weight_value(N, 3 * N) == 2 * N
        assert truncated_weight_value(N, N) == pytest.approx(np.sqrt(1 + N * N), rel=1e-15)


def test_truncated_weight_rejects_small_n():
    with pytest.raises(InvalidInputError):
        truncated_weight_value(0.5, 1.0)


@given(st.integers(1, 200))
def test_truncated_weight_is_monotone_and_bounded(N):
    r = np.linspace(-4 * N, 4 * N, 40001)
    v = truncated_weight_value(N, r)
    half = v[r >= 0]
    assert np.all(np.diff(half) >= 0)
    assert np.array_equal(v, truncated_weight_value(N, -r))
    assert np.all(v <= 2 * N) and np.all(v >= 1)


def test_truncated_weight_derivative_bounds_do_not_depend_on_n():
    # |w^(j)| w^(j-1) by finite differences, away from the array ends
    bounds = (1.0, 2.5, 20.0)
    for N in (1, 2, 4, 16, 64, 256):
        h = N * 1e-3
        r = np.arange(-4 * N, 4 * N + h / 2, h)
        v = truncated_weight_value(N, r)
        d = v
        for j, c in enumerate(bounds):
            d = np.gradient(d, h)
            assert np.max((np.abs(d) * v**j)[10:-10]) <= c


def test_truncated_weight_norm_increases_with_n_and_converges():
    f = gaussian(G)
    vals = [weighted_l2_norm(f, Truncated(N, 1.0)) for N in (1, 2, 3, 4, 6)]
    assert np.all(np.diff(vals) >= 0)
    assert vals[-1] == pytest.approx(weighted_l2_norm(f, Polynomial(1.0)), rel=1e-6)


def test_sobolev_zero_is_l2(gauss):
    assert sobolev_norm(gauss, 0.0) == pytest.approx(gauss.l2_norm(), rel=1e-14)


@pytest.mark.parametrize("s", [0.5, 1.0, 2.7])
def test_sobolev_on_single_mode(s):
    g = Grid2D.square(32, np.pi)
    f = plane_wave(g, 1, 0)
    assert sobolev_norm(f, s) == pytest.approx(2 ** (s / 2) * f.l2_norm(), rel=1e-13)


def test_sobolev_one_on_gaussian_closed_form(gauss):
    # int (1 + |k|^2) exp(-|k|^2) dk = 2 pi
    assert sobolev_norm(gauss, 1.0) == pytest.approx(np.sqrt(2 * np.pi), rel=1e-8)


def test_negative_sobolev_order_rejected(gauss):
    with pytest.raises(UnsupportedOrderError):
        sobolev_norm(gauss, -0.5)


@given(st.floats(0, 3), st.floats(0, 3), st.integers(0, 10**6))
def test_sobolev_monotone_in_order(s1, s2, seed):
    f = _field(seed)
    lo, hi = sorted((s1, s2))
    assert sobolev_norm(f, lo) <= sobolev_norm(f, hi) * (1 + 1e-14)


# --- trajectories and mixed norms ----------------------------------------------


def test_trajectory_validation():
    a = np.zeros((2,) + G.shape)
    with pytest.raises(InvalidInputError):
        Trajectory(G, [0.1, 0.2], a)
    with pytest.raises(InvalidInputError):
        Trajectory(G, [0.0, 0.0], a)
    with pytest.raises(InvalidInputError):
        Trajectory(G, [0.0], a)


def test_trapezoid_weights_on_uneven_nodes():
    np.testing.assert_allclose(trapezoid_weights([0.0, 1.0, 3.0]), [0.5, 1.5, 1.0])


def _box_trajectory(a, b, c, grid, times):
    return Trajectory(grid, times, c[:, None, None] * np.outer(b, a)[None])


def test_all_twos_is_space_time_l2():
    g = Grid2D(16, 8, 2.0, 1.0)
    rng = np.random.default_rng(0)
    times = np.linspace(0.0, 1.0, 5)
    v = rng.standard_normal((5,) + g.shape)
    tr = Trajectory(g, times, v)
    direct = np.sqrt(np.sum(trapezoid_weights(times)[:, None, None] * v * v) * g.cell_area)
    for spec in ("x:2 y:2 t:2", "t:2 x:2 y:2", [("y", 2), ("t", 2), ("x", 2)]):
        assert mixed_norm(tr, spec) == pytest.approx(direct, rel=1e-13)


def test_separable_mixed_norm():
    g = Grid2D(16, 8, 2.0, 1.0)
    rng = np.random.default_rng(1)
    a, b = rng.standard_normal(g.nx), rng.standard_normal(g.ny)
    times = np.linspace(0.0, 2.0, 9)
    c = rng.standard_normal(times.size)
    tr = _box_trajectory(a, b, c, g, times)
    expect = np.max(np.abs(a)) * np.sqrt(np.sum(b * b) * g.dy) * np.sqrt(np.sum(trapezoid_weights(times) * c * c))
    assert mixed_norm(tr, "x:inf y:2 t:2") == pytest.approx(expect, rel=1e-10)


def test_ones_on_unit_window():
    g = Grid2D(8, 8, 1.0, 1.0)
    tr = Trajectory(g, np.linspace(0, 1, 11), np.ones((11, 8, 8)))
    assert mixed_norm(tr, "t:2 x:inf y:inf") == pytest.approx(1.0, rel=1e-14)


@pytest.mark.parametrize("spec", ["x:2 y:2", "x:2 y:3 t:2", "x:2 x:2 t:2", "z:2 y:2 t:2", [("x",)]])
def test_malformed_specs(spec):
    tr = Trajectory(G, [0.0], np.zeros((1,) + G.shape))
    with pytest.raises(InvalidInputError):
        mixed_norm(tr, spec)


@given(st.integers(0, 10**6), st.integers(0, 15), st.integers(0, 15))
def test_sup_in_space_dominates_any_point(seed, i, j):
    g = Grid2D(16, 16, 2.0, 2.0)
    rng = np.random.default_rng(seed)
    times = np.sort(np.concatenate([[0.0], rng.uniform(0.1, 2.0, 6)]))
    v = rng.standard_normal((times.size,) + g.shape)
    tr = Trajectory(g, times, v)
    point = np.sqrt(np.sum(trapezoid_weights(times) * v[:, i, j] ** 2))
    assert mixed_norm(tr, "t:2 x:inf y:inf") >= point


# --- triple norm -------------------------------------------------------------------


def test_triple_norm_of_zero_trajectory():
    tr = Trajectory(G, [0.0, 0.5, 1.0], np.zeros((3,) + G.shape))
    rep = triple_norm(tr, 1.0)
    assert rep.components == (0.0,) * 10 and rep.total == 0.0


def test_triple_norm_rejects_small_s():
    tr = Trajectory(G, [0.0], np.zeros((1,) + G.shape))
    with pytest.raises(InvalidInputError):
        triple_norm(tr, 0.75)


@pytest.mark.parametrize("s", [0.9, 1.0, 1.5])
def test_triple_norm_first_component_is_conserved_by_free_flow(s):
    f = _field(4)
    rep = triple_norm(_free_trajectory(f), s)
    assert rep.components[0] == pytest.approx(sobolev_norm(f, s), rel=1e-10)
    assert rep.total == pytest.approx(sum(rep.components))
    assert all(c >= 0 for c in rep.components)


def test_triple_norm_stable_under_grid_refinement():
    fine, coarse = Grid2D.square(256, 20.0), Grid2D.square(128, 20.0)
    a = triple_norm(_free_trajectory(gaussian(fine, width=1.3)), 0.9).components
    b = triple_norm(_free_trajectory(gaussian(coarse, width=1.3)), 0.9).components
    np.testing.assert_allclose(b, a, rtol=0.01)


def test_triple_norm_components_on_split_window():
    # each component over a prefix window is at most its value over the whole window
    f = _field(9)
    whole = _free_trajectory(f, T=1.0, n=21)
    first = Trajectory(G, whole.times[:11], whole.samples[:11])
    a, b = triple_norm(whole, 1.0).components, triple_norm(first, 1.0).components
    assert all(bi <= ai * (1 + 1e-12) for ai, bi in zip(a, b))


def test_l2_in_time_splits_exactly_in_squares():
    f = _field(9)
    whole = _free_trajectory(f, T=1.0, n=21)
    first = Trajectory(G, whole.times[:11], whole.samples[:11])
    second = Trajectory(G, whole.times[10:] - whole.times[10], whole.samples[10:])
    spec = "t:2 x:inf y:inf"
    assert mixed_norm(whole, spec) == pytest.approx(np.hypot(mixed_norm(first, spec), mixed_norm(second, spec)), rel=1e-13)


# --- interpolation and Leibniz -------------------------------------------------


def test_interpolation_limit_theta_to_one():
    f = gaussian(G)
    lhs, rhs = interpolation_check(f, 2.0, 1.0, 1 - 1e-9)
    w1 = np.sqrt(np.sum((1 + G.radius() ** 2) * f.samples**2) * G.cell_area)
    assert lhs / rhs == pytest.approx(1.0, abs=1e-6)
    assert lhs == pytest.approx(w1, rel=1e-6)


@pytest.mark.parametrize("kind", ["bracket", ("truncated", 4)])
def test_interpolation_homogeneity(kind):
    f = _field(2)
    l1, r1 = interpolation_check(f, 2.0, 1.0, 0.5, kind)
    l2, r2 = interpolation_check(f * 2.0, 2.0, 1.0, 0.5, kind)
    assert l2 == pytest.approx(2 * l1, rel=1e-14) and r2 == pytest.approx(2 * r1, rel=1e-14)


def test_interpolation_gaussian_ratio_is_moderate():
    lhs, rhs = interpolation_check(gaussian(G), 2.0, 1.0, 0.5)
    assert 0 < lhs <= rhs


@pytest.mark.parametrize("theta", [0.0, 1.0, -0.2])
def test_interpolation_rejects_theta(theta):
    with pytest.raises(InvalidInputError):
        interpolation_check(gaussian(G), 2.0, 1.0, theta)


X1 = np.linspace(-20, 20, 512, endpoint=False)


def test_fractional_1d_on_sine():
    out = fractional_1d(np.sin(np.pi * X1 / 4), 0.5, 20.0)
    np.testing.assert_allclose(out, (np.pi / 4) ** 0.5 * np.sin(np.pi * X1 / 4), atol=1e-12)


def test_leibniz_constant_factor_has_no_defect():
    f = np.exp(-X1**2)
    d, _ = leibniz_defect(f, np.ones_like(f), 0.5, 20.0)
    assert d < 1e-12


def test_leibniz_zero_f():
    d, bound = leibniz_defect(np.zeros_like(X1), np.exp(-X1**2), 0.5, 20.0)
    assert d == 0.0 and bound == 0.0


def test_leibniz_disjoint_gaussians_defect_is_finite_multiple():
    f, g = np.exp(-((X1 - 3) ** 2)), np.exp(-((X1 + 3) ** 2))
    d, bound = leibniz_defect(f, g, 0.5, 20.0)
    assert 0 < d < 10 * bound


@pytest.mark.parametrize("alpha", [0.0, 1.0, 1.5])
def test_leibniz_rejects_alpha(alpha):
    with pytest.raises(InvalidInputError):
        leibniz_defect(np.zeros(8), np.zeros(8), alpha, 1.0)
