import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fracstokes.fracops import (
    FractionalOrderError,
    TimeGrid,
    Trajectory,
    caputo_derivative,
    empirical_orders,
    l1_weight_matrix,
    make_grid,
    power_rule_integral,
    power_rule_reference,
    read_csv,
    reconstruct_from_caputo,
    riemann_liouville_integral,
    rl_weight_matrix,
    sup_error,
    write_csv,
)
from fracstokes.specfun import gamma

# mpmath, 30 digits
GAMMA_13_OVER_19 = 0.93314886694030375
TWO_OVER_GAMMA_25 = 1.5045055561273501
POWER_RULE_AT_2 = 0.56158832786229178


# {{{ grids


def test_grid_uniform_and_graded():
    g = TimeGrid.uniform(2.0, 8)
    assert g.N == 8
    assert g.T == 2.0
    assert np.allclose(np.diff(g.nodes), 0.25)

    g = TimeGrid.graded(1.0, 10, 2.5)
    j = np.arange(11)
    assert np.array_equal(g.nodes, (j / 10) ** 2.5)
    assert g.spec() == "graded:2.5"


def test_grid_toward_end_excludes_endpoint():
    g = TimeGrid.graded_toward_end(1.0, 64, 4.0)
    assert g.nodes[-1] < 1.0
    assert np.all(np.diff(g.nodes) > 0.0)
    # spacing shrinks toward T
    assert g.steps[-1] < g.steps[0]


@pytest.mark.parametrize(
    "nodes", [[0.0, 1.0], [0.1, 0.5, 1.0], [0.0, 0.5, 0.5, 1.0], [0.0, 0.6, 0.4]]
)
def test_grid_invalid(nodes):
    with pytest.raises(ValueError):
        TimeGrid(np.array(nodes))


def test_make_grid():
    assert make_grid(1.0, 4).kind == "uniform"
    assert make_grid(1.0, 4, "graded:3").r == 3.0
    assert make_grid(1.0, 4, "graded", alpha=0.5).r == pytest.approx(3.0)
    with pytest.raises(ValueError):
        make_grid(1.0, 4, "chebyshev")


def test_trajectory_validation():
    g = TimeGrid.uniform(1.0, 4)
    with pytest.raises(ValueError):
        Trajectory(g, np.zeros(4))
    with pytest.raises(ValueError):
        Trajectory(g, np.array([0.0, 1.0, np.inf, 0.0, 0.0]))
    v = Trajectory(g, np.zeros(5))
    assert v.values.shape == (5, 1)


# }}}


# {{{ riemann-liouville


def test_rl_constant():
    g = TimeGrid.uniform(1.0, 64)
    v = Trajectory.from_function(g, lambda t: np.ones_like(t))
    Jv = riemann_liouville_integral(v, 0.5)
    assert Jv.values[-1, 0] == pytest.approx(1.1283791670955126, rel=1.0e-13)
    assert np.all(Jv.values[0] == 0.0)


def test_rl_alpha_one_is_exact_on_linear():
    g = TimeGrid.graded(1.0, 33, 1.7)
    v = Trajectory.from_function(g, lambda t: t)
    Jv = riemann_liouville_integral(v, 1.0)
    assert np.allclose(Jv.values[:, 0], g.nodes**2 / 2, rtol=1.0e-13, atol=0.0)


@settings(max_examples=40, deadline=None)
@given(
    alpha=st.floats(0.05, 1.0),
    slope=st.floats(-5.0, 5.0),
    intercept=st.floats(-5.0, 5.0),
    r=st.sampled_from([1.0, 1.5, 3.0]),
)
def test_rl_exact_on_affine(alpha, slope, intercept, r):
    g = TimeGrid.graded(1.3, 50, r)
    v = Trajectory.from_function(g, lambda t: intercept + slope * t)
    t = g.nodes[1:]
    exact = power_rule_integral(intercept, 0.0, alpha, t) + power_rule_integral(slope, 1.0, alpha, t)
    Jv = riemann_liouville_integral(v, alpha).values[1:, 0]
    scale = power_rule_integral(abs(intercept), 0.0, alpha, t) + power_rule_integral(
        abs(slope), 1.0, alpha, t
    )
    assert np.all(np.abs(Jv - exact) <= 1.0e-12 * scale + 1.0e-300)


def test_rl_power_converges():
    errors = []
    ns = [128, 256, 512, 1024]
    for n in ns:
        g = TimeGrid.uniform(1.0, n)
        v = Trajectory.from_function(g, lambda t: t**0.3)
        errors.append(abs(riemann_liouville_integral(v, 0.6).values[-1, 0] - GAMMA_13_OVER_19))
    assert errors[-1] < 1.0e-4
    assert np.all(empirical_orders(ns, errors) > 1.2)
    assert gamma(1.3) / gamma(1.9) == pytest.approx(GAMMA_13_OVER_19, rel=1.0e-14)


def test_rl_weight_rows_sum_to_power():
    g = TimeGrid.graded(2.0, 40, 2.0)
    W = rl_weight_matrix(g, 0.35)
    assert np.allclose(W.sum(axis=1), g.nodes**0.35 / gamma(1.35), rtol=1.0e-13)
    assert np.all(np.triu(W, 1) == 0.0)


def test_semigroup_graded_order():
    ns = [256, 512, 1024, 2048]
    errors = []
    for n in ns:
        g = TimeGrid.graded(1.0, n, 3.0)
        v = Trajectory.from_function(g, np.cos)
        lhs = riemann_liouville_integral(riemann_liouville_integral(v, 0.4), 0.3)
        errors.append(sup_error(lhs, riemann_liouville_integral(v, 0.7)))
    assert errors[-1] <= 1.0e-4
    assert np.all(empirical_orders(ns, errors) >= 1.8)


def test_semigroup_uniform_order_is_limited():
    # J^0.4 cos ~ t^0.4 near 0: linear interpolation limits uniform grids to 0.7
    ns = [256, 512, 1024]
    errors = []
    for n in ns:
        g = TimeGrid.uniform(1.0, n)
        v = Trajectory.from_function(g, np.cos)
        lhs = riemann_liouville_integral(riemann_liouville_integral(v, 0.4), 0.3)
        errors.append(sup_error(lhs, riemann_liouville_integral(v, 0.7)))
    assert np.allclose(empirical_orders(ns, errors), 0.7, atol=0.02)


def test_rl_domain():
    g = TimeGrid.uniform(1.0, 4)
    v = Trajectory(g, np.zeros(5))
    for alpha in (0.0, -0.5, 1.5):
        with pytest.raises(FractionalOrderError):
            riemann_liouville_integral(v, alpha)


# }}}


# {{{ caputo


def test_caputo_constant_is_zero():
    g = TimeGrid.graded(1.0, 32, 2.0)
    v = Trajectory(g, np.full((33, 3), 4.2))
    d = caputo_derivative(v, 0.4)
    assert np.all(np.isnan(d.values[0]))
    assert np.all(d.values[1:] == 0.0)


def test_caputo_square_converges():
    ns = [256, 1024, 4096]
    errors = []
    for n in ns:
        g = TimeGrid.uniform(1.0, n)
        v = Trajectory.from_function(g, lambda t: t**2)
        errors.append(abs(caputo_derivative(v, 0.5).values[-1, 0] - TWO_OVER_GAMMA_25))
    assert 2.0 / gamma(2.5) == pytest.approx(TWO_OVER_GAMMA_25, rel=1.0e-14)
    assert errors[-1] < 5.0e-6
    # L1 order 2 - alpha
    assert np.all(empirical_orders(ns, errors) > 1.4)


def test_caputo_matching_power():
    alpha = 0.6
    g = TimeGrid.graded(1.0, 2048, (2 - alpha) / alpha)
    v = Trajectory.from_function(g, lambda t: t**alpha)
    d = caputo_derivative(v, alpha).values[:, 0]
    # pointwise convergence away from 0; the first node has a fixed O(1) error
    away = g.nodes >= 0.05
    assert np.max(np.abs(d[away] - gamma(alpha + 1.0))) < 1.0e-2
    assert d[1] == pytest.approx(g.nodes[1] ** alpha / (g.steps[0] ** alpha * gamma(2 - alpha)))


def test_l1_weights_positive_and_monotone():
    g = TimeGrid.graded(1.0, 50, 2.2)
    B = l1_weight_matrix(g, 0.7)
    for j in range(1, 51):
        row = B[j, :j]
        assert np.all(row > 0.0)
        # later panels carry more weight
        assert np.all(np.diff(row) > 0.0)


def test_caputo_domain():
    g = TimeGrid.uniform(1.0, 4)
    v = Trajectory(g, np.zeros(5))
    for alpha in (0.0, 1.0):
        with pytest.raises(FractionalOrderError):
            caputo_derivative(v, alpha)


# }}}


# {{{ reconstruction


def test_reconstruct_trivial():
    g = TimeGrid.uniform(1.0, 16)
    v = reconstruct_from_caputo(Trajectory(g, np.zeros((17, 2))), [1.0, -2.0], 0.5)
    assert np.all(v.values == [1.0, -2.0])


def test_reconstruct_power():
    alpha = 0.7
    g = TimeGrid.uniform(1.0, 512)
    G = Trajectory(g, np.full(513, gamma(alpha + 1.0)))
    v = reconstruct_from_caputo(G, 0.0, alpha)
    assert np.max(np.abs(v.values[:, 0] - g.nodes**alpha)) < 1.0e-12


def test_reconstruct_round_trip():
    alpha = 0.5
    errors = []
    ns = [256, 1024]
    for n in ns:
        g = TimeGrid.uniform(1.0, n)
        v = Trajectory.from_function(g, lambda t: (1.0 + t) ** 2)
        w = reconstruct_from_caputo(caputo_derivative(v, alpha), v.values[0], alpha)
        assert np.array_equal(w.values[0], v.values[0])
        errors.append(sup_error(w, v))
    assert errors[-1] < 1.0e-3
    assert errors[-1] < errors[0]


def test_left_inverse_cos():
    # D^a J^a v = v, with D^a = cD^a on J^a v since (J^a v)(0) = 0
    alpha = 0.5
    g = TimeGrid.uniform(1.0, 2048)
    v = Trajectory.from_function(g, np.cos)
    w = caputo_derivative(riemann_liouville_integral(v, alpha), alpha)
    err = np.abs(w.values[1:, 0] - v.values[1:, 0])
    away = g.nodes[1:] >= 0.05
    assert np.max(err[away]) <= 5.0e-3

    # J^a v ~ t^a / Gamma(1 + a) near 0, where the L1 error is scale invariant
    first = 1.0 / (gamma(2.0 - alpha) * gamma(1.0 + alpha)) - 1.0
    assert err[0] == pytest.approx(first, rel=1.0e-3)


# }}}


def test_power_rule_reference():
    assert power_rule_reference(1.0, 1.0, 0.5, 1.0) == pytest.approx(2.0 / np.sqrt(np.pi), rel=1e-14)
    assert power_rule_reference(0.0, 0.4, 0.5, 3.0) == 0.0
    assert power_rule_reference(1.0, 0.3, 0.6, 2.0) == pytest.approx(POWER_RULE_AT_2, rel=1e-13)
    # 1 - alpha + beta = 0: derivative of t^(alpha - 1) vanishes
    assert power_rule_reference(1.0, -0.5, 0.5, 0.7) == 0.0
    with pytest.raises(ValueError):
        power_rule_reference(1.0, -1.0, 0.5, 1.0)
    with pytest.raises(ValueError):
        power_rule_reference(1.0, 1.0, 0.5, 0.0)


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), alpha=st.floats(0.05, 0.95))
def test_linearity(seed, alpha):
    rng = np.random.default_rng(seed)
    g = TimeGrid.graded(1.0, 24, 1.5)
    u = Trajectory(g, rng.standard_normal((25, 3)))
    v = Trajectory(g, rng.standard_normal((25, 3)))
    a, b = rng.standard_normal(2)
    w = Trajectory(g, a * u.values + b * v.values)

    for op in (riemann_liouville_integral, caputo_derivative):
        lhs = op(w, alpha).values[1:]
        rhs = a * op(u, alpha).values[1:] + b * op(v, alpha).values[1:]
        scale = np.abs(a * op(u, alpha).values[1:]) + np.abs(b * op(v, alpha).values[1:]) + 1
        assert np.all(np.abs(lhs - rhs) <= 1.0e-12 * scale)


def test_csv_round_trip(tmp_path):
    g = TimeGrid.graded(1.0, 10, 2.0)
    rng = np.random.default_rng(7)
    v = Trajectory(g, rng.standard_normal((11, 2)))
    path = tmp_path / "v.csv"
    write_csv(v, path)
    assert path.read_text().splitlines()[0] == "t,v0,v1"
    w = read_csv(path)
    assert np.array_equal(w.values, v.values)
    assert np.array_equal(w.t, v.t)

    d = caputo_derivative(v, 0.5)
    write_csv(d, path)
    w = read_csv(path)
    assert np.all(np.isnan(w.values[0]))
    assert np.array_equal(w.values[1:], d.values[1:])
