import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fracstokes.fracode import (
    FracIVP,
    Growth,
    NoConvergenceError,
    SingularSystemError,
    StepDegenerationError,
    affine_ivp,
    auxiliary_constant,
    contraction_step,
    duhamel_closed_form,
    estimate_lipschitz,
    gronwall_check,
    gronwall_constant,
    l1_implicit_solve,
    picard_solve,
    shift_continuity_check,
)
from fracstokes.fracops import (
    TimeGrid,
    Trajectory,
    empirical_orders,
    l1_weight_matrix,
    sup_error,
)
from fracstokes.specfun import MLParams, mittag_leffler

# t^(a+1) E_{a,a+2}(-mu t^a) at a = 0.6, mpmath series at 400 digits
DUHAMEL_LINEAR = {
    (0.05, 0.3): 0.10045839525511184484,
    (0.05, 1.0): 0.67937748814455265455,
    (0.5, 0.3): 0.088950640560358984403,
    (0.5, 1.0): 0.53631130851162710172,
    (5.0, 0.3): 0.039630609504345583324,
    (5.0, 1.0): 0.16136061876477653486,
    (40.0, 0.3): 0.0070816510034592510268,
    (40.0, 1.0): 0.024308920371479532053,
}
E06_AT_1 = 4.2486350026483743397


def ml_decay(alpha, mu, t):
    return mittag_leffler(MLParams(alpha, 1.0), -mu * np.asarray(t) ** alpha)


def random_affine(rng, m):
    lam = rng.uniform(0.0, 4.0, size=m)
    amp = rng.normal(size=m)
    w = rng.uniform(0.5, 6.0, size=m)

    def f(t):
        return amp[None, :] * np.cos(w[None, :] * t[:, None])

    return np.diag(lam), f, rng.normal(size=m)


# {{{ contraction step


def test_step_first_condition():
    tau = contraction_step(1.0, 0.75, 2.0, 0.0, math.inf)
    assert tau == pytest.approx((math.gamma(1.75) / 2.0) ** (1.0 / 0.75), rel=1e-14)
    # substitute back
    assert tau**0.75 / math.gamma(1.75) == pytest.approx(0.5, rel=1e-14)


def test_step_doubling_lipschitz():
    alpha = 0.75
    t1 = contraction_step(1.0, alpha, 2.0, 0.0, math.inf)
    t2 = contraction_step(2.0, alpha, 2.0, 0.0, math.inf)
    assert t2 == pytest.approx(t1 / 2.0 ** (1.0 / alpha), rel=1e-14)


@settings(max_examples=200, deadline=None)
@given(
    L=st.one_of(st.just(0.0), st.floats(1e-6, 100.0)),
    alpha=st.floats(0.55, 0.99),
    dp=st.floats(0.05, 4.0),
    gnorm=st.one_of(st.just(0.0), st.floats(1e-6, 100.0)),
    beta=st.floats(0.01, 10.0),
    share=st.sampled_from([0.5, 1.0 / 3.0]),
)
def test_step_satisfies_both_conditions(L, alpha, dp, gnorm, beta, share):
    p = 1.0 / alpha + dp
    try:
        tau = contraction_step(L, alpha, p, gnorm, beta, share)
    except StepDegenerationError:
        # only legitimate when the analytic step is below the float range
        c = auxiliary_constant(alpha, p) * gnorm / math.gamma(alpha)
        log_tau = math.log(share * beta / c) / (alpha - 1.0 / p)
        assert log_tau < math.log(1e3 * np.finfo(float).tiny) + 1e-9
        return
    c = auxiliary_constant(alpha, p) * gnorm / math.gamma(alpha)
    if tau == math.inf:
        # neither condition binds below the largest float
        assert L == 0.0
        if gnorm > 0.0:
            assert math.log(share * beta / c) / (alpha - 1.0 / p) >= math.log(np.finfo(float).max)
        return
    first = tau**alpha * L / math.gamma(alpha + 1.0) if L > 0 else 0.0
    second = c * tau ** (alpha - 1.0 / p) if gnorm > 0 else 0.0
    assert first <= share * (1 + 1e-12)
    assert second <= share * beta * (1 + 1e-12)
    # one of the two binds
    assert max(first / share, second / (share * beta)) == pytest.approx(1.0, rel=1e-10)


def test_step_beyond_float_range():
    # tau would be about 1e3000 near alpha p = 1
    alpha = 0.5625
    assert contraction_step(0.0, alpha, 1.0 / alpha + 0.0546875, 1e-6, 1.0) == math.inf
    assert math.isfinite(contraction_step(1.0, alpha, 1.0 / alpha + 0.0546875, 1e-6, 1.0))


def test_step_domain():
    with pytest.raises(ValueError):
        contraction_step(1.0, 0.4, 2.0, 1.0, 1.0)
    with pytest.raises(ValueError):
        contraction_step(-1.0, 0.7, 2.0, 1.0, 1.0)
    with pytest.raises(StepDegenerationError):
        contraction_step(1.0e300, 0.6, 2.0, 0.0, math.inf)


# }}}


# {{{ picard


def test_ivp_validation():
    with pytest.raises(ValueError):
        affine_ivp(0.4, [[1.0]], None, [1.0], 1.0)
    with pytest.raises(ValueError):
        affine_ivp(0.6, [[1.0]], None, [1.0], 0.0)
    ivp = FracIVP(0.7, lambda t, x: x, [1.0], 1.0, growth=Growth(1.0, 1.0, 2.0, 3.0))
    with pytest.raises(ValueError):
        picard_solve(ivp, TimeGrid.uniform(1.0, 16))
    with pytest.raises(ValueError):
        picard_solve(affine_ivp(0.7, [[1.0]], None, [1.0], 2.0), TimeGrid.uniform(1.0, 16))


def test_picard_zero_rhs():
    ivp = affine_ivp(0.7, np.zeros((2, 2)), None, [1.0, -2.0], 1.0)
    u, trace = picard_solve(ivp, TimeGrid.uniform(1.0, 32))
    assert np.all(u.values == np.array([1.0, -2.0]))
    assert len(trace.segments) == 1
    assert trace.segments[0].iterations == 1


def test_picard_power_rule():
    alpha = 0.7
    c = math.gamma(alpha + 1.0)
    ivp = affine_ivp(alpha, np.zeros((2, 2)), lambda t: np.tile([c, 0.0], (t.size, 1)), [0, 0], 1.0)
    g = TimeGrid.graded(1.0, 128, 2.0)
    u, _ = picard_solve(ivp, g)
    assert np.allclose(u.values[:, 0], g.nodes**alpha, atol=1e-13)
    assert np.all(u.values[:, 1] == 0.0)


def test_picard_ml_oracle_and_order():
    alpha = 0.6
    ivp = affine_ivp(alpha, [[1.0]], None, [1.0], 1.0)
    ns = [256, 512, 1024, 2048]
    errors = []
    for n in ns:
        g = TimeGrid.graded(1.0, n, (2.0 - alpha) / alpha)
        u, trace = picard_solve(ivp, g)
        errors.append(sup_error(u, ml_decay(alpha, 1.0, g.nodes)))
        assert all(s.contraction_factor <= 0.55 for s in trace.segments)
        # segments tile [0, T]
        assert trace.segments[0].t_start == 0.0 and trace.segments[-1].t_end == 1.0
    assert errors[-1] <= 1e-3
    assert np.all(empirical_orders(ns, errors) >= 1.2)


def test_picard_iterates_contract():
    rng = np.random.default_rng(2)
    A, f, u0 = random_affine(rng, 3)
    ivp = affine_ivp(0.65, A, f, u0, 1.0)
    _, trace = picard_solve(ivp, TimeGrid.uniform(1.0, 256))
    for seg in trace.segments:
        d = np.array(seg.differences)
        big = d[:-1] > 1e-12
        assert np.all(d[1:][big] <= 0.55 * d[:-1][big])


def test_picard_no_convergence():
    ivp = affine_ivp(0.7, [[1.0]], None, [1.0], 1.0)
    with pytest.raises(NoConvergenceError):
        picard_solve(ivp, TimeGrid.uniform(1.0, 64), max_iter=3)


def test_picard_step_degeneration():
    ivp = affine_ivp(0.7, [[1.0e4]], None, [1.0], 1.0)
    with pytest.raises(StepDegenerationError):
        picard_solve(ivp, TimeGrid.uniform(1.0, 16))


def test_lipschitz_fallback():
    def rhs(t, x):
        return -np.sin(x) + np.cos(t)[:, None]

    t = np.linspace(0.0, 1.0, 9)
    L = estimate_lipschitz(FracIVP(0.7, rhs, [0.3], 1.0), t, np.array([0.3]), 1e-3)
    assert L == pytest.approx(math.cos(0.3), rel=1e-3)

    g = TimeGrid.uniform(1.0, 128)
    u1, _ = picard_solve(FracIVP(0.7, rhs, [0.3], 1.0), g)
    u2, _ = picard_solve(FracIVP(0.7, rhs, [0.3], 1.0, lipschitz=lambda c, r: 1.0), g)
    assert sup_error(u1, u2.values) <= 1e-9


def test_finite_radius_uses_second_condition():
    # G = 1 with radius 1, so beta = 1/2 and the L^p condition sets the step
    alpha = 0.9
    ivp = FracIVP(alpha, lambda t, x: np.ones_like(x), [0.0], 1.0, radius=1.0,
                  lipschitz=lambda c, r: 0.0)
    g = TimeGrid.uniform(1.0, 512)
    u, trace = picard_solve(ivp, g)
    tau = contraction_step(0.0, alpha, 2.0, 1.0, 0.5)
    assert 0.02 < tau < 0.04
    assert trace.segments[0].t_end <= tau
    assert len(trace.segments) > 1
    assert np.allclose(u.values[:, 0], g.nodes**alpha / math.gamma(alpha + 1.0), atol=1e-12)


def test_shift_continuity():
    rng = np.random.default_rng(8)
    for _ in range(5):
        A, f, u0 = random_affine(rng, 2)
        alpha = rng.uniform(0.6, 0.95)
        ivp = affine_ivp(alpha, A, f, u0, 1.0)
        u, _ = picard_solve(ivp, TimeGrid.graded(1.0, 256, 1.5))
        r = shift_continuity_check(u, ivp)
        assert r.passed, r.summary()


# }}}


# {{{ l1


def test_l1_trivial():
    g = TimeGrid.uniform(1.0, 16)
    u = l1_implicit_solve(0.7, np.zeros((2, 2)), None, [1.0, 3.0], g)
    assert np.all(u.values == np.array([1.0, 3.0]))


def test_l1_order_on_graded_grid():
    alpha = 0.75
    ns = [128, 256, 512, 1024]
    errors = []
    for n in ns:
        g = TimeGrid.graded(1.0, n, (2.0 - alpha) / alpha)
        u = l1_implicit_solve(alpha, np.eye(2), None, [1.0, 1.0], g)
        errors.append(sup_error(u, np.repeat(ml_decay(alpha, 1.0, g.nodes)[:, None], 2, axis=1)))
    orders = empirical_orders(ns, errors)
    assert np.all(np.abs(orders - (2.0 - alpha)) <= 0.15)


def test_l1_mode_ordering():
    g = TimeGrid.graded(1.0, 256, 2.0)
    u = l1_implicit_solve(0.6, np.diag([1.0, 4.0]), None, [1.0, 1.0], g)
    assert np.all(u.values[1:, 1] < u.values[1:, 0])
    assert np.all(np.diff(u.values[:, 0]) <= 0.0)


def test_l1_full_matrix_matches_diagonalized():
    rng = np.random.default_rng(1)
    Q, _ = np.linalg.qr(rng.normal(size=(3, 3)))
    lam = np.array([0.5, 1.0, 3.0])
    A = Q @ np.diag(lam) @ Q.T
    g = TimeGrid.uniform(1.0, 128)
    u0 = rng.normal(size=3)
    u = l1_implicit_solve(0.7, A, None, u0, g)
    v = l1_implicit_solve(0.7, np.diag(lam), None, Q.T @ u0, g)
    assert np.allclose(u.values, v.values @ Q.T, atol=1e-13)


def test_l1_singular():
    g = TimeGrid.uniform(1.0, 8)
    b = l1_weight_matrix(g, 0.7)[1, 0]
    with pytest.raises(SingularSystemError):
        l1_implicit_solve(0.7, [[-b]], None, [1.0], g)
    with pytest.raises(SingularSystemError):
        l1_implicit_solve(0.7, [[-b, 0.0], [0.0, 1e-3]], None, [1.0, 1.0], g)
    with pytest.raises(SingularSystemError):
        l1_implicit_solve(0.7, [[-b, 1e-300], [0.0, -b]], None, [1.0, 1.0], g)


def test_picard_l1_agreement():
    rng = np.random.default_rng(4)
    for _ in range(4):
        A, f, u0 = random_affine(rng, 3)
        alpha = rng.uniform(0.6, 0.95)
        ivp = affine_ivp(alpha, A, f, u0, 1.0)
        sol = {}
        for n in (256, 512):
            g = TimeGrid.uniform(1.0, n)
            fv = Trajectory.from_function(g, f)
            sol["p", n] = picard_solve(ivp, g)[0].values
            sol["l", n] = l1_implicit_solve(alpha, A, fv, u0).values
        budget = max(
            np.max(np.abs(sol[k, 512][::2] - sol[k, 256])) for k in ("p", "l")
        )
        assert np.max(np.abs(sol["p", 256] - sol["l", 256])) <= 10.0 * budget


def test_uniqueness_proxy_grids():
    rng = np.random.default_rng(6)
    for _ in range(20):
        A, f, u0 = random_affine(rng, 2)
        alpha = rng.uniform(0.6, 0.95)
        gu, gg = TimeGrid.uniform(1.0, 1024), TimeGrid.graded(1.0, 1024, 2.0)
        uu = l1_implicit_solve(alpha, A, Trajectory.from_function(gu, f), u0)
        ug = l1_implicit_solve(alpha, A, Trajectory.from_function(gg, f), u0)
        # compare at the final time, a node of both grids
        assert np.max(np.abs(uu.values[-1] - ug.values[-1])) <= 5e-3


def test_classical_limit():
    g = TimeGrid.uniform(1.0, 1024)
    u = l1_implicit_solve(0.999, [[1.0]], None, [1.0], g)
    assert sup_error(u, np.exp(-g.nodes)) <= 2e-2
    ivp = affine_ivp(0.999, [[1.0]], None, [1.0], 1.0)
    v, _ = picard_solve(ivp, g)
    assert sup_error(v, np.exp(-g.nodes)) <= 2e-2


# }}}


# {{{ closed form


def test_closed_form_zero_forcing():
    g = TimeGrid.graded(1.0, 64, 2.0)
    u = duhamel_closed_form(2.0, 0.5, None, 1.5, 0.7, grid=g)
    assert np.allclose(u.values[:, 0], 1.5 * ml_decay(0.7, 1.0, g.nodes), rtol=1e-14)


def test_closed_form_no_dissipation():
    g = TimeGrid.graded(1.0, 64, 2.0)
    f = Trajectory(g, np.full(65, 3.0))
    u = duhamel_closed_form(0.0, 1.0, f, 0.5, 0.7)
    assert np.allclose(u.values[:, 0], 0.5 + 3.0 * g.nodes**0.7 / math.gamma(1.7), atol=1e-14)


@pytest.mark.parametrize("mu", [0.05, 0.5, 5.0, 40.0])
def test_closed_form_linear_forcing_exact(mu):
    g = TimeGrid.uniform(1.0, 10)
    f = Trajectory.from_function(g, lambda t: t)
    u = duhamel_closed_form(mu, 1.0, f, 0.0, 0.6)
    for t in (0.3, 1.0):
        j = int(round(t * 10))
        assert u.values[j, 0] == pytest.approx(DUHAMEL_LINEAR[mu, t], rel=1e-12)


@pytest.mark.parametrize("mu", [0.05, 1.0, 40.0])
def test_closed_form_steady_state(mu):
    alpha = 0.6
    g = TimeGrid.graded(1.0, 128, 2.0)
    f = Trajectory(g, np.full(129, 2.0))
    u = duhamel_closed_form(mu, 1.0, f, 0.5, alpha)
    E = ml_decay(alpha, mu, g.nodes)
    assert sup_error(u, 0.5 * E + 2.0 / mu * (1.0 - E)) <= 1e-13 * max(1.0, 2.0 / mu)


def test_closed_form_matches_l1_limit():
    alpha, lam, nu = 0.7, 2.0, 0.8

    def f(t):
        return np.sin(3.0 * t) + 1.0

    gf = TimeGrid.graded(1.0, 2048, 2.0)
    ref = duhamel_closed_form(lam, nu, Trajectory.from_function(gf, f), 1.0, alpha).values[-1, 0]
    ns = [64, 128, 256, 512]
    errors = []
    for n in ns:
        g = TimeGrid.graded(1.0, n, (2.0 - alpha) / alpha)
        u = l1_implicit_solve(alpha, [[nu * lam]], Trajectory.from_function(g, f), [1.0])
        errors.append(abs(u.values[-1, 0] - ref))
    assert errors[-1] <= 5e-4
    assert np.all(empirical_orders(ns, errors) >= 1.0)


def test_closed_form_validation():
    g = TimeGrid.uniform(1.0, 8)
    with pytest.raises(ValueError):
        duhamel_closed_form(-1.0, 1.0, None, 1.0, 0.7, grid=g)
    with pytest.raises(ValueError):
        duhamel_closed_form(1.0, 0.0, None, 1.0, 0.7, grid=g)
    with pytest.raises(ValueError):
        duhamel_closed_form(1.0, 1.0, Trajectory(g, np.ones((9, 2))), 1.0, 0.7)


# }}}


# {{{ gronwall


def test_gronwall_constant():
    alpha, p, T = 0.75, 2.0, 2.0
    M = gronwall_constant([3.0, 4.0], alpha, p, T, 0.5)
    expected = 5.0 + (1.0 / 0.5) ** 0.5 * T**0.25 * 0.5 / math.gamma(0.75)
    assert M == pytest.approx(expected, rel=1e-14)


def test_gronwall_trivial_cases():
    g = TimeGrid.uniform(2.0, 64)
    const = Trajectory(g, np.ones(65))
    assert all(r.passed for r in gronwall_check(const, 1.0, 1.0, 0.7))
    decay = Trajectory(g, ml_decay(0.7, 1.0, g.nodes))
    assert all(r.passed for r in gronwall_check(decay, 1.0, 1.0, 0.7))


def test_gronwall_growth_standard_is_tight():
    alpha = 0.6
    g = TimeGrid.graded(2.0, 1024, (2.0 - alpha) / alpha)
    ivp = affine_ivp(alpha, [[-1.0]], None, [1.0], 2.0)
    u, _ = picard_solve(ivp, g)
    j1 = int(np.argmin(np.abs(g.nodes - 1.0)))
    assert abs(g.nodes[j1] - 1.0) < 2e-3
    assert u.values[j1, 0] == pytest.approx(E06_AT_1, rel=5e-3)

    standard, literal = gronwall_check(u, 1.0, 1.0, alpha, rtol=1e-4)
    assert standard.passed
    assert abs(standard.margin) <= 1e-4 * standard.rhs
    # E_a(t) < E_a(t^a) for 0 < t < 1: the literal reading with the modern E_a fails there
    assert not literal.passed
    assert 0.0 < literal.worst_location < 1.0


# }}}
