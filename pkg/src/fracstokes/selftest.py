"""Condensed invariant suite behind ``fracstokes selftest``."""

from __future__ import annotations

import math

import numpy as np

from fracstokes.fracode import affine_ivp, gronwall_check, picard_solve
from fracstokes.fracops import (
    TimeGrid,
    Trajectory,
    make_grid,
    power_rule_integral,
    riemann_liouville_integral,
    sup_error,
)
from fracstokes.reports import CheckReport
from fracstokes.specfun import MLParams, gamma, mittag_leffler
from fracstokes.stokes_galerkin import (
    GalerkinProblem,
    TrigForcing,
    abstract_modes,
    energy_report,
    random_instance,
    shift_scaling,
    solve,
    two_discretization_agreement,
)
from fracstokes.weighted_spaces import (
    WeightedSpaceSpec,
    check_embedding,
    lp_norm,
    strictness_witnesses,
    weight_isometry,
    weighted_norm,
)


def _special_functions() -> list[CheckReport]:
    z = np.linspace(-5.0, 5.0, 101)
    rel = np.max(np.abs(mittag_leffler(MLParams(1.0, 1.0), z) / np.exp(z) - 1.0))
    cosh = abs(mittag_leffler(MLParams(2.0, 1.0), 1.0) / math.cosh(1.0) - 1.0)
    zero = max(abs(mittag_leffler(MLParams(a, b), 0.0) * gamma(b) - 1.0)
               for a in (0.3, 0.7, 1.5) for b in (0.5, 1.0, 2.5))
    return [
        CheckReport.scalar("ml_exp", rel, 1e-12),
        CheckReport.scalar("ml_cosh", cosh, 1e-12),
        CheckReport.scalar("ml_at_zero", zero, 2.0 * np.finfo(float).eps),
    ]


def _operators(N: int) -> list[CheckReport]:
    g = TimeGrid.graded(1.0, N, 3.0)
    v = Trajectory.from_function(g, np.cos)
    a = riemann_liouville_integral(riemann_liouville_integral(v, 0.4), 0.3)
    b = riemann_liouville_integral(v, 0.7)
    semigroup = sup_error(a, b.values)

    rng = np.random.default_rng(1)
    worst = 0.0
    for _ in range(20):
        alpha, s, c = rng.uniform(0.05, 0.95), rng.normal(), rng.normal()
        gu = TimeGrid.uniform(rng.uniform(0.5, 2.0), 32)
        Jv = riemann_liouville_integral(Trajectory(gu, c + s * gu.nodes), alpha).values[1:, 0]
        t = gu.nodes[1:]
        ref = power_rule_integral(c, 0.0, alpha, t) + power_rule_integral(s, 1.0, alpha, t)
        worst = max(worst, float(np.max(np.abs(Jv - ref) / np.abs(ref))))
    return [
        CheckReport.scalar("semigroup_graded", semigroup, 1e-4, note=f"N={N}"),
        CheckReport.scalar("power_rule_affine", worst, 1e-12),
    ]


def _ode(N: int) -> list[CheckReport]:
    alpha = 0.6
    g = make_grid(1.0, N, "graded", alpha=alpha)
    u, trace = picard_solve(affine_ivp(alpha, [[1.0]], None, [1.0], 1.0), g)
    err = sup_error(u, mittag_leffler(MLParams(alpha, 1.0), -g.nodes**alpha))
    factor = max(s.contraction_factor for s in trace.segments)

    grow, _ = picard_solve(affine_ivp(alpha, [[-1.0]], None, [1.0], 1.0), g)
    standard = gronwall_check(grow, 1.0, 1.0, alpha, rtol=1e-3)[0]
    return [
        CheckReport.scalar("ode_ml_oracle", err, 1e-3, note=f"N={N}"),
        CheckReport.scalar("picard_contraction", factor, 0.55),
        standard,
    ]


def _spaces(samples: int) -> list[CheckReport]:
    rng = np.random.default_rng(2)
    out = []
    for kind in ("alpha_to_beta", "p_to_q", "Lq_into_Lpalpha"):
        bad = 0
        for _ in range(samples):
            T = rng.uniform(0.5, 3.0)
            g = TimeGrid.graded(T, 200, rng.uniform(1.0, 2.0))
            v = Trajectory(g, np.sin(rng.uniform(0, 6, 2)[None, :] * g.nodes[:, None]
                                     + rng.uniform(0, 6, 2)[None, :]))
            alpha, p = rng.uniform(0.05, 0.95), rng.uniform(1.0, 4.0)
            if kind == "alpha_to_beta":
                r = check_embedding(v, kind, alpha=alpha, beta=rng.uniform(alpha, 1.0), p=p)
            elif kind == "p_to_q":
                r = check_embedding(v, kind, alpha=alpha, p=p, q=p + rng.uniform(0.0, 4.0))
            else:
                r = check_embedding(v, kind, alpha=alpha, p=p, q=p / alpha + rng.uniform(0.1, 4))
            bad += not r.passed
        out.append(CheckReport.scalar(f"embedding_{kind}", bad, 0.0))

    bad = 0
    for _ in range(samples):
        alpha = rng.uniform(0.05, 0.95)
        beta = min(1.0, alpha + rng.uniform(0.01, 1.0))
        p = rng.uniform(1.0, 4.0)
        q = p + rng.uniform(0.05, 10.0)
        bad += sum(not w.check()[0] for w in strictness_witnesses(alpha, beta, p, q, 1.5))
    out.append(CheckReport.scalar("strictness_witnesses", bad, 0.0))

    g = TimeGrid.graded_toward_end(1.0, 4096, 4.0)
    worst = 0.0
    for _ in range(3):
        spec = WeightedSpaceSpec(rng.uniform(0.4, 1.0), rng.uniform(1.0, 4.0))
        v = Trajectory(g, np.cos(rng.uniform(0, 6) * g.nodes) + 2.0)
        a, b = lp_norm(weight_isometry(v, spec), spec.p), weighted_norm(v, spec)
        worst = max(worst, abs(a / b - 1.0))
    out.append(CheckReport.scalar("isometry", worst, 1e-4))
    return out


def _galerkin(instances: int) -> list[CheckReport]:
    out = []
    failed = 0
    for seed in range(instances):
        failed += sum(not r.passed for r in energy_report(solve(random_instance(seed))))
    out.append(CheckReport.scalar("energy_sweep", failed, 0.0, note=f"{instances} instances"))

    g = TimeGrid.uniform(1.0, 1024)
    p = GalerkinProblem(0.75, 1.0, abstract_modes([1.0]), 1, [1.0], TrigForcing(), g)
    res = shift_scaling(solve(p, "closed_form"), 2.0, [1 / 2**k for k in range(8, 3, -1)])
    out.append(CheckReport.scalar("shift_scaling", res.bound - 0.1, res.slope))

    out.append(two_discretization_agreement(random_instance(2), N=1024, l1_grid="graded"))
    return out


def run_all(quick: bool = True) -> list[CheckReport]:
    N = 1024 if quick else 2048
    samples = 20 if quick else 100
    instances = 10 if quick else 100
    return (
        _special_functions() + _operators(N) + _ode(N // 2 if quick else N)
        + _spaces(samples) + _galerkin(instances)
    )
