r"""Caputo initial value problems :math:`{}^cD^\alpha u = G(t, u)`, :math:`u(0) = u_0`.

Three solution paths are provided:

* :func:`picard_solve` iterates the integral form
  :math:`u = u_0 + J^\alpha G(\cdot, u)` on consecutive segments whose
  length is chosen so that the iteration is a contraction.
* :func:`l1_implicit_solve` marches the L1 scheme for affine right-hand sides
  :math:`G(t, x) = f(t) - A x`.
* :func:`duhamel_closed_form` integrates the scalar Mittag-Leffler
  variation-of-constants formula exactly against a piecewise linear forcing.
"""

from __future__ import annotations

import math
from collections.abc import Callable
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from fracstokes.fracops import (
    TimeGrid,
    Trajectory,
    _lower_blocks,
    _power_diff,
    apply_rows,
    check_order,
    l1_weight_matrix,
    rl_weight_matrix,
)
from fracstokes.reports import CheckReport
from fracstokes.specfun import (
    MLParams,
    _ml_contour,
    gamma,
    gronwall_envelope,
    mittag_leffler,
)


class NoConvergenceError(RuntimeError):
    pass


class StepDegenerationError(RuntimeError):
    pass


class SingularSystemError(RuntimeError):
    pass


# {{{ problem description


@dataclass(frozen=True)
class Growth:
    r"""Growth bound :math:`\|G(t, x)\| \le \gamma(t) + C \|x\|^{q/p}`."""

    gamma_norm: float
    C: float
    p: float = 2.0
    q: float | None = None

    @property
    def q_value(self) -> float:
        return self.p if self.q is None else self.q


@dataclass(frozen=True)
class FracIVP:
    """Caputo problem data.

    ``rhs(t, x)`` is evaluated on batches: ``t`` has shape ``(n,)`` and ``x``
    shape ``(n, m)``; the result must have shape ``(n, m)``.
    """

    alpha: float
    rhs: Callable[[np.ndarray, np.ndarray], np.ndarray]
    u0: np.ndarray
    T: float
    p: float = 2.0
    lipschitz: Callable[[np.ndarray, float], float] | None = None
    radius: float = math.inf
    growth: Growth | None = None

    def __post_init__(self) -> None:
        u0 = np.atleast_1d(np.asarray(self.u0, dtype=np.float64))
        object.__setattr__(self, "u0", u0)
        check_order(self.alpha)
        if not self.p > 1.0 or not self.alpha * self.p > 1.0 or self.alpha >= 1.0:
            raise ValueError(
                f"need alpha in (1/p, 1): alpha = {self.alpha}, p = {self.p}"
            )
        if self.T <= 0.0:
            raise ValueError("T must be positive")
        if self.radius <= 0.0:
            raise ValueError("the Lipschitz radius must be positive")

    @property
    def dim(self) -> int:
        return self.u0.size

    def evaluate(self, t: np.ndarray, x: np.ndarray) -> np.ndarray:
        out = np.asarray(self.rhs(t, x), dtype=np.float64)
        return out.reshape(t.size, self.dim)


def affine_ivp(alpha: float, A, f: Callable[[np.ndarray], np.ndarray] | None, u0, T: float,
               p: float = 2.0) -> FracIVP:
    """Problem with :math:`G(t, x) = f(t) - A x` and the exact Lipschitz constant."""
    A = np.atleast_2d(np.asarray(A, dtype=np.float64))
    u0 = np.atleast_1d(np.asarray(u0, dtype=np.float64))
    m = u0.size

    def rhs(t, x):
        out = -x @ A.T
        if f is not None:
            out = out + np.asarray(f(t), dtype=np.float64).reshape(t.size, m)
        return out

    L = float(np.linalg.norm(A, 2))
    return FracIVP(alpha, rhs, u0, T, p=p, lipschitz=lambda c, r: L)


@dataclass
class SegmentRecord:
    t_start: float
    t_end: float
    iterations: int
    contraction_factor: float
    differences: list[float] = field(default_factory=list)


@dataclass
class SolveTrace:
    segments: list[SegmentRecord] = field(default_factory=list)
    envelope_violations: int = 0


# }}}


# {{{ step selection


def auxiliary_constant(alpha: float, p: float) -> float:
    r""":math:`((p - 1) / (\alpha p - 1))^{1 - 1/p}`."""
    return ((p - 1.0) / (alpha * p - 1.0)) ** (1.0 - 1.0 / p)


_LOG_FLOAT_MAX = math.log(np.finfo(float).max)


def contraction_step(
    L: float, alpha: float, p: float, gamma_local_norm: float, beta: float,
    share: float = 0.5,
) -> float:
    r"""Largest :math:`\tau` with

    .. math::

        \frac{\tau^\alpha L}{\Gamma(\alpha + 1)} \le s,
        \qquad
        \frac{1}{\Gamma(\alpha)} \left(\frac{p - 1}{\alpha p - 1}\right)^{1 - 1/p}
        \tau^{\alpha - 1/p} \|G(\cdot, u_0)\|_{L^p} \le s \beta,

    where the share is :math:`s = 1/2` for the first segment and
    :math:`s = 1/3` for continuations. Returns ``inf`` when neither condition
    binds within the float range.
    """
    alpha = check_order(alpha)
    if not (p > 1.0 and alpha * p > 1.0):
        raise ValueError(f"need alpha * p > 1: alpha = {alpha}, p = {p}")
    if L < 0.0 or gamma_local_norm < 0.0 or beta <= 0.0:
        raise ValueError("need L >= 0, norm >= 0 and beta > 0")

    tau = math.inf
    if L > 0.0:
        tau = (share * gamma(alpha + 1.0) / L) ** (1.0 / alpha)
    if gamma_local_norm > 0.0 and math.isfinite(beta):
        c = auxiliary_constant(alpha, p) * gamma_local_norm / gamma(alpha)
        # log space: the exponent 1 / (alpha - 1/p) is huge near alpha p = 1
        log_tau = math.log(share * beta / c) / (alpha - 1.0 / p)
        if log_tau < _LOG_FLOAT_MAX:
            tau = min(tau, math.exp(log_tau))

    if tau == 0.0 or (math.isfinite(tau) and tau < 1.0e3 * np.finfo(float).tiny):
        raise StepDegenerationError(f"contraction step underflowed: tau = {tau}")
    return tau


def _lp_on_grid(t: np.ndarray, values: np.ndarray, p: float) -> float:
    f = np.linalg.norm(values, axis=1) ** p
    return float(np.sum(0.5 * np.diff(t) * (f[:-1] + f[1:])) ** (1.0 / p))


def estimate_lipschitz(
    ivp: FracIVP, t: np.ndarray, center: np.ndarray, radius: float, seed: int = 0
) -> float:
    """Finite-difference Lipschitz estimate from 8 random directions."""
    rng = np.random.default_rng(seed)
    rho = radius if math.isfinite(radius) else 1.0
    x0 = np.broadcast_to(center, (t.size, ivp.dim))
    g0 = ivp.evaluate(t, x0)

    L = 0.0
    for _ in range(8):
        d = rng.standard_normal(ivp.dim)
        d *= rho / np.linalg.norm(d)
        g1 = ivp.evaluate(t, x0 + d)
        L = max(L, float(np.max(np.linalg.norm(g1 - g0, axis=1))) / rho)
    return L


# }}}


# {{{ picard


def picard_solve(
    ivp: FracIVP, grid: TimeGrid, tol: float = 1.0e-10, max_iter: int = 200
) -> tuple[Trajectory, SolveTrace]:
    """Segmented Picard iteration on the integral equation.

    Every segment restarts the integral from 0 and keeps the full history.
    """
    if not math.isclose(grid.T, ivp.T, rel_tol=1e-12):
        raise ValueError(f"grid ends at {grid.T}, problem at {ivp.T}")
    if tol <= 0.0:
        raise ValueError("tol must be positive")
    if ivp.growth is not None and ivp.growth.q_value != ivp.growth.p:
        raise ValueError("only growth bounds with q = p are supported")

    alpha, p = ivp.alpha, ivp.p
    t = grid.nodes
    n = t.size
    W = rl_weight_matrix(grid, alpha)

    phi = np.empty((n, ivp.dim))
    phi[0] = ivp.u0
    G = np.empty_like(phi)
    G[0] = ivp.evaluate(t[:1], phi[:1])[0]

    # beta < r; an infinite radius makes the second step condition vacuous
    beta = 0.5 * ivp.radius
    trace = SolveTrace()
    s0 = 0
    while s0 < n - 1:
        center = phi[s0]
        if ivp.lipschitz is not None:
            L = float(ivp.lipschitz(center, beta))
        else:
            L = estimate_lipschitz(ivp, t, center, beta, seed=s0)

        frozen = ivp.evaluate(t, np.broadcast_to(center, (n, ivp.dim)))
        if s0 == 0:
            D = _lp_on_grid(t, frozen, p)
            share = 0.5
        else:
            D = max(_lp_on_grid(t, frozen, p), _lp_on_grid(t[: s0 + 1], G[: s0 + 1], p))
            share = 1.0 / 3.0
        tau = contraction_step(L, alpha, p, D, beta, share=share)

        e = int(np.searchsorted(t, t[s0] + tau * (1.0 + 1.0e-12), side="right")) - 1
        e = min(e, n - 1)
        if e <= s0:
            raise StepDegenerationError(
                f"contraction step {tau:.3e} is shorter than the panel at t = {t[s0]:.6g}"
            )

        seg = slice(s0 + 1, e + 1)
        history = apply_rows(W[seg, : s0 + 1], G[: s0 + 1])
        local = W[seg, s0 + 1 : e + 1]

        x = np.broadcast_to(center, (e - s0, ivp.dim)).copy()
        diffs: list[float] = []
        ratios: list[float] = []
        for k in range(1, max_iter + 1):
            Gs = ivp.evaluate(t[seg], x)
            x_new = ivp.u0 + history + apply_rows(local, Gs)
            diff = float(np.max(np.linalg.norm(x_new - x, axis=1)))
            floor = 1.0e3 * np.finfo(float).eps * max(1.0, float(np.max(np.abs(x_new))))
            if diffs and diffs[-1] > floor:
                ratios.append(diff / diffs[-1])
            diffs.append(diff)
            x = x_new
            if diff <= tol:
                break
        else:
            raise NoConvergenceError(
                f"Picard iteration on [{t[s0]:.6g}, {t[e]:.6g}] did not reach "
                f"tol = {tol:g} in {max_iter} iterations (last change {diffs[-1]:.3e})"
            )

        phi[seg] = x
        G[seg] = ivp.evaluate(t[seg], x)
        trace.segments.append(
            SegmentRecord(float(t[s0]), float(t[e]), k, max(ratios, default=0.0), diffs)
        )
        s0 = e

    return Trajectory(grid, phi, label="picard"), trace


# }}}


# {{{ l1


def l1_implicit_solve(alpha: float, A, f: Trajectory | None, u0, grid: TimeGrid | None = None
                      ) -> Trajectory:
    r"""Implicit L1 time marching for :math:`{}^cD^\alpha u = f(t) - A u`.

    At node :math:`t_j`

    .. math::

        (b_{j-1,j} I + A) u_j = b_{j-1,j} u_{j-1}
            - \sum_{i < j - 1} b_{i,j} (u_{i+1} - u_i) + f_j.
    """
    alpha = check_order(alpha, closed=False)
    if grid is None:
        if f is None:
            raise ValueError("need a grid or a forcing trajectory")
        grid = f.grid
    u0 = np.atleast_1d(np.asarray(u0, dtype=np.float64))
    m = u0.size
    A = np.atleast_2d(np.asarray(A, dtype=np.float64))
    if A.shape != (m, m):
        raise ValueError(f"A has shape {A.shape}, expected {(m, m)}")

    n = grid.nodes.size
    fv = np.zeros((n, m)) if f is None else f.values
    if fv.shape != (n, m):
        raise ValueError(f"forcing has shape {fv.shape}, expected {(n, m)}")

    B = l1_weight_matrix(grid, alpha)
    diagonal = np.count_nonzero(A - np.diag(np.diag(A))) == 0
    a = np.diag(A)

    u = np.empty((n, m))
    u[0] = u0
    du = np.zeros((n - 1, m))
    for j in range(1, n):
        b = B[j, j - 1]
        rhs = b * u[j - 1] + fv[j]
        if j > 1:
            rhs -= (B[j, : j - 1, None] * du[: j - 1]).sum(axis=0)

        if diagonal:
            denom = b + a
            if np.any(denom <= 0.0):
                raise SingularSystemError(f"singular L1 system at t = {grid.nodes[j]:.6g}")
            u[j] = rhs / denom
        else:
            M = A + b * np.eye(m)
            try:
                u[j] = np.linalg.solve(M, rhs)
            except np.linalg.LinAlgError as exc:
                raise SingularSystemError(str(exc)) from exc
        du[j - 1] = u[j] - u[j - 1]

    return Trajectory(grid, u, label="l1")


# }}}


# {{{ closed form


def _series_moments(b, a, alpha, mu, nterms):
    # kernel tau^(alpha - 1) E_{alpha, alpha}(-mu tau^alpha) expanded in mu
    M0 = np.zeros_like(b)
    M1 = np.zeros_like(b)
    for k in range(nterms):
        e = alpha * (k + 1)
        c = (-mu) ** k / gamma(e)
        M0 += c * _power_diff(b, a, e) / e
        M1 += c * _power_diff(b, a, e + 1.0) / (e + 1.0)
    return M0, M1


def _series_terms(z: float, alpha: float) -> int:
    # first k with z^k / Gamma(alpha k + alpha) below 1e-17 of the leading term
    k = 1
    while k < 200:
        if k * math.log(max(z, 1.0e-300)) - math.lgamma(alpha * k + alpha) < math.log(1e-17):
            return k + 1
        k += 1
    return k


def _ml_negative(alpha: float, beta: float, x: np.ndarray) -> np.ndarray:
    # E_{alpha, beta}(-x) for x >= 0 without the domain cap
    out = np.full(x.shape, 1.0 / gamma(beta))
    pos = x > 0.0
    out[pos] = _ml_contour(alpha, beta, x[pos])
    return out


@lru_cache(maxsize=16)
def _duhamel_weights_cached(nodes: bytes, alpha: float, mu: float) -> np.ndarray:
    t = np.frombuffer(nodes, dtype=np.float64)
    n = t.size
    W = np.zeros((n, n))
    T = t[-1]

    use_series = mu * T**alpha <= 0.1
    if use_series:
        nterms = _series_terms(mu * T**alpha, alpha)
        blocks = _lower_blocks(t)
    else:
        blocks = _lower_blocks(t, block=64)

    for rows, b, a, h, mask in blocks:
        if use_series:
            M0, M1 = _series_moments(b, a, alpha, mu, nterms)
        else:
            # antiderivatives -E_a(-mu tau^a) / mu and tau E_{a,2}(-mu tau^a),
            # evaluated once per node difference
            k = b.shape[1]
            tau = np.maximum(t[rows, None] - t[None, : k + 1], 0.0)
            x = mu * tau**alpha
            F = _ml_negative(alpha, 1.0, x)
            P = tau * _ml_negative(alpha, 2.0, x)
            Fb, Fa = F[:, :-1], F[:, 1:]
            Pb, Pa = P[:, :-1], P[:, 1:]
            tb, ta = tau[:, :-1], tau[:, 1:]
            M0 = (Fa - Fb) / mu
            M1 = -((tb * Fb - ta * Fa) - (Pb - Pa)) / mu

        left = np.where(mask, (M1 - a * M0) / h, 0.0)
        right = np.where(mask, (b * M0 - M1) / h, 0.0)
        k = left.shape[1]
        W[rows, :k] += left
        W[rows, 1 : k + 1] += right

    W.setflags(write=False)
    return W


def duhamel_weight_matrix(grid: TimeGrid, alpha: float, mu: float) -> np.ndarray:
    r"""Weights ``W`` with :math:`\int_0^{t_j} (t_j - s)^{\alpha - 1}
    E_{\alpha,\alpha}(-\mu (t_j - s)^\alpha) f(s) \,\mathrm{d}s = \sum_i W_{ji} f_i`
    for piecewise linear ``f``.
    """
    alpha = check_order(alpha)
    if mu < 0.0:
        raise ValueError("mu must be non-negative")
    if mu == 0.0:
        # E_{alpha, alpha}(0) = 1 / Gamma(alpha): the Riemann-Liouville kernel
        return rl_weight_matrix(grid, alpha)
    return _duhamel_weights_cached(grid.nodes.tobytes(), alpha, float(mu))


def duhamel_closed_form(
    lam: float, nu: float, f: Trajectory | None, g0: float, alpha: float,
    grid: TimeGrid | None = None,
) -> Trajectory:
    r"""Solution of :math:`{}^cD^\alpha g = -\nu\lambda g + f`, :math:`g(0) = g_0`:

    .. math::

        g(t) = g_0 E_\alpha(-\nu\lambda t^\alpha)
            + \int_0^t (t - s)^{\alpha - 1} E_{\alpha,\alpha}(-\nu\lambda (t - s)^\alpha) f(s) \,\mathrm{d}s.
    """
    if lam < 0.0 or nu <= 0.0:
        raise ValueError("need lambda >= 0 and nu > 0")
    if grid is None:
        if f is None:
            raise ValueError("need a grid or a forcing trajectory")
        grid = f.grid
    if f is not None and f.dim != 1:
        raise ValueError("closed form expects a scalar forcing")

    mu = nu * lam
    t = grid.nodes
    g = g0 * mittag_leffler(MLParams(alpha, 1.0), -mu * t**alpha)
    if f is not None and np.any(f.values != 0.0):
        W = duhamel_weight_matrix(grid, alpha, mu)
        g = g + apply_rows(W, f.values)[:, 0]
    g[0] = g0
    return Trajectory(grid, g, label="closed_form")


# }}}


# {{{ checks


def gronwall_constant(u0, alpha: float, p: float, T: float, gamma_lp_norm: float) -> float:
    r""":math:`M = \|u_0\| + \Gamma(\alpha)^{-1} ((p-1)/(\alpha p-1))^{1-1/p} T^{\alpha-1/p} \|\gamma\|_{L^p}`."""
    return float(np.linalg.norm(np.atleast_1d(u0))) + (
        auxiliary_constant(alpha, p) * T ** (alpha - 1.0 / p) * gamma_lp_norm / gamma(alpha)
    )


def gronwall_check(
    u: Trajectory, M: float, C: float, alpha: float, rtol: float = 1.0e-9
) -> list[CheckReport]:
    """Nodewise :math:`\\|u(t_j)\\| \\le M E_\\alpha(\\cdot)` for both envelopes.

    The first report uses :math:`E_\\alpha(C t^\\alpha)`, the second the
    literal argument :math:`C^{1/\\alpha} t`.
    """
    norms = u.norms()
    out = []
    for literal, name in ((False, "gronwall_standard"), (True, "gronwall_literal")):
        env = gronwall_envelope(M, C, alpha, u.t, literal=literal)
        out.append(CheckReport.nodewise(name, norms, env, u.t, rtol=rtol))
    return out


def shift_continuity_check(
    phi: Trajectory, ivp: FracIVP, rtol: float = 1.0e-6
) -> CheckReport:
    r"""Adjacent-node bound :math:`\|\phi(t_{j+1}) - \phi(t_j)\| \le
    \frac{2}{\Gamma(\alpha)} \left(\frac{p-1}{\alpha p-1}\right)^{1-1/p}
    h_j^{\alpha - 1/p} \|G(\cdot, \phi)\|_{L^p(0, t_{j+1})}`.
    """
    alpha, p = ivp.alpha, ivp.p
    t = phi.t
    G = ivp.evaluate(t, phi.values)
    g = np.linalg.norm(G, axis=1) ** p
    cum = np.concatenate([[0.0], np.cumsum(0.5 * np.diff(t) * (g[:-1] + g[1:]))]) ** (1.0 / p)

    lhs = np.linalg.norm(np.diff(phi.values, axis=0), axis=1)
    c = 2.0 * auxiliary_constant(alpha, p) / gamma(alpha)
    rhs = c * np.diff(t) ** (alpha - 1.0 / p) * cum[1:]
    return CheckReport.nodewise(
        "shift_continuity", lhs, rhs, t[1:], rtol=rtol, atol=1.0e-12
    )


# }}}
