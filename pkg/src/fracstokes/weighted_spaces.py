r"""Terminal-weighted Bochner norms.

For :math:`\alpha \in (0, 1]` and :math:`p \ge 1` the norm is

.. math::

    \|v\|_{L^p_\alpha} = \left(\int_0^T \frac{(T - s)^{\alpha - 1}}{\Gamma(\alpha)}
        \|v(s)\|^p \,\mathrm{d}s\right)^{1/p},

i.e. :math:`(J^\alpha \|v\|^p)(T)^{1/p}`. The value :math:`\alpha = 0` denotes the
sup-norm and :math:`\alpha = 1` the plain :math:`L^p` norm.

Sampled trajectories are handled by product integration. Functions with
endpoint singularities (which quadrature cannot certify) go through a small
analytic catalog instead.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from fracstokes.fracops import TimeGrid, Trajectory, _panel_moments, rl_weight_matrix
from fracstokes.reports import CheckReport
from fracstokes.specfun import gamma


class _Divergent:
    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "DIVERGENT"

    def __float__(self) -> float:
        return math.inf


#: Returned by :func:`catalog_norm` for functions outside the space.
DIVERGENT = _Divergent()


@dataclass(frozen=True)
class WeightedSpaceSpec:
    alpha: float
    p: float
    T: float = 1.0

    def __post_init__(self) -> None:
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must be in [0, 1]: {self.alpha}")
        if not (1.0 <= self.p < math.inf):
            raise ValueError(f"p must be in [1, inf): {self.p}")
        if not self.T > 0.0:
            raise ValueError(f"T must be positive: {self.T}")

    def __str__(self) -> str:
        if self.alpha == 0.0:
            return "L^inf"
        if self.alpha == 1.0:
            return f"L^{self.p:g}"
        return f"L^{self.p:g}_{self.alpha:g}"


# {{{ numeric norms


def terminal_weights(nodes: np.ndarray, T: float, alpha: float) -> np.ndarray:
    r"""Weights :math:`w_i` with :math:`\sum_i w_i f_i = \int_0^T
    \frac{(T - s)^{\alpha - 1}}{\Gamma(\alpha)} f(s) \,\mathrm{d}s` for the
    piecewise linear interpolant of ``f``.

    If the last node is smaller than ``T`` the remaining piece uses the last
    value (constant extrapolation).
    """
    t = np.asarray(nodes, dtype=np.float64)
    if t[-1] > T:
        raise ValueError("grid extends past the horizon")

    b = T - t[:-1]
    a = T - t[1:]
    left, right = _panel_moments(b, a, np.diff(t), alpha)

    w = np.zeros(t.size)
    w[:-1] += left
    w[1:] += right
    if t[-1] < T:
        w[-1] += (T - t[-1]) ** alpha / alpha
    return w / gamma(alpha)


def _norm_pow(v: Trajectory, p: float) -> np.ndarray:
    return v.norms() ** p


def weighted_norm(v: Trajectory, spec: WeightedSpaceSpec) -> float:
    """Product-integration value of :math:`\\|v\\|_{L^p_\\alpha}`."""
    if spec.alpha == 0.0:
        return float(np.max(v.norms()))
    w = terminal_weights(v.t, spec.T, spec.alpha)
    # fixed-order pairwise sum
    return float(np.sum(w * _norm_pow(v, spec.p)) ** (1.0 / spec.p))


def lp_norm(v: Trajectory, p: float) -> float:
    """Plain :math:`L^p(0, t_N)` norm by the trapezoidal rule on :math:`\\|v\\|^p`."""
    f = _norm_pow(v, p)
    h = v.grid.steps
    return float(np.sum(0.5 * h * (f[:-1] + f[1:])) ** (1.0 / p))


def weight_isometry(v: Trajectory, spec: WeightedSpaceSpec) -> Trajectory:
    r"""Pointwise multiplication by :math:`((T - t)^{\alpha - 1} / \Gamma(\alpha))^{1/p}`.

    :raises ValueError: if :math:`\alpha < 1` and the grid reaches ``T``.
    """
    if spec.alpha == 0.0:
        raise ValueError("the isometry needs alpha in (0, 1]")
    if v.t[-1] > spec.T:
        raise ValueError("grid extends past the horizon")
    if spec.alpha < 1.0 and v.t[-1] == spec.T:
        raise ValueError(
            "the weight is singular at t = T: use a grid graded toward T "
            "that excludes the endpoint"
        )

    weight = ((spec.T - v.t) ** (spec.alpha - 1.0) / gamma(spec.alpha)) ** (1.0 / spec.p)
    return Trajectory(v.grid, weight[:, None] * v.values, label=f"G_p[{v.label}]")


def suspected_divergent(
    f, spec: WeightedSpaceSpec, n0: int = 256, refinements: int = 3
) -> tuple[bool, list[float]]:
    """Diagnostic only: recompute the norm of ``f`` on refined uniform grids
    (sampling just inside the endpoints) and flag growth of 10% or more per
    refinement.
    """
    values = []
    for k in range(refinements + 1):
        n = n0 * 2**k
        grid = TimeGrid.uniform(spec.T, n)
        h = spec.T / n
        ts = np.clip(grid.nodes, 0.25 * h, spec.T - 0.25 * h)
        with np.errstate(divide="ignore", invalid="ignore"):
            fv = np.asarray(f(ts), dtype=np.float64)
        if not np.all(np.isfinite(fv)):
            return True, values
        values.append(weighted_norm(Trajectory(grid, fv), spec))

    growth = np.array(values[1:]) / np.array(values[:-1])
    return bool(np.all(growth >= 1.1)), values


# }}}


# {{{ catalog


@dataclass(frozen=True)
class CatalogFunction:
    """One of the analytic test functions.

    * ``left_power``: :math:`t^{-\\gamma}`
    * ``right_power``: :math:`(T - t)^{-\\gamma}` on :math:`(a, T)`, zero before
    * ``log_weighted``: :math:`(1 - t)^{-\\alpha/p} \\log(e / (1 - t))^{-1/p}` (``T = 1``)
    * ``shifted_power``: :math:`|t - t_0|^{-\\delta}` on :math:`(t_0 - \\epsilon, t_0 + \\epsilon)`
    """

    family: str
    params: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        p = self.params
        if self.family in ("left_power", "right_power"):
            if p["gamma"] < 0.0:
                raise ValueError("power exponent must be non-negative")
            if p.get("start", 0.0) < 0.0:
                raise ValueError("support start must be non-negative")
        elif self.family == "log_weighted":
            if not (0.0 < p["alpha"] <= 1.0 and p["p"] >= 1.0):
                raise ValueError("log_weighted needs alpha in (0, 1] and p >= 1")
        elif self.family == "shifted_power":
            if p["delta"] < 0.0 or p["eps"] <= 0.0 or p["eps"] >= p["t0"]:
                raise ValueError("shifted_power needs delta >= 0 and 0 < eps < t0")
        else:
            raise ValueError(f"unknown catalog family: '{self.family}'")

    def __str__(self) -> str:
        args = ", ".join(f"{k}={v:g}" for k, v in self.params.items())
        return f"{self.family}({args})"

    def __call__(self, t: np.ndarray, T: float = 1.0) -> np.ndarray:
        t = np.asarray(t, dtype=np.float64)
        p = self.params
        with np.errstate(divide="ignore"):
            if self.family == "left_power":
                return t ** (-p["gamma"])
            if self.family == "right_power":
                return np.where(t > p.get("start", 0.0), (T - t) ** (-p["gamma"]), 0.0)
            if self.family == "log_weighted":
                x = 1.0 - t
                return x ** (-p["alpha"] / p["p"]) * np.log(np.e / x) ** (-1.0 / p["p"])
            d = np.abs(t - p["t0"])
            return np.where(d < p["eps"], d ** (-p["delta"]), 0.0)


def left_power(gamma_: float) -> CatalogFunction:
    return CatalogFunction("left_power", {"gamma": gamma_})


def right_power(gamma_: float, start: float = 0.0) -> CatalogFunction:
    return CatalogFunction("right_power", {"gamma": gamma_, "start": start})


def log_weighted(alpha: float, p: float) -> CatalogFunction:
    return CatalogFunction("log_weighted", {"alpha": alpha, "p": p})


def shifted_power(delta: float, t0: float, eps: float) -> CatalogFunction:
    return CatalogFunction("shifted_power", {"delta": delta, "t0": t0, "eps": eps})


# exponents this close to a critical value are treated as critical: the
# counterexamples sit exactly on the boundary and products like
# (alpha / p) * (p / alpha) are not exactly 1 in floating point
_CRITICAL_RTOL = 64.0 * np.finfo(float).eps


def _reaches(x: float, threshold: float) -> bool:
    return x >= threshold - _CRITICAL_RTOL * max(abs(x), abs(threshold), 1.0)


def _catalog_norm_pow(f: CatalogFunction, alpha: float, p: float, T: float):
    """:math:`\\|f\\|^p` in :math:`L^p_\\alpha`, or ``None`` if divergent."""
    par = f.params

    if alpha == 0.0:
        # sup-norm: all families are unbounded unless the exponent vanishes
        if f.family == "log_weighted":
            return None
        if f.family == "shifted_power":
            return 1.0 if par["delta"] == 0.0 else None
        if par["gamma"] > 0.0:
            return None
        return 1.0 if f.family == "left_power" or par["start"] < T else 0.0

    ga = gamma(alpha)
    if f.family == "left_power":
        e = par["gamma"] * p
        if _reaches(e, 1.0):
            return None
        # Beta integral: T^(alpha - e) B(alpha, 1 - e) / Gamma(alpha)
        return T ** (alpha - e) * gamma(1.0 - e) / gamma(alpha + 1.0 - e)

    if f.family == "right_power":
        e = par["gamma"] * p
        if _reaches(e, alpha):
            return None
        L = T - par["start"]
        if L <= 0.0:
            return 0.0
        return L ** (alpha - e) / ((alpha - e) * ga)

    if f.family == "log_weighted":
        if T != 1.0:
            raise ValueError("log_weighted is defined for T = 1 only")
        # u = log(e / (1 - s)) gives int_1^inf exp(c (1 - u)) u^(-k) du
        c = alpha - par["alpha"] * p / par["p"]
        k = p / par["p"]
        if abs(c) <= _CRITICAL_RTOL:
            return None if _reaches(1.0, k) else 1.0 / ((k - 1.0) * ga)
        if c < 0.0:
            return None
        import mpmath

        return float(mpmath.exp(c) * mpmath.expint(k, c)) / ga

    # shifted_power
    t0, eps = par["t0"], par["eps"]
    if eps >= T - t0:
        raise ValueError("shifted_power needs eps < T - t0")
    k = par["delta"] * p
    if _reaches(k, 1.0):
        return None
    from scipy.special import hyp2f1

    # int_0^eps u^(-k) (c -+ u)^(alpha - 1) du for both sides of t0
    c = T - t0
    z = eps / c
    base = c ** (alpha - 1.0) * eps ** (1.0 - k) / (1.0 - k)
    total = base * (hyp2f1(1.0 - alpha, 1.0 - k, 2.0 - k, z) + hyp2f1(1.0 - alpha, 1.0 - k, 2.0 - k, -z))
    return float(total) / ga


def catalog_norm(f: CatalogFunction, spec: WeightedSpaceSpec):
    """Exact norm of a catalog function, or :data:`DIVERGENT`."""
    value = _catalog_norm_pow(f, spec.alpha, spec.p, spec.T)
    if value is None:
        return DIVERGENT
    if spec.alpha == 0.0:
        return value
    return value ** (1.0 / spec.p)


@dataclass(frozen=True)
class Witness:
    """A function in ``member`` but not in ``nonmember``."""

    name: str
    function: CatalogFunction
    member: WeightedSpaceSpec
    nonmember: WeightedSpaceSpec

    def check(self) -> tuple[bool, object, object]:
        inside = catalog_norm(self.function, self.member)
        outside = catalog_norm(self.function, self.nonmember)
        ok = inside is not DIVERGENT and outside is DIVERGENT
        return ok, inside, outside


def strictness_witnesses(
    alpha: float, beta: float, p: float, q: float, T: float = 1.0
) -> list[Witness]:
    """Counterexamples behind the strict inclusions and non-inclusions.

    Requires :math:`0 < \\alpha < \\beta \\le 1`, :math:`\\alpha < 1` and
    :math:`1 \\le p < q`. Witnesses whose hypotheses on ``q`` fail (e.g.
    :math:`q > p / \\alpha` versus :math:`q < p / \\alpha`) are skipped.
    The log-weighted witness always uses ``T = 1``.
    """
    if not (0.0 < alpha < beta <= 1.0 and alpha < 1.0 and 1.0 <= p < q):
        raise ValueError("need 0 < alpha < beta <= 1 and 1 <= p < q")

    S = WeightedSpaceSpec
    out = [
        Witness(
            "Linf_strict_in_Lp_beta",
            # t^(-beta/p) fails to be p-integrable for beta = 1
            left_power(beta / p if beta < 1.0 else 0.5 / p),
            S(beta, p, T),
            S(0.0, p, T),
        ),
        Witness(
            "Lp_alpha_strict_in_Lp_beta",
            right_power(0.5 * (alpha + beta) / p),
            S(beta, p, T),
            S(alpha, p, T),
        ),
        Witness(
            "Lq_alpha_strict_in_Lp_alpha",
            right_power(alpha / (0.5 * (p + q))),
            S(alpha, p, T),
            S(alpha, q, T),
        ),
        Witness(
            "Lp_alpha_not_in_Lp/alpha",
            left_power(alpha / p),
            S(alpha, p, T),
            S(1.0, p / alpha, T),
        ),
        Witness(
            "Lp/alpha_not_in_Lp_alpha",
            log_weighted(alpha, p),
            S(1.0, p / alpha, 1.0),
            S(alpha, p, 1.0),
        ),
    ]

    if q > p / alpha:
        out.append(
            Witness(
                "Lq_strict_in_Lp_alpha",
                right_power(0.5 * (1.0 / q + alpha / p)),
                S(alpha, p, T),
                S(1.0, q, T),
            )
        )
    elif q < p / alpha:
        out.append(
            Witness(
                "Lq_not_in_Lp_alpha",
                right_power(alpha / p, start=0.5 * T),
                S(1.0, q, T),
                S(alpha, p, T),
            )
        )
        out.append(
            Witness(
                "Lp_alpha_not_in_Lq",
                shifted_power(1.0 / q, 0.5 * T, 0.25 * T),
                S(alpha, p, T),
                S(1.0, q, T),
            )
        )

    return out


# }}}


# {{{ embeddings

EMBEDDING_KINDS = ("alpha_to_beta", "p_to_q", "Lq_into_Lpalpha")


def embedding_constant(kind: str, *, alpha: float, p: float, T: float,
                       beta: float | None = None, q: float | None = None) -> float:
    """Constant of the embedding inequality ``kind``.

    * ``alpha_to_beta``: :math:`\\|v\\|_{L^p_\\beta} \\le C \\|v\\|_{L^p_\\alpha}`, :math:`0 \\le \\alpha < \\beta \\le 1`
    * ``p_to_q``: :math:`\\|v\\|_{L^p_\\alpha} \\le C \\|v\\|_{L^q_\\alpha}`, :math:`1 \\le p \\le q`
    * ``Lq_into_Lpalpha``: :math:`\\|v\\|_{L^p_\\alpha} \\le C \\|v\\|_{L^q}`, :math:`q > p / \\alpha`
    """
    if not (p >= 1.0 and T > 0.0):
        raise ValueError("need p >= 1 and T > 0")

    if kind == "alpha_to_beta":
        if beta is None or not (0.0 <= alpha < beta <= 1.0):
            raise ValueError("alpha_to_beta needs 0 <= alpha < beta <= 1")
        if alpha == 0.0:
            return (T**beta / gamma(beta + 1.0)) ** (1.0 / p)
        return (T ** (beta - alpha) * gamma(alpha) / gamma(beta)) ** (1.0 / p)

    if kind == "p_to_q":
        if q is None or not (0.0 < alpha <= 1.0 and p <= q):
            raise ValueError("p_to_q needs alpha in (0, 1] and p <= q")
        return (T**alpha / gamma(alpha + 1.0)) ** ((q - p) / (p * q))

    if kind == "Lq_into_Lpalpha":
        if q is None or not (0.0 < alpha < 1.0 and q > p / alpha):
            raise ValueError("Lq_into_Lpalpha needs alpha in (0, 1) and q > p / alpha")
        e = (q - p) / (p * q)
        return (
            ((q - p) / (alpha * q - p)) ** e
            * T ** ((alpha * q - p) / (p * q))
            / gamma(alpha) ** (1.0 / p)
        )

    raise ValueError(f"unknown embedding kind: '{kind}'")


def check_embedding(
    v: Trajectory, kind: str, *, alpha: float, p: float, T: float | None = None,
    beta: float | None = None, q: float | None = None, rtol: float = 1.0e-9,
) -> CheckReport:
    """Check one embedding inequality on a sampled trajectory."""
    T = v.t[-1] if T is None else T
    C = embedding_constant(kind, alpha=alpha, p=p, T=T, beta=beta, q=q)

    if kind == "alpha_to_beta":
        lhs = weighted_norm(v, WeightedSpaceSpec(beta, p, T))
        rhs = C * weighted_norm(v, WeightedSpaceSpec(alpha, p, T))
        name = f"alpha_to_beta[alpha={alpha:g};beta={beta:g};p={p:g}]"
    elif kind == "p_to_q":
        lhs = weighted_norm(v, WeightedSpaceSpec(alpha, p, T))
        rhs = C * weighted_norm(v, WeightedSpaceSpec(alpha, q, T))
        name = f"p_to_q[alpha={alpha:g};p={p:g};q={q:g}]"
    else:
        lhs = weighted_norm(v, WeightedSpaceSpec(alpha, p, T))
        rhs = C * weighted_norm(v, WeightedSpaceSpec(1.0, q, T))
        name = f"Lq_into_Lpalpha[alpha={alpha:g};p={p:g};q={q:g}]"

    return CheckReport.scalar(name, lhs, rhs, rtol=rtol)


def holder_lemma_check(v: Trajectory, alpha: float, p: float, rtol: float = 1.0e-9) -> CheckReport:
    r"""Nodewise :math:`\|J^{1-\alpha} v(t)\| \le b(t) [J^{1-\alpha} \|v(t)\|^p]^{1/p}`
    with :math:`b(t) = (t^{1-\alpha} / \Gamma(2 - \alpha))^{(p-1)/p}`.
    """
    if not (0.0 <= alpha < 1.0 and p >= 1.0):
        raise ValueError("need alpha in [0, 1) and p >= 1")
    from fracstokes.fracops import apply_rows

    W = rl_weight_matrix(v.grid, 1.0 - alpha)
    t = v.t[1:]
    lhs = np.linalg.norm(apply_rows(W, v.values), axis=1)[1:]
    inner = apply_rows(W, _norm_pow(v, p)[:, None])[1:, 0]
    bound = (t ** (1.0 - alpha) / gamma(2.0 - alpha)) ** ((p - 1.0) / p)
    rhs = bound * np.maximum(inner, 0.0) ** (1.0 / p)

    return CheckReport.nodewise(
        f"holder_lemma[alpha={alpha:g};p={p:g}]", lhs, rhs, t, rtol=rtol, atol=1.0e-300
    )


# }}}
