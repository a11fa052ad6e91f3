r"""Spectral Galerkin solver for the time-fractional Stokes system.

With an H-orthonormal, V-orthogonal basis :math:`w_j` the Galerkin system
decouples into scalar problems

.. math::

    {}^cD^\alpha g_j = -\nu\lambda_j g_j + f_j(t), \qquad g_j(0) = (u_0, w_j)_H,

and :math:`u_m = \sum_j g_j w_j`. The concrete basis is the divergence-free
trigonometric family on the 2-torus :math:`[0, 2\pi]^2`, with Stokes
eigenvalues :math:`|k|^2`. An abstract path takes eigenvalues directly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from fracstokes.fracode import (
    affine_ivp,
    duhamel_closed_form,
    l1_implicit_solve,
    picard_solve,
)
from fracstokes.fracops import (
    TimeGrid,
    Trajectory,
    apply_rows,
    caputo_derivative,
    check_order,
    format_float,
    l1_weight_matrix,
    make_grid,
    riemann_liouville_integral,
)
from fracstokes.reports import CheckReport
from fracstokes.specfun import gamma

METHODS = ("l1", "closed_form", "picard")


# {{{ modes


@dataclass(frozen=True)
class Mode:
    id: int
    eigenvalue: float
    wavevector: tuple[int, int] | None = None
    kind: str | None = None

    @property
    def label(self) -> str:
        if self.wavevector is None:
            return f"mode {self.id}"
        k1, k2 = self.wavevector
        return f"k=({k1},{k2}) {self.kind}"


@dataclass(frozen=True)
class ModeSet:
    modes: tuple[Mode, ...]

    def __post_init__(self) -> None:
        lam = self.eigenvalues
        if np.any(lam <= 0.0):
            raise ValueError("eigenvalues must be positive")
        if np.any(np.diff(lam) < 0.0):
            raise ValueError("modes must be sorted by eigenvalue")
        ids = [m.id for m in self.modes]
        if len(set(ids)) != len(ids):
            raise ValueError("mode ids must be unique")

    def __len__(self) -> int:
        return len(self.modes)

    @property
    def eigenvalues(self) -> np.ndarray:
        return np.array([m.eigenvalue for m in self.modes], dtype=np.float64)

    @property
    def ids(self) -> list[int]:
        return [m.id for m in self.modes]

    def index(self, mode_id: int) -> int:
        for i, m in enumerate(self.modes):
            if m.id == mode_id:
                return i
        raise KeyError(f"no mode with id {mode_id}")


def torus_modes(K: int) -> ModeSet:
    """Divergence-free modes :math:`(k^\\perp / |k|) \\,\\mathrm{trig}(k \\cdot x) / (\\pi\\sqrt{2})`
    for :math:`0 < |k|^2 \\le K^2` in the half-plane
    :math:`k_1 > 0` or :math:`k_1 = 0, k_2 > 0`.
    """
    if K < 1:
        raise ValueError("K must be at least 1")
    ks = []
    for k1 in range(0, K + 1):
        for k2 in range(-K, K + 1):
            if (k1 > 0 or k2 > 0) and 0 < k1 * k1 + k2 * k2 <= K * K:
                ks.append((k1, k2))
    ks.sort(key=lambda k: (k[0] ** 2 + k[1] ** 2, k))

    modes = []
    for k in ks:
        for kind in ("cos", "sin"):
            modes.append(Mode(len(modes) + 1, float(k[0] ** 2 + k[1] ** 2), k, kind))
    return ModeSet(tuple(modes))


def abstract_modes(eigenvalues) -> ModeSet:
    lam = [float(x) for x in eigenvalues]
    return ModeSet(tuple(Mode(i + 1, x) for i, x in enumerate(lam)))


def mode_field(mode: Mode, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Velocity of a torus mode, shape ``(2,) + x.shape``."""
    if mode.wavevector is None:
        raise ValueError("abstract modes have no spatial field")
    k1, k2 = mode.wavevector
    phase = k1 * x + k2 * y
    trig = np.cos(phase) if mode.kind == "cos" else np.sin(phase)
    scale = 1.0 / (math.hypot(k1, k2) * math.pi * math.sqrt(2.0))
    return np.stack([-k2 * scale * trig, k1 * scale * trig])


def _torus_trig_integral(ka, ta, kb, tb) -> float:
    # int over [0, 2 pi]^2 of trig_a(ka . x) trig_b(kb . x)
    if ta != tb:
        return 0.0
    area = 4.0 * math.pi**2
    diff = ka[0] == kb[0] and ka[1] == kb[1]
    summ = ka[0] == -kb[0] and ka[1] == -kb[1]
    sign = 1.0 if ta == "cos" else -1.0
    return 0.5 * area * (float(diff) + sign * float(summ))


def gram_matrices(modes: ModeSet) -> tuple[np.ndarray, np.ndarray]:
    """H and V Gram matrices of torus modes from closed-form trig integrals."""
    n = len(modes)
    GH = np.zeros((n, n))
    GV = np.zeros((n, n))
    swap = {"cos": "sin", "sin": "cos"}
    dsign = {"cos": -1.0, "sin": 1.0}
    for i, a in enumerate(modes.modes):
        for j, b in enumerate(modes.modes):
            ka, kb = np.array(a.wavevector), np.array(b.wavevector)
            pa, pb = np.array([-ka[1], ka[0]]), np.array([-kb[1], kb[0]])
            c = (pa @ pb) / (np.linalg.norm(ka) * np.linalg.norm(kb) * 2.0 * math.pi**2)
            GH[i, j] = c * _torus_trig_integral(ka, a.kind, kb, b.kind)
            # grad trig(k . x) = -/+ k trig'(k . x)
            GV[i, j] = (
                c * (ka @ kb) * dsign[a.kind] * dsign[b.kind]
                * _torus_trig_integral(ka, swap[a.kind], kb, swap[b.kind])
            )
    return GH, GV


# }}}


# {{{ problem


@dataclass(frozen=True)
class TrigForcing:
    r"""Per-mode forcing :math:`f_j(t) = \sum a \cos(\omega t + \phi)`.

    ``terms`` maps a mode id to a tuple of ``(a, omega, phi)`` triples.
    """

    terms: dict[int, tuple[tuple[float, float, float], ...]] = field(default_factory=dict)

    def evaluate(self, t: np.ndarray, ids: list[int]) -> np.ndarray:
        t = np.asarray(t, dtype=np.float64)
        out = np.zeros((t.size, len(ids)))
        for col, mid in enumerate(ids):
            for a, w, phi in self.terms.get(mid, ()):
                out[:, col] += a * np.cos(w * t + phi)
        return out

    def is_zero(self) -> bool:
        return all(a == 0.0 for triples in self.terms.values() for a, _, _ in triples)


@dataclass(frozen=True)
class GalerkinProblem:
    alpha: float
    nu: float
    modes: ModeSet
    m: int
    u0_coeffs: np.ndarray
    forcing: TrigForcing
    grid: TimeGrid
    seed: int | None = None

    def __post_init__(self) -> None:
        check_order(self.alpha, closed=False)
        if not 0.5 < self.alpha < 1.0:
            raise ValueError(f"alpha must lie in (1/2, 1), got {self.alpha}")
        if self.nu <= 0.0:
            raise ValueError("nu must be positive")
        if not 1 <= self.m <= len(self.modes):
            raise ValueError(f"m = {self.m} outside 1..{len(self.modes)}")
        u0 = np.asarray(self.u0_coeffs, dtype=np.float64).ravel()
        if u0.size != self.m:
            raise ValueError(f"expected {self.m} initial coefficients, got {u0.size}")
        object.__setattr__(self, "u0_coeffs", u0)
        unknown = set(self.forcing.terms) - set(self.ids)
        if unknown:
            raise ValueError(f"forcing on modes outside the truncation: {sorted(unknown)}")

    @property
    def ids(self) -> list[int]:
        return self.modes.ids[: self.m]

    @property
    def eigenvalues(self) -> np.ndarray:
        return self.modes.eigenvalues[: self.m]

    def f_coeffs(self, grid: TimeGrid | None = None) -> Trajectory:
        grid = self.grid if grid is None else grid
        return Trajectory(grid, self.forcing.evaluate(grid.nodes, self.ids), label="f")

    def with_grid(self, grid: TimeGrid) -> GalerkinProblem:
        return GalerkinProblem(
            self.alpha, self.nu, self.modes, self.m, self.u0_coeffs, self.forcing, grid, self.seed
        )

    def truncated(self, m: int) -> GalerkinProblem:
        keep = set(self.modes.ids[:m])
        terms = {k: v for k, v in self.forcing.terms.items() if k in keep}
        return GalerkinProblem(
            self.alpha, self.nu, self.modes, m, self.u0_coeffs[:m], TrigForcing(terms),
            self.grid, self.seed,
        )


@dataclass(frozen=True)
class AffineSystem:
    lambdas: np.ndarray
    f: Trajectory
    u0: np.ndarray


def assemble(problem: GalerkinProblem) -> AffineSystem:
    """Data of :math:`{}^cD^\\alpha g_j = -\\nu\\lambda_j g_j + f_j(t)` for :math:`j \\le m`."""
    return AffineSystem(problem.eigenvalues.copy(), problem.f_coeffs(), problem.u0_coeffs.copy())


@dataclass(frozen=True)
class GalerkinSolution:
    problem: GalerkinProblem
    g: Trajectory
    method: str

    @property
    def t(self) -> np.ndarray:
        return self.g.t


def solve(problem: GalerkinProblem, method: str = "l1") -> GalerkinSolution:
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}, expected one of {METHODS}")
    sys = assemble(problem)
    alpha, nu = problem.alpha, problem.nu
    mu = nu * sys.lambdas

    if method == "l1":
        g = l1_implicit_solve(alpha, np.diag(mu), sys.f, sys.u0).values
    elif method == "closed_form":
        g = np.empty((problem.grid.nodes.size, problem.m))
        for j in range(problem.m):
            fj = Trajectory(problem.grid, sys.f.values[:, j])
            g[:, j] = duhamel_closed_form(
                sys.lambdas[j], nu, fj, sys.u0[j], alpha
            ).values[:, 0]
    else:
        ids = problem.ids
        ivp = affine_ivp(
            alpha, np.diag(mu), lambda t: problem.forcing.evaluate(t, ids), sys.u0,
            problem.grid.T,
        )
        g = picard_solve(ivp, problem.grid)[0].values

    g[0] = sys.u0
    return GalerkinSolution(problem, Trajectory(problem.grid, g, label=method), method)


# }}}


# {{{ diagnostics


def norms(sol: GalerkinSolution) -> tuple[Trajectory, Trajectory]:
    """Parseval sums :math:`\\|u_m\\|_H` and :math:`\\|u_m\\|_V`."""
    g = sol.g.values
    lam = sol.problem.eigenvalues
    H = np.sqrt((g * g).sum(axis=1))
    V = np.sqrt((lam[None, :] * g * g).sum(axis=1))
    return Trajectory(sol.g.grid, H, label="H_norm"), Trajectory(sol.g.grid, V, label="V_norm")


def dual_norm_sq(problem: GalerkinProblem, grid: TimeGrid | None = None) -> np.ndarray:
    """:math:`\\|f(t)\\|^2_{V'} = \\sum_j f_j(t)^2 / \\lambda_j` on the represented modes."""
    f = problem.f_coeffs(grid).values
    return (f * f / problem.eigenvalues[None, :]).sum(axis=1)


def _cumulative_trapezoid(t: np.ndarray, v: np.ndarray) -> np.ndarray:
    return np.concatenate([[0.0], np.cumsum(0.5 * np.diff(t) * (v[:-1] + v[1:]))])


def energy_report(sol: GalerkinSolution, rtol: float = 1.0e-6) -> list[CheckReport]:
    """Pointwise, integrated and terminal energy inequalities plus the chain rule.

    Caputo derivatives use the same L1 weights as the solver. Every check
    starts at :math:`t_1`; tolerances scale with the sum of absolute values
    of the terms on each side.
    """
    prob = sol.problem
    alpha, nu = prob.alpha, prob.nu
    grid = sol.g.grid
    t = grid.nodes
    g = sol.g.values
    lam = prob.eigenvalues

    H2 = (g * g).sum(axis=1)
    V2 = (lam[None, :] * g * g).sum(axis=1)
    F2 = dual_norm_sq(prob, grid)
    u0sq = float(prob.u0_coeffs @ prob.u0_coeffs)
    seed = "" if prob.seed is None else f"seed={prob.seed}"

    B = l1_weight_matrix(grid, alpha)
    dH2 = apply_rows(B, np.diff(H2)[:, None])[1:, 0]
    dg = apply_rows(B, np.diff(g, axis=0))[1:]
    pairing = 2.0 * (dg * g[1:]).sum(axis=1)

    reports = []

    lhs = dH2 + nu * V2[1:]
    rhs = F2[1:] / nu
    scale = np.abs(dH2) + nu * V2[1:] + rhs
    reports.append(CheckReport.nodewise(
        "energy_pointwise", lhs, rhs, t[1:], atol=rtol * scale, note=seed
    ))

    scale = np.abs(dH2) + np.abs(pairing)
    reports.append(CheckReport.nodewise(
        "chain_inequality", dH2, pairing, t[1:], atol=rtol * scale, note=seed
    ))

    JH2 = riemann_liouville_integral(Trajectory(grid, H2), 1.0 - alpha).values[:, 0]
    IV2 = _cumulative_trapezoid(t, V2)
    IF2 = _cumulative_trapezoid(t, F2)
    initial = t ** (1.0 - alpha) / gamma(2.0 - alpha) * u0sq
    lhs = JH2 + nu * IV2
    rhs = initial + IF2 / nu
    scale = np.abs(JH2) + nu * IV2 + rhs
    reports.append(CheckReport.nodewise(
        "energy_integrated", lhs[1:], rhs[1:], t[1:], atol=rtol * scale[1:], note=seed
    ))

    reports.append(CheckReport.scalar(
        "energy_terminal", lhs[-1], rhs[-1], atol=rtol * scale[-1], location=float(t[-1]),
        note=seed,
    ))
    return reports


def weak_residual(sol: GalerkinSolution, t_min: float = 0.0) -> float:
    """Max over modes and nodes :math:`t_j \\ge \\max(t_1, t_{min})` of
    :math:`|{}^cD^\\alpha g_j + \\nu\\lambda_j g_j - f_j|` with L1 weights.

    For solutions that are not L1-consistent the residual at the first
    nodes is dominated by the weak singularity at 0; ``t_min`` excludes them.
    """
    prob = sol.problem
    dg = caputo_derivative(sol.g, prob.alpha).values[1:]
    f = prob.f_coeffs(sol.g.grid).values[1:]
    r = dg + prob.nu * prob.eigenvalues[None, :] * sol.g.values[1:] - f
    r = r[sol.t[1:] >= t_min]
    return float(np.max(np.abs(r), initial=0.0))


@dataclass(frozen=True)
class ShiftScaling:
    slope: float
    bound: float
    passed: bool
    shifts: np.ndarray
    shift_norms: np.ndarray

    @property
    def degenerate(self) -> bool:
        return not math.isfinite(self.slope)


def shift_scaling(sol: GalerkinSolution, r: float, h_list) -> ShiftScaling:
    r"""Fit the exponent of :math:`\|\tau_h u_m - u_m\|_{L^r(0, T-h; V')}` in ``h``.

    Passes when the slope is at least :math:`\alpha + 1/r - 1 - 0.1`. All
    zero shift norms give an undefined slope and count as a pass.
    """
    alpha = sol.problem.alpha
    if not 1.0 <= r < 1.0 / (1.0 - alpha):
        raise ValueError(f"need 1 <= r < 1/(1 - alpha) = {1.0 / (1.0 - alpha):.6g}, got {r}")
    grid = sol.g.grid
    t = grid.nodes
    steps = np.diff(t)
    dt = steps[0]
    if not np.allclose(steps, dt, rtol=1e-9, atol=0.0):
        raise ValueError("shift scaling needs a uniform grid")

    h = np.asarray(list(h_list), dtype=np.float64)
    lam = sol.problem.eigenvalues
    g = sol.g.values
    out = np.empty(h.size)
    for i, hi in enumerate(h):
        k = int(round(hi / dt))
        if k < 1 or k >= t.size - 1 or not math.isclose(k * dt, hi, rel_tol=1e-9):
            raise ValueError(f"shift {hi} is not a positive multiple of the grid step")
        d = g[k:] - g[:-k]
        dual = np.sqrt((d * d / lam[None, :]).sum(axis=1))
        out[i] = (_cumulative_trapezoid(t[: t.size - k], dual**r)[-1]) ** (1.0 / r)

    bound = alpha + 1.0 / r - 1.0
    if np.all(out == 0.0):
        return ShiftScaling(math.nan, bound, True, h, out)
    if np.any(out == 0.0):
        raise ValueError("some shift norms vanish, the log-log fit is undefined")
    slope = float(np.polyfit(np.log(h), np.log(out), 1)[0])
    return ShiftScaling(slope, bound, slope >= bound - 0.1, h, out)


def two_discretization_agreement(
    problem: GalerkinProblem, N: int = 2048, budget: float = 5.0e-3, l1_grid: str = "uniform"
) -> CheckReport:
    """Compare L1 on a uniform grid with the closed form on a graded grid.

    The graded H-norm is interpolated linearly onto the L1 nodes. On a
    uniform grid the L1 error near :math:`t = 0` decays only like
    :math:`N^{-\\alpha}`; ``l1_grid="graded"`` runs L1 on a graded grid too.
    """
    T = problem.grid.T
    alpha = problem.alpha
    first = make_grid(T, N, l1_grid, alpha=alpha)
    graded = make_grid(T, N, "graded", alpha=alpha)

    Hu = norms(solve(problem.with_grid(first), "l1"))[0].values[:, 0]
    Hg = norms(solve(problem.with_grid(graded), "closed_form"))[0].values[:, 0]
    dist = np.abs(Hu - np.interp(first.nodes, graded.nodes, Hg))
    k = int(np.argmax(dist))
    seed = "" if problem.seed is None else f"seed={problem.seed}"
    return CheckReport.scalar(
        "two_discretization_agreement", float(dist[k]), budget,
        location=float(first.nodes[k]), note=seed,
    )


# }}}


# {{{ random instances and export


def random_instance(
    seed: int, *, K: int = 2, m: int | None = None, N: int = 256, T: float = 1.0,
    grid: str = "uniform",
) -> GalerkinProblem:
    """Seeded random torus problem.

    ``nu`` is log-uniform on [0.1, 10], ``alpha`` uniform on [0.55, 0.95],
    initial coefficients standard normal and each mode is forced by three
    cosines with random amplitude, frequency and phase.
    """
    rng = np.random.default_rng(seed)
    modes = torus_modes(K)
    if m is None:
        m = int(rng.integers(1, len(modes) + 1))
    nu = float(np.exp(rng.uniform(math.log(0.1), math.log(10.0))))
    alpha = float(rng.uniform(0.55, 0.95))
    u0 = rng.standard_normal(m)
    terms = {}
    for mid in modes.ids[:m]:
        a = rng.standard_normal(3)
        w = rng.uniform(0.0, 2.0 * math.pi, 3)
        phi = rng.uniform(0.0, 2.0 * math.pi, 3)
        terms[mid] = tuple((float(x), float(y), float(z)) for x, y, z in zip(a, w, phi))
    return GalerkinProblem(
        alpha, nu, modes, m, u0, TrigForcing(terms), make_grid(T, N, grid, alpha=alpha), seed
    )


def write_solution_csv(sol: GalerkinSolution, path) -> None:
    H, V = norms(sol)
    header = ["t"] + [f"g_{i}" for i in sol.problem.ids] + ["H_norm", "V_norm"]
    cols = np.column_stack([sol.t, sol.g.values, H.values, V.values])
    with open(path, "w", encoding="utf-8") as outf:
        outf.write(",".join(header) + "\n")
        for row in cols:
            outf.write(",".join(format_float(x) for x in row) + "\n")


# }}}
