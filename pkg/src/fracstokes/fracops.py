"""Discrete Riemann-Liouville integrals and Caputo derivatives.

All operators act on :class:`Trajectory` objects, i.e. vector-valued samples
on a :class:`TimeGrid`. The fractional integral uses product integration:
the data is replaced by its piecewise linear interpolant and the kernel
moments are integrated exactly. The Caputo derivative uses the L1 scheme,
which is the exact derivative of the same piecewise linear interpolant.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from fracstokes.specfun import gamma, rgamma


class FractionalOrderError(ValueError):
    pass


# {{{ grids and trajectories


@dataclass(frozen=True)
class TimeGrid:
    """Nodes :math:`0 = t_0 < t_1 < \\dots < t_N`."""

    nodes: np.ndarray
    kind: str = "custom"
    r: float = 1.0

    def __post_init__(self) -> None:
        t = np.asarray(self.nodes, dtype=np.float64)
        if t.ndim != 1 or t.size < 3:
            raise ValueError("a grid needs at least N = 2 panels")
        if t[0] != 0.0:
            raise ValueError("grids must start at t = 0")
        if not np.all(np.diff(t) > 0.0):
            raise ValueError("grid nodes must be strictly increasing")
        t.setflags(write=False)
        object.__setattr__(self, "nodes", t)

    @classmethod
    def uniform(cls, T: float, N: int) -> TimeGrid:
        return cls(T * np.arange(N + 1) / N, kind="uniform")

    @classmethod
    def graded(cls, T: float, N: int, r: float) -> TimeGrid:
        """Nodes :math:`t_j = T (j / N)^r` clustered at :math:`t = 0`."""
        if r < 1.0:
            raise ValueError(f"grading exponent must be >= 1: {r}")
        if r == 1.0:
            return cls.uniform(T, N)
        return cls(T * (np.arange(N + 1) / N) ** r, kind="graded", r=r)

    @classmethod
    def graded_toward_end(cls, T: float, N: int, r: float) -> TimeGrid:
        """Nodes :math:`T (1 - (1 - j/N)^r)` for :math:`j < N`, clustered at ``T``.

        The right endpoint itself is *not* a node.
        """
        if r < 1.0:
            raise ValueError(f"grading exponent must be >= 1: {r}")
        j = np.arange(N)
        return cls(T * (1.0 - (1.0 - j / N) ** r), kind="graded_end", r=r)

    @property
    def N(self) -> int:
        return self.nodes.size - 1

    @property
    def T(self) -> float:
        return float(self.nodes[-1])

    @property
    def steps(self) -> np.ndarray:
        return np.diff(self.nodes)

    def spec(self) -> str:
        """Config-style description (``uniform`` or ``graded:<r>``)."""
        if self.kind == "uniform":
            return "uniform"
        if self.kind == "graded":
            return f"graded:{self.r!r}"
        return self.kind


def make_grid(T: float, N: int, spec: str = "uniform", alpha: float | None = None) -> TimeGrid:
    """Build a grid from a config string ``uniform``, ``graded`` or ``graded:<r>``.

    A bare ``graded`` uses the exponent :math:`(2 - \\alpha) / \\alpha`.
    """
    spec = spec.strip()
    if spec == "uniform":
        return TimeGrid.uniform(T, N)
    if spec == "graded":
        if alpha is None:
            raise ValueError("'graded' without an exponent needs alpha")
        return TimeGrid.graded(T, N, (2.0 - alpha) / alpha)
    if spec.startswith("graded:"):
        return TimeGrid.graded(T, N, float(spec.split(":", 1)[1]))
    raise ValueError(f"unknown grid specification: '{spec}'")


@dataclass(frozen=True)
class Trajectory:
    """Samples of a function :math:`[0, T] \\to \\mathbb{R}^m` on a grid.

    ``values`` always has shape ``(N + 1, m)``. Entries may be ``nan`` only
    at node 0 of a Caputo derivative (the undefined sentinel).
    """

    grid: TimeGrid
    values: np.ndarray
    label: str = ""
    allow_sentinel: bool = field(default=False, repr=False)

    def __post_init__(self) -> None:
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim == 1:
            v = v[:, None]
        if v.ndim != 2 or v.shape[0] != self.grid.nodes.size:
            raise ValueError(
                f"expected {self.grid.nodes.size} samples, got shape {v.shape}"
            )
        body = v[1:] if self.allow_sentinel else v
        if not np.all(np.isfinite(body)):
            raise ValueError("trajectory values must be finite")
        object.__setattr__(self, "values", v)

    @classmethod
    def from_function(cls, grid: TimeGrid, f, label: str = "") -> Trajectory:
        v = np.asarray(f(grid.nodes), dtype=np.float64)
        if v.ndim == 0:
            v = np.full(grid.nodes.shape, float(v))
        return cls(grid, v, label=label)

    @property
    def t(self) -> np.ndarray:
        return self.grid.nodes

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    def norms(self) -> np.ndarray:
        """Euclidean norm at every node."""
        return np.linalg.norm(self.values, axis=1)

    def component(self, i: int) -> np.ndarray:
        return self.values[:, i]


# }}}


# {{{ weights


def check_order(alpha: float, *, closed: bool = True) -> float:
    alpha = float(alpha)
    upper_ok = alpha <= 1.0 if closed else alpha < 1.0
    if not (alpha > 0.0 and upper_ok):
        interval = "(0, 1]" if closed else "(0, 1)"
        raise FractionalOrderError(f"order must be in {interval}: {alpha}")
    return alpha


def _power_diff(b: np.ndarray, a: np.ndarray, p: float) -> np.ndarray:
    """Accurate :math:`b^p - a^p` for :math:`0 \\le a < b`."""
    with np.errstate(divide="ignore", invalid="ignore"):
        # b^p - a^p = -b^p expm1(p log(a / b)), log(a / b) = log1p(-(b - a) / b)
        ratio = np.where(b > 0.0, (b - a) / b, 1.0)
        d = -(b**p) * np.expm1(p * np.log1p(-ratio))
    return np.where(a == 0.0, b**p, d)


def _panel_moments(
    b: np.ndarray, a: np.ndarray, h: np.ndarray, alpha: float
) -> tuple[np.ndarray, np.ndarray]:
    """Weights of the left and right panel values for the kernel
    :math:`(t_j - s)^{\\alpha - 1}`, with :math:`a = t_j - t_{i+1}` and
    :math:`b = t_j - t_i`.
    """
    with np.errstate(divide="ignore", invalid="ignore"):
        logb = np.log(b)
        logr = np.log1p(-(b - a) / b)
        bp = np.exp(alpha * logb)
        d0 = np.where(a == 0.0, bp, -bp * np.expm1(alpha * logr)) / alpha
        bp = bp * b
        d1 = np.where(a == 0.0, bp, -bp * np.expm1((alpha + 1.0) * logr)) / (alpha + 1.0)

    # int_a^b tau^(alpha - 1) (tau - a) dtau, int_a^b tau^(alpha - 1) (b - tau) dtau
    left = (d1 - a * d0) / h
    right = (b * d0 - d1) / h
    return left, right


def _lower_blocks(t: np.ndarray, block: int = 256):
    """Yield ``(rows, b, a, h, mask)`` with :math:`b = t_j - t_i`,
    :math:`a = t_j - t_{i+1}` for panels ``i < j`` of rows ``j`` in a block.

    Entries outside the mask hold harmless dummy values.
    """
    n = t.size
    h = np.diff(t)
    for j0 in range(1, n, block):
        j1 = min(j0 + block, n)
        rows = np.arange(j0, j1)
        i = np.arange(j1 - 1)
        mask = i[None, :] < rows[:, None]
        b = np.where(mask, t[rows, None] - t[None, i], 2.0)
        a = np.where(mask, t[rows, None] - t[None, i + 1], 1.0)
        yield rows, b, a, np.broadcast_to(h[i], b.shape), mask


@lru_cache(maxsize=32)
def _rl_weights_cached(nodes: bytes, alpha: float) -> np.ndarray:
    t = np.frombuffer(nodes, dtype=np.float64)
    n = t.size
    W = np.zeros((n, n))
    for rows, b, a, h, mask in _lower_blocks(t):
        left, right = _panel_moments(b, a, h, alpha)
        left = np.where(mask, left, 0.0)
        right = np.where(mask, right, 0.0)
        k = left.shape[1]
        W[rows, :k] += left
        W[rows, 1 : k + 1] += right
    W /= gamma(alpha)
    W.setflags(write=False)
    return W


@lru_cache(maxsize=32)
def _l1_weights_cached(nodes: bytes, alpha: float) -> np.ndarray:
    t = np.frombuffer(nodes, dtype=np.float64)
    n = t.size
    g = gamma(2.0 - alpha)
    B = np.zeros((n, n - 1))
    for rows, b, a, h, mask in _lower_blocks(t):
        k = b.shape[1]
        B[rows, :k] = np.where(mask, _power_diff(b, a, 1.0 - alpha) / (g * h), 0.0)
    B.setflags(write=False)
    return B


def rl_weight_matrix(grid: TimeGrid, alpha: float) -> np.ndarray:
    """Lower triangular matrix ``W`` with :math:`(J^\\alpha v)(t_j) = \\sum_i W_{ji} v_i`.

    The result is cached per grid and order and is read-only.
    """
    alpha = check_order(alpha)
    return _rl_weights_cached(grid.nodes.tobytes(), alpha)


def rl_weight_row(t: np.ndarray, alpha: float) -> np.ndarray:
    """Product-integration weights for :math:`J^\\alpha` at the last node of ``t``."""
    alpha = check_order(alpha)
    h = np.diff(t)
    b = t[-1] - t[:-1]
    a = t[-1] - t[1:]
    left, right = _panel_moments(b, a, h, alpha)

    row = np.zeros(t.size)
    row[:-1] += left
    row[1:] += right
    return row / gamma(alpha)


def l1_weight_matrix(grid: TimeGrid, alpha: float) -> np.ndarray:
    """Matrix ``B`` of L1 coefficients :math:`b_{i,j}` stored as ``B[j, i]``.

    .. math::

        b_{i,j} = \\frac{(t_j - t_i)^{1 - \\alpha} - (t_j - t_{i+1})^{1 - \\alpha}}
            {\\Gamma(2 - \\alpha) (t_{i+1} - t_i)}
    """
    alpha = check_order(alpha, closed=False)
    return _l1_weights_cached(grid.nodes.tobytes(), alpha)


# }}}


# {{{ operators


def riemann_liouville_integral(v: Trajectory, alpha: float) -> Trajectory:
    """Riemann-Liouville integral :math:`J^\\alpha v` at every node."""
    alpha = check_order(alpha)
    W = rl_weight_matrix(v.grid, alpha)
    return Trajectory(v.grid, apply_rows(W, v.values), label=f"J^{alpha:g}[{v.label}]")


def apply_rows(W: np.ndarray, values: np.ndarray, rows: slice | None = None) -> np.ndarray:
    """Compute ``W @ values`` for the selected rows with a fixed reduction order.

    Every row is reduced by numpy's pairwise summation along a contiguous
    axis, so the result does not depend on BLAS threading.
    """
    rows = slice(0, W.shape[0]) if rows is None else rows
    Wr = W[rows]
    out = np.empty((Wr.shape[0], values.shape[1]))
    chunk = 256
    for c in range(values.shape[1]):
        col = values[: W.shape[1], c]
        for i in range(0, Wr.shape[0], chunk):
            out[i : i + chunk, c] = (Wr[i : i + chunk] * col[None, :]).sum(axis=1)
    return out


def caputo_derivative(v: Trajectory, alpha: float) -> Trajectory:
    """L1 approximation of the Caputo derivative; node 0 is ``nan``."""
    alpha = check_order(alpha, closed=False)
    B = l1_weight_matrix(v.grid, alpha)
    return Trajectory(
        v.grid,
        l1_apply(B, v.values),
        label=f"cD^{alpha:g}[{v.label}]",
        allow_sentinel=True,
    )


def l1_apply(B: np.ndarray, values: np.ndarray) -> np.ndarray:
    out = apply_rows(B, np.diff(values, axis=0))
    out[0] = np.nan
    return out


def reconstruct_from_caputo(g: Trajectory, v0, alpha: float) -> Trajectory:
    """:math:`v = v_0 + J^\\alpha g`; a ``nan`` sentinel at node 0 of ``g`` is ignored.

    The sentinel node carries zero weight except on the first panel, where
    it is replaced by the value at :math:`t_1` (constant extrapolation).
    """
    alpha = check_order(alpha)
    values = np.array(g.values, dtype=np.float64)
    if not np.all(np.isfinite(values[0])):
        values[0] = values[1]

    v0 = np.broadcast_to(np.asarray(v0, dtype=np.float64), (values.shape[1],))
    W = rl_weight_matrix(g.grid, alpha)
    out = v0[None, :] + apply_rows(W, values)
    out[0] = v0
    return Trajectory(g.grid, out, label=f"reconstruct[{g.label}]")


def power_rule_reference(c: float, beta: float, alpha: float, t):
    """Exact Riemann-Liouville derivative of :math:`c t^\\beta`.

    .. math::

        D^\\alpha [c t^\\beta] = c \\frac{\\Gamma(\\beta + 1)}{\\Gamma(1 - \\alpha + \\beta)}
            t^{\\beta - \\alpha}

    The coefficient vanishes when :math:`1 - \\alpha + \\beta` is a
    non-positive integer.
    """
    if beta <= -1.0:
        raise ValueError(f"beta must be > -1: {beta}")
    alpha = check_order(alpha, closed=False)
    ta = np.asarray(t, dtype=np.float64)
    if np.any(ta <= 0.0):
        raise ValueError("power rule reference needs t > 0")
    if c == 0.0:
        return 0.0 * ta

    coeff = c * gamma(beta + 1.0) * rgamma(1.0 - alpha + beta)
    return coeff * ta ** (beta - alpha)


def power_rule_integral(c: float, beta: float, alpha: float, t):
    """Exact :math:`J^\\alpha [c t^\\beta]` (used as an oracle)."""
    if beta <= -1.0:
        raise ValueError(f"beta must be > -1: {beta}")
    ta = np.asarray(t, dtype=np.float64)
    return c * gamma(beta + 1.0) / gamma(alpha + beta + 1.0) * ta ** (alpha + beta)


# }}}


# {{{ csv


def format_float(x: float) -> str:
    return "nan" if not np.isfinite(x) else f"{x:.17g}"


def write_csv(traj: Trajectory, path, extra: dict[str, np.ndarray] | None = None) -> None:
    """Write ``t,v0,...,v{m-1}`` (plus optional extra columns) at 17 digits."""
    columns = {"t": traj.t}
    for i in range(traj.dim):
        columns[f"v{i}"] = traj.values[:, i]
    columns.update(extra or {})

    lines = [",".join(columns)]
    for row in zip(*columns.values()):
        lines.append(",".join(format_float(float(x)) for x in row))
    with open(path, "w", encoding="utf-8") as outf:
        outf.write("\n".join(lines) + "\n")


def read_csv(path, label: str = "") -> Trajectory:
    """Read a trajectory written by :func:`write_csv` (extra columns are ignored)."""
    with open(path, encoding="utf-8") as inf:
        header = inf.readline().strip().split(",")
        data = np.loadtxt(inf, delimiter=",", ndmin=2)

    if not header or header[0] != "t":
        raise ValueError(f"'{path}' is not a trajectory file")
    cols = [i for i, name in enumerate(header) if name.startswith("v") and name[1:].isdigit()]
    t = data[:, 0]
    grid = TimeGrid(t)
    values = data[:, cols]
    return Trajectory(grid, values, label=label, allow_sentinel=bool(np.isnan(values[0]).any()))


# }}}


def empirical_orders(ns, errors) -> np.ndarray:
    """Observed orders :math:`\\log(e_k / e_{k+1}) / \\log(N_{k+1} / N_k)`."""
    ns = np.asarray(ns, dtype=np.float64)
    errors = np.asarray(errors, dtype=np.float64)
    return np.log(errors[:-1] / errors[1:]) / np.log(ns[1:] / ns[:-1])


def sup_error(a: Trajectory, b) -> float:
    """Largest nodewise Euclidean distance (skipping non-finite nodes)."""
    bv = b.values if isinstance(b, Trajectory) else np.asarray(b, dtype=np.float64)
    if bv.ndim == 1:
        bv = bv[:, None]
    d = np.linalg.norm(a.values - bv, axis=1)
    return float(np.max(d[np.isfinite(d)]))


__all__ = [
    "FractionalOrderError",
    "TimeGrid",
    "Trajectory",
    "make_grid",
    "rl_weight_matrix",
    "l1_weight_matrix",
    "riemann_liouville_integral",
    "caputo_derivative",
    "reconstruct_from_caputo",
    "power_rule_reference",
    "power_rule_integral",
    "empirical_orders",
    "write_csv",
    "read_csv",
    "sup_error",
]
