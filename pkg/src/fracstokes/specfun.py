"""Gamma and Mittag-Leffler functions.

The Mittag-Leffler function

.. math::

    E_{\\alpha, \\beta}(z) = \\sum_{k = 0}^\\infty \\frac{z^k}{\\Gamma(\\alpha k + \\beta)}

is evaluated on the real line only. Non-negative arguments use the Taylor
series with compensated summation. Negative arguments with
:math:`\\alpha \\le 1` invert the Laplace transform
:math:`s^{\\alpha - \\beta} / (s^\\alpha + x)` on a parabolic contour, which
avoids the catastrophic cancellation of the alternating series.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

#: Largest supported :math:`|z|` for :func:`mittag_leffler`.
Z_MAX = 50.0

# Lanczos approximation, g = 7, n = 9 (Godfrey's coefficient set).
_LANCZOS_G = 7.0
_LANCZOS_COEFFS = (
    0.99999999999980993,
    676.5203681218851,
    -1259.1392167224028,
    771.32342877765313,
    -176.61502916214059,
    12.507343278686905,
    -0.13857109526572012,
    9.9843695780195716e-6,
    1.5056327351493116e-7,
)
_SQRT_2PI = math.sqrt(2.0 * math.pi)

# parabolic contour s(u) = n (0.1309 - 0.1194 u^2 + 0.25 i u), u in [-pi, pi]
_CONTOUR_NODES = 32


class MittagLefflerDomainError(ValueError):
    pass


@dataclass(frozen=True)
class MLParams:
    """Parameters :math:`(\\alpha, \\beta)` of :math:`E_{\\alpha, \\beta}`."""

    alpha: float
    beta: float = 1.0

    def __post_init__(self) -> None:
        if not 0.0 < self.alpha <= 2.0:
            raise MittagLefflerDomainError(f"alpha must be in (0, 2]: {self.alpha}")
        if not self.beta > 0.0:
            raise MittagLefflerDomainError(f"beta must be positive: {self.beta}")


# {{{ gamma


def _lanczos_sum(x: np.ndarray) -> np.ndarray:
    # x is the shifted argument (Gamma(x + 1) form)
    a = np.full_like(x, _LANCZOS_COEFFS[0])
    for i, c in enumerate(_LANCZOS_COEFFS[1:], start=1):
        a = a + c / (x + i)
    return a


def _gamma_positive(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)

    small = x < 0.5
    if np.any(small):
        # reflection: Gamma(x) Gamma(1 - x) = pi / sin(pi x)
        xs = x[small]
        out[small] = np.pi / (np.sin(np.pi * xs) * _gamma_positive(1.0 - xs))

    big = ~small
    if np.any(big):
        # shift large arguments down to [1, 11) and recur upwards; the
        # Lanczos sum loses digits for large x
        xb = x[big]
        nshift = np.where(xb > 11.0, np.floor(xb - 10.0), 0.0)
        y = xb - nshift
        xm = y - 1.0
        t = xm + _LANCZOS_G + 0.5
        val = _SQRT_2PI * t ** (xm + 0.5) * np.exp(-t) * _lanczos_sum(xm)
        with np.errstate(over="ignore"):
            for k in range(int(nshift.max(initial=0.0))):
                val = np.where(k < nshift, val * (y + k), val)
        out[big] = val

    return out


def gamma(x):
    """Gamma function for positive arguments.

    Accepts scalars or arrays. Relative accuracy is about :math:`10^{-15}`
    for :math:`x \\le 171`; larger arguments overflow to ``inf``.
    """
    xa = np.asarray(x, dtype=np.float64)
    if np.any(~(xa > 0.0)):
        raise ValueError("gamma is only defined here for x > 0")

    x1 = np.atleast_1d(xa).astype(np.float64)
    result = _gamma_positive(x1.copy())
    # exact factorials at small integers
    integer = (x1 == np.floor(x1)) & (x1 <= 23.0)
    if np.any(integer):
        result[integer] = [float(math.factorial(int(n) - 1)) for n in x1[integer]]
    return float(result[0]) if xa.ndim == 0 else result.reshape(xa.shape)


def lgamma(x):
    """Logarithm of :func:`gamma` for positive arguments (no overflow)."""
    xa = np.asarray(x, dtype=np.float64)
    if np.any(~(xa > 0.0)):
        raise ValueError("lgamma is only defined here for x > 0")

    x1 = np.atleast_1d(xa).astype(np.float64)
    out = np.empty_like(x1)
    direct = x1 < 100.0
    out[direct] = np.log(np.abs(_gamma_positive(x1[direct].copy())))

    xm = x1[~direct] - 1.0
    t = xm + _LANCZOS_G + 0.5
    out[~direct] = (
        0.5 * math.log(2.0 * math.pi)
        + (xm + 0.5) * np.log(t)
        - t
        + np.log(_lanczos_sum(xm))
    )

    return float(out[0]) if xa.ndim == 0 else out.reshape(xa.shape)


def rgamma(x: float) -> float:
    """Reciprocal Gamma function on the whole real line (zero at poles)."""
    if x > 0:
        return 1.0 / gamma(x)
    if x == math.floor(x):
        return 0.0
    # reflection for negative non-integers
    return math.sin(math.pi * x) * gamma(1.0 - x) / math.pi


# }}}


# {{{ Mittag-Leffler


def _ml_series(alpha: float, beta: float, z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Kahan-summed Taylor series.

    Returns the sum and the sum of absolute values of the terms (used as a
    cancellation estimate).
    """
    s = np.zeros_like(z)
    c = np.zeros_like(z)
    sabs = np.zeros_like(z)

    logz = np.log(np.abs(np.where(z == 0.0, 1.0, z)))
    sign = np.sign(z)

    logzmax = float(np.max(logz, initial=0.0))

    zk = np.ones_like(z)
    k = 0
    while True:
        arg = alpha * k + beta
        if k > 0:
            zk = zk * z
        if arg < 170.0 and k * logzmax < 700.0:
            term = zk / gamma(arg)
        else:
            with np.errstate(over="ignore"):
                term = (sign**k) * np.exp(k * logz - lgamma(arg))
        if k > 0:
            term = np.where(z == 0.0, 0.0, term)

        if not np.all(np.isfinite(term)):
            raise OverflowError("Mittag-Leffler series overflowed")

        # compensated summation
        with np.errstate(over="ignore", invalid="ignore"):
            y = term - c
            t = s + y
            c = (t - s) - y
        s = t
        with np.errstate(over="ignore", invalid="ignore"):
            sabs = sabs + np.abs(term)
        if not np.all(np.isfinite(sabs)):
            raise OverflowError("Mittag-Leffler series overflowed")

        # stop once the terms are decreasing and negligible
        if k > 2 and alpha * k + beta > 1.0:
            # past the peak of |z|^k / Gamma(alpha k + beta)
            past_peak = np.all(
                np.abs(z) ** (1.0 / alpha) < max(alpha * k + beta, 1.0) * 0.5
            )
            if past_peak and np.all(np.abs(term) <= 1.0e-17 * np.abs(s)):
                break
        if k > 20000:
            raise OverflowError("Mittag-Leffler series did not converge")
        k += 1

    if not np.all(np.isfinite(s)):
        raise OverflowError("Mittag-Leffler value is not representable")

    return s, sabs


def _contour_weights(alpha: float, beta: float) -> tuple[np.ndarray, np.ndarray]:
    n = _CONTOUR_NODES
    u = -np.pi + (np.arange(1, n + 1) - 0.5) * 2.0 * np.pi / n
    s = n * (0.1309 - 0.1194 * u**2 + 0.25j * u)
    ds = n * (-2.0 * 0.1194 * u + 0.25j)

    w = np.exp(s) * s ** (alpha - beta) * ds / (1j * n)

    # nodes come in conjugate pairs and the result is real: keep u > 0 only
    upper = u > 0.0
    return 2.0 * w[upper], s[upper] ** alpha


def _ml_contour(alpha: float, beta: float, x: np.ndarray) -> np.ndarray:
    # E_{alpha, beta}(-x) for x > 0 and alpha <= 1
    w, sa = _contour_weights(alpha, beta)
    out = np.zeros(x.shape, dtype=np.float64)
    # Re(w / (sa + x)) in real arithmetic, one node at a time
    for wk, sk in zip(w, sa):
        d = sk.real + x
        out += (wk.real * d + wk.imag * sk.imag) / (d * d + sk.imag**2)
    return out


def _ml_asymptotic(alpha: float, beta: float, z: float, nterms: int = 20) -> float:
    """Asymptotic expansion for large negative ``z`` and ``0 < alpha < 1``.

    Kept as an independent cross-check for the contour evaluation; it is
    only accurate once :math:`|z|^{1/\\alpha}` is large.
    """
    if z >= 0.0 or not 0.0 < alpha < 1.0:
        raise MittagLefflerDomainError("asymptotic form requires z < 0, alpha < 1")

    result = 0.0
    best = math.inf
    for k in range(1, nterms + 1):
        term = -(z ** (-k)) * rgamma(beta - alpha * k)
        # optimal truncation of the divergent series
        if term != 0.0 and abs(term) > best:
            break
        if term != 0.0:
            best = abs(term)
        result += term
    return result


def mittag_leffler(p: MLParams, z):
    """Evaluate :math:`E_{\\alpha, \\beta}(z)` for real scalar or array ``z``.

    :raises MittagLefflerDomainError: if any :math:`|z| > Z_{max}`.
    :raises OverflowError: if the value is not representable.
    """
    za = np.asarray(z, dtype=np.float64)
    if np.any(~np.isfinite(za)) or np.any(np.abs(za) > Z_MAX):
        raise MittagLefflerDomainError(f"|z| must be at most {Z_MAX}")

    alpha, beta = p.alpha, p.beta
    zf = np.atleast_1d(za).astype(np.float64)

    if alpha == 1.0 and beta == 1.0:
        out = np.exp(zf)
    elif alpha == 2.0 and beta == 1.0:
        out = np.where(
            zf >= 0.0, np.cosh(np.sqrt(np.abs(zf))), np.cos(np.sqrt(np.abs(zf)))
        )
    else:
        out = np.empty_like(zf)
        zero = zf == 0.0
        out[zero] = 1.0 / gamma(beta)

        use_series = (zf > 0.0) | ((zf < 0.0) & (zf >= -0.5))
        use_contour = (zf < -0.5) & (alpha <= 1.0)
        fallback = (zf < -0.5) & (alpha > 1.0)

        if np.any(use_series):
            out[use_series], _ = _ml_series(alpha, beta, zf[use_series])
        if np.any(use_contour):
            out[use_contour] = _ml_contour(alpha, beta, -zf[use_contour])
        if np.any(fallback):
            s, sabs = _ml_series(alpha, beta, zf[fallback])
            if np.any(sabs * 1.0e-16 > 1.0e-10 * np.abs(s)):
                warnings.warn(
                    "alternating Mittag-Leffler series lost accuracy "
                    f"(alpha = {alpha} > 1, negative argument)",
                    RuntimeWarning,
                    stacklevel=2,
                )
            out[fallback] = s

    return float(out[0]) if za.ndim == 0 else out.reshape(za.shape)


def gronwall_envelope(M: float, C: float, alpha: float, t, *, literal: bool = False):
    """Fractional Gronwall bound for :math:`\\|u(t)\\| \\le M + C J^\\alpha \\|u\\|`.

    The default is the standard envelope :math:`M E_\\alpha(C t^\\alpha)`.
    With ``literal=True`` the argument is :math:`C^{1/\\alpha} t` instead.
    """
    if M < 0 or C < 0:
        raise ValueError("M and C must be non-negative")
    ta = np.asarray(t, dtype=np.float64)
    if np.any(ta < 0):
        raise ValueError("t must be non-negative")

    z = C ** (1.0 / alpha) * ta if literal else C * ta**alpha
    return M * mittag_leffler(MLParams(alpha, 1.0), z)


# }}}
