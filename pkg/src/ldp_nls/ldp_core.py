"""Large-deviation analytics for the Fourier-Lebesgue norm of Gaussian random data.

With ``R`` distributed as ``2x e^{-x^2}`` the moment generating function is

    M(s) = E e^{sR} = 1 + (sqrt(pi) s / 2) e^{s^2/4} erfc(-s/2),

and the scaled cumulant-generating function of ``sqrt(eps) sum_k c_k R_k`` is

    eps * Lambda_eps(lambda/eps) = eps * sum_k log M(lambda c_k / sqrt(eps)),

which tends to ``lambda^2/4 * sum_k c_k^2`` for summable ``(c_k)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.special import erfc, erfcx

from .errors import BoundarySolutionError, ParameterError
from .spectral_core import CoeffSeq, l1_sum, l2_sum

__all__ = [
    "LOG_BRANCH_THRESHOLD",
    "rayleigh_mgf",
    "log_rayleigh_mgf",
    "dlog_rayleigh_mgf",
    "cgf_exact",
    "cgf_limit",
    "CgfCurve",
    "cgf_curve",
    "dominating_bound",
    "legendre_transform",
    "RateFunction",
    "rate",
    "ge_interval_rates",
    "sharpness_products",
]

SQRT_PI = math.sqrt(math.pi)
# in terms of m = s/2; e^{m^2} is comfortably representable below it
LOG_BRANCH_THRESHOLD = 6.0


def _log_mgf_direct(m):
    # log1p(sqrt(pi) m e^{m^2} erfc(-m)); e^{m^2} erfc(-m) = erfcx(-m)
    return np.log1p(SQRT_PI * m * erfcx(-m))


def _log_mgf_asymptotic(m):
    # exact rewrite for m > 0 using erfc(-m) = 2 - erfcx(m) e^{-m^2}:
    # log M = m^2 + log(2 sqrt(pi) m) + log1p((1 - sqrt(pi) m erfcx(m)) e^{-m^2} / (2 sqrt(pi) m))
    corr = (1.0 - SQRT_PI * m * erfcx(m)) * np.exp(-m * m) / (2.0 * SQRT_PI * m)
    return m * m + np.log(2.0 * SQRT_PI * m) + np.log1p(corr)


def log_rayleigh_mgf(s):
    """``log E e^{sR}`` without overflow for any real ``s``."""
    s = np.asarray(s, dtype=float)
    m = 0.5 * s
    big = m > LOG_BRANCH_THRESHOLD
    out = np.empty_like(m)
    out[~big] = _log_mgf_direct(m[~big])
    out[big] = _log_mgf_asymptotic(m[big])
    return out if out.ndim else float(out)


def rayleigh_mgf(s):
    """``E e^{sR}`` for ``R`` with density ``2x e^{-x^2}``."""
    s = np.asarray(s, dtype=float)
    m = 0.5 * s
    with np.errstate(over="ignore"):
        out = 1.0 + SQRT_PI * m * np.where(m > LOG_BRANCH_THRESHOLD, np.exp(m * m) * erfc(-m), erfcx(-m))
    return out if out.ndim else float(out)


def dlog_rayleigh_mgf(s):
    """``d/ds log M(s) = E_s[R]``, the mean of the tilted amplitude law."""
    s = np.asarray(s, dtype=float)
    m = 0.5 * s
    with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
        e = erfcx(-m)  # e^{m^2} erfc(-m), overflows to inf only for m >~ 26
        inv = 1.0 / (SQRT_PI * e)
        pos = 0.5 * ((1.0 / np.where(m > 0, m, 1.0) + 2.0 * m) + 2.0 * inv) / (1.0 + inv / np.where(m > 0, m, 1.0))
        gen = 0.5 * (SQRT_PI * (1.0 + 2.0 * m * m) * e + 2.0 * m) / (1.0 + SQRT_PI * m * e)
    out = np.where(m > 1.0, pos, gen)
    return out if out.ndim else float(out)


def cgf_exact(c: CoeffSeq, eps: float, lam: float) -> float:
    """``Lambda_eps(lambda/eps) = sum_k log M(lambda c_k / sqrt(eps))`` (unscaled)."""
    if not eps > 0:
        raise ParameterError(f"eps must be positive, got {eps}")
    s = lam * c.values / math.sqrt(eps)
    return float(np.sum(log_rayleigh_mgf(s)))


def cgf_limit(c: CoeffSeq, lam: float) -> float:
    return lam * lam * l2_sum(c) / 4.0


def dominating_bound(c: CoeffSeq, lam: float = 1.0) -> float:
    """Summed dominating sequence ``e^{1/4} sqrt(pi lam) c_k + 2 sqrt(pi) lam c_k^2``."""
    return math.exp(0.25) * math.sqrt(math.pi * lam) * l1_sum(c) + 2.0 * SQRT_PI * lam * l2_sum(c)


@dataclass(frozen=True)
class CgfCurve:
    lam: float
    eps_grid: np.ndarray
    values: np.ndarray
    limit: float
    bound: float
    n_modes: int

    @property
    def abs_error(self) -> np.ndarray:
        return np.abs(self.values - self.limit)

    def rows(self):
        return [(e, v, self.limit, abs(v - self.limit)) for e, v in zip(self.eps_grid, self.values)]


def cgf_curve(c: CoeffSeq, lam: float, eps_grid: Sequence[float]) -> CgfCurve:
    """Tabulate ``eps * Lambda_eps(lambda/eps)`` and check the uniform bound."""
    grid = np.asarray(eps_grid, dtype=float)
    if np.any(grid <= 0) or np.any(np.diff(grid) >= 0):
        raise ParameterError("eps_grid must be positive and strictly decreasing")
    values = np.array([e * cgf_exact(c, e, lam) for e in grid])
    bound = dominating_bound(c, lam)
    if np.any(values > bound):
        raise AssertionError(f"scaled CGF exceeds the dominating bound {bound}")
    return CgfCurve(float(lam), grid, values, cgf_limit(c, lam), bound, c.n_modes)


_INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


def _golden_max(f, lo, hi, tol):
    a, b = lo, hi
    x1 = b - _INV_PHI * (b - a)
    x2 = a + _INV_PHI * (b - a)
    f1, f2 = f(x1), f(x2)
    while b - a > tol * (1.0 + abs(a) + abs(b)):
        if f1 < f2:
            a, x1, f1 = x1, x2, f2
            x2 = a + _INV_PHI * (b - a)
            f2 = f(x2)
        else:
            b, x2, f2 = x2, x1, f1
            x1 = b - _INV_PHI * (b - a)
            f1 = f(x1)
    return 0.5 * (a + b)


def legendre_transform(
    cgf: Callable[[float], float],
    z: float,
    lambda_max: float,
    dcgf: Callable[[float], float] | None = None,
    widen: float = 4.0,
) -> tuple[float, float]:
    """``sup_{0 <= lam <= lambda_max} (lam z - cgf(lam))`` and its maximiser.

    Golden-section search; when ``dcgf`` is given the maximiser is polished by
    bisection on ``z - dcgf(lam)``.  A maximiser stuck at ``lambda_max`` triggers one
    widening of the interval, then :class:`BoundarySolutionError`.
    """
    if z < 0:
        raise ParameterError("z must be nonnegative")
    obj = lambda lam: lam * z - cgf(lam)
    hi = float(lambda_max) if lambda_max > 0 else 1.0
    for attempt in range(2):
        lam = _golden_max(obj, 0.0, hi, 1e-12)
        if dcgf is not None:
            lam = _polish(z, dcgf, lam, hi)
        if hi - lam > 1e-6 * hi:
            break
        if attempt == 0:
            hi *= widen
    else:
        raise BoundarySolutionError(f"maximiser at the boundary lambda_max={hi}")
    # the lower end is a genuine constraint; snap when the edge is at least as good
    if lam <= 1e-7 * hi and obj(0.0) >= obj(lam):
        lam = 0.0
    return float(obj(lam)), float(lam)


def _polish(z, dcgf, lam, hi):
    g = lambda x: z - dcgf(x)
    lo_x, hi_x = max(0.0, lam - 1e-3 * hi), min(hi, lam + 1e-3 * hi)
    if g(lo_x) < 0 or g(hi_x) > 0:
        return lam
    for _ in range(200):
        mid = 0.5 * (lo_x + hi_x)
        if g(mid) > 0:
            lo_x = mid
        else:
            hi_x = mid
        if hi_x - lo_x <= 4 * np.finfo(float).eps * max(1.0, mid):
            break
    return 0.5 * (lo_x + hi_x)


@dataclass(frozen=True)
class RateFunction:
    """``z -> z^2 / A`` with ``A = sum_k c_k^2``."""

    l2_sum: float

    def __post_init__(self):
        if not self.l2_sum > 0:
            raise ParameterError("rate function needs a positive l2 sum")

    def __call__(self, z):
        return np.asarray(z, dtype=float) ** 2 / self.l2_sum

    def limit_cgf(self, lam: float) -> float:
        return lam * lam * self.l2_sum / 4.0

    def legendre(self, z: float, lambda_max: float | None = None) -> tuple[float, float]:
        a = self.l2_sum
        if lambda_max is None:
            lambda_max = 8.0 * z / a
        return legendre_transform(self.limit_cgf, z, lambda_max, dcgf=lambda lam: lam * a / 2.0)


def rate(c: CoeffSeq, z0: float) -> float:
    """Positive rate ``z0^2 / sum_k c_k^2``."""
    a = l2_sum(c)
    if a == 0:
        raise ParameterError("rate undefined for an all-zero coefficient sequence")
    if z0 < 0:
        raise ParameterError("z0 must be nonnegative")
    return z0 * z0 / a


def ge_interval_rates(c: CoeffSeq, z0: float, n_check: int = 32) -> tuple[float, float]:
    """Infima of the Legendre transform over ``(z0, inf)`` and ``[z0, inf)``.

    The transform is evaluated numerically; monotonicity on a geometric grid
    above ``z0`` and continuity at ``z0`` are asserted, which makes both infima
    equal to its value at ``z0``.
    """
    if not z0 > 0:
        raise ParameterError("z0 must be positive")
    rf = RateFunction(l2_sum(c))
    closed = rf.legendre(z0)[0]
    zs = z0 * (1.0 + np.geomspace(1e-12, 10.0, n_check))
    vals = np.array([rf.legendre(z)[0] for z in zs])
    if np.any(np.diff(vals) < -1e-12 * vals[1:]) or vals[0] < closed * (1 - 1e-10):
        raise AssertionError("Legendre transform is not nondecreasing above z0")
    open_inf = vals[0]
    if abs(open_inf - closed) > 1e-9 * max(closed, 1e-300):
        raise AssertionError("Legendre transform is discontinuous at z0")
    return float(closed), float(closed)


def sharpness_products(c: CoeffSeq, levels: Sequence[int]) -> list[tuple[int, float, float]]:
    """Partial products ``prod_{|k|<=N} E e^{-c_k R_k}`` for each truncation level.

    ``c`` supplies the family; formula kinds are re-evaluated at the largest level.
    Returns ``(N, product, log_product)`` rows.
    """
    levels = [int(n) for n in levels]
    if any(n < 0 for n in levels):
        raise ParameterError("levels must be nonnegative")
    if not levels:
        return []
    top = max(levels)
    full = c.truncate(top)
    logs = log_rayleigh_mgf(-full.values)
    out = []
    for n in levels:
        lp = float(np.sum(logs[top - n : top + n + 1]))
        out.append((n, math.exp(lp), lp))
    return out
