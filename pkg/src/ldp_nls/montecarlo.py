"""Monte Carlo tail probabilities for norms of linear, resonant and full NLS solutions.

Samples are generated in fixed-size blocks.  Block ``b`` of a run draws from the
Philox substream ``(master_seed, *stream, b)``, so every estimate depends only on
the master seed and the block size, never on how blocks are scheduled.  Block
partial sums are reduced with ``math.fsum``, which is exact and order-free.

The tilted estimator draws every amplitude from ``2x e^{theta c_k x - x^2}/M(theta c_k)``
and weights each sample by ``exp(-theta S + sum_k log M(theta c_k))``, where
``S = sum_k c_k R_k`` is the Fourier-Lebesgue norm of the datum.
"""

from __future__ import annotations

import enum
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import brentq
from scipy.special import erfc, erfcx, ndtri

from .dynamics import Sign
from .errors import ParameterError
from .ldp_core import dlog_rayleigh_mgf, log_rayleigh_mgf
from .solver import SolverConfig, StrangIntegrator, default_dt, default_grid
from .spectral_core import CoeffSeq, l1_sum, l2_sum, make_generator, rayleigh_from_uniform, sup_norm_batch

__all__ = [
    "Dynamics",
    "Norm",
    "TimeRule",
    "TailEstimate",
    "SweepResult",
    "ErrorBoundReport",
    "DEFAULT_BLOCK",
    "tilted_rayleigh_from_uniform",
    "select_tilt",
    "tail_naive",
    "tail_tilted",
    "ldp_sweep",
    "error_bound_study",
]

DEFAULT_BLOCK = 8192
SQRT_PI = math.sqrt(math.pi)


class Dynamics(str, enum.Enum):
    LINEAR = "linear"
    RESONANT = "resonant"
    FULL_NLS = "fullnls"


class Norm(str, enum.Enum):
    FL1 = "fl1"
    SUP = "sup"
    POINT = "point"  # |u(t, 0)|


@dataclass(frozen=True)
class TimeRule:
    """``fixed``: t = scale; ``critical``: t = scale/eps; ``log``: t = scale |log eps| / eps."""

    kind: str = "fixed"
    scale: float = 0.0

    def __post_init__(self):
        if self.kind not in ("fixed", "critical", "log"):
            raise ParameterError(f"unknown time rule {self.kind!r}")
        if self.scale < 0:
            raise ParameterError("time scale must be nonnegative")

    def __call__(self, eps: float) -> float:
        if self.kind == "fixed":
            return float(self.scale)
        if eps <= 0:
            return 0.0
        if self.kind == "critical":
            return self.scale / eps
        return self.scale * abs(math.log(eps)) / eps


@dataclass
class TailEstimate:
    p_hat: float
    stderr: float
    log_p: float
    n_samples: int
    estimator: str
    theta: float
    dynamics: str
    norm: str
    threshold: float
    eps: float
    z0: float
    t: float
    master_seed: int
    n_modes: int
    block_size: int
    n_hits: int = 0
    n_flagged: int = 0
    p_upper: float | None = None
    notice: str | None = None

    def record(self) -> dict:
        return asdict(self)

    @property
    def ci95(self) -> tuple[float, float]:
        return self.p_hat - 1.96 * self.stderr, self.p_hat + 1.96 * self.stderr


@dataclass
class SweepResult:
    rows: list
    slope: float | None

    def summary(self):
        """Rows ``(eps, p_hat, stderr, eps_log_p, rate_prediction, gap)``."""
        return [
            (r["eps"], r["estimate"].p_hat, r["estimate"].stderr, r["eps_log_p"], r["rate_prediction"], r["gap"])
            for r in self.rows
        ]


_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(24)


def _log_partial_mass(x, half, s):
    """``log int_0^x 2t e^{st - t^2} dt`` without cancellation or overflow."""
    e = s * x - x * x
    out = np.empty_like(x)
    # near the origin the closed form cancels; the integrand is a low-degree polynomial there
    near = (x <= 1.0) & (s * x <= 4.0)
    if near.any():
        xn, sn = x[near, None], s[near, None]
        t = 0.5 * xn * (_GL_NODES + 1.0)
        vals = 2.0 * t * np.exp(sn * t - t * t)
        # row-wise sum rather than BLAS, so a value never depends on its position in the batch
        out[near] = np.log(0.5 * x[near] * np.sum(vals * _GL_WEIGHTS, axis=1))
    far = ~near
    if far.any():
        xf, hf, ef = x[far], half[far], e[far]
        # M F = e^{e} (h sqrt(pi) erfcx(h - x) - 1) + (1 - h sqrt(pi) erfcx(h))
        with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
            bracket = hf * SQRT_PI * erfcx(hf - xf) - 1.0
            rest = 1.0 - hf * SQRT_PI * erfcx(hf)
            direct = np.log(np.exp(ef) * bracket + rest)
            scaled = ef + np.log(bracket) + np.log1p(rest * np.exp(-ef) / bracket)
        out[far] = np.where(ef > 600.0, scaled, direct)
    return out


def _tilted_log_tail(x, half, s, log_m, lower):
    """``log F(x)`` where ``lower`` else ``log S(x)`` for the tilted law (``s > 0``)."""
    out = np.empty_like(x)
    if lower.any():
        out[lower] = _log_partial_mass(x[lower], half[lower], s[lower])
    up = ~lower
    if up.any():
        d = x[up] - half[up]
        hu = half[up]
        with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
            pos = d > 0
            out[up] = s[up] ** 2 / 4.0 + np.where(
                pos,
                -d * d + np.log1p(hu * SQRT_PI * erfcx(np.where(pos, d, 0.0))),
                np.log(np.exp(-d * d) + hu * SQRT_PI * erfc(np.where(pos, 0.0, d))),
            )
    return out - log_m


def tilted_rayleigh_from_uniform(u: np.ndarray, s: np.ndarray, max_iter: int = 60) -> np.ndarray:
    """Inverse-CDF draw from the density proportional to ``x e^{s x - x^2}``, ``s >= 0``.

    ``u`` is uniform on [0, 1) and ``s = 0`` reproduces :func:`rayleigh_from_uniform`
    exactly.  The lower half of ``u`` is solved on the log-CDF, the upper half on
    the log-survival function; both are concave for this log-concave law, so
    safeguarded Newton converges from one side.
    """
    u = np.asarray(u, dtype=float)
    s = np.broadcast_to(np.asarray(s, dtype=float), u.shape)
    out = rayleigh_from_uniform(u)
    active = (s > 0) & (u > 0)
    if not active.any():
        return out
    uu, ss = u[active], s[active]
    lower = uu < 0.5
    target = np.where(lower, np.log(uu), np.log1p(-uu))
    log_m = log_rayleigh_mgf(ss)
    half = 0.5 * ss
    # S(x) <= 2.76 e^{-(x - s/2)^2} for every s >= 0 gives a right end
    lo = np.zeros_like(uu)
    hi = half + np.sqrt(math.log(2.76) - np.log1p(-uu))
    x = out[active]
    strong = half > 0.5
    if strong.any():
        hs = half[strong]
        var = 0.5 - (0.5 - (1.0 - math.pi / 4.0)) * np.exp(-hs)
        x[strong] = dlog_rayleigh_mgf(ss[strong]) + np.sqrt(var) * ndtri(uu[strong])
    # F(x) >= x^2 / M near the origin, so sqrt(u M) lies right of the root
    with np.errstate(over="ignore"):
        cap = np.exp(0.5 * (np.log(uu) + log_m))
    x = np.where(lower & ((x <= 0) | (x > cap)), cap, x)
    x = np.clip(x, 1e-300, hi)
    todo = np.arange(x.size)
    for _ in range(max_iter):
        xs, lw = x[todo], lower[todo]
        g = _tilted_log_tail(xs, half[todo], ss[todo], log_m[todo], lw) - target[todo]
        with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
            log_dens = np.log(2.0 * xs) + ss[todo] * xs - xs * xs - log_m[todo]
            step = g * np.exp(g + target[todo] - log_dens)
        step = np.where(lw, -step, step)
        below = np.where(lw, g < 0, g > 0)
        lo_t = np.where(below, xs, lo[todo])
        hi_t = np.where(below, hi[todo], xs)
        x_new = xs + step
        outside = ~np.isfinite(x_new) | (x_new < lo_t) | (x_new > hi_t)
        x_new = np.where(outside, 0.5 * (lo_t + hi_t), x_new)
        lo[todo], hi[todo], x[todo] = lo_t, hi_t, x_new
        todo = todo[np.abs(x_new - xs) > 1e-13 * (1.0 + xs)]
        if todo.size == 0:
            break
    out[active] = x
    return out


def select_tilt(c: CoeffSeq, threshold: float) -> float | None:
    """Tilt ``theta`` whose tilted mean of ``sum c_k R_k`` equals ``threshold``.

    ``None`` when the threshold does not exceed the untilted mean.
    """
    vals = c.values[c.values > 0]
    if vals.size == 0:
        raise ParameterError("tilting needs a nonzero coefficient sequence")
    mean0 = SQRT_PI / 2.0 * float(np.sum(vals))
    if threshold <= mean0:
        return None
    dk = lambda th: float(np.sum(vals * dlog_rayleigh_mgf(th * vals))) - threshold
    hi = 2.0 * threshold / float(np.sum(vals * vals)) + 1e-9
    while dk(hi) < 0:
        hi *= 2.0
    return float(brentq(dk, 0.0, hi, xtol=1e-14, rtol=1e-13, maxiter=500))


@dataclass(frozen=True)
class _Setup:
    c: CoeffSeq
    eps: float
    sign: Sign
    dynamics: Dynamics
    norm: Norm
    t: float
    threshold: float
    theta: float
    cfg: SolverConfig


def _final_amps(st: _Setup, r: np.ndarray, phi: np.ndarray):
    """Evolved amplitudes of a block and a per-row flag for failed integrations."""
    c = st.c.values
    k = st.c.wavenumbers.astype(float)
    g = r * np.exp(1j * phi)
    a0 = c * g
    flags = np.zeros(r.shape[0], dtype=bool)
    disp = np.mod(k * k * st.t, 2 * np.pi)
    if st.dynamics is Dynamics.LINEAR:
        return a0 * np.exp(-1j * disp), flags
    coupling = int(st.sign) * st.eps**2
    if st.dynamics is Dynamics.RESONANT:
        mod2 = (c * r) ** 2
        m = np.sum(mod2, axis=1, keepdims=True)
        phase = np.mod(-2.0 * coupling * m * st.t, 2 * np.pi) + np.mod(coupling * mod2 * st.t, 2 * np.pi) - disp
        return a0 * np.exp(1j * phase), flags
    cfg = st.cfg
    n_grid = cfg.n_grid or default_grid(st.c.n_modes, cfg.dealias)
    integ = StrangIntegrator(n_grid, cfg.dealias)
    state = integ.load(a0)
    dt = cfg.dt or default_dt(st.eps, float(np.sum(np.abs(a0), axis=1).max()))
    flags, _ = integ.advance(state, coupling, st.t, dt)
    return integ.unload(state), flags


def _norm_of(st: _Setup, r, phi):
    if st.norm is Norm.FL1 and st.dynamics is not Dynamics.FULL_NLS:
        # pure-phase flows conserve every Fourier-Lebesgue norm
        return np.sum(r * st.c.values, axis=1), np.zeros(r.shape[0], dtype=bool)
    amps, flags = _final_amps(st, r, phi)
    if st.norm is Norm.FL1:
        vals = np.sum(np.abs(amps), axis=1)
    elif st.norm is Norm.SUP:
        n = amps.shape[1] // 2
        vals = sup_norm_batch(amps, 8 * (2 * n + 1))
    else:
        vals = np.abs(np.sum(amps, axis=1))
    return vals, flags


def _needs_phases(st: _Setup) -> bool:
    return not (st.norm is Norm.FL1 and st.dynamics is not Dynamics.FULL_NLS)


def _draw_block(st: _Setup, seed: int, stream: tuple, b: int, size: int):
    gen = make_generator(seed, *stream, b)
    u = gen.random((size, st.c.values.size))
    if st.theta > 0:
        r = tilted_rayleigh_from_uniform(u, st.theta * st.c.values)
    else:
        r = rayleigh_from_uniform(u)
    phi = 2 * np.pi * gen.random((size, st.c.values.size)) if _needs_phases(st) else None
    return r, phi


def _run_blocks(fn: Callable[[int], tuple], n_blocks: int, threads: int | None):
    if threads is None or threads <= 1 or n_blocks <= 1:
        return [fn(b) for b in range(n_blocks)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, range(n_blocks)))


def _estimate(
    c: CoeffSeq,
    eps: float,
    z0: float,
    dynamics,
    norm,
    t: float,
    n_samples: int,
    cfg: SolverConfig | None,
    seed: int,
    theta: float,
    estimator: str,
    sign=Sign.DEFOCUSING,
    block_size: int = DEFAULT_BLOCK,
    threads: int | None = None,
    stream: tuple = (),
    notice: str | None = None,
) -> TailEstimate:
    if n_samples < 1:
        raise ParameterError("n_samples must be >= 1")
    if not eps > 0:
        raise ParameterError("eps must be positive")
    if z0 < 0:
        raise ParameterError("z0 must be nonnegative")
    if block_size < 1:
        raise ParameterError("block_size must be >= 1")
    dynamics, norm = Dynamics(dynamics), Norm(norm)
    threshold = z0 / math.sqrt(eps)
    st = _Setup(c, float(eps), Sign.parse(sign), dynamics, norm, float(t), threshold, float(theta), cfg or SolverConfig())
    log_mgf_total = float(np.sum(log_rayleigh_mgf(theta * c.values))) if theta > 0 else 0.0
    n_blocks = -(-n_samples // block_size)

    def block(b):
        size = min(block_size, n_samples - b * block_size)
        r, phi = _draw_block(st, seed, stream, b, size)
        vals, flags = _norm_of(st, r, phi)
        hit = (vals >= threshold) & ~flags
        if theta > 0:
            s = np.sum(r * c.values, axis=1)
            w = np.exp(-theta * s[hit] + log_mgf_total)
            if np.any(w < 0):
                raise AssertionError("negative importance weight")
            return float(np.sum(w)), float(np.sum(w * w)), int(hit.sum()), int(flags.sum())
        n_hit = int(hit.sum())
        return float(n_hit), float(n_hit), n_hit, int(flags.sum())

    parts = _run_blocks(block, n_blocks, threads)
    s1 = math.fsum(p[0] for p in parts)
    s2 = math.fsum(p[1] for p in parts)
    hits = sum(p[2] for p in parts)
    flagged = sum(p[3] for p in parts)
    n_used = n_samples - flagged
    if n_used == 0:
        p_hat, var = 0.0, 0.0
    else:
        p_hat = s1 / n_used
        var = max(s2 / n_used - p_hat * p_hat, 0.0)
    stderr = math.sqrt(var / n_used) if n_used else math.nan
    p_upper = None
    if p_hat == 0.0:
        log_p = -math.inf
        p_upper = 1.0 - 0.05 ** (1.0 / max(n_used, 1))  # one-sided 95% Clopper-Pearson, zero hits
    else:
        log_p = math.log(p_hat)
    return TailEstimate(
        p_hat=p_hat,
        stderr=stderr,
        log_p=log_p,
        n_samples=int(n_samples),
        estimator=estimator,
        theta=float(theta),
        dynamics=dynamics.value,
        norm=norm.value,
        threshold=threshold,
        eps=float(eps),
        z0=float(z0),
        t=float(t),
        master_seed=int(seed),
        n_modes=c.n_modes,
        block_size=int(block_size),
        n_hits=hits,
        n_flagged=flagged,
        p_upper=p_upper,
        notice=notice,
    )


def tail_naive(
    c: CoeffSeq,
    eps: float,
    z0: float,
    dynamics="linear",
    norm="fl1",
    t: float = 0.0,
    n_samples: int = 100_000,
    cfg: SolverConfig | None = None,
    seed: int = 0,
    **kw,
) -> TailEstimate:
    """Empirical frequency of ``{norm of u(t) >= z0 / sqrt(eps)}``."""
    return _estimate(c, eps, z0, dynamics, norm, t, n_samples, cfg, seed, 0.0, "naive", **kw)


def tail_tilted(
    c: CoeffSeq,
    eps: float,
    z0: float,
    dynamics="linear",
    norm="fl1",
    t: float = 0.0,
    n_samples: int = 10_000,
    cfg: SolverConfig | None = None,
    seed: int = 0,
    theta: float | None = None,
    **kw,
) -> TailEstimate:
    """Exponentially tilted importance-sampling estimate of the same event.

    ``theta=None`` selects the tilt that centres ``sum c_k R_k`` on the threshold;
    if the threshold is below the mean the naive estimator is used instead.
    """
    if l1_sum(c) == 0 or l2_sum(c) == 0:
        raise ParameterError("tilted estimator needs positive l1 and l2 sums")
    notice = None
    if theta is None:
        theta = select_tilt(c, z0 / math.sqrt(eps))
        if theta is None:
            notice = "threshold below the mean of sum c_k R_k; fell back to the naive estimator"
            return _estimate(c, eps, z0, dynamics, norm, t, n_samples, cfg, seed, 0.0, "naive", notice=notice, **kw)
    if theta < 0:
        raise ParameterError("tilt must be nonnegative")
    return _estimate(c, eps, z0, dynamics, norm, t, n_samples, cfg, seed, theta, "tilted", **kw)


def ldp_sweep(
    c: CoeffSeq,
    z0: float,
    eps_grid: Sequence[float],
    dynamics="linear",
    norm="fl1",
    t_rule: TimeRule = TimeRule(),
    n_samples: int = 10_000,
    seed: int = 0,
    cfg: SolverConfig | None = None,
    **kw,
) -> SweepResult:
    """Tilted estimates of ``eps log P`` along a decreasing eps grid, against ``-z0^2/sum c_k^2``."""
    grid = [float(e) for e in eps_grid]
    if any(e <= 0 for e in grid) or any(b >= a for a, b in zip(grid, grid[1:])):
        raise ParameterError("eps_grid must be positive and strictly decreasing")
    prediction = -z0 * z0 / l2_sum(c)
    rows = []
    for i, eps in enumerate(grid):
        est = tail_tilted(c, eps, z0, dynamics, norm, t_rule(eps), n_samples, cfg, seed, stream=(i,), **kw)
        eps_log_p = eps * est.log_p
        rows.append(
            {
                "eps": eps,
                "estimate": est,
                "eps_log_p": eps_log_p,
                "rate_prediction": prediction,
                "gap": abs(eps_log_p - prediction),
            }
        )
    slope = None
    finite = [(1.0 / r["eps"], r["estimate"].log_p) for r in rows if math.isfinite(r["estimate"].log_p)]
    if len(finite) >= 2:
        x, y = np.array(finite).T
        slope = float(np.polyfit(x, y, 1)[0])
    return SweepResult(rows, slope)


@dataclass
class ErrorBoundReport:
    """Per-eps maxima of ``||u - u_app||_{FL^1}`` over a time grid."""

    delta: float
    rows: list = field(default_factory=list)

    def summary(self):
        """Rows ``(eps, t_end, bound, n_samples, n_failed, violations, max_error, normalized_max)``."""
        return [
            (r["eps"], r["t_end"], r["bound"], r["n_samples"], r["n_failed"], r["violations"], r["max_error"], r["normalized_max"])
            for r in self.rows
        ]


def error_bound_study(
    c: CoeffSeq,
    eps_list: Sequence[float],
    delta: float,
    t_rule: TimeRule,
    n_samples: int,
    cfg: SolverConfig | None = None,
    seed: int = 0,
    n_times: int = 11,
    sign=Sign.DEFOCUSING,
    block_size: int = 50,
    threads: int | None = None,
    checkpoint: float | None = None,
) -> ErrorBoundReport:
    """Compare full NLS solutions with the resonant approximation on random data.

    Every eps sees the same random data (substream ``(seed, block)``), integrated on
    ``n_times`` equispaced times up to ``t_rule(eps)``; the bound is
    ``eps^(-1/2 + delta)``.  With ``checkpoint`` (in units of ``1/eps``) the report
    also carries the maximum error inside each window ``[(n-1) T_c, n T_c]``.
    """
    if n_samples < 1 or n_times < 1:
        raise ParameterError("n_samples and n_times must be positive")
    cfg = cfg or SolverConfig()
    report = ErrorBoundReport(delta=float(delta))
    k = c.wavenumbers.astype(float)
    sgn = int(Sign.parse(sign))
    for eps in eps_list:
        eps = float(eps)
        if eps < 0:
            raise ParameterError("eps must be nonnegative")
        t_end = t_rule(eps) if eps > 0 else t_rule(1.0)
        times = np.linspace(0.0, t_end, n_times)
        bound = eps ** (-0.5 + delta) if eps > 0 else math.inf
        coupling = sgn * eps * eps
        st = _Setup(c, eps, Sign(sgn), Dynamics.FULL_NLS, Norm.FL1, t_end, 0.0, 0.0, cfg)
        n_grid = cfg.n_grid or default_grid(c.n_modes, cfg.dealias)

        def block(b, st=st, coupling=coupling, times=times, n_grid=n_grid):
            size = min(block_size, n_samples - b * block_size)
            gen = make_generator(seed, b)
            r = rayleigh_from_uniform(gen.random((size, c.values.size)))
            phi = 2 * np.pi * gen.random((size, c.values.size))
            a0 = c.values * r * np.exp(1j * phi)
            mod2 = (c.values * r) ** 2
            m = np.sum(mod2, axis=1, keepdims=True)
            integ = StrangIntegrator(n_grid, cfg.dealias)
            kr = integ.n_resolved
            state = integ.load(a0)
            dt = cfg.dt or default_dt(st.eps, float(np.sum(np.abs(a0), axis=1).max()))
            errs = np.zeros((size, times.size))
            failed = np.zeros(size, dtype=bool)
            t_now = 0.0
            lo = kr - c.n_modes
            for j, t in enumerate(times):
                bad, _ = integ.advance(state, coupling, t - t_now, dt)
                failed |= bad
                t_now = t
                u = integ.unload(state)
                phase = (
                    np.mod(-2.0 * coupling * m * t, 2 * np.pi)
                    + np.mod(coupling * mod2 * t, 2 * np.pi)
                    - np.mod(k * k * t, 2 * np.pi)
                )
                app = a0 * np.exp(1j * phase)
                diff = np.abs(u)
                diff[:, lo : lo + c.values.size] = np.abs(u[:, lo : lo + c.values.size] - app)
                errs[:, j] = np.sum(diff, axis=1)
            return errs, failed

        parts = _run_blocks(block, -(-n_samples // block_size), threads)
        errs = np.concatenate([p[0] for p in parts])
        failed = np.concatenate([p[1] for p in parts])
        per_sample = errs.max(axis=1)
        ok = ~failed
        max_err = float(per_sample[ok].max()) if ok.any() else math.nan
        row = {
            "eps": eps,
            "t_end": float(t_end),
            "bound": bound,
            "n_samples": int(n_samples),
            "n_failed": int(failed.sum()),
            "failed_indices": [int(j) for j in np.flatnonzero(failed)],
            "violations": int(np.sum(per_sample[ok] >= bound)),
            "max_error": max_err,
            "normalized_max": max_err / bound if math.isfinite(bound) else 0.0,
            "per_sample_max": per_sample,
            "times": times,
        }
        if checkpoint and eps > 0:
            width = checkpoint / eps
            edges = np.arange(0.0, t_end + width, width)
            row["window_max"] = [
                float(errs[:, (times >= a - 1e-12) & (times <= b + 1e-12)].max(initial=0.0))
                for a, b in zip(edges[:-1], edges[1:])
            ]
        report.rows.append(row)
    return report
