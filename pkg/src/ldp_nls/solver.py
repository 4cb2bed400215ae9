"""Numerical integration of ``i u_t + u_xx = sigma eps^2 |u|^2 u`` on the torus.

Two schemes:

* Strang split-step pseudospectral: exact linear phase in Fourier space for half
  a step, exact pointwise nonlinear rotation ``u e^{-i sigma eps^2 |u|^2 dt}`` on
  the physical grid, another linear half step.  Modes above the resolved band
  are zeroed after every nonlinear substep (2/3 rule when ``dealias`` is on).
* Classical RK4 on the truncated mode system with the cubic convolution summed
  directly (no FFT).  Used as a small-scale reference.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .dynamics import FlowParams, resonant_evolve
from .errors import DivergenceError, ParameterError
from .spectral_core import (
    CoeffSeq,
    GaussianSample,
    SpectralField,
    fl_norm,
    mass,
    sup_norm,
)

__all__ = [
    "Scheme",
    "SolverConfig",
    "Trajectory",
    "StrangIntegrator",
    "default_dt",
    "default_grid",
    "solve",
    "solve_reference",
    "cubic_direct",
    "approximation_error",
    "local_existence_horizon",
    "REFERENCE_MAX_MODES",
]

REFERENCE_MAX_MODES = 32
EXISTENCE_KAPPA = 0.25


class Scheme(str, enum.Enum):
    STRANG = "strang"
    RK4 = "rk4"


@dataclass(frozen=True)
class SolverConfig:
    """Integrator settings.  ``dt=None`` and ``n_grid=None`` pick defaults per datum."""

    dt: float | None = None
    n_grid: int | None = None
    dealias: bool = True
    scheme: Scheme = Scheme.STRANG
    record_every: int = 10

    def __post_init__(self):
        object.__setattr__(self, "scheme", Scheme(self.scheme))
        if self.dt is not None and not self.dt > 0:
            raise ParameterError(f"dt must be positive, got {self.dt}")
        if self.record_every < 1:
            raise ParameterError("record_every must be >= 1")
        if self.n_grid is not None:
            n = int(self.n_grid)
            if n < 4 or n & (n - 1):
                raise ParameterError(f"n_grid must be a power of two >= 4, got {n}")


@dataclass
class Trajectory:
    times: np.ndarray
    fields: list
    mass: np.ndarray
    fl1: np.ndarray
    fl1_error_vs_app: np.ndarray | None = None
    warnings: list = field(default_factory=list)

    @property
    def final(self) -> SpectralField:
        return self.fields[-1]

    def sup(self, grid_factor: int = 8) -> np.ndarray:
        return np.array([sup_norm(f, grid_factor * (2 * f.n_modes + 1)) for f in self.fields])

    def table(self):
        """Rows ``(t, mass, fl1, sup, fl1_error_vs_app)`` for export."""
        sup = self.sup()
        err = self.fl1_error_vs_app
        rows = []
        for i, t in enumerate(self.times):
            rows.append((t, self.mass[i], self.fl1[i], sup[i], None if err is None else err[i]))
        return rows


def default_dt(epsilon: float, fl1: float) -> float:
    """Keep the nonlinear rotation per step well below one radian."""
    rot = epsilon**2 * fl1**2
    return 0.01 if rot == 0 else min(0.01, 0.1 / rot)


def default_grid(n_modes: int, dealias: bool = True) -> int:
    need = 2 * (2 * n_modes + 1) if dealias else 2 * n_modes + 2
    return max(4, 1 << (need - 1).bit_length())


def resolved_modes(n_grid: int, dealias: bool) -> int:
    return n_grid // 3 if dealias else n_grid // 2 - 1


class StrangIntegrator:
    """Batched Strang stepper on a fixed FFT grid.

    States are arrays of shape ``(batch, n_grid)`` holding Fourier coefficients in
    FFT order (index ``k mod n_grid``).  One instance per trajectory batch.
    """

    def __init__(self, n_grid: int, dealias: bool = True):
        self.n_grid = int(n_grid)
        self.dealias = dealias
        self.n_resolved = resolved_modes(self.n_grid, dealias)
        k = np.fft.fftfreq(self.n_grid, d=1.0 / self.n_grid)
        self.k = k
        self.mask = (np.abs(k) <= self.n_resolved).astype(float)
        self._half = {}

    def _half_phase(self, dt: float) -> np.ndarray:
        ph = self._half.get(dt)
        if ph is None:
            ph = np.exp(-1j * np.mod(self.k * self.k * (0.5 * dt), 2 * np.pi))
            self._half = {dt: ph}
        return ph

    def load(self, amps: np.ndarray) -> np.ndarray:
        amps = np.atleast_2d(np.asarray(amps, dtype=complex))
        n = amps.shape[-1] // 2
        if n > self.n_resolved:
            raise ParameterError(
                f"field with {n} modes exceeds the resolved band {self.n_resolved} of n_grid={self.n_grid}"
            )
        state = np.zeros((amps.shape[0], self.n_grid), dtype=complex)
        state[:, np.arange(-n, n + 1) % self.n_grid] = amps
        return state

    def unload(self, state: np.ndarray) -> np.ndarray:
        k = np.arange(-self.n_resolved, self.n_resolved + 1)
        return state[:, k % self.n_grid]

    def steps(self, state: np.ndarray, coupling: float, dt: float, n_steps: int, check: bool = True):
        """Advance ``state`` in place by ``n_steps`` of size ``dt`` (negative allowed).

        Returns a boolean array flagging rows that became non-finite.
        """
        half = self._half_phase(dt)
        post = half * self.mask
        m = self.n_grid
        bad = np.zeros(state.shape[0], dtype=bool)
        rot = coupling * dt
        for step in range(n_steps):
            state *= half
            if rot != 0.0:
                u = np.fft.ifft(state, axis=-1) * m
                u *= np.exp(-1j * rot * (u.real**2 + u.imag**2))
                state[:] = np.fft.fft(u, axis=-1) / m
                state *= post
            else:
                state *= half
            if check:
                finite = np.isfinite(state).all(axis=-1)
                if not finite.all():
                    newly = ~finite & ~bad
                    bad |= ~finite
                    state[~finite] = 0.0
                    if newly.any():
                        self.last_bad_step = step
        return bad

    def advance(self, state, coupling: float, duration: float, dt: float):
        """Advance by ``duration`` with the largest step ``<= dt`` that divides it."""
        if duration == 0:
            return np.zeros(state.shape[0], dtype=bool), 0
        n = max(1, math.ceil(abs(duration) / dt - 1e-9))
        return self.steps(state, coupling, duration / n, n), n


def _resolve(u0: SpectralField, p: FlowParams, cfg: SolverConfig):
    dt = cfg.dt if cfg.dt is not None else default_dt(p.epsilon, fl_norm(u0, 1))
    n_grid = cfg.n_grid if cfg.n_grid is not None else default_grid(u0.n_modes, cfg.dealias)
    if cfg.dealias and n_grid < 2 * (2 * u0.n_modes + 1):
        raise ParameterError(f"n_grid={n_grid} below 2(2N+1) = {2 * (2 * u0.n_modes + 1)} with dealiasing on")
    return dt, n_grid


def _heuristic_warnings(u0: SpectralField, p: FlowParams, dt: float, t_end: float) -> list:
    out = []
    fl1 = fl_norm(u0, 1)
    if p.epsilon**2 * fl1**2 * dt > 0.1:
        out.append(f"nonlinear rotation per step {p.epsilon**2 * fl1**2 * dt:.3g} rad exceeds 0.1")
    horizon = local_existence_horizon(u0, p.epsilon)
    if t_end > horizon:
        out.append(f"t_end={t_end:.6g} exceeds the local existence horizon {horizon:.6g}")
    return out


def solve(u0: SpectralField, p: FlowParams, cfg: SolverConfig = SolverConfig(), t_end: float = 1.0) -> Trajectory:
    """Integrate from ``u0.time`` to ``u0.time + t_end``; snapshots every ``record_every`` steps."""
    if not t_end > 0:
        raise ParameterError("t_end must be positive")
    if cfg.scheme is Scheme.RK4:
        dt = cfg.dt if cfg.dt is not None else default_dt(p.epsilon, fl_norm(u0, 1))
        return _solve_rk4_trajectory(u0, p, dt, t_end, cfg.record_every)
    dt, n_grid = _resolve(u0, p, cfg)
    integ = StrangIntegrator(n_grid, cfg.dealias)
    n_steps = max(1, math.ceil(t_end / dt - 1e-9))
    h = t_end / n_steps
    state = integ.load(u0.amps)
    k_res = integ.n_resolved
    t0 = u0.time

    times, fields = [t0], [u0.pad(k_res)]
    done = 0
    while done < n_steps:
        chunk = min(cfg.record_every, n_steps - done)
        bad = integ.steps(state, p.coupling, h, chunk)
        if bad.any():
            raise DivergenceError(
                f"non-finite amplitudes at step {done + integ.last_bad_step}", step=done + integ.last_bad_step
            )
        done += chunk
        times.append(t0 + done * h)
        fields.append(SpectralField(k_res, integ.unload(state)[0], t0 + done * h))
    return Trajectory(
        times=np.array(times),
        fields=fields,
        mass=np.array([mass(f) for f in fields]),
        fl1=np.array([fl_norm(f, 1) for f in fields]),
        warnings=_heuristic_warnings(u0, p, h, t_end),
    )


def cubic_direct(amps: np.ndarray) -> np.ndarray:
    """``sum_{k1-k2+k3=k} u_{k1} conj(u_{k2}) u_{k3}`` for ``|k| <= N``, by direct summation.

    Factored as ``sum_d C(d) u_{k+d}`` with ``C(d) = sum_j u_j conj(u_{j+d})``;
    both sums are direct (``np.correlate``/``np.convolve`` do not use FFTs).
    """
    n_tot = amps.size
    corr = np.correlate(amps, amps, mode="full")  # lag e: sum_j u_{j+e} conj(u_j)
    conv = np.convolve(corr, amps)
    return conv[n_tot - 1 : 2 * n_tot - 1]


def _rk4_rhs(u, k2, coupling):
    return -1j * (k2 * u + coupling * cubic_direct(u))


def _rk4_step(u, k2, coupling, h):
    a = _rk4_rhs(u, k2, coupling)
    b = _rk4_rhs(u + 0.5 * h * a, k2, coupling)
    c = _rk4_rhs(u + 0.5 * h * b, k2, coupling)
    d = _rk4_rhs(u + h * c, k2, coupling)
    return u + (h / 6.0) * (a + 2.0 * b + 2.0 * c + d)


def _solve_rk4_trajectory(u0, p, dt, t_end, record_every):
    if u0.n_modes > REFERENCE_MAX_MODES:
        raise ParameterError(
            f"direct-summation reference limited to N <= {REFERENCE_MAX_MODES}, got N={u0.n_modes}"
        )
    n_steps = max(1, math.ceil(t_end / dt - 1e-9))
    h = t_end / n_steps
    k = u0.wavenumbers.astype(float)
    k2 = k * k
    u = np.array(u0.amps)
    times, fields = [u0.time], [u0]
    for step in range(1, n_steps + 1):
        u = _rk4_step(u, k2, p.coupling, h)
        if not np.all(np.isfinite(u)):
            raise DivergenceError(f"non-finite amplitudes at step {step}", step=step)
        if step % record_every == 0 or step == n_steps:
            times.append(u0.time + step * h)
            fields.append(SpectralField(u0.n_modes, u, u0.time + step * h))
    return Trajectory(
        times=np.array(times),
        fields=fields,
        mass=np.array([mass(f) for f in fields]),
        fl1=np.array([fl_norm(f, 1) for f in fields]),
    )


def solve_reference(u0: SpectralField, p: FlowParams, dt: float, t_end: float) -> SpectralField:
    """RK4 on the truncated mode system; small-N oracle for the split-step scheme."""
    if not dt > 0 or not t_end > 0:
        raise ParameterError("dt and t_end must be positive")
    return _solve_rk4_trajectory(u0, p, dt, t_end, record_every=1 << 62).final


def approximation_error(
    sample: GaussianSample,
    c: CoeffSeq,
    p: FlowParams,
    cfg: SolverConfig,
    t_grid,
) -> list[tuple[float, float]]:
    """``||u(t) - u_app(t)||_{FL^1}`` at each requested time, same random datum."""
    t_grid = np.sort(np.asarray(t_grid, dtype=float))
    if t_grid.size and t_grid[0] < 0:
        raise ParameterError("times must be nonnegative")
    u0 = SpectralField(c.n_modes, c.values * sample.g, 0.0)
    dt, n_grid = _resolve(u0, p, cfg)
    integ = StrangIntegrator(n_grid, cfg.dealias)
    state = integ.load(u0.amps)
    out, t_now = [], 0.0
    for t in t_grid:
        bad, _ = integ.advance(state, p.coupling, t - t_now, dt)
        if bad.any():
            raise DivergenceError(f"non-finite amplitudes before t={t}")
        t_now = t
        u = integ.unload(state)[0]
        app = resonant_evolve(sample, c, p, t).pad(integ.n_resolved).amps
        out.append((float(t), float(np.sum(np.abs(u - app)))))
    return out


def local_existence_horizon(u0: SpectralField, epsilon: float, kappa: float = EXISTENCE_KAPPA) -> float:
    """``kappa eps^-2 ||u0||_{FL^1}^-2``; infinite for a zero datum or ``eps = 0``."""
    if isinstance(epsilon, FlowParams):
        epsilon = epsilon.epsilon
    norm = fl_norm(u0, 1)
    if norm == 0 or epsilon == 0:
        return math.inf
    return kappa / (epsilon**2 * norm**2)
