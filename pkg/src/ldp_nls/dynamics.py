"""Closed-form flows: free Schroedinger propagator, resonant approximation, gauges.

The equation is ``i u_t + u_xx = sigma eps^2 |u|^2 u`` on the torus with
``sigma = +1`` (defocusing) or ``-1`` (focusing).  Keeping only the resonant
interactions leaves the exactly solvable system whose solution is

    u_app_k(t) = c_k g_k exp(i [ -2 sigma eps^2 m t + sigma eps^2 c_k^2 |g_k|^2 t - k^2 t ]),

where ``m = sum_k |u_k(0)|^2``.  Every map here multiplies modes by pure phases,
so all Fourier-Lebesgue norms are preserved exactly.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import ConsistencyError, ParameterError
from .spectral_core import CoeffSeq, GaussianSample, SpectralField, mass

__all__ = [
    "Sign",
    "FlowParams",
    "linear_evolve",
    "resonant_evolve",
    "resonant_gauged",
    "to_interaction",
    "from_interaction",
    "to_gauged",
    "from_gauged",
]

TWO_PI = 2.0 * np.pi


class Sign(enum.IntEnum):
    DEFOCUSING = 1
    FOCUSING = -1

    @classmethod
    def parse(cls, value) -> "Sign":
        if isinstance(value, Sign):
            return value
        if isinstance(value, str):
            key = value.strip().lower()
            if key in ("defocusing", "+", "plus"):
                return cls.DEFOCUSING
            if key in ("focusing", "-", "minus"):
                return cls.FOCUSING
            raise ParameterError(f"unknown nonlinearity sign {value!r}")
        return cls(int(value))


@dataclass(frozen=True)
class FlowParams:
    """Nonlinearity strength, sign and the conserved mass of the datum.

    ``gauge_power`` selects the power of ``eps`` in the mass gauge
    ``exp(2 i t eps^q m)``; ``q = 2`` is the dimensionally consistent choice,
    ``q = 1`` reproduces the alternative written form of the gauge.
    """

    epsilon: float
    sign: Sign = Sign.DEFOCUSING
    mass_m: float = 0.0
    gauge_power: int = 2

    def __post_init__(self):
        if not self.epsilon >= 0 or not np.isfinite(self.epsilon):
            raise ParameterError(f"epsilon must be finite and >= 0, got {self.epsilon}")
        if self.mass_m < 0:
            raise ParameterError("mass must be nonnegative")
        if self.gauge_power not in (1, 2):
            raise ParameterError("gauge_power must be 1 or 2")
        object.__setattr__(self, "sign", Sign.parse(self.sign))

    @classmethod
    def for_field(cls, f: SpectralField, epsilon: float, sign=Sign.DEFOCUSING, gauge_power: int = 2):
        return cls(epsilon, Sign.parse(sign), mass(f), gauge_power)

    @property
    def coupling(self) -> float:
        """Signed cubic coupling ``sigma eps^2``."""
        return int(self.sign) * self.epsilon**2

    @property
    def gauge_rate(self) -> float:
        return 2.0 * int(self.sign) * self.epsilon**self.gauge_power * self.mass_m


def _rotate(amps: np.ndarray, phase: np.ndarray | float) -> np.ndarray:
    return amps * np.exp(1j * np.mod(phase, TWO_PI))


def _dispersion_phase(n_modes: int, t: float) -> np.ndarray:
    k = np.arange(-n_modes, n_modes + 1, dtype=float)
    return np.mod(k * k * t, TWO_PI)


def linear_evolve(f: SpectralField, t: float) -> SpectralField:
    """Free flow ``u_k -> u_k e^{-i k^2 t}``; ``t`` may be negative."""
    if t == 0:
        return f
    return SpectralField(f.n_modes, _rotate(f.amps, -_dispersion_phase(f.n_modes, t)), f.time + t)


def _check_mass(sample: GaussianSample, c: CoeffSeq, p: FlowParams) -> np.ndarray:
    if sample.amplitudes.size != c.values.size:
        raise ConsistencyError("sample and coefficient sequence have different truncations")
    mod2 = (c.values * sample.amplitudes) ** 2
    m = float(np.sum(mod2))
    if abs(m - p.mass_m) > 1e-10 * max(m, 1e-300) and not (m == 0 and p.mass_m == 0):
        raise ConsistencyError(f"flow mass {p.mass_m!r} does not match sample mass {m!r}")
    return mod2


def resonant_gauged(sample: GaussianSample, c: CoeffSeq, p: FlowParams, t: float) -> SpectralField:
    """Solution ``a_k(t) = c_k g_k exp(i sigma eps^2 |a_k|^2 t)`` of the resonant system."""
    mod2 = _check_mass(sample, c, p)
    a0 = c.values * sample.g
    return SpectralField(c.n_modes, _rotate(a0, np.mod(p.coupling * mod2 * t, TWO_PI)), t)


def resonant_evolve(sample: GaussianSample, c: CoeffSeq, p: FlowParams, t: float) -> SpectralField:
    """Resonant approximation ``u_app(t)`` of the full flow."""
    mod2 = _check_mass(sample, c, p)
    a0 = c.values * sample.g
    phase = (
        np.mod(-p.gauge_rate * t, TWO_PI)
        + np.mod(p.coupling * mod2 * t, TWO_PI)
        - _dispersion_phase(c.n_modes, t)
    )
    return SpectralField(c.n_modes, _rotate(a0, phase), t)


def to_interaction(f: SpectralField) -> SpectralField:
    """``v_k = e^{i k^2 t} u_k`` at the field's own time."""
    return f.with_amps(_rotate(f.amps, _dispersion_phase(f.n_modes, f.time)))


def from_interaction(v: SpectralField) -> SpectralField:
    return v.with_amps(_rotate(v.amps, -_dispersion_phase(v.n_modes, v.time)))


def to_gauged(v: SpectralField, p: FlowParams) -> SpectralField:
    """``w = e^{2 i sigma eps^q m t} v``: removes the mass-proportional phase."""
    return v.with_amps(_rotate(v.amps, np.mod(p.gauge_rate * v.time, TWO_PI)))


def from_gauged(w: SpectralField, p: FlowParams) -> SpectralField:
    return w.with_amps(_rotate(w.amps, -np.mod(p.gauge_rate * w.time, TWO_PI)))
