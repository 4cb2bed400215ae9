"""Coefficient families, truncated Fourier fields, norms and Gaussian random data.

A field on the torus is stored by its Fourier modes ``k = -N..N``; index ``k + N``
of ``amps`` holds the coefficient of ``exp(i k x)``.  Random initial data are

    u0(x) = sum_k c_k g_k exp(i k x),   g_k = R_k exp(i phi_k),

with ``R_k`` drawn from the density ``2 x exp(-x^2)`` (so ``E|g_k|^2 = 1``) and
``phi_k`` uniform on ``[0, 2 pi)``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import ParameterError, ValidationError

__all__ = [
    "CoeffKind",
    "CoeffSeq",
    "GaussianSample",
    "SpectralField",
    "make_coeffs",
    "l1_sum",
    "l2_sum",
    "make_generator",
    "rayleigh_from_uniform",
    "sample_initial_data",
    "fl_norm",
    "mass",
    "sup_norm",
    "sup_norm_batch",
    "min_sup_grid",
]


class CoeffKind(str, enum.Enum):
    EXPONENTIAL = "exponential"
    GAUSSIAN = "gaussian"
    POWERLAW = "powerlaw"
    EXPLICIT = "explicit"


def _frozen(a):
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class CoeffSeq:
    """Nonnegative coefficients ``c_k`` for ``k = -N..N``."""

    kind: CoeffKind
    params: tuple
    n_modes: int
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.shape != (2 * self.n_modes + 1,):
            raise ValidationError(
                f"expected {2 * self.n_modes + 1} coefficients, got shape {values.shape}"
            )
        if not np.all(np.isfinite(values)) or np.any(values < 0):
            raise ValidationError("coefficients must be finite and nonnegative")
        object.__setattr__(self, "values", _frozen(values))

    @property
    def wavenumbers(self) -> np.ndarray:
        return np.arange(-self.n_modes, self.n_modes + 1)

    def __getitem__(self, k: int) -> float:
        if abs(k) > self.n_modes:
            return 0.0
        return float(self.values[k + self.n_modes])

    def truncate(self, n_modes: int) -> "CoeffSeq":
        """Same family re-evaluated (or zero-padded / cut) at a new truncation."""
        if self.kind is CoeffKind.EXPLICIT:
            vals = np.zeros(2 * n_modes + 1)
            m = min(n_modes, self.n_modes)
            vals[n_modes - m : n_modes + m + 1] = self.values[self.n_modes - m : self.n_modes + m + 1]
            return CoeffSeq(self.kind, ("values",), n_modes, vals)
        return make_coeffs(self.kind, dict(self.params), n_modes)


def _formula(kind: CoeffKind, params: Mapping[str, float], k: np.ndarray) -> np.ndarray:
    a = float(params.get("a", 1.0))
    if a <= 0:
        raise ParameterError(f"amplitude a must be positive, got {a}")
    ak = np.abs(k).astype(float)
    if kind is CoeffKind.EXPONENTIAL or kind is CoeffKind.GAUSSIAN:
        b = float(params.get("b", 1.0))
        if b <= 0:
            raise ParameterError(f"decay rate b must be positive, got {b}")
        return a * np.exp(-b * (ak if kind is CoeffKind.EXPONENTIAL else ak * ak))
    p = float(params.get("p", 1.0))
    if p <= 0:
        raise ParameterError(f"power p must be positive, got {p}")
    return a * (1.0 + ak) ** (-p)


def make_coeffs(kind, params: Mapping | Sequence | None = None, n_modes: int | None = None) -> CoeffSeq:
    """Build a truncated coefficient sequence.

    ``kind`` is one of ``exponential`` (``a e^{-b|k|}``), ``gaussian``
    (``a e^{-b k^2}``), ``powerlaw`` (``a (1+|k|)^{-p}``) or ``explicit``.  For
    ``explicit``, ``params`` is either the list of ``2N+1`` values or a mapping
    with a ``values`` entry; ``n_modes`` may then be omitted.
    """
    kind = CoeffKind(kind)
    if kind is CoeffKind.EXPLICIT:
        if isinstance(params, Mapping):
            params = params["values"]
        vals = np.asarray(params, dtype=float)
        if vals.ndim != 1 or vals.size % 2 == 0:
            raise ValidationError("explicit coefficients need an odd number 2N+1 of entries")
        if np.any(vals < 0) or not np.all(np.isfinite(vals)):
            raise ValidationError("explicit coefficients must be finite and nonnegative")
        n = vals.size // 2
        if n_modes is not None and n_modes != n:
            raise ValidationError(f"n_modes={n_modes} disagrees with {vals.size} explicit values")
        return CoeffSeq(kind, ("values",), n, vals)
    if n_modes is None or n_modes < 0:
        raise ParameterError(f"n_modes must be a nonnegative integer, got {n_modes}")
    params = dict(params or {})
    k = np.arange(-n_modes, n_modes + 1)
    vals = _formula(kind, params, k)
    return CoeffSeq(kind, tuple(sorted(params.items())), int(n_modes), vals)


def l1_sum(c: CoeffSeq) -> float:
    # np.sum on a contiguous float array is pairwise
    return float(np.sum(np.abs(c.values)))


def l2_sum(c: CoeffSeq) -> float:
    return float(np.sum(c.values * c.values))


@dataclass(frozen=True)
class SpectralField:
    """Fourier amplitudes ``u_k(t)``, ``k = -N..N``."""

    n_modes: int
    amps: np.ndarray = field(repr=False)
    time: float = 0.0

    def __post_init__(self):
        amps = np.asarray(self.amps, dtype=complex)
        if amps.shape != (2 * self.n_modes + 1,):
            raise ValidationError(
                f"expected {2 * self.n_modes + 1} amplitudes, got shape {amps.shape}"
            )
        if not np.all(np.isfinite(amps)):
            raise ValidationError("field amplitudes must be finite")
        object.__setattr__(self, "amps", _frozen(amps))
        object.__setattr__(self, "time", float(self.time))

    @classmethod
    def zeros(cls, n_modes: int, time: float = 0.0) -> "SpectralField":
        return cls(n_modes, np.zeros(2 * n_modes + 1, dtype=complex), time)

    @property
    def wavenumbers(self) -> np.ndarray:
        return np.arange(-self.n_modes, self.n_modes + 1)

    def mode(self, k: int) -> complex:
        if abs(k) > self.n_modes:
            return 0j
        return complex(self.amps[k + self.n_modes])

    def pad(self, n_modes: int) -> "SpectralField":
        """Zero-extend to ``n_modes`` (must not discard nonzero content)."""
        if n_modes < self.n_modes:
            raise ParameterError("pad cannot shrink a field; use truncate")
        out = np.zeros(2 * n_modes + 1, dtype=complex)
        out[n_modes - self.n_modes : n_modes + self.n_modes + 1] = self.amps
        return SpectralField(n_modes, out, self.time)

    def truncate(self, n_modes: int) -> "SpectralField":
        if n_modes >= self.n_modes:
            return self.pad(n_modes)
        lo = self.n_modes - n_modes
        return SpectralField(n_modes, self.amps[lo : lo + 2 * n_modes + 1], self.time)

    def with_amps(self, amps, time: float | None = None) -> "SpectralField":
        return SpectralField(self.n_modes, amps, self.time if time is None else time)


@dataclass(frozen=True)
class GaussianSample:
    """One draw ``g_k = R_k e^{i phi_k}`` behind an initial datum."""

    amplitudes: np.ndarray = field(repr=False)
    phases: np.ndarray = field(repr=False)
    seed: int = 0
    tilt: float | None = None
    log_weight: float = 0.0

    def __post_init__(self):
        r = np.asarray(self.amplitudes, dtype=float)
        phi = np.asarray(self.phases, dtype=float)
        if r.shape != phi.shape or r.ndim != 1:
            raise ValidationError("amplitudes and phases must be 1-d arrays of equal length")
        if np.any(r < 0):
            raise ValidationError("Rayleigh amplitudes must be nonnegative")
        if self.tilt is None and self.log_weight != 0.0:
            raise ValidationError("an untilted sample carries log_weight 0")
        object.__setattr__(self, "amplitudes", _frozen(r))
        object.__setattr__(self, "phases", _frozen(phi))

    @property
    def n_modes(self) -> int:
        return self.amplitudes.size // 2

    @property
    def g(self) -> np.ndarray:
        return self.amplitudes * np.exp(1j * self.phases)


def make_generator(seed, *spawn_key: int) -> np.random.Generator:
    """Counter-based (Philox) generator for the substream ``spawn_key`` of ``seed``."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(s) for s in spawn_key))
    return np.random.Generator(np.random.Philox(ss))


def rayleigh_from_uniform(u: np.ndarray) -> np.ndarray:
    """Inverse-CDF map for the density ``2x e^{-x^2}``; ``u`` uniform on [0, 1)."""
    # survival level v = 1 - u lies in (0, 1], so the log is finite
    return np.sqrt(-np.log1p(-u))


def sample_initial_data(c: CoeffSeq, seed: int) -> tuple[GaussianSample, SpectralField]:
    gen = make_generator(seed)
    n = c.values.size
    r = rayleigh_from_uniform(gen.random(n))
    phi = 2.0 * np.pi * gen.random(n)
    sample = GaussianSample(r, phi, seed=int(seed))
    return sample, SpectralField(c.n_modes, c.values * sample.g, 0.0)


def fl_norm(f: SpectralField, p: float = 1) -> float:
    """Fourier-Lebesgue norm: the l^p norm of the coefficient sequence."""
    if not p >= 1:
        raise ParameterError(f"Fourier-Lebesgue exponent must be >= 1, got {p}")
    a = np.abs(f.amps)
    if np.isinf(p):
        return float(a.max()) if a.size else 0.0
    if p == 1:
        return float(np.sum(a))
    if p == 2:
        return float(np.sqrt(np.sum(a * a)))
    return float(np.sum(a**p) ** (1.0 / p))


def mass(f: SpectralField) -> float:
    a = np.abs(f.amps)
    return float(np.sum(a * a))


def min_sup_grid(n_modes: int) -> int:
    return 4 * (2 * n_modes + 1)


def sup_norm_batch(amps: np.ndarray, grid_size: int) -> np.ndarray:
    """Row-wise ``max_x |sum_k u_k e^{ikx}|`` on ``grid_size`` equispaced points."""
    amps = np.atleast_2d(amps)
    n = amps.shape[-1] // 2
    if grid_size < min_sup_grid(n):
        raise ParameterError(f"grid_size {grid_size} below 4(2N+1) = {min_sup_grid(n)}")
    buf = np.zeros(amps.shape[:-1] + (grid_size,), dtype=complex)
    k = np.arange(-n, n + 1)
    buf[..., k % grid_size] = amps
    vals = np.fft.ifft(buf, axis=-1) * grid_size
    return np.abs(vals).max(axis=-1)


def sup_norm(f: SpectralField, grid_size: int | None = None) -> float:
    if grid_size is None:
        grid_size = 2 * min_sup_grid(f.n_modes)
    return float(sup_norm_batch(f.amps[None, :], grid_size)[0])
