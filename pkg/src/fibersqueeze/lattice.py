"""Discretization primitives: temporal/spectral grids, two-polarization fields,
fiber coefficient profiles, and the two standard model presets.

All types here are immutable value objects; arrays are frozen (read-only) after
construction so fields and grids can be shared freely across threads and
processes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable

import numpy as np

from .errors import InvalidParameterError

__all__ = [
    "TemporalGrid",
    "PolarizedField",
    "ModulationSpec",
    "FiberProfile",
    "MODULATION_NONE",
    "default_grid",
    "manakov_profile",
    "birefringent_profile",
    "make_initial_single",
    "make_initial_pair",
    "field_intensity",
    "field_energy",
    "monotone_spectrum",
]

# Manakov preset: averaged model for rapidly varying birefringence.
MANAKOV_A = 8.0 / 9.0
MANAKOV_B = 8.0 / 9.0
MANAKOV_C = 0.0
# Linearly birefringent fiber preset.
BIREFRINGENT_A = 1.0
BIREFRINGENT_B = 2.0 / 3.0
BIREFRINGENT_C = 1.0 / 3.0

DEFAULT_N_POINTS = 4096
DEFAULT_TAU_WINDOW = (-20.0, 20.0)


def _freeze(arr: np.ndarray) -> np.ndarray:
    """Return a read-only view/copy of ``arr`` without mutating the caller's array."""
    if arr.flags.writeable:
        arr = arr.copy()
        arr.flags.writeable = False
    return arr


def _as_frozen_complex(a, n_points: int, name: str) -> np.ndarray:
    arr = np.asarray(a, dtype=np.complex128)
    if arr.shape != (n_points,):
        raise InvalidParameterError(
            f"{name} must have shape ({n_points},), got {arr.shape}"
        )
    return _freeze(arr)


@dataclass(frozen=True)
class TemporalGrid:
    """Uniform retarded-time grid with its discrete spectral companion.

    The window is ``[tau_min, tau_max)`` sampled at ``n_points`` (a power of
    two), periodic boundary implied.  Spectral bins follow standard
    discrete-transform ordering; ``omega_monotone`` gives the shifted,
    monotone axis for output files.
    """

    n_points: int
    tau_min: float
    tau_max: float

    def __post_init__(self):
        n = self.n_points
        if n < 8 or (n & (n - 1)) != 0:
            raise InvalidParameterError(
                f"n_points must be a power of two >= 8, got {n}"
            )
        if not (self.tau_max > self.tau_min):
            raise InvalidParameterError(
                f"tau_max must exceed tau_min, got [{self.tau_min}, {self.tau_max}]"
            )

    @property
    def d_tau(self) -> float:
        return (self.tau_max - self.tau_min) / self.n_points

    @property
    def extent(self) -> float:
        return self.tau_max - self.tau_min

    @property
    def d_omega(self) -> float:
        """Spectral bin spacing, 2*pi / (tau_max - tau_min)."""
        return 2.0 * math.pi / self.extent

    @cached_property
    def tau(self) -> np.ndarray:
        t = self.tau_min + self.d_tau * np.arange(self.n_points)
        t.flags.writeable = False
        return t

    @cached_property
    def omega(self) -> np.ndarray:
        """Normalized angular frequencies in discrete-transform ordering."""
        w = 2.0 * math.pi * np.fft.fftfreq(self.n_points, d=self.d_tau)
        w.flags.writeable = False
        return w

    @cached_property
    def omega_monotone(self) -> np.ndarray:
        w = np.fft.fftshift(self.omega)
        w.flags.writeable = False
        return w


def default_grid() -> TemporalGrid:
    """Grid used throughout for figure-scale runs: tau in [-20, 20), 4096 points.

    sech tails at |tau| = 20 are below 5e-9, so periodic wraparound is
    negligible for the pulse regimes simulated here.
    """
    return TemporalGrid(DEFAULT_N_POINTS, *DEFAULT_TAU_WINDOW)


def monotone_spectrum(values: np.ndarray) -> np.ndarray:
    """Reorder a spectral array from transform ordering to monotone frequency."""
    return np.fft.fftshift(values, axes=-1)


@dataclass(frozen=True)
class PolarizedField:
    """Pair of complex polarization envelopes sampled on a common grid."""

    grid: TemporalGrid
    ux: np.ndarray
    uy: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "ux", _as_frozen_complex(self.ux, self.grid.n_points, "ux"))
        object.__setattr__(self, "uy", _as_frozen_complex(self.uy, self.grid.n_points, "uy"))
        if not (np.all(np.isfinite(self.ux.view(np.float64)))
                and np.all(np.isfinite(self.uy.view(np.float64)))):
            raise InvalidParameterError("field amplitudes must be finite")

    def stack(self) -> np.ndarray:
        """Writable (2, n_points) copy with rows (ux, uy)."""
        return np.stack([self.ux, self.uy])


def field_intensity(f: PolarizedField) -> np.ndarray:
    """Total intensity |U_x|^2 + |U_y|^2, pointwise over the grid."""
    return np.abs(f.ux) ** 2 + np.abs(f.uy) ** 2


def field_energy(f: PolarizedField) -> float:
    """Energy functional E = integral of (|U_x|^2 + |U_y|^2) d tau."""
    return float(f.grid.d_tau * np.sum(field_intensity(f)))


@dataclass(frozen=True)
class ModulationSpec:
    """Longitudinal modulation of a fiber coefficient.

    ``dispersion_factor`` implements 1 - depth * sin(2*pi*zeta/period) (the
    group-velocity-dispersion modulation shape); ``birefringence_factor``
    implements 1 + depth * sin(2*pi*zeta/period) (the weak modulation shape
    used for the group-delay and birefringence coefficients).  The
    ``truncated_sine`` kind applies the sine over the first period only and
    is flat afterward.
    """

    kind: str = "none"
    period: float = math.inf
    depth: float = 0.2

    def __post_init__(self):
        if self.kind not in ("none", "sine", "truncated_sine"):
            raise InvalidParameterError(f"unknown modulation kind {self.kind!r}")
        if self.kind == "none":
            # Canonical form so equality/round-trip comparisons are stable.
            object.__setattr__(self, "period", math.inf)
            object.__setattr__(self, "depth", 0.0)
        else:
            if not (self.period > 0 and math.isfinite(self.period)):
                raise InvalidParameterError(
                    f"modulation period must be positive and finite, got {self.period}"
                )
            if self.depth < 0:
                raise InvalidParameterError(f"modulation depth must be >= 0, got {self.depth}")

    def _sine(self, zeta: float) -> float:
        if self.kind == "none":
            return 0.0
        if self.kind == "truncated_sine" and zeta > self.period:
            return 0.0
        return math.sin(2.0 * math.pi * zeta / self.period)

    def dispersion_factor(self, zeta: float) -> float:
        return 1.0 - self.depth * self._sine(zeta)

    def birefringence_factor(self, zeta: float) -> float:
        return 1.0 + self.depth * self._sine(zeta)


MODULATION_NONE = ModulationSpec("none")


@dataclass(frozen=True)
class FiberProfile:
    """Model coefficients (A, B, C) plus the zeta-dependent fiber functions.

    ``dispersion``, ``birefringence`` and ``group_delay`` map propagation
    distance zeta to D(zeta), b(zeta), b1(zeta); all must stay bounded on
    [0, length].  ``descriptor`` is a serializable summary used for file
    headers; it does not participate in equality.
    """

    a_coef: float
    b_coef: float
    c_coef: float
    dispersion: Callable[[float], float]
    birefringence: Callable[[float], float]
    group_delay: Callable[[float], float]
    length: float
    descriptor: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if not (self.length >= 0 and math.isfinite(self.length)):
            raise InvalidParameterError(f"fiber length must be finite and >= 0, got {self.length}")


def manakov_profile(length: float, d_mod: ModulationSpec = MODULATION_NONE) -> FiberProfile:
    """Manakov preset: A = B = 8/9, C = 0, no birefringence or group delay."""
    return FiberProfile(
        a_coef=MANAKOV_A,
        b_coef=MANAKOV_B,
        c_coef=MANAKOV_C,
        dispersion=d_mod.dispersion_factor,
        birefringence=lambda zeta: 0.0,
        group_delay=lambda zeta: 0.0,
        length=length,
        descriptor={
            "model": "manakov",
            "d_mod": (d_mod.kind, d_mod.period, d_mod.depth),
            "length": length,
        },
    )


def birefringent_profile(
    length: float,
    b: float,
    b1: float,
    d_mod: ModulationSpec = MODULATION_NONE,
    b_mod: ModulationSpec = MODULATION_NONE,
    b1_mod: ModulationSpec = MODULATION_NONE,
) -> FiberProfile:
    """Linearly birefringent preset: A = 1, B = 2/3, C = 1/3.

    ``b`` and ``b1`` are the base birefringence and differential group delay;
    their modulations multiply the base value.
    """
    return FiberProfile(
        a_coef=BIREFRINGENT_A,
        b_coef=BIREFRINGENT_B,
        c_coef=BIREFRINGENT_C,
        dispersion=d_mod.dispersion_factor,
        birefringence=lambda zeta: b * b_mod.birefringence_factor(zeta),
        group_delay=lambda zeta: b1 * b1_mod.birefringence_factor(zeta),
        length=length,
        descriptor={
            "model": "birefringent",
            "b": b,
            "b1": b1,
            "d_mod": (d_mod.kind, d_mod.period, d_mod.depth),
            "b_mod": (b_mod.kind, b_mod.period, b_mod.depth),
            "b1_mod": (b1_mod.kind, b1_mod.period, b1_mod.depth),
            "length": length,
        },
    )


def make_initial_single(grid: TemporalGrid, u0: float) -> PolarizedField:
    """Linearly polarized sech input with equal components.

    U_x(0, tau) = U_y(0, tau) = (u0 / sqrt(2)) sech(tau).
    """
    if not u0 > 0:
        raise InvalidParameterError(f"u0 must be positive, got {u0}")
    amp = (u0 / math.sqrt(2.0)) / np.cosh(grid.tau)
    u = amp.astype(np.complex128)
    return PolarizedField(grid, u, u.copy())


def make_initial_pair(
    grid: TemporalGrid, u0: float, t_sep: float, d_omega: float
) -> PolarizedField:
    """Two sech pulses in orthogonal polarizations, offset and frequency-shifted.

    U_x = (u0/sqrt 2) sech(tau + T) exp(+i d_omega tau),
    U_y = (u0/sqrt 2) sech(tau - T) exp(-i d_omega tau).
    """
    if not u0 > 0:
        raise InvalidParameterError(f"u0 must be positive, got {u0}")
    tau = grid.tau
    a = u0 / math.sqrt(2.0)
    ux = a / np.cosh(tau + t_sep) * np.exp(1j * d_omega * tau)
    uy = a / np.cosh(tau - t_sep) * np.exp(-1j * d_omega * tau)
    return PolarizedField(grid, ux, uy)
