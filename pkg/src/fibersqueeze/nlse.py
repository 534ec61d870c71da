"""Classical split-step spectral propagator for the coupled two-polarization
nonlinear Schroedinger system.

The equations integrated are

    dU_x/dz + b1(z) dU_x/dt = i D(z)/2 d2U_x/dt2 + i b(z) U_x
                              + i (A|U_x|^2 + B|U_y|^2) U_x + i C U_y^2 conj(U_x)

with the y-equation obtained by swapping x and y and flipping the signs of the
b1 and b terms.  Each step applies a symmetric splitting: spectral half-step
(dispersion, birefringence, group delay), full nonlinear step, spectral
half-step, with the zeta-dependent coefficients evaluated at the substep
midpoints.  For C = 0 the nonlinear substep is an exact phase rotation; for
C != 0 it is integrated with a classical fourth-order Runge-Kutta scheme,
sub-stepped so the internal step stays at or below 1e-3.

The resulting :class:`Trajectory` stores the field at every step boundary plus
the nonlinear-substep midpoint fields that the fluctuation engine consumes.
An optional checkpoint stride trades memory for forward recomputation.
"""

from __future__ import annotations

import json
import math
import struct
from typing import Iterator

import numpy as np

from .errors import InvalidParameterError, NumericalBlowupError
from .lattice import FiberProfile, PolarizedField, TemporalGrid, monotone_spectrum

__all__ = [
    "Trajectory",
    "propagate_classical",
    "default_step_count",
    "output_spectrum",
    "split_spectra",
    "save_trajectory",
    "load_trajectory",
    "save_field_csv",
    "linear_substep_phase",
]

STEPS_PER_UNIT_LENGTH = 200.0
BLOWUP_INTENSITY_FACTOR = 1.0e6
RK4_SUBSTEP_TARGET = 1.0e-3

TRAJECTORY_MAGIC = b"VSFTRAJ1"


def default_step_count(length: float) -> int:
    """ceil(200 * L): resolves modulation periods of ~0.8 with >=160 steps each."""
    return max(1, math.ceil(STEPS_PER_UNIT_LENGTH * length))


def linear_substep_phase(
    omega: np.ndarray, omega2: np.ndarray, profile: FiberProfile, zeta: float, s: float
) -> np.ndarray:
    """Phase of the spectral multiplier exp(i*phase) for a linear substep.

    Rows are (x, y).  The x row implements -b1*Omega - D/2*Omega^2 + b over a
    substep of length ``s``; the y row flips the signs of the b1 and b terms.
    Shared with the fluctuation engine, whose linear parts are identical.
    """
    d = profile.dispersion(zeta)
    b = profile.birefringence(zeta)
    b1 = profile.group_delay(zeta)
    disp = -0.5 * d * omega2
    return np.stack([s * (disp - b1 * omega + b), s * (disp + b1 * omega - b)])


def _nl_rhs(state: np.ndarray, a: float, b: float, c: float) -> np.ndarray:
    ux, uy = state
    ix = ux.real * ux.real + ux.imag * ux.imag
    iy = uy.real * uy.real + uy.imag * uy.imag
    fx = 1j * ((a * ix + b * iy) * ux + c * (uy * uy) * np.conj(ux))
    fy = 1j * ((a * iy + b * ix) * uy + c * (ux * ux) * np.conj(uy))
    return np.stack([fx, fy])


def _rk4_substeps(state: np.ndarray, h: float, n_sub: int, a: float, b: float, c: float):
    """Integrate the nonlinear substep ODE over h with n_sub RK4 steps.

    Returns (end_state, states_after_each_substep) so the caller can pick the
    midpoint.  n_sub must be even.
    """
    hs = h / n_sub
    mid = None
    for j in range(n_sub):
        k1 = _nl_rhs(state, a, b, c)
        k2 = _nl_rhs(state + 0.5 * hs * k1, a, b, c)
        k3 = _nl_rhs(state + 0.5 * hs * k2, a, b, c)
        k4 = _nl_rhs(state + hs * k3, a, b, c)
        state = state + (hs / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if j + 1 == n_sub // 2:
            mid = state.copy()
    return state, mid


def _nonlinear_full_step(state: np.ndarray, h: float, profile: FiberProfile, n_sub: int):
    """Advance the nonlinear substep by h; also return the field at h/2.

    With C = 0 the moduli are invariant and the substep is an exact phase
    rotation; the midpoint is the half-phase rotation.
    """
    a, b, c = profile.a_coef, profile.b_coef, profile.c_coef
    if c == 0.0:
        ix = state[0].real ** 2 + state[0].imag ** 2
        iy = state[1].real ** 2 + state[1].imag ** 2
        phase = np.stack([a * ix + b * iy, a * iy + b * ix])
        half = np.exp((0.5j * h) * phase)
        mid = state * half
        return mid * half, mid
    return _rk4_substeps(state, h, n_sub, a, b, c)


def _rk4_substep_count(h: float) -> int:
    # Even so the ODE midpoint falls on a substep boundary.
    return 2 * max(1, math.ceil(h / (2.0 * RK4_SUBSTEP_TARGET)))


class _Stepper:
    """Shared single-step kernel for propagation and checkpoint recomputation."""

    def __init__(self, grid: TemporalGrid, profile: FiberProfile, n_steps: int):
        self.grid = grid
        self.profile = profile
        self.n_steps = n_steps
        self.h = profile.length / n_steps
        self.omega = grid.omega
        self.omega2 = grid.omega ** 2
        self.n_sub = _rk4_substep_count(self.h)

    def step(self, state: np.ndarray, k: int):
        """One symmetric split step from boundary k to k+1.

        Returns (new_state, midfield) where midfield is the classical field at
        the center of the nonlinear substep.
        """
        z0 = k * self.h
        p1 = linear_substep_phase(self.omega, self.omega2, self.profile, z0 + 0.25 * self.h, 0.5 * self.h)
        state = np.fft.ifft(np.exp(1j * p1) * np.fft.fft(state, axis=-1), axis=-1)
        state, mid = _nonlinear_full_step(state, self.h, self.profile, self.n_sub)
        p2 = linear_substep_phase(self.omega, self.omega2, self.profile, z0 + 0.75 * self.h, 0.5 * self.h)
        state = np.fft.ifft(np.exp(1j * p2) * np.fft.fft(state, axis=-1), axis=-1)
        return state, mid


class Trajectory:
    """Classical field history over [0, L], immutable once constructed.

    ``snapshot(k)`` returns the field at step boundary k (0 <= k <= n_steps);
    ``midfield_array(k)`` returns the field at the nonlinear-substep midpoint
    of step k, which is the coefficient source for the linearized fluctuation
    dynamics.  With ``checkpoint_stride > 1`` only every stride-th boundary is
    stored and everything else is recomputed forward one segment at a time.
    """

    def __init__(self, grid, profile, n_steps, boundaries, midfields, checkpoint_stride):
        self.grid = grid
        self.profile = profile
        self.n_steps = int(n_steps)
        self.d_zeta = profile.length / self.n_steps
        self.checkpoint_stride = int(checkpoint_stride)
        self._boundaries = boundaries  # store-all: (n+1,2,N); strided: checkpoints
        self._midfields = midfields  # store-all: (n,2,N); strided: None
        self._stepper = _Stepper(grid, profile, self.n_steps)
        self._segment = None  # (seg_index, boundaries, midfields)
        for arr in (boundaries, midfields):
            if arr is not None:
                arr.flags.writeable = False

    @property
    def store_all(self) -> bool:
        return self.checkpoint_stride == 1

    @property
    def descriptor(self) -> dict:
        d = dict(self.profile.descriptor)
        d.update(
            n_steps=self.n_steps,
            d_zeta=self.d_zeta,
            n_points=self.grid.n_points,
            tau_min=self.grid.tau_min,
            tau_max=self.grid.tau_max,
        )
        return d

    # -- storage access ----------------------------------------------------

    def _checkpoint_row(self, k: int):
        stride = self.checkpoint_stride
        if k == self.n_steps:
            return self._boundaries[-1]
        if k % stride == 0:
            return self._boundaries[k // stride]
        return None

    def _ensure_segment(self, seg: int):
        """Recompute boundary/midpoint fields for one checkpoint segment."""
        if self._segment is not None and self._segment[0] == seg:
            return self._segment
        stride = self.checkpoint_stride
        start = seg * stride
        stop = min(start + stride, self.n_steps)
        state = self._boundaries[seg].copy()
        bnd = np.empty((stop - start + 1, 2, self.grid.n_points), dtype=np.complex128)
        mids = np.empty((stop - start, 2, self.grid.n_points), dtype=np.complex128)
        bnd[0] = state
        for j, k in enumerate(range(start, stop)):
            state, mid = self._stepper.step(state, k)
            bnd[j + 1] = state
            mids[j] = mid
        self._segment = (seg, bnd, mids)
        return self._segment

    def snapshot_array(self, k: int) -> np.ndarray:
        """(2, n_points) read-only field at step boundary k."""
        if not 0 <= k <= self.n_steps:
            raise InvalidParameterError(f"step index {k} outside [0, {self.n_steps}]")
        if self.store_all:
            return self._boundaries[k]
        row = self._checkpoint_row(k)
        if row is not None:
            return row
        seg, bnd, _ = self._ensure_segment(k // self.checkpoint_stride)
        return bnd[k - seg * self.checkpoint_stride]

    def midfield_array(self, k: int) -> np.ndarray:
        """(2, n_points) field at the nonlinear-substep center of step k."""
        if not 0 <= k < self.n_steps:
            raise InvalidParameterError(f"midfield index {k} outside [0, {self.n_steps})")
        if self.store_all:
            return self._midfields[k]
        seg, _, mids = self._ensure_segment(k // self.checkpoint_stride)
        return mids[k - seg * self.checkpoint_stride]

    def snapshot(self, k: int) -> PolarizedField:
        arr = self.snapshot_array(k)
        return PolarizedField(self.grid, arr[0], arr[1])

    @property
    def snapshots(self) -> tuple:
        """All boundary fields as PolarizedField values (convenience accessor)."""
        return tuple(self.snapshot(k) for k in range(self.n_steps + 1))

    def final_array(self) -> np.ndarray:
        return self.snapshot_array(self.n_steps)

    @property
    def final_field(self) -> PolarizedField:
        return self.snapshot(self.n_steps)

    def iter_snapshot_arrays(self) -> Iterator[np.ndarray]:
        for k in range(self.n_steps + 1):
            yield self.snapshot_array(k)

    def energies(self) -> np.ndarray:
        """Field energy at every step boundary."""
        if self.store_all:
            mag2 = np.abs(self._boundaries) ** 2
            return self.grid.d_tau * mag2.sum(axis=(1, 2))
        return np.array(
            [self.grid.d_tau * float(np.sum(np.abs(self.snapshot_array(k)) ** 2))
             for k in range(self.n_steps + 1)]
        )

    def energy_final(self) -> float:
        return float(self.grid.d_tau * np.sum(np.abs(self.final_array()) ** 2))

    def intensity_map(self, max_rows: int = 512) -> tuple[np.ndarray, np.ndarray]:
        """(zeta values, intensity rows) subsampled to at most max_rows rows."""
        idx = np.unique(np.linspace(0, self.n_steps, min(max_rows, self.n_steps + 1)).astype(int))
        rows = np.stack(
            [np.sum(np.abs(self.snapshot_array(k)) ** 2, axis=0) for k in idx]
        )
        return idx * self.d_zeta, rows


def propagate_classical(
    f0: PolarizedField,
    profile: FiberProfile,
    n_steps: int | None = None,
    *,
    checkpoint_stride: int = 1,
) -> Trajectory:
    """Integrate the coupled system from zeta = 0 to L and record the history.

    Raises :class:`NumericalBlowupError` (naming the step) if any snapshot
    goes non-finite or its peak intensity exceeds 1e6 times the initial peak.
    """
    if profile.length <= 0:
        raise InvalidParameterError(f"profile length must be positive, got {profile.length}")
    if n_steps is None:
        n_steps = default_step_count(profile.length)
    if n_steps < 1:
        raise InvalidParameterError(f"n_steps must be >= 1, got {n_steps}")
    if checkpoint_stride < 1:
        raise InvalidParameterError(f"checkpoint_stride must be >= 1, got {checkpoint_stride}")

    grid = f0.grid
    stepper = _Stepper(grid, profile, n_steps)
    state = f0.stack()
    peak0 = float(np.max(state.real ** 2 + state.imag ** 2))
    guard = BLOWUP_INTENSITY_FACTOR * peak0

    store_all = checkpoint_stride == 1
    if store_all:
        boundaries = np.empty((n_steps + 1, 2, grid.n_points), dtype=np.complex128)
        midfields = np.empty((n_steps, 2, grid.n_points), dtype=np.complex128)
    else:
        n_ckpt = (n_steps - 1) // checkpoint_stride + 1  # indices 0, s, 2s, ... < n
        boundaries = np.empty((n_ckpt + 1, 2, grid.n_points), dtype=np.complex128)
        midfields = None
    boundaries[0] = state

    for k in range(n_steps):
        state, mid = stepper.step(state, k)
        peak = float(np.max(state.real ** 2 + state.imag ** 2))
        if not math.isfinite(peak) or (peak0 > 0 and peak > guard):
            raise NumericalBlowupError(
                f"field blew up at step {k} (peak intensity {peak:.3e})", step=k
            )
        if store_all:
            boundaries[k + 1] = state
            midfields[k] = mid
        else:
            kk = k + 1
            if kk == n_steps:
                boundaries[-1] = state
            elif kk % checkpoint_stride == 0:
                boundaries[kk // checkpoint_stride] = state

    return Trajectory(grid, profile, n_steps, boundaries, midfields, checkpoint_stride)


def _spectrum_of(arr: np.ndarray, d_tau: float) -> np.ndarray:
    sp = np.fft.fft(arr, axis=-1) * d_tau
    return monotone_spectrum(np.sum(sp.real ** 2 + sp.imag ** 2, axis=0))


def output_spectrum(traj: Trajectory) -> np.ndarray:
    """Total output spectrum |F[U_x]|^2 + |F[U_y]|^2 at zeta = L, monotone ordering.

    The axis is ``traj.grid.omega_monotone``; the transform is normalized by
    d_tau so that the integral over Omega equals 2*pi times the field energy.
    """
    return _spectrum_of(traj.final_array(), traj.grid.d_tau)


def split_spectra(traj: Trajectory, split_at: float = 0.0) -> tuple[np.ndarray, np.ndarray]:
    """Spectra of the two output pulses separated by a step mask at ``split_at``.

    The first spectrum comes from the field masked by 1 - H(tau - split_at)
    and the second from the field masked by H(tau - split_at); H(0) = 1.
    """
    final = traj.final_array()
    mask2 = traj.grid.tau >= split_at
    d_tau = traj.grid.d_tau
    return _spectrum_of(final * ~mask2, d_tau), _spectrum_of(final * mask2, d_tau)


# -- file formats -----------------------------------------------------------


def save_trajectory(traj: Trajectory, path) -> None:
    """Write the snapshot history as little-endian complex64.

    Layout: magic, version(u32), n_points(u32), n_steps(u32), tau_min(f64),
    tau_max(f64), d_zeta(f64), descriptor-JSON (u32 length + UTF-8 bytes),
    then n_steps+1 snapshots, each U_x then U_y as n_points complex64 values.
    """
    desc = json.dumps(traj.descriptor, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(TRAJECTORY_MAGIC)
        fh.write(struct.pack("<III", 1, traj.grid.n_points, traj.n_steps))
        fh.write(struct.pack("<ddd", traj.grid.tau_min, traj.grid.tau_max, traj.d_zeta))
        fh.write(struct.pack("<I", len(desc)))
        fh.write(desc)
        for arr in traj.iter_snapshot_arrays():
            fh.write(np.ascontiguousarray(arr.astype("<c8")).tobytes())


def load_trajectory(path) -> dict:
    """Read a trajectory file; returns grid, descriptor and snapshot stack.

    Snapshots come back as complex128 promoted from the stored complex64, so
    a loaded file is for inspection/interchange, not for resuming
    fluctuation propagation at full precision.
    """
    with open(path, "rb") as fh:
        magic = fh.read(8)
        if magic != TRAJECTORY_MAGIC:
            raise InvalidParameterError(f"not a trajectory file (magic {magic!r})")
        version, n_points, n_steps = struct.unpack("<III", fh.read(12))
        if version != 1:
            raise InvalidParameterError(f"unsupported trajectory version {version}")
        tau_min, tau_max, d_zeta = struct.unpack("<ddd", fh.read(24))
        (desc_len,) = struct.unpack("<I", fh.read(4))
        descriptor = json.loads(fh.read(desc_len).decode("utf-8"))
        count = (n_steps + 1) * 2 * n_points
        data = np.frombuffer(fh.read(count * 8), dtype="<c8", count=count)
    snapshots = data.reshape(n_steps + 1, 2, n_points).astype(np.complex128)
    return {
        "grid": TemporalGrid(n_points, tau_min, tau_max),
        "n_steps": n_steps,
        "d_zeta": d_zeta,
        "descriptor": descriptor,
        "snapshots": snapshots,
    }


def save_field_csv(field: PolarizedField, path) -> None:
    """CSV snapshot export: tau, Re/Im of both polarization components."""
    data = np.column_stack(
        [field.grid.tau, field.ux.real, field.ux.imag, field.uy.real, field.uy.imag]
    )
    np.savetxt(
        path,
        data,
        delimiter=",",
        header="tau,ux_re,ux_im,uy_re,uy_im",
        comments="",
        fmt="%.17e",
    )
