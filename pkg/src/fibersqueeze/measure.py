"""Squeezing-ratio and photon-number-correlation measurements.

The homodyne measurement at the fiber output pairs an adjustable-phase local
oscillator (the output pulse itself) with the fluctuation field.  Conservation
of the adjoint pairing turns every output-plane measurement into an
input-plane integral against vacuum noise, so variances and covariances
reduce to overlaps of backpropagated adjoint fields:

    R(theta) = ||u^A(0)||^2 / ||u^A(L)||^2,        u^A(L) = U(L) e^{i theta}

    C_kn(t_i, t_j) = [ Re <u^A_k(0; t_i), u^A_n(0; t_j)> - Delta_kn(t_i, t_j) ]
                     / sqrt( n_k(t_i) n_n(t_j) )

where <f, g> = integral (f_x* g_x + f_y* g_y) d tau, n is the filtered-LO
norm at the output plane, and the shot-noise term Delta is the same overlap
evaluated with the un-backpropagated filtered LOs at zeta = L.  Computed in
the filter's own domain, Delta vanishes identically for disjoint slots and
for orthogonal polarization filters, and equals the slot norm on the
diagonal, which is the finite, filter-shape-correct realization of the
delta-function shot noise.

Slot backpropagations are independent jobs over one immutable trajectory;
they are processed in fixed-size chunks (see fluct.FLUCT_CHUNK) so results
are byte-identical for any worker count, and optionally distributed over a
process pool (fork start method; chunks are whole work units).
"""

from __future__ import annotations

import json
import math
import struct
import warnings
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import (
    EmptySlotWarning,
    InvalidArgumentError,
    InvalidParameterError,
    UndefinedMeasurementError,
)
from .fluct import FLUCT_CHUNK, AdjointField, backward_stack
from .nlse import Trajectory

__all__ = [
    "SlotSpec",
    "CorrelationMatrix",
    "ThetaOptimum",
    "make_lo",
    "squeezing_ratio",
    "optimize_theta",
    "filtered_lo",
    "correlation_matrix",
    "spectral_correlation_matrix",
    "squeezing_distance_curve",
    "quadrant_extrema",
    "save_matrix_text",
    "load_matrix_text",
    "save_matrix_binary",
    "load_matrix_binary",
]

THETA_SCAN_POINTS = 720
MASK_ENERGY_FACTOR = 1.0e-12

_KINDS = ("xx", "yy", "xy", "complete")
_DOMAINS = ("time", "frequency")
_POLS = ("x", "y", "both")


@dataclass(frozen=True)
class SlotSpec:
    """Bank of rectangular measurement slots in time or frequency.

    Slots are intervals |axis - center| < width/2; centers must be strictly
    increasing and non-overlapping (spacing >= width).  ``polarization``
    applies to standalone filtering; correlation kinds override it.
    """

    domain: str
    centers: tuple
    width: float
    polarization: str = "both"

    def __post_init__(self):
        if self.domain not in _DOMAINS:
            raise InvalidParameterError(f"slot domain must be one of {_DOMAINS}, got {self.domain!r}")
        if self.polarization not in _POLS:
            raise InvalidParameterError(f"polarization must be one of {_POLS}")
        centers = tuple(float(c) for c in self.centers)
        object.__setattr__(self, "centers", centers)
        if len(centers) == 0:
            raise InvalidParameterError("slot spec needs at least one center")
        if not self.width > 0:
            raise InvalidParameterError(f"slot width must be positive, got {self.width}")
        diffs = np.diff(centers)
        if len(centers) > 1 and not np.all(diffs > 0):
            raise InvalidParameterError("slot centers must be strictly increasing")
        if len(centers) > 1 and float(np.min(diffs)) < self.width - 1e-12:
            raise InvalidParameterError("slots overlap: center spacing must be >= width")

    @classmethod
    def contiguous(cls, domain: str, start: float, count: int, width: float,
                   polarization: str = "both") -> "SlotSpec":
        """``count`` touching slots of ``width`` covering [start, start + count*width]."""
        centers = tuple(start + width * (i + 0.5) for i in range(count))
        return cls(domain, centers, width, polarization)

    @property
    def n_slots(self) -> int:
        return len(self.centers)


class ThetaOptimum(NamedTuple):
    theta: float
    r_min: float
    flat: bool = False


@dataclass(frozen=True)
class CorrelationMatrix:
    """Real symmetric photon-number correlation matrix over slot centers.

    Two normalizations of the same measurement covariances are carried:

    * ``values`` divides the normally ordered covariance by the shot-noise
      normalizer sqrt(n_i n_j); this is the written-formula convention, whose
      single-full-slot diagonal reduces exactly to R - 1.
    * ``coefficients`` divides the full covariance by the measured standard
      deviations sqrt(Var_i Var_j); this is the bounded (|c| <= 1)
      correlation-coefficient map the figure regimes display, with the
      diagonal identically 1.

    ``mask[i, j]`` marks entries whose denominator involves a low-energy slot;
    masked entries are stored as 0 and excluded from extrema.  ``meta``
    records the trajectory descriptor, per-slot norms and diagnostic
    residues.
    """

    slots: SlotSpec
    kind: str
    values: np.ndarray
    mask: np.ndarray
    theta: float
    coefficients: np.ndarray | None = None
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        n = self.slots.n_slots

        def freeze(arr, dtype):
            a = np.asarray(arr, dtype=dtype)
            if a.shape != (n, n):
                raise InvalidParameterError("matrix shape does not match slot count")
            a = a.copy() if a.flags.writeable else a
            a.flags.writeable = False
            return a

        object.__setattr__(self, "values", freeze(self.values, np.float64))
        object.__setattr__(self, "mask", freeze(self.mask, bool))
        if self.coefficients is not None:
            object.__setattr__(self, "coefficients", freeze(self.coefficients, np.float64))

    def _array(self, which: str) -> np.ndarray:
        if which == "values":
            return self.values
        if which == "coefficients":
            if self.coefficients is None:
                raise UndefinedMeasurementError("matrix carries no coefficient map")
            return self.coefficients
        raise InvalidParameterError(f"unknown array selector {which!r}")

    def extrema(self, which: str = "values") -> tuple[float, float]:
        """(min, max) over unmasked entries of the selected array."""
        valid = ~self.mask
        if not valid.any():
            raise UndefinedMeasurementError("all entries are masked")
        vals = self._array(which)[valid]
        return float(vals.min()), float(vals.max())

    def extrema_locations(self, which: str = "values"):
        """((min, c_i, c_j), (max, c_i, c_j)) over unmasked entries."""
        valid = ~self.mask
        if not valid.any():
            raise UndefinedMeasurementError("all entries are masked")
        arr = self._array(which)
        imin = np.unravel_index(np.argmin(np.where(valid, arr, np.inf)), arr.shape)
        imax = np.unravel_index(np.argmax(np.where(valid, arr, -np.inf)), arr.shape)
        c = self.slots.centers
        return (
            (float(arr[imin]), c[imin[0]], c[imin[1]]),
            (float(arr[imax]), c[imax[0]], c[imax[1]]),
        )


def quadrant_extrema(
    matrix: CorrelationMatrix,
    split: float = 0.0,
    *,
    which: str = "coefficients",
    slot_mask: np.ndarray | None = None,
) -> dict:
    """Intrapulse / interpulse extrema relative to a split point on the slot axis.

    Intrapulse entries have both slot centers on the same side of ``split``;
    interpulse entries straddle it.  Masked entries are excluded, as are
    slots dropped by ``slot_mask`` (True keeps a slot) -- callers typically
    restrict to slots carrying appreciable pulse energy.
    """
    arr = matrix._array(which)
    c = np.asarray(matrix.slots.centers)
    side = c >= split
    same = side[:, None] == side[None, :]
    valid = ~matrix.mask
    if slot_mask is not None:
        keep = np.asarray(slot_mask, dtype=bool)
        valid = valid & np.outer(keep, keep)
    out = {}
    for name, region in (("intra", same), ("inter", ~same)):
        sel = valid & region
        if sel.any():
            vals = arr[sel]
            out[name] = (float(vals.min()), float(vals.max()))
        else:
            out[name] = (math.nan, math.nan)
    return out


# -- local oscillators --------------------------------------------------------


def make_lo(traj: Trajectory, theta: float) -> AdjointField:
    """Local oscillator: the output field with an adjustable global phase."""
    final = traj.final_array()
    phase = complex(math.cos(theta), math.sin(theta))
    return AdjointField(traj.grid, final[0] * phase, final[1] * phase)


def _pol_selector(polarization: str) -> tuple[bool, bool]:
    return polarization in ("x", "both"), polarization in ("y", "both")


def _filtered_stack_time(traj, theta, centers, width, polarization, plane_arr):
    """(S, 2, N) time-filtered LO stack plus per-slot norms and the Gram matrix.

    The Gram matrix (shot-noise overlaps) is computed from the masked time
    arrays, so disjoint windows give exact zeros.
    """
    grid = traj.grid
    tau = grid.tau
    keep_x, keep_y = _pol_selector(polarization)
    phase = complex(math.cos(theta), math.sin(theta))
    base = plane_arr * phase
    stack = np.zeros((len(centers), 2, grid.n_points), dtype=np.complex128)
    for i, c in enumerate(centers):
        window = np.abs(tau - c) < 0.5 * width
        if not window.any():
            warnings.warn(f"time slot at {c} does not intersect the grid", EmptySlotWarning)
            continue
        if keep_x:
            stack[i, 0] = base[0] * window
        if keep_y:
            stack[i, 1] = base[1] * window
    flat = stack.reshape(len(centers), -1)
    gram = grid.d_tau * (np.conj(flat) @ flat.T)
    return stack, gram


def _filtered_stack_frequency(traj, theta, centers, width, polarization, plane_arr):
    """Frequency-filtered LO stack; Gram computed in the spectral domain."""
    grid = traj.grid
    omega = grid.omega
    keep_x, keep_y = _pol_selector(polarization)
    phase = complex(math.cos(theta), math.sin(theta))
    spec = np.fft.fft(plane_arr * phase, axis=-1)
    spec_stack = np.zeros((len(centers), 2, grid.n_points), dtype=np.complex128)
    for i, c in enumerate(centers):
        window = np.abs(omega - c) < 0.5 * width
        if not window.any():
            warnings.warn(f"frequency slot at {c} does not intersect the spectral grid",
                          EmptySlotWarning)
            continue
        if keep_x:
            spec_stack[i, 0] = spec[0] * window
        if keep_y:
            spec_stack[i, 1] = spec[1] * window
    flat = spec_stack.reshape(len(centers), -1)
    gram = (grid.d_tau / grid.n_points) * (np.conj(flat) @ flat.T)
    stack = np.fft.ifft(spec_stack, axis=-1)
    return stack, gram


def _filtered_bank(traj, theta, slots: SlotSpec, polarization: str, plane_arr=None):
    if plane_arr is None:
        plane_arr = traj.final_array()
    if slots.domain == "time":
        stack, gram = _filtered_stack_time(traj, theta, slots.centers, slots.width,
                                           polarization, plane_arr)
    else:
        stack, gram = _filtered_stack_frequency(traj, theta, slots.centers, slots.width,
                                                polarization, plane_arr)
    norms = np.real(np.diag(gram)).copy()
    return stack, gram, norms


def filtered_lo(
    traj: Trajectory,
    theta: float,
    domain: str,
    center: float,
    width: float,
    polarization: str = "both",
) -> AdjointField:
    """Single filtered local oscillator at the output plane.

    Time domain multiplies the LO by the rectangular window; frequency domain
    applies the rectangular bandpass between transforms.  An empty slot warns
    and returns a zero field.
    """
    slots = SlotSpec(domain, (center,), width, polarization)
    stack, _, _ = _filtered_bank(traj, theta, slots, polarization)
    return AdjointField(traj.grid, stack[0, 0], stack[0, 1])


# -- squeezing ratio ----------------------------------------------------------


def _final_energy_checked(traj: Trajectory) -> float:
    e_out = traj.energy_final()
    if e_out <= 0.0:
        raise UndefinedMeasurementError("zero-energy output field: squeezing undefined")
    return e_out


def squeezing_ratio(traj: Trajectory, theta: float) -> float:
    """Variance of the homodyne measurement relative to coherent-state shot noise.

    R < 1 indicates squeezing along the LO phase ``theta``.
    """
    e_out = _final_energy_checked(traj)
    lo = make_lo(traj, theta)
    back = backward_stack(traj, lo.stack()[None])
    num = traj.grid.d_tau * float(np.sum(back.real**2 + back.imag**2))
    return num / e_out


def _theta_landscape(traj: Trajectory, from_step: int | None = None):
    """Coefficients of R(theta) = (a cos^2 + b sin^2 + 2 c sin cos) / E.

    Backpropagation is R-linear, so the two backpropagated fields B[U] and
    B[iU] span the whole theta family exactly.
    """
    plane = traj.n_steps if from_step is None else from_step
    out_arr = traj.snapshot_array(plane)
    e_out = traj.grid.d_tau * float(np.sum(np.abs(out_arr) ** 2))
    if e_out <= 0.0:
        raise UndefinedMeasurementError("zero-energy output field: squeezing undefined")
    stack = np.stack([out_arr, 1j * out_arr])
    back = backward_stack(traj, stack, plane)
    g1 = back[0].ravel()
    g2 = back[1].ravel()
    d_tau = traj.grid.d_tau
    a = d_tau * float(np.sum(g1.real**2 + g1.imag**2))
    b = d_tau * float(np.sum(g2.real**2 + g2.imag**2))
    c = d_tau * float(np.real(np.sum(np.conj(g1) * g2)))
    return a, b, c, e_out


def _scan_minimum(a: float, b: float, c: float, e_out: float) -> ThetaOptimum:
    """720-point scan of the exact landscape plus three-point parabolic refinement."""

    def r_of(theta):
        ct = math.cos(theta)
        st = math.sin(theta)
        return (a * ct * ct + b * st * st + 2.0 * c * st * ct) / e_out

    thetas = 2.0 * math.pi * np.arange(THETA_SCAN_POINTS) / THETA_SCAN_POINTS
    ct = np.cos(thetas)
    st = np.sin(thetas)
    rs = (a * ct * ct + b * st * st + 2.0 * c * st * ct) / e_out
    spread = float(rs.max() - rs.min())
    flat = spread < 1e-12 * max(1.0, float(rs.max()))
    j = int(np.argmin(rs))
    theta0 = float(thetas[j])
    if flat:
        return ThetaOptimum(theta0, float(rs[j]), True)
    step = 2.0 * math.pi / THETA_SCAN_POINTS
    r_m = r_of(theta0 - step)
    r_0 = rs[j]
    r_p = r_of(theta0 + step)
    denom = r_m - 2.0 * r_0 + r_p
    theta_ref = theta0 if denom <= 0 else theta0 + 0.5 * step * (r_m - r_p) / denom
    theta_ref %= 2.0 * math.pi
    return ThetaOptimum(float(theta_ref), float(r_of(theta_ref)), False)


def optimize_theta(traj: Trajectory) -> ThetaOptimum:
    """LO phase minimizing the squeezing ratio over [0, 2 pi).

    The landscape is evaluated exactly from two backpropagations (linearity in
    the LO), then scanned on a uniform 720-point grid and refined with a
    three-point parabola.  A flat landscape (linear fiber) is flagged.
    """
    return _scan_minimum(*_theta_landscape(traj))


def squeezing_distance_curve(traj: Trajectory, n_samples: int = 40) -> np.ndarray:
    """Best squeezing ratio versus propagation distance.

    Returns rows (zeta, theta_opt, r_min) at ~n_samples step boundaries.  All
    planes share one backward sweep: local-oscillator pairs are appended to
    the state as the sweep passes their plane, which keeps the cost near a
    single backpropagation.
    """
    n = traj.n_steps
    planes = np.unique(np.linspace(0, n, min(n_samples, n + 1)).astype(int))[::-1]
    d_tau = traj.grid.d_tau

    rows = []
    stack = np.zeros((0, 2, traj.grid.n_points), dtype=np.complex128)
    plane_list = []  # plane index per pair, parallel to stack pairs
    e_out = {}

    def flush_plane(p):
        arr = traj.snapshot_array(p)
        e = d_tau * float(np.sum(np.abs(arr) ** 2))
        e_out[p] = e
        return np.stack([arr, 1j * arr])

    # march planes from L down to 0, applying single-step adjoints in between
    cursor = int(planes[0])
    stack = np.concatenate([stack, flush_plane(cursor)])
    plane_list.append(cursor)
    next_i = 1
    for k in range(cursor - 1, -1, -1):
        stack = backward_stack(_SingleStepView(traj, k), stack, 1)
        if next_i < len(planes) and planes[next_i] == k:
            stack = np.concatenate([stack, flush_plane(k)])
            plane_list.append(k)
            next_i += 1

    for idx, p in enumerate(plane_list):
        g1 = stack[2 * idx]
        g2 = stack[2 * idx + 1]
        a = d_tau * float(np.sum(g1.real**2 + g1.imag**2))
        b = d_tau * float(np.sum(g2.real**2 + g2.imag**2))
        c = d_tau * float(np.real(np.sum(np.conj(g1) * g2)))
        opt = _scan_minimum(a, b, c, e_out[p])
        rows.append((p * traj.d_zeta, opt.theta, opt.r_min))
    rows.sort()
    return np.array(rows)


class _SingleStepView:
    """Adapter presenting step k of a trajectory as a one-step trajectory."""

    def __init__(self, traj: Trajectory, k: int):
        self._traj = traj
        self._k = k
        self.grid = traj.grid
        self.n_steps = 1
        self.d_zeta = traj.d_zeta
        self._shift = k * traj.d_zeta
        base = traj.profile
        # Shift the coefficient functions so step 0 of the view is step k.
        from .lattice import FiberProfile

        self.profile = FiberProfile(
            a_coef=base.a_coef,
            b_coef=base.b_coef,
            c_coef=base.c_coef,
            dispersion=lambda z: base.dispersion(z + self._shift),
            birefringence=lambda z: base.birefringence(z + self._shift),
            group_delay=lambda z: base.group_delay(z + self._shift),
            length=traj.d_zeta,
            descriptor=base.descriptor,
        )

    def midfield_array(self, k: int) -> np.ndarray:
        return self._traj.midfield_array(self._k + k)


# -- correlation matrices ------------------------------------------------------


_PARALLEL_TRAJ: Trajectory | None = None


def _parallel_worker(args):
    index, chunk = args
    return index, backward_stack(_PARALLEL_TRAJ, chunk)


def _backprop_stacks(traj: Trajectory, stack: np.ndarray, workers: int | None) -> np.ndarray:
    """Backpropagate (S,2,N) in fixed chunks, optionally over a fork pool.

    Chunk boundaries depend only on slot order, never on the worker count, so
    outputs are byte-identical however the chunks are scheduled.
    """
    chunks = [stack[lo:lo + FLUCT_CHUNK] for lo in range(0, stack.shape[0], FLUCT_CHUNK)]
    if workers is not None and workers > 1 and len(chunks) > 1:
        try:
            import multiprocessing as mp

            ctx = mp.get_context("fork")
        except ValueError:  # platform without fork: fall back to serial
            ctx = None
        if ctx is not None:
            global _PARALLEL_TRAJ
            _PARALLEL_TRAJ = traj
            try:
                with ctx.Pool(min(workers, len(chunks))) as pool:
                    results = pool.map(_parallel_worker, list(enumerate(chunks)))
            finally:
                _PARALLEL_TRAJ = None
            results.sort(key=lambda t: t[0])
            return np.concatenate([r[1] for r in results])
    return np.concatenate([backward_stack(traj, c) for c in chunks])


_KIND_POLS = {"xx": ("x", "x"), "yy": ("y", "y"), "xy": ("x", "y"),
              "complete": ("both", "both")}


def _correlation_impl(traj, theta, slots, kind, workers):
    if kind not in _KINDS:
        raise InvalidParameterError(f"kind must be one of {_KINDS}, got {kind!r}")
    grid = traj.grid
    resolution = grid.d_tau if slots.domain == "time" else grid.d_omega
    if slots.width < resolution:
        raise InvalidParameterError(
            f"slot width {slots.width} is below the grid resolution {resolution:.3e}"
        )
    e_out = _final_energy_checked(traj)
    row_pol, col_pol = _KIND_POLS[kind]

    row_stack, gram, row_norms = _filtered_bank(traj, theta, slots, row_pol)
    if col_pol == row_pol:
        col_stack, col_norms = row_stack, row_norms
        shot = np.real(gram)
    else:
        col_stack, _, col_norms = _filtered_bank(traj, theta, slots, col_pol)
        # Cross-polarization legs share no components, so every product in the
        # Gram is exactly zero; the time-domain form keeps that exact.
        flat_r = row_stack.reshape(slots.n_slots, -1)
        flat_c = col_stack.reshape(slots.n_slots, -1)
        shot = np.real(grid.d_tau * (np.conj(flat_r) @ flat_c.T))

    low = MASK_ENERGY_FACTOR * e_out
    row_low = row_norms < low
    col_low = col_norms < low
    mask = row_low[:, None] | col_low[None, :]
    mask = mask | mask.T
    if mask.all():
        raise UndefinedMeasurementError("all slots are below the energy threshold")

    if col_pol == row_pol:
        back_row = _backprop_stacks(traj, row_stack, workers)
        back_col = back_row
    else:
        both = np.concatenate([row_stack, col_stack])
        back = _backprop_stacks(traj, both, workers)
        back_row, back_col = back[: slots.n_slots], back[slots.n_slots:]

    flat_r = back_row.reshape(slots.n_slots, -1)
    flat_c = back_col.reshape(slots.n_slots, -1)
    overlap = grid.d_tau * (np.conj(flat_r) @ flat_c.T)
    covariance = np.real(overlap)
    numerator = covariance - shot
    imag_residue = float(np.max(np.abs(np.imag(overlap))))

    denom = np.sqrt(np.maximum(np.outer(row_norms, col_norms), 0.0))
    with np.errstate(divide="ignore", invalid="ignore"):
        values = np.where(mask, 0.0, numerator / np.where(denom > 0, denom, 1.0))
    values = 0.5 * (values + values.T)
    values[mask] = 0.0

    # Bounded correlation-coefficient map: same covariances normalized by the
    # measured variances (backpropagated-field norms).
    row_var = grid.d_tau * np.sum(flat_r.real**2 + flat_r.imag**2, axis=1)
    col_var = row_var if col_pol == row_pol else (
        grid.d_tau * np.sum(flat_c.real**2 + flat_c.imag**2, axis=1))
    var_den = np.sqrt(np.maximum(np.outer(row_var, col_var), 0.0))
    with np.errstate(divide="ignore", invalid="ignore"):
        coeff = np.where(mask | (var_den <= 0.0), 0.0, covariance / np.where(var_den > 0, var_den, 1.0))
    coeff = 0.5 * (coeff + coeff.T)
    coeff[mask] = 0.0

    meta = {
        "trajectory": traj.descriptor,
        "energy_out": e_out,
        "imag_residue": imag_residue,
        "imag_residue_rel": imag_residue / max(float(np.max(np.abs(numerator))), 1e-300),
        "slot_norms": np.maximum(row_norms, col_norms),
        "slot_norms_row": row_norms,
        "slot_norms_col": col_norms,
    }
    return CorrelationMatrix(slots, kind, values, mask, float(theta),
                             coefficients=coeff, meta=meta)


def correlation_matrix(
    traj: Trajectory,
    theta: float,
    slots: SlotSpec,
    kind: str = "complete",
    *,
    workers: int | None = None,
) -> CorrelationMatrix:
    """Time-domain photon-number correlation matrix over a slot bank.

    ``kind`` selects the polarization filters on the two measurement legs:
    xx, yy, xy, or complete (both polarizations per slot).  Callers normally
    pass the theta returned by :func:`optimize_theta`.  Entries whose slot
    norm falls below 1e-12 of the output energy are masked undefined; the
    matrix is symmetrized by averaging (i, j) with (j, i).
    """
    if slots.domain != "time":
        raise InvalidParameterError("correlation_matrix expects time-domain slots")
    return _correlation_impl(traj, theta, slots, kind, workers)


def spectral_correlation_matrix(
    traj: Trajectory,
    theta: float,
    slots: SlotSpec,
    kind: str = "complete",
    *,
    workers: int | None = None,
) -> CorrelationMatrix:
    """Frequency-domain counterpart of :func:`correlation_matrix`."""
    if slots.domain != "frequency":
        raise InvalidParameterError("spectral_correlation_matrix expects frequency-domain slots")
    return _correlation_impl(traj, theta, slots, kind, workers)


# -- file formats ---------------------------------------------------------------


_KIND_CODES = {k: i for i, k in enumerate(_KINDS)}
_DOMAIN_CODES = {d: i for i, d in enumerate(_DOMAINS)}
MATRIX_MAGIC = b"VSFCORR1"


def save_matrix_text(matrix: CorrelationMatrix, path) -> None:
    """Fixed-precision text format: commented header, value rows, coefficient rows."""
    n = matrix.slots.n_slots
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("# fibersqueeze correlation matrix v1\n")
        fh.write(f"# kind: {matrix.kind}\n")
        fh.write(f"# domain: {matrix.slots.domain}\n")
        fh.write(f"# theta: {matrix.theta!r}\n")
        fh.write(f"# width: {matrix.slots.width!r}\n")
        fh.write(f"# centers: {' '.join(repr(c) for c in matrix.slots.centers)}\n")
        for i in range(n):
            fh.write("# mask: " + "".join("1" if m else "0" for m in matrix.mask[i]) + "\n")
        fh.write("# block: values\n")
        for i in range(n):
            fh.write(" ".join(f"{v:.15e}" for v in matrix.values[i]) + "\n")
        if matrix.coefficients is not None:
            fh.write("# block: coefficients\n")
            for i in range(n):
                fh.write(" ".join(f"{v:.15e}" for v in matrix.coefficients[i]) + "\n")


def load_matrix_text(path) -> CorrelationMatrix:
    header: dict[str, str] = {}
    mask_rows = []
    blocks: dict[str, list] = {"values": []}
    current = "values"
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                body = line[1:].strip()
                if ":" in body:
                    key, _, val = body.partition(":")
                    key = key.strip()
                    if key == "mask":
                        mask_rows.append([ch == "1" for ch in val.strip()])
                    elif key == "block":
                        current = val.strip()
                        blocks.setdefault(current, [])
                    else:
                        header[key] = val.strip()
            else:
                blocks[current].append([float(tok) for tok in line.split()])
    slots = SlotSpec(
        header["domain"],
        tuple(float(t) for t in header["centers"].split()),
        float(header["width"]),
    )
    coeff = blocks.get("coefficients")
    return CorrelationMatrix(
        slots, header["kind"], np.array(blocks["values"]), np.array(mask_rows),
        float(header["theta"]),
        coefficients=np.array(coeff) if coeff else None,
    )


def save_matrix_binary(matrix: CorrelationMatrix, path) -> None:
    """Binary variant mirroring the trajectory snapshot format."""
    n = matrix.slots.n_slots
    meta = json.dumps(matrix.meta, sort_keys=True, default=_json_default).encode("utf-8")
    has_coeff = matrix.coefficients is not None
    with open(path, "wb") as fh:
        fh.write(MATRIX_MAGIC)
        fh.write(struct.pack("<IBBBI", 1, _KIND_CODES[matrix.kind],
                             _DOMAIN_CODES[matrix.slots.domain], int(has_coeff), n))
        fh.write(struct.pack("<dd", matrix.theta, matrix.slots.width))
        fh.write(np.asarray(matrix.slots.centers, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(matrix.mask, dtype=np.uint8).tobytes())
        fh.write(np.ascontiguousarray(matrix.values, dtype="<f8").tobytes())
        if has_coeff:
            fh.write(np.ascontiguousarray(matrix.coefficients, dtype="<f8").tobytes())
        fh.write(struct.pack("<I", len(meta)))
        fh.write(meta)


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    return str(obj)


def load_matrix_binary(path) -> CorrelationMatrix:
    with open(path, "rb") as fh:
        if fh.read(8) != MATRIX_MAGIC:
            raise InvalidParameterError("not a correlation-matrix file")
        version, kind_code, domain_code, has_coeff, n = struct.unpack("<IBBBI", fh.read(11))
        if version != 1:
            raise InvalidParameterError(f"unsupported matrix version {version}")
        theta, width = struct.unpack("<dd", fh.read(16))
        centers = np.frombuffer(fh.read(8 * n), dtype="<f8")
        mask = np.frombuffer(fh.read(n * n), dtype=np.uint8).reshape(n, n).astype(bool)
        values = np.frombuffer(fh.read(8 * n * n), dtype="<f8").reshape(n, n)
        coeff = None
        if has_coeff:
            coeff = np.frombuffer(fh.read(8 * n * n), dtype="<f8").reshape(n, n)
        (meta_len,) = struct.unpack("<I", fh.read(4))
        meta = json.loads(fh.read(meta_len).decode("utf-8"))
    slots = SlotSpec(_DOMAINS[domain_code], tuple(centers), width)
    return CorrelationMatrix(slots, _KINDS[kind_code], values, mask, theta,
                             coefficients=coeff, meta=meta)
