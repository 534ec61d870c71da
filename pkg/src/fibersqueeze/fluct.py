"""Linearized fluctuation dynamics along a stored classical trajectory.

Forward propagation integrates the linearization of the classical system
around the stored solution: writing the coefficient fields

    alpha_x = 2A|U_x|^2 + B|U_y|^2        beta_x  = A U_x^2 + C U_y^2
    gamma_x = 2C U_x* U_y + B U_x U_y*    delta   = B U_x U_y

(and the x<->y counterparts), a perturbation (v_x, v_y) evolves as

    dv_x/dz = [linear part, same as classical] + i(alpha_x v_x + beta_x v_x*
              + gamma_x v_y + delta v_y*)

with conjugate terms making each substep an R-linear (not C-linear) map.
Every substep is represented explicitly as v -> M v + K v* in 2x2 block form;
one split step composes a spectral half-step, a degree-4 Taylor expansion of
exp(h P) with P frozen at the stored nonlinear-substep midpoint field, and a
second spectral half-step.

Backpropagation applies, in reverse order, the exact transpose of each
forward substep with respect to the real inner product

    <a, v> = Re integral (a_x* v_x + a_y* v_y) d tau,

which equals the four-component pairing
(1/2) integral (f_x v_x* + f_x* v_x + f_y v_y* + f_y* v_y) d tau used for all
measurements.  Spectral multipliers are unitary, so their transpose is the
conjugate multiplier; the block operator transposes by conjugating the
C-linear coefficients and exchanging the cross blocks.  This makes the
duality  <B(f), v> = <f, F(v)>  hold to round-off for every trajectory, which
every measurement formula downstream relies on.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import InvalidArgumentError, InvalidParameterError, NumericalBlowupError
from .lattice import TemporalGrid, _as_frozen_complex
from .nlse import Trajectory, linear_substep_phase

__all__ = [
    "AdjointField",
    "PerturbationField",
    "inner_product",
    "propagate_fluctuation",
    "propagate_fluctuation_many",
    "backpropagate_adjoint",
    "backpropagate_adjoint_many",
    "forward_stack",
    "backward_stack",
]

# Degree of the Taylor expansion of the frozen-coefficient nonlinear substep.
# Degree 4 keeps the substep well inside the splitting error; it also bounds
# how far the step deviates from the exact symplectic exp(hP), which controls
# the imaginary residue of correlation numerators.
TAYLOR_DEGREE = 4

# Stacks are processed in fixed-size chunks so per-step operator construction
# amortizes while results stay independent of how work is split over workers.
FLUCT_CHUNK = 16

_GUARD_INTERVAL = 25
_GUARD_FACTOR = 1.0e6


@dataclass(frozen=True)
class AdjointField:
    """Stored components (u^A_x, u^A_y) of the adjoint four-vector.

    The full vector is (f_x, f_x*, f_y, f_y*); the conjugate components are
    never stored, always derived, so conjugate pairing is structural.
    """

    grid: TemporalGrid
    fx: np.ndarray
    fy: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "fx", _as_frozen_complex(self.fx, self.grid.n_points, "fx"))
        object.__setattr__(self, "fy", _as_frozen_complex(self.fy, self.grid.n_points, "fy"))

    def stack(self) -> np.ndarray:
        return np.stack([self.fx, self.fy])

    def norm2(self) -> float:
        """Integral of |f_x|^2 + |f_y|^2 (half the four-component sum)."""
        return float(
            self.grid.d_tau
            * (np.sum(self.fx.real**2 + self.fx.imag**2)
               + np.sum(self.fy.real**2 + self.fy.imag**2))
        )


@dataclass(frozen=True)
class PerturbationField:
    """c-number test realization standing in for the fluctuation operators."""

    grid: TemporalGrid
    vx: np.ndarray
    vy: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "vx", _as_frozen_complex(self.vx, self.grid.n_points, "vx"))
        object.__setattr__(self, "vy", _as_frozen_complex(self.vy, self.grid.n_points, "vy"))

    def stack(self) -> np.ndarray:
        return np.stack([self.vx, self.vy])

    def norm2(self) -> float:
        return float(
            self.grid.d_tau
            * (np.sum(self.vx.real**2 + self.vx.imag**2)
               + np.sum(self.vy.real**2 + self.vy.imag**2))
        )


def inner_product(a: AdjointField, v: PerturbationField) -> complex:
    """Pairing (1/2) integral (f_x v_x* + f_x* v_x + f_y v_y* + f_y* v_y) d tau.

    For the stored conjugate-paired layout the integrand is elementwise
    z + conj(z), so the result is real to the last bit; the complex value is
    returned for interface uniformity and callers asserting realness should
    allow |imag| < 1e-10.
    """
    if a.grid != v.grid:
        raise InvalidArgumentError("adjoint and perturbation fields live on different grids")
    s = np.sum(a.fx * np.conj(v.vx) + np.conj(a.fx) * v.vx
               + a.fy * np.conj(v.vy) + np.conj(a.fy) * v.vy)
    return complex(0.5 * a.grid.d_tau * s)


# -- per-step block operators ------------------------------------------------


class _BlockOp:
    """R-linear map on (v_x, v_y): w_i = sum_j (m_ij v_j + k_ij conj(v_j))."""

    __slots__ = ("mxx", "kxx", "mxy", "kxy", "myx", "kyx", "myy", "kyy")

    def __init__(self, mxx, kxx, mxy, kxy, myx, kyx, myy, kyy):
        self.mxx, self.kxx, self.mxy, self.kxy = mxx, kxx, mxy, kxy
        self.myx, self.kyx, self.myy, self.kyy = myx, kyx, myy, kyy


def _nl_generator(mid: np.ndarray, a: float, b: float, c: float) -> _BlockOp:
    """Generator P of the linearized nonlinear substep at a frozen field."""
    ux, uy = mid
    ix = ux.real**2 + ux.imag**2
    iy = uy.real**2 + uy.imag**2
    alpha_x = 2.0 * a * ix + b * iy
    alpha_y = 2.0 * a * iy + b * ix
    ux2 = ux * ux
    uy2 = uy * uy
    beta_x = a * ux2 + c * uy2
    beta_y = a * uy2 + c * ux2
    xc_y = np.conj(ux) * uy  # U_x* U_y
    gamma_x = 2.0 * c * xc_y + b * np.conj(xc_y)
    gamma_y = 2.0 * c * np.conj(xc_y) + b * xc_y
    delta = b * ux * uy
    return _BlockOp(
        1j * alpha_x, 1j * beta_x, 1j * gamma_x, 1j * delta,
        1j * gamma_y, 1j * delta, 1j * alpha_y, 1j * beta_y,
    )


def _compose(p: _BlockOp, t: _BlockOp) -> _BlockOp:
    """Block composition p after t, with conj(v) threading through the k blocks."""
    return _BlockOp(
        p.mxx * t.mxx + p.kxx * np.conj(t.kxx) + p.mxy * t.myx + p.kxy * np.conj(t.kyx),
        p.mxx * t.kxx + p.kxx * np.conj(t.mxx) + p.mxy * t.kyx + p.kxy * np.conj(t.myx),
        p.mxx * t.mxy + p.kxx * np.conj(t.kxy) + p.mxy * t.myy + p.kxy * np.conj(t.kyy),
        p.mxx * t.kxy + p.kxx * np.conj(t.mxy) + p.mxy * t.kyy + p.kxy * np.conj(t.myy),
        p.myx * t.mxx + p.kyx * np.conj(t.kxx) + p.myy * t.myx + p.kyy * np.conj(t.kyx),
        p.myx * t.kxx + p.kyx * np.conj(t.mxx) + p.myy * t.kyx + p.kyy * np.conj(t.myx),
        p.myx * t.mxy + p.kyx * np.conj(t.kxy) + p.myy * t.myy + p.kyy * np.conj(t.kyy),
        p.myx * t.kxy + p.kyx * np.conj(t.mxy) + p.myy * t.kyy + p.kyy * np.conj(t.myy),
    )


def _scale_plus_identity(op: _BlockOp, s: float) -> _BlockOp:
    return _BlockOp(
        1.0 + s * op.mxx, s * op.kxx, s * op.mxy, s * op.kxy,
        s * op.myx, s * op.kyx, 1.0 + s * op.myy, s * op.kyy,
    )


def _taylor_step(p: _BlockOp, h: float, degree: int = TAYLOR_DEGREE) -> _BlockOp:
    """Horner form of I + hP + ... + (hP)^degree / degree! as a block operator."""
    t = _scale_plus_identity(p, h / degree)
    for j in range(degree - 1, 0, -1):
        t = _scale_plus_identity(_compose(p, t), h / j)
    return t


def _step_block(traj: Trajectory, k: int) -> _BlockOp:
    prof = traj.profile
    gen = _nl_generator(traj.midfield_array(k), prof.a_coef, prof.b_coef, prof.c_coef)
    return _taylor_step(gen, traj.d_zeta)


def _apply_block(op: _BlockOp, v: np.ndarray) -> np.ndarray:
    vx = v[..., 0, :]
    vy = v[..., 1, :]
    cvx = np.conj(vx)
    cvy = np.conj(vy)
    wx = op.mxx * vx + op.kxx * cvx + op.mxy * vy + op.kxy * cvy
    wy = op.myx * vx + op.kyx * cvx + op.myy * vy + op.kyy * cvy
    return np.stack([wx, wy], axis=-2)


def _apply_block_transpose(op: _BlockOp, v: np.ndarray) -> np.ndarray:
    # Real transpose of v -> m v + k conj(v) is a -> conj(m) a + k conj(a);
    # cross blocks swap.
    vx = v[..., 0, :]
    vy = v[..., 1, :]
    cvx = np.conj(vx)
    cvy = np.conj(vy)
    wx = np.conj(op.mxx) * vx + op.kxx * cvx + np.conj(op.myx) * vy + op.kyx * cvy
    wy = np.conj(op.mxy) * vx + op.kxy * cvx + np.conj(op.myy) * vy + op.kyy * cvy
    return np.stack([wx, wy], axis=-2)


# -- sweeps -------------------------------------------------------------------


def _spectral_apply(v: np.ndarray, phase: np.ndarray, conjugate: bool) -> np.ndarray:
    mult = np.exp(1j * phase)
    if conjugate:
        mult = np.conj(mult)
    return np.fft.ifft(mult * np.fft.fft(v, axis=-1), axis=-1)


def _guard(stack: np.ndarray, peak0: float, k: int) -> None:
    peak = float(np.max(stack.real**2 + stack.imag**2))
    if not math.isfinite(peak) or (peak0 > 0 and peak > _GUARD_FACTOR * peak0):
        raise NumericalBlowupError(
            f"fluctuation field blew up at step {k} (peak {peak:.3e})", step=k
        )


def _sweep(stack: np.ndarray, traj: Trajectory, *, backward: bool, n: int) -> np.ndarray:
    """Apply the linearized flow over steps [0, n) (or its exact adjoint).

    Adjacent spectral half-steps of consecutive split steps are fused into a
    single multiplier; the backward pass fuses the same pairs so that every
    fused forward factor has its exact conjugate counterpart.
    """
    grid = traj.grid
    h = traj.d_zeta
    omega = grid.omega
    omega2 = omega**2
    prof = traj.profile

    def p1(k):
        return linear_substep_phase(omega, omega2, prof, (k + 0.25) * h, 0.5 * h)

    def p2(k):
        return linear_substep_phase(omega, omega2, prof, (k + 0.75) * h, 0.5 * h)

    peak0 = float(np.max(stack.real**2 + stack.imag**2))
    if backward:
        stack = _spectral_apply(stack, p2(n - 1), conjugate=True)
        for k in range(n - 1, -1, -1):
            stack = _apply_block_transpose(_step_block(traj, k), stack)
            if k > 0:
                stack = _spectral_apply(stack, p2(k - 1) + p1(k), conjugate=True)
            if k % _GUARD_INTERVAL == 0:
                _guard(stack, peak0, k)
        stack = _spectral_apply(stack, p1(0), conjugate=True)
    else:
        stack = _spectral_apply(stack, p1(0), conjugate=False)
        for k in range(n):
            stack = _apply_block(_step_block(traj, k), stack)
            if k + 1 < n:
                stack = _spectral_apply(stack, p2(k) + p1(k + 1), conjugate=False)
            if k % _GUARD_INTERVAL == 0:
                _guard(stack, peak0, k)
        stack = _spectral_apply(stack, p2(n - 1), conjugate=False)
    return stack


def _check_steps(traj: Trajectory, n: int | None) -> int:
    if n is None:
        return traj.n_steps
    if not 0 <= n <= traj.n_steps:
        raise InvalidParameterError(
            f"from_step {n} outside [0, {traj.n_steps}]"
        )
    return n


def forward_stack(traj: Trajectory, stack: np.ndarray, upto_step: int | None = None) -> np.ndarray:
    """Linearized flow applied to a (S, 2, n_points) stack; advanced interface."""
    n = _check_steps(traj, upto_step)
    if n == 0:
        return stack.astype(np.complex128, copy=True)
    return _sweep(stack.astype(np.complex128, copy=False), traj, backward=False, n=n)


def backward_stack(traj: Trajectory, stack: np.ndarray, from_step: int | None = None) -> np.ndarray:
    """Exact discrete adjoint applied to a stack, from plane ``from_step`` to 0."""
    n = _check_steps(traj, from_step)
    if n == 0:
        return stack.astype(np.complex128, copy=True)
    return _sweep(stack.astype(np.complex128, copy=False), traj, backward=True, n=n)


def _check_grid(grid: TemporalGrid, traj: Trajectory) -> None:
    if grid != traj.grid:
        raise InvalidArgumentError("field grid does not match trajectory grid")


def _chunked(stacks: np.ndarray, traj: Trajectory, backward: bool, n_plane: int | None):
    out = np.empty_like(stacks)
    fn = backward_stack if backward else forward_stack
    for lo in range(0, stacks.shape[0], FLUCT_CHUNK):
        hi = min(lo + FLUCT_CHUNK, stacks.shape[0])
        out[lo:hi] = fn(traj, stacks[lo:hi], n_plane)
    return out


def propagate_fluctuation(v0: PerturbationField, traj: Trajectory) -> PerturbationField:
    """Propagate a perturbation from zeta = 0 to L along the trajectory."""
    _check_grid(v0.grid, traj)
    out = forward_stack(traj, v0.stack()[None])
    return PerturbationField(v0.grid, out[0, 0], out[0, 1])


def propagate_fluctuation_many(
    fields: Sequence[PerturbationField], traj: Trajectory
) -> list[PerturbationField]:
    for f in fields:
        _check_grid(f.grid, traj)
    if not fields:
        return []
    out = _chunked(np.stack([f.stack() for f in fields]), traj, backward=False, n_plane=None)
    return [PerturbationField(traj.grid, row[0], row[1]) for row in out]


def backpropagate_adjoint(
    fL: AdjointField, traj: Trajectory, *, from_step: int | None = None
) -> AdjointField:
    """Backpropagate an adjoint field from plane ``from_step`` (default L) to 0.

    Implemented as the exact discrete adjoint of :func:`propagate_fluctuation`
    restricted to the same steps, so the conservation law
    <B(f), v> = <f, F(v)> holds to round-off.
    """
    _check_grid(fL.grid, traj)
    out = backward_stack(traj, fL.stack()[None], from_step)
    return AdjointField(fL.grid, out[0, 0], out[0, 1])


def backpropagate_adjoint_many(
    fields: Sequence[AdjointField], traj: Trajectory, *, from_step: int | None = None
) -> list[AdjointField]:
    for f in fields:
        _check_grid(f.grid, traj)
    if not fields:
        return []
    out = _chunked(np.stack([f.stack() for f in fields]), traj, backward=True, n_plane=from_step)
    return [AdjointField(traj.grid, row[0], row[1]) for row in out]
