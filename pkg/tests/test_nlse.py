import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fibersqueeze import lattice as lat
from fibersqueeze import nlse
from fibersqueeze.errors import InvalidParameterError, NumericalBlowupError

from conftest import TWO_PI, linear_profile, small_grid


def test_manakov_fundamental_soliton_stationary(soliton_trajectory):
    traj = soliton_trajectory
    i_in = np.sum(np.abs(traj.snapshot_array(0)) ** 2, axis=0)
    i_out = np.sum(np.abs(traj.final_array()) ** 2, axis=0)
    rms = float(np.sqrt(np.mean((i_out - i_in) ** 2)))
    assert rms < 1e-3


def test_zero_field_stays_zero():
    g = small_grid()
    zero = lat.PolarizedField(g, np.zeros(g.n_points, complex), np.zeros(g.n_points, complex))
    traj = nlse.propagate_classical(zero, lat.manakov_profile(1.0), 50)
    assert np.all(traj.final_array() == 0)
    assert np.all(nlse.output_spectrum(traj) == 0)
    i1, i2 = nlse.split_spectra(traj)
    assert np.all(i1 == 0) and np.all(i2 == 0)


@settings(max_examples=8, deadline=None)
@given(
    seed=st.integers(min_value=0, max_value=2**31),
    u0=st.floats(min_value=0.5, max_value=2.5),
    biref=st.booleans(),
)
def test_energy_conservation_property(seed, u0, biref):
    g = small_grid(128)
    rng = np.random.default_rng(seed)
    base = lat.make_initial_single(g, u0)
    noise = 0.05 * (rng.standard_normal((2, 128)) + 1j * rng.standard_normal((2, 128)))
    f0 = lat.PolarizedField(g, base.ux + noise[0], base.uy + noise[1])
    if biref:
        prof = lat.birefringent_profile(0.5, b=5.0, b1=0.5,
                                        d_mod=lat.ModulationSpec("sine", 0.9, 0.2))
    else:
        prof = lat.manakov_profile(0.5, lat.ModulationSpec("sine", 1.3, 0.2))
    traj = nlse.propagate_classical(f0, prof, 120)
    e = traj.energies()
    assert np.max(np.abs(e / e[0] - 1.0)) < 1e-8


def test_linear_fiber_spectrum_invariant(linear_trajectory):
    traj = linear_trajectory
    spec_in = np.abs(np.fft.fft(traj.snapshot_array(0), axis=-1) * traj.grid.d_tau) ** 2
    spec_in = np.fft.fftshift(spec_in.sum(axis=0))
    spec_out = nlse.output_spectrum(traj)
    assert np.max(np.abs(spec_out - spec_in)) <= 1e-10 * spec_in.max()


def test_order_two_convergence():
    # endpoint error against a quarter-step reference falls ~4x per halving
    g = small_grid(256)
    f0 = lat.make_initial_single(g, 2.0)
    prof = lat.manakov_profile(1.0, lat.ModulationSpec("sine", 0.5, 0.2))
    ref = nlse.propagate_classical(f0, prof, 800).final_array()

    def err(n):
        out = nlse.propagate_classical(f0, prof, n).final_array()
        return float(np.sqrt(np.sum(np.abs(out - ref) ** 2)))

    ratio = err(100) / err(200)
    assert 3.5 < ratio < 4.5


def test_order_two_convergence_coherent_coupling():
    g = small_grid(128)
    f0 = lat.make_initial_pair(g, 1.5, 1.0, 0.0)
    prof = lat.birefringent_profile(0.5, b=5.0, b1=0.5)
    ref = nlse.propagate_classical(f0, prof, 400).final_array()

    def err(n):
        out = nlse.propagate_classical(f0, prof, n).final_array()
        return float(np.sqrt(np.sum(np.abs(out - ref) ** 2)))

    ratio = err(50) / err(100)
    assert 3.4 < ratio < 4.6


def test_manakov_rotation_invariance():
    # a global unitary polarization rotation commutes with propagation
    g = small_grid(128)
    f0 = lat.make_initial_pair(g, 1.5, 1.0, 0.5)
    prof = lat.manakov_profile(1.0, lat.ModulationSpec("sine", 1.3, 0.2))
    th, ph = 0.6, 0.3
    u = np.array([[math.cos(th), math.sin(th) * np.exp(1j * ph)],
                  [-math.sin(th) * np.exp(-1j * ph), math.cos(th)]])
    stack0 = f0.stack()
    rotated = lat.PolarizedField(g, *(u @ stack0))
    out_rot_first = nlse.propagate_classical(rotated, prof, 200).final_array()
    out_rot_last = u @ nlse.propagate_classical(f0, prof, 200).final_array()
    rms = np.sqrt(np.mean(np.abs(out_rot_first - out_rot_last) ** 2))
    assert rms < 1e-8


def test_nonlinear_substep_preserves_moduli_without_coupling():
    from fibersqueeze.nlse import _nonlinear_full_step

    g = small_grid(128)
    rng = np.random.default_rng(3)
    state = rng.standard_normal((2, 128)) + 1j * rng.standard_normal((2, 128))
    prof = lat.manakov_profile(1.0)
    out, mid = _nonlinear_full_step(state.copy(), 0.01, prof, 2)
    np.testing.assert_allclose(np.abs(out), np.abs(state), rtol=0, atol=1e-14)
    np.testing.assert_allclose(np.abs(mid), np.abs(state), rtol=0, atol=1e-14)


def test_split_spectra_parseval():
    g = small_grid(512)
    f0 = lat.make_initial_pair(g, 2.0, 3.0, 1.0)
    prof = lat.manakov_profile(1.0, lat.ModulationSpec("sine", 1.3, 0.2))
    traj = nlse.propagate_classical(f0, prof, 200)
    i1, i2 = nlse.split_spectra(traj, 0.0)
    i_sum = nlse.output_spectrum(traj)
    # masks are complementary: total energies agree even though spectra differ
    assert abs((i1 + i2).sum() / i_sum.sum() - 1.0) < 1e-8
    assert np.max(np.abs(i1 + i2 - i_sum)) > 1e-6 * i_sum.max()  # pointwise differs


def test_blowup_guard_reports_step():
    g = small_grid(128)
    # coherent-coupling RK4 at an absurd step size overflows quickly
    f0 = lat.make_initial_single(g, 60.0)
    prof = lat.birefringent_profile(50.0, b=0.0, b1=0.0)
    with pytest.raises(NumericalBlowupError) as exc:
        nlse.propagate_classical(f0, prof, 2)
    assert exc.value.step in (0, 1)


def test_preconditions():
    g = small_grid()
    f0 = lat.make_initial_single(g, 1.0)
    with pytest.raises(InvalidParameterError):
        nlse.propagate_classical(f0, lat.manakov_profile(0.0), 10)
    with pytest.raises(InvalidParameterError):
        nlse.propagate_classical(f0, lat.manakov_profile(1.0), 0)


def test_default_step_count():
    assert nlse.default_step_count(TWO_PI) == math.ceil(200 * TWO_PI)
    assert nlse.default_step_count(1e-6) == 1


def test_trajectory_contract(modulated_trajectory):
    traj = modulated_trajectory
    f0 = traj.snapshot(0)
    assert traj.n_steps * traj.d_zeta == pytest.approx(traj.profile.length, abs=1e-12)
    # snapshots[0] equals the supplied initial field
    expected = lat.make_initial_single(traj.grid, 2.0)
    np.testing.assert_array_equal(f0.ux, expected.ux)
    e = traj.energies()
    assert np.max(np.abs(e / e[0] - 1.0)) < 1e-8


def test_checkpoint_stride_matches_store_all():
    g = small_grid(128)
    f0 = lat.make_initial_single(g, 2.0)
    prof = lat.manakov_profile(1.0, lat.ModulationSpec("sine", 0.7, 0.2))
    full = nlse.propagate_classical(f0, prof, 90)
    strided = nlse.propagate_classical(f0, prof, 90, checkpoint_stride=16)
    for k in (0, 1, 17, 45, 89, 90):
        np.testing.assert_array_equal(full.snapshot_array(k), strided.snapshot_array(k))
    for k in (0, 16, 33, 89):
        np.testing.assert_array_equal(full.midfield_array(k), strided.midfield_array(k))


def test_trajectory_file_round_trip(tmp_path, linear_trajectory):
    path = tmp_path / "run.traj"
    nlse.save_trajectory(linear_trajectory, path)
    loaded = nlse.load_trajectory(path)
    assert loaded["n_steps"] == linear_trajectory.n_steps
    assert loaded["grid"] == linear_trajectory.grid
    # complex64 round trip: relative error at single precision
    orig = linear_trajectory.final_array()
    got = loaded["snapshots"][-1]
    assert np.max(np.abs(got - orig)) < 1e-6 * np.max(np.abs(orig))


def test_field_csv_export(tmp_path, linear_trajectory):
    path = tmp_path / "field.csv"
    nlse.save_field_csv(linear_trajectory.final_field, path)
    data = np.loadtxt(path, delimiter=",", skiprows=1)
    assert data.shape == (256, 5)
    np.testing.assert_allclose(
        data[:, 1] + 1j * data[:, 2], linear_trajectory.final_array()[0], atol=1e-12
    )
