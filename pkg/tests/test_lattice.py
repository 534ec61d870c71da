import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fibersqueeze import lattice as lat
from fibersqueeze.errors import InvalidParameterError

from conftest import small_grid


def test_grid_invariants():
    g = lat.TemporalGrid(256, -20.0, 20.0)
    assert g.d_tau == pytest.approx(40.0 / 256)
    assert g.d_omega == pytest.approx(2.0 * math.pi / 40.0)
    assert np.all(np.diff(g.omega_monotone) > 0)
    # spectral bin spacing
    w = np.sort(g.omega)
    assert np.allclose(np.diff(w), g.d_omega)


@pytest.mark.parametrize("n", [0, 1, 4, 6, 100, 257])
def test_grid_rejects_bad_n_points(n):
    with pytest.raises(InvalidParameterError):
        lat.TemporalGrid(n, -1.0, 1.0)


def test_grid_rejects_bad_window():
    with pytest.raises(InvalidParameterError):
        lat.TemporalGrid(64, 1.0, 1.0)


@settings(max_examples=25, deadline=None)
@given(
    exp=st.integers(min_value=3, max_value=9),
    seed=st.integers(min_value=0, max_value=2**31),
)
def test_fft_round_trip(exp, seed):
    n = 2**exp
    g = lat.TemporalGrid(n, -10.0, 10.0)
    rng = np.random.default_rng(seed)
    u = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    back = np.fft.ifft(np.fft.fft(u))
    rel = np.sqrt(np.mean(np.abs(back - u) ** 2) / np.mean(np.abs(u) ** 2))
    assert rel < 1e-12
    assert g.omega.shape == (n,)


def test_single_input_values_and_symmetry():
    g = small_grid(512)
    f = lat.make_initial_single(g, 2.0)
    i0 = np.argmin(np.abs(g.tau))
    assert g.tau[i0] == 0.0
    assert f.ux[i0] == pytest.approx(math.sqrt(2.0))
    np.testing.assert_array_equal(f.ux, f.uy)


def test_single_input_energy_quadrature():
    # analytic: integral of sech^2 = 2, so E = 2 u0^2; the grid sum is the
    # periodic trapezoid rule, checked against numpy's trapezoid integration
    g = small_grid(1024)
    u0 = 2.0
    f = lat.make_initial_single(g, u0)
    e_grid = lat.field_energy(f)
    e_trapz = np.trapezoid(lat.field_intensity(f), g.tau)
    assert e_grid == pytest.approx(2.0 * u0**2, abs=1e-6)
    assert e_grid == pytest.approx(e_trapz, rel=1e-9)


def test_single_input_rejects_nonpositive_u0():
    g = small_grid()
    for bad in (0.0, -1.0):
        with pytest.raises(InvalidParameterError):
            lat.make_initial_single(g, bad)
        with pytest.raises(InvalidParameterError):
            lat.make_initial_pair(g, bad, 1.0, 0.0)


def test_pair_input_properties():
    g = small_grid(1024)
    f = lat.make_initial_pair(g, 2.0, 3.0, 1.0)
    # energy unchanged by offsets and phase ramps
    assert lat.field_energy(f) == pytest.approx(8.0, abs=1e-6)
    # intensity has two maxima near the pulse centers
    inten = lat.field_intensity(f)
    assert g.tau[np.argmax(np.abs(f.ux))] == pytest.approx(-3.0, abs=0.1)
    assert g.tau[np.argmax(np.abs(f.uy))] == pytest.approx(3.0, abs=0.1)
    assert inten[np.argmin(np.abs(g.tau))] < inten.max()


def test_pair_coincident_matches_single():
    g = small_grid()
    pair = lat.make_initial_pair(g, 2.0, 0.0, 0.0)
    single = lat.make_initial_single(g, 2.0)
    np.testing.assert_allclose(pair.ux, single.ux, atol=1e-15)
    np.testing.assert_allclose(pair.uy, single.uy, atol=1e-15)


def test_pair_mirror_symmetry():
    # with no frequency shift, U_y(tau) = U_x(-tau) up to grid indexing
    g = small_grid(512)
    f = lat.make_initial_pair(g, 2.0, 3.0, 0.0)
    n = g.n_points
    mirrored = f.ux[(n - np.arange(n)) % n]
    np.testing.assert_allclose(f.uy, mirrored, atol=1e-12)


def test_intensity_examples():
    g = small_grid(1024)
    zero = lat.PolarizedField(g, np.zeros(g.n_points, complex), np.zeros(g.n_points, complex))
    assert np.all(lat.field_intensity(zero) == 0)
    single = lat.make_initial_single(g, 2.0)
    i0 = np.argmin(np.abs(g.tau))
    assert lat.field_intensity(single)[i0] == pytest.approx(4.0)
    pair = lat.make_initial_pair(g, 2.0, 3.0, 0.0)
    i3 = np.argmin(np.abs(g.tau - 3.0))
    expected = 2.0 + 2.0 / math.cosh(6.0) ** 2
    assert lat.field_intensity(pair)[i3] == pytest.approx(expected, abs=1e-6)


def test_modulation_factors():
    m = lat.ModulationSpec("sine", 1.3, 0.2)
    assert m.dispersion_factor(0.0) == pytest.approx(1.0)
    assert m.dispersion_factor(1.3 / 4) == pytest.approx(0.8)
    t = lat.ModulationSpec("truncated_sine", 1.3, 0.2)
    assert t.dispersion_factor(1.3 / 4) == pytest.approx(0.8)
    assert t.dispersion_factor(2.0) == 1.0
    b = lat.ModulationSpec("sine", 1.3, 0.01)
    assert b.birefringence_factor(1.3 / 4) == pytest.approx(1.01)
    none = lat.MODULATION_NONE
    assert none.dispersion_factor(0.37) == 1.0
    assert none.birefringence_factor(5.0) == 1.0


def test_modulation_validation():
    with pytest.raises(InvalidParameterError):
        lat.ModulationSpec("sine", 0.0, 0.2)
    with pytest.raises(InvalidParameterError):
        lat.ModulationSpec("sine", math.inf, 0.2)
    with pytest.raises(InvalidParameterError):
        lat.ModulationSpec("wobble", 1.0, 0.2)


def test_presets():
    m = lat.manakov_profile(1.0)
    assert (m.a_coef, m.b_coef, m.c_coef) == (8.0 / 9.0, 8.0 / 9.0, 0.0)
    assert m.birefringence(0.3) == 0.0 and m.group_delay(0.7) == 0.0
    b = lat.birefringent_profile(1.0, b=10.0, b1=1.0)
    assert (b.a_coef, b.b_coef, b.c_coef) == (1.0, 2.0 / 3.0, 1.0 / 3.0)
    assert b.birefringence(0.0) == 10.0
    assert b.group_delay(0.0) == 1.0


def test_fields_are_immutable():
    g = small_grid()
    f = lat.make_initial_single(g, 1.0)
    with pytest.raises(ValueError):
        f.ux[0] = 1.0
    with pytest.raises(ValueError):
        g.tau[0] = 0.0
