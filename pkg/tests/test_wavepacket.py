import numpy as np
import pytest

from hrsim.errors import ValidationError
from hrsim.lattice import FieldDigitization, LatticeGeometry, LatticeModel, TheorySpec
from hrsim.lcu import direct_creation_operator
from hrsim.spectral import mass_gap_report, model_spectrum
from hrsim.wavepacket import (DiscreteAmplitudeTable, EmptySupportError, MomentumProfile,
                              SmearingWindow, WavepacketGrid, bump, choose_grid,
                              discretization_error_estimate, eval_psi, shift_term_residual,
                              spatial_extent)
from hrsim.evolve import double_commutator_norm


def chain(V, a=1.0):
    return LatticeGeometry(1, V, a)


def test_bump_support():
    u = np.array([-1.0, -0.5, 0.0, 0.5, 1.0])
    b = bump(u)
    assert b[0] == 0 and b[-1] == 0
    assert np.isclose(b[2], np.exp(-1.0))


def test_profile_validation():
    with pytest.raises(ValidationError):
        MomentumProfile(0.0, -0.1)
    with pytest.raises(ValidationError):
        eval_psi(WavepacketGrid.midpoint(-1, 1, 2, [0], chain(4)), MomentumProfile(0.0, 1.0),
                 SmearingWindow())


def test_window_sandwich_validation():
    with pytest.raises(ValidationError):
        SmearingWindow(a_coef=1.2, b_coef=2.0)
    with pytest.raises(ValidationError):
        SmearingWindow(a_coef=0.5, b_coef=4.5)
    w = SmearingWindow(0.5, 2.0, 1.0)
    assert 0 < w.delta_E < w.E_bar


def test_grid_validation():
    g = chain(4)
    grid = WavepacketGrid.midpoint(-2, 2, 4, [0, 1], g)
    assert np.allclose(grid.t_list, [-1.5, -0.5, 0.5, 1.5])
    assert np.isclose(grid.dt, 1.0)
    with pytest.raises(ValidationError):
        WavepacketGrid(np.array([0.0, 1.0, 3.0]), [0], g)
    with pytest.raises(ValidationError):
        WavepacketGrid(np.array([0.0]), [0, 1, 2, 3, 4], g)


def test_empty_support():
    g = chain(8)
    grid = WavepacketGrid.midpoint(-2, 2, 4, np.arange(8), g)
    prof = MomentumProfile(0.0, 0.3, "bump")
    win = SmearingWindow(0.5, 2.0, 1.0, p_center=np.pi, p_halfwidth=0.5)
    tb = eval_psi(grid, prof, win, allow_empty=True)
    assert np.all(tb.values == 0)
    with pytest.raises(EmptySupportError):
        eval_psi(grid, prof, win)


def test_plane_wave_limit():
    g = chain(6)
    grid = WavepacketGrid.midpoint(-3, 3, 6, np.arange(6), g)
    prof = MomentumProfile(0.0, 0.05, "bump")  # only p = 0 survives
    tb = eval_psi(grid, prof, SmearingWindow(0.5, 2.0, 1.0))
    mags = np.abs(tb.values)
    assert np.all(np.ptp(mags, axis=1) < 1e-12 * mags.max())


def test_quadrature_refinement():
    g = chain(16)
    grid = WavepacketGrid.midpoint(-20, 20, 40, np.arange(16), g)
    prof, win = MomentumProfile(0.4, 0.3), SmearingWindow(0.5, 2.0, 1.0)
    a = eval_psi(grid, prof, win, n_quad=64).values
    b = eval_psi(grid, prof, win, n_quad=128).values
    assert np.abs(a - b).max() < 1e-10 * np.abs(b).max()


def test_derivatives_match_finite_difference():
    g = chain(8)
    prof, win = MomentumProfile(0.0, 0.3), SmearingWindow(0.5, 2.0, 1.0)
    h = 1e-4
    t = np.array([0.3 - h, 0.3, 0.3 + h])
    tb = eval_psi(WavepacketGrid(t, np.arange(8), g), prof, win)
    fd1 = (tb.values[2] - tb.values[0]) / (2 * h)
    fd2 = (tb.values[2] - 2 * tb.values[1] + tb.values[0]) / h**2
    assert np.allclose(tb.dot[1], fd1, atol=1e-7)
    assert np.allclose(tb.ddot[1], fd2, atol=1e-5)


def test_conjugation_symmetry_at_t0():
    g = chain(8)
    grid = WavepacketGrid(np.array([0.0]), np.arange(8), g, _dt_single=1.0)
    tb = eval_psi(grid, MomentumProfile(0.0, 0.3), SmearingWindow(0.5, 2.0, 1.0))
    psi = tb.values[0]
    minus = (-np.arange(8)) % 8
    assert np.abs(psi[minus] - psi.conj()).max() < 1e-12


def test_spatial_and_time_reflection_symmetry():
    # for an even real profile: psi(t,-x) = psi(t,x) and psi(-t,x) = conj(psi(t,x))
    g = chain(8)
    grid = WavepacketGrid.midpoint(-4, 4, 8, np.arange(8), g)
    psi = eval_psi(grid, MomentumProfile(0.0, 0.3), SmearingWindow(0.5, 2.0, 1.0)).values
    minus = (-np.arange(8)) % 8
    assert np.abs(psi[:, minus] - psi).max() < 1e-12
    assert np.abs(psi[::-1] - psi.conj()).max() < 1e-12


def test_l1_mass_cauchy():
    g = chain(8)
    prof, win = MomentumProfile(0.0, 0.3), SmearingWindow(0.5, 2.0, 1.0, shape="gaussian")
    masses = [eval_psi(WavepacketGrid.midpoint(-T, T, N, np.arange(8), g), prof, win).l1_mass
              for T, N in [(150, 1200), (200, 3200), (300, 9600)]]
    assert abs(masses[1] - masses[0]) < 1e-8
    assert abs(masses[2] - masses[1]) < 1e-8


def test_shift_residual_zero_table():
    g = chain(2)
    tb = DiscreteAmplitudeTable(np.zeros((2, 2)), WavepacketGrid.midpoint(-1, 1, 2, [0, 1], g))
    assert shift_term_residual(tb) == 0


def test_shift_residual_compliant_window():
    g = chain(8)
    grid = WavepacketGrid.midpoint(-100, 100, 800, np.arange(8), g)
    tb = eval_psi(grid, MomentumProfile(0.0, 0.3), SmearingWindow(0.5, 2.0, 1.0, shape="gaussian"))
    assert shift_term_residual(tb) / tb.l1_mass < 1e-6


def test_shift_residual_negative_control():
    g = chain(8)
    grid = WavepacketGrid.midpoint(-100, 100, 800, np.arange(8), g)
    win = SmearingWindow(-1.0, 2.0, 1.0, variable="energy", check=False)  # straddles p0 = 0
    tb = eval_psi(grid, MomentumProfile(0.0, 0.3), win)
    assert shift_term_residual(tb) / tb.l1_mass > 0.1


def test_choose_grid_tol_one():
    g = chain(16)
    grid = choose_grid(MomentumProfile(0.0, 0.3), SmearingWindow(0.5, 2.0, 1.0), g, 1.0)
    assert grid.N == 1 and grid.S == 1


def test_choose_grid_does_not_fit():
    with pytest.raises(ValidationError):
        choose_grid(MomentumProfile(0.0, 0.3), SmearingWindow(0.5, 2.0, 1.0), chain(8), 1e-2)


def test_choose_grid_extent_doubles():
    g = chain(256)
    win = SmearingWindow(0.5, 2.0, 1.0)
    e1 = spatial_extent(choose_grid(MomentumProfile(0.0, 0.1), win, g, 1e-2))
    e2 = spatial_extent(choose_grid(MomentumProfile(0.0, 0.05), win, g, 1e-2))
    assert e2 >= 2 * e1


def test_choose_grid_captures_mass():
    g = chain(64)
    prof, win = MomentumProfile(0.0, 0.3), SmearingWindow(0.5, 2.0, 1.0)
    tol = 1e-2
    grid = choose_grid(prof, win, g, tol)
    T = 4 * max(abs(grid.t_range[0]), abs(grid.t_range[1]))
    n = int(round(2 * T / grid.dt))
    ref = eval_psi(WavepacketGrid.midpoint(-T, T, n, np.arange(64), g), prof, win)
    got = eval_psi(grid, prof, win)
    assert got.l1_mass >= (1 - 10 * tol) * ref.l1_mass


def test_error_estimate_zero_table():
    m = LatticeModel(chain(2), FieldDigitization(2, 1.0), TheorySpec(1.0))
    tb = DiscreteAmplitudeTable(np.zeros((2, 2)), WavepacketGrid.midpoint(-1, 1, 2, [0, 1], m.geom))
    est = discretization_error_estimate(tb, m.hamiltonian, {0: m.field_op(0), 1: m.field_op(1)})
    assert est.bound == 0


def test_error_estimate_resampling_ratio():
    m = LatticeModel(chain(2), FieldDigitization(2, 1.5), TheorySpec(1.0, lambda4=0.5))
    phis = {s: m.field_op(s) for s in range(2)}
    prof, win = MomentumProfile(0.0, 0.5), SmearingWindow(0.5, 2.0, 1.0, shape="gaussian")
    g1 = WavepacketGrid.midpoint(-40, 40, 160, [0, 1], m.geom)
    b1 = discretization_error_estimate(eval_psi(g1, prof, win), m.hamiltonian, phis)
    b2 = discretization_error_estimate(eval_psi(g1.refined(2), prof, win), m.hamiltonian, phis)
    assert abs(b1.bound / b2.bound - 4.0) < 0.2
    assert b1.dominant in b1.terms


def test_error_estimate_bounds_refinement_discrepancy():
    m = LatticeModel(chain(2), FieldDigitization(2, 1.5), TheorySpec(1.0, lambda4=0.5))
    mass = mass_gap_report(model_spectrum(m, 16)).m
    prof, win = MomentumProfile(0.0, 0.5), SmearingWindow(0.5, 2.0, mass**2)
    phis = {s: m.field_op(s) for s in range(2)}
    for N in (16, 32):
        grid = WavepacketGrid.midpoint(-3, 3, N, [0, 1], m.geom)
        tb = eval_psi(grid, prof, win)
        A = direct_creation_operator(m, tb)
        B = direct_creation_operator(m, eval_psi(grid.refined(4), prof, win))
        est = discretization_error_estimate(tb, m.hamiltonian, phis)
        assert np.linalg.norm(A - B, 2) <= est.bound


def test_double_commutator_single_site_collapse():
    pm = 2.0
    m = LatticeModel(chain(1), FieldDigitization(3, pm), TheorySpec(1.0))
    c = double_commutator_norm(m.hamiltonian, m, 0)
    assert np.isclose(c.analytic_norm, 1.0 * pm)
