import math

import numpy as np
import pytest

from ionswap import dynamics as dyn
from ionswap.constants import (EV_TO_MECH, HBAR_MECH_US, ION_MASS_U,
                               K_COULOMB_MECH, TWO_PI)
from ionswap.errors import IonEscapeError, UnstableConfigurationError
from ionswap.trap import static_trapping
from ionswap.waveforms import SwapRampParams, swap_schedule
from ionswap.filters import apply_filter

F_AXIAL = 1.488


def harmonic_two_ion_spacing(f_axial_mhz, mass=ION_MASS_U):
    """Independent closed form: d = (2 k / (m w^2))^(1/3)."""
    omega2 = (TWO_PI * f_axial_mhz) ** 2
    return (2.0 * K_COULOMB_MECH / (mass * omega2)) ** (1.0 / 3.0)


def test_two_ion_spacing_matches_formula_in_harmonic_well():
    fld = dyn.HarmonicField((1.488, 1.927, 3.248))
    eq = dyn.find_equilibrium(fld, 2)
    d = eq[1, 0] - eq[0, 0]
    assert d == pytest.approx(harmonic_two_ion_spacing(1.488), rel=1e-9)
    assert np.allclose(eq[:, 1:], 0.0, atol=1e-9)


def test_single_ion_equilibrium_is_potential_minimum(geometry):
    volts = static_trapping(geometry, {18: -6.0})
    fld = dyn.TrapField(geometry, volts)
    eq = dyn.find_equilibrium(fld, 1,
                              guess=[[geometry.segment_center(18) + 3, 0, 0]])
    assert eq[0, 0] == pytest.approx(geometry.segment_center(18), abs=1e-9)
    grad = dyn._energy_grad_ev(fld, eq.ravel(), 1, 1.0)
    assert np.linalg.norm(grad) < 1e-10


def test_vertical_alignment_beyond_structural_transition(geometry):
    # deep configuration: axial beats the lower radial, so the crystal
    # aligns along y instead of x
    volts = static_trapping(geometry, {20: -9.5, 19: 4.0, 21: 4.0})
    fld = dyn.TrapField(geometry, volts)
    guess = np.array([[0.0, -2.0, 0.0], [0.0, 2.0, 0.0]])
    eq = dyn.find_equilibrium(fld, 2, guess=guess)
    assert np.all(np.abs(eq[:, 1]) > 1.0)
    assert np.allclose(eq[:, 0], 0.0, atol=1e-6)
    # the horizontal arrangement is a saddle there
    with pytest.raises(UnstableConfigurationError):
        dyn.find_equilibrium(fld, 2,
                             guess=np.array([[-2.2, 0, 0], [2.2, 0, 0]]))


def test_six_mode_table_matches_analytic_formulas(geometry):
    volts = static_trapping(geometry, {20: -6.0})
    fld = dyn.TrapField(geometry, volts)
    eq = dyn.find_equilibrium(fld, 2)
    modes = dyn.normal_modes(fld, eq)
    f = dict(zip(modes.labels, modes.freqs_mhz))
    assert f["axial-com"] == pytest.approx(1.488, rel=1e-6)
    assert f["radial-com-low"] == pytest.approx(1.927, rel=1e-9)
    assert f["radial-com-high"] == pytest.approx(3.248, rel=1e-9)
    assert f["axial-stretch"] == pytest.approx(
        math.sqrt(3.0) * f["axial-com"], rel=1e-4)
    assert f["radial-rocking-low"] == pytest.approx(
        math.sqrt(f["radial-com-low"] ** 2 - f["axial-com"] ** 2), rel=1e-4)
    assert f["radial-rocking-high"] == pytest.approx(
        math.sqrt(f["radial-com-high"] ** 2 - f["axial-com"] ** 2), rel=1e-4)


def test_single_ion_modes_equal_secular_frequencies(geometry):
    volts = static_trapping(geometry, {20: -6.0})
    fld = dyn.TrapField(geometry, volts)
    eq = dyn.find_equilibrium(fld, 1, guess=[[0.5, 0, 0]])
    modes = dyn.normal_modes(fld, eq)
    assert np.allclose(modes.freqs_mhz, (1.488, 1.927, 3.248), rtol=1e-6)
    assert modes.labels == ["axial", "radial-low", "radial-high"]


def test_mode_frequencies_independent_of_ion_ordering(geometry):
    volts = static_trapping(geometry, {20: -6.0})
    fld = dyn.TrapField(geometry, volts)
    eq = dyn.find_equilibrium(fld, 2)
    swapped = eq[::-1].copy()
    f1 = dyn.normal_modes(fld, eq).freqs_mhz
    f2 = dyn.normal_modes(fld, swapped).freqs_mhz
    assert np.allclose(f1, f2, rtol=1e-12)


def test_eigenvectors_orthonormal(geometry):
    volts = static_trapping(geometry, {20: -6.0})
    fld = dyn.TrapField(geometry, volts)
    modes = dyn.normal_modes(fld, dyn.find_equilibrium(fld, 2))
    gram = modes.vectors.T @ modes.vectors
    assert np.max(np.abs(gram - np.eye(6))) < 1e-10


def test_three_ion_modes_supported(geometry):
    volts = static_trapping(geometry, {20: -6.0})
    fld = dyn.TrapField(geometry, volts)
    eq = dyn.find_equilibrium(fld, 3)
    modes = dyn.normal_modes(fld, eq)
    assert len(modes.freqs_mhz) == 9
    assert np.all(modes.freqs_mhz > 0)
    # axial com of N equal ions stays at the single-ion frequency
    assert modes.freqs_mhz[0] == pytest.approx(1.488, rel=1e-3)


def test_integrated_oscillation_frequency_matches_hessian(geometry):
    volts = static_trapping(geometry, {20: -6.0})
    fld = dyn.TrapField(geometry, volts)
    eq = dyn.find_equilibrium(fld, 1, guess=[[0.0, 0.0, 0.0]])
    state = dyn.CrystalState(eq + np.array([[0.1, 0.0, 0.0]]))
    drive = dyn.StaticDrive(geometry, volts)
    traj = dyn.integrate(geometry, drive, state, (0.0, 60.0), dt=0.002,
                         record_stride=5)
    x = traj.positions[:, 0, 0]
    crossings = np.where(np.diff(np.sign(x)) != 0)[0]
    t_cross = []
    for i in crossings:
        t0, t1 = traj.t[i], traj.t[i + 1]
        x0, x1 = x[i], x[i + 1]
        t_cross.append(t0 - x0 * (t1 - t0) / (x1 - x0))
    periods = 2.0 * np.diff(t_cross)
    f_measured = 1.0 / np.mean(periods)
    assert f_measured == pytest.approx(1.488, rel=1e-3)


def test_energy_conservation_static_two_ion(geometry):
    volts = static_trapping(geometry, {20: -6.0})
    fld = dyn.TrapField(geometry, volts)
    eq = dyn.find_equilibrium(fld, 2)
    state = dyn.CrystalState(eq + [[0.05, 0.02, 0.01], [-0.03, 0.0, 0.02]])
    drive = dyn.StaticDrive(geometry, volts)
    traj = dyn.integrate(geometry, drive, state, (0.0, 100.0), dt=0.002,
                         record_stride=100)
    energies = dyn.energy_series(geometry, drive, traj)
    e_eq = dyn.total_energy_mech(geometry, volts, dyn.CrystalState(eq))
    drift = dyn.relative_energy_drift(energies, e_eq)
    assert drift < 1e-6


def test_momentum_conservation_of_coulomb_pair(geometry):
    # no axial voltages: x is force-free apart from the ion-ion force
    volts = static_trapping(geometry, {})
    state = dyn.CrystalState([[-3.0, 0.4, 0.0], [3.0, -0.4, 0.0]],
                             [[0.5, 0.0, 0.0], [0.2, 0.0, 0.0]])
    drive = dyn.StaticDrive(geometry, volts)
    traj = dyn.integrate(geometry, drive, state, (0.0, 2.0), dt=0.001,
                         record_stride=10)
    px = np.sum(traj.velocities[:, :, 0], axis=1) * state.mass
    assert np.max(np.abs(px - px[0])) < 1e-12 * abs(px[0]) + 1e-12


def test_swap_without_diag_never_leaves_axis(geometry):
    sched = swap_schedule(SwapRampParams(u_d_peak=0.0), 20)
    filt = apply_filter(sched)
    fld = dyn.TrapField(geometry, static_trapping(geometry, {20: -6.0}))
    eq = dyn.find_equilibrium(fld, 2)
    traj = dyn.integrate(geometry, filt, dyn.CrystalState(eq),
                         (0.0, filt.span), dt=0.002, record_stride=50)
    assert np.max(np.abs(traj.positions[:, :, 1])) < 1e-6


def test_ion_escape_detected(geometry):
    volts = static_trapping(geometry, {20: -6.0})
    state = dyn.CrystalState([[0.0, 0.0, 0.0]], [[900.0, 0.0, 0.0]])
    with pytest.raises(IonEscapeError):
        dyn.integrate(geometry, dyn.StaticDrive(geometry, volts), state,
                      (0.0, 10.0), dt=0.002)


def test_mode_excitation_zero_at_equilibrium(geometry):
    volts = static_trapping(geometry, {20: -6.0})
    fld = dyn.TrapField(geometry, volts)
    eq = dyn.find_equilibrium(fld, 2)
    modes = dyn.normal_modes(fld, eq)
    report = dyn.mode_excitation(dyn.CrystalState(eq), modes)
    assert np.max(report.nbar) < 1e-20


def test_mode_excitation_unit_quantum_displacement(geometry):
    volts = static_trapping(geometry, {20: -6.0})
    fld = dyn.TrapField(geometry, volts)
    eq = dyn.find_equilibrium(fld, 2)
    modes = dyn.normal_modes(fld, eq)
    m = 2
    dq = 2.0 * modes.q_zpf()[m] * modes.vectors[:, m]
    state = dyn.CrystalState(eq + dq.reshape(-1, 3) / math.sqrt(ION_MASS_U))
    report = dyn.mode_excitation(state, modes)
    assert report.nbar[m] == pytest.approx(1.0, rel=1e-10)
    others = np.delete(report.nbar, m)
    assert np.max(others) < 1e-18


def test_nbar_equals_mode_energy_over_hbar_omega(geometry, rng):
    volts = static_trapping(geometry, {20: -6.0})
    fld = dyn.TrapField(geometry, volts)
    eq = dyn.find_equilibrium(fld, 2)
    modes = dyn.normal_modes(fld, eq)
    state = dyn.CrystalState(eq + rng.normal(scale=2e-3, size=(2, 3)),
                             rng.normal(scale=1e-3, size=(2, 3)))
    report = dyn.mode_excitation(state, modes)
    energies = dyn.mode_energy_mech(state, modes)
    omega = TWO_PI * modes.freqs_mhz
    assert np.allclose(report.nbar, energies / (HBAR_MECH_US * omega),
                       rtol=1e-8)


def test_excitation_of_physically_swapped_state(geometry):
    # after an exchange the ions map onto the mirrored equilibrium slots
    volts = static_trapping(geometry, {20: -6.0})
    fld = dyn.TrapField(geometry, volts)
    eq = dyn.find_equilibrium(fld, 2)
    modes = dyn.normal_modes(fld, eq)
    swapped = dyn.CrystalState(eq[::-1].copy())
    report = dyn.mode_excitation(swapped, modes)
    assert report.max_nbar() < 1e-20


def test_thermal_sampling_statistics(geometry):
    volts = static_trapping(geometry, {20: -6.0})
    fld = dyn.TrapField(geometry, volts)
    eq = dyn.find_equilibrium(fld, 2)
    modes = dyn.normal_modes(fld, eq)
    rng = np.random.default_rng(5)
    target = np.full(6, 0.4)
    draws = np.array([dyn.mode_excitation(
        dyn.sample_thermal_state(modes, target, rng), modes).nbar
        for _ in range(400)])
    mean = draws.mean(axis=0)
    # exponential energies: sigma of the mean is nbar/sqrt(N)
    assert np.all(np.abs(mean - 0.4) < 5 * 0.4 / math.sqrt(400))


def test_crystal_state_validation():
    with pytest.raises(ValueError):
        dyn.CrystalState([[0, 0, 0], [0.05, 0, 0]])
    with pytest.raises(ValueError):
        dyn.CrystalState(np.zeros((4, 3)))


def test_trajectory_csv(tmp_path, geometry):
    volts = static_trapping(geometry, {20: -6.0})
    state = dyn.CrystalState([[0.1, 0.0, 0.0]])
    traj = dyn.integrate(geometry, dyn.StaticDrive(geometry, volts), state,
                         (0.0, 1.0), dt=0.002, record_stride=100)
    path = tmp_path / "traj.csv"
    traj.write_csv(path)
    header = open(path).readline().strip()
    assert header == "t_us,x0,y0,z0"
    data = np.loadtxt(path, delimiter=",", skiprows=1)
    assert data.shape[1] == 4
