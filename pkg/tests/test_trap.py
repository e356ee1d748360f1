import numpy as np
import pytest

from ionswap.constants import curvature_to_freq_mhz
from ionswap.errors import CalibrationError, ConfigurationError
from ionswap.trap import (TrapGeometry, VoltageAssignment, calibrate,
                          gradient, hessian, potential,
                          single_ion_frequencies, static_trapping)

from conftest import PAPER_TARGETS


def test_zero_voltage_is_pure_pseudopotential(geometry, rng):
    volts = VoltageAssignment({})
    pts = rng.uniform(-100, 100, size=(50, 3))
    expected = (0.5 * geometry.kappa_y * pts[:, 1] ** 2
                + 0.5 * geometry.kappa_z * pts[:, 2] ** 2)
    assert np.allclose(potential(geometry, volts, pts), expected, atol=1e-15)


def test_single_segment_mirror_symmetry(geometry, rng):
    volts = static_trapping(geometry, {18: -6.0})
    x_k = geometry.segment_center(18)
    for _ in range(20):
        d, y, z = rng.uniform(-150, 150), rng.uniform(-20, 20), rng.uniform(-20, 20)
        left = potential(geometry, volts, np.array([x_k - d, y, z]))
        right = potential(geometry, volts, np.array([x_k + d, y, z]))
        assert left == pytest.approx(right, rel=1e-14, abs=1e-18)


def test_calibration_hits_paper_frequencies(geometry):
    volts = static_trapping(geometry, {geometry.liz_index: -6.0})
    freqs = single_ion_frequencies(geometry, volts)
    assert np.allclose(freqs, PAPER_TARGETS, rtol=1e-6)


def test_calibration_unreachable_target_raises():
    with pytest.raises(CalibrationError):
        calibrate((80.0, 1.927, 3.248))
    with pytest.raises(CalibrationError):
        calibrate((1.488, 2.0, 2.0))
    with pytest.raises(CalibrationError):
        calibrate((1.488, 1.927, 3.248), u_c=+6.0)


def test_gradient_matches_central_differences(geometry, rng):
    volts = static_trapping(geometry, {20: -6.0, 19: 4.0, 21: 4.0})
    volts = volts.with_channel("d20", 1.2)
    h = 0.05
    worst = 0.0
    for _ in range(100):
        r = np.array([rng.uniform(-300, 300), rng.uniform(5, 40),
                      rng.uniform(5, 40)])
        g = gradient(geometry, volts, r)
        fd = np.empty(3)
        for ax in range(3):
            dr = np.zeros(3)
            dr[ax] = h
            fd[ax] = (potential(geometry, volts, r + dr)
                      - potential(geometry, volts, r - dr)) / (2 * h)
        worst = max(worst, np.linalg.norm(fd - g) / np.linalg.norm(g))
    assert worst < 1e-6


def test_hessian_matches_gradient_differences(geometry):
    volts = static_trapping(geometry, {20: -6.0}).with_channel("d20", 0.8)
    r = np.array([35.0, 11.0, -7.0])
    h = hessian(geometry, volts, r)
    step = 0.05
    for ax in range(3):
        dr = np.zeros(3)
        dr[ax] = step
        fd = (gradient(geometry, volts, r + dr)
              - gradient(geometry, volts, r - dr)) / (2 * step)
        assert np.allclose(fd, h[ax], rtol=1e-6, atol=1e-12)
    assert np.allclose(h, h.T)


def test_radial_sign_symmetry_only_broken_by_diag(geometry, rng):
    base = static_trapping(geometry, {20: -6.0})
    r = np.array([12.0, 9.0, 5.0])
    flip = r * np.array([1.0, -1.0, -1.0])
    assert potential(geometry, base, r) == pytest.approx(
        potential(geometry, base, flip), rel=1e-14)
    tilted = base.with_channel("d20", 1.0)
    assert abs(potential(geometry, tilted, r)
               - potential(geometry, tilted, flip)) > 1e-8


def test_curvature_scaling_sqrt2(geometry):
    from dataclasses import replace
    volts = static_trapping(geometry, {20: -6.0})
    base = single_ion_frequencies(geometry, volts)
    doubled = replace(geometry, kappa_y=2 * geometry.kappa_y,
                      kappa_z=2 * geometry.kappa_z,
                      bump_efficiency=2 * geometry.bump_efficiency)
    freqs = single_ion_frequencies(doubled, volts)
    assert np.allclose(freqs, np.sqrt(2.0) * base, rtol=1e-12)


def test_deep_configuration_exceeds_lower_radial(geometry):
    # structural-transition precondition: the deepened well must beat the
    # 1.927 MHz radial confinement
    deep = static_trapping(geometry, {20: -9.5, 19: 4.0, 21: 4.0})
    h = hessian(geometry, deep, np.zeros(3))
    f_axial = curvature_to_freq_mhz(h[0, 0])
    assert f_axial > 1.927


def test_unknown_channel_rejected():
    with pytest.raises(ConfigurationError):
        VoltageAssignment({"q20": 1.0})
    with pytest.raises(ConfigurationError):
        VoltageAssignment({"t": 1.0})


def test_geometry_validation():
    with pytest.raises(ConfigurationError):
        TrapGeometry(kappa_y=-1.0)
    with pytest.raises(ConfigurationError):
        TrapGeometry(kappa_y=1e-4, kappa_z=1e-4)
    with pytest.raises(ConfigurationError):
        TrapGeometry(liz_index=99)


def test_geometry_roundtrip(geometry, tmp_path):
    clone = TrapGeometry.from_dict(geometry.to_dict())
    assert clone == geometry
    path = tmp_path / "geo.json"
    geometry.dump_json(path)
    import json
    assert TrapGeometry.from_dict(json.load(open(path))) == geometry


def test_potential_requires_finite_point(geometry):
    volts = static_trapping(geometry, {20: -6.0})
    with pytest.raises(ValueError):
        potential(geometry, volts, np.array([np.nan, 0.0, 0.0]))


def test_segment_outside_range_rejected(geometry):
    with pytest.raises(ConfigurationError):
        geometry.segment_center(55)
