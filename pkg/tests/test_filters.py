import math

import numpy as np
import pytest

from ionswap.errors import ConfigurationError
from ionswap.filters import (FilterModel, apply_filter,
                             swap_effective_duration)
from ionswap.waveforms import SwapRampParams, VoltageSchedule, swap_schedule


def closed_form_step(t, omega=2 * math.pi * 0.05, zeta=1 / math.sqrt(2)):
    # independent textbook expression for the underdamped step response
    wd = omega * math.sqrt(1 - zeta ** 2)
    sg = zeta * omega
    t = np.asarray(t, float)
    return 1 - np.exp(-sg * t) * (np.cos(wd * t) + sg / wd * np.sin(wd * t))


def test_constant_input_passes_through():
    sched = VoltageSchedule({"t20": np.full(55, -6.0)}, duration=22.0)
    filt = apply_filter(sched)
    t = np.linspace(0.0, 60.0, 123)
    assert np.allclose(filt.channel("t20", t), -6.0, atol=1e-14)
    assert filt.settle_tail == 0.0


def test_step_response_matches_closed_form():
    samples = np.concatenate([[0.0], np.ones(299)])
    sched = VoltageSchedule({"t20": samples}, duration=120.0)
    filt = apply_filter(sched)
    t0 = 1.0 / sched.sample_rate  # step fires at the second sample
    t = np.linspace(t0, 110.0, 1500)
    assert np.max(np.abs(filt.channel("t20", t)
                         - closed_form_step(t - t0))) < 1e-8


def test_filter_linearity():
    rng = np.random.default_rng(7)
    a1, a2 = rng.normal(size=55), rng.normal(size=55)
    mk = lambda arr: apply_filter(VoltageSchedule({"c20": arr.copy()}, 22.0))
    f1, f2 = mk(a1), mk(a2)
    f12 = mk(1.7 * a1 - 0.3 * a2)
    t = np.linspace(0.0, 70.0, 400)
    combined = 1.7 * f1.channel("c20", t) - 0.3 * f2.channel("c20", t)
    assert np.max(np.abs(f12.channel("c20", t) - combined)) < 1e-9


def test_overshoot_bound_enforced():
    assert FilterModel().overshoot() < 0.05
    with pytest.raises(ConfigurationError):
        FilterModel(zeta=0.5)  # would overshoot > 5%
    with pytest.raises(ConfigurationError):
        FilterModel(order=4)
    with pytest.raises(ConfigurationError):
        FilterModel(cutoff_angular=-1.0)


def test_settling_within_tolerance_at_span():
    sched = swap_schedule(SwapRampParams(), 20)
    filt = apply_filter(sched, settle_tol_v=1e-4)
    final = filt.sample(np.array([filt.span]))[0]
    targets = filt.sample(np.array([filt.span + 200.0]))[0]
    assert np.max(np.abs(final - targets)) < 1e-4


def test_effective_duration_of_paper_swap():
    filt = apply_filter(swap_schedule(SwapRampParams(), 20))
    eff = swap_effective_duration(filt)
    assert 35.0 <= eff <= 50.0  # programmed 22 us lengthens markedly


def test_effective_duration_requires_swap_schedule():
    from ionswap.waveforms import transport_schedule
    with pytest.raises(ConfigurationError):
        swap_effective_duration(apply_filter(transport_schedule(20, 21)))


def test_before_start_holds_initial_value():
    sched = swap_schedule(SwapRampParams(), 20)
    filt = apply_filter(sched)
    assert filt.channel("t20", np.array([-5.0]))[0] == pytest.approx(-6.0)


def test_final_assignment_matches_last_samples():
    sched = swap_schedule(SwapRampParams(), 20)
    filt = apply_filter(sched)
    final = filt.final_assignment()
    assert final.channels["t20"] == -6.0
    assert final.channels["d20"] == 0.0
