import numpy as np
import pytest

from ionswap.errors import ConfigurationError
from ionswap.waveforms import (SwapRampParams, VoltageSchedule,
                               merge_schedule, separation_schedule,
                               swap_schedule, transport_schedule)


def test_swap_schedule_shape_and_midpoint():
    sched = swap_schedule(SwapRampParams(), 20)
    assert sched.n_samples == 55  # ceil(22 us * 2.5 / us)
    k = int(11.0 * 2.5)  # sample holding tau = 0.5
    assert sched.channels["d20"][k] == pytest.approx(0.0, abs=1e-12)
    assert sched.channels["t20"][k] == pytest.approx(-9.5)
    assert sched.channels["t19"][k] == pytest.approx(4.0)
    assert sched.channels["t21"][k] == pytest.approx(4.0)


def test_swap_schedule_time_symmetry_exact():
    sched = swap_schedule(SwapRampParams(duration=30.0), 20)
    u_c, u_o, u_d = (sched.channels["t20"], sched.channels["t19"],
                     sched.channels["d20"])
    assert np.array_equal(u_c, u_c[::-1])
    assert np.array_equal(u_o, u_o[::-1])
    assert np.array_equal(u_d, -u_d[::-1])


def test_swap_schedule_static_endpoints():
    sched = swap_schedule(SwapRampParams(), 20)
    first, last = sched.endpoint_assignments()
    assert first == {"t20": -6.0, "t19": 0.0, "t21": 0.0, "d20": 0.0}
    assert last == first


def test_swap_zero_diag_amplitude():
    sched = swap_schedule(SwapRampParams(u_d_peak=0.0), 20)
    assert np.all(sched.channels["d20"] == 0.0)


def test_swap_params_validation():
    with pytest.raises(ConfigurationError):
        SwapRampParams(breakpoints=(0.4, 0.45, 0.55, 0.95))
    with pytest.raises(ConfigurationError):
        SwapRampParams(breakpoints=(0.05, 0.55, 0.45, 0.95))
    with pytest.raises(ConfigurationError):
        SwapRampParams(duration=-1.0)


def test_transport_adjacent_defaults():
    sched = transport_schedule(20, 21)
    assert sched.duration == 28.0
    assert sched.n_samples == 70
    assert sched.channels["t20"][0] == -6.0
    assert sched.channels["t20"][-1] == 0.0
    assert sched.channels["t21"][-1] == -6.0


def test_transport_concatenation_six_segments():
    sched = transport_schedule(20, 26)
    assert sched.duration == pytest.approx(6 * 28.0)
    assert sched.n_samples == 6 * 70
    # seam continuity: the well is always exactly one -6 V deep somewhere
    total = sum(sched.channels[c] for c in sched.channel_ids)
    assert np.allclose(total, -6.0)


def test_transport_noop():
    sched = transport_schedule(22, 22)
    assert sched.duration == 0.0
    assert sched.n_samples == 0
    assert sched.channels == {}


def test_separation_symmetric_without_bias():
    sched = separation_schedule(20, direction_bias=0.0)
    assert sched.duration == 100.0
    assert np.array_equal(sched.channels["t19"], sched.channels["t21"])
    first, last = sched.endpoint_assignments()
    assert first == {"t20": -6.0, "t19": 0.0, "t21": 0.0}
    assert last == {"t20": 0.0, "t19": -6.0, "t21": -6.0}


def test_separation_bias_tilts_destinations_transiently():
    sched = separation_schedule(20, direction_bias=0.4)
    diff = sched.channels["t19"] - sched.channels["t21"]
    assert diff[0] == pytest.approx(0.0, abs=1e-12)
    assert diff[-1] == pytest.approx(0.0, abs=1e-12)
    # left well transiently deeper by about the bias (sampling misses the
    # exact hat peak)
    assert -0.4 <= diff.min() < -0.39


def test_merge_is_exact_time_reverse():
    sep = separation_schedule(20, direction_bias=0.2)
    mer = merge_schedule(20, direction_bias=0.2)
    for cid in sep.channel_ids:
        assert np.array_equal(mer.channels[cid], sep.channels[cid][::-1])


def test_schedule_length_invariant():
    with pytest.raises(ConfigurationError):
        VoltageSchedule({"t20": np.zeros(10)}, duration=22.0)


def test_schedule_csv_roundtrip(tmp_path):
    sched = swap_schedule(SwapRampParams(), 20)
    path = tmp_path / "swap.csv"
    sched.write_csv(path)
    back = VoltageSchedule.read_csv(path)
    assert back.channel_ids == sched.channel_ids
    assert back.n_samples == sched.n_samples
    for cid in sched.channel_ids:
        assert np.allclose(back.channels[cid], sched.channels[cid],
                           atol=1e-12)


def test_programmed_playback_zero_order_hold():
    sched = transport_schedule(20, 21)
    t = np.array([0.0, 0.39, 0.41, 27.9])
    vals = sched.programmed("t20", t)
    assert vals[0] == vals[1] == -6.0
    assert vals[2] == sched.channels["t20"][1]


def test_with_static_adds_channels():
    sched = swap_schedule(SwapRampParams(), 20).with_static({"t26": -6.0})
    assert np.all(sched.channels["t26"] == -6.0)
