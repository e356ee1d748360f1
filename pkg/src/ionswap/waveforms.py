"""Sampled voltage schedules: swap, transport, separation, merge.

Schedules are discrete per-channel sample arrays at a fixed update rate
(default 2.5 samples/us), piecewise linear in sample space between
breakpoints; smoothing is left entirely to the analog filter model.
Channel ids follow the trap convention (``t<seg>``, ``d<seg>``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigurationError

DEFAULT_SAMPLE_RATE = 2.5  # samples per us
TRAP_VOLTS = -6.0


def n_samples_for(duration: float, sample_rate: float) -> int:
    return int(math.ceil(duration * sample_rate - 1e-9))


@dataclass
class VoltageSchedule:
    """Per-channel sample arrays plus the nominal duration."""

    channels: dict
    duration: float
    sample_rate: float = DEFAULT_SAMPLE_RATE
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        n = n_samples_for(self.duration, self.sample_rate)
        for cid, arr in self.channels.items():
            arr = np.asarray(arr, dtype=float)
            if arr.shape != (n,):
                raise ConfigurationError(
                    f"channel {cid}: {arr.shape[0]} samples, expected {n}")
            self.channels[cid] = arr

    @property
    def n_samples(self) -> int:
        return n_samples_for(self.duration, self.sample_rate)

    @property
    def channel_ids(self):
        return sorted(self.channels)

    def sample_times(self) -> np.ndarray:
        return np.arange(self.n_samples) / self.sample_rate

    def programmed(self, cid: str, t) -> np.ndarray:
        """Zero-order-hold playback of the programmed samples."""
        arr = self.channels[cid]
        idx = np.clip((np.asarray(t, float) * self.sample_rate).astype(int),
                      0, len(arr) - 1)
        return arr[idx]

    def with_static(self, extra: dict) -> "VoltageSchedule":
        """Add constant channels (e.g. other occupied wells)."""
        n = self.n_samples
        channels = {c: a.copy() for c, a in self.channels.items()}
        for cid, v in extra.items():
            if cid in channels:
                channels[cid] = channels[cid] + float(v)
            else:
                channels[cid] = np.full(n, float(v))
        return VoltageSchedule(channels, self.duration, self.sample_rate,
                               dict(self.metadata))

    def reversed(self) -> "VoltageSchedule":
        channels = {c: a[::-1].copy() for c, a in self.channels.items()}
        meta = dict(self.metadata)
        meta["time_reversed"] = not meta.get("time_reversed", False)
        return VoltageSchedule(channels, self.duration, self.sample_rate, meta)

    def endpoint_assignments(self):
        """(first-sample, last-sample) voltages per channel."""
        first = {c: float(a[0]) for c, a in self.channels.items() if len(a)}
        last = {c: float(a[-1]) for c, a in self.channels.items() if len(a)}
        return first, last

    def write_csv(self, path):
        cols = self.channel_ids
        data = np.column_stack([self.sample_times()]
                               + [self.channels[c] for c in cols])
        np.savetxt(path, data, delimiter=",",
                   header=",".join(["t_us"] + cols), comments="")

    @classmethod
    def read_csv(cls, path) -> "VoltageSchedule":
        with open(path) as fh:
            header = fh.readline().strip().split(",")
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        if header[0] != "t_us":
            raise ConfigurationError("schedule CSV must start with t_us")
        t = data[:, 0]
        rate = 1.0 / (t[1] - t[0]) if len(t) > 1 else DEFAULT_SAMPLE_RATE
        channels = {c: data[:, k + 1] for k, c in enumerate(header[1:])}
        return cls(channels, duration=len(t) / rate, sample_rate=rate)


@dataclass(frozen=True)
class SwapRampParams:
    """Ramp parameters of the on-site swap (voltages in V, times in us)."""

    u_d_peak: float = 1.4
    u_c_start: float = TRAP_VOLTS
    u_c_deep: float = -9.5
    u_o_peak: float = 4.0
    breakpoints: tuple = (0.05, 0.45, 0.55, 0.95)
    duration: float = 22.0

    def __post_init__(self):
        b = self.breakpoints
        if len(b) != 4 or not all(0.0 < x < 1.0 for x in b):
            raise ConfigurationError("need four breakpoints inside (0, 1)")
        if not all(b[i] < b[i + 1] for i in range(3)):
            raise ConfigurationError("breakpoints must be strictly increasing")
        if abs(b[0] + b[3] - 1.0) > 1e-12 or abs(b[1] + b[2] - 1.0) > 1e-12:
            raise ConfigurationError(
                "breakpoints must be symmetric about tau = 0.5")
        if self.duration <= 0:
            raise ConfigurationError("duration must be positive")

    def to_dict(self) -> dict:
        return {"u_d_peak": self.u_d_peak, "u_c_start": self.u_c_start,
                "u_c_deep": self.u_c_deep, "u_o_peak": self.u_o_peak,
                "breakpoints": list(self.breakpoints),
                "duration": self.duration}


def _pwl(n: int, nodes) -> np.ndarray:
    idx = [p[0] for p in nodes]
    val = [p[1] for p in nodes]
    return np.interp(np.arange(n), idx, val)


def swap_schedule(params: SwapRampParams, site: int,
                  sample_rate: float = DEFAULT_SAMPLE_RATE) -> VoltageSchedule:
    """Voltage ramps of the on-site swap at ``site``.

    U_d rises fast to +peak, U_c deepens while U_o rises on the neighbors,
    U_d flips polarity around mid-time, then everything mirrors back.
    Sample arrays are exactly (anti)symmetric about the midpoint.
    """
    n = n_samples_for(params.duration, sample_rate)
    last = n - 1
    ia = round(params.breakpoints[0] * last)
    ib = round(params.breakpoints[1] * last)
    ic, id_ = last - ib, last - ia
    if not (0 < ia < ib < ic < id_ < last):
        raise ConfigurationError("duration too short for the breakpoints")

    u_c = _pwl(n, [(0, params.u_c_start), (ia, params.u_c_start),
                   (ib, params.u_c_deep), (ic, params.u_c_deep),
                   (id_, params.u_c_start), (last, params.u_c_start)])
    u_o = _pwl(n, [(0, 0.0), (ia, 0.0), (ib, params.u_o_peak),
                   (ic, params.u_o_peak), (id_, 0.0), (last, 0.0)])
    u_d = _pwl(n, [(0, 0.0), (ia, params.u_d_peak), (ib, params.u_d_peak),
                   (ic, -params.u_d_peak), (id_, -params.u_d_peak),
                   (last, 0.0)])
    # Make the symmetry exact against rounding of the node indices.
    u_c = 0.5 * (u_c + u_c[::-1])
    u_o = 0.5 * (u_o + u_o[::-1])
    u_d = 0.5 * (u_d - u_d[::-1])
    channels = {f"t{site}": u_c, f"t{site - 1}": u_o.copy(),
                f"t{site + 1}": u_o.copy(), f"d{site}": u_d}
    return VoltageSchedule(channels, params.duration, sample_rate,
                           {"kind": "swap", "site": site,
                            "params": params.to_dict()})


def transport_schedule(from_seg: int, to_seg: int,
                       per_pair_duration: float = 28.0,
                       trap_volts: float = TRAP_VOLTS,
                       sample_rate: float = DEFAULT_SAMPLE_RATE,
                       ) -> VoltageSchedule:
    """Concatenated adjacent-segment cross-fades moving one well."""
    n_legs = abs(to_seg - from_seg)
    meta = {"kind": "transport", "from": from_seg, "to": to_seg,
            "pairs": n_legs}
    if n_legs == 0:
        return VoltageSchedule({}, 0.0, sample_rate, meta)
    step = 1 if to_seg > from_seg else -1
    duration = n_legs * per_pair_duration
    n_leg = n_samples_for(per_pair_duration, sample_rate)
    n = n_legs * n_leg
    path = [from_seg + step * k for k in range(n_legs + 1)]
    channels = {f"t{s}": np.zeros(n) for s in path}
    ramp = np.linspace(0.0, 1.0, n_leg)
    for leg in range(n_legs):
        sl = slice(leg * n_leg, (leg + 1) * n_leg)
        channels[f"t{path[leg]}"][sl] = trap_volts * (1.0 - ramp)
        channels[f"t{path[leg + 1]}"][sl] = trap_volts * ramp
    return VoltageSchedule(channels, duration, sample_rate, meta)


# (fraction of the morph, center-segment volts, neighbor volts); the well
# flattens, the barrier forms between the second and third frame, then the
# outer wells deepen to the standard trap voltage.
SEPARATION_KEYFRAMES = (
    (0.00, TRAP_VOLTS, 0.0),
    (0.30, -4.5, -2.5),
    (0.55, -2.0, -4.5),
    (0.80, -0.5, -5.5),
    (1.00, 0.0, TRAP_VOLTS),
)


def separation_schedule(site: int, direction_bias: float = 0.0,
                        duration: float = 100.0,
                        keyframes=SEPARATION_KEYFRAMES,
                        sample_rate: float = DEFAULT_SAMPLE_RATE,
                        ) -> VoltageSchedule:
    """Morph one well at ``site`` into two wells at ``site +- 1``.

    ``direction_bias`` (V) is a transient differential depth between the
    destination wells, peaking mid-morph: positive bias deepens the left
    well, pulling surplus ions to the left during an unequal split.
    """
    n = n_samples_for(duration, sample_rate)
    last = n - 1
    nodes_c = [(round(f * last), vc) for f, vc, _ in keyframes]
    nodes_n = [(round(f * last), vn) for f, _, vn in keyframes]
    v_c = _pwl(n, nodes_c)
    v_n = _pwl(n, nodes_n)
    hat = 1.0 - np.abs(np.linspace(-1.0, 1.0, n))
    v_left = v_n - 0.5 * direction_bias * hat
    v_right = v_n + 0.5 * direction_bias * hat
    channels = {f"t{site}": v_c, f"t{site - 1}": v_left,
                f"t{site + 1}": v_right}
    return VoltageSchedule(channels, duration, sample_rate,
                           {"kind": "separate", "site": site,
                            "bias": direction_bias})


def merge_schedule(site: int, direction_bias: float = 0.0,
                   duration: float = 100.0,
                   keyframes=SEPARATION_KEYFRAMES,
                   sample_rate: float = DEFAULT_SAMPLE_RATE) -> VoltageSchedule:
    """Time reverse of `separation_schedule`, sample exact."""
    sched = separation_schedule(site, direction_bias, duration, keyframes,
                                sample_rate).reversed()
    sched.metadata.update({"kind": "merge", "site": site})
    return sched


def hold_schedule(static: dict, duration: float,
                  sample_rate: float = DEFAULT_SAMPLE_RATE) -> VoltageSchedule:
    n = n_samples_for(duration, sample_rate)
    channels = {cid: np.full(n, float(v)) for cid, v in static.items()}
    return VoltageSchedule(channels, duration, sample_rate, {"kind": "hold"})
