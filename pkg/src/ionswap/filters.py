"""Second-order low-pass model of the per-channel analog filters.

The hardware filter is a passive Pi-type network with a published cutoff
but unpublished component values; it is modeled as the critically-flat
(Butterworth) second-order low pass

    v'' + 2 zeta w_c v' + w_c^2 v = w_c^2 u(t)

with zeta a configuration knob (default 1/sqrt(2)).  Driving it with the
zero-order-hold sample stream has an exact piecewise solution, which this
module evaluates in closed form: no ODE discretization error, DC gain is
exactly 1, and filtering is exactly linear in the input schedule.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .constants import TWO_PI
from .errors import ConfigurationError
from .trap import VoltageAssignment
from .waveforms import VoltageSchedule

DEFAULT_CUTOFF_ANGULAR = TWO_PI * 0.05  # 2pi x 50 kHz in rad/us


@dataclass(frozen=True)
class FilterModel:
    """Cutoff (angular, rad/us), damping ratio, fixed order 2."""

    cutoff_angular: float = DEFAULT_CUTOFF_ANGULAR
    zeta: float = 1.0 / math.sqrt(2.0)
    order: int = 2

    def __post_init__(self):
        if self.order != 2:
            raise ConfigurationError("only the second-order model is supported")
        if self.cutoff_angular <= 0:
            raise ConfigurationError("cutoff must be positive")
        if not self.zeta < 1.0:
            raise ConfigurationError("model assumes an underdamped pair")
        if self.overshoot() >= 0.05:
            raise ConfigurationError(
                f"zeta={self.zeta} overshoots {self.overshoot():.1%} (>= 5%)")

    @property
    def sigma(self) -> float:
        return self.zeta * self.cutoff_angular

    @property
    def omega_d(self) -> float:
        return self.cutoff_angular * math.sqrt(1.0 - self.zeta ** 2)

    def overshoot(self) -> float:
        z = self.zeta
        return math.exp(-math.pi * z / math.sqrt(1.0 - z * z))

    def step_response(self, t) -> np.ndarray:
        """Unit step response, closed form."""
        t = np.asarray(t, dtype=float)
        wd, sg = self.omega_d, self.sigma
        out = 1.0 - np.exp(-sg * t) * (np.cos(wd * t)
                                       + sg / wd * np.sin(wd * t))
        return np.where(t >= 0, out, 0.0)


def _propagate(e0, edot0, sigma, omega_d, dt):
    """Advance the homogeneous deviation state (e, e') by dt."""
    c, s = math.cos(omega_d * dt), math.sin(omega_d * dt)
    decay = math.exp(-sigma * dt)
    b = (edot0 + sigma * e0) / omega_d
    e = decay * (e0 * c + b * s)
    edot = decay * (edot0 * c - (sigma * edot0 + (sigma ** 2 + omega_d ** 2)
                                 * e0) / omega_d * s)
    return e, edot


class FilteredSchedule:
    """Continuous-time filtered voltages of a sampled schedule.

    Exact solution of the filter ODE driven by the zero-order-hold input;
    evaluable at any t in [0, duration + settle_tail].  Before t=0 the
    filter is initialized settled at the first sample.
    """

    def __init__(self, schedule: VoltageSchedule, model: FilterModel | None = None,
                 settle_tol_v: float = 1e-4):
        self.model = model or FilterModel()
        self.schedule = schedule
        self.channel_ids = schedule.channel_ids
        self.duration = schedule.duration
        n = schedule.n_samples
        if n < 1:
            raise ConfigurationError("cannot filter an empty schedule")
        h = 1.0 / schedule.sample_rate
        sg, wd = self.model.sigma, self.model.omega_d
        m = len(self.channel_ids)
        self._u = np.zeros((n, m))
        self._e0 = np.zeros((n, m))
        self._ed0 = np.zeros((n, m))
        for j, cid in enumerate(self.channel_ids):
            u = schedule.channels[cid]
            e, edot = 0.0, 0.0
            prev = u[0]
            for k in range(n):
                # the deviation jumps by the input step at each boundary
                e += prev - u[k]
                prev = u[k]
                self._u[k, j] = u[k]
                self._e0[k, j] = e
                self._ed0[k, j] = edot
                e, edot = _propagate(e, edot, sg, wd, h)
        self._boundaries = schedule.sample_times()
        amp = np.sqrt(self._e0[-1] ** 2
                      + ((self._ed0[-1] + sg * self._e0[-1]) / wd) ** 2)
        worst = float(np.max(amp)) if m else 0.0
        self.settle_tail = (max(0.0, math.log(worst / settle_tol_v) / sg)
                            if worst > settle_tol_v else 0.0)

    @property
    def span(self) -> float:
        """End of the evaluable window: last sample time plus settle tail."""
        return float(self._boundaries[-1]) + self.settle_tail

    def sample(self, t) -> np.ndarray:
        """Filtered voltages at times t, shape (len(t), n_channels)."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        k = np.clip(np.searchsorted(self._boundaries, t, side="right") - 1,
                    0, len(self._boundaries) - 1)
        delta = np.clip(t - self._boundaries[k], 0.0, None)[:, None]
        sg, wd = self.model.sigma, self.model.omega_d
        e0, ed0, u = self._e0[k], self._ed0[k], self._u[k]
        b = (ed0 + sg * e0) / wd
        decay = np.exp(-sg * delta)
        e = decay * (e0 * np.cos(wd * delta) + b * np.sin(wd * delta))
        return u + e

    def channel(self, cid: str, t) -> np.ndarray:
        j = self.channel_ids.index(cid)
        return self.sample(t)[:, j]

    def assignment_at(self, t) -> VoltageAssignment:
        vals = self.sample(np.array([float(t)]))[0]
        return VoltageAssignment(dict(zip(self.channel_ids, vals)))

    def final_assignment(self) -> VoltageAssignment:
        return VoltageAssignment(
            dict(zip(self.channel_ids, self._u[-1])))


def apply_filter(schedule: VoltageSchedule, model: FilterModel | None = None,
                 settle_tol_v: float = 1e-4) -> FilteredSchedule:
    """Continuous filtered form of a sampled schedule."""
    return FilteredSchedule(schedule, model, settle_tol_v)


def _first_crossing(t, trace, level, rising):
    sign = 1.0 if rising else -1.0
    above = sign * (trace - level) >= 0
    idx = np.argmax(above)
    if not above[idx]:
        return None
    if idx == 0:
        return t[0]
    t0, t1 = t[idx - 1], t[idx]
    v0, v1 = trace[idx - 1], trace[idx]
    return t0 + (level - v0) / (v1 - v0) * (t1 - t0)


def swap_effective_duration(filtered: FilteredSchedule) -> float:
    """Effective process duration of a filtered swap schedule.

    Total time spent in voltage transitions: the programmed schedule is five
    back-to-back monotone ramp phases (U_d up, deepen, U_d flip, relax, U_d
    down); each phase contributes the 10-90% transition time of its active
    filtered channel, and the widths add up.  This reproduces the way the
    experiment quotes the actual duration of the filtered process.
    """
    meta = filtered.schedule.metadata
    if meta.get("kind") != "swap":
        raise ConfigurationError("metric is defined for swap schedules")
    params = meta["params"]
    site = meta["site"]
    T = params["duration"]
    b = params["breakpoints"]
    d_id, c_id = f"d{site}", f"t{site}"
    phases = [
        (0.0, b[0], d_id, 0.0, params["u_d_peak"]),
        (b[0], b[1], c_id, params["u_c_start"], params["u_c_deep"]),
        (b[1], b[2], d_id, params["u_d_peak"], -params["u_d_peak"]),
        (b[2], b[3], c_id, params["u_c_deep"], params["u_c_start"]),
        (b[3], 1.0, d_id, -params["u_d_peak"], 0.0),
    ]
    total = 0.0
    for tau0, tau1, cid, v0, v1 in phases:
        t = np.arange(tau0 * T, T + filtered.settle_tail + 20.0, 0.01)
        trace = filtered.channel(cid, t)
        sign = 1.0 if v1 > v0 else -1.0
        # The filtered trace lags the program and may never reach the
        # programmed endpoints, so measure between the extrema it actually
        # visits: from the opposing extremum where this transition departs
        # to the extremum where it completes.
        i_end = int(np.argmax(sign * trace))
        i_start = int(np.argmin(sign * trace[:i_end + 1]))
        lo = trace[i_start] + 0.1 * (trace[i_end] - trace[i_start])
        hi = trace[i_start] + 0.9 * (trace[i_end] - trace[i_start])
        seg_t, seg = t[i_start:i_end + 1], trace[i_start:i_end + 1]
        t_lo = _first_crossing(seg_t, seg, lo, sign > 0)
        t_hi = _first_crossing(seg_t, seg, hi, sign > 0)
        if t_lo is None or t_hi is None:
            raise ConfigurationError(
                f"phase {cid} [{tau0}, {tau1}] never completes its transition")
        total += t_hi - t_lo
    return total
