"""Internal qubit states, Zeeman phase accumulation, and noisy readout.

Qubits live in the ground-state Zeeman doublet; basis index 0 is spin up
(bright in fluorescence, recorded as bit 1), index 1 spin down (dark,
bit 0).  Registers hold a density matrix over the labeled ions in label
order.  Pulse convention: a rotation through angle theta at phase phi is
exp(-i theta/2 (cos(phi) X + sin(phi) Y)); the "Y" pulse uses a base phase
of -pi/2, so that R_Y(pi/2)|up> = (|up> - |down>)/sqrt(2), matching the
preparation table of the tomography sequence.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .constants import PHASE_RATE_PER_US_T
from .errors import ConfigurationError, FitError

SIGMA_I = np.eye(2, dtype=complex)
SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)

_AXIS_PHASE = {"X": 0.0, "Y": -0.5 * math.pi}


def rotation_matrix(angle: float, phase: float) -> np.ndarray:
    axis = math.cos(phase) * SIGMA_X + math.sin(phase) * SIGMA_Y
    return (math.cos(0.5 * angle) * SIGMA_I
            - 1j * math.sin(0.5 * angle) * axis)


def z_rotation(phi: float) -> np.ndarray:
    return np.diag([np.exp(-0.5j * phi), np.exp(0.5j * phi)])


class QubitRegister:
    """Joint state of up to three labeled ion qubits."""

    def __init__(self, labels=("A", "B")):
        self.labels = tuple(labels)
        n = len(self.labels)
        if not 1 <= n <= 3:
            raise ConfigurationError("register supports 1..3 ions")
        dim = 2 ** n
        self.rho = np.zeros((dim, dim), dtype=complex)
        self.rho[0, 0] = 1.0  # all spins up

    @property
    def n_qubits(self) -> int:
        return len(self.labels)

    def index(self, label) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise ConfigurationError(f"unknown ion label {label!r}")

    def check_normalized(self, tol=1e-12):
        return abs(np.trace(self.rho).real - 1.0) < tol

    def _expand(self, u: np.ndarray, ion: int) -> np.ndarray:
        mats = [SIGMA_I] * self.n_qubits
        mats[ion] = u
        out = mats[0]
        for m in mats[1:]:
            out = np.kron(out, m)
        return out

    def apply_unitary(self, u: np.ndarray, label) -> None:
        full = self._expand(u, self.index(label))
        self.rho = full @ self.rho @ full.conj().T

    def apply_pair_phase(self, label_a, label_b, phi: float) -> None:
        """exp(-i phi/2 Z Z) on a pair (swap systematic-error knob)."""
        if phi == 0.0:
            return
        mats = [SIGMA_I] * self.n_qubits
        mats[self.index(label_a)] = SIGMA_Z
        mats[self.index(label_b)] = SIGMA_Z
        zz = mats[0]
        for m in mats[1:]:
            zz = np.kron(zz, m)
        from scipy.linalg import expm
        u = expm(-0.5j * phi * zz)
        self.rho = u @ self.rho @ u.conj().T

    def reset_up(self, label) -> None:
        """Optical pumping: project one ion to spin up, others untouched."""
        i = self.index(label)
        n = self.n_qubits
        t = self.rho.reshape((2,) * (2 * n))
        keep = [slice(None)] * (2 * n)
        up, down = [], []
        for sel in (0, 1):
            idx = list(keep)
            idx[i] = sel
            idx[n + i] = sel
            block = t[tuple(idx)]
            (up if sel == 0 else down).append(block)
        reduced = up[0] + down[0]  # partial trace over ion i
        new = np.zeros_like(t)
        idx = list(keep)
        idx[i] = 0
        idx[n + i] = 0
        new[tuple(idx)] = reduced
        self.rho = new.reshape(self.rho.shape)

    def depolarize(self, label, p: float) -> None:
        if p <= 0.0:
            return
        i = self.index(label)
        acc = (1.0 - p) * self.rho
        for pauli in (SIGMA_X, SIGMA_Y, SIGMA_Z, SIGMA_I):
            full = self._expand(pauli, i)
            acc += (p / 4.0) * (full @ self.rho @ full.conj().T)
        self.rho = acc

    def z_probabilities(self) -> np.ndarray:
        p = np.real(np.diag(self.rho)).copy()
        p[p < 0] = 0.0
        return p / p.sum()


def rotate(register: QubitRegister, label, axis: str, angle: float,
           phase_offset: float = 0.0) -> None:
    """Single-qubit rotation about an equatorial axis (X or Y base)."""
    if axis not in _AXIS_PHASE:
        raise ConfigurationError(f"axis must be X or Y, got {axis!r}")
    register.apply_unitary(
        rotation_matrix(angle, _AXIS_PHASE[axis] + phase_offset), label)


def apply_phase(register: QubitRegister, label, phi: float) -> None:
    register.apply_unitary(z_rotation(phi), label)


@dataclass
class FieldMap:
    """Deviation of the magnetic field from its LIZ value vs axial x (um).

    Defaults to gradient + curvature; ``custom`` overrides with any callable
    satisfying custom(0) == 0.
    """

    gradient_t_per_um: float = 4.0e-11
    curvature_t_per_um2: float = 1.0e-14
    custom: object = None

    def __post_init__(self):
        if self.custom is not None and abs(self.custom(0.0)) > 1e-30:
            raise ConfigurationError("field map must vanish at the LIZ")

    def delta_b(self, x):
        if self.custom is not None:
            return self.custom(x)
        x = np.asarray(x, dtype=float)
        return self.gradient_t_per_um * x + self.curvature_t_per_um2 * x * x

    def phase_rate(self, x):
        """d(phi)/dt in rad/us at axial position x."""
        return PHASE_RATE_PER_US_T * self.delta_b(x)


@dataclass
class PositionInterval:
    """One piece of an ion's axial history: constant park or linear move."""

    t0: float
    t1: float
    x0: float
    x1: float | None = None  # None: parked at x0

    @property
    def is_constant(self):
        return self.x1 is None or self.x1 == self.x0

    def x_at(self, t):
        if self.is_constant:
            return np.full_like(np.asarray(t, float), self.x0)
        frac = (np.asarray(t, float) - self.t0) / (self.t1 - self.t0)
        return self.x0 + frac * ((self.x1 if self.x1 is not None else self.x0)
                                 - self.x0)


class PositionHistory:
    """Contiguous piecewise axial trajectory of one ion."""

    def __init__(self):
        self.intervals: list[PositionInterval] = []
        self.samples = []  # optional (t_array, x_array) pieces, dynamical mode

    def park(self, t0, t1, x):
        self._append(PositionInterval(t0, t1, x))

    def move(self, t0, t1, x0, x1):
        self._append(PositionInterval(t0, t1, x0, x1))

    def _append(self, iv):
        if self.intervals:
            prev = self.intervals[-1]
            if abs(prev.t1 - iv.t0) > 1e-9:
                raise ConfigurationError(
                    f"history gap: {prev.t1} -> {iv.t0}")
        self.intervals.append(iv)

    def add_samples(self, t, x):
        """Attach an integrator trajectory piece covering [t[0], t[-1]]."""
        self.samples.append((np.asarray(t, float), np.asarray(x, float)))
        if self.intervals and abs(self.intervals[-1].t1 - t[0]) > 1e-9:
            raise ConfigurationError("sampled piece does not abut history")
        self.intervals.append(PositionInterval(t[0], t[-1], x[0], x[-1]))
        self.intervals[-1].sampled = len(self.samples) - 1

    @property
    def t_end(self):
        return self.intervals[-1].t1 if self.intervals else 0.0

    def x_end(self):
        last = self.intervals[-1]
        return last.x0 if last.is_constant else last.x1


def _simpson_nonuniform(t, y):
    # composite Simpson on a uniform grid; fall back to trapezoid tails
    n = len(t)
    if n < 3:
        return np.trapezoid(y, t)
    if n % 2 == 0:
        core = _simpson_nonuniform(t[:-1], y[:-1])
        return core + 0.5 * (t[-1] - t[-2]) * (y[-1] + y[-2])
    h = t[1] - t[0]
    return h / 3.0 * (y[0] + y[-1] + 4.0 * np.sum(y[1:-1:2])
                      + 2.0 * np.sum(y[2:-2:2]))


def accumulate_phase(history: PositionHistory, t_start: float, t_end: float,
                     fieldmap: FieldMap) -> float:
    """Zeeman phase picked up over [t_start, t_end] along the history.

    Parked intervals integrate exactly; moving and sampled intervals use
    composite Simpson (exact for the default quadratic field map on linear
    moves).  Raises when the window is not fully covered.
    """
    if t_end < t_start - 1e-12:
        raise ConfigurationError("phase window is reversed")
    if (not history.intervals
            or history.intervals[0].t0 > t_start + 1e-9
            or history.t_end < t_end - 1e-9):
        raise ConfigurationError("history does not cover the phase window")
    phi = 0.0
    for iv in history.intervals:
        lo = max(iv.t0, t_start)
        hi = min(iv.t1, t_end)
        if hi <= lo:
            continue
        if getattr(iv, "sampled", None) is not None:
            t_arr, x_arr = history.samples[iv.sampled]
            mask = (t_arr >= lo - 1e-12) & (t_arr <= hi + 1e-12)
            tt, xx = t_arr[mask], x_arr[mask]
            if len(tt) < 2:
                continue
            phi += _simpson_nonuniform(tt, fieldmap.phase_rate(xx))
        elif iv.is_constant:
            phi += float(fieldmap.phase_rate(iv.x0)) * (hi - lo)
        else:
            tt = np.linspace(lo, hi, 33)
            phi += _simpson_nonuniform(tt, fieldmap.phase_rate(iv.x_at(tt)))
    return phi


@dataclass
class ReadoutModel:
    """Per-ion symmetric-or-not confusion model.

    ``eps_up_to_dark`` is P(read dark | spin up), ``eps_down_to_bright``
    P(read bright | spin down); both < 0.5 so the matrix stays invertible.
    """

    eps_up_to_dark: float = 0.0
    eps_down_to_bright: float = 0.0
    shots: int = 1000

    def __post_init__(self):
        for e in (self.eps_up_to_dark, self.eps_down_to_bright):
            if not 0.0 <= e < 0.5:
                raise ConfigurationError("readout errors must be in [0, 0.5)")

    def confusion_matrix(self) -> np.ndarray:
        """C[measured_bit, true_bit] with bit 1 = bright = spin up."""
        e_u, e_d = self.eps_up_to_dark, self.eps_down_to_bright
        return np.array([[1.0 - e_d, e_u],    # measured 0 | true 0, 1
                         [e_d, 1.0 - e_u]])   # measured 1 | true 0, 1


def measure(register: QubitRegister, readout: ReadoutModel, shots: int,
            rng) -> np.ndarray:
    """Sample joint Z outcomes, then flip bits per the confusion model.

    Returns (shots, n_qubits) of 0/1 with bit 1 = bright = spin up, columns
    in label order.  Deterministic given the generator state.
    """
    n = register.n_qubits
    p = register.z_probabilities()
    outcomes = rng.choice(len(p), size=shots, p=p)
    bits = np.empty((shots, n), dtype=np.int8)
    for k in range(n):
        basis_bit = (outcomes >> (n - 1 - k)) & 1
        bits[:, k] = 1 - basis_bit  # basis index 0 is spin up = bright
    if readout.eps_up_to_dark > 0 or readout.eps_down_to_bright > 0:
        u = rng.random(size=bits.shape)
        flip_up = (bits == 1) & (u < readout.eps_up_to_dark)
        flip_down = (bits == 0) & (u < readout.eps_down_to_bright)
        bits[flip_up] = 0
        bits[flip_down] = 1
    return bits


def write_shots_csv(path, labels, bits):
    header = ",".join(["shot"] + list(labels))
    data = np.column_stack([np.arange(len(bits)), bits])
    np.savetxt(path, data, fmt="%d", delimiter=",", header=header,
               comments="")


# ---------------------------------------------------------------------------
# Spin-echo mapping of the field inhomogeneity


def _measure_axis(rho2: np.ndarray, axis: str, shots: int, rng) -> float:
    """<X> or <Y> of a single-qubit state from projective shots."""
    reg = QubitRegister(("probe",))
    reg.rho = rho2.copy()
    rotate(reg, "probe", "Y" if axis == "X" else "X", 0.5 * math.pi)
    p_up = float(np.real(reg.rho[0, 0]))
    k = rng.binomial(shots, min(max(p_up, 0.0), 1.0))
    return 2.0 * k / shots - 1.0


def _wls_line(t, y, sigma):
    w = 1.0 / np.asarray(sigma) ** 2
    t = np.asarray(t, float)
    y = np.asarray(y, float)
    sw = np.sum(w)
    tbar = np.sum(w * t) / sw
    ybar = np.sum(w * y) / sw
    stt = np.sum(w * (t - tbar) ** 2)
    slope = np.sum(w * (t - tbar) * (y - ybar)) / stt
    intercept = ybar - slope * tbar
    return slope, intercept, math.sqrt(1.0 / stt)


def ramsey_field_scan(fieldmap: FieldMap, positions_um, hold_times_us,
                      shots: int = 400, rng=None, transit_time_us: float = 56.0):
    """Map out delta-B(x) blind, with the spin-echo shuttling protocol.

    For each probe position: prepare a superposition at the LIZ, move out,
    hold t, move back, refocusing pi pulse, hold t at the LIZ, then state
    tomography of the equatorial phase.  A weighted line fit of phase vs t
    per position yields delta-B with uncertainty.

    Returns a list of dicts with x, recovered delta-B, its sigma, and the
    shuttling offset phase.
    """
    if len(hold_times_us) < 3:
        raise ConfigurationError("need at least 3 hold times for a slope fit")
    rng = rng if rng is not None else np.random.default_rng(0)
    results = []
    for x in positions_um:
        phases, sigmas = [], []
        for t_hold in hold_times_us:
            hist = PositionHistory()
            t = 0.0
            hist.move(t, t + transit_time_us, 0.0, x)
            t += transit_time_us
            hist.park(t, t + t_hold, x)
            t += t_hold
            hist.move(t, t + transit_time_us, x, 0.0)
            t += transit_time_us
            t_pi = t
            hist.park(t, t + t_hold, 0.0)
            t += t_hold

            reg = QubitRegister(("probe",))
            rotate(reg, "probe", "X", 0.5 * math.pi)
            phi1 = accumulate_phase(hist, 0.0, t_pi, fieldmap)
            apply_phase(reg, "probe", phi1)
            rotate(reg, "probe", "X", math.pi)
            phi2 = accumulate_phase(hist, t_pi, t, fieldmap)
            apply_phase(reg, "probe", phi2)
            ex = _measure_axis(reg.rho, "X", shots, rng)
            ey = _measure_axis(reg.rho, "Y", shots, rng)
            r2 = max(ex * ex + ey * ey, 1e-6)
            theta = math.atan2(ey, ex)
            c2, s2 = math.cos(theta) ** 2, math.sin(theta) ** 2
            var = (s2 * (1.0 - min(r2, 1.0) * c2)
                   + c2 * (1.0 - min(r2, 1.0) * s2)) / (shots * r2)
            phases.append(theta)
            sigmas.append(max(math.sqrt(var), 1e-6))
        phases = np.unwrap(np.asarray(phases))
        slope, intercept, slope_sigma = _wls_line(hold_times_us, phases,
                                                  sigmas)
        # The refocusing pulse inverts the phase of the first window, so the
        # measured slope is -rate * delta-B at the probe position.
        results.append({
            "x_um": float(x),
            "delta_b_t": -slope / PHASE_RATE_PER_US_T,
            "sigma_t": slope_sigma / PHASE_RATE_PER_US_T,
            "phi0": float(intercept),
            "injected_t": float(fieldmap.delta_b(x)),
        })
    return results
