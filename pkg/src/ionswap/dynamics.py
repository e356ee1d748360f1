"""Classical dynamics of small Ca+ crystals in the surrogate trap.

Equilibria, normal modes, symplectic integration of the time-dependent
filtered potential, and per-mode coherent excitation extracted from a
trajectory end state.  Energies are bookkept in eV for equilibrium finding
and in mechanical units (u um^2/us^2) for dynamics and mode analysis.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass

import numpy as np
from numba import njit
from scipy.optimize import minimize

from . import trap as trap_mod
from .constants import (EV_TO_MECH, HBAR_MECH_US, ION_CHARGE_E, ION_MASS_U,
                        K_COULOMB_EV_UM, K_COULOMB_MECH, TWO_PI)
from .errors import IonEscapeError, PhysicsError, UnstableConfigurationError

MIN_ION_SEPARATION_UM = 0.1


@dataclass
class CrystalState:
    """Positions (um) and velocities (um/us) of an N-ion crystal, N in 1..3."""

    positions: np.ndarray
    velocities: np.ndarray | None = None
    mass: float = ION_MASS_U
    charge: float = ION_CHARGE_E

    def __post_init__(self):
        self.positions = np.atleast_2d(np.asarray(self.positions, float)).copy()
        n = self.positions.shape[0]
        if not 1 <= n <= 3 or self.positions.shape[1] != 3:
            raise ValueError("positions must be (N, 3) with N in 1..3")
        if self.velocities is None:
            self.velocities = np.zeros_like(self.positions)
        self.velocities = np.atleast_2d(np.asarray(self.velocities, float)).copy()
        if self.velocities.shape != self.positions.shape:
            raise ValueError("velocity shape mismatch")
        for i, j in itertools.combinations(range(n), 2):
            if np.linalg.norm(self.positions[i] - self.positions[j]) <= MIN_ION_SEPARATION_UM:
                raise ValueError(f"ions {i} and {j} closer than "
                                 f"{MIN_ION_SEPARATION_UM} um")

    @property
    def n_ions(self) -> int:
        return self.positions.shape[0]


@dataclass
class ModeSet:
    """Normal modes at an equilibrium configuration.

    ``vectors[:, m]`` is the mass-weighted eigenvector of mode m (3N
    components, ion-major: x0, y0, z0, x1, ...), orthonormal; frequencies
    are in MHz, ascending.
    """

    equilibrium: np.ndarray
    freqs_mhz: np.ndarray
    vectors: np.ndarray
    labels: list
    mass: float = ION_MASS_U

    @property
    def n_ions(self) -> int:
        return self.equilibrium.shape[0]

    def q_zpf(self) -> np.ndarray:
        """Zero-point scale sqrt(hbar/2w) per mode, mass-weighted coords."""
        omega = TWO_PI * self.freqs_mhz
        return np.sqrt(HBAR_MECH_US / (2.0 * omega))

    def p_zpf(self) -> np.ndarray:
        omega = TWO_PI * self.freqs_mhz
        return np.sqrt(HBAR_MECH_US * omega / 2.0)


@dataclass
class ExcitationReport:
    """Per-mode coherent amplitude and mean phonon number."""

    labels: list
    freqs_mhz: np.ndarray
    nbar: np.ndarray
    alpha: np.ndarray
    q_zpf: np.ndarray

    def max_nbar(self) -> float:
        return float(np.max(self.nbar))

    def to_dict(self) -> dict:
        return {
            "modes": [
                {"label": l, "freq_mhz": float(f), "nbar": float(n),
                 "alpha_re": float(a.real), "alpha_im": float(a.imag),
                 "q_zpf": float(q)}
                for l, f, n, a, q in zip(self.labels, self.freqs_mhz,
                                         self.nbar, self.alpha, self.q_zpf)
            ]
        }

    def dump_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)


@dataclass
class Trajectory:
    """Stride-sampled integrator output."""

    t: np.ndarray
    positions: np.ndarray   # (M, N, 3)
    velocities: np.ndarray  # (M, N, 3)
    mass: float = ION_MASS_U
    charge: float = ION_CHARGE_E

    def final_state(self) -> CrystalState:
        return CrystalState(self.positions[-1], self.velocities[-1],
                            mass=self.mass, charge=self.charge)

    def write_csv(self, path):
        n = self.positions.shape[1]
        cols = ["t_us"] + [f"{ax}{i}" for i in range(n) for ax in ("x", "y", "z")]
        flat = self.positions.reshape(len(self.t), -1)
        data = np.column_stack([self.t, flat])
        np.savetxt(path, data, delimiter=",", header=",".join(cols), comments="")


class TrapField:
    """Static potential evaluator: geometry plus one voltage assignment."""

    def __init__(self, geometry: trap_mod.TrapGeometry,
                 volts: trap_mod.VoltageAssignment):
        self.geometry = geometry
        self.volts = volts

    def phi(self, r):
        return trap_mod.potential(self.geometry, self.volts, r)

    def grad(self, r):
        return trap_mod.gradient(self.geometry, self.volts, r)

    def hess(self, r):
        return trap_mod.hessian(self.geometry, self.volts, r)


class HarmonicField:
    """Ideal harmonic well, used as an oracle stand-in for the surrogate."""

    def __init__(self, freqs_mhz, mass=ION_MASS_U, charge=ION_CHARGE_E,
                 center=(0.0, 0.0, 0.0)):
        from .constants import secular_curvature
        self.curv = np.array([secular_curvature(f, mass, charge)
                              for f in freqs_mhz])
        self.center = np.asarray(center, float)

    def phi(self, r):
        d = np.asarray(r, float) - self.center
        return 0.5 * np.sum(self.curv * d * d, axis=-1)

    def grad(self, r):
        d = np.asarray(r, float) - self.center
        return self.curv * d

    def hess(self, r):
        return np.diag(self.curv)


def coulomb_energy_ev(positions, charge=ION_CHARGE_E):
    e = 0.0
    n = len(positions)
    for i in range(n):
        for j in range(i + 1, n):
            e += K_COULOMB_EV_UM * charge * charge / np.linalg.norm(
                positions[i] - positions[j])
    return e


def total_potential_ev(fld, positions, charge=ION_CHARGE_E):
    positions = np.atleast_2d(positions)
    return charge * float(np.sum(fld.phi(positions))) + coulomb_energy_ev(
        positions, charge)


def _energy_grad_ev(fld, flat, n, charge):
    pos = flat.reshape(n, 3)
    grad = charge * fld.grad(pos)
    for i in range(n):
        for j in range(i + 1, n):
            d = pos[i] - pos[j]
            r = np.linalg.norm(d)
            f = -K_COULOMB_EV_UM * charge * charge * d / r**3
            grad[i] += f
            grad[j] -= f
    return grad.ravel()


def _energy_hessian_ev(fld, positions, charge):
    n = len(positions)
    h = np.zeros((3 * n, 3 * n))
    for i in range(n):
        h[3 * i:3 * i + 3, 3 * i:3 * i + 3] += charge * fld.hess(positions[i])
    for i in range(n):
        for j in range(i + 1, n):
            d = positions[i] - positions[j]
            r = np.linalg.norm(d)
            blk = K_COULOMB_EV_UM * charge * charge * (
                3.0 * np.outer(d, d) / r**5 - np.eye(3) / r**3)
            h[3 * i:3 * i + 3, 3 * i:3 * i + 3] += blk
            h[3 * j:3 * j + 3, 3 * j:3 * j + 3] += blk
            h[3 * i:3 * i + 3, 3 * j:3 * j + 3] -= blk
            h[3 * j:3 * j + 3, 3 * i:3 * i + 3] -= blk
    return h


def default_guess(n_ions, center_x=0.0, spacing=4.3):
    """Linear chain along x around the well center."""
    xs = center_x + spacing * (np.arange(n_ions) - 0.5 * (n_ions - 1))
    out = np.zeros((n_ions, 3))
    out[:, 0] = xs
    return out


def find_equilibrium(fld, n_ions, guess=None, charge=ION_CHARGE_E,
                     gtol=1e-10, max_newton=60) -> np.ndarray:
    """Minimize total energy; returns (N, 3) with |grad| < gtol eV/um.

    Raises UnstableConfigurationError when the stationary point is a saddle
    and PhysicsError on non-convergence.
    """
    if guess is None:
        guess = default_guess(n_ions)
    guess = np.atleast_2d(np.asarray(guess, float))

    def fun(flat):
        return total_potential_ev(fld, flat.reshape(n_ions, 3), charge)

    def jac(flat):
        return _energy_grad_ev(fld, flat, n_ions, charge)

    res = minimize(fun, guess.ravel(), jac=jac, method="BFGS",
                   options={"gtol": 1e-8, "maxiter": 500})
    flat = res.x
    for _ in range(max_newton):
        g = jac(flat)
        if np.linalg.norm(g) < gtol:
            break
        h = _energy_hessian_ev(fld, flat.reshape(n_ions, 3), charge)
        try:
            step = np.linalg.solve(h, -g)
        except np.linalg.LinAlgError:
            raise PhysicsError("singular Hessian during equilibrium polish")
        # Damp large Newton steps; the basin is narrow in um units.
        norm = np.linalg.norm(step)
        if norm > 2.0:
            step *= 2.0 / norm
        flat = flat + step
    else:
        raise PhysicsError(
            f"equilibrium gradient {np.linalg.norm(jac(flat)):.2e} "
            f"did not reach {gtol}")
    h = _energy_hessian_ev(fld, flat.reshape(n_ions, 3), charge)
    evals = np.linalg.eigvalsh(h)
    if evals[0] <= 0:
        raise UnstableConfigurationError(
            f"stationary point has curvature {evals[0]:.3e} <= 0 (saddle)")
    return flat.reshape(n_ions, 3)


_AXIS_NAMES = {0: "axial", 1: "radial-low", 2: "radial-high"}


def _label_modes(vectors, n_ions):
    labels = []
    for m in range(vectors.shape[1]):
        v = vectors[:, m].reshape(n_ions, 3)
        axis = int(np.argmax(np.sum(v * v, axis=0)))
        name = _AXIS_NAMES[axis]
        if n_ions == 1:
            labels.append(name)
            continue
        comps = v[:, axis]
        in_phase = np.all(comps >= -1e-9) or np.all(comps <= 1e-9)
        if n_ions == 2:
            if in_phase:
                kind = "com"
            else:
                kind = "stretch" if axis == 0 else "rocking"
            if axis == 0:
                labels.append(f"axial-{kind}")
            else:
                low_high = "low" if axis == 1 else "high"
                labels.append(f"radial-{kind}-{low_high}")
        else:
            kind = "com" if in_phase else "alt"
            labels.append(f"{name}-{kind}-{m}")
    return labels


def normal_modes(fld, equilibrium, mass=ION_MASS_U, charge=ION_CHARGE_E,
                 allow_unstable=False) -> ModeSet:
    """Eigendecomposition of the mass-weighted Hessian at an equilibrium."""
    equilibrium = np.atleast_2d(np.asarray(equilibrium, float))
    n = equilibrium.shape[0]
    h_mech = _energy_hessian_ev(fld, equilibrium, charge) * EV_TO_MECH / mass
    evals, vecs = np.linalg.eigh(h_mech)
    if evals[0] < -1e-9 * abs(evals[-1]) and not allow_unstable:
        raise UnstableConfigurationError(
            f"negative mode curvature {evals[0]:.4e}")
    freqs = np.sqrt(np.clip(evals, 0.0, None)) / TWO_PI
    order = np.argsort(freqs)
    freqs, vecs = freqs[order], vecs[:, order]
    # Fix eigenvector sign: make the largest component positive.
    for m in range(vecs.shape[1]):
        k = np.argmax(np.abs(vecs[:, m]))
        if vecs[k, m] < 0:
            vecs[:, m] = -vecs[:, m]
    return ModeSet(equilibrium, freqs, vecs, _label_modes(vecs, n), mass)


def match_to_equilibrium(positions, equilibrium):
    """Permutation of ions minimizing total distance to equilibrium slots.

    Equal-mass ions are interchangeable; a physical swap must not read as a
    huge displacement.
    """
    n = len(positions)
    best, best_cost = None, np.inf
    for perm in itertools.permutations(range(n)):
        cost = np.sum((positions[list(perm)] - equilibrium) ** 2)
        if cost < best_cost:
            best, best_cost = perm, cost
    return list(best)


def mode_excitation(state: CrystalState, modes: ModeSet) -> ExcitationReport:
    """Project an end state onto the modes; nbar = |alpha|^2 per mode."""
    if np.any(modes.freqs_mhz <= 0):
        raise UnstableConfigurationError("final potential is not stable")
    perm = match_to_equilibrium(state.positions, modes.equilibrium)
    sqm = math.sqrt(state.mass)
    dq = (sqm * (state.positions[perm] - modes.equilibrium)).ravel()
    dp = (sqm * state.velocities[perm]).ravel()
    q = modes.vectors.T @ dq
    p = modes.vectors.T @ dp
    qz, pz = modes.q_zpf(), modes.p_zpf()
    alpha = q / (2.0 * qz) + 1j * p / (2.0 * pz)
    return ExcitationReport(modes.labels, modes.freqs_mhz,
                            np.abs(alpha) ** 2, alpha, qz)


def mode_energy_mech(state: CrystalState, modes: ModeSet) -> np.ndarray:
    """Harmonic energy per mode (mech units), for cross-checking nbar."""
    perm = match_to_equilibrium(state.positions, modes.equilibrium)
    sqm = math.sqrt(state.mass)
    dq = (sqm * (state.positions[perm] - modes.equilibrium)).ravel()
    dp = (sqm * state.velocities[perm]).ravel()
    q = modes.vectors.T @ dq
    p = modes.vectors.T @ dp
    omega = TWO_PI * modes.freqs_mhz
    return 0.5 * (p ** 2 + (omega * q) ** 2)


def sample_thermal_state(modes: ModeSet, nbar, rng,
                         charge=ION_CHARGE_E) -> CrystalState:
    """Classical thermal draw with per-mode mean occupation ``nbar``."""
    nbar = np.broadcast_to(np.asarray(nbar, float), modes.freqs_mhz.shape)
    omega = TWO_PI * modes.freqs_mhz
    energy = rng.exponential(np.clip(nbar, 0, None) * HBAR_MECH_US * omega)
    phase = rng.uniform(0.0, TWO_PI, size=energy.shape)
    q = np.sqrt(2.0 * energy) / omega * np.cos(phase)
    p = np.sqrt(2.0 * energy) * np.sin(phase)
    sqm = math.sqrt(modes.mass)
    dq = (modes.vectors @ q).reshape(-1, 3) / sqm
    dv = (modes.vectors @ p).reshape(-1, 3) / sqm
    return CrystalState(modes.equilibrium + dq, dv, mass=modes.mass,
                        charge=charge)


# ---------------------------------------------------------------------------
# Time integration


class StaticDrive:
    """Constant voltages presented through the drive interface."""

    def __init__(self, geometry, volts: trap_mod.VoltageAssignment):
        self.geometry = geometry
        self.volts = volts
        self.channel_ids = sorted(volts.channels)
        self.duration = 0.0

    def sample(self, t):
        t = np.asarray(t, float)
        vals = np.array([self.volts.channels[c] for c in self.channel_ids])
        return np.broadcast_to(vals, (len(t), len(vals))).copy()

    def assignment_at(self, t) -> trap_mod.VoltageAssignment:
        return self.volts


@njit(cache=True)
def _accelerations(pos, seg_x, seg_v, diag_x, diag_v, w, eta, ky, kz, cd,
                   acc_scale, k_coul_m, out):
    n = pos.shape[0]
    for i in range(n):
        x = pos[i, 0]
        y = pos[i, 1]
        z = pos[i, 2]
        gx = 0.0
        gy = ky * y
        gz = kz * z
        for k in range(seg_x.shape[0]):
            s = (x - seg_x[k]) / w
            s2 = s * s
            e = math.exp(-0.5 * s2)
            g1 = -0.25 * s * (2.0 + s2) * e
            gx += seg_v[k] * eta * g1 / w
        for k in range(diag_x.shape[0]):
            dx = x - diag_x[k]
            s = dx / w
            s2 = s * s
            e = math.exp(-0.5 * s2)
            g = (1.0 + 0.25 * s2) * e
            g1 = -0.25 * s * (2.0 + s2) * e
            gx += cd * diag_v[k] * y * (g + s * g1)
            gy += cd * diag_v[k] * dx * g
        out[i, 0] = -acc_scale * gx
        out[i, 1] = -acc_scale * gy
        out[i, 2] = -acc_scale * gz
    for i in range(n):
        for j in range(i + 1, n):
            dx = pos[i, 0] - pos[j, 0]
            dy = pos[i, 1] - pos[j, 1]
            dz = pos[i, 2] - pos[j, 2]
            r2 = dx * dx + dy * dy + dz * dz
            inv_r3 = 1.0 / (r2 * math.sqrt(r2))
            fx = k_coul_m * dx * inv_r3
            fy = k_coul_m * dy * inv_r3
            fz = k_coul_m * dz * inv_r3
            out[i, 0] += fx
            out[i, 1] += fy
            out[i, 2] += fz
            out[j, 0] -= fx
            out[j, 1] -= fy
            out[j, 2] -= fz


@njit(cache=True)
def _dkd_loop(pos, vel, dt, seg_x, seg_volts, diag_x, diag_volts, w, eta,
              ky, kz, cd, acc_scale, k_coul_m, x_lo, x_hi, r_max, stride,
              rec_pos, rec_vel, rec_idx):
    n_steps = seg_volts.shape[0]
    acc = np.zeros_like(pos)
    half = 0.5 * dt
    n_rec = 0
    for step in range(n_steps):
        for i in range(pos.shape[0]):
            pos[i, 0] += vel[i, 0] * half
            pos[i, 1] += vel[i, 1] * half
            pos[i, 2] += vel[i, 2] * half
        _accelerations(pos, seg_x, seg_volts[step], diag_x, diag_volts[step],
                       w, eta, ky, kz, cd, acc_scale, k_coul_m, acc)
        for i in range(pos.shape[0]):
            vel[i, 0] += acc[i, 0] * dt
            vel[i, 1] += acc[i, 1] * dt
            vel[i, 2] += acc[i, 2] * dt
            pos[i, 0] += vel[i, 0] * half
            pos[i, 1] += vel[i, 1] * half
            pos[i, 2] += vel[i, 2] * half
        for i in range(pos.shape[0]):
            if (not (pos[i, 0] == pos[i, 0]) or pos[i, 0] < x_lo
                    or pos[i, 0] > x_hi or abs(pos[i, 1]) > r_max
                    or abs(pos[i, 2]) > r_max):
                return -(step + 1), n_rec
        if (step + 1) % stride == 0:
            rec_pos[n_rec] = pos
            rec_vel[n_rec] = vel
            rec_idx[n_rec] = step + 1
            n_rec += 1
    return n_steps, n_rec


def integrate(geometry: trap_mod.TrapGeometry, drive, state0: CrystalState,
              t_span, dt=0.002, record_stride=200) -> Trajectory:
    """Position-Verlet (drift-kick-drift) with forces at half-step times.

    ``drive`` must expose ``channel_ids`` and ``sample(t) -> (len(t),
    n_channels)`` volts; the kernel sees voltages evaluated at interval
    midpoints.  dt must resolve the fastest mode (<= 1/(40 f_max)).
    """
    t0, t1 = t_span
    if t1 <= t0:
        raise ValueError("empty integration span")
    n_steps = int(math.ceil((t1 - t0) / dt - 1e-12))
    t_mid = t0 + (np.arange(n_steps) + 0.5) * dt
    volts = np.ascontiguousarray(drive.sample(t_mid))
    seg_idx = [i for i, c in enumerate(drive.channel_ids) if c.startswith("t")]
    diag_idx = [i for i, c in enumerate(drive.channel_ids) if c.startswith("d")]
    seg_x = np.array([geometry.segment_center(trap_mod.parse_channel(
        drive.channel_ids[i])[1]) for i in seg_idx], float)
    diag_x = np.array([geometry.segment_center(trap_mod.parse_channel(
        drive.channel_ids[i])[1]) for i in diag_idx], float)
    seg_volts = np.ascontiguousarray(volts[:, seg_idx])
    diag_volts = np.ascontiguousarray(volts[:, diag_idx])

    pos = state0.positions.copy()
    vel = state0.velocities.copy()
    centers = geometry.segment_centers
    x_lo, x_hi = centers[0] - 400.0, centers[-1] + 400.0
    n_rec_max = n_steps // record_stride + 1
    rec_pos = np.zeros((n_rec_max, pos.shape[0], 3))
    rec_vel = np.zeros_like(rec_pos)
    rec_idx = np.zeros(n_rec_max, dtype=np.int64)
    acc_scale = EV_TO_MECH * state0.charge / state0.mass
    k_coul_m = K_COULOMB_MECH * state0.charge ** 2 / state0.mass

    status, n_rec = _dkd_loop(pos, vel, dt, seg_x, seg_volts, diag_x,
                              diag_volts, geometry.axial_width,
                              geometry.bump_efficiency, geometry.kappa_y,
                              geometry.kappa_z, geometry.diag_coupling,
                              acc_scale, k_coul_m, x_lo, x_hi, 120.0,
                              record_stride, rec_pos, rec_vel, rec_idx)
    if status < 0:
        bad_step = -status
        raise IonEscapeError(t0 + bad_step * dt, -1)

    times = [t0] + list(t0 + rec_idx[:n_rec] * dt)
    all_pos = [state0.positions] + list(rec_pos[:n_rec])
    all_vel = [state0.velocities] + list(rec_vel[:n_rec])
    if n_rec == 0 or rec_idx[n_rec - 1] != n_steps:
        times.append(t0 + n_steps * dt)
        all_pos.append(pos.copy())
        all_vel.append(vel.copy())
    return Trajectory(np.asarray(times), np.asarray(all_pos),
                      np.asarray(all_vel), state0.mass, state0.charge)


def total_energy_mech(geometry, volts, state: CrystalState) -> float:
    """Kinetic plus potential energy in mechanical units."""
    kin = 0.5 * state.mass * float(np.sum(state.velocities ** 2))
    pot = total_potential_ev(TrapField(geometry, volts), state.positions,
                             state.charge) * EV_TO_MECH
    return kin + pot


def energy_series(geometry, drive, traj: Trajectory) -> np.ndarray:
    """Total energy at each recorded sample (time-dependent voltages)."""
    out = np.empty(len(traj.t))
    for k, t in enumerate(traj.t):
        vals = drive.sample(np.array([t]))[0]
        volts = trap_mod.VoltageAssignment(
            dict(zip(drive.channel_ids, vals)))
        out[k] = total_energy_mech(
            geometry, volts,
            CrystalState(traj.positions[k], traj.velocities[k],
                         traj.mass, traj.charge))
    return out


def relative_energy_drift(energies: np.ndarray, reference: float) -> float:
    """Secular drift: head-window vs tail-window mean, relative to the
    motional energy scale (total minus ``reference``, the equilibrium
    potential energy)."""
    n = len(energies)
    k = max(n // 20, 2)
    head = float(np.mean(energies[:k]))
    tail = float(np.mean(energies[-k:]))
    scale = abs(head - reference)
    if scale == 0:
        return 0.0
    return abs(tail - head) / scale
