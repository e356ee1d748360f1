"""Compose shuttling and qubit primitives into executable sequences.

A sequence is a list of primitives over labeled ions living on the segment
line.  The engine maintains the position ledger (wells, left-to-right ion
order, per-ion axial histories), advances the qubit register, accounts the
time budget, and can run either symbolically (logical mode) or with full
trajectory integration per shuttling primitive (dynamical mode).

All laser primitives act at the laser interaction zone; individual
addressing requires the target alone in its well, while pumping and
shelving may act on a whole co-trapped crystal.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import dynamics as dyn
from . import trap as trap_mod
from .errors import ConfigurationError, PhysicsError
from .filters import FilterModel, apply_filter
from .qubits import (FieldMap, PositionHistory, QubitRegister, ReadoutModel,
                     accumulate_phase, apply_phase, measure, rotate)
from .waveforms import (SwapRampParams, merge_schedule, separation_schedule,
                        swap_schedule, transport_schedule)

LASER_KINDS = ("init_pump", "rotate", "shelve", "readout")
SHUTTLE_KINDS = ("transport", "separate", "merge", "swap")
ALL_KINDS = SHUTTLE_KINDS + LASER_KINDS + ("hold",)

PROXIMITY_SEGMENTS = 6   # isolation of uninvolved ions around pair operations
WELL_GAP_SEGMENTS = 2    # minimum distance between distinct occupied wells


@dataclass
class SequencePrimitive:
    kind: str
    ions: tuple = ()
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in ALL_KINDS:
            raise ConfigurationError(f"unknown primitive kind {self.kind!r}")
        self.ions = tuple(self.ions)

    def to_dict(self):
        return {"kind": self.kind, "ions": list(self.ions),
                "params": self.params}

    @classmethod
    def from_dict(cls, d):
        return cls(d["kind"], tuple(d.get("ions", ())), d.get("params", {}))


def sequence_to_json(sequence, path=None):
    payload = [p.to_dict() for p in sequence]
    text = json.dumps(payload, indent=2)
    if path:
        with open(path, "w") as fh:
            fh.write(text)
    return text


def sequence_from_json(text_or_path):
    try:
        payload = json.loads(text_or_path)
    except (json.JSONDecodeError, TypeError):
        with open(text_or_path) as fh:
            payload = json.load(fh)
    return [SequencePrimitive.from_dict(d) for d in payload]


@dataclass
class Durations:
    """Primitive durations (us).  Laser defaults put the built-in reorder
    at the published time budget with shuttling around 93%."""

    transport_per_pair: float = 28.0
    separate: float = 100.0
    merge: float = 100.0
    swap: float = 42.0           # effective filtered duration of T=22 us
    init_pump: float = 40.0
    rotate: float = 5.0
    shelve: float = 20.0
    readout: float = 80.0

    def of(self, prim: SequencePrimitive) -> float:
        if prim.kind == "transport":
            pairs = abs(prim.params["to"] - prim.params["from"])
            return self.transport_per_pair * pairs
        if prim.kind == "hold":
            return float(prim.params.get("duration", 0.0))
        return float(getattr(self, prim.kind))


@dataclass
class SequenceReport:
    counts: dict
    transport_pairs: int
    total_us: float
    shuttling_us: float
    histories: dict
    readout_order: list

    @property
    def total_ms(self) -> float:
        return self.total_us * 1e-3

    @property
    def shuttling_fraction(self) -> float:
        return self.shuttling_us / self.total_us if self.total_us else 0.0

    def to_dict(self):
        return {"counts": self.counts,
                "transport_pairs": self.transport_pairs,
                "total_ms": self.total_ms,
                "shuttling_fraction": self.shuttling_fraction,
                "readout_order": list(self.readout_order)}


class _Ledger:
    """Symbolic well/position bookkeeping shared by validate and run."""

    def __init__(self, layout: dict):
        # layout: label -> segment; co-trapped groups share a segment and
        # are ordered left-to-right by their list order.
        self.wells: dict[int, list] = {}
        for label, seg in layout.items():
            self.wells.setdefault(int(seg), []).append(label)

    def segment_of(self, label) -> int:
        for seg, ions in self.wells.items():
            if label in ions:
                return seg
        raise ConfigurationError(f"ion {label!r} not in the ledger")

    def well(self, seg: int) -> list:
        return self.wells.get(seg, [])

    def order(self) -> list:
        out = []
        for seg in sorted(self.wells):
            out.extend(self.wells[seg])
        return out

    def move_well(self, from_seg, to_seg):
        ions = self.wells.pop(from_seg)
        if to_seg in self.wells:
            raise ConfigurationError(f"segment {to_seg} already occupied")
        self.wells[to_seg] = ions

    def occupied(self, exclude=()):
        return [s for s, ions in self.wells.items()
                if ions and not set(ions) <= set(exclude)]


def validate(sequence, initial_layout, liz_index=20) -> list:
    """Static checks; returns a list of violation strings (empty when ok)."""
    violations = []
    ledger = _Ledger(initial_layout)
    for k, prim in enumerate(sequence):
        tag = f"[{k}] {prim.kind}"
        try:
            if prim.kind == "transport":
                src, dst = prim.params["from"], prim.params["to"]
                well = ledger.well(src)
                if not well or not set(prim.ions) == set(well):
                    violations.append(f"{tag}: ions {prim.ions} not the "
                                      f"well at segment {src}")
                    continue
                others = ledger.occupied(exclude=prim.ions)
                lo, hi = min(src, dst), max(src, dst)
                for seg in others:
                    if lo - WELL_GAP_SEGMENTS < seg < hi + WELL_GAP_SEGMENTS:
                        violations.append(
                            f"{tag}: path {src}->{dst} passes within "
                            f"{WELL_GAP_SEGMENTS} segments of the well at {seg}")
                if src != dst:
                    ledger.move_well(src, dst)
            elif prim.kind == "separate":
                site = prim.params["site"]
                well = ledger.well(site)
                if len(well) < 2:
                    violations.append(f"{tag}: separation needs a co-trapped "
                                      f"crystal at {site}")
                    continue
                n_left = prim.params.get("n_left", 1)
                if not 0 < n_left < len(well):
                    violations.append(f"{tag}: bad split {n_left}|"
                                      f"{len(well) - n_left}")
                    continue
                for seg in ledger.occupied(exclude=well):
                    if abs(seg - site) < PROXIMITY_SEGMENTS:
                        violations.append(
                            f"{tag}: ion(s) at segment {seg} within "
                            f"{PROXIMITY_SEGMENTS} segments of the separation")
                left, right = well[:n_left], well[n_left:]
                del ledger.wells[site]
                ledger.wells[site - 1] = left
                ledger.wells[site + 1] = right
            elif prim.kind == "merge":
                site = prim.params["site"]
                left, right = ledger.well(site - 1), ledger.well(site + 1)
                if not left or not right:
                    violations.append(f"{tag}: needs wells at {site - 1} and "
                                      f"{site + 1}")
                    continue
                if ledger.well(site):
                    violations.append(f"{tag}: merging onto an occupied well "
                                      f"at {site}")
                    continue
                for seg in ledger.occupied(exclude=left + right):
                    if abs(seg - site) < PROXIMITY_SEGMENTS:
                        violations.append(
                            f"{tag}: ion(s) at segment {seg} within "
                            f"{PROXIMITY_SEGMENTS} segments of the merge")
                del ledger.wells[site - 1]
                del ledger.wells[site + 1]
                ledger.wells[site] = left + right
            elif prim.kind == "swap":
                site = prim.params["site"]
                well = ledger.well(site)
                if len(well) != 2:
                    violations.append(f"{tag}: needs a two-ion crystal at "
                                      f"{site}")
                    continue
                for seg in ledger.occupied(exclude=well):
                    if abs(seg - site) < PROXIMITY_SEGMENTS:
                        violations.append(
                            f"{tag}: ion(s) at segment {seg} within "
                            f"{PROXIMITY_SEGMENTS} segments of the swap")
                ledger.wells[site] = well[::-1]
            elif prim.kind in LASER_KINDS:
                segs = {ledger.segment_of(i) for i in prim.ions}
                if segs != {liz_index}:
                    violations.append(f"{tag}: target {prim.ions} not at the "
                                      f"LIZ (segment {liz_index})")
                    continue
                well = ledger.well(liz_index)
                if prim.kind in ("rotate", "readout") and len(well) != 1:
                    violations.append(
                        f"{tag}: individual addressing of {prim.ions} with "
                        f"co-trapped {well}")
                if prim.kind in ("init_pump", "shelve") and set(well) != set(
                        prim.ions):
                    violations.append(
                        f"{tag}: {prim.kind} must address the whole crystal "
                        f"{well}")
        except ConfigurationError as exc:
            violations.append(f"{tag}: {exc}")
    return violations


@dataclass
class World:
    """Everything a sequence executes against."""

    geometry: trap_mod.TrapGeometry
    durations: Durations = field(default_factory=Durations)
    fieldmap: FieldMap = field(default_factory=FieldMap)
    readout: ReadoutModel = field(default_factory=ReadoutModel)
    filter_model: FilterModel = field(default_factory=FilterModel)
    swap_params: SwapRampParams = field(default_factory=SwapRampParams)
    correct_phases: bool = True
    systematic_phase_error: float = 0.0   # rad added to each correction
    swap_pair_phase: float = 0.0          # residual ZZ phase per swap
    scatter_depolarization: float = 0.0   # per-readout, unshelved neighbors
    separation_bias: float = 0.3          # V, unequal-split default
    dt: float = 0.002


@dataclass
class RunResult:
    report: SequenceReport
    register: QubitRegister
    readout_order: list
    phases: dict
    excitations: list

    def sample_shots(self, shots: int, rng,
                     readout: ReadoutModel | None = None) -> np.ndarray:
        """Bit arrays (shots, n_read), columns in readout order."""
        readout = readout or ReadoutModel()
        bits = measure(self.register, readout, shots, rng)
        cols = [self.register.labels.index(l) for l in self.readout_order]
        return bits[:, cols]


class SequenceEngine:
    """Executes one sequence against one world."""

    def __init__(self, world: World):
        self.world = world

    # -- execution ---------------------------------------------------------

    def run(self, sequence, initial_layout, mode="logical") -> RunResult:
        if mode not in ("logical", "dynamical"):
            raise ConfigurationError(f"unknown fidelity mode {mode!r}")
        bad = validate(sequence, initial_layout,
                       self.world.geometry.liz_index)
        if bad:
            raise ConfigurationError("invalid sequence: " + "; ".join(bad))

        w = self.world
        labels = tuple(sorted(initial_layout))
        register = QubitRegister(labels)
        ledger = _Ledger(initial_layout)
        histories = {l: PositionHistory() for l in labels}
        prep_time = {}
        shelved = set()
        readout_order = []
        phases = {}
        excitations = []
        crystal = velocity = None
        if mode == "dynamical":
            crystal, velocity = {}, {}
            for seg, ions in ledger.wells.items():
                fld = dyn.TrapField(w.geometry, trap_mod.static_trapping(
                    w.geometry, {seg: -6.0}))
                eq = dyn.find_equilibrium(
                    fld, len(ions), guess=dyn.default_guess(
                        len(ions), w.geometry.segment_center(seg)))
                for k, l in enumerate(ions):
                    crystal[l] = eq[k].copy()
                    velocity[l] = np.zeros(3)
        counts = {k: 0 for k in ALL_KINDS}
        t = 0.0
        shuttling_us = 0.0
        transport_pairs = 0

        def park_all(duration, skip=()):
            for l in labels:
                if l in skip:
                    continue
                histories[l].park(t, t + duration,
                                  w.geometry.segment_center(
                                      ledger.segment_of(l)))

        for prim in sequence:
            counts[prim.kind] += 1
            duration = w.durations.of(prim)
            if prim.kind in SHUTTLE_KINDS:
                if mode == "dynamical":
                    duration = self._run_dynamical(
                        prim, ledger, histories, crystal, velocity, t,
                        excitations)
                else:
                    self._advance_logical(prim, ledger, histories, t,
                                          duration)
                shuttling_us += duration
                if prim.kind == "transport":
                    transport_pairs += abs(prim.params["to"]
                                           - prim.params["from"])
                if prim.kind == "swap":
                    register.apply_pair_phase(*ledger.well(
                        prim.params["site"]), w.swap_pair_phase)
            elif prim.kind == "hold":
                park_all(duration)
            else:
                park_all(duration)
                self._apply_laser(prim, register, histories, prep_time,
                                  shelved, readout_order, phases, t)
            t += duration

        report = SequenceReport(
            counts={k: v for k, v in counts.items() if v},
            transport_pairs=transport_pairs,
            total_us=t, shuttling_us=shuttling_us,
            histories=histories, readout_order=readout_order)
        return RunResult(report, register, readout_order, phases, excitations)

    # -- logical position updates ------------------------------------------

    def _advance_logical(self, prim, ledger, histories, t, duration):
        geo = self.world.geometry
        if prim.kind == "transport":
            src, dst = prim.params["from"], prim.params["to"]
            for l in ledger.well(src):
                histories[l].move(t, t + duration, geo.segment_center(src),
                                  geo.segment_center(dst))
            if src != dst:
                ledger.move_well(src, dst)
            self._park_others(ledger, histories, t, duration,
                              ledger.well(dst))
        elif prim.kind == "separate":
            site = prim.params["site"]
            well = ledger.well(site)
            n_left = prim.params.get("n_left", 1)
            left, right = well[:n_left], well[n_left:]
            x0 = geo.segment_center(site)
            for l in left:
                histories[l].move(t, t + duration, x0,
                                  geo.segment_center(site - 1))
            for l in right:
                histories[l].move(t, t + duration, x0,
                                  geo.segment_center(site + 1))
            del ledger.wells[site]
            ledger.wells[site - 1] = left
            ledger.wells[site + 1] = right
            self._park_others(ledger, histories, t, duration, well)
        elif prim.kind == "merge":
            site = prim.params["site"]
            left, right = ledger.well(site - 1), ledger.well(site + 1)
            x1 = geo.segment_center(site)
            for l in left:
                histories[l].move(t, t + duration,
                                  geo.segment_center(site - 1), x1)
            for l in right:
                histories[l].move(t, t + duration,
                                  geo.segment_center(site + 1), x1)
            del ledger.wells[site - 1]
            del ledger.wells[site + 1]
            ledger.wells[site] = left + right
            self._park_others(ledger, histories, t, duration, left + right)
        elif prim.kind == "swap":
            site = prim.params["site"]
            well = ledger.well(site)
            for l in well:
                histories[l].park(t, t + duration, geo.segment_center(site))
            ledger.wells[site] = well[::-1]
            self._park_others(ledger, histories, t, duration, well)

    def _park_others(self, ledger, histories, t, duration, moving):
        geo = self.world.geometry
        for seg, ions in ledger.wells.items():
            for l in ions:
                if l not in moving:
                    histories[l].park(t, t + duration,
                                      geo.segment_center(seg))

    # -- dynamical execution -------------------------------------------------

    def _schedule_for(self, prim, ledger):
        w = self.world
        if prim.kind == "transport":
            return transport_schedule(prim.params["from"], prim.params["to"],
                                      w.durations.transport_per_pair)
        if prim.kind == "separate":
            return separation_schedule(prim.params["site"],
                                       prim.params.get("bias", 0.0))
        if prim.kind == "merge":
            return merge_schedule(prim.params["site"],
                                  prim.params.get("bias", 0.0))
        if prim.kind == "swap":
            return swap_schedule(w.swap_params, prim.params["site"])
        raise ConfigurationError(prim.kind)

    def _run_dynamical(self, prim, ledger, histories, crystal, velocity, t,
                       excitations):
        w = self.world
        geo = w.geometry
        if prim.kind == "transport":
            involved = list(ledger.well(prim.params["from"]))
        elif prim.kind in ("separate", "swap"):
            involved = list(ledger.well(prim.params["site"]))
        else:
            site = prim.params["site"]
            involved = list(ledger.well(site - 1)) + list(
                ledger.well(site + 1))
        schedule = self._schedule_for(prim, ledger)
        others = {f"t{seg}": -6.0 for seg in ledger.occupied(exclude=involved)}
        schedule = schedule.with_static(others)
        filtered = apply_filter(schedule, w.filter_model)
        state0 = dyn.CrystalState(
            np.array([crystal[l] for l in involved]),
            np.array([velocity[l] for l in involved]))
        traj = dyn.integrate(geo, filtered, state0, (0.0, filtered.span),
                             dt=w.dt)
        duration = filtered.span
        for k, l in enumerate(involved):
            histories[l].add_samples(t + traj.t, traj.positions[:, k, 0])
            crystal[l] = traj.positions[-1, k].copy()
            velocity[l] = traj.velocities[-1, k].copy()
        # Re-derive the ledger from the actual final positions.
        final_x = {l: crystal[l][0] for l in involved}
        self._update_ledger_from_positions(prim, ledger, final_x)
        self._park_others(ledger, histories, t, duration, involved)
        try:
            fld = dyn.TrapField(geo, filtered.final_assignment())
            eq = dyn.find_equilibrium(fld, len(involved),
                                      guess=traj.positions[-1])
            modes = dyn.normal_modes(fld, eq)
            rep = dyn.mode_excitation(traj.final_state(), modes)
            excitations.append({"kind": prim.kind, "t_us": t,
                                "max_nbar": rep.max_nbar()})
        except PhysicsError:
            excitations.append({"kind": prim.kind, "t_us": t,
                                "max_nbar": float("nan")})
        return duration

    def _update_ledger_from_positions(self, prim, ledger, final_x):
        geo = self.world.geometry
        order = sorted(final_x, key=final_x.get)
        if prim.kind == "transport":
            src, dst = prim.params["from"], prim.params["to"]
            if src != dst:
                ledger.move_well(src, dst)
        elif prim.kind == "separate":
            site = prim.params["site"]
            n_left = prim.params.get("n_left", 1)
            del ledger.wells[site]
            ledger.wells[site - 1] = order[:n_left]
            ledger.wells[site + 1] = order[n_left:]
        elif prim.kind == "merge":
            site = prim.params["site"]
            del ledger.wells[site - 1]
            del ledger.wells[site + 1]
            ledger.wells[site] = order
        elif prim.kind == "swap":
            ledger.wells[prim.params["site"]] = order

    # -- laser primitives ----------------------------------------------------

    def _apply_laser(self, prim, register, histories, prep_time, shelved,
                     readout_order, phases, t):
        w = self.world
        if prim.kind == "init_pump":
            for l in prim.ions:
                register.reset_up(l)
                shelved.discard(l)
        elif prim.kind == "rotate":
            (label,) = prim.ions
            role = prim.params.get("role", "prep")
            axis = prim.params.get("axis", "X")
            angle = float(prim.params.get("angle", 0.0))
            if role == "prep":
                prep_time[label] = t
                if angle != 0.0:
                    rotate(register, label, axis, angle)
            else:
                phi = accumulate_phase(histories[label], prep_time[label], t,
                                       w.fieldmap)
                phases[label] = phi
                apply_phase(register, label, phi)
                offset = (phi + w.systematic_phase_error
                          if w.correct_phases else 0.0)
                if angle != 0.0:
                    rotate(register, label, axis, angle, phase_offset=offset)
        elif prim.kind == "shelve":
            shelved.update(prim.ions)
        elif prim.kind == "readout":
            (label,) = prim.ions
            readout_order.append(label)
            if w.scatter_depolarization > 0:
                for other in register.labels:
                    if other != label and other not in shelved:
                        register.depolarize(other, w.scatter_depolarization)


def render_timeline(sequence, durations: Durations | None = None) -> str:
    """Human-readable timeline of a sequence."""
    durations = durations or Durations()
    lines = [f"{'t_start':>10}  {'dur':>8}  {'kind':<10} {'ions':<10} detail"]
    t = 0.0
    for prim in sequence:
        d = durations.of(prim)
        detail = " ".join(f"{k}={v}" for k, v in prim.params.items()
                          if k != "role" or v != "prep")
        lines.append(f"{t:10.1f}  {d:8.1f}  {prim.kind:<10} "
                     f"{'+'.join(prim.ions):<10} {detail}")
        t += d
    lines.append(f"{t:10.1f}  total ({t * 1e-3:.3f} ms)")
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# Built-in experiment sequences


PREP_OPS = ("I", "X90", "Y90", "X180")      # {1, Rx(pi/2), Ry(pi/2), Rx(pi)}
ANALYSIS_OPS = ("I", "X90", "Y90")          # measure {Z, Y, X}

_OP_TABLE = {
    "I": ("X", 0.0),
    "X90": ("X", 0.5 * math.pi),
    "Y90": ("Y", 0.5 * math.pi),
    "X180": ("X", math.pi),
}


def _p(kind, ions=(), **params):
    return SequencePrimitive(kind, ions, params)


def _t(ions, src, dst):
    ions = ions if isinstance(ions, tuple) else (ions,)
    return _p("transport", ions, **{"from": src, "to": dst})


def swap_tomography_layout(liz=20):
    """Two-ion crystal co-trapped at the LIZ (A left of B)."""
    return {"A": liz, "B": liz}


def build_swap_tomography(prep_pair, analysis_pair, with_swap=True,
                          liz=20) -> list:
    """One setting of the two-ion SWAP process tomography.

    The crystal is pumped whole, separated for individual preparation
    pulses, recombined for the (optional) swap, separated again for the
    phase-corrected analysis pulses, recombined for shelving both ions,
    and separated once more for individual fluorescence readout; readout
    is recorded left position first.
    """
    for op in prep_pair:
        if op not in PREP_OPS:
            raise ConfigurationError(f"unknown preparation op {op!r}")
    for op in analysis_pair:
        if op not in ANALYSIS_OPS:
            raise ConfigurationError(f"unknown analysis op {op!r}")
    L = liz
    seq = []
    # pump the co-trapped crystal at the LIZ, then split for addressing
    seq.append(_p("init_pump", ("A", "B")))
    seq.append(_p("separate", site=L))
    seq += _individual_pulses(
        [("A", "prep", prep_pair[0]), ("B", "prep", prep_pair[1])], L)
    seq.append(_p("merge", site=L))
    if with_swap:
        seq.append(_p("swap", site=L))
    order = ("B", "A") if with_swap else ("A", "B")
    # individual analysis, left position first
    seq.append(_p("separate", site=L))
    seq += _individual_pulses(
        [(order[0], "analysis", analysis_pair[0]),
         (order[1], "analysis", analysis_pair[1])], L)
    # shelve both together, then read out individually
    seq.append(_p("merge", site=L))
    seq.append(_p("shelve", order))
    seq.append(_p("separate", site=L))
    seq += _individual_readout(order, L)
    return seq


def _individual_pulses(jobs, L):
    """Address the two separated ions one at a time.

    jobs: [(label_at_left_well, role, op), (label_at_right_well, role, op)].
    The spectator parks two segments out so wells never overlap.
    """
    (left_label, role_l, op_l), (right_label, role_r, op_r) = jobs
    axis_l, angle_l = _OP_TABLE[op_l]
    axis_r, angle_r = _OP_TABLE[op_r]
    return [
        _t(right_label, L + 1, L + 2),
        _t(left_label, L - 1, L),
        _p("rotate", (left_label,), axis=axis_l, angle=angle_l, role=role_l),
        _t(left_label, L, L - 2),
        _t(right_label, L + 2, L),
        _p("rotate", (right_label,), axis=axis_r, angle=angle_r, role=role_r),
        _t(right_label, L, L + 1),
        _t(left_label, L - 2, L - 1),
    ]


def _individual_readout(order, L):
    left, right = order
    return [
        _t(right, L + 1, L + 2),
        _t(left, L - 1, L),
        _p("readout", (left,)),
        _t(left, L, L - 2),
        _t(right, L + 2, L),
        _p("readout", (right,)),
    ]


def all_tomography_settings():
    """The 16 x 9 = 144 preparation/measurement settings."""
    for i, pa in enumerate(PREP_OPS):
        for pb in PREP_OPS:
            for aa in ANALYSIS_OPS:
                for ab in ANALYSIS_OPS:
                    yield (pa, pb), (aa, ab)


def reorder_layout(liz=20):
    """Loading layout of the reorder sequence: the crystal has already been
    split into single-ion wells (A, B near the LIZ, C parked six segments
    out, as in the published sequence)."""
    return {"A": liz - 1, "B": liz + 1, "C": liz + 6}


def build_three_ion_reorder(bits, include_preparation=False, liz=20) -> list:
    """Reorder ABC -> CBA with three pairwise on-site swaps.

    ``bits``: three 0/1 values (1 = spin up) prepared on A, B, C.  The
    default sequence starts from the split loading layout and contains
    exactly 3 separations, 3 merges, 3 swaps and 30 linear transports;
    ``include_preparation`` prepends the initial crystal splitting (a
    biased 2|1 separation and the single-ion split), which adds two
    separations and two transports to the counts.
    """
    if len(bits) != 3 or any(b not in (0, 1) for b in bits):
        raise ConfigurationError("bits must be three 0/1 values")
    L = liz
    seq = []
    if include_preparation:
        # ABC co-trapped at the LIZ: biased unequal split, C to its parking
        # segment, then the pair split.  Layout afterwards matches the
        # default starting point.
        seq.append(_p("separate", site=L, n_left=2, bias="config"))
        seq.append(_t("C", L + 1, L + 6))
        seq.append(_t(("A", "B"), L - 1, L))
        seq.append(_p("separate", site=L))

    def pump(label, angle):
        return [_p("init_pump", (label,)),
                _p("rotate", (label,), axis="X", angle=angle, role="prep")]

    angles = {l: (0.0 if b == 1 else math.pi)
              for l, b in zip("ABC", bits)}
    seq += [
        # pumping round, visiting C, then B, then A
        _t("A", L - 1, L - 4),
        _t("B", L + 1, L - 2),
        _t("C", L + 6, L), *pump("C", angles["C"]),
        _t("C", L, L + 6),
        _t("B", L - 2, L), *pump("B", angles["B"]),
        _t("B", L, L + 4),
        _t("A", L - 4, L), *pump("A", angles["A"]),
        _t("A", L, L - 6),
        # swap 1: A x B, spectator C six segments right
        _t("A", L - 6, L - 1),
        _t("B", L + 4, L + 1),
        _p("merge", site=L), _p("swap", site=L), _p("separate", site=L),
        # swap 2: A x C, spectator B six segments left
        _t("B", L - 1, L - 6),
        _t("A", L + 1, L - 1),
        _t("C", L + 6, L + 1),
        _p("merge", site=L), _p("swap", site=L), _p("separate", site=L),
        # swap 3: B x C, spectator A far right
        _t("A", L + 1, L + 8),
        _t("C", L - 1, L + 1),
        _t("B", L - 6, L - 1),
        _p("merge", site=L), _p("swap", site=L), _p("separate", site=L),
        # shelving round (C, B, A)
        _t("B", L + 1, L + 4),
        _t("C", L - 1, L), _p("shelve", ("C",)),
        _t("C", L, L - 6),
        _t("B", L + 4, L), _p("shelve", ("B",)),
        _t("B", L, L - 4),
        _t("A", L + 8, L), _p("shelve", ("A",)),
        _t("A", L, L + 8),
        # readout round (C, B, A)
        _t("B", L - 4, L + 4),
        _t("C", L - 6, L), _p("readout", ("C",)),
        _t("C", L, L - 6),
        _t("B", L + 4, L), _p("readout", ("B",)),
        _t("B", L, L - 2),
        _t("A", L + 8, L), _p("readout", ("A",)),
        _t("A", L, L + 8),
    ]
    if include_preparation:
        for prim in seq:
            if prim.params.get("bias") == "config":
                prim.params["bias"] = None
    return seq
