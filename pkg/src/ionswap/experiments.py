"""Orchestration helpers shared by the CLI commands and the test suite:
swap simulation and optimization objectives, separation and transport
dynamics, tomography and reorder drivers.
"""

from __future__ import annotations

import hashlib
import itertools

import numpy as np

from . import dynamics as dyn
from . import trap as trap_mod
from . import tomography as tomo
from .filters import FilterModel, FilteredSchedule, apply_filter
from .optimize import optimize_swap
from .qubits import ReadoutModel
from .sequences import (ANALYSIS_OPS, PREP_OPS, SequenceEngine, World,
                        all_tomography_settings, build_swap_tomography,
                        build_three_ion_reorder, reorder_layout,
                        swap_tomography_layout)
from .waveforms import (SwapRampParams, hold_schedule, merge_schedule,
                        separation_schedule, swap_schedule,
                        transport_schedule)


def child_rng(master_seed: int, name: str) -> np.random.Generator:
    """Named, order-independent child stream of the master seed."""
    digest = hashlib.sha256(name.encode()).digest()
    key = int.from_bytes(digest[:8], "big")
    return np.random.default_rng(np.random.SeedSequence([master_seed, key]))

SWAP_FAILURE_PENALTY = 1.0e3


def static_field(geometry, wells):
    return dyn.TrapField(geometry, trap_mod.static_trapping(geometry, wells))


def cold_crystal(geometry, wells, n_ions, guess=None) -> dyn.CrystalState:
    """Ions at the instantaneous equilibrium, at rest."""
    fld = static_field(geometry, wells)
    eq = dyn.find_equilibrium(fld, n_ions, guess=guess)
    return dyn.CrystalState(eq)


def simulate_schedule(geometry, schedule, state0, filter_model=None,
                      extra_static=None, dt=0.002, record_stride=200):
    """Filter a schedule and integrate the crystal through it plus the
    settling tail. Returns (Trajectory, FilteredSchedule)."""
    if extra_static:
        schedule = schedule.with_static(extra_static)
    filtered = apply_filter(schedule, filter_model or FilterModel())
    traj = dyn.integrate(geometry, filtered, state0,
                         (0.0, filtered.span), dt=dt,
                         record_stride=record_stride)
    return traj, filtered


def swap_outcome(traj: dyn.Trajectory) -> bool:
    """True when the two ions exchanged axial order."""
    x0 = traj.positions[0, :, 0]
    x1 = traj.positions[-1, :, 0]
    return bool(np.sign(x0[1] - x0[0]) == -np.sign(x1[1] - x1[0])
                and abs(x1[1] - x1[0]) > 0.5)


def simulate_swap(geometry, params: SwapRampParams, site=None,
                  filter_model=None, dt=0.002, state0=None):
    """Integrate a two-ion crystal through the filtered swap schedule.

    Returns (ExcitationReport, swapped, Trajectory); the excitation is
    measured against the final static configuration.
    """
    site = site if site is not None else geometry.liz_index
    if state0 is None:
        state0 = cold_crystal(geometry, {site: params.u_c_start}, 2,
                              guess=dyn.default_guess(
                                  2, geometry.segment_center(site)))
    sched = swap_schedule(params, site)
    traj, filtered = simulate_schedule(geometry, sched, state0,
                                       filter_model, dt=dt)
    final_field = dyn.TrapField(geometry, filtered.final_assignment())
    eq = dyn.find_equilibrium(final_field, 2, guess=state0.positions)
    modes = dyn.normal_modes(final_field, eq)
    report = dyn.mode_excitation(traj.final_state(), modes)
    return report, swap_outcome(traj), traj


def swap_objective(geometry, site=None, filter_model=None, dt=0.002,
                   penalty=SWAP_FAILURE_PENALTY):
    """Max-over-modes excitation; a failed exchange adds a flat penalty so
    the search cannot converge on not swapping at all."""

    def objective(params: SwapRampParams) -> float:
        try:
            report, swapped, _ = simulate_swap(geometry, params, site,
                                               filter_model, dt=dt)
        except Exception:
            return penalty * 10.0
        value = report.max_nbar()
        if not swapped:
            value += penalty
        return value

    return objective


def optimize_swap_amplitude(geometry, initial: SwapRampParams,
                            free_params=("u_d_peak",), site=None,
                            filter_model=None, dt=0.004, seed=0,
                            restarts=1, xatol=1e-3):
    """Convenience wrapper: tune ramp parameters on the surrogate."""
    obj = swap_objective(geometry, site, filter_model, dt=dt)
    return optimize_swap(obj, initial, free_params, seed=seed,
                         restarts=restarts, xatol=xatol)


def swap_duration_sweep(geometry, params: SwapRampParams, durations,
                        site=None, filter_model=None, dt=0.002):
    """Max-mode excitation vs programmed duration."""
    from dataclasses import replace
    out = []
    for T in durations:
        report, swapped, _ = simulate_swap(
            geometry, replace(params, duration=float(T)), site,
            filter_model, dt=dt)
        out.append({"duration": float(T), "max_nbar": report.max_nbar(),
                    "swapped": bool(swapped),
                    "nbar": [float(x) for x in report.nbar],
                    "labels": list(report.labels)})
    return out


def simulate_separation(geometry, site=None, bias=0.0, duration=100.0,
                        filter_model=None, dt=0.002):
    """Two-ion separation dynamics; returns per-ion excitation estimate.

    The final double-well configuration provides the mode basis; the
    per-ion number is the total coherent occupation split evenly.
    """
    site = site if site is not None else geometry.liz_index
    state0 = cold_crystal(geometry, {site: -6.0}, 2,
                          guess=dyn.default_guess(
                              2, geometry.segment_center(site)))
    sched = separation_schedule(site, direction_bias=bias, duration=duration)
    traj, filtered = simulate_schedule(geometry, sched, state0,
                                       filter_model, dt=dt)
    final_field = dyn.TrapField(geometry, filtered.final_assignment())
    eq = dyn.find_equilibrium(final_field, 2, guess=traj.positions[-1])
    modes = dyn.normal_modes(final_field, eq)
    report = dyn.mode_excitation(traj.final_state(), modes)
    per_ion = float(np.sum(report.nbar)) / 2.0
    return report, per_ion, traj


def simulate_transport(geometry, from_seg, to_seg, per_pair_duration=28.0,
                       filter_model=None, dt=0.002):
    """Single-ion adiabatic transport; returns final excitation report."""
    state0 = cold_crystal(geometry, {from_seg: -6.0}, 1,
                          guess=np.array([[geometry.segment_center(from_seg),
                                           0.0, 0.0]]))
    sched = transport_schedule(from_seg, to_seg, per_pair_duration)
    traj, filtered = simulate_schedule(geometry, sched, state0,
                                       filter_model, dt=dt)
    final_field = dyn.TrapField(geometry, filtered.final_assignment())
    eq = dyn.find_equilibrium(final_field, 1, guess=traj.positions[-1])
    modes = dyn.normal_modes(final_field, eq)
    return dyn.mode_excitation(traj.final_state(), modes), traj


# ---------------------------------------------------------------------------
# Process tomography and reorder drivers


def _tomography_setting(world, prep_pair, analysis_pair, with_swap, shots,
                        rng, readout):
    seq = build_swap_tomography(prep_pair, analysis_pair, with_swap,
                                world.geometry.liz_index)
    engine = SequenceEngine(world)
    result = engine.run(seq, swap_tomography_layout(world.geometry.liz_index))
    bits = result.sample_shots(shots, rng, readout=readout)
    return tomo.counts_from_bits(bits)


def run_swap_tomography(world: World, shots: int = 1000, seed: int = 0,
                        with_swap: bool = True,
                        readout: ReadoutModel | None = None,
                        workers: int = 1) -> dict:
    """Collect counts for all 144 preparation/measurement settings.

    Returns {prep_pair: {analysis_pair: counts}}; each setting gets its own
    named child stream, so results are reproducible setting by setting and
    independent of execution order.
    """
    readout = readout or world.readout
    settings = list(all_tomography_settings())
    tasks = []
    for i, (prep, ana) in enumerate(settings):
        rng = child_rng(seed, f"tomo/{'swap' if with_swap else 'id'}/{i}")
        tasks.append((prep, ana, rng))
    results = {}
    if workers > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_tomography_setting, world, prep, ana,
                                   with_swap, shots, rng, readout)
                       for prep, ana, rng in tasks]
            outs = [f.result() for f in futures]
    else:
        outs = [_tomography_setting(world, prep, ana, with_swap, shots, rng,
                                    readout) for prep, ana, rng in tasks]
    for (prep, ana, _), counts in zip(tasks, outs):
        results.setdefault(prep, {})[ana] = counts
    return results


def reconstruct_process(counts_nested: dict,
                        readout: ReadoutModel | None = None) -> np.ndarray:
    """Two linear inversions: settings -> 16 states -> chi matrix."""
    prep_pairs = list(itertools.product(PREP_OPS, repeat=2))
    states = []
    for prep in prep_pairs:
        setting_counts = {}
        for ana, counts in counts_nested[prep].items():
            axes = (tomo.ANALYSIS_AXIS[ana[0]], tomo.ANALYSIS_AXIS[ana[1]])
            if readout is not None:
                p = tomo.readout_correct(counts, readout, 2).probabilities
                setting_counts[axes] = {k: float(v) for k, v in
                                        zip(("00", "01", "10", "11"), p)}
            else:
                setting_counts[axes] = counts
        states.append(tomo.state_from_counts(setting_counts))
    return tomo.chi_from_states(prep_pairs, states)


def tomography_fidelities(counts_nested, readout: ReadoutModel | None,
                          with_swap: bool = True) -> dict:
    """Raw and (when a readout model is given) corrected process fidelity."""
    ideal = tomo.CHI_SWAP if with_swap else tomo.CHI_IDENTITY
    chi_raw = reconstruct_process(counts_nested)
    out = {"chi_raw": chi_raw,
           "fidelity_raw": tomo.process_fidelity(chi_raw, ideal),
           "tp_residual_raw": tomo.trace_preservation_residual(chi_raw)}
    if readout is not None:
        chi_corr = reconstruct_process(counts_nested, readout)
        out["chi_corrected"] = chi_corr
        out["fidelity_corrected"] = tomo.process_fidelity(chi_corr, ideal)
    return out


def run_reorder_truth_table(world: World, shots: int = 2500, seed: int = 0,
                            include_preparation: bool = False,
                            readout: ReadoutModel | None = None):
    """Execute the built-in reorder for all 8 inputs; returns
    (input counts dict, SequenceReport of the last run)."""
    readout = readout or world.readout
    engine = SequenceEngine(world)
    counts = {}
    report = None
    for bits in itertools.product((0, 1), repeat=3):
        key = "".join(str(b) for b in bits)
        seq = build_three_ion_reorder(
            bits, include_preparation=include_preparation,
            liz=world.geometry.liz_index)
        result = engine.run(seq, reorder_layout(world.geometry.liz_index))
        rng = child_rng(seed, f"reorder/{key}")
        counts[key] = tomo.counts_from_bits(
            result.sample_shots(shots, rng, readout=readout))
        report = result.report
    return counts, report
