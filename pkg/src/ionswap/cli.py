"""Command-line entry point.

Subcommands wrap the library: trap calibration, mode tables, swap
simulation and ramp optimization, SWAP process tomography, the three-ion
reorder truth table, magnetic-field mapping, and Rabi thermometry fits.
Physical parameters come from the YAML config; flags only carry paths,
seed, workers and format.  Exit codes: 0 ok, 2 configuration error, 3
physics failure, 4 fit failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace

import numpy as np

from . import config as cfg_mod
from . import dynamics as dyn
from . import experiments as ex
from . import tomography as tomo
from .errors import ConfigurationError, FitError, PhysicsError
from .filters import apply_filter, swap_effective_duration
from .optimize import optimize_swap
from .qubits import FieldMap, ramsey_field_scan
from .sequences import (Durations, build_three_ion_reorder, reorder_layout,
                        render_timeline, validate)
from .thermometry import RabiDataset, fit_phonon_number
from .trap import static_trapping
from .waveforms import swap_schedule

EXIT_CONFIG = 2
EXIT_PHYSICS = 3
EXIT_FIT = 4


def _out_path(args, name):
    os.makedirs(args.out, exist_ok=True)
    return os.path.join(args.out, name)


def cmd_calibrate(cfg, args):
    geo = cfg_mod.build_geometry(cfg)
    cfg_mod.write_json(_out_path(args, "geometry.json"), cfg,
                       {"geometry": geo.to_dict()})
    print(f"calibrated: w = {geo.axial_width:.3f} um, "
          f"kappa_y = {geo.kappa_y:.6e}, kappa_z = {geo.kappa_z:.6e}")
    return 0


def cmd_modes(cfg, args):
    geo = cfg_mod.build_geometry(cfg)
    site = geo.liz_index
    fld = dyn.TrapField(geo, static_trapping(geo, {site: cfg["trap"]["u_c"]}))
    eq = dyn.find_equilibrium(fld, 2, guess=dyn.default_guess(
        2, geo.segment_center(site)))
    modes = dyn.normal_modes(fld, eq)
    f = dict(zip(modes.labels, modes.freqs_mhz))
    checks = {
        "stretch_over_com": f["axial-stretch"] / f["axial-com"],
        "sqrt3": float(np.sqrt(3.0)),
        "rocking_low_formula": float(np.sqrt(f["radial-com-low"] ** 2
                                             - f["axial-com"] ** 2)),
        "rocking_high_formula": float(np.sqrt(f["radial-com-high"] ** 2
                                              - f["axial-com"] ** 2)),
    }
    table = [{"label": l, "freq_mhz": float(v)}
             for l, v in zip(modes.labels, modes.freqs_mhz)]
    cfg_mod.write_json(_out_path(args, "modes.json"), cfg,
                       {"modes": table, "checks": checks})
    for row in table:
        print(f"{row['label']:>22}: {row['freq_mhz']:.6f} MHz")
    print(f"stretch/com = {checks['stretch_over_com']:.6f} (sqrt(3) = "
          f"{checks['sqrt3']:.6f})")
    return 0


def cmd_swap(cfg, args):
    geo = cfg_mod.build_geometry(cfg)
    params = cfg_mod.build_swap_params(cfg)
    fmodel = cfg_mod.build_filter(cfg)
    dt = cfg["dynamics"]["dt_us"]
    report, swapped, traj = ex.simulate_swap(geo, params, filter_model=fmodel,
                                             dt=dt)
    eff = swap_effective_duration(apply_filter(
        swap_schedule(params, geo.liz_index), fmodel))
    payload = {"excitation": report.to_dict(), "swapped": bool(swapped),
               "max_nbar": report.max_nbar(),
               "programmed_duration_us": params.duration,
               "effective_duration_us": eff}
    sweep_T = cfg["sweep"]["durations"]
    if args.sweep and sweep_T:
        payload["sweep"] = ex.swap_duration_sweep(geo, params, sweep_T,
                                                  filter_model=fmodel, dt=dt)
    cfg_mod.write_json(_out_path(args, "swap.json"), cfg, payload)
    traj.write_csv(_out_path(args, "swap_trajectory.csv"))
    print(f"swapped = {swapped}, max nbar = {report.max_nbar():.5f}, "
          f"effective duration = {eff:.1f} us")
    return 0


def cmd_optimize_swap(cfg, args):
    geo = cfg_mod.build_geometry(cfg)
    initial = cfg_mod.build_swap_params(cfg)
    fmodel = cfg_mod.build_filter(cfg)
    opt = cfg["optimize"]
    objective = ex.swap_objective(geo, filter_model=fmodel, dt=opt["dt_us"])
    best, fbest, log = optimize_swap(objective, initial,
                                     tuple(opt["free_params"]),
                                     seed=cfg["seed"],
                                     restarts=opt["restarts"])
    log.dump_jsonl(_out_path(args, "optimize_log.jsonl"))
    cfg_mod.write_json(_out_path(args, "optimized_params.json"), cfg,
                       {"params": best.to_dict(), "objective": fbest,
                        "evaluations": len(log.evaluations)})
    print(f"best objective {fbest:.6f} after {len(log.evaluations)} "
          f"evaluations: {best.to_dict()}")
    return 0


def cmd_tomography(cfg, args):
    world = cfg_mod.build_world(cfg)
    shots = cfg["tomography"]["shots"]
    with_swap = cfg["tomography"]["with_swap"]
    readout = world.readout
    counts = ex.run_swap_tomography(world, shots=shots, seed=cfg["seed"],
                                    with_swap=with_swap, readout=readout,
                                    workers=args.workers)
    noisy = (readout.eps_up_to_dark > 0 or readout.eps_down_to_bright > 0)
    res = ex.tomography_fidelities(counts, readout if noisy else None,
                                   with_swap=with_swap)
    chi = res.get("chi_corrected", res["chi_raw"])
    tomo.chi_to_json(chi, _out_path(args, "chi.json"))
    tomo.chi_plot_csv(chi, _out_path(args, "chi_plot.csv"))
    payload = {"fidelity_raw": res["fidelity_raw"],
               "with_swap": with_swap, "shots_per_setting": shots,
               "settings": 144,
               "tp_residual_raw": res["tp_residual_raw"]}
    if "fidelity_corrected" in res:
        payload["fidelity_corrected"] = res["fidelity_corrected"]
    cfg_mod.write_json(_out_path(args, "tomography.json"), cfg, payload)
    msg = f"process fidelity (raw) = {res['fidelity_raw']:.5f}"
    if "fidelity_corrected" in res:
        msg += f", corrected = {res['fidelity_corrected']:.5f}"
    print(msg)
    return 0


def cmd_reorder(cfg, args):
    world = cfg_mod.build_world(cfg)
    shots = cfg["reorder"]["shots"]
    include_prep = cfg["reorder"]["include_preparation"]
    readout = world.readout
    counts, report = ex.run_reorder_truth_table(
        world, shots=shots, seed=cfg["seed"],
        include_preparation=include_prep, readout=readout)
    table_raw = tomo.truth_table_from_runs(counts)
    noisy = (readout.eps_up_to_dark > 0 or readout.eps_down_to_bright > 0)
    payload = {"truth_table_raw": table_raw.to_dict(),
               "sequence_report": report.to_dict()}
    if noisy:
        table_corr = tomo.truth_table_from_runs(counts, readout=readout)
        payload["truth_table_corrected"] = table_corr.to_dict()
    cfg_mod.write_json(_out_path(args, "reorder.json"), cfg, payload)
    if args.verbose:
        seq = build_three_ion_reorder((1, 1, 1), include_prep,
                                      world.geometry.liz_index)
        print(render_timeline(seq, world.durations))
    line = (f"counts {report.counts}, total {report.total_ms:.3f} ms, "
            f"shuttling {report.shuttling_fraction:.1%}, "
            f"fidelity raw {table_raw.mean_fidelity:.5f}")
    if noisy:
        line += f", corrected {payload['truth_table_corrected']['mean_fidelity']:.5f}"
    print(line)
    return 0


def cmd_field_map(cfg, args):
    fm = cfg["field_map"]
    scan = cfg["field_scan"]
    fieldmap = FieldMap(fm["gradient_t_per_um"], fm["curvature_t_per_um2"])
    positions = [200.0 * s for s in scan["positions_segments"]]
    rng = ex.child_rng(cfg["seed"], "field_scan")
    rows = ramsey_field_scan(fieldmap, positions, scan["hold_times_us"],
                             shots=scan["shots"], rng=rng)
    cfg_mod.write_json(_out_path(args, "field_map.json"), cfg, {"scan": rows})
    for r in rows:
        print(f"x = {r['x_um']:+7.1f} um: recovered "
              f"{r['delta_b_t']:+.3e} T (injected {r['injected_t']:+.3e}, "
              f"sigma {r['sigma_t']:.1e})")
    return 0


def cmd_rabi_fit(cfg, args):
    rb = cfg["rabi"]
    datasets = []
    for path in args.data:
        transition = None
        for tag in ("rsb", "bsb", "carrier"):
            if tag in os.path.basename(path):
                transition = tag
        if transition is None:
            raise ConfigurationError(
                f"cannot infer transition from file name {path!r}; name "
                "files like mode_rsb.csv / mode_bsb.csv / mode_carrier.csv")
        datasets.append(RabiDataset.read_csv(path, transition,
                                             shots=rb["shots"]))
    fit = fit_phonon_number(datasets, state_kind=rb["state"], eta=rb["eta"],
                            omega0_guess=rb.get("omega0_rad_per_us"),
                            seed=cfg["seed"])
    cfg_mod.write_json(_out_path(args, "rabi_fit.json"), cfg,
                       {"fit": fit.to_dict()})
    print(f"nbar = {fit.nbar:.4f}  (95% CI [{fit.ci_low:.4f}, "
          f"{fit.ci_high:.4f}]), Omega0 = {fit.omega0:.4f} rad/us")
    return 0


COMMANDS = {
    "calibrate": cmd_calibrate,
    "modes": cmd_modes,
    "swap": cmd_swap,
    "optimize-swap": cmd_optimize_swap,
    "tomography": cmd_tomography,
    "reorder": cmd_reorder,
    "field-map": cmd_field_map,
    "rabi-fit": cmd_rabi_fit,
}


def build_parser():
    parser = argparse.ArgumentParser(
        prog="ionswap",
        description="Segmented-trap ion swapping: simulation and analysis")
    parser.add_argument("--config", default=None, help="YAML config path")
    parser.add_argument("--seed", type=int, default=None,
                        help="override the config seed")
    parser.add_argument("--out", default="out", help="output directory")
    parser.add_argument("--workers", type=int, default=1)
    parser.add_argument("--format", choices=("json", "csv"), default="json")
    parser.add_argument("--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        if name == "swap":
            p.add_argument("--sweep", action="store_true",
                           help="also sweep the programmed duration")
        if name == "rabi-fit":
            p.add_argument("data", nargs="+", help="CSV flopping curves")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        overrides = {"seed": args.seed} if args.seed is not None else None
        cfg = cfg_mod.load_config(args.config, overrides)
        return COMMANDS[args.command](cfg, args)
    except ConfigurationError as exc:
        json.dump({"error": "configuration", "detail": str(exc)},
                  sys.stderr, indent=2)
        sys.stderr.write("\n")
        return EXIT_CONFIG
    except PhysicsError as exc:
        json.dump({"error": "physics", "detail": str(exc)}, sys.stderr,
                  indent=2)
        sys.stderr.write("\n")
        return EXIT_PHYSICS
    except FitError as exc:
        json.dump({"error": "fit", "detail": str(exc)}, sys.stderr, indent=2)
        sys.stderr.write("\n")
        return EXIT_FIT


if __name__ == "__main__":
    sys.exit(main())
