"""Derivative-free tuning of swap ramp parameters.

The excitation objective is a noisy-smooth black box behind an ODE
integration, so the search is a bounded Nelder-Mead simplex with seeded
restarts.  The returned candidate is never worse than the starting point.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace

import numpy as np
from scipy.optimize import minimize

from .errors import ConfigurationError
from .waveforms import SwapRampParams

SWAP_PARAM_BOUNDS = {
    "u_d_peak": (0.02, 6.0),
    "u_c_deep": (-12.0, -7.5),
    "u_o_peak": (0.5, 8.0),
    "duration": (8.0, 250.0),
}


@dataclass
class OptimizeLog:
    evaluations: list

    def record(self, x, fx):
        self.evaluations.append({"eval": len(self.evaluations),
                                 "x": [float(v) for v in np.atleast_1d(x)],
                                 "objective": float(fx)})

    def dump_jsonl(self, path):
        with open(path, "w") as fh:
            for entry in self.evaluations:
                fh.write(json.dumps(entry) + "\n")


def minimize_simplex(objective, x0, bounds, seed=0, restarts=1,
                     xatol=1e-5, fatol=1e-9, max_evals_per_run=400):
    """Bounded Nelder-Mead with seeded restart perturbations.

    Returns (x_best, f_best, OptimizeLog).  Never returns a point worse
    than x0; raises on a non-finite objective at the start.
    """
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    lo = np.array([b[0] for b in bounds])
    hi = np.array([b[1] for b in bounds])
    log = OptimizeLog([])

    def wrapped(x):
        fx = float(objective(np.clip(x, lo, hi)))
        log.record(np.clip(x, lo, hi), fx)
        return fx

    f0 = wrapped(x0)
    if not np.isfinite(f0):
        raise ConfigurationError("objective is not finite at the initial point")
    best_x, best_f = x0.copy(), f0
    if f0 == 0.0:
        return best_x, best_f, log

    rng = np.random.default_rng(seed)
    start = x0
    for attempt in range(restarts + 1):
        res = minimize(wrapped, np.clip(start, lo, hi), method="Nelder-Mead",
                       bounds=list(zip(lo, hi)),
                       options={"xatol": xatol, "fatol": fatol,
                                "maxfev": max_evals_per_run})
        if np.isfinite(res.fun) and res.fun < best_f:
            best_x, best_f = np.clip(res.x, lo, hi), float(res.fun)
        if attempt < restarts:
            jitter = rng.uniform(-0.05, 0.05, size=len(x0)) * (hi - lo)
            start = np.clip(best_x + jitter, lo, hi)
    return best_x, best_f, log


def optimize_swap(objective, initial: SwapRampParams, free_params,
                  bounds=None, seed=0, restarts=1,
                  xatol=1e-5) -> tuple[SwapRampParams, float, OptimizeLog]:
    """Tune a subset of the ramp parameters against an excitation objective.

    ``objective`` maps SwapRampParams -> float; ``free_params`` names the
    scalar fields to vary.  Deterministic given the seed.
    """
    if not free_params:
        raise ConfigurationError("free_params must be non-empty")
    bounds = {**SWAP_PARAM_BOUNDS, **(bounds or {})}
    for name in free_params:
        if name not in bounds:
            raise ConfigurationError(f"no bounds known for parameter {name!r}")

    def vec_to_params(x):
        return replace(initial, **{n: float(v) for n, v in zip(free_params, x)})

    x0 = [getattr(initial, n) for n in free_params]
    x_best, f_best, log = minimize_simplex(
        lambda x: objective(vec_to_params(x)), x0,
        [bounds[n] for n in free_params], seed=seed, restarts=restarts,
        xatol=xatol)
    return vec_to_params(x_best), f_best, log
