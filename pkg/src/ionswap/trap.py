"""Analytic surrogate for the segmented multilayer trap.

Voltages applied to trap segments map to a smooth 3D potential-per-charge
(in volts) for a single ion:

    phi(r) = sum_k  v_k * eta * G((x - x_k)/w)
           + 1/2 kappa_y y^2 + 1/2 kappa_z z^2
           + sum_s  c_d * u_s * (x - x_s) * G((x - x_s)/w) * y

``G`` is a flattened Gaussian bump, G(s) = (1 + s^2/4) exp(-s^2/2), sharing
one width ``w`` across segments.  Its quartic term vanishes at the center,
so small two-ion crystals in a single well behave harmonically to O((a/w)^4)
and the textbook mode relations hold at the 1e-4 level.  ``eta`` is the
geometric efficiency of an electrode (potential at the well center per volt
applied).  The last sum is the diagonal (symmetry breaking) x-y quadrupole:
per volt on the ``d`` channel of a site it applies an x*y curvature that
decays with the same bump envelope.  The odd-in-x envelope realizes the
inverted polarity of the electrode pair left of the site versus right.

Channels are addressed by string ids: ``"t<segment>"`` for a segment (trap)
voltage and ``"d<segment>"`` for the diagonal pair amplitude of a site.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.optimize import brentq

from .constants import curvature_to_freq_mhz, secular_curvature
from .errors import CalibrationError, ConfigurationError

SEGMENT_SPACING_UM = 200.0


def bump(s):
    """Unit-height axial bump shape."""
    s2 = np.square(s)
    return (1.0 + 0.25 * s2) * np.exp(-0.5 * s2)


def bump_d1(s):
    s2 = np.square(s)
    return -0.25 * s * (2.0 + s2) * np.exp(-0.5 * s2)


def bump_d2(s):
    s2 = np.square(s)
    return 0.25 * (s2 - 2.0) * (s2 + 1.0) * np.exp(-0.5 * s2)


def bump_d3(s):
    s2 = np.square(s)
    return 0.25 * s * s2 * (5.0 - s2) * np.exp(-0.5 * s2)


@dataclass(frozen=True)
class TrapGeometry:
    """Segment layout plus the calibrated constants of the surrogate."""

    segment_ids: tuple = tuple(range(14, 31))
    liz_index: int = 20
    axial_width: float = 80.0        # w, um
    bump_efficiency: float = 0.08    # eta, dimensionless
    kappa_y: float = 6.0e-5          # V/um^2, lower radial
    kappa_z: float = 1.7e-4          # V/um^2, upper radial
    diag_coupling: float = 1.4e-5    # c_d, 1/um^2 per volt on a d channel
    spacing: float = SEGMENT_SPACING_UM

    def __post_init__(self):
        if self.liz_index not in self.segment_ids:
            raise ConfigurationError("LIZ index not among segment ids")
        ids = np.asarray(self.segment_ids)
        if len(ids) < 2 or np.any(np.diff(ids) != 1):
            raise ConfigurationError("segment ids must be consecutive")
        if self.spacing != SEGMENT_SPACING_UM:
            raise ConfigurationError("segment spacing is fixed at 200 um")
        if self.axial_width <= 0 or self.bump_efficiency <= 0:
            raise ConfigurationError("axial width and efficiency must be > 0")
        if self.kappa_y <= 0 or self.kappa_z <= 0:
            raise ConfigurationError("radial curvatures must be positive")
        if self.kappa_y == self.kappa_z:
            raise ConfigurationError("radial curvatures must be non-degenerate")

    def segment_center(self, segment_id) -> float:
        """Axial position (um) of a segment center; LIZ sits at x = 0."""
        segment_id = np.asarray(segment_id)
        lo, hi = self.segment_ids[0], self.segment_ids[-1]
        if np.any(segment_id < lo) or np.any(segment_id > hi):
            raise ConfigurationError(f"segment {segment_id} outside {lo}..{hi}")
        return (segment_id - self.liz_index) * self.spacing

    @property
    def segment_centers(self) -> np.ndarray:
        return (np.asarray(self.segment_ids) - self.liz_index) * self.spacing

    def to_dict(self) -> dict:
        return {
            "segment_ids": list(self.segment_ids),
            "liz_index": self.liz_index,
            "axial_width": self.axial_width,
            "bump_efficiency": self.bump_efficiency,
            "kappa_y": self.kappa_y,
            "kappa_z": self.kappa_z,
            "diag_coupling": self.diag_coupling,
            "spacing": self.spacing,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TrapGeometry":
        d = dict(d)
        if "segment_ids" in d:
            d["segment_ids"] = tuple(d["segment_ids"])
        return cls(**d)

    def dump_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)


def parse_channel(channel: str):
    """Split a channel id into ('t'|'d', segment index)."""
    kind, rest = channel[:1], channel[1:]
    if kind not in ("t", "d") or not rest.lstrip("-").isdigit():
        raise ConfigurationError(f"unknown channel identifier {channel!r}")
    return kind, int(rest)


class VoltageAssignment:
    """Mapping of channel id -> voltage.

    Diagonal channels ``d<seg>`` carry the amplitude of the antisymmetric
    electrode pair voltage (the pair left of the site is inverted relative
    to the pair on the right); that sign structure lives in the potential's
    odd-in-x envelope, so one scalar per site suffices.
    """

    def __init__(self, channels: dict | None = None):
        self.channels: dict[str, float] = {}
        for key, value in (channels or {}).items():
            parse_channel(key)
            self.channels[key] = float(value)

    def __getitem__(self, key):
        return self.channels[key]

    def __contains__(self, key):
        return key in self.channels

    def __eq__(self, other):
        return isinstance(other, VoltageAssignment) and self.channels == other.channels

    def items(self):
        return self.channels.items()

    def with_channel(self, channel: str, volts: float) -> "VoltageAssignment":
        out = dict(self.channels)
        out[channel] = float(volts)
        return VoltageAssignment(out)

    def arrays(self, geometry: TrapGeometry):
        """(segment centers, volts), (diag centers, volts) as flat arrays."""
        seg_x, seg_v, diag_x, diag_v = [], [], [], []
        for key, value in self.channels.items():
            kind, seg = parse_channel(key)
            x = geometry.segment_center(seg)
            if kind == "t":
                seg_x.append(x)
                seg_v.append(value)
            else:
                diag_x.append(x)
                diag_v.append(value)
        return (np.asarray(seg_x), np.asarray(seg_v),
                np.asarray(diag_x), np.asarray(diag_v))


def static_trapping(geometry: TrapGeometry, wells: dict, trap_volts: float = -6.0,
                    ) -> VoltageAssignment:
    """Static configuration: one trap voltage per occupied well segment.

    ``wells`` maps segment id -> voltage, or pass an iterable of segment ids
    to put ``trap_volts`` on each.
    """
    if not isinstance(wells, dict):
        wells = {seg: trap_volts for seg in wells}
    return VoltageAssignment({f"t{seg}": v for seg, v in wells.items()})


def potential(geometry: TrapGeometry, volts: VoltageAssignment, r) -> np.ndarray:
    """Potential energy per unit charge (V) at point(s) r (..., 3)."""
    r = np.asarray(r, dtype=float)
    if not np.all(np.isfinite(r)):
        raise ValueError("non-finite evaluation point")
    x, y, z = r[..., 0], r[..., 1], r[..., 2]
    seg_x, seg_v, diag_x, diag_v = volts.arrays(geometry)
    w, eta = geometry.axial_width, geometry.bump_efficiency
    phi = 0.5 * geometry.kappa_y * y * y + 0.5 * geometry.kappa_z * z * z
    if len(seg_x):
        s = (x[..., None] - seg_x) / w
        phi = phi + eta * np.sum(seg_v * bump(s), axis=-1)
    if len(diag_x):
        dx = x[..., None] - diag_x
        envelope = np.sum(diag_v * dx * bump(dx / w), axis=-1)
        phi = phi + geometry.diag_coupling * envelope * y
    return phi


def gradient(geometry: TrapGeometry, volts: VoltageAssignment, r) -> np.ndarray:
    """Analytic gradient of `potential` (V/um), shape (..., 3)."""
    r = np.asarray(r, dtype=float)
    x, y, z = r[..., 0], r[..., 1], r[..., 2]
    seg_x, seg_v, diag_x, diag_v = volts.arrays(geometry)
    w, eta, cd = geometry.axial_width, geometry.bump_efficiency, geometry.diag_coupling
    gx = np.zeros_like(x)
    gy = geometry.kappa_y * y
    gz = geometry.kappa_z * z
    if len(seg_x):
        s = (x[..., None] - seg_x) / w
        gx = gx + eta / w * np.sum(seg_v * bump_d1(s), axis=-1)
    if len(diag_x):
        s = (x[..., None] - diag_x) / w
        g = bump(s)
        # d/dx of (x-xs) G((x-xs)/w) = G + s G'
        gx = gx + cd * y * np.sum(diag_v * (g + s * bump_d1(s)), axis=-1)
        gy = gy + cd * np.sum(diag_v * (x[..., None] - diag_x) * g, axis=-1)
    return np.stack([gx, gy, gz], axis=-1)


def hessian(geometry: TrapGeometry, volts: VoltageAssignment, r) -> np.ndarray:
    """Analytic Hessian of `potential` (V/um^2) at a single point, (3, 3)."""
    r = np.asarray(r, dtype=float)
    x, y = float(r[0]), float(r[1])
    seg_x, seg_v, diag_x, diag_v = volts.arrays(geometry)
    w, eta, cd = geometry.axial_width, geometry.bump_efficiency, geometry.diag_coupling
    h = np.zeros((3, 3))
    h[1, 1] = geometry.kappa_y
    h[2, 2] = geometry.kappa_z
    if len(seg_x):
        s = (x - seg_x) / w
        h[0, 0] += eta / w**2 * np.sum(seg_v * bump_d2(s))
    if len(diag_x):
        s = (x - diag_x) / w
        g, g1, g2 = bump(s), bump_d1(s), bump_d2(s)
        h[0, 0] += cd * y / w * np.sum(diag_v * (2.0 * g1 + s * g2))
        hxy = cd * np.sum(diag_v * (g + s * g1))
        h[0, 1] += hxy
        h[1, 0] += hxy
    return h


def single_ion_frequencies(geometry: TrapGeometry, volts: VoltageAssignment,
                           x_guess: float = 0.0) -> np.ndarray:
    """Secular frequencies (MHz) of one ion at the axial minimum near x_guess.

    Returns the (x, y, z) principal frequencies; requires a confining well
    and no diagonal voltage (principal axes aligned with x, y, z).
    """

    def axial_grad(x):
        return gradient(geometry, volts, np.array([x, 0.0, 0.0]))[0]

    dx = geometry.axial_width
    lo, hi = x_guess - dx, x_guess + dx
    if axial_grad(lo) * axial_grad(hi) > 0:
        raise CalibrationError("no axial minimum bracketed near guess")
    x0 = brentq(axial_grad, lo, hi, xtol=1e-12)
    h = hessian(geometry, volts, np.array([x0, 0.0, 0.0]))
    if abs(h[0, 1]) > 1e-12 * max(abs(h[0, 0]), abs(h[1, 1])):
        raise CalibrationError("diagonal voltage tilts the principal axes")
    if np.any(np.diag(h) <= 0):
        raise CalibrationError("evaluation point is not a 3D minimum")
    return np.array([curvature_to_freq_mhz(c) for c in np.diag(h)])


def calibrate(targets_mhz, u_c: float = -6.0,
              base: TrapGeometry | None = None) -> TrapGeometry:
    """Solve for (w, kappa_y, kappa_z) hitting the single-ion targets.

    ``targets_mhz`` is (axial, radial low, radial high) at voltage ``u_c``
    on one segment.  Root-finding on each parameter; relative residual of
    the recomputed frequencies is < 1e-6.
    """
    f_ax, f_ry, f_rz = targets_mhz
    if min(targets_mhz) <= 0:
        raise CalibrationError("calibration targets must be positive")
    if f_ry == f_rz:
        raise CalibrationError("radial targets must be distinct")
    if u_c >= 0:
        raise CalibrationError("trapping voltage must be negative")
    base = base or TrapGeometry()
    site = base.liz_index

    def kappa_for(f_mhz):
        target = secular_curvature(f_mhz)

        def fun(kappa):
            return kappa - target

        try:
            return brentq(fun, 1e-12, 1.0, xtol=1e-18, rtol=1e-15)
        except ValueError as exc:
            raise CalibrationError(f"radial target {f_mhz} MHz out of range: {exc}")

    kappa_y = kappa_for(f_ry)
    kappa_z = kappa_for(f_rz)

    # Axial curvature at the well center of a single energized segment is
    # -u_c * eta * |G''(0)| / w^2, monotone in w: bracket and root-find.
    target_curv = secular_curvature(f_ax)
    eta = base.bump_efficiency

    def axial_residual(w):
        geo = replace(base, axial_width=w, kappa_y=kappa_y, kappa_z=kappa_z)
        h = hessian(geo, static_trapping(geo, {site: u_c}),
                    np.zeros(3))
        return h[0, 0] - target_curv

    w_lo, w_hi = 5.0, 4000.0
    try:
        if axial_residual(w_lo) * axial_residual(w_hi) > 0:
            raise ValueError("axial curvature target not bracketed")
        w = brentq(axial_residual, w_lo, w_hi, xtol=1e-10, rtol=1e-14)
    except ValueError as exc:
        raise CalibrationError(
            f"axial calibration failed for {f_ax} MHz at u_c={u_c} V "
            f"(eta={eta}): {exc}")

    geo = replace(base, axial_width=w, kappa_y=kappa_y, kappa_z=kappa_z)
    freqs = single_ion_frequencies(geo, static_trapping(geo, {site: u_c}))
    rel = np.abs(np.sort(freqs) - np.sort(np.asarray(targets_mhz, float)))
    rel /= np.sort(np.asarray(targets_mhz, float))
    if np.max(rel) > 1e-6:
        raise CalibrationError(f"calibration residual {rel} exceeds 1e-6")
    return geo


PAPER_TARGETS_MHZ = (1.488, 1.927, 3.248)


def paper_geometry() -> TrapGeometry:
    """Geometry calibrated to the measured single-ion frequencies."""
    return calibrate(PAPER_TARGETS_MHZ, u_c=-6.0)
