"""Phasor-based quadrilateral distance element (zone 1), used as a baseline.

Full-cycle DFT phasors after an exact mimic filter, six loop impedances
with residual-current compensation, and a convex polygon with a settle
timer.
"""
from __future__ import annotations

import cmath
import hashlib
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .config import Base, LineParams, default_line
from .relay_iq import LOOPS, cycle_samples
from .waveform import WaveformRecord


class ZoneGeometryError(ValueError):
    pass


def mimic(x: np.ndarray, tau: float, fs: float, f0: float) -> np.ndarray:
    """DC-removing mimic ``x[n] - alpha x[n-1]`` normalised to unity gain and
    zero phase at ``f0``.  A decaying exponential with time constant ``tau``
    is removed exactly."""
    ts = 1.0 / fs
    alpha = math.exp(-ts / tau)
    gain = 1.0 - alpha * cmath.exp(-2j * math.pi * f0 * ts)
    y = np.empty_like(x, dtype=float)
    y[..., 1:] = x[..., 1:] - alpha * x[..., :-1]
    y[..., 0] = x[..., 0] * (1.0 - alpha)
    return y, gain


def phasor_estimate(x: np.ndarray, fs: float, f0: float, t: np.ndarray,
                    mimic_tau: float | None = None) -> np.ndarray:
    """Sliding one-cycle DFT along the last axis.

    ``x = A cos(w t + phi)`` gives ``A exp(j phi)``.  Samples before the
    first full window are NaN.
    """
    n = cycle_samples(fs, f0)
    gain = 1.0
    if mimic_tau is not None:
        x, gain = mimic(np.asarray(x, dtype=float), mimic_tau, fs, f0)
    prod = x * np.exp(-2j * math.pi * f0 * t)
    cs = np.cumsum(prod, axis=-1)
    out = np.full(prod.shape, np.nan + 0j)
    out[..., n - 1] = cs[..., n - 1]
    out[..., n:] = cs[..., n:] - cs[..., :-n]
    # the first output sample uses the unfiltered x[0]; start one sample later with the mimic
    if mimic_tau is not None:
        out[..., n - 1] = np.nan
    return out * (2.0 / n) / gain


def loop_impedance(v_ph: np.ndarray, i_ph: np.ndarray, line: LineParams, f0: float,
                   min_current: float = 0.05) -> np.ndarray:
    """Apparent impedance (pu) of the six loops from phase phasors (3 x N).

    Loops whose compensated current is below ``min_current`` are NaN.
    """
    w = 2 * math.pi * f0
    z1, z0 = line.z1(w), line.z0(w)
    k0 = (z0 - z1) / (3 * z1)
    i_res = i_ph.sum(axis=0)
    v_ll = v_ph - np.roll(v_ph, -1, axis=0)
    i_ll = i_ph - np.roll(i_ph, -1, axis=0)
    num = np.vstack([v_ph, v_ll])
    den = np.vstack([i_ph + k0 * i_res, i_ll])
    with np.errstate(invalid="ignore", divide="ignore"):
        z = num / den
    z[~(np.abs(den) >= min_current)] = np.nan
    return z


@dataclass(frozen=True)
class ZonePolygon:
    """Convex polygon in the R-X plane (pu), vertices counter-clockwise."""

    vertices: tuple

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=complex)
        if len(v) < 3:
            raise ZoneGeometryError("a polygon needs at least 3 vertices")
        e = np.roll(v, -1) - v
        cross = (e * np.roll(e, -1).conjugate()).imag  # < 0 for left turns
        if np.any(cross >= 0):
            raise ZoneGeometryError("vertices must form a strictly convex counter-clockwise polygon")
        object.__setattr__(self, "vertices", tuple(complex(x) for x in v))

    @classmethod
    def quadrilateral(cls, z_line: complex, m: float = 0.8, r_reach: float = 0.124,
                      left_tilt_deg: float = 15.0, bottom_tilt_deg: float = 15.0) -> "ZonePolygon":
        """Zone with top reactance ``m X_line``, right blinder through
        ``r_reach`` parallel to the line, left edge ``left_tilt_deg`` beyond
        the line angle and bottom edge ``bottom_tilt_deg`` below the R axis.
        """
        if m <= 0 or r_reach <= 0:
            raise ZoneGeometryError("reach and resistive reach must be positive")
        th = cmath.phase(z_line)
        x_top = m * z_line.imag
        u_right = cmath.rect(1.0, th)
        u_bot = cmath.rect(1.0, -math.radians(bottom_tilt_deg))
        u_left = cmath.rect(1.0, th + math.radians(left_tilt_deg))

        def meet(p, u, q, w):  # intersection of p + s u and q + r w
            a = np.array([[u.real, -w.real], [u.imag, -w.imag]])
            s = np.linalg.solve(a, [(q - p).real, (q - p).imag])[0]
            return p + s * u

        p_bot = meet(0j, u_bot, complex(r_reach), u_right)
        p_top_r = meet(complex(r_reach), u_right, 1j * x_top, 1 + 0j)
        p_top_l = meet(0j, u_left, 1j * x_top, 1 + 0j)
        return cls((0j, p_bot, p_top_r, p_top_l))

    def contains(self, z) -> np.ndarray:
        """Vectorised closed point-in-polygon test; NaN is outside."""
        z = np.asarray(z, dtype=complex)
        v = np.asarray(self.vertices)
        inside = np.isfinite(z)
        for a, b in zip(v, np.roll(v, -1)):
            cross = ((b - a).conjugate() * (z - a)).imag
            inside &= cross >= -1e-12
        return inside


@dataclass(frozen=True)
class QuadSettings:
    m: float = 0.8
    r_reach_ohm: float = 20.0
    left_tilt_deg: float = 15.0
    bottom_tilt_deg: float = 15.0
    settle_time: float = 0.020
    min_current: float = 0.05
    mimic: bool = True
    f0: float = 50.0
    line: LineParams = field(default_factory=default_line)
    base: Base = field(default_factory=Base)

    def digest(self) -> str:
        blob = json.dumps(asdict(self), sort_keys=True, default=str)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def polygon(self) -> ZonePolygon:
        return ZonePolygon.quadrilateral(
            self.line.z1(2 * math.pi * self.f0), self.m, self.base.ohm_to_pu(self.r_reach_ohm),
            self.left_tilt_deg, self.bottom_tilt_deg)


@dataclass
class ZoneResult:
    pickup: bool
    pickup_time: float | None
    pickup_loop: str | None
    transient_overreach: bool
    traces: dict = field(default_factory=dict, repr=False)

    def to_json(self) -> dict:
        return {
            "element": "quadrilateral_zone1",
            "pickup": self.pickup,
            "pickup_time": self.pickup_time,
            "pickup_loop": self.pickup_loop,
            "transient_overreach": self.transient_overreach,
        }


def zone_test(z: np.ndarray, t: np.ndarray, poly: ZonePolygon, settle_time: float,
              fs: float) -> ZoneResult:
    """Pickup once a loop stays inside for ``settle_time``; a loop that enters
    the zone without completing the timer is a transient overreach."""
    inside = poly.contains(z)
    need = int(math.ceil(settle_time * fs - 1e-9))
    best = None
    for j in range(inside.shape[0]):
        run = 0
        for n, flag in enumerate(inside[j]):
            run = run + 1 if flag else 0
            if run > need:  # inside at n - need .. n, i.e. for settle_time
                if best is None or n < best[0]:
                    best = (n, j)
                break
    picked = best is not None
    overreach = bool(inside.any()) and not picked
    return ZoneResult(
        pickup=picked,
        pickup_time=float(t[best[0]]) if picked else None,
        pickup_loop=LOOPS[best[1]] if picked else None,
        transient_overreach=overreach,
        traces={"t": t, "z": z, "inside": inside},
    )


def process(rec: WaveformRecord, settings: QuadSettings) -> ZoneResult:
    t = rec.t
    tau = None
    if settings.mimic:
        ln = settings.line
        tau = ln.l1 / ln.r1 if ln.r1 > 0 else None
    v = phasor_estimate(rec.v, rec.fs, settings.f0, t, tau)
    i = phasor_estimate(rec.i, rec.fs, settings.f0, t, tau)
    z = loop_impedance(v, i, settings.line, settings.f0, settings.min_current)
    return zone_test(z, t, settings.polygon(), settings.settle_time, rec.fs)


def trajectory_rows(res: ZoneResult, step: float = 1e-3):
    """(t, loop, r, x, inside) rows decimated to ``step`` seconds for plotting."""
    t, z, inside = res.traces["t"], res.traces["z"], res.traces["inside"]
    fs = 1.0 / (t[1] - t[0])
    k = max(1, int(round(step * fs)))
    for n in range(0, len(t), k):
        for j, loop in enumerate(LOOPS):
            if np.isfinite(z[j, n]):
                yield float(t[n]), loop, float(z[j, n].real), float(z[j, n].imag), bool(inside[j, n])
