"""Time-domain simulation of the faulted two-source line with GFM source laws.

The network is source branch -> line segment (m_f) -> fault to ground ->
line segment (1 - m_f) -> grid branch, integrated with the trapezoidal rule.
Branches are transposed and the ABCG fault is symmetric, so the Clarke
transform decouples the three-phase circuit exactly: the alpha-beta pair is
integrated as one complex space vector and the zero sequence separately.
The stepping loop lives in ``kernels`` (compiled when available).

Scheduled source changes are physical series R and L.  The behavioural
limiters are quasi-static: the emulated impedance drop is
``z * exp(j*angle) * i`` on the current space vector, as a GFM control
loop computes it, so it adds no electrical time constant.  The inverter
sits behind a grounded-wye transformer, so the limiter acts on the
positive-sequence space vector only.
"""
from __future__ import annotations

import cmath
import hashlib
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import kernels
from .config import SystemConfig
from .netmodel import pre_fault_solve
from .waveform import WaveformRecord

MODES = ("linear", "scheduled", "gfm_saturation", "gfm_virtual_impedance")
DEFAULT_TAU = {"gfm_saturation": 0.5e-3, "gfm_virtual_impedance": 20e-3}
_A = cmath.rect(1.0, 2 * math.pi / 3)


class SimulationError(RuntimeError):
    pass


@dataclass(frozen=True)
class ScheduleStep:
    """Source change taking effect at ``t`` (absolute values, not increments).

    ``dx`` is the added reactance at nominal frequency (pu) and ``de`` the
    IVS drop as a fraction of the pre-fault IVS phasor, so ``de = 0.67``
    takes a 1 pu source to 0.33 pu.  With ``ramp`` > 0 the values move linearly from
    the previous segment over that many seconds.
    """

    t: float
    dr: float = 0.0
    dx: float = 0.0
    de: complex = 0j
    ramp: float = 0.0


@dataclass(frozen=True)
class SourceDynamics:
    mode: str = "linear"
    schedule: tuple = ()
    i_limit: float = 1.2
    vi_angle_deg: float | None = None
    limiter_time_constant: float | None = None

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown source mode {self.mode!r}")
        if self.i_limit <= 0:
            raise ValueError("i_limit must be positive")
        if self.vi_angle_deg is not None and not 0.0 <= self.vi_angle_deg <= 90.0:
            raise ValueError("vi_angle_deg must lie in [0, 90]")
        if self.schedule and self.mode != "scheduled":
            raise ValueError("a schedule is only valid in 'scheduled' mode")
        object.__setattr__(self, "schedule", tuple(sorted(self.schedule, key=lambda s: s.t)))

    @property
    def tau(self) -> float:
        if self.limiter_time_constant is not None:
            return self.limiter_time_constant
        return DEFAULT_TAU.get(self.mode, 5e-3)

    def limiter_angle(self, cfg: SystemConfig) -> float:
        """Angle (rad) of the emulated impedance."""
        if self.mode == "gfm_saturation":
            return 0.0
        if self.vi_angle_deg is None:
            return cmath.phase(cfg.z_l)
        return math.radians(self.vi_angle_deg)


@dataclass(frozen=True)
class FaultEvent:
    t_on: float
    m_f: float
    r_f_ohm: float = 0.0
    r_f_schedule: tuple = ()  # ((t, r_f_ohm), ...) changes after t_on
    inception_angle_deg: float = 0.0

    def __post_init__(self):
        if self.r_f_ohm < 0 or any(r < 0 for _, r in self.r_f_schedule):
            raise ValueError("fault resistance must be non-negative")
        if not 0.0 <= self.m_f <= 1.0:
            raise ValueError("simulated fault location must lie on the line (0 <= m_f <= 1)")


def gfm_limiter_step(z: float, i_mag: float, z_src_mag: float, dyn: SourceDynamics,
                     h: float) -> float:
    """One explicit step of the behavioural current limiter.

    ``z`` is the magnitude of the emulated series impedance.  It integrates
    the relative overcurrent scaled by the present source impedance, which
    gives first-order settling with time constant ``dyn.tau`` when the fault
    current is roughly inversely proportional to the source impedance.
    Clamped at zero (anti-windup), so currents below the limit leave it at 0.
    """
    z_new = z + h / dyn.tau * (i_mag / dyn.i_limit - 1.0) * z_src_mag
    return max(z_new, 0.0)


def equivalent_impedance(z: float, dyn: SourceDynamics, cfg: SystemConfig) -> complex:
    return cmath.rect(z, dyn.limiter_angle(cfg))


def _schedule_arrays(dyn: SourceDynamics, t: np.ndarray, omega: float):
    n = len(t)
    dr, dl = np.zeros(n), np.zeros(n)
    de = np.zeros(n, dtype=complex)
    prev = (0.0, 0.0, 0j)
    for step in dyn.schedule:
        target = (step.dr, step.dx / omega, step.de)
        if step.ramp > 0:
            frac = np.clip((t - step.t) / step.ramp, 0.0, 1.0)
        else:
            frac = (t >= step.t - 1e-12).astype(float)
        sel = t >= step.t - 1e-12
        for arr, p, q in zip((dr, dl, de), prev, target):
            arr[sel] = p + (q - p) * frac[sel]
        prev = target
    return dr, dl, de


def _hash(obj) -> str:
    return hashlib.sha256(json.dumps(obj, sort_keys=True, default=str).encode()).hexdigest()[:16]


def simulate(cfg: SystemConfig, dyn: SourceDynamics, fault: FaultEvent | None,
             duration: float, fs: float = 5000.0, dt: float | None = None) -> WaveformRecord:
    """Simulate ``duration`` seconds and return relay-point waveforms at ``fs``.

    ``fault=None`` runs the unfaulted network.  The internal step defaults to
    ``1 / (10 fs)``; source and fault-resistance changes are snapped to it.
    """
    h = dt if dt is not None else 1.0 / (10.0 * fs)
    if h > 1.0 / (10.0 * fs) * (1 + 1e-9):
        raise ValueError("internal step must not exceed 1/(10 fs)")
    decim = round(1.0 / (fs * h))
    if abs(decim * h * fs - 1.0) > 1e-9:
        raise ValueError("1/fs must be an integer multiple of the internal step")
    n = int(round(duration / h)) + 1
    t = np.arange(n) * h
    w = cfg.omega
    f0 = cfg.base.f0

    if fault is not None:
        if fault.t_on < 2.0 / f0 - 1e-12:
            raise ValueError("fault must start after at least two pre-fault cycles")
        m_f = fault.m_f
        t_ref = round(fault.t_on / h) * h
    else:
        m_f = 0.5
        t_ref = 0.0
    pre = pre_fault_solve(cfg, m_f)

    # the sinusoid of phase A at the fault point crosses zero (rising) at t_ref
    inc = math.radians(fault.inception_angle_deg) if fault else 0.0
    rot = cmath.rect(1.0, -math.pi / 2 - cmath.phase(pre.v_f_pre) + inc)
    carrier = rot * np.exp(1j * w * (t - t_ref))

    line = cfg.line
    zs, zg = cfg.z_s, cfg.z_g
    rs = np.array([zs.real, zs.real])
    ls = np.array([zs.imag, zs.imag]) / w
    rg = np.array([zg.real, zg.real])
    lg = np.array([zg.imag, zg.imag]) / w
    rl = np.array([line.r1, line.r0])
    ll = np.array([line.l1, line.l0])

    if dyn.mode == "scheduled":
        dr, dl, de = _schedule_arrays(dyn, t, w)
    else:
        dr, dl, de = np.zeros(n), np.zeros(n), np.zeros(n, dtype=complex)

    zero = np.zeros(n, dtype=complex)
    es = np.ascontiguousarray(np.vstack([pre.e_s * (1.0 - de) * carrier, zero]))
    eg = np.ascontiguousarray(np.vstack([pre.e_g * carrier, zero]))

    rf = np.zeros(n)
    fault_on = np.zeros(n, dtype=np.uint8)
    if fault is not None:
        on = t >= t_ref - 1e-12
        fault_on[on] = 1
        rf[on] = cfg.base.ohm_to_pu(fault.r_f_ohm)
        for t_step, r_ohm in sorted(fault.r_f_schedule):
            rf[t >= round(t_step / h) * h - 1e-12] = cfg.base.ohm_to_pu(r_ohm)

    # discrete periodic steady state of the trapezoidal rule (frequency-warped)
    w_d = 2.0 / h * math.tan(w * h / 2.0)
    r_tot = zs.real + line.r1 + zg.real
    l_tot = (zs.imag + zg.imag) / w + line.l1
    i_d = (pre.e_s - pre.e_g) / complex(r_tot, w_d * l_tot)
    i_init = np.array([i_d * carrier[0], 0j])

    lim = dyn.mode in DEFAULT_TAU
    ang = dyn.limiter_angle(cfg) if lim else 0.0
    i1, vs, z, max_res = kernels.emt_run(
        h, es, eg, rs, ls, rl, ll, rg, lg, float(m_f), rf, fault_on,
        np.ascontiguousarray(dr), np.ascontiguousarray(dl),
        int(lim), ang, dyn.tau, dyn.i_limit, w, i_init, i_init.copy(),
    )
    if not (np.all(np.isfinite(i1)) and np.all(np.isfinite(vs))):
        raise SimulationError("integration produced non-finite values")

    def to_abc(x):
        al, be, x0 = x[0].real, x[0].imag, x[1].real
        a = al + x0
        b = -0.5 * al + math.sqrt(3) / 2 * be + x0
        c = -0.5 * al - math.sqrt(3) / 2 * be + x0
        return a[::decim], b[::decim], c[::decim]

    va, vb, vc = to_abc(vs)
    ia, ib, ic = to_abc(i1)
    z_out = z[::decim]
    dr_out = dr[::decim] + z_out * math.cos(ang)
    dx_out = dl[::decim] * w + z_out * math.sin(ang)
    meta = {
        "base_kv": cfg.base.kv,
        "base_mva": cfg.base.mva,
        "f0": f0,
        "phase_ref_rad": cmath.phase(rot),
        "t_ref": t_ref,
        "dt": h,
        "max_residual": max_res,
        "backend": kernels.BACKEND,
        "scenario_hash": _hash({"cfg": asdict(cfg), "dyn": asdict(dyn),
                                "fault": asdict(fault) if fault else None,
                                "duration": duration, "fs": fs, "dt": h}),
    }
    return WaveformRecord(
        fs=fs, t0=0.0,
        channels={"v_sa": va, "v_sb": vb, "v_sc": vc, "i_sa": ia, "i_sb": ib, "i_sc": ic},
        meta=meta,
        extras={"dr": dr_out, "dx": dx_out, "de": pre.e_s * de[::decim], "z_limiter": z_out,
                "pre": pre, "rot": rot, "t_ref": t_ref},
    )


def phasor_waveform(ph: complex, rec: WaveformRecord, phase: int = 0) -> np.ndarray:
    """Instantaneous waveform of a netmodel phasor on the record's time axis."""
    rot = cmath.rect(1.0, rec.meta["phase_ref_rad"])
    w = 2 * math.pi * rec.meta["f0"]
    shift = (1, _A.conjugate(), _A)[phase]
    return np.real(rot * ph * shift * np.exp(1j * w * (rec.t - rec.meta["t_ref"])))
