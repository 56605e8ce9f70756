"""Steady-state incremental-quantity network of a GFM-fed line.

The sending source is a Thevenin branch ``Z_s`` whose fault-ride-through
action is represented by an added series impedance ``dZ_s`` and an IVS
change ``dE_s``; the fault is ``R_f`` to ground at fraction ``m_f`` of the
line.  Closed forms give the relay-point incremental current and voltage,
the operating quantity of the distance element with reach ``m`` and the
restraining quantity.  ``nodal_oracle`` solves the same circuit by nodal
analysis and is kept free of any shared algebra with the closed forms.

Sign convention: ``dE_s`` is the voltage the IVS *loses*, i.e. the source
EMF during the disturbance is ``E_s - dE_s``.  With this convention the
IVS-change and impedance-change terms enter the incremental current with
the same sign (``dE_s + I_pre * dZ_s``).
"""
from __future__ import annotations

import cmath
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from .config import SystemConfig

Phasor = complex
Impedance = complex


class ComplexProduct(complex):
    """Product of two impedances (pu^2); not an impedance itself."""


class DegenerateNetworkError(ArithmeticError):
    pass


class PreFaultError(RuntimeError):
    pass


@dataclass(frozen=True)
class IqNetworkCase:
    z_s: complex
    dz_s: complex
    z_g: complex
    z_l: complex
    m_f: float
    m: float
    r_f: float
    v_f_pre: complex
    i_s_pre: complex
    de_s: complex = 0j
    k_rst: float = 1.0
    open_fault: bool = False
    allow_negative_dx: bool = False

    def __post_init__(self):
        if not 0.0 < self.m < 1.0:
            raise ValueError(f"reach m must lie in (0, 1), got {self.m}")
        if self.m_f < 0:
            raise ValueError("m_f must be >= 0")
        if math.isinf(self.r_f):
            object.__setattr__(self, "open_fault", True)
        elif self.r_f < 0:
            raise ValueError("r_f must be >= 0")
        if self.k_rst < 1.0:
            raise ValueError("k_rst must be >= 1")
        for name in ("z_s", "z_g", "z_l"):
            if getattr(self, name).real < 0:
                raise ValueError(f"{name} must have non-negative resistance")
        if self.dz_s.real < 0:
            raise ValueError("dz_s must have non-negative resistance")
        if self.dz_s.imag < 0 and not self.allow_negative_dx:
            raise ValueError("negative dz_s reactance requires allow_negative_dx")


@dataclass(frozen=True)
class IqSolution:
    di_s: complex
    dv_s: complex
    psi_op: float
    psi_rst: float
    i_s_total: complex

    @property
    def op_gt_rst(self) -> bool:
        # tie means m_f == m: treat as external
        return self.psi_op > self.psi_rst


@dataclass(frozen=True)
class PreFault:
    v_f_pre: complex
    i_s_pre: complex
    v_s_pre: complex
    e_s: complex
    e_g: complex


# --- closed forms -----------------------------------------------------------

def _nonzero(x, what):
    if np.any(np.asarray(x) == 0):
        raise DegenerateNetworkError(f"degenerate network: {what} is zero")


def aux_quantities(case: IqNetworkCase) -> tuple[ComplexProduct, complex, complex]:
    zsrc = case.z_s + case.dz_s
    far = case.z_g + (1.0 - case.m_f) * case.z_l
    z_x = ComplexProduct((zsrc + case.m_f * case.z_l) * far)
    z_sgl = zsrc + case.z_g + case.z_l
    if case.open_fault:
        z_y = far
    elif case.r_f == 0:
        if far == 0:
            raise DegenerateNetworkError("both parallel branches of z_y are zero")
        z_y = 0j
    else:
        den = case.r_f + far
        _nonzero(den, "R_f + far-side impedance")
        z_y = case.r_f * far / den
    return z_x, z_sgl, z_y


def closed_form_arrays(z_s, dz_s, z_g, z_l, m_f, r_f, v_f_pre, i_s_pre, de_s, m):
    """Vectorised closed forms; returns (dI_s, dV_s, psi_op complex).

    ``r_f`` may contain ``inf`` for an open fault branch.  Broadcasts over
    numpy arrays; degenerate points yield nan/inf rather than raising.
    """
    z_s, dz_s, z_g, z_l = (np.asarray(a, dtype=complex) for a in (z_s, dz_s, z_g, z_l))
    m_f = np.asarray(m_f, dtype=float)
    r_f = np.asarray(r_f, dtype=float)
    zsrc = z_s + dz_s
    near = zsrc + m_f * z_l
    far = z_g + (1.0 - m_f) * z_l
    z_x = near * far
    z_sgl = zsrc + z_g + z_l
    open_ = np.isinf(r_f)
    rf = np.where(open_, 0.0, r_f)
    with np.errstate(divide="ignore", invalid="ignore"):
        z_y = np.where(open_, far, rf * far / (rf + far))
        z_y = np.where((rf == 0) & ~open_, 0.0, z_y)
        k_f = np.where(open_, 0.0, z_x / (near * (z_x + rf * z_sgl)))
        src = de_s + i_s_pre * dz_s
        loop = z_y + m_f * z_l + zsrc
        di = v_f_pre * k_f - src / loop
        dv = -v_f_pre * zsrc * k_f - (z_y + m_f * z_l) / loop * src
        psi = -v_f_pre * (zsrc + m * z_l) * k_f - src * (z_y + m_f * z_l - m * z_l) / loop
    return di, dv, psi


def _closed(case: IqNetworkCase):
    aux_quantities(case)  # raises on degenerate parallel branch
    near = case.z_s + case.dz_s + case.m_f * case.z_l
    _nonzero(near, "sending-side impedance to the fault")
    r_f = math.inf if case.open_fault else case.r_f
    di, dv, psi = closed_form_arrays(
        case.z_s, case.dz_s, case.z_g, case.z_l, case.m_f, r_f,
        case.v_f_pre, case.i_s_pre, case.de_s, case.m,
    )
    vals = (complex(di), complex(dv), complex(psi))
    if not all(cmath.isfinite(v) for v in vals):
        raise DegenerateNetworkError("closed form evaluated to a non-finite value")
    return vals


def incremental_current(case: IqNetworkCase) -> complex:
    return _closed(case)[0]


def incremental_voltage(case: IqNetworkCase) -> complex:
    return _closed(case)[1]


def operating_phasor(case: IqNetworkCase) -> complex:
    """Complex operating function; its magnitude is the operating quantity."""
    return _closed(case)[2]


def operating_quantity(case: IqNetworkCase) -> float:
    return abs(operating_phasor(case))


def ideal_operating_quantity(case: IqNetworkCase) -> float:
    """Linear source, solid fault: |V_f (Z_s + m Z_l) / (Z_s + m_f Z_l)|."""
    den = case.z_s + case.m_f * case.z_l
    if den == 0:
        raise ZeroDivisionError("Z_s + m_f Z_l is zero")
    return abs(-case.v_f_pre * (case.z_s + case.m * case.z_l) / den)


def restraining_quantity(case: IqNetworkCase) -> float:
    return case.k_rst * abs(case.v_f_pre)


def solve(case: IqNetworkCase) -> IqSolution:
    di, dv, psi = _closed(case)
    return IqSolution(
        di_s=di,
        dv_s=dv,
        psi_op=abs(psi),
        psi_rst=restraining_quantity(case),
        i_s_total=case.i_s_pre + di,
    )


# --- independent nodal oracle ----------------------------------------------

def nodal_oracle(case: IqNetworkCase) -> tuple[complex, complex]:
    """Solve the incremental network by nodal analysis.

    Nodes: relay bus S and fault point F.  Each source energising the
    network (pre-fault current through dZ_s, IVS change, pre-fault fault
    point voltage) is solved as its own circuit and the three responses
    are summed.
    """
    z_src = case.z_s + case.dz_s
    z_near = case.m_f * case.z_l
    z_far = case.z_g + (1.0 - case.m_f) * case.z_l
    for z, what in ((z_src, "source branch"), (z_near, "relay-to-fault segment"),
                    (z_far, "fault-to-grid branch")):
        if z == 0:
            raise DegenerateNetworkError(f"{what} has zero impedance")
    y_src, y_near, y_far = 1 / z_src, 1 / z_near, 1 / z_far
    solid = (not case.open_fault) and case.r_f == 0
    y_f = 0j if (case.open_fault or solid) else 1 / case.r_f

    a = np.array([[y_src + y_near, -y_near],
                  [-y_near, y_near + y_far + y_f]], dtype=complex)
    if solid:
        a[1] = [0, 1]

    def respond(inj_s, inj_f, fixed_f=0j):
        b = np.array([inj_s, fixed_f if solid else inj_f], dtype=complex)
        try:
            vs, vf = np.linalg.solve(a, b)
        except np.linalg.LinAlgError as exc:
            raise DegenerateNetworkError("singular nodal admittance matrix") from exc
        return (vs - vf) * y_near, vs

    # pre-fault current source across dZ_s: Norton injection of -I_pre*dZ_s/Z_src
    resp = [
        respond(-case.i_s_pre * case.dz_s * y_src, 0j),
        respond(-case.de_s * y_src, 0j),
    ]
    if not case.open_fault:
        # fault branch holds -V_f behind R_f
        inj_f = 0j if solid else -case.v_f_pre * y_f
        resp.append(respond(0j, inj_f, fixed_f=-case.v_f_pre))
    di = sum(r[0] for r in resp)
    dv = sum(r[1] for r in resp)
    return complex(di), complex(dv)


# --- pre-fault load flow ---------------------------------------------------

def _two_source(cfg: SystemConfig, delta: float):
    e_s = cmath.rect(cfg.e_s_mag, delta)
    e_g = complex(cfg.e_g_mag, 0.0)
    i = (e_s - e_g) / (cfg.z_s + cfg.z_l + cfg.z_g)
    v_s = e_s - cfg.z_s * i
    return e_s, e_g, i, v_s


def sending_angle(cfg: SystemConfig) -> float:
    """IVS angle (rad) delivering ``cfg.p_pre`` at the relay bus."""
    if cfg.p_pre is None:
        return math.radians(cfg.e_s_angle_deg)

    def p(delta):
        e_s, _, i, v_s = _two_source(cfg, delta)
        return (v_s * i.conjugate()).real

    peak = minimize_scalar(lambda d: -p(d), bounds=(0.0, math.pi), method="bounded",
                           options={"xatol": 1e-12})
    d_max = float(peak.x)
    p_max = p(d_max)
    p_lo = p(-math.pi / 2)
    if cfg.p_pre > p_max:
        raise PreFaultError(f"P_pre={cfg.p_pre} exceeds static transfer limit {p_max:.4f}")
    lo = -math.pi / 2 if cfg.p_pre < p(0.0) else 0.0
    if cfg.p_pre < p_lo:
        raise PreFaultError(f"P_pre={cfg.p_pre} below reachable range on [-pi/2, {d_max:.3f}]")
    try:
        return brentq(lambda d: p(d) - cfg.p_pre, lo, d_max, xtol=1e-15, rtol=1e-15,
                      maxiter=200)
    except (ValueError, RuntimeError) as exc:
        raise PreFaultError(f"angle search failed on bracket [{lo}, {d_max}]") from exc


def pre_fault_solve(cfg: SystemConfig, m_f: float = 0.0) -> PreFault:
    e_s, e_g, i, v_s = _two_source(cfg, sending_angle(cfg))
    return PreFault(v_f_pre=v_s - m_f * cfg.z_l * i, i_s_pre=i, v_s_pre=v_s, e_s=e_s, e_g=e_g)


def case_from_config(
    cfg: SystemConfig,
    m_f: float,
    r_f: float,
    dz_s: complex = 0j,
    de_s: complex = 0j,
    m: float = 0.8,
    k_rst: float = 1.0,
    pre: PreFault | None = None,
) -> IqNetworkCase:
    pre = pre or pre_fault_solve(cfg, m_f)
    v_f = pre.v_s_pre - m_f * cfg.z_l * pre.i_s_pre
    return IqNetworkCase(
        z_s=cfg.z_s, dz_s=dz_s, z_g=cfg.z_g, z_l=cfg.z_l, m_f=m_f, m=m, r_f=r_f,
        v_f_pre=v_f, i_s_pre=pre.i_s_pre, de_s=de_s, k_rst=k_rst,
        allow_negative_dx=dz_s.imag < 0,
    )


def total_quantities(case: IqNetworkCase, v_s_pre: complex) -> tuple[complex, complex]:
    """Post-disturbance relay voltage and current (pre-fault + incremental)."""
    di, dv, _ = _closed(case)
    return v_s_pre + dv, case.i_s_pre + di


def size_limited_impedance(cfg: SystemConfig, m_f: float, r_f: float, angle: float,
                           m: float = 0.8, pre: PreFault | None = None,
                           z_max: float = 1e3) -> complex:
    """Smallest dZ_s at ``angle`` (rad) bringing |I_s| down to ``cfg.i_limit``.

    Returns 0 when the unlimited fault current is already within the limit.
    """
    pre = pre or pre_fault_solve(cfg, m_f)
    u = cmath.rect(1.0, angle)

    def excess(z):
        c = case_from_config(cfg, m_f, r_f, dz_s=z * u, m=m, pre=pre)
        return abs(c.i_s_pre + incremental_current(c)) - cfg.i_limit

    if excess(0.0) <= 0:
        return 0j
    if excess(z_max) > 0:
        raise PreFaultError("current limit not reachable within z_max")
    return brentq(excess, 0.0, z_max, xtol=1e-13, rtol=1e-13) * u
