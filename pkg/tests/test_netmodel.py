import cmath
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from iqgfm import netmodel as nm
from iqgfm.config import SystemConfig

from conftest import rand_case_kwargs

Z = 0.1 + 1.0j


def case(**kw):
    base = dict(z_s=Z, dz_s=0j, z_g=Z, z_l=Z, m_f=0.5, m=0.8, r_f=0.0,
                v_f_pre=1 + 0j, i_s_pre=0j, de_s=0j)
    base.update(kw)
    return nm.IqNetworkCase(**base)


def rel(a, b):
    return abs(a - b) / max(abs(b), 1e-12)


# --- auxiliary impedances ----------------------------------------------------

def test_aux_solid_and_open_fault():
    assert nm.aux_quantities(case(r_f=0.0))[2] == 0
    far = Z + 0.5 * Z
    assert nm.aux_quantities(case(r_f=math.inf))[2] == far


def test_aux_hand_evaluation_with_fractions():
    # every impedance (dZ_s included) is 0.1 + j1.0; m_f = 0.5, R_f = 1
    re, im = Fraction(1, 10), Fraction(1)

    def mul(a, b):
        return a[0] * b[0] - a[1] * b[1], a[0] * b[1] + a[1] * b[0]

    def div(a, b):
        d = b[0] ** 2 + b[1] ** 2
        return (a[0] * b[0] + a[1] * b[1]) / d, (a[1] * b[0] - a[0] * b[1]) / d

    near = (Fraction(5, 2) * re, Fraction(5, 2) * im)
    far = (Fraction(3, 2) * re, Fraction(3, 2) * im)
    z_x = mul(near, far)
    z_y = div(far, (1 + far[0], far[1]))
    assert z_x == (Fraction(-297, 80), Fraction(3, 4))
    got = nm.aux_quantities(case(dz_s=Z, r_f=1.0))
    assert got[0] == pytest.approx(complex(z_x[0], z_x[1]), abs=1e-14)
    assert got[1] == pytest.approx(0.4 + 4j, abs=1e-14)
    assert got[2] == pytest.approx(complex(z_y[0], z_y[1]), abs=1e-14)
    assert got[2] == pytest.approx(0.678097 + 0.419874j, abs=1e-6)


def test_aux_degenerate_parallel_branch():
    with pytest.raises(nm.DegenerateNetworkError):
        nm.aux_quantities(case(z_g=0j, z_l=0.1j, m_f=1.0))


# --- incremental current and voltage --------------------------------------------

def test_no_sources_no_increments():
    c = case(r_f=math.inf, i_s_pre=0.5 + 0.1j)
    assert nm.incremental_current(c) == 0
    assert nm.incremental_voltage(c) == 0


def test_huge_source_impedance_cancels_current():
    c = case(r_f=0.02, i_s_pre=0.9 - 0.3j, dz_s=1e9 + 0j)
    assert abs(nm.incremental_current(c) + c.i_s_pre) < 1e-6


def test_stiff_source_holds_voltage():
    c = case(z_s=0j, r_f=0.05, de_s=0j, i_s_pre=0j)
    assert abs(nm.incremental_voltage(c)) < 1e-15


@pytest.mark.parametrize("seed", range(5))
def test_closed_form_matches_oracle(seed):
    rng = np.random.default_rng(seed)
    for _ in range(200):
        c = nm.IqNetworkCase(**rand_case_kwargs(rng))
        di_o, dv_o = nm.nodal_oracle(c)
        assert rel(nm.incremental_current(c), di_o) <= 1e-9
        assert rel(nm.incremental_voltage(c), dv_o) <= 1e-9


def test_oracle_classical_pure_fault():
    # no source change: the solid-fault current is V_f / (Z_s + m_f Z_l) reversed
    c = case(r_f=0.0, v_f_pre=0.97 + 0.05j)
    di, _ = nm.nodal_oracle(c)
    assert di == pytest.approx(c.v_f_pre / (Z + 0.5 * Z), rel=1e-12)


def test_vectorised_matches_scalar():
    rng = np.random.default_rng(3)
    cases = [nm.IqNetworkCase(**rand_case_kwargs(rng)) for _ in range(50)]
    arr = {k: np.array([getattr(c, k) for c in cases]) for k in
           ("z_s", "dz_s", "z_g", "z_l", "m_f", "r_f", "v_f_pre", "i_s_pre", "de_s", "m")}
    di, dv, psi = nm.closed_form_arrays(**arr)
    for j, c in enumerate(cases):
        assert di[j] == pytest.approx(nm.incremental_current(c), rel=1e-12)
        assert abs(psi[j]) == pytest.approx(nm.operating_quantity(c), rel=1e-12)


# --- operating and restraining quantities ------------------------------------------

def test_solid_fault_at_reach_equals_restraint():
    c = case(m_f=0.8, v_f_pre=0.95 + 0.1j)
    assert nm.operating_quantity(c) == pytest.approx(abs(c.v_f_pre), rel=1e-12)


@pytest.mark.parametrize("m_f, internal", [(0.3, True), (0.7, True), (0.9, False), (1.05, False)])
def test_linear_solid_discrimination(m_f, internal):
    assert nm.solve(case(m_f=m_f)).op_gt_rst is internal


def test_resistive_limit_at_boundary_is_restrained(cfg):
    dz = nm.size_limited_impedance(cfg, 0.7, cfg.base.ohm_to_pu(5.0), 0.0)
    c = nm.case_from_config(cfg, 0.7, cfg.base.ohm_to_pu(5.0), dz_s=dz)
    sol = nm.solve(c)
    assert abs(sol.i_s_total) == pytest.approx(1.2, rel=1e-9)
    assert sol.psi_op <= sol.psi_rst


def test_ideal_operating_quantity_examples():
    c = case(m_f=0.8)
    assert nm.ideal_operating_quantity(c) == pytest.approx(1.0)
    c0 = case(m_f=0.0, v_f_pre=0.9 + 0j)
    assert nm.ideal_operating_quantity(c0) == pytest.approx(0.9 * abs(Z + 0.8 * Z) / abs(Z))


def test_homogeneous_ratio_eleven_sevenths():
    zl = cmath.rect(0.31, math.radians(80))
    zs = 0.3 * zl
    c = nm.IqNetworkCase(z_s=zs, dz_s=0j, z_g=zs, z_l=zl, m_f=0.4, m=0.8, r_f=0.0,
                         v_f_pre=cmath.rect(0.98, -0.2), i_s_pre=0.3 + 0j)
    assert nm.operating_quantity(c) / nm.restraining_quantity(c) == pytest.approx(11 / 7, rel=1e-12)
    assert nm.ideal_operating_quantity(c) == pytest.approx(nm.operating_quantity(c), rel=1e-12)


def test_restraining_quantity_examples(cfg):
    assert nm.restraining_quantity(case(v_f_pre=1 + 0j)) == 1.0
    assert nm.restraining_quantity(case(v_f_pre=0.95 + 0j, k_rst=1.1)) == pytest.approx(1.045)
    pre = nm.pre_fault_solve(cfg, 0.8)
    c = nm.case_from_config(cfg, 0.5, 0.0, m=0.8)
    assert nm.restraining_quantity(c) == pytest.approx(abs(pre.v_s_pre - 0.5 * cfg.z_l * pre.i_s_pre))


def test_tie_is_external():
    sol = nm.IqSolution(0j, 0j, 1.0, 1.0, 0j)
    assert not sol.op_gt_rst


def test_case_validation():
    with pytest.raises(ValueError):
        case(m=1.0)
    with pytest.raises(ValueError):
        case(r_f=-1.0)
    with pytest.raises(ValueError):
        case(k_rst=0.9)
    with pytest.raises(ValueError):
        case(dz_s=-0.1j)
    assert case(dz_s=-0.1j, allow_negative_dx=True).dz_s == -0.1j


# --- pre-fault load flow --------------------------------------------------------

def test_zero_load():
    cfg = SystemConfig(p_pre=None, e_s_angle_deg=0.0)
    pre = nm.pre_fault_solve(cfg, 0.5)
    assert pre.i_s_pre == 0
    assert pre.v_f_pre == pytest.approx(1 + 0j)


def test_power_angle_lossless():
    base = SystemConfig(source_angle_deg=90, grid_angle_deg=90)
    line = base.line.__class__(r1=0.0, l1=base.line.l1, r0=0.0, l0=base.line.l0)
    cfg = base.with_(line=line, p_pre=0.8)
    x_tot = (cfg.z_s + cfg.z_l + cfg.z_g).imag
    assert math.sin(nm.sending_angle(cfg)) == pytest.approx(0.8 * x_tot, rel=1e-10)


def test_prefault_residuals(cfg):
    pre = nm.pre_fault_solve(cfg, 0.6)
    assert abs(pre.e_s - cfg.z_s * pre.i_s_pre - pre.v_s_pre) < 1e-10
    assert abs(pre.v_s_pre - (cfg.z_l + cfg.z_g) * pre.i_s_pre - pre.e_g) < 1e-10
    assert (pre.v_s_pre * pre.i_s_pre.conjugate()).real == pytest.approx(1.0, abs=1e-10)


def test_prefault_unreachable_power():
    with pytest.raises(nm.PreFaultError):
        nm.pre_fault_solve(SystemConfig(p_pre=50.0))


# --- properties -----------------------------------------------------------------------

seeds = st.integers(min_value=0, max_value=2 ** 32 - 1)


@settings(max_examples=200, deadline=None)
@given(seeds)
def test_consistency_identity(seed):
    c = nm.IqNetworkCase(**rand_case_kwargs(np.random.default_rng(seed)))
    di, dv = nm.incremental_current(c), nm.incremental_voltage(c)
    assert nm.operating_quantity(c) == pytest.approx(abs(dv - c.m * c.z_l * di), rel=1e-9)


@settings(max_examples=200, deadline=None)
@given(m_f=st.floats(0.05, 1.1), sir=st.floats(0.05, 3.0),
       ang=st.floats(60, 89), src_ang=st.floats(60, 90))
def test_boundary_theorem(m_f, sir, ang, src_ang):
    if abs(m_f - 0.8) <= 0.02:
        return
    zl = cmath.rect(0.31, math.radians(ang))
    zs = cmath.rect(sir * 0.31, math.radians(src_ang))
    c = nm.IqNetworkCase(z_s=zs, dz_s=0j, z_g=zs, z_l=zl, m_f=m_f, m=0.8, r_f=0.0,
                         v_f_pre=cmath.rect(1.0, -0.1), i_s_pre=0.5 + 0j)
    assert nm.solve(c).op_gt_rst == (m_f < 0.8)


@settings(max_examples=100, deadline=None)
@given(m_f=st.floats(0.05, 1.1), sir=st.floats(0.05, 3.0), ang=st.floats(45, 89))
def test_homogeneous_phase_alignment(m_f, sir, ang):
    zl = cmath.rect(0.31, math.radians(ang))
    zs = sir * zl
    v_f = cmath.rect(0.97, 0.3)
    c = nm.IqNetworkCase(z_s=zs, dz_s=0j, z_g=zs, z_l=zl, m_f=m_f, m=0.8, r_f=0.0,
                         v_f_pre=v_f, i_s_pre=0.2 + 0j)
    d = cmath.phase(nm.operating_phasor(c) / v_f)
    assert min(abs(d), abs(abs(d) - math.pi)) < 1e-9


@settings(max_examples=50, deadline=None)
@given(ang=st.floats(0, math.pi / 2), m_f=st.floats(0.1, 0.8))
def test_limit_monotonicity(ang, m_f):
    cfg = SystemConfig()
    pre = nm.pre_fault_solve(cfg, m_f)
    r_f = cfg.base.ohm_to_pu(5.0)
    mags = np.logspace(0, 6, 40)
    i_tot = [abs(nm.solve(nm.case_from_config(cfg, m_f, r_f, dz_s=cmath.rect(z, ang),
                                              pre=pre)).i_s_total) for z in mags]
    assert np.all(np.diff(i_tot) < 0)
    big = nm.case_from_config(cfg, m_f, r_f, dz_s=cmath.rect(1e9, ang), pre=pre)
    assert abs(nm.incremental_current(big) + pre.i_s_pre) < 1e-6
