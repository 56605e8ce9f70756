import cmath
import math

import numpy as np
import pytest

from iqgfm import emtsim, netmodel as nm
from iqgfm.config import SystemConfig
from iqgfm.relay_iq import incremental
from iqgfm.relay_quad import phasor_estimate


def last_phasor(x, rec, at=-1):
    """One-cycle DFT phasor of a single channel ending at sample ``at``."""
    return phasor_estimate(x[None, :], rec.fs, rec.meta["f0"], rec.t)[0, at]


def iq_phasors(rec, at=-1, pre_at=None):
    """(dV, dI) phase-A phasors: post window minus a pre-fault window."""
    n = int(round(rec.fs / rec.meta["f0"]))
    if pre_at is None:
        pre_at = int(round(rec.meta["t_ref"] * rec.fs)) - 1
    pre_at -= (pre_at - (at % len(rec))) % n  # keep an integer number of cycles apart
    dv = last_phasor(rec.v[0], rec, at) - last_phasor(rec.v[0], rec, pre_at)
    di = last_phasor(rec.i[0], rec, at) - last_phasor(rec.i[0], rec, pre_at)
    return dv, di


def test_no_fault_steady_state(cfg):
    rec = emtsim.simulate(cfg, emtsim.SourceDynamics(), None, 0.2)
    assert np.max(np.abs(incremental(rec.v, 200))) < 1e-6
    assert np.max(np.abs(incremental(rec.i, 200))) < 1e-6


@pytest.mark.parametrize("mode", emtsim.MODES)
def test_nodal_residual(cfg, mode):
    dyn = emtsim.SourceDynamics(
        mode=mode, schedule=(emtsim.ScheduleStep(t=0.05, dr=0.1, dx=0.3, de=0.5),)
        if mode == "scheduled" else ())
    rec = emtsim.simulate(cfg, dyn, emtsim.FaultEvent(t_on=0.05, m_f=0.3), 0.15)
    assert rec.meta["max_residual"] <= 1e-8


def test_small_fault_current_leaves_limiter_idle(cfg):
    rec = emtsim.simulate(cfg, emtsim.SourceDynamics(mode="gfm_virtual_impedance"),
                          emtsim.FaultEvent(t_on=0.05, m_f=0.95, r_f_ohm=2000.0), 0.2)
    assert np.all(rec.extras["z_limiter"] == 0)


@pytest.mark.parametrize("mode", ["gfm_saturation", "gfm_virtual_impedance"])
def test_bolted_close_in_fault_is_limited(cfg, mode):
    rec = emtsim.simulate(cfg, emtsim.SourceDynamics(mode=mode),
                          emtsim.FaultEvent(t_on=0.1, m_f=0.05), 0.5)
    for ph in range(3):
        mag = abs(last_phasor(rec.i[ph], rec))
        assert mag == pytest.approx(cfg.i_limit, rel=0.01)


@pytest.mark.parametrize("mode, m_f, r_f", [
    ("gfm_saturation", 0.5, 10.0), ("gfm_saturation", 0.2, 0.0),
    ("gfm_virtual_impedance", 0.7, 5.0), ("gfm_virtual_impedance", 0.45, 2.0),
])
def test_quasi_static_cross_check(cfg, mode, m_f, r_f):
    dyn = emtsim.SourceDynamics(mode=mode)
    rec = emtsim.simulate(cfg, dyn, emtsim.FaultEvent(t_on=0.1, m_f=m_f, r_f_ohm=r_f), 0.6)
    dz = emtsim.equivalent_impedance(rec.extras["z_limiter"][-1], dyn, cfg)
    case = nm.case_from_config(cfg, m_f, cfg.base.ohm_to_pu(r_f), dz_s=dz)
    dv, di = iq_phasors(rec)
    sim_psi = abs(dv - 0.8 * cfg.z_l * di)
    assert sim_psi == pytest.approx(nm.operating_quantity(case), rel=0.02)


def validation_run(cfg):
    pre = nm.pre_fault_solve(cfg, 0.2)
    step = emtsim.ScheduleStep(t=0.1, dr=4 * cfg.z_s.real, dx=4 * cfg.z_s.imag, de=0.67)
    fault = emtsim.FaultEvent(t_on=0.1, m_f=0.2, r_f_ohm=10.0, r_f_schedule=((0.3, 5.0),))
    rec = emtsim.simulate(cfg, emtsim.SourceDynamics(mode="scheduled", schedule=(step,)), fault, 0.5)
    cases = [nm.case_from_config(cfg, 0.2, cfg.base.ohm_to_pu(r), dz_s=4 * cfg.z_s,
                                 de_s=0.67 * pre.e_s, pre=pre) for r in (10.0, 5.0)]
    return rec, cases


def test_scheduled_steady_state_matches_closed_form(cfg):
    rec, cases = validation_run(cfg)
    for at, case in ((int(0.29 * rec.fs), cases[0]), (len(rec) - 1, cases[1])):
        sol = nm.solve(case)
        dv, di = iq_phasors(rec, at)
        ref_v = last_phasor(emtsim.phasor_waveform(sol.dv_s, rec), rec, at)
        ref_i = last_phasor(emtsim.phasor_waveform(sol.di_s, rec), rec, at)
        for got, ref in ((dv, ref_v), (di, ref_i)):
            assert abs(got) == pytest.approx(abs(ref), rel=0.02)
            assert abs(math.degrees(cmath.phase(got / ref))) < 2.0


def test_fault_resistance_step_resettles(cfg):
    rec, cases = validation_run(cfg)
    n = int(0.29 * rec.fs)
    dv1, di1 = iq_phasors(rec, n)
    dv2, di2 = iq_phasors(rec)
    psi1, psi2 = (abs(dv - 0.8 * cfg.z_l * di) for dv, di in ((dv1, di1), (dv2, di2)))
    assert psi1 == pytest.approx(nm.operating_quantity(cases[0]), rel=0.02)
    assert psi2 == pytest.approx(nm.operating_quantity(cases[1]), rel=0.02)
    assert abs(psi2 - psi1) > 0.02 * psi1


def test_limiter_step_law():
    dyn = emtsim.SourceDynamics(mode="gfm_saturation", limiter_time_constant=1e-3)
    assert emtsim.gfm_limiter_step(0.0, 1.0, 0.1, dyn, 1e-5) == 0.0
    z = emtsim.gfm_limiter_step(0.2, 2.4, 0.1, dyn, 1e-5)
    assert z == pytest.approx(0.2 + 1e-2 * 1.0 * 0.1)


def test_validation_errors(cfg):
    with pytest.raises(ValueError):
        emtsim.SourceDynamics(mode="droop")
    with pytest.raises(ValueError):
        emtsim.SourceDynamics(mode="linear", schedule=(emtsim.ScheduleStep(t=0.1),))
    with pytest.raises(ValueError):
        emtsim.FaultEvent(t_on=0.1, m_f=1.2)
    with pytest.raises(ValueError):
        emtsim.simulate(cfg, emtsim.SourceDynamics(), None, 0.1, dt=1e-4)


def test_fault_point_voltage_crosses_zero_at_inception(cfg):
    rec = emtsim.simulate(cfg, emtsim.SourceDynamics(), emtsim.FaultEvent(t_on=0.1, m_f=0.5), 0.2)
    t_ref = rec.meta["t_ref"]
    pre = rec.extras["pre"]
    v_a = emtsim.phasor_waveform(pre.v_f_pre, rec)
    k = int(round(t_ref * rec.fs))
    assert abs(v_a[k]) < 1e-9
    assert v_a[k + 1] > v_a[k - 1]
