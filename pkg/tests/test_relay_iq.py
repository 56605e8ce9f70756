import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from iqgfm import emtsim, netmodel as nm, relay_iq as ri
from iqgfm.config import SystemConfig

FS = 5000.0


def synthetic_sum(d, hold=0.012, mode="consecutive_time", level=0.005):
    """Feed a synthetic (psi_op - psi_rst) trace straight into the trip logic."""
    s = ri.RelaySettings(hold_time=hold, trip_mode=mode, threshold_level=level)
    d = np.atleast_2d(d)
    sums = ri.running_sum(d, np.zeros_like(d), s, FS, 0)
    t = np.arange(d.shape[1]) / FS
    return sums, ri.trip_logic(sums, s, FS, t)


@pytest.fixture(scope="module")
def solid_fault():
    cfg = SystemConfig()
    rec = emtsim.simulate(cfg, emtsim.SourceDynamics(), emtsim.FaultEvent(t_on=0.1, m_f=0.5), 0.3)
    return cfg, rec


# --- incremental quantities ------------------------------------------------------------

def test_periodic_input_has_no_increments():
    t = np.arange(2000) / FS
    x = np.vstack([np.cos(2 * np.pi * 50 * t + k) for k in range(3)])
    assert np.max(np.abs(ri.incremental(x, 200)[:, 200:])) < 1e-12


def test_step_increment_lasts_one_memory_length():
    x = np.zeros(1000)
    x[300:] = 0.7
    dx = ri.incremental(x, 200)
    assert np.all(dx[300:500] == 0.7)
    assert np.all(dx[500:] == 0.0)
    assert np.all(dx[:300] == 0.0)


@settings(max_examples=100, deadline=None)
@given(n=st.integers(300, 3000), delay=st.integers(1, 250), frac=st.floats(0, 1))
def test_frozen_memory_stays_in_pre_window(n, delay, frac):
    boundary = delay + int(frac * (n - delay - 1))
    ref = ri.memory_index(n, delay, boundary)
    after = np.arange(n) >= boundary
    assert np.all(ref[after] < boundary)
    assert np.all(ref[after] >= boundary - delay)
    assert np.all((np.arange(n)[after] - ref[after]) % delay == 0)
    assert np.array_equal(ref[delay:boundary], np.arange(delay, boundary) - delay)


def test_insufficient_history():
    with pytest.raises(ri.InsufficientHistoryError):
        ri.incremental(np.zeros(100), 200)


# --- operating and restraining quantities ----------------------------------------

def test_balanced_fault_loop_symmetry(solid_fault):
    cfg, rec = solid_fault
    d = ri.process(rec, ri.RelaySettings(line=cfg.line))
    last = slice(-100, None)
    op = d.traces["psi_op"][:, last].max(axis=1)
    rst = d.traces["psi_rst"][:, last].max(axis=1)
    assert np.ptp(op) / op.mean() < 0.01
    assert np.ptp(rst) / rst.mean() < 0.01


def test_restraint_scales_with_k(solid_fault):
    cfg, rec = solid_fault
    a = ri.process(rec, ri.RelaySettings(line=cfg.line)).traces["psi_rst"]
    b = ri.process(rec, ri.RelaySettings(line=cfg.line, k_rst=1.2)).traces["psi_rst"]
    assert np.allclose(b, 1.2 * a, rtol=1e-13, atol=0)


def test_flat_prefault_restraint_envelope(solid_fault):
    cfg, rec = solid_fault
    d = ri.process(rec, ri.RelaySettings(line=cfg.line))
    env = d.traces["psi_rst"][0, 300:400].max()
    c = nm.case_from_config(cfg, 0.8, 0.0, m=0.8)
    assert env == pytest.approx(nm.restraining_quantity(c), rel=0.01)


def test_solid_fault_at_reach_balances():
    cfg = SystemConfig()
    rec = emtsim.simulate(cfg, emtsim.SourceDynamics(), emtsim.FaultEvent(t_on=0.1, m_f=0.8), 0.4)
    d = ri.process(rec, ri.RelaySettings(line=cfg.line))
    op = d.traces["psi_op"][0, -100:].max()
    rst = d.traces["psi_rst"][0, -100:].max()
    assert op == pytest.approx(rst, rel=0.02)


# --- running sums and trip logic ---------------------------------------------------

def test_equal_quantities_never_accumulate():
    sums, trip = synthetic_sum(np.zeros(500))
    assert np.all(sums.e == 0) and trip is None


def test_constant_margin_sum():
    c, n = 0.25, 400
    sums, _ = synthetic_sum(np.full(n, c))
    assert sums.e[0, -1] == pytest.approx(c * (n - 1) / FS, rel=1e-12)


def test_ripple_touching_zero_never_trips():
    t = np.arange(2000) / FS
    _, trip = synthetic_sum(np.sin(2 * np.pi * 100 * t))
    assert trip is None


def test_trip_exactly_after_hold():
    d = np.zeros(1000)
    d[100:] = 0.1
    sums, trip = synthetic_sum(d)
    rise = int(sums.since[0, -1])
    assert trip == (rise + 60, 0)


@settings(max_examples=100, deadline=None)
@given(offset=st.floats(-1.0, 1.0).filter(lambda x: abs(x) > 1e-3),
       ratio=st.floats(0.0, 1.0), phase=st.floats(0, 2 * math.pi))
def test_ripple_immunity(offset, ratio, phase):
    t = np.arange(1500) / FS
    d = offset + ratio * abs(offset) * np.sin(2 * np.pi * 100 * t + phase)
    sums, trip = synthetic_sum(d)
    assert (trip is not None) == (offset > 0)
    assert np.all(sums.e >= 0)


def test_slope_scaling_changes_threshold_not_consecutive():
    t = np.arange(1500) / FS
    base = 0.5 + 0.4 * np.sin(2 * np.pi * 100 * t)
    times = {"consecutive_time": [], "threshold": []}
    for k in (0.2, 1.0, 5.0):
        for mode in times:
            _, trip = synthetic_sum(k * base, mode=mode)
            times[mode].append(trip[0] / FS)
    assert np.ptp(times["consecutive_time"]) < 2e-3
    assert max(times["threshold"]) / min(times["threshold"]) > 2


def test_active_flag_resets_after_a_cycle():
    d = np.zeros(1000)
    d[10:20] = 1.0
    d[20:40] = -5.0
    sums, _ = synthetic_sum(d)
    zero_from = int(np.flatnonzero(sums.e[0] > 0).max()) + 1
    assert sums.active[0, zero_from + 98]
    assert not sums.active[0, zero_from + 100]


def test_settings_validation():
    with pytest.raises(ValueError):
        ri.RelaySettings(hold_time=0.009)
    with pytest.raises(ValueError):
        ri.RelaySettings(m=1.0)
    with pytest.raises(ValueError):
        ri.RelaySettings(trip_mode="slope")
    with pytest.raises(ValueError):
        ri.RelaySettings(p=0)
    assert ri.RelaySettings().digest() == ri.RelaySettings().digest()
    assert ri.RelaySettings().digest() != ri.RelaySettings(m=0.7).digest()


# --- end to end ------------------------------------------------------------------------

@pytest.mark.slow
@pytest.mark.parametrize("sir", [0.1, 0.3, 1.0])
def test_steady_discrimination_grid(sir):
    cfg = SystemConfig(sir_s=sir, sir_g=sir)
    for m_f in (0.1, 0.3, 0.5, 0.7, 0.77, 0.83, 0.9, 1.0):
        rec = emtsim.simulate(cfg, emtsim.SourceDynamics(), emtsim.FaultEvent(t_on=0.1, m_f=m_f), 0.3)
        d = ri.process(rec, ri.RelaySettings(line=cfg.line))
        assert d.tripped == (m_f < 0.8), m_f


def test_no_disturbance_no_detection():
    cfg = SystemConfig()
    rec = emtsim.simulate(cfg, emtsim.SourceDynamics(), None, 0.2)
    d = ri.process(rec, ri.RelaySettings(line=cfg.line))
    assert d.detection_time is None and not d.tripped
    assert all(s.e_sum == 0 and not s.active for s in d.loop_states())


def test_decision_json_fields(solid_fault):
    cfg, rec = solid_fault
    d = ri.process(rec, ri.RelaySettings(line=cfg.line))
    doc = d.to_json()
    assert doc["tripped"] and doc["tripping_loop"] in ri.LOOPS
    assert doc["trip_time"] - doc["detection_time"] >= 0.012
    assert doc["detection_time"] >= rec.meta["t_ref"]


def test_sample_rate_mismatch(solid_fault):
    cfg, rec = solid_fault
    with pytest.raises(ValueError):
        ri.process(rec, ri.RelaySettings(fs=10000.0))
