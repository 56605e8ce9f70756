"""Scenario files (YAML or JSON) and their mapping onto the library objects.

Every physical field carries its unit in the key name; unknown keys are
rejected.  ``Scenario.model_json_schema()`` is the published schema.
"""
from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Literal

import yaml
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from . import emtsim, relay_iq, relay_quad, sweep
from .config import Base, LineParams, SystemConfig


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class LineSpec(_Strict):
    r1_ohm_per_km: float = Field(0.0868, ge=0)
    x1_ohm_per_km: float = Field(0.4924, gt=0)
    r0_ohm_per_km: float = Field(0.26, ge=0)
    x0_ohm_per_km: float = Field(1.48, ge=0)
    length_km: float = Field(100.0, gt=0)


class SystemSpec(_Strict):
    base_kv: float = Field(220.0, gt=0)
    base_mva: float = Field(300.0, gt=0)
    f0_hz: float = Field(50.0, gt=0)
    line: LineSpec = LineSpec()
    sir_s: float = Field(0.3, gt=0)
    sir_g: float = Field(0.3, gt=0)
    source_angle_deg: float = Field(88.0, gt=0, le=90)
    grid_angle_deg: float = Field(88.0, gt=0, le=90)
    e_s_pu: float = Field(1.0, gt=0)
    e_g_pu: float = Field(1.0, gt=0)
    e_s_angle_deg: float = 0.0  # used only when p_pre_pu is null
    p_pre_pu: float | None = 1.0
    i_limit_pu: float = Field(1.2, gt=0)

    def build(self) -> SystemConfig:
        base = Base(kv=self.base_kv, mva=self.base_mva, f0=self.f0_hz)
        ln = self.line
        line = LineParams.from_ohm_per_km(ln.r1_ohm_per_km, ln.x1_ohm_per_km, ln.r0_ohm_per_km,
                                          ln.x0_ohm_per_km, ln.length_km, base)
        return SystemConfig(
            base=base, line=line, sir_s=self.sir_s, sir_g=self.sir_g,
            source_angle_deg=self.source_angle_deg, grid_angle_deg=self.grid_angle_deg,
            e_s_mag=self.e_s_pu, e_g_mag=self.e_g_pu, e_s_angle_deg=self.e_s_angle_deg,
            p_pre=self.p_pre_pu, i_limit=self.i_limit_pu,
        )


class ScheduleStepSpec(_Strict):
    t_s: float = Field(ge=0)
    dr_pu: float = Field(0.0, ge=0)
    dx_pu: float = 0.0
    de_fraction: float = 0.0
    de_angle_deg: float = 0.0
    ramp_s: float = Field(0.0, ge=0)

    def build(self) -> emtsim.ScheduleStep:
        de = self.de_fraction * complex(math.cos(math.radians(self.de_angle_deg)),
                                        math.sin(math.radians(self.de_angle_deg)))
        return emtsim.ScheduleStep(t=self.t_s, dr=self.dr_pu, dx=self.dx_pu, de=de, ramp=self.ramp_s)


class SourceSpec(_Strict):
    mode: Literal["linear", "scheduled", "gfm_saturation", "gfm_virtual_impedance"] = "linear"
    schedule: tuple[ScheduleStepSpec, ...] = ()
    vi_angle_deg: float | None = Field(None, ge=0, le=90)
    limiter_time_constant_s: float | None = Field(None, gt=0)

    @model_validator(mode="after")
    def _schedule_only_when_scheduled(self):
        if self.schedule and self.mode != "scheduled":
            raise ValueError("schedule is only valid with mode 'scheduled'")
        return self

    def build(self, i_limit: float) -> emtsim.SourceDynamics:
        return emtsim.SourceDynamics(
            mode=self.mode, schedule=tuple(s.build() for s in self.schedule), i_limit=i_limit,
            vi_angle_deg=self.vi_angle_deg, limiter_time_constant=self.limiter_time_constant_s)


class RfStepSpec(_Strict):
    t_s: float = Field(ge=0)
    r_f_ohm: float = Field(ge=0)


class FaultSpec(_Strict):
    t_on_s: float = Field(0.1, ge=0)
    m_f: float = Field(0.5, ge=0)
    r_f_ohm: float | None = Field(0.0, ge=0)  # null: open fault branch (analyze only)
    r_f_schedule: tuple[RfStepSpec, ...] = ()
    inception_angle_deg: float = 0.0

    def build(self) -> emtsim.FaultEvent:
        if self.r_f_ohm is None:
            raise ValueError("fault.r_f_ohm: an open fault cannot be simulated")
        return emtsim.FaultEvent(
            t_on=self.t_on_s, m_f=self.m_f, r_f_ohm=self.r_f_ohm,
            r_f_schedule=tuple((s.t_s, s.r_f_ohm) for s in self.r_f_schedule),
            inception_angle_deg=self.inception_angle_deg)


class SimulationSpec(_Strict):
    duration_s: float = Field(0.4, gt=0)
    fs_hz: float = Field(5000.0, gt=0)
    dt_s: float | None = Field(None, gt=0)


class RelayIqSpec(_Strict):
    m: float = Field(0.8, gt=0, lt=1)
    p: int = Field(2, ge=1)
    k_rst: float = Field(1.0, ge=1)
    fs_hz: float | None = Field(None, gt=0)
    lp_cutoff_hz: float | None = Field(450.0, gt=0)
    lp_order: int = Field(3, ge=1)
    trip_mode: Literal["threshold", "consecutive_time"] = "consecutive_time"
    threshold_level_pu_s: float = Field(0.005, gt=0)
    hold_time_s: float = Field(0.012, ge=0.010)
    detect_di_pu: float = Field(0.05, gt=0)
    detect_dv_pu: float = Field(0.02, gt=0)
    detect_time_s: float = Field(1e-3, gt=0)
    decision_window_s: float = Field(0.2, gt=0)
    reset_after_cycles: float = Field(1.0, gt=0)
    ll_phase_base: bool = True

    def build(self, cfg: SystemConfig) -> relay_iq.RelaySettings:
        return relay_iq.RelaySettings(
            m=self.m, p=self.p, k_rst=self.k_rst, fs=self.fs_hz, f0=cfg.base.f0,
            lp_cutoff=self.lp_cutoff_hz, lp_order=self.lp_order, trip_mode=self.trip_mode,
            threshold_level=self.threshold_level_pu_s, hold_time=self.hold_time_s, line=cfg.line,
            detect_di=self.detect_di_pu, detect_dv=self.detect_dv_pu,
            detect_time=self.detect_time_s, decision_window=self.decision_window_s,
            reset_after_cycles=self.reset_after_cycles, ll_phase_base=self.ll_phase_base)


class RelayQuadSpec(_Strict):
    m: float = Field(0.8, gt=0)
    r_reach_ohm: float = Field(20.0, gt=0)
    left_tilt_deg: float = Field(15.0, ge=0, lt=90)
    bottom_tilt_deg: float = Field(15.0, ge=0, lt=90)
    settle_time_s: float = Field(0.020, gt=0)
    min_current_pu: float = Field(0.05, gt=0)
    mimic: bool = True

    def build(self, cfg: SystemConfig) -> relay_quad.QuadSettings:
        return relay_quad.QuadSettings(
            m=self.m, r_reach_ohm=self.r_reach_ohm, left_tilt_deg=self.left_tilt_deg,
            bottom_tilt_deg=self.bottom_tilt_deg, settle_time=self.settle_time_s,
            min_current=self.min_current_pu, mimic=self.mimic, f0=cfg.base.f0,
            line=cfg.line, base=cfg.base)


class AnalysisSpec(_Strict):
    dr_pu: float = 0.0
    dx_pu: float = 0.0
    de_fraction: float = 0.0
    de_angle_deg: float = 0.0
    size_to_limit_angle_deg: float | None = None  # size dZ_s at this angle to reach i_limit
    oracle_check: bool = True


class GridAxis(_Strict):
    min_pu: float = 0.0
    max_pu: float = 3.0
    steps: int = Field(81, ge=2)

    @model_validator(mode="after")
    def _ordered(self):
        if not (math.isfinite(self.min_pu) and math.isfinite(self.max_pu)) or self.max_pu <= self.min_pu:
            raise ValueError("need finite bounds with max_pu > min_pu")
        return self


class CellSpec(_Strict):
    m_f: float = Field(ge=0)
    r_f_ohm: float = Field(ge=0)


class SweepSection(_Strict):
    dr: GridAxis = GridAxis()
    dx: GridAxis = GridAxis()
    cells: tuple[CellSpec, ...] = tuple(CellSpec(m_f=a, r_f_ohm=b) for a, b in sweep.FIG7_CELLS)
    classifier: Literal["iq_dependability", "quad_zone1_internal", "quad_zone1_external"] = \
        "iq_dependability"


class MatrixSection(_Strict):
    sources: dict[str, SourceSpec] = {
        "SG": SourceSpec(mode="linear"),
        "GFM1": SourceSpec(mode="gfm_saturation"),
        "GFM2": SourceSpec(mode="gfm_virtual_impedance"),
    }
    m_f: tuple[float, ...] = sweep.MATRIX_M_F
    r_f_ohm: tuple[float, ...] = sweep.MATRIX_R_F
    t_on_s: float = Field(0.1, ge=0.04)
    post_fault_s: float = Field(0.25, gt=0)

    @field_validator("m_f")
    @classmethod
    def _on_line(cls, v):
        if any(not 0 <= x <= 1 for x in v):
            raise ValueError("matrix fault locations must lie in [0, 1]")
        return v

    @field_validator("r_f_ohm")
    @classmethod
    def _nonneg(cls, v):
        if any(x < 0 for x in v):
            raise ValueError("fault resistances must be non-negative")
        return v


class OutputSpec(_Strict):
    dir: str | None = None
    trajectory_step_s: float = Field(1e-3, gt=0)


class Scenario(_Strict):
    name: str = "scenario"
    system: SystemSpec = SystemSpec()
    source: SourceSpec = SourceSpec()
    fault: FaultSpec = FaultSpec()
    simulation: SimulationSpec = SimulationSpec()
    relay_iq: RelayIqSpec = RelayIqSpec()
    relay_quad: RelayQuadSpec = RelayQuadSpec()
    analysis: AnalysisSpec = AnalysisSpec()
    sweep: SweepSection | None = None
    matrix: MatrixSection | None = None
    output: OutputSpec = OutputSpec()
    seed: int = 0

    def sweep_spec(self, cfg: SystemConfig) -> sweep.SweepSpec:
        s = self.sweep or SweepSection()
        return sweep.SweepSpec(
            dr_range=(s.dr.min_pu, s.dr.max_pu, s.dr.steps),
            dx_range=(s.dx.min_pu, s.dx.max_pu, s.dx.steps),
            cells=tuple((c.m_f, c.r_f_ohm) for c in s.cells), base=cfg,
            classifier=s.classifier, m=self.relay_iq.m, k_rst=self.relay_iq.k_rst,
            quad=self.relay_quad.build(cfg))


def load_scenario(path) -> Scenario:
    """Parse a YAML/JSON scenario; raises pydantic.ValidationError or
    yaml.YAMLError on invalid input."""
    text = Path(path).read_text()
    data = json.loads(text) if str(path).endswith(".json") else yaml.safe_load(text)
    return Scenario.model_validate(data if data is not None else {})


def schema() -> dict:
    return Scenario.model_json_schema()
