"""Region maps over (dR_s, dX_s) and batch fault-matrix runs."""
from __future__ import annotations

import csv
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from skimage.measure import find_contours

from . import emtsim, relay_iq, relay_quad
from .config import SystemConfig
from .netmodel import closed_form_arrays, pre_fault_solve

CLASSIFIERS = ("iq_dependability", "quad_zone1_internal", "quad_zone1_external")
FIG7_CELLS = tuple((m_f, r_f) for m_f in (0.2, 0.45, 0.7) for r_f in (5.0, 10.0, 15.0))
MATRIX_M_F = (0.2, 0.45, 0.5, 0.6, 0.7, 0.75, 0.81, 0.9, 0.99)
MATRIX_R_F = (0.0, 2.0, 5.0, 8.0, 10.0, 15.0)
DEGENERATE = "degenerate"


@dataclass(frozen=True)
class SweepSpec:
    dr_range: tuple = (0.0, 3.0, 81)
    dx_range: tuple = (0.0, 3.0, 81)
    cells: tuple = FIG7_CELLS  # ((m_f, r_f_ohm), ...)
    base: SystemConfig = field(default_factory=SystemConfig)
    classifier: str = "iq_dependability"
    m: float = 0.8
    k_rst: float = 1.0
    quad: relay_quad.QuadSettings | None = None

    def __post_init__(self):
        if self.classifier not in CLASSIFIERS:
            raise ValueError(f"classifier must be one of {CLASSIFIERS}")
        for name, rng in (("dr_range", self.dr_range), ("dx_range", self.dx_range)):
            lo, hi, steps = rng
            if int(steps) != steps or steps < 2:
                raise ValueError(f"{name}: steps must be an integer >= 2")
            if not (math.isfinite(lo) and math.isfinite(hi)) or hi <= lo:
                raise ValueError(f"{name}: need finite bounds with max > min")
        object.__setattr__(self, "cells", tuple((float(a), float(b)) for a, b in self.cells))

    def axes(self):
        return (np.linspace(self.dr_range[0], self.dr_range[1], int(self.dr_range[2])),
                np.linspace(self.dx_range[0], self.dx_range[1], int(self.dx_range[2])))


@dataclass
class RegionMap:
    """Labels and |I_s| on a grid indexed ``[i_dr, i_dx]``."""

    m_f: float
    r_f_ohm: float
    classifier: str
    dr: np.ndarray
    dx: np.ndarray
    labels: np.ndarray
    i_mag: np.ndarray
    boundary: np.ndarray  # (k, 2) points (dr, dx) where |I_s| = i_limit
    psi_op: np.ndarray | None = None
    psi_rst: float | None = None
    z_app: np.ndarray | None = None

    def fraction(self, label: str) -> float:
        return float(np.mean(self.labels == label))

    def rows(self):
        for a, dr in enumerate(self.dr):
            for b, dx in enumerate(self.dx):
                yield float(dr), float(dx), str(self.labels[a, b]), float(self.i_mag[a, b])


def current_boundary(dr: np.ndarray, dx: np.ndarray, i_mag: np.ndarray, level: float) -> np.ndarray:
    """Marching-squares contour of ``i_mag == level`` mapped to (dr, dx)."""
    finite = np.where(np.isfinite(i_mag), i_mag, np.nanmax(i_mag[np.isfinite(i_mag)]))
    pieces = find_contours(finite, level)
    if not pieces:
        return np.zeros((0, 2))
    pts = np.vstack(pieces)
    return np.column_stack([np.interp(pts[:, 0], np.arange(len(dr)), dr),
                            np.interp(pts[:, 1], np.arange(len(dx)), dx)])


def evaluate_cell(spec: SweepSpec, m_f: float, r_f_ohm: float) -> RegionMap:
    cfg = spec.base
    pre = pre_fault_solve(cfg, m_f)
    v_f = pre.v_s_pre - m_f * cfg.z_l * pre.i_s_pre
    dr, dx = spec.axes()
    dz = dr[:, None] + 1j * dx[None, :]
    r_f = cfg.base.ohm_to_pu(r_f_ohm)
    di, dv, psi = closed_form_arrays(cfg.z_s, dz, cfg.z_g, cfg.z_l, m_f, r_f,
                                     v_f, pre.i_s_pre, 0j, spec.m)
    i_tot = pre.i_s_pre + di
    i_mag = np.abs(i_tot)
    psi_op = np.abs(psi)
    psi_rst = spec.k_rst * abs(v_f)
    with np.errstate(divide="ignore", invalid="ignore"):
        z_app = (pre.v_s_pre + dv) / i_tot
    bad = ~(np.isfinite(psi_op) & np.isfinite(i_mag) & np.isfinite(z_app))
    if spec.classifier == "iq_dependability":
        labels = np.where(psi_op > psi_rst, "op_gt_rst", "op_le_rst")
    else:
        poly = (spec.quad or relay_quad.QuadSettings(m=spec.m, line=cfg.line, base=cfg.base)).polygon()
        labels = np.where(poly.contains(z_app), "inside_z1", "outside_z1")
    labels = np.where(bad, DEGENERATE, labels).astype(object)
    return RegionMap(
        m_f=m_f, r_f_ohm=r_f_ohm, classifier=spec.classifier, dr=dr, dx=dx,
        labels=labels, i_mag=i_mag,
        boundary=current_boundary(dr, dx, i_mag, cfg.i_limit),
        psi_op=psi_op, psi_rst=psi_rst, z_app=z_app,
    )


def _cell_job(args):
    return evaluate_cell(*args)


def run_sweep(spec: SweepSpec, jobs: int = 1) -> list[RegionMap]:
    """One RegionMap per cell, in the order of ``spec.cells``."""
    work = [(spec, m_f, r_f) for m_f, r_f in spec.cells]
    if jobs <= 1 or len(work) <= 1:
        return [_cell_job(w) for w in work]
    with ProcessPoolExecutor(max_workers=jobs) as ex:
        return list(ex.map(_cell_job, work))


def write_region_csv(rmap: RegionMap, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["dr", "dx", "label", "i_mag"])
        for dr, dx, label, i in rmap.rows():
            w.writerow([repr(dr), repr(dx), label, repr(i)])


def write_boundary_csv(rmap: RegionMap, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["dr", "dx"])
        for dr, dx in rmap.boundary:
            w.writerow([repr(float(dr)), repr(float(dx))])


# --- fault matrix ---------------------------------------------------------------

DEFAULT_SOURCES = {
    "SG": emtsim.SourceDynamics(mode="linear"),
    "GFM1": emtsim.SourceDynamics(mode="gfm_saturation"),
    "GFM2": emtsim.SourceDynamics(mode="gfm_virtual_impedance"),
}
MATRIX_HEADER = ("source", "m_f", "r_f", "iq_trip", "iq_time", "quad_pickup",
                 "quad_transient_overreach")


@dataclass(frozen=True)
class MatrixRow:
    source: str
    m_f: float
    r_f: float
    iq_trip: bool | None
    iq_time: float | None  # s after fault inception
    quad_pickup: bool | None
    quad_transient_overreach: bool | None
    error: str | None = None


def run_case(cfg: SystemConfig, name: str, dyn: emtsim.SourceDynamics, m_f: float, r_f: float,
             iq: relay_iq.RelaySettings, quad: relay_quad.QuadSettings,
             t_on: float = 0.1, post: float = 0.25, fs: float = 5000.0) -> MatrixRow:
    try:
        rec = emtsim.simulate(cfg, dyn, emtsim.FaultEvent(t_on=t_on, m_f=m_f, r_f_ohm=r_f),
                              t_on + post, fs=fs)
        d = relay_iq.process(rec, iq)
        q = relay_quad.process(rec, quad)
    except Exception as exc:  # recorded per case, the batch continues
        return MatrixRow(name, m_f, r_f, None, None, None, None, f"{type(exc).__name__}: {exc}")
    t_ref = rec.meta["t_ref"]
    return MatrixRow(
        name, m_f, r_f, d.tripped,
        None if d.trip_time is None else round(d.trip_time - t_ref, 9),
        q.pickup, q.transient_overreach,
    )


def _matrix_job(args):
    return run_case(*args)


def run_fault_matrix(cfg: SystemConfig, sources: dict | None = None,
                     iq: relay_iq.RelaySettings | None = None,
                     quad: relay_quad.QuadSettings | None = None,
                     m_fs=MATRIX_M_F, r_fs=MATRIX_R_F, jobs: int = 1, t_on: float = 0.1,
                     post: float = 0.25, fs: float = 5000.0) -> list[MatrixRow]:
    """Every (source, m_f, R_f) combination; rows keep that nesting order."""
    sources = DEFAULT_SOURCES if sources is None else sources
    iq = iq or relay_iq.RelaySettings(line=cfg.line)
    quad = quad or relay_quad.QuadSettings(line=cfg.line, base=cfg.base)
    work = [(cfg, name, dyn, float(m_f), float(r_f), iq, quad, t_on, post, fs)
            for name, dyn in sources.items() for m_f in m_fs for r_f in r_fs]
    if jobs <= 1:
        return [_matrix_job(w) for w in work]
    with ProcessPoolExecutor(max_workers=jobs) as ex:
        return list(ex.map(_matrix_job, work, chunksize=4))


def write_matrix_csv(rows: list[MatrixRow], path) -> None:
    def fmt(x):
        if x is None:
            return ""
        if isinstance(x, bool):
            return str(x).lower()
        return repr(x)

    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(MATRIX_HEADER)
        for r in rows:
            w.writerow([r.source, fmt(r.m_f), fmt(r.r_f), fmt(r.iq_trip), fmt(r.iq_time),
                        fmt(r.quad_pickup), fmt(r.quad_transient_overreach)])
