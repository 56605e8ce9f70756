"""``iqgfm`` command-line front end.

Exit codes: 0 success, 1 numerical failure, 2 input validation error.
"""
from __future__ import annotations

import argparse
import cmath
import csv
import hashlib
import json
import math
import platform
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
import yaml
from pydantic import ValidationError

from . import __version__, emtsim, kernels, netmodel, relay_iq, relay_quad, sweep
from .scenario import MatrixSection, Scenario, load_scenario, schema
from .waveform import WaveformFormatError, export_waveform, import_waveform

EXIT_OK, EXIT_NUMERIC, EXIT_INPUT = 0, 1, 2


class InputError(Exception):
    """Invalid user input; reported with exit code 2."""


# --- output helpers -------------------------------------------------------------

def _dump_json(obj, path: Path) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _scenario_hash(scn: Scenario) -> str:
    return hashlib.sha256(scn.model_dump_json().encode()).hexdigest()[:16]


def _phasor(z: complex, si_scale: float, unit: str) -> dict:
    return {
        "re": z.real, "im": z.imag, "mag_pu": abs(z),
        "angle_deg": math.degrees(cmath.phase(z)),
        f"mag_{unit}": abs(z) * si_scale,
    }


def _scales(cfg) -> tuple[float, float]:
    """pu -> kV (rms, line-to-neutral) and pu -> kA (rms)."""
    return cfg.base.kv / math.sqrt(3), cfg.base.mva / (math.sqrt(3) * cfg.base.kv)


def write_manifest(out: Path, command: str, scn: Scenario, files: list[str], extra=None) -> None:
    manifest = {
        "command": command,
        "scenario": scn.name,
        "scenario_hash": _scenario_hash(scn),
        "seed": scn.seed,
        "versions": {
            "iqgfm": __version__, "numpy": np.__version__, "python": platform.python_version(),
        },
        "kernel_backend": kernels.BACKEND,
        "files": {f: _sha256(out / f) for f in sorted(files)},
        "created_utc": datetime.now(timezone.utc).isoformat(timespec="seconds"),
    }
    if extra:
        manifest.update(extra)
    _dump_json(manifest, out / "manifest.json")


def write_iq_traces(d: relay_iq.RelayDecision, out: Path) -> list[str]:
    names = []
    tr = d.traces
    for j, loop in enumerate(relay_iq.LOOPS):
        name = f"trace_{loop}.csv"
        data = np.column_stack([tr["t"], tr["psi_op"][j], tr["psi_rst"][j], tr["e_sum"][j]])
        with open(out / name, "w", newline="\n") as fh:
            fh.write("t,psi_op,psi_rst,e_sum\n")
            np.savetxt(fh, data, fmt="%.17g", delimiter=",", newline="\n")
        names.append(name)
    return names


def write_trajectory(res: relay_quad.ZoneResult, out: Path, step: float) -> str:
    name = "trajectory.csv"
    with open(out / name, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "loop", "r", "x", "inside_z1"])
        for t, loop, r, x, inside in relay_quad.trajectory_rows(res, step):
            w.writerow([repr(t), loop, repr(r), repr(x), str(inside).lower()])
    return name


def decision_document(d: relay_iq.RelayDecision, q: relay_quad.ZoneResult,
                      quad_settings: relay_quad.QuadSettings) -> dict:
    quad = q.to_json()
    quad["settings_hash"] = quad_settings.digest()
    return {"iq": d.to_json(), "quad": quad}


def _relays(rec, scn: Scenario, cfg, out: Path, step: float) -> tuple[dict, list[str]]:
    iq_s = scn.relay_iq.build(cfg)
    quad_s = scn.relay_quad.build(cfg)
    d = relay_iq.process(rec, iq_s)
    q = relay_quad.process(rec, quad_s)
    doc = decision_document(d, q, quad_s)
    _dump_json(doc, out / "decision.json")
    files = ["decision.json", *write_iq_traces(d, out), write_trajectory(q, out, step)]
    return doc, files


# --- commands ------------------------------------------------------------------------

def cmd_analyze(scn: Scenario, out: Path | None = None) -> dict:
    cfg = scn.system.build()
    f, a = scn.fault, scn.analysis
    pre = netmodel.pre_fault_solve(cfg, f.m_f)
    r_f = math.inf if f.r_f_ohm is None else cfg.base.ohm_to_pu(f.r_f_ohm)
    if a.size_to_limit_angle_deg is not None:
        dz = netmodel.size_limited_impedance(cfg, f.m_f, r_f, math.radians(a.size_to_limit_angle_deg),
                                             m=scn.relay_iq.m, pre=pre)
    else:
        dz = complex(a.dr_pu, a.dx_pu)
    de = pre.e_s * cmath.rect(a.de_fraction, math.radians(a.de_angle_deg))
    case = netmodel.case_from_config(cfg, f.m_f, r_f, dz, de, m=scn.relay_iq.m,
                                     k_rst=scn.relay_iq.k_rst, pre=pre)
    sol = netmodel.solve(case)
    kv, ka = _scales(cfg)
    report = {
        "case": {
            "m_f": f.m_f, "m": case.m, "k_rst": case.k_rst,
            "r_f_ohm": f.r_f_ohm, "r_f_pu": None if math.isinf(r_f) else r_f,
            "dz_s_pu": [dz.real, dz.imag], "dz_s_ohm": [cfg.base.pu_to_ohm(dz.real),
                                                         cfg.base.pu_to_ohm(dz.imag)],
            "de_s_pu": [de.real, de.imag],
        },
        "pre_fault": {"v_f_pre": _phasor(case.v_f_pre, kv, "kv"),
                      "i_s_pre": _phasor(case.i_s_pre, ka, "ka")},
        "result": {
            "di_s": _phasor(sol.di_s, ka, "ka"),
            "dv_s": _phasor(sol.dv_s, kv, "kv"),
            "i_s_total": _phasor(sol.i_s_total, ka, "ka"),
            "psi_op_pu": sol.psi_op, "psi_op_kv": sol.psi_op * kv,
            "psi_rst_pu": sol.psi_rst, "psi_rst_kv": sol.psi_rst * kv,
            "label": "op_gt_rst" if sol.op_gt_rst else "op_le_rst",
        },
    }
    if a.oracle_check:
        di_o, dv_o = netmodel.nodal_oracle(case)
        dev = max(abs(di_o - sol.di_s) / max(abs(sol.di_s), 1e-300),
                  abs(dv_o - sol.dv_s) / max(abs(sol.dv_s), 1e-300))
        report["oracle"] = {"max_rel_dev": dev, "ok": dev <= 1e-9}
        if dev > 1e-9:
            raise ArithmeticError(f"closed form deviates from the nodal oracle by {dev:.3g}")
    if out is not None:
        _dump_json(report, out / "analysis.json")
        write_manifest(out, "analyze", scn, ["analysis.json"])
    return report


def cmd_simulate(scn: Scenario, out: Path) -> dict:
    cfg = scn.system.build()
    dyn = scn.source.build(cfg.i_limit)
    fault = scn.fault.build()
    sim = scn.simulation
    rec = emtsim.simulate(cfg, dyn, fault, sim.duration_s, fs=sim.fs_hz, dt=sim.dt_s)
    export_waveform(rec, out / "waveform.csv")
    doc, files = _relays(rec, scn, cfg, out, scn.output.trajectory_step_s)
    write_manifest(out, "simulate", scn, ["waveform.csv", "waveform.meta", *files],
                   {"max_residual": rec.meta["max_residual"]})
    return doc


def cmd_replay(scn: Scenario, waveform: Path, out: Path) -> dict:
    rec = import_waveform(waveform)
    cfg = scn.system.build()
    doc, files = _relays(rec, scn, cfg, out, scn.output.trajectory_step_s)
    write_manifest(out, "replay", scn, files, {"waveform_sha256": _sha256(waveform)})
    return doc


def cmd_sweep(scn: Scenario, out: Path, jobs: int = 1) -> dict:
    cfg = scn.system.build()
    spec = scn.sweep_spec(cfg)
    maps = sweep.run_sweep(spec, jobs=jobs)
    files, summary = [], []
    for k, rm in enumerate(maps):
        stem = f"{k:02d}_mf{rm.m_f:g}_rf{rm.r_f_ohm:g}"
        region, bnd = f"region_{stem}.csv", f"boundary_{stem}.csv"
        sweep.write_region_csv(rm, out / region)
        sweep.write_boundary_csv(rm, out / bnd)
        files += [region, bnd]
        counts = {str(lab): int(n) for lab, n in zip(*np.unique(rm.labels.astype(str), return_counts=True))}
        summary.append({"m_f": rm.m_f, "r_f_ohm": rm.r_f_ohm, "classifier": rm.classifier,
                        "counts": counts, "region_csv": region, "boundary_csv": bnd})
    doc = {"cells": summary}
    _dump_json(doc, out / "sweep_summary.json")
    write_manifest(out, "sweep", scn, files + ["sweep_summary.json"], {"jobs": jobs})
    return doc


def cmd_matrix(scn: Scenario, out: Path, jobs: int = 1) -> dict:
    cfg = scn.system.build()
    mx = scn.matrix or MatrixSection()
    sources = {name: s.build(cfg.i_limit) for name, s in mx.sources.items()}
    rows = sweep.run_fault_matrix(
        cfg, sources, scn.relay_iq.build(cfg), scn.relay_quad.build(cfg),
        m_fs=mx.m_f, r_fs=mx.r_f_ohm, jobs=jobs,
        t_on=mx.t_on_s, post=mx.post_fault_s, fs=scn.simulation.fs_hz)
    sweep.write_matrix_csv(rows, out / "decision_table.csv")
    errors = [{"source": r.source, "m_f": r.m_f, "r_f": r.r_f, "error": r.error}
              for r in rows if r.error]
    _dump_json({"errors": errors}, out / "errors.json")
    write_manifest(out, "matrix", scn, ["decision_table.csv", "errors.json"], {"jobs": jobs})
    return {"cases": len(rows), "errors": len(errors)}


# --- entry point ---------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="iqgfm", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, need_out=True):
        sp.add_argument("--scenario", type=Path, help="YAML or JSON scenario file")
        sp.add_argument("--out", type=Path, required=need_out, help="output directory")
        sp.add_argument("--seed", type=int, default=None, help="override the scenario seed")
        return sp

    common(sub.add_parser("analyze", help="closed-form IQ network evaluation"), need_out=False)
    common(sub.add_parser("simulate", help="EMT run followed by both relay elements"))
    s = common(sub.add_parser("sweep", help="region maps over (dR_s, dX_s)"))
    s.add_argument("--jobs", type=int, default=1)
    r = common(sub.add_parser("replay", help="relay elements on a recorded waveform"))
    r.add_argument("--waveform", type=Path, required=True)
    m = common(sub.add_parser("matrix", help="fault matrix over sources and fault cases"))
    m.add_argument("--jobs", type=int, default=1)
    sub.add_parser("schema", help="print the scenario JSON schema")
    return p


def _format_validation(exc: ValidationError) -> str:
    lines = []
    for err in exc.errors():
        loc = ".".join(str(x) for x in err["loc"]) or "<root>"
        lines.append(f"{loc}: {err['msg']}")
    return "invalid scenario:\n  " + "\n  ".join(lines)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "schema":
        print(json.dumps(schema(), indent=2, sort_keys=True))
        return EXIT_OK
    try:
        scn = load_scenario(args.scenario) if args.scenario else Scenario()
        if args.seed is not None:
            scn = scn.model_copy(update={"seed": args.seed})
        out = args.out
        if out is not None:
            out.mkdir(parents=True, exist_ok=True)
        if args.command == "analyze":
            res = cmd_analyze(scn, out)
            print(json.dumps(res["result"], indent=2, sort_keys=True))
        elif args.command == "simulate":
            print(json.dumps(cmd_simulate(scn, out), indent=2, sort_keys=True))
        elif args.command == "replay":
            print(json.dumps(cmd_replay(scn, args.waveform, out), indent=2, sort_keys=True))
        elif args.command == "sweep":
            res = cmd_sweep(scn, out, args.jobs)
            print(f"{len(res['cells'])} region maps written to {out}")
        elif args.command == "matrix":
            res = cmd_matrix(scn, out, args.jobs)
            print(f"{res['cases']} cases, {res['errors']} errors; table in {out / 'decision_table.csv'}")
    except ValidationError as exc:
        print(_format_validation(exc), file=sys.stderr)
        return EXIT_INPUT
    except WaveformFormatError as exc:
        print(f"invalid waveform: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (yaml.YAMLError, json.JSONDecodeError, FileNotFoundError, InputError) as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (ArithmeticError, emtsim.SimulationError, netmodel.PreFaultError) as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:  # domain invariants raised while building objects
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_INPUT
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
