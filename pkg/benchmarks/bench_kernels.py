"""Compare the compiled and pure-Python kernels on identical inputs.

    python3 benchmarks/bench_kernels.py [--repeat N]

Both backends run the same EMT case and running-sum workload; outputs are
checked for agreement before timings are reported.
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from iqgfm import _pykernels, emtsim, kernels
from iqgfm.config import SystemConfig

try:
    from iqgfm import _kernels
except ImportError:
    _kernels = None


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def emt_case(backend, cfg, duration):
    saved = kernels.emt_run
    kernels.emt_run = backend.emt_run
    try:
        return emtsim.simulate(
            cfg, emtsim.SourceDynamics(mode="gfm_virtual_impedance"),
            emtsim.FaultEvent(t_on=0.1, m_f=0.7, r_f_ohm=5.0), duration)
    finally:
        kernels.emt_run = saved


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--duration", type=float, default=0.3, help="EMT run length (s)")
    args = ap.parse_args(argv)
    if _kernels is None:
        print("compiled kernels not built; nothing to compare")
        return 1

    cfg = SystemConfig()
    rng = np.random.default_rng(0)
    d = np.ascontiguousarray(rng.normal(0.01, 0.2, size=(6, 20000)))

    rows = []
    for name, fn in (
        ("emt_run", lambda b: (lambda: emt_case(b, cfg, args.duration))),
        ("running_sum", lambda b: (lambda: b.running_sum(d, 2e-4, 100, d.shape[1]))),
    ):
        t_py, out_py = best_of(fn(_pykernels), args.repeat)
        t_cy, out_cy = best_of(fn(_kernels), args.repeat)
        if name == "emt_run":
            same = np.allclose(out_py.v, out_cy.v, rtol=0, atol=1e-10) and \
                np.allclose(out_py.i, out_cy.i, rtol=0, atol=1e-10)
        else:
            same = all(np.array_equal(a, b) for a, b in zip(out_py, out_cy))
        rows.append((name, t_py, t_cy, same))

    print(f"{'kernel':<12} {'python s':>10} {'cython s':>10} {'speedup':>8}  agree")
    for name, t_py, t_cy, same in rows:
        print(f"{name:<12} {t_py:10.4f} {t_cy:10.4f} {t_py / t_cy:8.1f}  {same}")
    return 0 if all(r[3] for r in rows) else 1


if __name__ == "__main__":
    raise SystemExit(main())
