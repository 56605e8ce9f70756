"""Pure-Python reference kernels.

Same signatures and results as the compiled ``_kernels`` module; used when
the extension is not built or ``IQGFM_PURE_PYTHON=1`` is set.
"""
import cmath
import math

import numpy as np

# sums at or below this (pu*s) count as zero, so roundoff cannot extend a positive run
ZERO_FLOOR = 1e-14


def emt_run(h, es, eg, rs, ls, rl, ll, rg, lg, m_f, rf, fault_on, dr, dl,
            lim_mode, lim_angle, tau, i_limit, omega, i1_0, i2_0):
    """Trapezoidal integration of the modal two-mesh circuits.

    Mode 0 is the complex alpha-beta space vector (positive-sequence
    impedances), mode 1 the zero sequence.  ``es``/``eg`` are complex
    (2, N) source arrays.  The behavioural limiter adds a quasi-static
    drop ``z * exp(j*lim_angle) * i`` to mode 0 only.  Returns
    (i1, vs, z, max_residual): sending-end current, relay-bus voltage,
    limiter impedance magnitude and the largest linear-solve residual.
    """
    n_steps = es.shape[1]
    i1 = np.zeros((2, n_steps), dtype=complex)
    vs = np.zeros((2, n_steps), dtype=complex)
    z = np.zeros(n_steps)
    c = 0.5 * h
    rot = cmath.exp(1j * lim_angle)
    max_res = 0.0
    x1 = [complex(v) for v in i1_0]
    x2 = [complex(v) for v in i2_0]

    def branch(k, n, zz):
        rsrc = rs[k] + dr[n] + (zz * rot if k == 0 else 0.0)
        lsrc = ls[k] + dl[n]
        return (rsrc, lsrc, rsrc + m_f * rl[k], lsrc + m_f * ll[k],
                (1.0 - m_f) * rl[k] + rg[k], (1.0 - m_f) * ll[k] + lg[k])

    def deriv(k, n, zz, a1, a2):
        rsrc, lsrc, ra, la, rb, lb = branch(k, n, zz)
        e1 = es[k, n]
        e2 = eg[k, n]
        if fault_on[n]:
            vf = rf[n] * (a1 - a2)
            return (e1 - ra * a1 - vf) / la, (vf - rb * a2 - e2) / lb
        f = (e1 - e2 - (ra + rb) * a1) / (la + lb)
        return f, f

    for k in range(2):
        rsrc, lsrc, *_ = branch(k, 0, 0.0)
        f1, _ = deriv(k, 0, 0.0, x1[k], x2[k])
        i1[k, 0] = x1[k]
        vs[k, 0] = es[k, 0] - rsrc * x1[k] - lsrc * f1

    zz = 0.0
    for n in range(n_steps - 1):
        z_next = 0.0
        if lim_mode:
            zsrc = abs(rs[0] + dr[n] + zz * rot + 1j * omega * (ls[0] + dl[n]))
            z_next = zz + h / tau * (abs(x1[0]) / i_limit - 1.0) * zsrc
            if z_next < 0.0:
                z_next = 0.0
        m = n + 1
        for k in range(2):
            f1n, f2n = deriv(k, n, zz, x1[k], x2[k])
            rsrc, lsrc, ra, la, rb, lb = branch(k, m, z_next)
            e1 = es[k, m]
            e2 = eg[k, m]
            if fault_on[m]:
                r = rf[m]
                a11 = 1.0 + c * (ra + r) / la
                a12 = -c * r / la
                a21 = -c * r / lb
                a22 = 1.0 + c * (rb + r) / lb
                b1 = x1[k] + c * f1n + c * e1 / la
                b2 = x2[k] + c * f2n - c * e2 / lb
                det = a11 * a22 - a12 * a21
                y1 = (b1 * a22 - a12 * b2) / det
                y2 = (a11 * b2 - a21 * b1) / det
                res = max(abs(a11 * y1 + a12 * y2 - b1), abs(a21 * y1 + a22 * y2 - b2))
                vf = r * (y1 - y2)
                f1 = (e1 - ra * y1 - vf) / la
            else:
                lt = la + lb
                a = 1.0 + c * (ra + rb) / lt
                b = x1[k] + c * f1n + c * (e1 - e2) / lt
                y1 = b / a
                y2 = y1
                res = abs(a * y1 - b)
                f1 = (e1 - e2 - (ra + rb) * y1) / lt
            if res > max_res:
                max_res = res
            x1[k] = y1
            x2[k] = y2
            i1[k, m] = y1
            vs[k, m] = e1 - rsrc * y1 - lsrc * f1
        zz = z_next
        z[m] = zz
    return i1, vs, z, max_res


def running_sum(d, ts, start, stop):
    """Clamped trapezoidal running sums of ``d`` (loops x samples).

    Accumulation begins at sample ``start`` (sum = 0 there) and ends
    before ``stop``.  Returns (e, since) where ``since[l, n]`` is the
    sample index at which the current strictly-positive run of loop ``l``
    began, or -1 while the sum sits at zero (at or below ``ZERO_FLOOR``).
    """
    n_loops, n = d.shape
    e = np.zeros((n_loops, n))
    since = np.full((n_loops, n), -1, dtype=np.int64)
    for l in range(n_loops):
        acc = 0.0
        s = -1
        row = d[l]
        for k in range(start + 1, min(stop, n)):
            acc += 0.5 * ts * (row[k] + row[k - 1])
            if acc <= ZERO_FLOOR:
                acc = 0.0
                s = -1
            elif s < 0:
                s = k
            e[l, k] = acc
            since[l, k] = s
    return e, since
