# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled twins of the kernels in ``_pykernels``."""
import numpy as np
cimport numpy as cnp
from libc.math cimport cos, sin, fabs

cnp.import_array()

cdef extern from "complex.h" nogil:
    double cabs(double complex)


def emt_run(double h, double complex[:, ::1] es, double complex[:, ::1] eg,
            double[::1] rs, double[::1] ls, double[::1] rl, double[::1] ll,
            double[::1] rg, double[::1] lg, double m_f,
            double[::1] rf, unsigned char[::1] fault_on,
            double[::1] dr, double[::1] dl,
            int lim_mode, double lim_angle, double tau,
            double i_limit, double omega, i1_0, i2_0):
    cdef Py_ssize_t n_steps = es.shape[1]
    i1_arr = np.zeros((2, n_steps), dtype=complex)
    vs_arr = np.zeros((2, n_steps), dtype=complex)
    z_arr = np.zeros(n_steps)
    cdef double complex[:, ::1] i1 = i1_arr
    cdef double complex[:, ::1] vs = vs_arr
    cdef double[::1] z = z_arr
    cdef double c = 0.5 * h
    cdef double complex rot = cos(lim_angle) + 1j * sin(lim_angle)
    cdef double max_res = 0.0, res, r2, zz = 0.0, z_next
    cdef double complex x1[2]
    cdef double complex x2[2]
    cdef Py_ssize_t k, n, m
    cdef double complex rsrc, ra, rb, e1, e2, vf, f1, f1n, f2n
    cdef double complex a11, a12, a21, a22, b1, b2, det, y1, y2, a, b
    cdef double lsrc, la, lb, lt, r
    for k in range(2):
        x1[k] = i1_0[k]
        x2[k] = i2_0[k]

    for k in range(2):
        rsrc = rs[k] + dr[0]
        lsrc = ls[k] + dl[0]
        ra = rsrc + m_f * rl[k]
        la = lsrc + m_f * ll[k]
        rb = (1.0 - m_f) * rl[k] + rg[k]
        lb = (1.0 - m_f) * ll[k] + lg[k]
        if fault_on[0]:
            vf = rf[0] * (x1[k] - x2[k])
            f1 = (es[k, 0] - ra * x1[k] - vf) / la
        else:
            f1 = (es[k, 0] - eg[k, 0] - (ra + rb) * x1[k]) / (la + lb)
        i1[k, 0] = x1[k]
        vs[k, 0] = es[k, 0] - rsrc * x1[k] - lsrc * f1

    for n in range(n_steps - 1):
        z_next = 0.0
        if lim_mode:
            z_next = zz + h / tau * (cabs(x1[0]) / i_limit - 1.0) * cabs(
                rs[0] + dr[n] + zz * rot + 1j * omega * (ls[0] + dl[n]))
            if z_next < 0.0:
                z_next = 0.0
        m = n + 1
        for k in range(2):
            rsrc = rs[k] + dr[n]
            if k == 0:
                rsrc = rsrc + zz * rot
            lsrc = ls[k] + dl[n]
            ra = rsrc + m_f * rl[k]
            la = lsrc + m_f * ll[k]
            rb = (1.0 - m_f) * rl[k] + rg[k]
            lb = (1.0 - m_f) * ll[k] + lg[k]
            e1 = es[k, n]
            e2 = eg[k, n]
            if fault_on[n]:
                vf = rf[n] * (x1[k] - x2[k])
                f1n = (e1 - ra * x1[k] - vf) / la
                f2n = (vf - rb * x2[k] - e2) / lb
            else:
                f1n = (e1 - e2 - (ra + rb) * x1[k]) / (la + lb)
                f2n = f1n

            rsrc = rs[k] + dr[m]
            if k == 0:
                rsrc = rsrc + z_next * rot
            lsrc = ls[k] + dl[m]
            ra = rsrc + m_f * rl[k]
            la = lsrc + m_f * ll[k]
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
                res = cabs(a11 * y1 + a12 * y2 - b1)
                r2 = cabs(a21 * y1 + a22 * y2 - b2)
                if r2 > res:
                    res = r2
                vf = r * (y1 - y2)
                f1 = (e1 - ra * y1 - vf) / la
            else:
                lt = la + lb
                a = 1.0 + c * (ra + rb) / lt
                b = x1[k] + c * f1n + c * (e1 - e2) / lt
                y1 = b / a
                y2 = y1
                res = cabs(a * y1 - b)
                f1 = (e1 - e2 - (ra + rb) * y1) / lt
            if res > max_res:
                max_res = res
            x1[k] = y1
            x2[k] = y2
            i1[k, m] = y1
            vs[k, m] = e1 - rsrc * y1 - lsrc * f1
        zz = z_next
        z[m] = zz
    return i1_arr, vs_arr, z_arr, max_res


cdef double ZERO_FLOOR = 1e-14  # must match _pykernels.ZERO_FLOOR


def running_sum(double[:, :] d, double ts, Py_ssize_t start, Py_ssize_t stop):
    cdef Py_ssize_t n_loops = d.shape[0], n = d.shape[1]
    e_arr = np.zeros((n_loops, n))
    since_arr = np.full((n_loops, n), -1, dtype=np.int64)
    cdef double[:, ::1] e = e_arr
    cdef cnp.int64_t[:, ::1] since = since_arr
    cdef Py_ssize_t l, k, end = stop if stop < n else n
    cdef double acc
    cdef cnp.int64_t s
    for l in range(n_loops):
        acc = 0.0
        s = -1
        for k in range(start + 1, end):
            acc += 0.5 * ts * (d[l, k] + d[l, k - 1])
            if acc <= ZERO_FLOOR:
                acc = 0.0
                s = -1
            elif s < 0:
                s = k
            e[l, k] = acc
            since[l, k] = s
    return e_arr, since_arr
