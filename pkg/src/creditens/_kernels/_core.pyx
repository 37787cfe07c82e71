# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels; interface and conventions identical to _fallback."""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, fabs, log, sqrt
from scipy.special.cython_special cimport log_ndtr as c_log_ndtr
from scipy.special.cython_special cimport ndtr as c_ndtr

cnp.import_array()

cdef double INV_SQRT_2PI = 0.3989422804014326779


cdef inline void _moments_one(double z, double u, double b0, double gam,
                              double s, double* m1, double* m2,
                              double* dm1) noexcept nogil:
    cdef double sqz = sqrt(z)
    cdef double d1 = (b0 / sqz + gam * u) / s
    cdef double szs = sqz * s
    cdef double e1 = -b0 - sqz * (gam * u)
    cdef double zs2h = 0.5 * z * (s * s)
    cdef double t1 = exp(e1 + zs2h + c_log_ndtr(d1 - szs))
    cdef double t2 = exp(2.0 * e1 + 4.0 * zs2h + c_log_ndtr(d1 - 2.0 * szs))
    cdef double phi1 = c_ndtr(d1)
    cdef double v1 = phi1 - t1
    cdef double v2 = phi1 - 2.0 * t1 + t2
    if v1 < 0.0:
        v1 = 0.0
    elif v1 > 1.0:
        v1 = 1.0
    if v2 < 0.0:
        v2 = 0.0
    elif v2 > 1.0:
        v2 = 1.0
    m1[0] = v1
    m2[0] = v2
    dm1[0] = gam * sqz * t1


cdef inline double _m1_one(double z, double u, double b0, double gam,
                           double s) noexcept nogil:
    cdef double sqz = sqrt(z)
    cdef double d1 = (b0 / sqz + gam * u) / s
    cdef double t1 = exp(-b0 - sqz * (gam * u) + 0.5 * z * (s * s)
                         + c_log_ndtr(d1 - sqz * s))
    cdef double v = c_ndtr(d1) - t1
    if v < 0.0:
        return 0.0
    if v > 1.0:
        return 1.0
    return v


def conditional_moments(z, u, double b0, double gam, double s):
    zb, ub = np.broadcast_arrays(np.asarray(z, dtype=np.float64),
                                 np.asarray(u, dtype=np.float64))
    shape = zb.shape
    cdef double[::1] zf = np.ascontiguousarray(zb, dtype=np.float64).ravel()
    cdef double[::1] uf = np.ascontiguousarray(ub, dtype=np.float64).ravel()
    cdef Py_ssize_t n = zf.shape[0]
    m1 = np.empty(n, dtype=np.float64)
    m2 = np.empty(n, dtype=np.float64)
    dm1 = np.empty(n, dtype=np.float64)
    cdef double[::1] m1v = m1, m2v = m2, dm1v = dm1
    cdef Py_ssize_t i
    with nogil:
        for i in range(n):
            _moments_one(zf[i], uf[i], b0, gam, s, &m1v[i], &m2v[i], &dm1v[i])
    return m1.reshape(shape), m2.reshape(shape), dm1.reshape(shape)


def cond_m1(z, u, double b0, double gam, double s):
    zb, ub = np.broadcast_arrays(np.asarray(z, dtype=np.float64),
                                 np.asarray(u, dtype=np.float64))
    shape = zb.shape
    cdef double[::1] zf = np.ascontiguousarray(zb, dtype=np.float64).ravel()
    cdef double[::1] uf = np.ascontiguousarray(ub, dtype=np.float64).ravel()
    cdef Py_ssize_t n = zf.shape[0]
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] ov = out
    cdef Py_ssize_t i
    with nogil:
        for i in range(n):
            ov[i] = _m1_one(zf[i], uf[i], b0, gam, s)
    return out.reshape(shape)


cdef inline double _root_u(double z, double target, double b0, double gam,
                           double s, double lo, double hi) noexcept nogil:
    # safeguarded secant/bisection; m1 is increasing in u
    cdef double a = lo, b = hi
    cdef double fa = _m1_one(z, a, b0, gam, s) - target
    cdef double fb = _m1_one(z, b, b0, gam, s) - target
    cdef double m, fm
    cdef int it
    if fa >= 0.0:
        return a
    for it in range(200):
        if b - a < 1e-13:
            break
        if fb != fa:
            m = b - fb * (b - a) / (fb - fa)
        else:
            m = 0.5 * (a + b)
        # keep the step inside and make progress even for flat secants
        if m <= a or m >= b:
            m = 0.5 * (a + b)
        fm = _m1_one(z, m, b0, gam, s) - target
        if fm == 0.0:
            return m
        if fm < 0.0:
            a, fa = m, fm
        else:
            b, fb = m, fm
        # bisect alternately to force interval shrinkage
        if it % 2 == 1:
            m = 0.5 * (a + b)
            fm = _m1_one(z, m, b0, gam, s) - target
            if fm < 0.0:
                a, fa = m, fm
            else:
                b, fb = m, fm
    return 0.5 * (a + b)


def find_u0_grid(z, L, double b0, double gam, double s, double u_lo,
                 double u_hi, int n_iter=60):
    cdef double[::1] zv = np.ascontiguousarray(z, dtype=np.float64)
    cdef double[::1] lv = np.ascontiguousarray(L, dtype=np.float64)
    cdef Py_ssize_t nz = zv.shape[0], nl = lv.shape[0]
    u0 = np.empty((nz, nl), dtype=np.float64)
    ok = np.empty((nz, nl), dtype=np.uint8)
    cdef double[:, ::1] uv = u0
    cdef cnp.uint8_t[:, ::1] okv = ok
    cdef Py_ssize_t i, j
    cdef double m1_hi
    with nogil:
        for i in range(nz):
            m1_hi = _m1_one(zv[i], u_hi, b0, gam, s)
            for j in range(nl):
                if m1_hi >= lv[j]:
                    okv[i, j] = 1
                    uv[i, j] = _root_u(zv[i], lv[j], b0, gam, s, u_lo, u_hi)
                else:
                    okv[i, j] = 0
                    uv[i, j] = 0.0
    out_u = np.where(ok.astype(bool), u0, np.nan)
    return out_u, ok.astype(bool)


def mc_losses(z, xi0, xi, sig, ito, v0_over_f, weights, double c,
              double n_eff):
    cdef double[::1] zv = np.ascontiguousarray(z, dtype=np.float64)
    cdef double[::1] x0 = np.ascontiguousarray(xi0, dtype=np.float64)
    cdef double[:, ::1] xv = np.ascontiguousarray(xi, dtype=np.float64)
    cdef double[::1] sg = np.ascontiguousarray(sig, dtype=np.float64)
    cdef double[::1] it_ = np.ascontiguousarray(ito, dtype=np.float64)
    cdef double[::1] vf = np.ascontiguousarray(v0_over_f, dtype=np.float64)
    cdef double[::1] wt = np.ascontiguousarray(weights, dtype=np.float64)
    cdef Py_ssize_t n = zv.shape[0], k = sg.shape[0]
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] ov = out
    cdef double sqc = sqrt(c), sq1c = sqrt(1.0 - c)
    cdef Py_ssize_t i, j
    cdef double scale, common, acc, lk
    with nogil:
        for i in range(n):
            scale = sqrt(zv[i] / n_eff)
            common = sqc * x0[i]
            acc = 0.0
            for j in range(k):
                lk = 1.0 - vf[j] * exp(sg[j] * scale * (common + sq1c * xv[i, j])
                                       + it_[j])
                if lk > 0.0:
                    acc += wt[j] * lk
            ov[i] = acc
    return out


def mixture_pdf(x, w, mu, sd):
    x_arr = np.ascontiguousarray(np.atleast_1d(np.asarray(x, dtype=np.float64)))
    cdef double[::1] xv = x_arr
    cdef double[::1] wv = np.ascontiguousarray(w, dtype=np.float64)
    cdef double[::1] mv = np.ascontiguousarray(mu, dtype=np.float64)
    cdef double[::1] sv = np.ascontiguousarray(sd, dtype=np.float64)
    cdef Py_ssize_t nx = xv.shape[0], nk = wv.shape[0]
    out = np.zeros(nx, dtype=np.float64)
    cdef double[::1] ov = out
    cdef Py_ssize_t i, j
    cdef double t, acc, comp, y, tmp
    with nogil:
        for i in range(nx):
            acc = 0.0
            comp = 0.0
            for j in range(nk):
                t = (xv[i] - mv[j]) / sv[j]
                if t > 39.0 or t < -39.0:
                    continue
                y = (wv[j] / sv[j]) * exp(-0.5 * t * t) - comp
                tmp = acc + y
                comp = (tmp - acc) - y
                acc = tmp
            ov[i] = INV_SQRT_2PI * acc
    shape = np.shape(x)
    return out.reshape(shape)


cdef _mixture_sum(double[::1] xv, double[::1] wv, double[::1] mv,
                  double[::1] sv, bint survival):
    cdef Py_ssize_t nx = xv.shape[0], nk = wv.shape[0]
    out = np.zeros(nx, dtype=np.float64)
    cdef double[::1] ov = out
    cdef Py_ssize_t i, j
    cdef double t, acc, comp, y, tmp
    with nogil:
        for i in range(nx):
            acc = 0.0
            comp = 0.0
            for j in range(nk):
                t = (xv[i] - mv[j]) / sv[j]
                if survival:
                    t = -t
                if t > 39.0:
                    y = wv[j] - comp
                elif t < -39.0:
                    continue
                else:
                    y = wv[j] * c_ndtr(t) - comp
                tmp = acc + y
                comp = (tmp - acc) - y
                acc = tmp
            ov[i] = acc
    return out


def mixture_cdf(x, w, mu, sd):
    x_arr = np.ascontiguousarray(np.atleast_1d(np.asarray(x, dtype=np.float64)))
    out = _mixture_sum(x_arr, np.ascontiguousarray(w, dtype=np.float64),
                       np.ascontiguousarray(mu, dtype=np.float64),
                       np.ascontiguousarray(sd, dtype=np.float64), 0)
    return out.reshape(np.shape(x))


def mixture_sf(x, w, mu, sd):
    x_arr = np.ascontiguousarray(np.atleast_1d(np.asarray(x, dtype=np.float64)))
    out = _mixture_sum(x_arr, np.ascontiguousarray(w, dtype=np.float64),
                       np.ascontiguousarray(mu, dtype=np.float64),
                       np.ascontiguousarray(sd, dtype=np.float64), 1)
    return out.reshape(np.shape(x))


def mixture_mass(a, b, w, mu, sd):
    a_arr = np.ascontiguousarray(np.atleast_1d(np.asarray(a, dtype=np.float64)))
    b_arr = np.ascontiguousarray(np.atleast_1d(np.asarray(b, dtype=np.float64)))
    cdef double[::1] av = a_arr, bv = b_arr
    cdef double[::1] wv = np.ascontiguousarray(w, dtype=np.float64)
    cdef double[::1] mv = np.ascontiguousarray(mu, dtype=np.float64)
    cdef double[::1] sv = np.ascontiguousarray(sd, dtype=np.float64)
    cdef Py_ssize_t nx = av.shape[0], nk = wv.shape[0]
    out = np.zeros(nx, dtype=np.float64)
    cdef double[::1] ov = out
    cdef Py_ssize_t i, j
    cdef double ta, tb, m, acc, comp, y, tmp
    with nogil:
        for i in range(nx):
            acc = 0.0
            comp = 0.0
            for j in range(nk):
                ta = (av[i] - mv[j]) / sv[j]
                tb = (bv[i] - mv[j]) / sv[j]
                if ta + tb > 0.0:
                    m = wv[j] * (c_ndtr(-ta) - c_ndtr(-tb))
                else:
                    m = wv[j] * (c_ndtr(tb) - c_ndtr(ta))
                y = m - comp
                tmp = acc + y
                comp = (tmp - acc) - y
                acc = tmp
            ov[i] = acc
    return out
