# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernel: Dormand-Prince 5(4) over one constant-control segment.

Same algorithm as ``_fallback.py``; transforms go through FFTW real-to-complex
plans and the whole stepping loop runs without the GIL.  Spectra are stored as
interleaved (re, im) doubles of length ``2 * (n/2 + 1)``.
"""

import numpy as np
from libc.math cimport sqrt, pow, fabs, ceil, isfinite
from libc.stdlib cimport malloc, free
from libc.string cimport memcpy

cdef extern from *:
    """
    #include <fftw3.h>
    static fftw_plan ch_plan_r2c(int n, double *in, double *out) {
        return fftw_plan_dft_r2c_1d(n, in, (fftw_complex *)out, FFTW_ESTIMATE);
    }
    static fftw_plan ch_plan_c2r(int n, double *in, double *out) {
        return fftw_plan_dft_c2r_1d(n, (fftw_complex *)in, out, FFTW_ESTIMATE);
    }
    """
    ctypedef void* fftw_plan
    fftw_plan ch_plan_r2c(int n, double *inp, double *out)
    fftw_plan ch_plan_c2r(int n, double *inp, double *out)
    void fftw_execute(fftw_plan p) nogil
    void fftw_destroy_plan(fftw_plan p)
    void* fftw_malloc(size_t n)
    void fftw_free(void* p)

NAME = "cython"

DEF OK = 0
DEF BLOWUP = 1
DEF STEP_FAILURE = 2
DEF NONFINITE = 3

cdef double A21 = 1.0 / 5
cdef double A31 = 3.0 / 40, A32 = 9.0 / 40
cdef double A41 = 44.0 / 45, A42 = -56.0 / 15, A43 = 32.0 / 9
cdef double A51 = 19372.0 / 6561, A52 = -25360.0 / 2187, A53 = 64448.0 / 6561, A54 = -212.0 / 729
cdef double A61 = 9017.0 / 3168, A62 = -355.0 / 33, A63 = 46732.0 / 5247, A64 = 49.0 / 176, A65 = -5103.0 / 18656
cdef double B1 = 35.0 / 384, B3 = 500.0 / 1113, B4 = 125.0 / 192, B5 = -2187.0 / 6784, B6 = 11.0 / 84
cdef double E1 = 71.0 / 57600, E3 = -71.0 / 16695, E4 = 71.0 / 1920, E5 = -17253.0 / 339200, E6 = 22.0 / 525, E7 = -1.0 / 40


cdef int cutoff(int n, bint dealias):
    if dealias:
        return <int>ceil(n / 3.0) - 1
    return n // 2 - 1


cdef class Kernel:
    cdef int n, nh
    cdef double *rbuf
    cdef double *cbuf
    cdef fftw_plan fwd, bwd
    cdef double *mask
    cdef double *kk
    cdef double *ih
    cdef double kappa
    cdef double *Uh
    cdef double *P1
    cdef double *Ux
    cdef double *Uxx
    cdef double *Ud
    cdef double *phi
    cdef double *fh
    cdef double *phih

    def __cinit__(self, int n, double kappa, bint dealias):
        cdef int j, K = cutoff(n, dealias)
        self.n = n
        self.nh = n // 2 + 1
        self.kappa = kappa
        self.rbuf = <double*>fftw_malloc(n * sizeof(double))
        self.cbuf = <double*>fftw_malloc(2 * self.nh * sizeof(double))
        self.fwd = ch_plan_r2c(n, self.rbuf, self.cbuf)
        self.bwd = ch_plan_c2r(n, self.cbuf, self.rbuf)
        self.mask = <double*>malloc(self.nh * sizeof(double))
        self.kk = <double*>malloc(self.nh * sizeof(double))
        self.ih = <double*>malloc(self.nh * sizeof(double))
        self.Uh = <double*>malloc(2 * self.nh * sizeof(double))
        self.P1 = <double*>malloc(2 * self.nh * sizeof(double))
        self.fh = <double*>malloc(2 * self.nh * sizeof(double))
        self.phih = <double*>malloc(2 * self.nh * sizeof(double))
        self.Ux = <double*>malloc(n * sizeof(double))
        self.Uxx = <double*>malloc(n * sizeof(double))
        self.Ud = <double*>malloc(n * sizeof(double))
        self.phi = <double*>malloc(n * sizeof(double))
        for j in range(self.nh):
            self.kk[j] = j
            self.mask[j] = 1.0 if j <= K else 0.0
            self.ih[j] = 1.0 / (1.0 + <double>j * j)
        for j in range(n):
            self.phi[j] = 0.0
        for j in range(2 * self.nh):
            self.fh[j] = 0.0
            self.phih[j] = 0.0

    def __dealloc__(self):
        if self.fwd != NULL:
            fftw_destroy_plan(self.fwd)
        if self.bwd != NULL:
            fftw_destroy_plan(self.bwd)
        fftw_free(self.rbuf)
        fftw_free(self.cbuf)
        free(self.mask); free(self.kk); free(self.ih)
        free(self.Uh); free(self.P1); free(self.fh); free(self.phih)
        free(self.Ux); free(self.Uxx); free(self.Ud); free(self.phi)

    cdef void set_controls(self, const double[::1] phi, const double[::1] f):
        cdef int j
        for j in range(self.n):
            self.phi[j] = phi[j]
            self.rbuf[j] = f[j]
        fftw_execute(self.fwd)
        for j in range(self.nh):
            self.fh[2 * j] = self.mask[j] * self.cbuf[2 * j]
            self.fh[2 * j + 1] = self.mask[j] * self.cbuf[2 * j + 1]
        for j in range(self.n):
            self.rbuf[j] = phi[j]
        fftw_execute(self.fwd)
        memcpy(self.phih, self.cbuf, 2 * self.nh * sizeof(double))

    cdef void backward(self, double *out) nogil:
        cdef int j
        cdef double inv = 1.0 / self.n
        fftw_execute(self.bwd)
        for j in range(self.n):
            out[j] = self.rbuf[j] * inv

    cdef void rhs(self, const double *y, double *out) nogil:
        """out = RHS(y); leaves the transform of y + phi in self.Uh."""
        cdef int j, n = self.n, nh = self.nh
        cdef double re, im, k, m, p1r, p1i, p2r, p2i, lr, li
        for j in range(n):
            self.rbuf[j] = y[j] + self.phi[j]
        fftw_execute(self.fwd)
        memcpy(self.Uh, self.cbuf, 2 * nh * sizeof(double))
        # Ux: multiply by i k
        for j in range(nh):
            k = self.kk[j] * self.mask[j]
            self.cbuf[2 * j] = -k * self.Uh[2 * j + 1]
            self.cbuf[2 * j + 1] = k * self.Uh[2 * j]
        self.backward(self.Ux)
        # Uxx: multiply by -k^2
        for j in range(nh):
            k = self.kk[j] * self.kk[j] * self.mask[j]
            self.cbuf[2 * j] = -k * self.Uh[2 * j]
            self.cbuf[2 * j + 1] = -k * self.Uh[2 * j + 1]
        self.backward(self.Uxx)
        for j in range(nh):
            self.cbuf[2 * j] = self.mask[j] * self.Uh[2 * j]
            self.cbuf[2 * j + 1] = self.mask[j] * self.Uh[2 * j + 1]
        self.backward(self.Ud)
        for j in range(n):
            self.rbuf[j] = self.Ud[j] * self.Ux[j]
        fftw_execute(self.fwd)
        memcpy(self.P1, self.cbuf, 2 * nh * sizeof(double))
        for j in range(n):
            self.rbuf[j] = self.Ux[j] * self.Uxx[j]
        fftw_execute(self.fwd)
        for j in range(nh):
            m = self.mask[j]
            p1r = self.P1[2 * j]
            p1i = self.P1[2 * j + 1]
            p2r = self.cbuf[2 * j]
            p2i = self.cbuf[2 * j + 1]
            # linear term: -2 kappa (1+k^2)^-1 (i k) U
            lr = 2.0 * self.kappa * self.ih[j] * self.kk[j] * self.Uh[2 * j + 1]
            li = -2.0 * self.kappa * self.ih[j] * self.kk[j] * self.Uh[2 * j]
            re = lr - p1r - self.ih[j] * (2.0 * p1r + p2r)
            im = li - p1i - self.ih[j] * (2.0 * p1i + p2i)
            self.cbuf[2 * j] = m * re + self.fh[2 * j]
            self.cbuf[2 * j + 1] = m * im + self.fh[2 * j + 1]
        self.backward(out)

    cdef double hs_norm_u(self, double s) nogil:
        """H^s norm of u from the last transform of u + phi."""
        cdef int j
        cdef double re, im, w, acc = 0.0
        cdef double inv = 1.0 / self.n
        for j in range(self.nh):
            re = (self.Uh[2 * j] - self.phih[2 * j]) * inv
            im = (self.Uh[2 * j + 1] - self.phih[2 * j + 1]) * inv
            w = pow(1.0 + <double>j * j, s) * (re * re + im * im)
            if j > 0 and not (self.n % 2 == 0 and j == self.nh - 1):
                w *= 2.0
            acc += w
        return sqrt(acc)


def rhs(u, phi, f, double kappa, bint dealias):
    cdef const double[::1] uu = np.ascontiguousarray(u, dtype=np.float64)
    cdef int n = uu.shape[0]
    cdef Kernel ker = Kernel(n, kappa, dealias)
    ker.set_controls(np.ascontiguousarray(phi, dtype=np.float64), np.ascontiguousarray(f, dtype=np.float64))
    out = np.empty(n)
    cdef double[::1] o = out
    ker.rhs(&uu[0], &o[0])
    return out


cdef inline double rms_err(int n, const double *e, const double *y, const double *yn,
                           double rtol, double atol) nogil:
    cdef int j
    cdef double sc, a, acc = 0.0
    for j in range(n):
        a = fabs(y[j])
        if fabs(yn[j]) > a:
            a = fabs(yn[j])
        sc = atol + rtol * a
        acc += (e[j] / sc) * (e[j] / sc)
    return sqrt(acc / n)


def integrate_segment(u0, phi, f, double T, double dt0, double rtol, double atol,
                      double dt_max, double dt_min, double kappa, bint dealias,
                      double blowup_cap, double s_monitor):
    """Advance ``u0`` by ``T``; returns ``(u, status, t, dt_next, err_sum, steps, rejected, norm)``."""
    y_arr = np.array(u0, dtype=np.float64, copy=True)
    cdef double[::1] yv = y_arr
    cdef int n = yv.shape[0]
    cdef Kernel ker = Kernel(n, kappa, dealias)
    ker.set_controls(np.ascontiguousarray(phi, dtype=np.float64), np.ascontiguousarray(f, dtype=np.float64))

    cdef double *work = <double*>malloc(10 * n * sizeof(double))
    cdef double *y = &yv[0]
    cdef double *k1 = work
    cdef double *k2 = work + n
    cdef double *k3 = work + 2 * n
    cdef double *k4 = work + 3 * n
    cdef double *k5 = work + 4 * n
    cdef double *k6 = work + 5 * n
    cdef double *k7 = work + 6 * n
    cdef double *yt = work + 7 * n
    cdef double *yn = work + 8 * n
    cdef double *e = work + 9 * n
    cdef double *tmp
    cdef int j, status = OK, steps = 0, rejected = 0
    cdef bint last, finite
    cdef double t = 0.0, h, dt, err, emax, fac, d0, d1, sc, norm, err_sum = 0.0

    with nogil:
        ker.rhs(y, k1)
        norm = ker.hs_norm_u(s_monitor)
        dt = dt0
        if T > 0.0 and dt <= 0.0:
            d0 = 0.0
            d1 = 0.0
            for j in range(n):
                sc = atol + rtol * fabs(y[j])
                d0 += (y[j] / sc) * (y[j] / sc)
                d1 += (k1[j] / sc) * (k1[j] / sc)
            d0 = sqrt(d0 / n)
            d1 = sqrt(d1 / n)
            dt = 1e-6 if (d0 < 1e-5 or d1 < 1e-5) else 0.01 * d0 / d1
        if dt > dt_max:
            dt = dt_max
        while T > 0.0 and t < T:
            last = False
            h = dt
            if t + h >= T:
                h = T - t
                last = True
            for j in range(n):
                yt[j] = y[j] + h * (A21 * k1[j])
            ker.rhs(yt, k2)
            for j in range(n):
                yt[j] = y[j] + h * (A31 * k1[j] + A32 * k2[j])
            ker.rhs(yt, k3)
            for j in range(n):
                yt[j] = y[j] + h * (A41 * k1[j] + A42 * k2[j] + A43 * k3[j])
            ker.rhs(yt, k4)
            for j in range(n):
                yt[j] = y[j] + h * (A51 * k1[j] + A52 * k2[j] + A53 * k3[j] + A54 * k4[j])
            ker.rhs(yt, k5)
            for j in range(n):
                yt[j] = y[j] + h * (A61 * k1[j] + A62 * k2[j] + A63 * k3[j] + A64 * k4[j] + A65 * k5[j])
            ker.rhs(yt, k6)
            finite = True
            for j in range(n):
                yn[j] = y[j] + h * (B1 * k1[j] + B3 * k3[j] + B4 * k4[j] + B5 * k5[j] + B6 * k6[j])
                if not isfinite(yn[j]):
                    finite = False
            if not finite:
                status = NONFINITE
                dt = h
                break
            ker.rhs(yn, k7)
            emax = 0.0
            for j in range(n):
                e[j] = h * (E1 * k1[j] + E3 * k3[j] + E4 * k4[j] + E5 * k5[j] + E6 * k6[j] + E7 * k7[j])
                if fabs(e[j]) > emax:
                    emax = fabs(e[j])
            err = rms_err(n, e, y, yn, rtol, atol)
            if not isfinite(err):
                status = NONFINITE
                dt = h
                break
            if err <= 1.0:
                t = T if last else t + h
                memcpy(y, yn, n * sizeof(double))
                tmp = k1
                k1 = k7
                k7 = tmp
                steps += 1
                err_sum += emax
                norm = ker.hs_norm_u(s_monitor)
                if err == 0.0:
                    fac = 5.0
                else:
                    fac = 0.9 * pow(err, -0.2)
                    fac = 5.0 if fac > 5.0 else (0.2 if fac < 0.2 else fac)
                if not last:
                    dt = h * fac
                    if dt > dt_max:
                        dt = dt_max
                if norm > blowup_cap:
                    status = BLOWUP
                    break
            else:
                rejected += 1
                fac = 0.9 * pow(err, -0.2)
                dt = h * (0.2 if fac < 0.2 else fac)
                if dt < dt_min:
                    status = STEP_FAILURE
                    break
    free(work)
    return y_arr, status, t, dt, err_sum, steps, rejected, norm
