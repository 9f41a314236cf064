# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled modified Bessel K_nu for complex arguments.

Same algorithm as the pure-numpy fallback (_kv_py): Temme series for |z| <= 2,
Steed CF2 for |z| > 2, upward recurrence in the order, all on the scaled
function K_nu(z) * exp(z).  One tight C loop per array element.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport M_PI, fabs, floor, sin, tgamma

cnp.import_array()

cdef extern from "<complex.h>" nogil:
    double complex cexp(double complex)
    double complex clog(double complex)
    double complex csqrt(double complex)
    double complex csinh(double complex)
    double complex ccosh(double complex)
    double cabs(double complex)
    double creal(double complex)

cdef double _EPS = 1e-16
cdef int _MAXIT_SERIES = 1000
cdef int _MAXIT_CF2 = 100000

cdef double _A1 = 0.57721566490153286061
cdef double _A3 = -0.04200263503409523553
cdef double _A5 = -0.00096219715278769736


cdef inline void _gam1_gam2(double mu, double *gam1, double *gam2) nogil:
    cdef double rg_m = 1.0 / tgamma(1.0 - mu)
    cdef double rg_p = 1.0 / tgamma(1.0 + mu)
    cdef double mu2
    gam2[0] = 0.5 * (rg_m + rg_p)
    if fabs(mu) < 1e-3:
        mu2 = mu * mu
        gam1[0] = -(_A1 + _A3 * mu2 + _A5 * mu2 * mu2)
    else:
        gam1[0] = (rg_m - rg_p) / (2.0 * mu)


cdef inline int _pair_scaled(double mu, double complex z,
                             double complex *kmu, double complex *kmu1) nogil:
    """Scaled (K_mu e^z, K_{mu+1} e^z) for |mu| <= 1/2.  Returns 0 on success."""
    cdef double complex x2, d, e, fact2, ff, total, total1, p, q, c, d2, delt, del1
    cdef double complex b, dd, h, delh, q1, q2, qcf, ccf, qnew, s, dels, scale
    cdef double gam1 = 0.0, gam2 = 0.0, pimu, fact, gampl, gammi, a, a1
    cdef int i

    if cabs(z) <= 2.0:
        x2 = 0.5 * z
        pimu = M_PI * mu
        fact = pimu / sin(pimu) if fabs(pimu) > _EPS else 1.0
        d = -clog(x2)
        e = mu * d
        fact2 = csinh(e) / e if cabs(e) > _EPS else 1.0
        _gam1_gam2(mu, &gam1, &gam2)
        ff = fact * (gam1 * ccosh(e) + gam2 * fact2 * d)
        total = ff
        scale = cexp(e)
        gampl = gam2 - mu * gam1
        gammi = gam2 + mu * gam1
        p = 0.5 * scale / gampl
        q = 0.5 / (scale * gammi)
        c = 1.0
        d2 = x2 * x2
        total1 = p
        for i in range(1, _MAXIT_SERIES + 1):
            ff = (i * ff + p + q) / (i * i - mu * mu)
            c = c * d2 / <double>i
            p = p / (i - mu)
            q = q / (i + mu)
            delt = c * ff
            total = total + delt
            del1 = c * (p - i * ff)
            total1 = total1 + del1
            if cabs(delt) < cabs(total) * _EPS:
                break
        scale = cexp(z)
        kmu[0] = total * scale
        kmu1[0] = total1 * (2.0 / z) * scale
        return 0

    b = 2.0 * (1.0 + z)
    dd = 1.0 / b
    h = dd
    delh = dd
    q1 = 0.0
    q2 = 1.0
    a1 = 0.25 - mu * mu
    qcf = a1
    ccf = a1
    a = -a1
    s = 1.0 + qcf * delh
    for i in range(2, _MAXIT_CF2 + 1):
        a -= 2.0 * (i - 1)
        ccf = -a * ccf / i
        qnew = (q1 - b * q2) / a
        q1 = q2
        q2 = qnew
        qcf = qcf + ccf * qnew
        b = b + 2.0
        dd = 1.0 / (b + a * dd)
        delh = (b * dd - 1.0) * delh
        h = h + delh
        dels = qcf * delh
        s = s + dels
        if cabs(dels) < cabs(s) * _EPS:
            h = a1 * h
            kmu[0] = csqrt(M_PI / (2.0 * z)) / s
            kmu1[0] = kmu[0] * (mu + z + 0.5 - h) / z
            return 0
    return 1


def kv_scaled(double nu, object zarr):
    """K_nu(z) * exp(z) for complex array z (Re z >= 0), elementwise."""
    cdef cnp.ndarray[cnp.complex128_t, ndim=1] z = np.ascontiguousarray(
        np.atleast_1d(zarr), dtype=np.complex128).ravel()
    cdef cnp.ndarray[cnp.complex128_t, ndim=1] out = np.empty(z.shape[0], dtype=np.complex128)
    cdef double anu = fabs(nu)
    cdef int nl = <int>floor(anu + 0.5)
    cdef double mu = anu - nl
    cdef Py_ssize_t k
    cdef int i, status
    cdef double complex kmu, kmu1, tmp, zz

    for k in range(z.shape[0]):
        zz = z[k]
        if zz == 0:
            raise ValueError("bessel kv: argument must be nonzero")
        if creal(zz) < -1e-14:
            raise ValueError("bessel kv: Re(z) >= 0 required")
        status = _pair_scaled(mu, zz, &kmu, &kmu1)
        if status != 0:
            raise RuntimeError("Bessel CF2 failed to converge; argument too close to the imaginary axis")
        for i in range(nl):
            tmp = (mu + i + 1) * (2.0 / zz) * kmu1 + kmu
            kmu = kmu1
            kmu1 = tmp
        out[k] = kmu
    return out
