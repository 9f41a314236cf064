"""Pure-numpy modified Bessel function of the second kind for complex arguments.

Evaluates K_nu(z) for real order nu and complex z with Re(z) >= 0 (principal
branch, |arg z| < pi/2 guaranteed accurate).  Strategy is the classic
series/continued-fraction split:

  * |z| <= 2   -- Temme's series for K_mu, K_{mu+1} with mu = nu mod 1 in
                  [-1/2, 1/2],
  * |z| >  2   -- Steed's continued fraction (CF2) evaluated in the scaled
                  form K_mu(z) * exp(z),

followed by the stable upward recurrence K_{v+1} = K_{v-1} + (2v/z) K_v.

Everything is computed on the exponentially scaled function K_nu(z)*exp(z) so
that large |z| neither under- nor overflows; callers combine with exp(-z) or
subtract z from the log as needed.
"""

from __future__ import annotations

import numpy as np

_EPS = 1e-16
_MAXIT_SERIES = 1000
_MAXIT_CF2 = 100000

# Taylor coefficients of 1/Gamma(1+x) used for the small-mu branch of gam1.
_A1 = 0.57721566490153286061
_A3 = -0.04200263503409523553
_A5 = -0.00096219715278769736


def _gam1_gam2(mu: float) -> tuple[float, float]:
    """Temme's Gamma combinations for |mu| <= 1/2.

    gam1 = (1/Gamma(1-mu) - 1/Gamma(1+mu)) / (2 mu)   (limit -gamma_E at 0)
    gam2 = (1/Gamma(1-mu) + 1/Gamma(1+mu)) / 2
    """
    from math import gamma

    rg_m = 1.0 / gamma(1.0 - mu)
    rg_p = 1.0 / gamma(1.0 + mu)
    gam2 = 0.5 * (rg_m + rg_p)
    if abs(mu) < 1e-3:
        mu2 = mu * mu
        gam1 = -(_A1 + _A3 * mu2 + _A5 * mu2 * mu2)
    else:
        gam1 = (rg_m - rg_p) / (2.0 * mu)
    return gam1, gam2


def _temme_series(mu: float, z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Scaled (K_mu * e^z, K_{mu+1} * e^z) by Temme's series, |z| <= 2."""
    z = np.asarray(z, dtype=np.complex128)
    x2 = 0.5 * z
    pimu = np.pi * mu
    fact = pimu / np.sin(pimu) if abs(pimu) > _EPS else 1.0
    d = -np.log(x2)
    e = mu * d
    fact2 = np.where(np.abs(e) > _EPS, np.sinh(e) / np.where(e == 0, 1.0, e), 1.0)
    gam1, gam2 = _gam1_gam2(mu)
    ff = fact * (gam1 * np.cosh(e) + gam2 * fact2 * d)
    total = ff.astype(np.complex128)
    ee = np.exp(e)
    gampl = gam2 - mu * gam1  # 1/Gamma(1+mu)
    gammi = gam2 + mu * gam1  # 1/Gamma(1-mu)
    p = 0.5 * ee / gampl
    q = 0.5 / (ee * gammi)
    c = np.ones_like(total)
    d2 = x2 * x2
    total1 = p * np.ones_like(total)
    p = p * np.ones_like(total)
    q = q * np.ones_like(total)
    active = np.ones(total.shape, dtype=bool)
    for i in range(1, _MAXIT_SERIES + 1):
        if not active.any():
            break
        ff = (i * ff + p + q) / (i * i - mu * mu)
        c = c * d2 / i
        p = p / (i - mu)
        q = q / (i + mu)
        delt = c * ff
        total = np.where(active, total + delt, total)
        del1 = c * (p - i * ff)
        total1 = np.where(active, total1 + del1, total1)
        active = active & (np.abs(delt) >= np.abs(total) * _EPS)
    scale = np.exp(z)
    kmu = total * scale
    kmu1 = total1 * (2.0 / z) * scale
    return kmu, kmu1


def _steed_cf2(mu: float, z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Scaled (K_mu * e^z, K_{mu+1} * e^z) by Steed's CF2, |z| > 2, Re z > 0."""
    z = np.asarray(z, dtype=np.complex128)
    mu2 = mu * mu
    b = 2.0 * (1.0 + z)
    d = 1.0 / b
    h = d.copy()
    delh = d.copy()
    q1 = np.zeros_like(z)
    q2 = np.ones_like(z)
    a1 = 0.25 - mu2
    q = np.full_like(z, a1)
    c = np.full_like(z, a1)
    a = -a1
    s = 1.0 + q * delh
    active = np.ones(z.shape, dtype=bool)
    for i in range(2, _MAXIT_CF2 + 1):
        if not active.any():
            break
        a -= 2.0 * (i - 1)
        c = np.where(active, -a * c / i, c)
        qnew = np.where(active, (q1 - b * q2) / a, q2)
        q1 = np.where(active, q2, q1)
        q2 = np.where(active, qnew, q2)
        q = np.where(active, q + c * qnew, q)
        b = np.where(active, b + 2.0, b)
        d = np.where(active, 1.0 / (b + a * d), d)
        delh = np.where(active, (b * d - 1.0) * delh, delh)
        h = np.where(active, h + delh, h)
        dels = q * delh
        s = np.where(active, s + dels, s)
        active = active & (np.abs(dels) >= np.abs(s) * _EPS)
    if active.any():
        raise RuntimeError("Bessel CF2 failed to converge; argument too close to the imaginary axis")
    h = a1 * h
    kmu = np.sqrt(np.pi / (2.0 * z)) / s
    kmu1 = kmu * (mu + z + 0.5 - h) / z
    return kmu, kmu1


def kv_scaled(nu: float, z: np.ndarray) -> np.ndarray:
    """K_nu(z) * exp(z) for complex z (Re z >= 0), elementwise."""
    nu = abs(float(nu))  # K is even in the order
    z = np.atleast_1d(np.asarray(z, dtype=np.complex128))
    if np.any(z == 0):
        raise ValueError("bessel kv: argument must be nonzero")
    if np.any(np.real(z) < -1e-14):
        raise ValueError("bessel kv: Re(z) >= 0 required")
    nl = int(np.floor(nu + 0.5))
    mu = nu - nl
    small = np.abs(z) <= 2.0
    kmu = np.empty_like(z)
    kmu1 = np.empty_like(z)
    if small.any():
        a, b = _temme_series(mu, z[small])
        kmu[small], kmu1[small] = a, b
    if (~small).any():
        a, b = _steed_cf2(mu, z[~small])
        kmu[~small], kmu1[~small] = a, b
    # upward recurrence on the scaled values
    for i in range(nl):
        kmu, kmu1 = kmu1, (mu + i + 1) * (2.0 / z) * kmu1 + kmu
    return kmu
