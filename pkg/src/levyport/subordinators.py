"""Laws of the common stochastic clock.

Three families are supported as the unit-time law of the subordinator:

  * CtsParams  -- classical tempered stable, cf exp(C Gamma(-w)((lam-iu)^w - lam^w));
  * GigParams  -- generalized inverse Gaussian, Bessel-K normalized density,
                  with explicit gamma (chi=0) and inverse-gamma (psi=0) branches;
  * UnitClock  -- the degenerate clock S_t = t, which turns the subordinated
                  models into plain correlated Gaussians.

All characteristic functions / Laplace exponents accept complex arguments on
the analytic strip (needed for Esscher transforms and Fourier pricing); real
public entry points validate their domains and raise DomainError outside.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np
from scipy import optimize

from levyport._kernels import kv_scaled
from levyport.numerics import DomainError


@dataclass(frozen=True)
class CtsParams:
    """Classical tempered stable clock CTS(omega, lam, c).

    The subordinator interpretation (positive increasing clock) requires
    0 < omega < 1; see the GLOSSARY note on the tail-index convention.
    """

    omega: float
    lam: float
    c: float

    def __post_init__(self):
        if not (0.0 < self.omega < 1.0):
            raise ValueError("CtsParams: omega must lie in (0, 1) for a subordinator law")
        if self.lam <= 0:
            raise ValueError("CtsParams: lam must be positive")
        if self.c <= 0:
            raise ValueError("CtsParams: c must be positive")


@dataclass(frozen=True)
class GigParams:
    """Generalized inverse Gaussian clock GIG(epsilon, chi, psi)."""

    epsilon: float
    chi: float
    psi: float

    def __post_init__(self):
        if self.chi < 0 or self.psi < 0:
            raise ValueError("GigParams: chi and psi must be nonnegative")
        if self.chi == 0 and self.psi == 0:
            raise ValueError("GigParams: chi and psi cannot both be zero")
        if self.chi == 0 and self.epsilon <= 0:
            raise ValueError("GigParams: chi = 0 requires epsilon > 0 (gamma branch)")
        if self.psi == 0 and self.epsilon >= 0:
            raise ValueError("GigParams: psi = 0 requires epsilon < 0 (inverse-gamma branch)")


@dataclass(frozen=True)
class UnitClock:
    """Degenerate clock S_t = t (Gaussian model family)."""


SubordinatorLaw = Union[CtsParams, GigParams, UnitClock]


# ---------------------------------------------------------------------------
# Laplace exponents l(w) = log E[exp(w * S_1)] on the analytic strip
# ---------------------------------------------------------------------------

def _cts_laplace_c(w: np.ndarray, p: CtsParams) -> np.ndarray:
    z = p.lam - w
    if np.any(np.real(z) <= 0):
        raise DomainError("CTS Laplace exponent: requires Re(lam - w) > 0")
    g = p.c * math.gamma(-p.omega)
    return g * (z ** p.omega - p.lam ** p.omega)


def _gig_laplace_c(w: np.ndarray, p: GigParams) -> np.ndarray:
    if p.chi == 0.0:
        z = 1.0 - 2.0 * w / p.psi
        if np.any(np.real(z) <= 0):
            raise DomainError("GIG Laplace exponent: requires Re(psi - 2w) > 0")
        return -p.epsilon * np.log(z)
    if p.psi == 0.0:
        z = -2.0 * w * p.chi
        if np.any(np.real(z) < 0):
            raise DomainError("GIG Laplace exponent (psi=0): requires Re(w) <= 0")
        out = np.zeros_like(w)
        nz = z != 0
        if np.any(nz):
            sq = np.sqrt(z[nz])
            out[nz] = (math.log(2.0) - math.lgamma(-p.epsilon)
                       - 0.5 * p.epsilon * np.log(-w[nz] * p.chi / 2.0)
                       + np.log(kv_scaled(p.epsilon, sq)) - sq)
        return out
    z = p.psi - 2.0 * w
    if np.any(np.real(z) <= 0):
        raise DomainError("GIG Laplace exponent: requires Re(psi - 2w) > 0")
    s0 = math.sqrt(p.chi * p.psi)
    s1 = np.sqrt(p.chi * z)
    log_ratio = (np.log(kv_scaled(p.epsilon, s1)) - s1) - (math.log(float(np.real(kv_scaled(p.epsilon, np.array([s0 + 0j]))[0]))) - s0)
    return -0.5 * p.epsilon * np.log(z / p.psi) + log_ratio


def laplace_exponent_complex(w, law: SubordinatorLaw) -> np.ndarray:
    """log E[exp(w S_1)] for complex w on the law's analytic strip.

    Principal branches throughout; callers that raise the result to a
    non-integer power are responsible for phase continuity along their
    evaluation path (see models._log_cf_path).
    """
    w = np.atleast_1d(np.asarray(w, dtype=np.complex128))
    if isinstance(law, CtsParams):
        return _cts_laplace_c(w, law)
    if isinstance(law, GigParams):
        return _gig_laplace_c(w, law)
    if isinstance(law, UnitClock):
        return w.copy()
    raise TypeError(f"unknown subordinator law {type(law)!r}")


def cts_laplace_exponent(u: float, p: CtsParams) -> float:
    """l(u) = C Gamma(-w)((lam - u)^w - lam^w) for real u < lam."""
    if u >= p.lam:
        raise DomainError("cts_laplace_exponent: requires u < lam")
    return float(np.real(_cts_laplace_c(np.array([u + 0j]), p)[0]))


def gig_laplace_exponent(u: float, p: GigParams) -> float:
    """GIG Laplace exponent for real u with psi - 2u > 0."""
    if p.psi - 2.0 * u <= 0:
        raise DomainError("gig_laplace_exponent: requires psi - 2u > 0")
    return float(np.real(_gig_laplace_c(np.array([u + 0j]), p)[0]))


def laplace_exponent(u: float, law: SubordinatorLaw) -> float:
    if isinstance(law, CtsParams):
        return cts_laplace_exponent(u, law)
    if isinstance(law, GigParams):
        return gig_laplace_exponent(u, law)
    if isinstance(law, UnitClock):
        return float(u)
    raise TypeError(f"unknown subordinator law {type(law)!r}")


# ---------------------------------------------------------------------------
# Characteristic functions
# ---------------------------------------------------------------------------

def cts_cf(u, p: CtsParams) -> np.ndarray:
    """exp(C Gamma(-w)((lam - iu)^w - lam^w)) for real u."""
    u = np.atleast_1d(np.asarray(u, dtype=float))
    return np.exp(_cts_laplace_c(1j * u, p))


def gig_cf(u, p: GigParams) -> np.ndarray:
    u = np.atleast_1d(np.asarray(u, dtype=float))
    return np.exp(_gig_laplace_c(1j * u, p))


def cf(u, law: SubordinatorLaw) -> np.ndarray:
    u = np.atleast_1d(np.asarray(u, dtype=float))
    return np.exp(laplace_exponent_complex(1j * u, law))


# ---------------------------------------------------------------------------
# Cumulants and moments
# ---------------------------------------------------------------------------

def _raw_moments_gig(p: GigParams, kmax: int = 4) -> np.ndarray:
    if p.chi == 0.0:
        beta = p.psi / 2.0
        return np.array([math.gamma(p.epsilon + k) / (math.gamma(p.epsilon) * beta ** k)
                         for k in range(1, kmax + 1)])
    if p.psi == 0.0:
        if -p.epsilon <= kmax:
            raise DomainError("GIG(psi=0): moments up to order 4 require epsilon < -4")
        half_chi = p.chi / 2.0
        return np.array([half_chi ** k * math.gamma(-p.epsilon - k) / math.gamma(-p.epsilon)
                         for k in range(1, kmax + 1)])
    s = math.sqrt(p.chi * p.psi)
    k0 = float(np.real(kv_scaled(p.epsilon, np.array([s + 0j]))[0]))
    ratios = np.array([
        float(np.real(kv_scaled(p.epsilon + k, np.array([s + 0j]))[0])) / k0
        for k in range(1, kmax + 1)
    ])
    scale = math.sqrt(p.chi / p.psi)
    return np.array([scale ** k * ratios[k - 1] for k in range(1, kmax + 1)])


def _cumulants_from_raw(m: np.ndarray) -> tuple[float, float, float, float]:
    m1, m2, m3, m4 = (float(v) for v in m)
    c1 = m1
    c2 = m2 - m1 ** 2
    c3 = m3 - 3 * m2 * m1 + 2 * m1 ** 3
    c4 = m4 - 4 * m3 * m1 - 3 * m2 ** 2 + 12 * m2 * m1 ** 2 - 6 * m1 ** 4
    return c1, c2, c3, c4


def gig_cumulants(p: GigParams) -> dict:
    """First four cumulants of G_1 (Bessel-ratio expressions for chi*psi > 0)."""
    c1, c2, c3, c4 = _cumulants_from_raw(_raw_moments_gig(p))
    return {"c1": c1, "c2": c2, "c3": c3, "c4": c4}


def cts_cumulants(p: CtsParams) -> dict:
    """c_k = C Gamma(k - w) lam^(w - k)."""
    out = {}
    for k in range(1, 5):
        out[f"c{k}"] = p.c * math.gamma(k - p.omega) * p.lam ** (p.omega - k)
    return out


def cumulants(law: SubordinatorLaw) -> dict:
    if isinstance(law, CtsParams):
        return cts_cumulants(law)
    if isinstance(law, GigParams):
        return gig_cumulants(law)
    if isinstance(law, UnitClock):
        return {"c1": 1.0, "c2": 0.0, "c3": 0.0, "c4": 0.0}
    raise TypeError(f"unknown subordinator law {type(law)!r}")


def cts_moments(p: CtsParams) -> dict:
    """Mean, variance, skewness and kurtosis of S_1 (closed forms)."""
    c = cts_cumulants(p)
    var = c["c2"]
    return {
        "mean": c["c1"],
        "variance": var,
        "skewness": c["c3"] / var ** 1.5,
        "kurtosis": 3.0 + c["c4"] / var ** 2,
    }


# ---------------------------------------------------------------------------
# Densities
# ---------------------------------------------------------------------------

def gig_density(x, p: GigParams) -> np.ndarray:
    """GIG density f(x) on x > 0 (log-safe Bessel-K normalization)."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if np.any(x <= 0):
        raise DomainError("gig_density: x must be positive")
    if p.chi == 0.0:
        beta = p.psi / 2.0
        logf = p.epsilon * math.log(beta) - math.lgamma(p.epsilon) \
            + (p.epsilon - 1.0) * np.log(x) - beta * x
        return np.exp(logf)
    if p.psi == 0.0:
        a = -p.epsilon
        b = p.chi / 2.0
        logf = a * math.log(b) - math.lgamma(a) - (a + 1.0) * np.log(x) - b / x
        return np.exp(logf)
    s = math.sqrt(p.chi * p.psi)
    log_k = math.log(float(np.real(kv_scaled(p.epsilon, np.array([s + 0j]))[0]))) - s
    logf = 0.5 * p.epsilon * (math.log(p.psi) - math.log(p.chi)) \
        + (p.epsilon - 1.0) * np.log(x) - 0.5 * (p.chi / x + p.psi * x) \
        - math.log(2.0) - log_k
    return np.exp(logf)


def gig_mode(p: GigParams) -> float:
    """Closed-form mode of the GIG density (psi > 0)."""
    if p.psi == 0.0:
        return (p.chi / 2.0) / (-p.epsilon + 1.0)
    return ((p.epsilon - 1.0) + math.sqrt((p.epsilon - 1.0) ** 2 + p.chi * p.psi)) / p.psi


# ---------------------------------------------------------------------------
# Sampling
# ---------------------------------------------------------------------------

def _stable_standard(rng: np.random.Generator, alpha: float, size: int) -> np.ndarray:
    """Positive alpha-stable draws with Laplace transform exp(-u^alpha), 0<alpha<1
    (Kanter's representation)."""
    u = rng.uniform(0.0, np.pi, size)
    e = rng.standard_exponential(size)
    a = (np.sin(alpha * u) / np.sin(u)) ** (alpha / (1.0 - alpha)) \
        * np.sin((1.0 - alpha) * u) / np.sin(u)
    return (a / e) ** ((1.0 - alpha) / alpha)


def _sample_cts(p: CtsParams, count: int, rng: np.random.Generator) -> np.ndarray:
    """Exact CTS draws: exponential tilting of stable draws, with the total
    jump mass split into pieces so the per-piece acceptance rate is >= 1/e."""
    delta = -p.c * math.gamma(-p.omega)  # > 0 for omega in (0,1)
    npieces = max(1, int(math.ceil(delta * p.lam ** p.omega)))
    scale = (delta / npieces) ** (1.0 / p.omega)
    total = count * npieces
    out = np.empty(total)
    filled = 0
    while filled < total:
        todo = total - filled
        batch = int(todo * math.e * 1.2) + 16
        v = scale * _stable_standard(rng, p.omega, batch)
        accept = rng.random(batch) < np.exp(-p.lam * v)
        good = v[accept]
        take = min(good.size, todo)
        out[filled:filled + take] = good[:take]
        filled += take
    return out.reshape(count, npieces).sum(axis=1)


def _sample_gig(p: GigParams, count: int, rng: np.random.Generator) -> np.ndarray:
    if p.chi == 0.0:
        return rng.gamma(p.epsilon, 2.0 / p.psi, count)
    if p.psi == 0.0:
        return (p.chi / 2.0) / rng.gamma(-p.epsilon, 1.0, count)
    # mode-relocated ratio of uniforms on the scale-free law GIG(eps, s, s)
    s = math.sqrt(p.chi * p.psi)
    eps = p.epsilon
    mz = ((eps - 1.0) + math.sqrt((eps - 1.0) ** 2 + s * s)) / s

    def log_h(z):
        z = np.asarray(z, dtype=float)
        return (eps - 1.0) * np.log(z) - 0.5 * s * (z + 1.0 / z)

    lh_mode = float(log_h(mz))

    def neg_g(z, side):
        if z <= 0 or (side > 0 and z <= mz) or (side < 0 and z >= mz):
            return np.inf
        return -(math.log(abs(z - mz)) + 0.5 * (float(log_h(z)) - lh_mode))

    # bracket the maxima of (z - mz) sqrt(h) on each side of the mode
    hi = mz * 2.0 + 1.0
    while neg_g(hi * 2.0, +1) < neg_g(hi, +1):
        hi *= 2.0
    res_hi = optimize.minimize_scalar(neg_g, args=(+1,), bounds=(mz * (1 + 1e-12), hi * 4.0),
                                      method="bounded", options={"xatol": 1e-12})
    v_plus = math.exp(-res_hi.fun)
    lo = mz / 2.0
    while lo > 1e-300 and neg_g(lo / 2.0, -1) < neg_g(lo, -1):
        lo /= 2.0
    res_lo = optimize.minimize_scalar(neg_g, args=(-1,), bounds=(min(lo / 4.0, mz * 1e-12), mz * (1 - 1e-12)),
                                      method="bounded", options={"xatol": 1e-12})
    v_minus = -math.exp(-res_lo.fun)

    out = np.empty(count)
    filled = 0
    while filled < count:
        todo = count - filled
        batch = int(todo * 4) + 16
        u = rng.random(batch)
        v = rng.uniform(v_minus, v_plus, batch)
        z = mz + v / u
        ok = z > 0
        lz = np.where(ok, z, 1.0)
        ok &= 2.0 * np.log(u) <= (log_h(lz) - lh_mode)
        good = z[ok]
        take = min(good.size, todo)
        out[filled:filled + take] = good[:take]
        filled += take
    return out * math.sqrt(p.chi / p.psi)


def sample(law: SubordinatorLaw, count: int, seed=None,
           rng: np.random.Generator | None = None) -> np.ndarray:
    """iid draws of S_1; deterministic for a fixed seed."""
    if count < 1:
        raise ValueError("sample: count must be >= 1")
    if rng is None:
        rng = np.random.default_rng(seed)
    if isinstance(law, CtsParams):
        return _sample_cts(law, count, rng)
    if isinstance(law, GigParams):
        return _sample_gig(law, count, rng)
    if isinstance(law, UnitClock):
        return np.ones(count)
    raise TypeError(f"unknown subordinator law {type(law)!r}")
