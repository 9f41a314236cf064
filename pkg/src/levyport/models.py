"""Multivariate subordinated-Brownian log-return models (MNTS / MGH / Gaussian).

A model is a correlated n-dimensional Brownian motion with drift, time-changed
by a single subordinator law from `levyport.subordinators`:

    Y_t^j = mu_j t + theta_j S_t + sigma_j W^j_{S_t},   corr(W^i, W^j) = Omega_ij

The joint characteristic function composes the clock's Laplace exponent with
the Brownian characteristic exponent g(u) = i u'theta - u' Sigma u / 2, where
Sigma = D_sigma Omega D_sigma is always derived from the lower-triangular
factor A (A A' = Omega) and never stored.

Time is measured in whatever unit the subordinator parameters refer to; all
formulas are unit-agnostic.  The GH family is defined for non-unit horizons
through the t-th power of the unit-time characteristic function, which this
module evaluates with explicit phase continuity along the transform path (the
principal branch of log K would otherwise wrap for large |Im|).
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from levyport import subordinators as sub
from levyport.numerics import DomainError
from levyport.subordinators import (CtsParams, GigParams, SubordinatorLaw,
                                    UnitClock, cumulants,
                                    laplace_exponent_complex)


class StripViolation(DomainError):
    """Characteristic function evaluated outside its analytic strip."""


@dataclass(frozen=True, eq=False)
class ModelParams:
    """Full parameter set of one model under one measure."""

    mu: np.ndarray
    theta: np.ndarray
    sigma: np.ndarray
    a_factor: np.ndarray  # lower triangular, A A' = Omega with unit diagonal
    sub: SubordinatorLaw
    measure: str = "P"

    def __post_init__(self):
        mu = np.atleast_1d(np.asarray(self.mu, dtype=float))
        theta = np.atleast_1d(np.asarray(self.theta, dtype=float))
        sigma = np.atleast_1d(np.asarray(self.sigma, dtype=float))
        a = np.asarray(self.a_factor, dtype=float)
        n = mu.size
        if theta.size != n or sigma.size != n:
            raise ValueError("ModelParams: mu, theta, sigma must share one length")
        if a.shape != (n, n):
            raise ValueError("ModelParams: a_factor must be n x n")
        if np.any(sigma <= 0):
            raise ValueError("ModelParams: sigma must be strictly positive")
        if np.any(np.abs(np.triu(a, 1)) > 0):
            raise ValueError("ModelParams: a_factor must be lower triangular")
        omega = a @ a.T
        if np.max(np.abs(np.diag(omega) - 1.0)) > 1e-12:
            raise ValueError("ModelParams: A A' must have unit diagonal")
        if self.measure not in ("P", "Q"):
            raise ValueError("ModelParams: measure must be 'P' or 'Q'")
        for arr in (mu, theta, sigma, a):
            arr.setflags(write=False)
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "sigma", sigma)
        object.__setattr__(self, "a_factor", a)

    @property
    def n(self) -> int:
        return self.mu.size

    @property
    def family(self) -> str:
        if isinstance(self.sub, CtsParams):
            return "mnts"
        if isinstance(self.sub, GigParams):
            return "mgh"
        return "gaussian"

    @property
    def omega_corr(self) -> np.ndarray:
        return self.a_factor @ self.a_factor.T

    @property
    def sigma_mat(self) -> np.ndarray:
        d = np.diag(self.sigma)
        return d @ self.omega_corr @ d

    def modified(self, **kwargs) -> "ModelParams":
        return replace(self, **kwargs)


@dataclass(frozen=True)
class SmileQuote:
    asset: int
    maturity: float  # year fraction
    moneyness: float  # strike / spot
    vol: float


@dataclass(frozen=True, eq=False)
class MarketData:
    """Risk-free rate, dividend yields, spots and implied-vol quotes.

    Rates are continuously compounded per year; ``years_per_unit`` converts
    them to the model's time unit (1.0 when the model is parameterized per
    year, 1/252 when parameterized per trading day).
    """

    r: float
    d: np.ndarray
    spot: np.ndarray
    quotes: tuple = ()
    years_per_unit: float = 1.0
    moneyness_band: tuple = (0.8, 1.2)

    def __post_init__(self):
        d = np.atleast_1d(np.asarray(self.d, dtype=float))
        spot = np.atleast_1d(np.asarray(self.spot, dtype=float))
        if d.size != spot.size:
            raise ValueError("MarketData: d and spot must share one length")
        if np.any(spot <= 0):
            raise ValueError("MarketData: spot prices must be positive")
        lo, hi = self.moneyness_band
        for q in self.quotes:
            if q.maturity <= 0:
                raise ValueError("MarketData: quote maturities must be positive")
            if q.vol <= 0:
                raise ValueError("MarketData: implied vols must be positive")
            if not (lo - 1e-12 <= q.moneyness <= hi + 1e-12):
                raise ValueError("MarketData: quote moneyness outside the configured band")
        for arr in (d, spot):
            arr.setflags(write=False)
        object.__setattr__(self, "d", d)
        object.__setattr__(self, "spot", spot)

    @property
    def n(self) -> int:
        return self.spot.size

    def rate_per_unit(self, j: int | None = None) -> float | np.ndarray:
        net = self.r - (self.d if j is None else self.d[j])
        return net * self.years_per_unit

    def quotes_for(self, j: int) -> list:
        return [q for q in self.quotes if q.asset == j]


# ---------------------------------------------------------------------------
# Characteristic functions
# ---------------------------------------------------------------------------

def _check_strip(w: np.ndarray, law: SubordinatorLaw) -> None:
    if isinstance(law, CtsParams):
        if np.any(np.real(law.lam - w) <= 0):
            raise StripViolation("MNTS cf: Re(lam - g(u)) must stay positive")
    elif isinstance(law, GigParams):
        if law.psi > 0 and np.any(np.real(law.psi - 2.0 * w) <= 0):
            raise StripViolation("MGH cf: Re(psi - 2 g(u)) must stay positive")
        if law.psi == 0 and np.any(np.real(w) > 0):
            raise StripViolation("MGH cf (psi=0): Re(g(u)) must stay nonpositive")


def _laplace_continuous(w: np.ndarray, law: SubordinatorLaw,
                        max_refine: int = 10) -> np.ndarray:
    """Laplace exponent along a path of complex w, with the imaginary part made
    continuous by midpoint refinement and cumulative unwrapping.

    The path is implicitly anchored at w = 0 where the exponent vanishes.
    Only the GIG family needs this (log K wraps); other laws are returned with
    principal branches, which are already continuous on their strips.
    """
    _check_strip(w, law)
    if not isinstance(law, GigParams):
        return laplace_exponent_complex(w, law)
    path = np.concatenate([[0j], w])
    idx = np.arange(path.size)
    for _ in range(max_refine):
        ell = laplace_exponent_complex(path, law)
        d_im = np.diff(np.imag(ell))
        wrapped = (d_im + np.pi) % (2.0 * np.pi) - np.pi
        if np.all(np.abs(wrapped) < 1.2):
            im = np.concatenate([[np.imag(ell[0])], np.imag(ell[0]) + np.cumsum(wrapped)])
            out = np.real(ell) + 1j * im
            return out[idx][1:]
        mids = 0.5 * (path[:-1] + path[1:])
        merged = np.empty(path.size * 2 - 1, dtype=complex)
        merged[0::2] = path
        merged[1::2] = mids
        path = merged
        idx = idx * 2
    raise RuntimeError("GH characteristic exponent: phase refinement failed to stabilize")


def joint_cf(u, t: float, p: ModelParams) -> np.ndarray | complex:
    """Joint characteristic function of Y_t at real (or strip-extended) u.

    ``u`` is one n-vector or an (m, n) array of them.
    """
    if t <= 0:
        raise ValueError("joint_cf: t must be positive")
    u = np.asarray(u, dtype=complex)
    single = u.ndim == 1
    u2 = np.atleast_2d(u)
    if u2.shape[1] != p.n:
        raise ValueError("joint_cf: u has wrong dimension")
    g = 1j * u2 @ p.theta - 0.5 * np.einsum("ij,jk,ik->i", u2, p.sigma_mat, u2)
    if isinstance(p.sub, GigParams):
        # radial path from 0 for each point keeps the t-power branch correct
        rays = np.linspace(0.0, 1.0, 9)[1:]
        ell = np.empty(g.size, dtype=complex)
        for k, gk in enumerate(g):
            ell[k] = _laplace_continuous(rays * gk, p.sub)[-1]
    else:
        ell = _laplace_continuous(g, p.sub)
    out = np.exp(1j * t * (u2 @ p.mu) + t * ell)
    return out[0] if single else out


def _cf_1d(u, t: float, mu: float, theta: float, sigma: float,
           law: SubordinatorLaw, sorted_path: bool = True) -> np.ndarray:
    """cf of the scalar law mu t + theta S_t + sigma W_{S_t} at complex u array.

    When ``sorted_path`` is set the input is treated as a path (sorted by real
    part) for the GH phase unwrapping; scattered inputs are sorted internally.
    """
    u = np.atleast_1d(np.asarray(u, dtype=complex))
    order = np.argsort(u.real, kind="stable") if sorted_path else np.arange(u.size)
    us = u[order]
    g = 1j * us * theta - 0.5 * us * us * sigma * sigma
    ell = _laplace_continuous(g, law)
    vals = np.exp(1j * t * us * mu + t * ell)
    out = np.empty_like(vals)
    out[order] = vals
    return out


def marginal_cf(u, j: int, t: float, p: ModelParams) -> np.ndarray:
    """cf of the j-th log-return margin (joint cf restricted to coordinate j)."""
    if not (0 <= j < p.n):
        raise ValueError("marginal_cf: asset index out of range")
    return _cf_1d(u, t, float(p.mu[j]), float(p.theta[j]), float(p.sigma[j]), p.sub)


@dataclass(frozen=True, eq=False)
class MomentReport:
    mean: np.ndarray
    variance: np.ndarray
    skewness: np.ndarray
    ex_kurtosis: np.ndarray
    cov: np.ndarray
    corr: np.ndarray


def moments(p: ModelParams, t: float = 1.0) -> MomentReport:
    """Closed-form per-asset moments plus covariance/correlation of Y_t.

    Built from the subordinator cumulants: for Y = mu t + theta S + sigma W_S,
      var[Y]  = theta^2 c2 + sigma^2 c1,
      c3[Y]   = theta^3 c3 + 3 theta sigma^2 c2,
      c4[Y]   = theta^4 c4 + 6 theta^2 sigma^2 c3 + 3 sigma^4 c2,
      cov_ij  = theta_i theta_j c2 + Sigma_ij c1,
    with c_k the cumulants of S_t = t * (unit-time cumulants).
    """
    cs = cumulants(p.sub)
    c1, c2, c3, c4 = (t * cs[f"c{k}"] for k in range(1, 5))
    th, sg = p.theta, p.sigma
    mean = p.mu * t + th * c1
    var = th ** 2 * c2 + sg ** 2 * c1
    c3y = th ** 3 * c3 + 3.0 * th * sg ** 2 * c2
    c4y = th ** 4 * c4 + 6.0 * th ** 2 * sg ** 2 * c3 + 3.0 * sg ** 4 * c2
    cov = np.outer(th, th) * c2 + p.sigma_mat * c1
    sd = np.sqrt(np.diag(cov))
    corr = cov / np.outer(sd, sd)
    return MomentReport(mean=mean, variance=var,
                        skewness=c3y / var ** 1.5, ex_kurtosis=c4y / var ** 2,
                        cov=cov, corr=corr)


# ---------------------------------------------------------------------------
# Simulation
# ---------------------------------------------------------------------------

def _sample_clock(law: SubordinatorLaw, t: float, count: int,
                  rng: np.random.Generator) -> np.ndarray:
    """Draws of S_t.  CTS rescales exactly (C -> t C); GIG uses direct draws at
    t = 1, exact convolution for integer t, and a spectral inverse-CDF sampler
    otherwise (the GIG family is not closed under convolution)."""
    if isinstance(law, UnitClock):
        return np.full(count, t)
    if isinstance(law, CtsParams):
        return sub.sample(CtsParams(law.omega, law.lam, law.c * t), count, rng=rng)
    if isinstance(law, GigParams):
        ti = int(round(t))
        if abs(t - ti) < 1e-12 and ti >= 1:
            draws = sub.sample(law, count * ti, rng=rng)
            return draws.reshape(count, ti).sum(axis=1)
        return _sample_tpower_spectral(law, t, count, rng)
    raise TypeError(f"unknown subordinator law {type(law)!r}")


def _sample_tpower_spectral(law: SubordinatorLaw, t: float, count: int,
                            rng: np.random.Generator) -> np.ndarray:
    """Inverse-CDF sampling of the t-th convolution power via Gil-Pelaez."""
    cs = cumulants(law)
    mean, sd = t * cs["c1"], np.sqrt(t * cs["c2"])
    s_hi = mean + 40.0 * sd
    # u-grid from cf decay
    u_max = 1.0
    while u_max < 1e7:
        mod = np.exp(t * np.real(laplace_exponent_complex(1j * u_max, law)))
        if mod < 1e-12:
            break
        u_max *= 2.0
    u = np.linspace(1e-9, u_max, 2 ** 15)
    phi = np.exp(t * _laplace_continuous(1j * u, law))
    grid = np.linspace(max(1e-12, mean - 40.0 * sd), s_hi, 1024)
    integrand = np.imag(np.exp(-1j * np.outer(grid, u)) * phi) / u
    cdf = 0.5 - np.trapezoid(integrand, u, axis=1) / np.pi
    cdf = np.clip(cdf, 0.0, 1.0)
    cdf = np.maximum.accumulate(cdf)
    uu = rng.random(count) * (cdf[-1] - cdf[0]) + cdf[0]
    return np.interp(uu, cdf, grid)


def simulate_increments(p: ModelParams, t: float, count: int, seed=None,
                        rng: np.random.Generator | None = None) -> np.ndarray:
    """(count, n) matrix of log-return increments over a horizon t:
    row_k = mu t + theta s_k + sqrt(s_k) D_sigma A z_k."""
    if count < 1:
        raise ValueError("simulate_increments: count must be >= 1")
    if rng is None:
        rng = np.random.default_rng(seed)
    s = _sample_clock(p.sub, t, count, rng)
    z = rng.standard_normal((count, p.n))
    mix = z @ (np.diag(p.sigma) @ p.a_factor).T
    return p.mu * t + np.outer(s, p.theta) + np.sqrt(s)[:, None] * mix


def portfolio_reduction(p: ModelParams, w: Sequence[float]) -> tuple[float, float, float]:
    """(mu~, theta~, sigma~) of the scalar law of w'Y: w'mu, w'theta, sqrt(w'Sigma w)."""
    w = np.asarray(w, dtype=float)
    if w.size != p.n:
        raise ValueError("portfolio_reduction: weight length mismatch")
    return float(w @ p.mu), float(w @ p.theta), float(np.sqrt(w @ p.sigma_mat @ w))


def equicorrelated_factor(n: int, rho: float) -> np.ndarray:
    """Cholesky factor of the equicorrelation matrix (test/simulation helper)."""
    omega = np.full((n, n), rho, dtype=float)
    np.fill_diagonal(omega, 1.0)
    return np.linalg.cholesky(omega)
