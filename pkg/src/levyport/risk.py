"""Portfolio risk measures and weight selection.

The closure property of the models makes portfolio risk one-dimensional: for
weights w, the law of w'Y is again an NTS / GH / Gaussian scalar law with
parameters (w'mu, w'theta, sqrt(w'Sigma w)) and the same clock.  VaR inverts
the Gil-Pelaez cdf; AVaR uses

    AVaR_d(X) = -q + E[(q - X)^+] / d,         q = F^{-1}(d),

where the expected shortfall integral E[(q-X)^+] is a damped Fourier transform
of the cf (exactly a put-style tail integral).  Gaussian laws use closed
forms, and the GH family additionally has a closed-form density at unit
horizon which is used for cross-validated density-based integration.

Weight optimizers: minimum-AVaR (MA), minimum-variance (MV), equal weights
(EW), all under a budget constraint and a common box 0 <= lower <= w <= upper.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, optimize
from scipy.stats import norm

from levyport._kernels import kv_scaled
from levyport.models import ModelParams, _cf_1d, portfolio_reduction
from levyport.numerics import DomainError
from levyport.subordinators import (CtsParams, GigParams, SubordinatorLaw,
                                    UnitClock, cumulants)


@dataclass(frozen=True)
class TailLevel:
    delta: float = 0.05

    def __post_init__(self):
        if not (0.0 < self.delta < 1.0):
            raise ValueError("TailLevel: delta must lie in (0, 1)")


@dataclass(frozen=True, eq=False)
class PortfolioWeights:
    w: np.ndarray
    lower: float = 0.0
    upper: float = 0.1

    def __post_init__(self):
        w = np.atleast_1d(np.asarray(self.w, dtype=float))
        if abs(float(w.sum()) - 1.0) > 1e-8:
            raise ValueError("PortfolioWeights: weights must sum to one")
        if np.any(w < self.lower - 1e-9) or np.any(w > self.upper + 1e-9):
            raise ValueError("PortfolioWeights: box constraint violated")
        w.setflags(write=False)
        object.__setattr__(self, "w", w)


@dataclass(frozen=True)
class UnivariateLaw:
    """Scalar law mu t + theta S_t + sigma W_{S_t}; handle used by var/avar."""

    mu: float
    theta: float
    sigma: float
    sub: SubordinatorLaw

    @property
    def family(self) -> str:
        if isinstance(self.sub, CtsParams):
            return "nts"
        if isinstance(self.sub, GigParams):
            return "gh"
        return "gaussian"

    def cf(self, u, t: float = 1.0) -> np.ndarray:
        return _cf_1d(u, t, self.mu, self.theta, self.sigma, self.sub)

    def mean_sd(self, t: float) -> tuple[float, float]:
        cs = cumulants(self.sub)
        mean = self.mu * t + self.theta * cs["c1"] * t
        var = (self.theta ** 2 * cs["c2"] + self.sigma ** 2 * cs["c1"]) * t
        return mean, math.sqrt(var)


def portfolio_law(w, p: ModelParams) -> UnivariateLaw:
    """Scalar law of w'Y; its cf equals joint_cf(u w) identically."""
    mu_t, th_t, sg_t = portfolio_reduction(p, np.asarray(w, dtype=float))
    return UnivariateLaw(mu_t, th_t, sg_t, p.sub)


# ---------------------------------------------------------------------------
# cdf, VaR, AVaR
# ---------------------------------------------------------------------------

def law_cdf(law: UnivariateLaw, x: float, t: float = 1.0) -> float:
    """Gil-Pelaez cdf F(x) = 1/2 - (1/pi) Int_0^inf Im[e^{-iux} cf(u)] / u du."""
    if law.family == "gaussian":
        mean, sd = law.mean_sd(t)
        return float(norm.cdf((x - mean) / sd))

    def integrand(u):
        val = np.imag(np.exp(-1j * u * x) * law.cf(np.array([u]), t)[0]) / u
        return float(val)

    mean, sd = law.mean_sd(t)
    upper = _cf_decay_cutoff(law, t)
    val, _ = integrate.quad(integrand, 1e-12, upper, epsabs=1e-11, epsrel=1e-10, limit=600)
    return float(min(max(0.5 - val / math.pi, 0.0), 1.0))


def _cf_decay_cutoff(law: UnivariateLaw, t: float, tol: float = 1e-13) -> float:
    u = 8.0
    while u < 1e8:
        if np.max(np.abs(law.cf(np.array([u, 1.5 * u]), t))) < tol:
            return 1.5 * u
        u *= 2.0
    return 1e8


def _shortfall_damping(law: UnivariateLaw, a0: float = 2.0) -> float:
    """Largest a <= a0 with E[exp(-a X)] finite (mirrors the pricing rule)."""
    a = a0
    while a > 1e-4:
        x = -a * law.theta + 0.5 * a * a * law.sigma ** 2
        if isinstance(law.sub, CtsParams) and x < law.sub.lam:
            return a
        if isinstance(law.sub, GigParams):
            ok = (x < 0.0) if law.sub.psi == 0.0 else (law.sub.psi - 2.0 * x > 0.0)
            if ok:
                return a
        if isinstance(law.sub, UnitClock):
            return a
        a *= 0.5
    raise DomainError("AVaR: no admissible shortfall damping parameter")


def expected_shortfall_put(law: UnivariateLaw, q: float, t: float = 1.0) -> float:
    """E[(q - X)^+] via the damped Fourier tail integral."""
    a = _shortfall_damping(law)

    def integrand(u):
        num = law.cf(np.array([1j * a - u]), t)[0]
        den = (a + 1j * u) ** 2
        return float(np.real(np.exp(1j * u * q) * num / den))

    upper = _cf_decay_cutoff(law, t)
    val, _ = integrate.quad(integrand, 0.0, upper, epsabs=1e-12, epsrel=1e-11, limit=600)
    return float(math.exp(a * q) * val / math.pi)


def var(law: UnivariateLaw, delta: float | TailLevel = 0.05, horizon: float = 1.0) -> float:
    """Value at risk: VaR_d(X) = -F^{-1}(d)."""
    delta = delta.delta if isinstance(delta, TailLevel) else float(delta)
    if not (0.0 < delta < 1.0):
        raise ValueError("var: delta must lie in (0, 1)")
    mean, sd = law.mean_sd(horizon)
    if law.family == "gaussian":
        return float(-(mean + sd * norm.ppf(delta)))
    lo, hi = mean - 3.0 * sd, mean
    while law_cdf(law, lo, horizon) > delta:
        lo -= 5.0 * sd
        if lo < mean - 500.0 * sd:
            raise RuntimeError("var: quantile bracketing failed")
    while law_cdf(law, hi, horizon) < delta:
        hi += 5.0 * sd
    q = optimize.brentq(lambda x: law_cdf(law, x, horizon) - delta, lo, hi, xtol=1e-10)
    return float(-q)


def avar(law: UnivariateLaw, delta: float | TailLevel = 0.05, horizon: float = 1.0,
         method: str = "auto") -> float:
    """Average value at risk -E[X | X < -VaR_d(X)].

    ``method``: "fourier" (cf tail integral), "density" (closed-form GH density
    at unit horizon), or "auto" (Gaussian closed form, density for GH at
    horizon 1, Fourier otherwise).
    """
    delta = delta.delta if isinstance(delta, TailLevel) else float(delta)
    mean, sd = law.mean_sd(horizon)
    if law.family == "gaussian":
        z = norm.ppf(delta)
        return float(-mean + sd * norm.pdf(z) / delta)
    if method == "auto":
        method = "density" if (law.family == "gh" and horizon == 1.0) else "fourier"
    if method == "density":
        return _avar_gh_density(law, delta, horizon)
    q = -var(law, delta, horizon)
    return float(-q + expected_shortfall_put(law, q, horizon) / delta)


def gh_density(law: UnivariateLaw, x, t: float = 1.0) -> np.ndarray:
    """Closed-form univariate GH density (unit horizon only; the GH family is
    defined through the t-power cf for other horizons and has no closed
    density there)."""
    if law.family != "gh" or t != 1.0:
        raise DomainError("gh_density: closed form available only for GH at unit horizon")
    p: GigParams = law.sub
    x = np.atleast_1d(np.asarray(x, dtype=float))
    dx = x - law.mu
    s2 = law.sigma ** 2
    qq = dx * dx / s2
    bb = p.psi + law.theta ** 2 / s2
    nu = p.epsilon - 0.5
    if p.chi == 0.0:
        log_norm = (p.epsilon * math.log(p.psi / 2.0) - math.lgamma(p.epsilon)
                    - 0.5 * math.log(2.0 * math.pi * s2))
    else:
        s0 = math.sqrt(p.chi * p.psi)
        log_k0 = math.log(float(np.real(kv_scaled(p.epsilon, np.array([s0 + 0j]))[0]))) - s0
        log_norm = (0.5 * p.epsilon * math.log(p.psi / p.chi) - math.log(2.0) - log_k0
                    - 0.5 * math.log(2.0 * math.pi * s2))
    arg = np.sqrt((p.chi + qq) * bb)
    log_bessel = np.log(np.real(kv_scaled(nu, arg.astype(complex)))) - arg
    # the mixing integral contributes 2 (A/B)^(nu/2) K_nu(sqrt(A B))
    logf = (log_norm + math.log(2.0) + law.theta * dx / s2 + log_bessel
            + 0.5 * nu * (np.log(p.chi + qq) - math.log(bb)))
    return np.exp(logf)


def _avar_gh_density(law: UnivariateLaw, delta: float, horizon: float) -> float:
    mean, sd = law.mean_sd(horizon)

    def cdf(x):
        val, _ = integrate.quad(lambda y: float(gh_density(law, y, horizon)[0]),
                                mean - 60.0 * sd, x, epsabs=1e-12, epsrel=1e-11, limit=400)
        return val

    lo, hi = mean - 3.0 * sd, mean
    while cdf(lo) > delta:
        lo -= 5.0 * sd
    q = optimize.brentq(lambda x: cdf(x) - delta, lo, hi, xtol=1e-10)
    tail, _ = integrate.quad(lambda y: y * float(gh_density(law, y, horizon)[0]),
                             mean - 60.0 * sd, q, epsabs=1e-13, epsrel=1e-11, limit=400)
    return float(-tail / delta)


# ---------------------------------------------------------------------------
# batched AVaR (sampling oracles, random-portfolio sweeps)
# ---------------------------------------------------------------------------

def avar_batch(p: ModelParams, weights: np.ndarray, delta: float = 0.05,
               horizon: float = 1.0) -> np.ndarray:
    """AVaR of many portfolios at once on a shared frequency grid.

    Fully vectorized for NTS/Gaussian clocks; the GH clock falls back to the
    per-portfolio adaptive route.
    """
    weights = np.atleast_2d(np.asarray(weights, dtype=float))
    mu_t = weights @ p.mu
    th_t = weights @ p.theta
    sg_t = np.sqrt(np.einsum("ij,jk,ik->i", weights, p.sigma_mat, weights))
    if isinstance(p.sub, GigParams):
        return np.array([
            avar(UnivariateLaw(m, th, sg, p.sub), delta, horizon, method="fourier")
            for m, th, sg in zip(mu_t, th_t, sg_t)
        ])
    if isinstance(p.sub, UnitClock):
        mean = (mu_t + th_t) * horizon
        sd = sg_t * math.sqrt(horizon)
        z = norm.ppf(delta)
        return -mean + sd * norm.pdf(z) / delta

    law0 = UnivariateLaw(float(mu_t[0]), float(th_t[0]), float(np.max(sg_t)), p.sub)
    upper = _cf_decay_cutoff(law0, horizon)
    nu_grid = 2 ** 13
    u = np.linspace(1e-10, upper, nu_grid)
    lam, om, c = p.sub.lam, p.sub.omega, p.sub.c
    gam = c * math.gamma(-om)

    def cf_matrix(ushift):
        # (m, nu) cf values at real grid u (optionally shifted to u + i a)
        uu = ushift[None, :]
        g = 1j * uu * th_t[:, None] - 0.5 * uu * uu * sg_t[:, None] ** 2
        return np.exp(1j * horizon * uu * mu_t[:, None]
                      + horizon * gam * ((lam - g) ** om - lam ** om))

    phi = cf_matrix(u.astype(complex))
    cs = cumulants(p.sub)
    mean = mu_t * horizon + th_t * cs["c1"] * horizon
    sd = np.sqrt((th_t ** 2 * cs["c2"] + sg_t ** 2 * cs["c1"]) * horizon)

    def cdf_vec(x):
        ee = np.exp(-1j * np.outer(x, u))
        vals = np.trapezoid(np.imag(ee * phi) / u, u, axis=1)
        return 0.5 - vals / math.pi

    lo = mean - 3.0 * sd
    for _ in range(60):
        mask = cdf_vec(lo) > delta
        if not mask.any():
            break
        lo[mask] -= 5.0 * sd[mask]
    hi = mean.copy()
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        below = cdf_vec(mid) < delta
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    q = 0.5 * (lo + hi)

    a = min(_shortfall_damping(UnivariateLaw(0.0, float(th_t.min()), float(sg_t.max()), p.sub)),
            _shortfall_damping(UnivariateLaw(0.0, float(th_t.max()), float(sg_t.max()), p.sub)))
    phi_shift = cf_matrix(1j * a - u.astype(complex))
    den = (a + 1j * u) ** 2
    ee = np.exp(1j * np.outer(q, u))
    g_int = np.trapezoid(np.real(ee * phi_shift / den[None, :]), u, axis=1)
    g_val = np.exp(a * q) * g_int / math.pi
    return -q + g_val / delta


# ---------------------------------------------------------------------------
# weight optimizers
# ---------------------------------------------------------------------------

def equal_weights(n: int, lower: float = 0.0, upper: float = 1.0) -> PortfolioWeights:
    return PortfolioWeights(np.full(n, 1.0 / n), lower, upper)


def _check_box(n: int, lower: float, upper: float) -> None:
    if lower * n > 1.0 + 1e-12 or upper * n < 1.0 - 1e-12:
        raise ValueError("weight box infeasible: n*lower <= 1 <= n*upper required")


def optimize_mv(cov: np.ndarray, lower: float = 0.0, upper: float = 0.1) -> PortfolioWeights:
    """Minimum-variance weights under budget and box constraints."""
    cov = np.asarray(cov, dtype=float)
    n = cov.shape[0]
    _check_box(n, lower, upper)
    w0 = np.full(n, 1.0 / n)
    res = optimize.minimize(
        lambda w: float(w @ cov @ w), w0, jac=lambda w: 2.0 * cov @ w,
        method="SLSQP", bounds=[(lower, upper)] * n,
        constraints=[{"type": "eq", "fun": lambda w: w.sum() - 1.0,
                      "jac": lambda w: np.ones(n)}],
        options={"ftol": 1e-14, "maxiter": 500})
    if not res.success:
        raise RuntimeError(f"optimize_mv failed: {res.message}")
    w = np.clip(res.x, lower, upper)
    return PortfolioWeights(w / w.sum(), lower, upper)


def optimize_ma(p: ModelParams, delta: float | TailLevel = 0.05,
                lower: float = 0.0, upper: float = 0.1, horizon: float = 1.0,
                w0=None, ftol: float = 1e-12) -> PortfolioWeights:
    """Minimum-AVaR weights.  AVaR of w'Y is convex in w, so the local SLSQP
    solution under the budget/box constraints is the global one."""
    delta = delta.delta if isinstance(delta, TailLevel) else float(delta)
    n = p.n
    _check_box(n, lower, upper)
    start = np.full(n, 1.0 / n) if w0 is None else np.asarray(w0, dtype=float)

    def obj(w):
        return avar(portfolio_law(w, p), delta, horizon, method="fourier")

    res = optimize.minimize(
        obj, start, method="SLSQP", bounds=[(lower, upper)] * n,
        constraints=[{"type": "eq", "fun": lambda w: w.sum() - 1.0,
                      "jac": lambda w: np.ones(n)}],
        options={"ftol": ftol, "maxiter": 300, "eps": 1e-6})
    if not res.success and res.status != 8:  # 8: positive directional derivative (flat)
        raise RuntimeError(f"optimize_ma failed: {res.message}")
    w = np.clip(res.x, lower, upper)
    w = w / w.sum()
    # deterministic tie-break toward lower indices on numerically flat axes
    w[np.abs(w) < 1e-12] = 0.0
    return PortfolioWeights(w / w.sum(), lower, upper)


def ma_kkt_residual(p: ModelParams, weights: PortfolioWeights,
                    delta: float = 0.05, horizon: float = 1.0,
                    fd_step: float = 1e-4) -> float:
    """Stationarity residual of the MA problem at given weights.

    Projects the finite-difference AVaR gradient onto the feasible directions
    (budget hyperplane, inactive box faces) and returns its max-norm.
    """
    w = weights.w
    n = w.size

    def obj(x):
        return avar(portfolio_law(x, p), delta, horizon, method="fourier")

    grad = np.empty(n)
    for j in range(n):
        e = np.zeros(n)
        e[j] = fd_step
        grad[j] = (obj(w + e) - obj(w - e)) / (2.0 * fd_step)
    free = (w > weights.lower + 1e-9) & (w < weights.upper - 1e-9)
    if not free.any():
        return 0.0
    nu = -float(np.mean(grad[free]))
    resid = np.abs(grad[free] + nu).max()
    # bound multipliers must have the right sign at active faces
    at_lower = w <= weights.lower + 1e-9
    at_upper = w >= weights.upper - 1e-9
    resid = max(resid, float(np.max(np.maximum(0.0, -(grad[at_lower] + nu)), initial=0.0)))
    resid = max(resid, float(np.max(np.maximum(0.0, grad[at_upper] + nu), initial=0.0)))
    return float(resid)
