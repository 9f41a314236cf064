"""Esscher transform between the historical and risk-neutral measures.

Forward direction: given historical parameters, find the tilt vector h such
that every discounted dividend-adjusted stock price is a martingale under the
tilted measure.  In log form the system reads, per asset j,

    mu_j + l( g(h + e_j) ) - l( g(h) ) = (r - d_j) * years_per_unit,

with g(x) = x'theta + x'Sigma x / 2 and l the clock's Laplace exponent.  The
risk-neutral parameters then follow from the closed parameter relations: only
theta and the clock's tempering parameter (lam for CTS, psi for GIG) move; mu,
sigma, Omega and the remaining clock parameters are invariant.

Inverse direction: given risk-neutral parameters, recover a historical
parameter set.  The martingale equations, rewritten through the constraint
lines, reduce to a consistency condition on the risk-neutral inputs that does
not pin the tilt: tilting the recovered historical measure by *any* h and
applying the parameter relations lands back on the same risk-neutral set.  The
solver therefore refines from an explicit start tilt ``h0`` (the gauge), which
defaults to zero; round-trip callers pass the forward tilt.  Inconsistent
risk-neutral inputs are reported as non-convergence, never silently accepted.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from levyport.models import MarketData, ModelParams
from levyport.numerics import DomainError, RootSolveReport, solve_system
from levyport.subordinators import (CtsParams, GigParams, UnitClock,
                                    laplace_exponent)


@dataclass(frozen=True)
class EsscherResult:
    h: np.ndarray
    params_out: ModelParams
    report: RootSolveReport


def _gtilde(h: np.ndarray, theta: np.ndarray, sigma_mat: np.ndarray) -> float:
    return float(h @ theta + 0.5 * h @ sigma_mat @ h)


def _clock_domain_ok(law, x: float) -> bool:
    """Is x inside the Laplace-exponent domain of the clock law?"""
    if isinstance(law, CtsParams):
        return x < law.lam
    if isinstance(law, GigParams):
        if law.psi == 0.0:
            return x < 0.0
        return law.psi - 2.0 * x > 0.0
    return True


def _martingale_residual_fn(p: ModelParams, rates: np.ndarray):
    """Residual of the per-asset martingale system for measure p with tilt h."""
    sigma_mat = p.sigma_mat
    shift = p.theta + 0.5 * p.sigma ** 2

    def resid(h: np.ndarray) -> np.ndarray:
        g0 = _gtilde(h, p.theta, sigma_mat)
        gj = g0 + shift + sigma_mat @ h
        l0 = laplace_exponent(g0, p.sub)
        lj = np.array([laplace_exponent(x, p.sub) for x in gj])
        return p.mu + lj - l0 - rates

    def domain(h: np.ndarray) -> bool:
        g0 = _gtilde(h, p.theta, sigma_mat)
        if not _clock_domain_ok(p.sub, g0):
            return False
        gj = g0 + shift + sigma_mat @ h
        return all(_clock_domain_ok(p.sub, x) for x in gj)

    return resid, domain


def _tilt_params(p: ModelParams, h: np.ndarray, measure: str) -> ModelParams:
    """Closed parameter relations of the Esscher tilt: theta and the tempering
    parameter move, everything else is invariant."""
    g0 = _gtilde(h, p.theta, p.sigma_mat)
    theta_new = p.theta + p.sigma_mat @ h
    if isinstance(p.sub, CtsParams):
        sub_new = CtsParams(p.sub.omega, p.sub.lam - g0, p.sub.c)
    elif isinstance(p.sub, GigParams):
        sub_new = GigParams(p.sub.epsilon, p.sub.chi, p.sub.psi - 2.0 * g0)
    else:
        sub_new = UnitClock()
    return p.modified(theta=theta_new, sub=sub_new, measure=measure)


def martingale_residual(q: ModelParams, mkt: MarketData) -> np.ndarray:
    """Per-asset log-space martingale residual of a risk-neutral parameter set:
    log E^Q[exp(Y_1^j)] - (r - d_j) * years_per_unit."""
    rates = (mkt.r - mkt.d) * mkt.years_per_unit
    resid, _ = _martingale_residual_fn(q, rates)
    return resid(np.zeros(q.n))


def esscher_forward(p: ModelParams, mkt: MarketData, tol: float = 1e-12,
                    h0=None) -> EsscherResult:
    """P -> Q_h: solve the martingale system for the tilt and map parameters."""
    if p.measure != "P":
        raise ValueError("esscher_forward expects P-measure parameters")
    if mkt.n != p.n:
        raise ValueError("esscher_forward: market dimension mismatch")
    rates = (mkt.r - mkt.d) * mkt.years_per_unit
    resid, domain = _martingale_residual_fn(p, rates)
    start = np.zeros(p.n) if h0 is None else np.asarray(h0, dtype=float)
    report = solve_system(resid, start, tol=tol, domain=domain)
    if not report.converged:
        return EsscherResult(report.solution, p, report)
    q = _tilt_params(p, report.solution, "Q")
    return EsscherResult(report.solution, q, report)


def esscher_inverse(q: ModelParams, mkt: MarketData, h0=None,
                    tol: float = 1e-10) -> EsscherResult:
    """Q -> P_h: recover historical parameters from risk-neutral ones.

    The system is solved in h with the constraint lines substituted, so the
    residual is exactly the martingale consistency of the risk-neutral inputs;
    ``h0`` selects the gauge (see module docstring).  Martingale consistency is
    a constraint of the system, not a precondition: inconsistent inputs yield
    ``report.converged = False`` with the best iterate.
    """
    if q.measure != "Q":
        raise ValueError("esscher_inverse expects Q-measure parameters")
    if mkt.n != q.n:
        raise ValueError("esscher_inverse: market dimension mismatch")
    rates = (mkt.r - mkt.d) * mkt.years_per_unit

    def params_at(h: np.ndarray) -> ModelParams:
        # inverse tilt: P_h = Esscher tilt of Q by -h
        return _tilt_params(q, -np.asarray(h, dtype=float), "P")

    def resid(h: np.ndarray) -> np.ndarray:
        p_h = params_at(h)
        fwd_resid, _ = _martingale_residual_fn(p_h, rates)
        return fwd_resid(np.asarray(h, dtype=float))

    def domain(h: np.ndarray) -> bool:
        h = np.asarray(h, dtype=float)
        g0 = _gtilde(-h, q.theta, q.sigma_mat)
        if isinstance(q.sub, CtsParams) and q.sub.lam - g0 <= 0:
            return False
        if isinstance(q.sub, GigParams) and q.sub.psi > 0 and q.sub.psi - 2.0 * g0 <= 0:
            return False
        p_h = params_at(h)
        _, fwd_domain = _martingale_residual_fn(p_h, rates)
        return fwd_domain(h)

    start = np.zeros(q.n) if h0 is None else np.asarray(h0, dtype=float)
    if not domain(start):
        raise DomainError("esscher_inverse: start tilt outside the parameter domain")
    r0 = resid(start)
    if float(np.max(np.abs(r0))) <= tol:
        report = RootSolveReport(start.copy(), float(np.max(np.abs(r0))), 0, True)
    else:
        report = solve_system(resid, start, tol=tol, max_iter=10, domain=domain)
    return EsscherResult(report.solution, params_at(report.solution), report)
