"""Shared numerical kernels: quadrature, Bessel K, root solving, box minimization.

All routines are pure functions of their inputs (no hidden state), so they are
safe to call concurrently and give reproducible results for a fixed start
point.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy import integrate, optimize

from levyport._kernels import kv as _kv
from levyport._kernels import kv_scaled as _kv_scaled
from levyport._kernels import log_kv as _log_kv


class DomainError(ValueError):
    """Evaluation outside the mathematical domain of a formula."""


@dataclass(frozen=True)
class Quadrature:
    """Configuration of a 1-d quadrature rule."""

    rule: str = "adaptive"  # "adaptive" | "fixed-node"
    abs_tol: float = 1e-10
    rel_tol: float = 1e-10
    max_evals: int = 2000

    def __post_init__(self):
        if self.rule not in ("adaptive", "fixed-node"):
            raise ValueError(f"unknown quadrature rule {self.rule!r}")
        if not (self.abs_tol > 0 and self.rel_tol > 0):
            raise ValueError("quadrature tolerances must be positive")
        if self.max_evals < 2:
            raise ValueError("max_evals must be at least 2")


DEFAULT_QUADRATURE = Quadrature()


def integrate_1d(f: Callable[[np.ndarray], np.ndarray], a: float, b: float,
                 quadrature: Quadrature = DEFAULT_QUADRATURE) -> float:
    """Integrate a real-valued vectorized integrand over [a, b] (b may be inf)."""
    if quadrature.rule == "adaptive":
        val, _ = integrate.quad(
            f, a, b,
            epsabs=quadrature.abs_tol, epsrel=quadrature.rel_tol,
            limit=max(50, quadrature.max_evals // 21),
        )
        return float(val)
    if not np.isfinite(b):
        raise ValueError("fixed-node rule requires a finite interval")
    nodes, weights = np.polynomial.legendre.leggauss(min(quadrature.max_evals, 256))
    x = 0.5 * (b - a) * nodes + 0.5 * (b + a)
    return float(0.5 * (b - a) * np.sum(weights * f(x)))


@dataclass(frozen=True)
class RootSolveReport:
    solution: np.ndarray
    residual_norm: float
    iterations: int
    converged: bool


def bessel_k(order: float, x: float, return_flag: bool = False):
    """Modified Bessel function of the second kind K_order(x) for real x > 0.

    Overflow is signalled by returning +inf; when ``return_flag`` is set, a
    (value, overflowed) pair is returned instead of the bare value.
    """
    if x <= 0:
        raise DomainError("bessel_k: x must be positive")
    val = float(np.real(_kv(order, np.array([x + 0j]))[0]))
    overflowed = not math.isfinite(val)
    if overflowed:
        val = math.inf
    return (val, overflowed) if return_flag else val


def bessel_k_scaled(order: float, x: float) -> float:
    """Exponentially scaled K_order(x) * exp(x); finite over the whole x > 0 range."""
    if x <= 0:
        raise DomainError("bessel_k_scaled: x must be positive")
    return float(np.real(_kv_scaled(order, np.array([x + 0j]))[0]))


def bessel_k_complex(order: float, z) -> np.ndarray:
    """K_order(z) over a complex array with Re(z) >= 0."""
    return _kv(order, z)


def log_bessel_k_complex(order: float, z) -> np.ndarray:
    """log K_order(z) (principal log of the scaled value minus z)."""
    return _log_kv(order, z)


def _numerical_jacobian(f: Callable[[np.ndarray], np.ndarray], x: np.ndarray,
                        fx: np.ndarray) -> np.ndarray:
    n = x.size
    m = fx.size
    jac = np.empty((m, n))
    for j in range(n):
        step = 1e-7 * max(1.0, abs(x[j]))
        xp = x.copy()
        xp[j] += step
        jac[:, j] = (np.asarray(f(xp), dtype=float) - fx) / step
    return jac


def solve_system(f: Callable[[np.ndarray], np.ndarray], x0: Sequence[float],
                 tol: float = 1e-10, max_iter: int = 100,
                 domain: Callable[[np.ndarray], bool] | None = None) -> RootSolveReport:
    """Solve f(x) = 0 by damped Newton with a numerical Jacobian.

    ``domain`` is an optional feasibility predicate; steps are halved until the
    iterate stays feasible.  If Newton stalls, a trust-region least-squares
    polish is attempted.  Non-convergence is always reported through the
    returned record, never raised silently.
    """
    x = np.asarray(x0, dtype=float).copy()
    if domain is not None and not domain(x):
        raise DomainError("solve_system: start point outside the domain")
    fx = np.asarray(f(x), dtype=float)
    best_x, best_norm = x.copy(), float(np.max(np.abs(fx)))
    iterations = 0
    for iterations in range(1, max_iter + 1):
        norm = float(np.max(np.abs(fx)))
        if norm <= tol:
            return RootSolveReport(x, norm, iterations - 1, True)
        jac = _numerical_jacobian(f, x, fx)
        try:
            step = np.linalg.solve(jac, -fx)
        except np.linalg.LinAlgError:
            step, *_ = np.linalg.lstsq(jac, -fx, rcond=None)
        if not np.all(np.isfinite(step)) or np.max(np.abs(step)) == 0.0:
            break
        # damping: halve until feasible and not worse
        lam = 1.0
        accepted = False
        for _ in range(60):
            xn = x + lam * step
            if domain is None or domain(xn):
                fn = np.asarray(f(xn), dtype=float)
                if np.all(np.isfinite(fn)) and float(np.max(np.abs(fn))) < norm:
                    x, fx = xn, fn
                    accepted = True
                    break
            lam *= 0.5
        if not accepted:
            break
        if float(np.max(np.abs(fx))) < best_norm:
            best_x, best_norm = x.copy(), float(np.max(np.abs(fx)))
    # trust-region fallback from the best iterate so far
    if best_norm > tol:
        def _safe(xv):
            if domain is not None and not domain(xv):
                return np.full_like(best_x, 1e6, dtype=float)[: np.asarray(f(best_x)).size]
            out = np.asarray(f(xv), dtype=float)
            return np.where(np.isfinite(out), out, 1e6)

        try:
            res = optimize.least_squares(_safe, best_x, method="trf", xtol=1e-14, ftol=1e-14, gtol=1e-14)
            rn = float(np.max(np.abs(_safe(res.x))))
            if rn < best_norm:
                best_x, best_norm = res.x, rn
            iterations += int(res.nfev)
        except Exception:
            pass
    return RootSolveReport(best_x, best_norm, iterations, best_norm <= tol)


def minimize_box(obj: Callable[[np.ndarray], float], x0: Sequence[float],
                 lower: Sequence[float], upper: Sequence[float],
                 tol: float = 1e-10, max_iter: int = 500,
                 method: str = "powell") -> np.ndarray:
    """Box-constrained local minimization; the returned point never does worse
    than the start."""
    x0 = np.asarray(x0, dtype=float)
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    if np.any(x0 < lower - 1e-12) or np.any(x0 > upper + 1e-12):
        raise DomainError("minimize_box: infeasible start point")
    bounds = list(zip(lower, upper))
    res = optimize.minimize(obj, np.clip(x0, lower, upper), method=method, bounds=bounds,
                            options={"maxiter": max_iter, "xtol": tol, "ftol": tol}
                            if method == "powell" else {"maxiter": max_iter})
    xbest = np.clip(res.x, lower, upper)
    if obj(xbest) > obj(x0):
        return x0.copy()
    return xbest


def check_gradient(f: Callable[[np.ndarray], float], grad: Callable[[np.ndarray], np.ndarray],
                   x: Sequence[float], rel_tol: float = 1e-5) -> bool:
    """Compare an analytic gradient against central finite differences."""
    x = np.asarray(x, dtype=float)
    g = np.asarray(grad(x), dtype=float)
    fd = np.empty_like(g)
    for j in range(x.size):
        h = 1e-6 * max(1.0, abs(x[j]))
        xp, xm = x.copy(), x.copy()
        xp[j] += h
        xm[j] -= h
        fd[j] = (f(xp) - f(xm)) / (2 * h)
    scale = np.maximum(np.abs(g), np.maximum(np.abs(fd), 1e-8))
    return bool(np.all(np.abs(g - fd) / scale <= rel_tol))
