"""Scaling-law surface fits and log-log slopes for Monte Carlo risk estimates.

The joint fit minimizes a Huber loss on log-space residuals,

    sum_k huber_delta( log(R_k) - log(sigma2 + c1 * M_k^-a1 + c2 * x_k^-a2) ),

over (log c1, a1, log c2, a2), optionally also log sigma2.  The optimizer is
a derivative-free Nelder-Mead simplex restarted from a coarse grid of
exponent initializers; each start gets at most 10^4 evaluations and the
objective tolerance is 1e-10.  The second coordinate ``x`` is whatever the
caller supplies -- the raw sample count or the effective sample size.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import minimize

_EXPONENT_STARTS = (0.25, 0.5, 0.75, 1.0, 1.25, 1.5, 1.75, 2.0)
_MAX_EVALS = 10_000
_OBJECTIVE_TOL = 1e-10


@dataclass
class FitResult:
    c1: float
    a1: float
    c2: float
    a2: float
    sigma2: float
    sigma2_fitted: bool
    loss: float
    n_points: int
    converged: bool
    excluded_diverged: int = 0

    def as_dict(self) -> dict:
        return asdict(self)


class FitConvergenceError(RuntimeError):
    """No restart converged; carries the best parameters seen so far."""

    def __init__(self, message: str, best: FitResult):
        super().__init__(message)
        self.best = best


def _huber(residuals: np.ndarray, delta: float) -> np.ndarray:
    abs_r = np.abs(residuals)
    quadratic = 0.5 * residuals**2
    linear = delta * (abs_r - 0.5 * delta)
    return np.where(abs_r <= delta, quadratic, linear)


def _prepare(records: Sequence) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    arr = np.asarray([(float(m), float(x), float(r)) for m, x, r in records])
    if arr.size == 0:
        raise ValueError("no records to fit")
    M, x, risk = arr[:, 0], arr[:, 1], arr[:, 2]
    if np.any(M <= 0) or np.any(x <= 0):
        raise ValueError("model and sample sizes must be positive")
    if np.any(~np.isfinite(risk)) or np.any(risk <= 0):
        raise ValueError("risks must be finite and positive")
    return M, x, risk


def _initial_coeffs(M, x, risk, sigma2, a1, a2):
    """Non-negative least-squares seed for (c1, c2) at fixed exponents."""
    design = np.column_stack([M ** (-a1), x ** (-a2)])
    target = np.maximum(risk - sigma2, 1e-12)
    coef, *_ = np.linalg.lstsq(design, target, rcond=None)
    return np.maximum(coef, 1e-8)


def chinchilla_fit(records: Sequence, sigma2: Optional[float] = None,
                   delta: float = 1e-3,
                   excluded_diverged: int = 0) -> FitResult:
    """Fit risk ~ sigma2 + c1 * M^-a1 + c2 * x^-a2 to (M, x, mean risk) triples.

    ``sigma2`` fixes the irreducible level when given; passing ``None``
    switches to the free-sigma2 mode in which log sigma2 joins the search.
    Needs at least 6 distinct (M, x) points, and every risk must exceed a
    fixed sigma2.
    """
    M, x, risk = _prepare(records)
    if len({(m, n) for m, n in zip(M, x)}) < 6:
        raise ValueError("need at least 6 distinct (M, x) points")
    fit_sigma2 = sigma2 is None
    if not fit_sigma2:
        bad = risk <= sigma2
        if np.any(bad):
            k = int(np.argmax(bad))
            raise ValueError(
                f"risk {risk[k]!r} at (M={M[k]:g}, x={x[k]:g}) does not exceed "
                f"the fixed irreducible level sigma2={sigma2!r}"
            )
    log_risk = np.log(risk)

    def objective(params: np.ndarray) -> float:
        log_c1, a1, log_c2, a2 = params[:4]
        if a1 < 0.0 or a2 < 0.0:
            return np.inf
        s2 = np.exp(params[4]) if fit_sigma2 else sigma2
        with np.errstate(over="ignore"):
            pred = s2 + np.exp(log_c1) * M ** (-a1) + np.exp(log_c2) * x ** (-a2)
        if not np.all(np.isfinite(pred)):
            return np.inf
        return float(np.sum(_huber(log_risk - np.log(pred), delta)))

    sigma2_seed = 0.5 * float(risk.min()) if fit_sigma2 else sigma2
    best_x = None
    best_loss = np.inf
    for a1_start in _EXPONENT_STARTS:
        for a2_start in _EXPONENT_STARTS:
            c1, c2 = _initial_coeffs(M, x, risk, sigma2_seed, a1_start, a2_start)
            p0 = [np.log(c1), a1_start, np.log(c2), a2_start]
            if fit_sigma2:
                p0.append(np.log(sigma2_seed))
            result = minimize(
                objective, np.asarray(p0), method="Nelder-Mead",
                options={"maxfev": _MAX_EVALS, "fatol": _OBJECTIVE_TOL,
                         "xatol": 1e-8},
            )
            if np.isfinite(result.fun) and result.fun < best_loss:
                best_loss = float(result.fun)
                best_x = result.x

    converged = bool(best_x is not None and np.isfinite(best_loss))
    if converged:
        # Polish: restart the simplex at the optimum until it stops moving,
        # so refitting from the returned parameters is a no-op.
        for _ in range(5):
            result = minimize(
                objective, best_x, method="Nelder-Mead",
                options={"maxfev": _MAX_EVALS, "fatol": _OBJECTIVE_TOL,
                         "xatol": 1e-10},
            )
            moved = float(np.max(np.abs(result.x - best_x)))
            if result.fun <= best_loss:
                best_loss = float(result.fun)
                best_x = result.x
            if moved < 1e-9:
                break

    if best_x is None:
        raise FitConvergenceError(
            "no restart produced a finite objective",
            FitResult(np.nan, np.nan, np.nan, np.nan,
                      sigma2 if sigma2 is not None else np.nan,
                      fit_sigma2, np.inf, len(records), False,
                      excluded_diverged),
        )

    fitted = FitResult(
        c1=float(np.exp(best_x[0])),
        a1=float(best_x[1]),
        c2=float(np.exp(best_x[2])),
        a2=float(best_x[3]),
        sigma2=float(np.exp(best_x[4])) if fit_sigma2 else float(sigma2),
        sigma2_fitted=fit_sigma2,
        loss=best_loss,
        n_points=len(records),
        converged=converged,
        excluded_diverged=int(excluded_diverged),
    )
    if not converged:
        raise FitConvergenceError("optimizer failed to converge", fitted)
    return fitted


def loglog_slope(records: Sequence, sigma2: float) -> tuple[float, float]:
    """Least-squares slope of log2(risk - sigma2) against log2(x).

    Returns (slope, standard error); with exactly two points the slope is the
    finite difference and the standard error is reported as infinite.  Any
    record with risk <= sigma2 is an error naming the offending point.
    """
    arr = np.asarray([(float(x), float(r)) for x, r in records])
    if arr.shape[0] < 2:
        raise ValueError("need at least 2 points for a slope")
    x, risk = arr[:, 0], arr[:, 1]
    excess = risk - sigma2
    if np.any(excess <= 0.0):
        k = int(np.argmax(excess <= 0.0))
        raise ValueError(
            f"excess risk estimate non-positive at x={x[k]:g}: "
            f"risk {risk[k]!r} <= sigma2 {sigma2!r}"
        )
    lx = np.log2(x)
    ly = np.log2(excess)
    n = lx.size
    sxx = float(np.sum((lx - lx.mean()) ** 2))
    if sxx == 0.0:
        raise ValueError("all x values coincide; slope undefined")
    slope = float(np.sum((lx - lx.mean()) * (ly - ly.mean())) / sxx)
    if n == 2:
        return slope, float("inf")
    resid = ly - (ly.mean() + slope * (lx - lx.mean()))
    stderr = float(np.sqrt(np.sum(resid**2) / (n - 2) / sxx))
    return slope, stderr
