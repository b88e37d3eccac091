"""Exact population risk and its closed-form decomposition.

For a sketched parameter ``v`` (in the eigenbasis of S H S^T) the population
risk splits orthogonally as

    Risk(v) = sigma^2 + approx_error + ||v - v*||^2_{Lt},

where ``Lt`` is the diagonal of sketched eigenvalues.  The excess-risk part
admits closed forms for one-pass SGD started at zero:

* bias:      sum_i lt_i v*_i^2 prod_t (1 - gamma_t lt_i)^2
* variance:  D_eff / N_eff  with
  D_eff = #{lt_j >= 1/(N_eff gamma)} + (N_eff gamma)^2 * sum_{lt_j below} lt_j^2

with ``N_eff = N / log2(N)`` for geometric decay and ``N_eff = N`` for
constant-stepsize averaging.  The general upper/lower bound terms used to
sandwich measured quantities are evaluated here verbatim, term by term.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from itertools import groupby
from typing import Optional

import numpy as np

from .sgd import CONSTANT, GEOMETRIC_DECAY, StepsizeSchedule
from .sketch import SketchedModel, tail_ratio

logger = logging.getLogger(__name__)


def effective_sample_size(N: int, schedule_kind: str) -> float:
    """N / log2(N) under geometric decay, N under constant-step averaging."""
    if schedule_kind == GEOMETRIC_DECAY:
        if N < 2:
            raise ValueError("geometric decay requires N >= 2")
        return float(N / np.log2(N))
    if schedule_kind == CONSTANT:
        return float(N)
    raise ValueError(f"unknown schedule kind {schedule_kind!r}")


@dataclass
class RiskReport:
    """One decomposition record for a (model, schedule, sigma2) triple."""

    sigma2: float
    approx_error: float
    bias_cf: float
    variance_cf: float
    d_eff: float
    n_eff: float
    empirical_excess: Optional[float] = None
    total: Optional[float] = None
    stepsize_ok: bool = True


def population_risk(model: SketchedModel, v: np.ndarray, sigma2: float) -> float:
    """sigma^2 + approx_error + ||v - v*||^2_{Lt} for v in the eigenbasis."""
    v = np.asarray(v, dtype=np.float64)
    if v.shape != (model.M,):
        raise ValueError(f"parameter has shape {v.shape}, expected ({model.M},)")
    diff = v - model.v_star
    return float(sigma2 + model.approx_error + model.eigenvalues @ (diff * diff))


def population_risk_direct(model: SketchedModel, v: np.ndarray,
                           sigma2: float) -> float:
    """Ambient-space form sigma^2 + ||H^{1/2}(S^T U v - w*)||^2.

    Agrees with :func:`population_risk` up to round-off; kept as an
    independent cross-check of the orthogonal decomposition.
    """
    v = np.asarray(v, dtype=np.float64)
    if v.shape != (model.M,):
        raise ValueError(f"parameter has shape {v.shape}, expected ({model.M},)")
    sqrt_lam = np.sqrt(model.spectrum.eigenvalues)
    v_ambient = model.basis @ v
    residual = sqrt_lam * (model.sketch.entries.T @ v_ambient) - sqrt_lam * model.w_star
    return float(sigma2 + residual @ residual)


def _phase_runs(values: np.ndarray):
    """Collapse the schedule into (stepsize, repeat count) runs."""
    return [(g, sum(1 for _ in grp)) for g, grp in groupby(values)]


def bias_closed_form(model: SketchedModel, schedule: StepsizeSchedule) -> float:
    """sum_i lt_i v*_i^2 prod_t (1 - gamma_t lt_i)^2.

    The product is accumulated in log-magnitude space per stepsize phase
    (squaring removes the sign), which avoids underflow at large N.
    Coordinates with |1 - gamma lt_i| > 1 grow instead of contracting; they
    are kept in the sum and counted in a warning.
    """
    lam = model.eigenvalues
    log_mag = np.zeros(model.M)
    divergent = np.zeros(model.M, dtype=bool)
    with np.errstate(divide="ignore"):
        for gamma, count in _phase_runs(schedule.values):
            factor = np.abs(1.0 - gamma * lam)
            divergent |= factor > 1.0
            log_mag += count * np.log(factor)
    n_divergent = int(divergent.sum())
    if n_divergent:
        logger.warning(
            "bias product has %d divergent coordinate(s) with |1 - gamma*eig| > 1",
            n_divergent,
        )
    with np.errstate(over="ignore"):
        contraction = np.exp(2.0 * log_mag)
    return float(np.sum(lam * model.v_star**2 * contraction))


def variance_closed_form(eigvals: np.ndarray, n_eff: float,
                         gamma0: float) -> tuple[float, float]:
    """Return (variance, d_eff) for the given sketched eigenvalues.

    The head set uses an inclusive threshold, ``lt_j >= 1/(n_eff * gamma)``.
    """
    if n_eff <= 0.0:
        raise ValueError("effective sample size must be positive")
    if gamma0 < 0.0:
        raise ValueError("stepsize must be non-negative")
    eigvals = np.asarray(eigvals, dtype=np.float64)
    if gamma0 == 0.0:
        return 0.0, 0.0
    threshold = 1.0 / (n_eff * gamma0)
    head = eigvals >= threshold
    d_eff = float(head.sum() + (n_eff * gamma0) ** 2 * np.sum(eigvals[~head] ** 2))
    return d_eff / float(n_eff), d_eff


def decompose(model: SketchedModel, schedule: StepsizeSchedule, sigma2: float,
              empirical_excess: Optional[float] = None,
              stepsize_constant: float = 4.0) -> RiskReport:
    """Assemble the full risk report for one (model, schedule) pair.

    ``stepsize_ok`` flags whether gamma stays below
    ``1 / (stepsize_constant * tr(S H S^T))``; the constant defaults to 4 and
    is exposed because only its order is pinned by the theory.
    """
    n_eff = effective_sample_size(schedule.N, schedule.kind)
    bias = bias_closed_form(model, schedule)
    variance, d_eff = variance_closed_form(model.eigenvalues, n_eff,
                                           schedule.gamma0)
    trace = float(model.eigenvalues.sum())
    stepsize_ok = schedule.gamma0 <= 1.0 / (stepsize_constant * trace)
    total = None
    if empirical_excess is not None:
        total = sigma2 + model.approx_error + empirical_excess
    return RiskReport(
        sigma2=float(sigma2),
        approx_error=model.approx_error,
        bias_cf=bias,
        variance_cf=variance,
        d_eff=d_eff,
        n_eff=n_eff,
        empirical_excess=empirical_excess,
        total=total,
        stepsize_ok=stepsize_ok,
    )


@dataclass
class GeneralBoundTerms:
    """Individually evaluated terms of the general risk bounds.

    Upper bounds (valid for any k1, k2 <= M/3):

    * approx_upper = ||w*_{k1:}||^2_{H_{k1:}}
      + (sum_{i>k1} lambda_i / M + lambda_{k1+1}
      + sqrt(sum_{i>k1} lambda_i^2 / M)) * ||w*_{:k1}||^2
    * bias_upper = ||w*_{:k2}||^2 / (n_eff gamma) * tail_ratio(k2)^2
      + ||w*_{k2:}||^2_{H_{k2:}}

    Lower bounds:

    * approx_lower = sum_{i=M}^{d} lambda_i   (1-indexed, inclusive)
    * bias_lower = sum over {i : lt_i < 1/(n_eff gamma)} of
      mu_i(S H^2 S^T) / mu_i(S H S^T)
    """

    approx_upper: float
    bias_upper: float
    approx_lower: float
    bias_lower: float
    k1: int
    k2: int
    tail_eigenvalue_ratio: float


def general_bound_terms(model: SketchedModel, w_star: np.ndarray, k1: int,
                        k2: int, n_eff: float,
                        gamma0: float) -> GeneralBoundTerms:
    """Evaluate each displayed term of the general upper and lower bounds."""
    w_star = np.asarray(w_star, dtype=np.float64)
    M = model.M
    lam = model.spectrum.eigenvalues
    d = lam.size
    if w_star.shape != (d,):
        raise ValueError(f"w* has shape {w_star.shape}, expected ({d},)")
    if not 0 <= k1 <= M / 3:
        raise ValueError(f"approximation split k1={k1} violates 0 <= k1 <= M/3")
    if not 0 <= k2 <= M / 3:
        raise ValueError(f"bias split k2={k2} violates 0 <= k2 <= M/3")
    if n_eff <= 0.0 or gamma0 <= 0.0:
        raise ValueError("bias terms require positive n_eff and gamma")
    if M > d:
        raise ValueError("lower approximation sum needs rank(H) >= M")

    tail1 = lam[k1:]
    approx_upper = float(
        tail1 @ (w_star[k1:] ** 2)
        + (tail1.sum() / M + lam[k1] + np.sqrt(np.sum(tail1**2) / M))
        * np.sum(w_star[:k1] ** 2)
    )

    ratio = tail_ratio(model.sketch, model.spectrum, k2)
    bias_upper = float(
        np.sum(w_star[:k2] ** 2) / (n_eff * gamma0) * ratio**2
        + lam[k2:] @ (w_star[k2:] ** 2)
    )

    approx_lower = float(lam[M - 1:].sum())

    below = model.eigenvalues < 1.0 / (n_eff * gamma0)
    with np.errstate(divide="ignore", invalid="ignore"):
        quotient = model.sq_eigenvalues / model.eigenvalues
    bias_lower = float(np.sum(quotient[below]))

    return GeneralBoundTerms(
        approx_upper=approx_upper,
        bias_upper=bias_upper,
        approx_lower=approx_lower,
        bias_lower=bias_lower,
        k1=int(k1),
        k2=int(k2),
        tail_eigenvalue_ratio=float(ratio),
    )
