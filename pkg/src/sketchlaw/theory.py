"""Predicted rates, optimal stepsizes, and compute-optimal allocations.

Every asymptotic expression is evaluated with its hidden constant set to 1,
so the outputs are rate *shapes* for comparing against fitted curves and
never absolute risk predictions.

Regimes (decay degree a > 1 of the covariance spectrum, source degree b):

* power_law (isotropic prior):
  approx ~ M^(1-a), bias ~ (N_eff g)^((1-a)/a),
  variance ~ min{M, (N_eff g)^(1/a)} / N_eff,
  scaling-law exponents (a - 1, (a - 1)/a).
* source (anisotropic prior, matching for 1 < b < a + 1):
  approx ~ M^(1-b), bias ~ (N_eff g)^((1-b)/a), variance as above,
  exponents (b - 1, (b - 1)/a).  For b >= a + 1 the upper and lower bounds
  no longer match; rates are still reported but flagged.
* log_power_law: approx ~ log2(M)^(1-a), bias ~ log2(N_eff g)^(1-a),
  variance ~ min{M, N_eff g / log2(N_eff g)^a} / N_eff.

The averaged-iterate variant replaces N_eff = N / log2(N) by N everywhere.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np

POWER_LAW = "power_law"
SOURCE = "source"
LOG_POWER_LAW = "log_power_law"
_REGIMES = (POWER_LAW, SOURCE, LOG_POWER_LAW)

LAST_ITERATE = "last_iterate"
AVERAGED = "averaged"
_VARIANTS = (LAST_ITERATE, AVERAGED)


class NonMatchingRegimeError(ValueError):
    """Source tasks with b >= a + 1: upper and lower bounds do not match."""


def _effective_samples(N: int, variant: str) -> float:
    if variant == LAST_ITERATE:
        if N < 2:
            raise ValueError("last-iterate predictions require N >= 2")
        return N / np.log2(N)
    return float(N)


def _check_regime(regime: str, variant: str, a: float,
                  b: Optional[float]) -> None:
    if regime not in _REGIMES:
        raise ValueError(f"unknown regime {regime!r}")
    if variant not in _VARIANTS:
        raise ValueError(f"unknown variant {variant!r}")
    if not a > 1.0:
        raise ValueError("decay degree must satisfy a > 1")
    if regime == SOURCE and (b is None or not b > 1.0):
        raise ValueError("source regime requires decay degree b > 1")


@dataclass
class RatePrediction:
    """Unit-constant rate evaluations plus the predicted fit exponents."""

    regime: str
    variant: str
    a: float
    b: Optional[float]
    M: int
    N: int
    gamma0: float
    sigma2: float
    n_eff: float
    approx_rate: float
    bias_rate: float
    variance_rate: float
    exponents: tuple[float, float]
    matching: bool = True

    @property
    def excess_rate(self) -> float:
        """Leading-order excess shape (approximation + bias)."""
        return self.approx_rate + self.bias_rate

    def as_dict(self) -> dict:
        record = asdict(self)
        record["exponents"] = list(self.exponents)
        record["excess_rate"] = self.excess_rate
        return record


def predicted_rates(regime: str, variant: str, a: float,
                    b: Optional[float] = None, M: int = 1, N: int = 2,
                    gamma0: float = 1.0, sigma2: float = 0.0) -> RatePrediction:
    """Evaluate the predicted approximation/bias/variance shapes."""
    _check_regime(regime, variant, a, b)
    if M < 1 or gamma0 <= 0.0:
        raise ValueError("need M >= 1 and gamma0 > 0")
    n_eff = _effective_samples(N, variant)
    horizon = n_eff * gamma0
    matching = True

    if regime == POWER_LAW:
        approx = float(M) ** (1.0 - a)
        bias = horizon ** ((1.0 - a) / a)
        variance = min(float(M), horizon ** (1.0 / a)) / n_eff
        exponents = (a - 1.0, 1.0 - 1.0 / a)
    elif regime == SOURCE:
        matching = b < a + 1.0
        approx = float(M) ** (1.0 - b)
        bias = horizon ** ((1.0 - b) / a)
        variance = min(float(M), horizon ** (1.0 / a)) / n_eff
        exponents = (b - 1.0, (b - 1.0) / a)
    else:
        if horizon <= 1.0:
            raise ValueError("log regime requires n_eff * gamma0 > 1")
        log_h = np.log2(horizon)
        approx = np.log2(float(M)) ** (1.0 - a) if M > 1 else np.inf
        bias = log_h ** (1.0 - a)
        variance = min(float(M), horizon / log_h**a) / n_eff
        exponents = (a - 1.0, a - 1.0)  # exponents of log2(M), log2(N_eff g)

    return RatePrediction(
        regime=regime, variant=variant, a=float(a),
        b=None if b is None else float(b), M=int(M), N=int(N),
        gamma0=float(gamma0), sigma2=float(sigma2), n_eff=float(n_eff),
        approx_rate=float(approx), bias_rate=float(bias),
        variance_rate=float(variance), exponents=exponents, matching=matching,
    )


@dataclass
class StepsizeRule:
    """Either a single recommended stepsize or an equally-good interval."""

    kind: str  # "value" or "interval"
    value: Optional[float] = None
    lower: Optional[float] = None
    upper: Optional[float] = None

    def as_dict(self) -> dict:
        return asdict(self)


def optimal_stepsize(regime: str, a: float, b: Optional[float] = None,
                     M: int = 1, N: int = 2) -> StepsizeRule:
    """Risk-minimizing initial stepsize (unit constants).

    For the power-law and log-power-law regimes, and for source tasks with
    b <= a, gamma = 1 is optimal.  For easier source tasks (a < b < a + 1)
    the optimum is N_eff^(a/b - 1) once M >= N_eff^(1/b); below that any
    gamma in [M^a / N_eff, 1] is equally good.
    """
    _check_regime(regime, LAST_ITERATE, a, b)
    if regime != SOURCE or b <= a:
        return StepsizeRule(kind="value", value=1.0)
    if b >= a + 1.0:
        raise NonMatchingRegimeError(
            f"source tasks with b={b} >= a+1={a + 1.0} have non-matching "
            "bounds; no stepsize rule is predicted"
        )
    n_eff = _effective_samples(N, LAST_ITERATE)
    if M >= n_eff ** (1.0 / b):
        return StepsizeRule(kind="value", value=float(n_eff ** (a / b - 1.0)))
    lower = min(1.0, float(M) ** a / n_eff)
    return StepsizeRule(kind="interval", lower=lower, upper=1.0)


def compute_optimal_allocation(C: float, exponent: float) -> tuple[int, int, float]:
    """Split a compute budget C = M * N into (M, N, gamma).

    M = C^(1/(e+1)) and N = C^(e/(e+1)) with e the decay degree (a for the
    isotropic prior, b for easy source tasks), rounded to integers with
    M * N <= C.  Log factors are absorbed into the unit constants, and the
    recommended stepsize is the unit-constant optimum gamma = 1.
    """
    if C <= 1.0:
        raise ValueError("compute budget must exceed 1")
    if not exponent > 1.0:
        raise ValueError("allocation requires a decay degree exponent > 1")
    M = max(1, round(C ** (1.0 / (exponent + 1.0))))
    N = max(1, round(C ** (exponent / (exponent + 1.0))))
    while M * N > C and N > 1:
        N -= 1
    return M, N, 1.0
