"""Covariance spectra and Gaussian priors for the optimal parameter.

The data covariance ``H`` is taken diagonal without loss of generality
(Gaussian sketches are rotationally invariant), so a spectrum is just the
ordered sequence of its eigenvalues.  Two parametric families are supported:

* power law:        ``lambda_i = c * i**(-a)``
* log power law:    ``lambda_i = c * i**(-1) * log2(i + 1)**(-a)``

with decay degree ``a > 1`` so that the trace stays summable as the ambient
dimension grows, and ``c`` either 1 (raw) or the constant that scales the
trace to exactly 1.  All logarithms are base 2.

The optimal parameter ``w*`` is sampled coordinate-wise from a centered
Gaussian.  Under the isotropic prior every coordinate has unit variance;
under the source prior coordinate ``i`` has variance ``i**(a - b)`` so that
``lambda_i * E[w*_i^2] = i**(-b)`` before trace normalization.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

POWER_LAW = "power_law"
LOG_POWER_LAW = "log_power_law"
EXPLICIT = "explicit"

_KINDS = (POWER_LAW, LOG_POWER_LAW, EXPLICIT)

RngLike = Union[int, np.integer, np.random.Generator]


def as_generator(rng: RngLike) -> np.random.Generator:
    """Accept either an integer seed or an existing Generator."""
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(int(rng))


@dataclass(frozen=True, eq=False)
class Spectrum:
    """Ordered eigenvalues of the data covariance plus generation metadata."""

    eigenvalues: np.ndarray
    kind: str
    a: Optional[float] = None
    normalized: bool = False

    def __post_init__(self):
        values = np.asarray(self.eigenvalues, dtype=np.float64)
        if values.ndim != 1 or values.size == 0:
            raise ValueError("eigenvalues must be a non-empty 1-d sequence")
        if not np.all(np.isfinite(values)) or np.any(values <= 0.0):
            raise ValueError("eigenvalues must be finite and strictly positive")
        if np.any(np.diff(values) > 0.0):
            raise ValueError("eigenvalues must be non-increasing")
        if self.kind not in _KINDS:
            raise ValueError(f"unknown spectrum kind {self.kind!r}")
        if self.normalized and abs(values.sum() - 1.0) > 1e-12:
            raise ValueError("normalized spectrum must have unit trace")
        values = values.copy()
        values.setflags(write=False)
        object.__setattr__(self, "eigenvalues", values)

    @property
    def d(self) -> int:
        return int(self.eigenvalues.size)

    @property
    def trace(self) -> float:
        return float(self.eigenvalues.sum())

    def to_json(self, b: Optional[float] = None) -> str:
        """Serialize the generation metadata (not the raw eigenvalue list)."""
        return json.dumps(
            {
                "kind": self.kind,
                "d": self.d,
                "a": self.a,
                "b": b,
                "normalized": self.normalized,
                "trace": self.trace,
            }
        )


@dataclass(frozen=True)
class PriorSpec:
    """Second-moment specification for the Gaussian prior on ``w*``."""

    kind: str = "isotropic"
    b: Optional[float] = None

    def __post_init__(self):
        if self.kind not in ("isotropic", "source"):
            raise ValueError(f"unknown prior kind {self.kind!r}")
        if self.kind == "source":
            if self.b is None or self.b <= 1.0:
                raise ValueError("source prior requires decay degree b > 1")


def _check_power_args(d: int, a: float) -> None:
    if d < 1:
        raise ValueError("dimension d must be at least 1")
    if not a > 1.0:
        raise ValueError(f"decay degree must satisfy a > 1, got a={a} "
                         "(the trace diverges otherwise)")


def make_power_law(d: int, a: float, normalize: bool = False) -> Spectrum:
    """Spectrum with lambda_i = c * i**(-a), c = 1 or the unit-trace constant."""
    _check_power_args(d, a)
    values = np.arange(1, d + 1, dtype=np.float64) ** (-float(a))
    if normalize:
        values /= values.sum()
    return Spectrum(values, kind=POWER_LAW, a=float(a), normalized=bool(normalize))


def make_log_power_law(d: int, a: float, normalize: bool = False) -> Spectrum:
    """Spectrum with lambda_i = c * i**(-1) * log2(i + 1)**(-a)."""
    _check_power_args(d, a)
    idx = np.arange(1, d + 1, dtype=np.float64)
    values = idx ** (-1.0) * np.log2(idx + 1.0) ** (-float(a))
    if normalize:
        values /= values.sum()
    return Spectrum(values, kind=LOG_POWER_LAW, a=float(a), normalized=bool(normalize))


def explicit_spectrum(values) -> Spectrum:
    """Wrap an explicit eigenvalue list (validated, never normalized here)."""
    return Spectrum(np.asarray(values, dtype=np.float64), kind=EXPLICIT)


def load_explicit_csv(path) -> Spectrum:
    """Read an explicit spectrum from a one-column CSV of eigenvalues."""
    values = []
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if not row or not row[0].strip():
                continue
            if len(row) != 1:
                raise ValueError(f"{path}: expected one column, got {len(row)}")
            values.append(float(row[0]))
    if not values:
        raise ValueError(f"{path}: no eigenvalues found")
    return explicit_spectrum(values)


def prior_variances(spec: Spectrum, prior: PriorSpec) -> np.ndarray:
    """Per-coordinate second moments of ``w*`` under the given prior."""
    if prior.kind == "isotropic":
        return np.ones(spec.d)
    if spec.kind != POWER_LAW:
        raise ValueError(
            "source prior requires a power_law spectrum so that the "
            "coordinate variance i**(a-b) is meaningful"
        )
    idx = np.arange(1, spec.d + 1, dtype=np.float64)
    return idx ** (spec.a - prior.b)


def sample_prior(spec: Spectrum, prior: PriorSpec, rng: RngLike) -> np.ndarray:
    """Draw ``w*`` coordinate-wise from the centered Gaussian prior.

    Deterministic given an integer seed: the same seed yields a bit-identical
    vector.
    """
    gen = as_generator(rng)
    std = np.sqrt(prior_variances(spec, prior))
    return gen.standard_normal(spec.d) * std
