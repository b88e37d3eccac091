"""Gaussian sketches of the covariance and their spectral diagnostics.

A sketch ``S`` is an M x d matrix with i.i.d. ``N(0, 1/M)`` entries.  The
compressed problem is governed by the sketched covariance ``S H S^T``: its
eigenvalues ``lt_1 >= ... >= lt_M``, its eigenbasis ``U``, and the optimal
sketched parameter ``v* = (S H S^T)^{-1} S H w*``.  Everything here is
computed through the M x d Gram factor ``B = S H^{1/2}`` (cost
``O(M^2 d + M^3)``), never through the d x d operator.

The concentration diagnostics compare the observed sketched eigenvalues with
their predictions: ``mu_j(S H S^T)`` tracks ``lambda_j`` itself under a power
law, and follows a two-regime profile (power law up to the boundary index
``k_M = min{k : k log2 k >= M}``, flat at ``M^{-1} log2(M)^{1-a}`` beyond)
under a log power law.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .spectrum import (
    EXPLICIT,
    LOG_POWER_LAW,
    POWER_LAW,
    RngLike,
    Spectrum,
    as_generator,
)

try:  # dsyrk halves the flops of the Gram product; fall back to plain GEMM
    from scipy.linalg.blas import dsyrk as _dsyrk
except ImportError:  # pragma: no cover
    _dsyrk = None


class SingularModelError(RuntimeError):
    """Raised when S H S^T is numerically singular and v* cannot be formed."""


def _gram(B: np.ndarray) -> np.ndarray:
    """B @ B.T with only the lower triangle guaranteed to be filled."""
    if _dsyrk is not None:
        return _dsyrk(1.0, B, lower=1)
    return B @ B.T


def _eigh_descending(gram_lower: np.ndarray):
    vals, vecs = np.linalg.eigh(gram_lower, UPLO="L")
    return vals[::-1].copy(), vecs[:, ::-1].copy()


@dataclass(frozen=True, eq=False)
class SketchMatrix:
    """An M x d Gaussian sketch with entry variance 1/M."""

    entries: np.ndarray
    seed: Optional[int] = None

    def __post_init__(self):
        entries = np.asarray(self.entries, dtype=np.float64)
        if entries.ndim != 2:
            raise ValueError("sketch entries must form a matrix")
        entries = entries.copy()
        entries.setflags(write=False)
        object.__setattr__(self, "entries", entries)

    @property
    def M(self) -> int:
        return int(self.entries.shape[0])

    @property
    def d(self) -> int:
        return int(self.entries.shape[1])


def sample_sketch(M: int, d: int, rng: RngLike) -> SketchMatrix:
    """Draw an M x d sketch with i.i.d. N(0, 1/M) entries.

    Requires ``M <= d``: the sketched covariance S H S^T is invertible only
    when the covariance rank is at least M.
    """
    if M < 1:
        raise ValueError("sketch size M must be at least 1")
    if M > d:
        raise ValueError(
            f"sketch size M={M} exceeds ambient dimension d={d}; "
            "S H S^T would be rank deficient"
        )
    seed = int(rng) if not isinstance(rng, np.random.Generator) else None
    gen = as_generator(rng)
    entries = gen.standard_normal((M, d)) / np.sqrt(M)
    return SketchMatrix(entries=entries, seed=seed)


@dataclass(eq=False)
class SketchedModel:
    """Eigen-data of S H S^T together with the rotated optimal parameter.

    ``eigenvalues`` are the sketched covariance eigenvalues in non-increasing
    order, ``basis`` the orthogonal eigenvector matrix U (columns), and
    ``v_star`` the optimal sketched parameter expressed in that eigenbasis,
    i.e. ``U^T (S H S^T)^{-1} S H w*``.  ``approx_error`` is the exact
    approximation error, computed from the d-dimensional residual
    ``||H^{1/2} w* - H^{1/2} S^T v*||^2`` (numerically stable when it is far
    below ``||w*||_H^2``).  ``sq_eigenvalues`` are the eigenvalues of
    S H^2 S^T, used by the lower-bound diagnostics.
    """

    eigenvalues: np.ndarray
    basis: np.ndarray
    v_star: np.ndarray
    approx_error: float
    sq_eigenvalues: np.ndarray
    spectrum: Spectrum
    sketch: SketchMatrix
    w_star: np.ndarray

    @property
    def M(self) -> int:
        return int(self.eigenvalues.size)

    @property
    def h_norm_w_star_sq(self) -> float:
        """||w*||_H^2, the almost-sure upper bound on the approximation error."""
        return float(self.spectrum.eigenvalues @ (self.w_star**2))


def build_model(S: SketchMatrix, spec: Spectrum, w_star: np.ndarray) -> SketchedModel:
    """Assemble the sketched model for a given sketch, spectrum and w*."""
    w_star = np.asarray(w_star, dtype=np.float64)
    if S.d != spec.d or w_star.shape != (spec.d,):
        raise ValueError(
            f"dimension mismatch: sketch d={S.d}, spectrum d={spec.d}, "
            f"w* shape {w_star.shape}"
        )
    lam = spec.eigenvalues
    sqrt_lam = np.sqrt(lam)
    B = S.entries * sqrt_lam  # S H^{1/2}, M x d

    eigvals, basis = _eigh_descending(_gram(B))
    top = eigvals[0]
    if eigvals[-1] < -1e-12 * top:
        raise SingularModelError(
            f"S H S^T has a negative eigenvalue beyond round-off "
            f"(M={S.M}, d={spec.d}, spectrum={spec.kind})"
        )
    eigvals = np.maximum(eigvals, 0.0)  # clip round-off negatives, PSD by construction
    if eigvals[-1] < 1e-14 * top:
        raise SingularModelError(
            f"S H S^T is numerically singular (M={S.M}, d={spec.d}, "
            f"spectrum={spec.kind}): smallest eigenvalue below 1e-14 of largest"
        )

    # v* solves (S H S^T) v = S H w*; in the eigenbasis the solve is diagonal.
    rhs = B @ (sqrt_lam * w_star)  # S H w*
    v_star = (basis.T @ rhs) / eigvals

    # Residual form of the approximation error, in the ambient space.
    residual = sqrt_lam * w_star - B.T @ (basis @ v_star)
    approx_error = float(residual @ residual)

    sq_eigvals = _eigh_descending(_gram(S.entries * lam))[0]
    sq_eigvals = np.maximum(sq_eigvals, 0.0)

    return SketchedModel(
        eigenvalues=eigvals,
        basis=basis,
        v_star=v_star,
        approx_error=approx_error,
        sq_eigenvalues=sq_eigvals,
        spectrum=spec,
        sketch=S,
        w_star=w_star,
    )


def log_regime_boundary(M: int) -> int:
    """Smallest k >= 1 with k * log2(k) >= M (head/tail split of the profile)."""
    if M < 1:
        raise ValueError("M must be positive")
    k = 1
    while k * np.log2(k) < M:
        k += 1
    return k


@dataclass(eq=False)
class ConcentrationReport:
    """Per-index comparison of sketched eigenvalues with their prediction.

    ``ratio[j-1] = eigenvalue_j / predicted_j``.  For a log-power-law model
    the report also carries the same comparison for the eigenvalues of
    S H^2 S^T against ``c^2 j^{-2} log2(j+1)^{-2a}``.
    """

    kind: str
    M: int
    a: float
    index: np.ndarray
    eigenvalue: np.ndarray
    predicted: np.ndarray
    ratio: np.ndarray
    max_min_ratio: float
    boundary: Optional[int] = None
    sq_eigenvalue: Optional[np.ndarray] = None
    sq_predicted: Optional[np.ndarray] = None
    sq_ratio: Optional[np.ndarray] = None


def concentration_report(model: SketchedModel) -> ConcentrationReport:
    """Compare the sketched spectrum against its theoretical profile."""
    spec = model.spectrum
    if spec.kind == EXPLICIT:
        raise ValueError("explicit spectra carry no eigenvalue prediction to check")
    M = model.M
    a = spec.a
    scale = float(spec.eigenvalues[0])  # leading constant c of the family
    j = np.arange(1, M + 1, dtype=np.float64)

    boundary = None
    sq_eig = sq_pred = sq_ratio = None
    if spec.kind == POWER_LAW:
        predicted = scale * j ** (-a)
    else:
        assert spec.kind == LOG_POWER_LAW
        boundary = log_regime_boundary(M)
        predicted = np.where(
            j <= boundary,
            scale * j ** (-1.0) * np.log2(j + 1.0) ** (-a),
            scale * np.log2(float(M)) ** (1.0 - a) / M,
        )
        sq_eig = model.sq_eigenvalues
        sq_pred = scale**2 * j ** (-2.0) * np.log2(j + 1.0) ** (-2.0 * a)
        sq_ratio = sq_eig / sq_pred

    ratio = model.eigenvalues / predicted
    return ConcentrationReport(
        kind=spec.kind,
        M=M,
        a=a,
        index=j.astype(np.int64),
        eigenvalue=model.eigenvalues.copy(),
        predicted=predicted,
        ratio=ratio,
        max_min_ratio=float(ratio.max() / ratio.min()),
        boundary=boundary,
        sq_eigenvalue=sq_eig,
        sq_predicted=sq_pred,
        sq_ratio=sq_ratio,
    )


def write_concentration_csv(report: ConcentrationReport, path_or_file) -> None:
    """Emit the report as CSV with columns (j, eigenvalue, predicted, ratio)."""

    def _write(fh) -> None:
        writer = csv.writer(fh)
        writer.writerow(["j", "eigenvalue", "predicted", "ratio"])
        for i in range(report.M):
            writer.writerow(
                [
                    int(report.index[i]),
                    repr(float(report.eigenvalue[i])),
                    repr(float(report.predicted[i])),
                    repr(float(report.ratio[i])),
                ]
            )

    if isinstance(path_or_file, io.TextIOBase):
        _write(path_or_file)
    else:
        with open(path_or_file, "w", newline="") as fh:
            _write(fh)


def tail_ratio(S: SketchMatrix, spec: Spectrum, k: int) -> float:
    """Eigenvalue ratio mu_{ceil(M/2)} / mu_M of the tail Gram S_{k:} H_{k:} S_{k:}^T.

    ``S_{k:}`` drops the first k columns of the sketch.  The theory predicts
    the ratio stays bounded by a spectrum-dependent constant, uniformly in k.
    """
    if k < 0:
        raise ValueError("k must be non-negative")
    M, d = S.M, S.d
    if d - k < M:
        raise ValueError(
            f"insufficient tail rank: d - k = {d - k} < M = {M}, "
            "the tail Gram would be singular"
        )
    tail = S.entries[:, k:] * np.sqrt(spec.eigenvalues[k:])
    eigvals = np.linalg.eigvalsh(_gram(tail), UPLO="L")[::-1]
    mid = int(np.ceil(M / 2))
    return float(eigvals[mid - 1] / eigvals[M - 1])


def model_summary(model: SketchedModel, head: int = 8, tail: int = 8) -> dict:
    """JSON-ready summary: sizes, seed, approximation error, spectrum edges."""
    eig = model.eigenvalues
    return {
        "M": model.M,
        "d": model.spectrum.d,
        "seed": model.sketch.seed,
        "approx_error": model.approx_error,
        "eigenvalues_head": [float(x) for x in eig[:head]],
        "eigenvalues_tail": [float(x) for x in eig[-tail:]],
    }
