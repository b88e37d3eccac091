"""One-pass SGD on sketched covariates: fast eigenbasis path and direct oracle.

The recursion is ``v_t = v_{t-1} - gamma_t (z_t^T v_{t-1} - y_t) z_t`` with
``v_0 = 0``, where ``z_t`` is the sketched covariate expressed in the
eigenbasis of S H S^T.  Conditional on the sketch, ``z_t`` has independent
``N(0, lt_i)`` coordinates and ``y_t = z_t^T v* + eps_t`` with
``eps_t ~ N(0, sigma^2 + approx_error)``: the sketched problem is exactly a
well-specified Gaussian regression whose noise floor includes the
approximation error.  The fast path samples that law directly at O(M) per
step; the direct path draws d-dimensional covariates, applies the sketch
explicitly, rotates the innovations into the eigenbasis, and then runs the
identical kernel.  Feeding both paths the same pre-rotated innovation
sequence therefore yields bit-identical outcomes.

Stepsize schedules: geometric decay halves the stepsize at each of log2(N)
equal-length phases, ``gamma_t = gamma / 2**floor(t / (N / log2(N)))``;
the constant schedule keeps ``gamma`` throughout (used with iterate
averaging).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .sketch import SketchedModel, SketchMatrix, build_model
from .spectrum import RngLike, Spectrum, as_generator

GEOMETRIC_DECAY = "geometric_decay"
CONSTANT = "constant"

LAST_ITERATE_VARIANT = "last_iterate"
AVERAGED_VARIANT = "averaged"

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_STREAM_TAGS = {"sketch": 1, "prior": 2, "data": 3}

# Innovation matrices larger than this many entries are drawn in blocks.
_MAX_BLOCK_ENTRIES = 1 << 22


def _splitmix64(x: int) -> int:
    x = (x + _GOLDEN) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


def trial_seed(master_seed: int, trial: int, stream: str) -> int:
    """Stable 64-bit mix of (master seed, trial index, stream tag).

    Any single trial is replayable in isolation by re-deriving its three
    stream seeds (sketch, prior, data) from the master seed.
    """
    if stream not in _STREAM_TAGS:
        raise ValueError(f"unknown stream {stream!r}; expected one of "
                         f"{sorted(_STREAM_TAGS)}")
    s = _splitmix64(int(master_seed) & _MASK64)
    s = _splitmix64(s ^ (((trial + 1) * _GOLDEN) & _MASK64))
    s = _splitmix64(s ^ ((_STREAM_TAGS[stream] * 0xD6E8FEB86659FD93) & _MASK64))
    return s


@dataclass(frozen=True, eq=False)
class StepsizeSchedule:
    """Per-step stepsizes, exactly as generated by the named rule."""

    gamma0: float
    N: int
    kind: str
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.shape != (self.N,):
            raise ValueError("schedule must hold one stepsize per step")
        if np.any(values < 0.0) or np.any(np.diff(values) > 0.0):
            raise ValueError("stepsizes must be non-negative and non-increasing")
        values = values.copy()
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def n_eff(self) -> float:
        """Effective sample size: N / log2(N) under decay, N when constant."""
        if self.kind == GEOMETRIC_DECAY:
            return self.N / np.log2(self.N)
        return float(self.N)


def geometric_schedule(gamma0: float, N: int) -> StepsizeSchedule:
    """Geometrically decaying stepsizes gamma / 2**floor(t / (N / log2 N)).

    ``gamma0 = 0`` is allowed as a degenerate no-update schedule.  N must be
    at least 2 so that log2(N) is positive.
    """
    if N < 2:
        raise ValueError("geometric decay requires N >= 2")
    if gamma0 < 0.0:
        raise ValueError("stepsize must be non-negative")
    t = np.arange(1, N + 1, dtype=np.float64)
    ell = np.floor(t * np.log2(N) / N)
    values = gamma0 / np.exp2(ell)
    return StepsizeSchedule(gamma0=float(gamma0), N=int(N),
                            kind=GEOMETRIC_DECAY, values=values)


def constant_schedule(gamma0: float, N: int) -> StepsizeSchedule:
    if N < 1:
        raise ValueError("need at least one step")
    if gamma0 < 0.0:
        raise ValueError("stepsize must be non-negative")
    values = np.full(N, float(gamma0))
    return StepsizeSchedule(gamma0=float(gamma0), N=int(N),
                            kind=CONSTANT, values=values)


@dataclass(frozen=True, eq=False)
class SGDOutcome:
    """Final (or averaged) parameter in the eigenbasis and its excess risk.

    ``diverged`` records the stepsize-instability condition
    ``gamma_1 * lt_1 >= 2`` (or a non-finite excess risk); such runs complete
    and are kept so that downstream fits can exclude them explicitly.
    """

    final_param: np.ndarray
    excess_risk: float
    path: str
    seed: Optional[int] = None
    diverged: bool = False


def _excess_risk(model: SketchedModel, v: np.ndarray) -> float:
    diff = v - model.v_star
    return float(model.eigenvalues @ (diff * diff))


def _kernel(z: np.ndarray, y: np.ndarray, gammas: np.ndarray,
            average: bool) -> np.ndarray:
    """Shared rank-one update loop; returns v_N or the mean of v_0..v_{N-1}."""
    N, M = z.shape
    v = np.zeros(M)
    acc = np.zeros(M) if average else None
    for t in range(N):
        if average:
            acc += v
        zt = z[t]
        v += (gammas[t] * (y[t] - zt @ v)) * zt
    if average:
        return acc / N
    return v


def run_from_innovations(model: SketchedModel, z: np.ndarray, y: np.ndarray,
                         schedule: StepsizeSchedule, average: bool = False,
                         path: str = "fast",
                         seed: Optional[int] = None) -> SGDOutcome:
    """Run the recursion on an explicit pre-rotated innovation sequence.

    ``z`` has shape (N, M) in the model eigenbasis and ``y`` shape (N,).
    Both named run paths reduce to this function, which makes their
    bit-level equivalence checkable.
    """
    z = np.asarray(z, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if z.shape != (schedule.N, model.M) or y.shape != (schedule.N,):
        raise ValueError("innovation shapes must match (N, M) and (N,)")
    final = _kernel(z, y, schedule.values, average)
    excess = _excess_risk(model, final)
    diverged = bool(schedule.values[0] * model.eigenvalues[0] >= 2.0
                    or not np.isfinite(excess))
    return SGDOutcome(final_param=final, excess_risk=excess, path=path,
                      seed=seed, diverged=diverged)


def _draw_and_run(model: SketchedModel, sigma2: float,
                  schedule: StepsizeSchedule, rng: RngLike,
                  average: bool) -> SGDOutcome:
    if sigma2 < 0.0:
        raise ValueError("noise variance must be non-negative")
    seed = int(rng) if not isinstance(rng, np.random.Generator) else None
    gen = as_generator(rng)
    N, M = schedule.N, model.M
    sqrt_eig = np.sqrt(model.eigenvalues)
    noise_std = np.sqrt(sigma2 + model.approx_error)

    z = gen.standard_normal((N, M)) * sqrt_eig
    y = z @ model.v_star + noise_std * gen.standard_normal(N)
    return run_from_innovations(model, z, y, schedule, average=average,
                                path="fast", seed=seed)


def run_last_iterate(model: SketchedModel, sigma2: float,
                     schedule: StepsizeSchedule, rng: RngLike) -> SGDOutcome:
    """Fast-path last iterate: innovations sampled in the eigenbasis.

    The per-sample noise has variance ``sigma2 + approx_error``, the exact
    conditional law of the response given the sketched covariate; dropping
    the approximation term would silently bias the simulation.
    """
    return _draw_and_run(model, sigma2, schedule, rng, average=False)


def run_average_iterate(model: SketchedModel, sigma2: float, gamma0: float,
                        N: int, rng: RngLike) -> SGDOutcome:
    """Constant-stepsize run returning the average of v_0 .. v_{N-1}.

    The average includes the zero initial iterate and excludes v_N, so N=1
    returns the zero vector.
    """
    schedule = constant_schedule(gamma0, N)
    return _draw_and_run(model, sigma2, schedule, rng, average=True)


def run_direct(S: SketchMatrix, spec: Spectrum, w_star: np.ndarray,
               sigma2: float, schedule: StepsizeSchedule, rng: RngLike,
               model: Optional[SketchedModel] = None,
               average: bool = False) -> SGDOutcome:
    """Oracle path: draw d-dimensional data and apply the sketch explicitly.

    Per step, x_t ~ N(0, H) and y_t = x_t^T w* + noise(sigma2); the sketched
    covariates S x_t are rotated into the model eigenbasis and fed to the
    same kernel as the fast path, so the outcome is directly comparable.
    """
    if sigma2 < 0.0:
        raise ValueError("noise variance must be non-negative")
    seed = int(rng) if not isinstance(rng, np.random.Generator) else None
    gen = as_generator(rng)
    if model is None:
        model = build_model(S, spec, w_star)
    N, d = schedule.N, spec.d
    sqrt_lam = np.sqrt(spec.eigenvalues)
    noise_std = np.sqrt(sigma2)

    z = np.empty((N, model.M))
    y = np.empty(N)
    block = max(1, int(_MAX_BLOCK_ENTRIES // d))
    for start in range(0, N, block):
        stop = min(start + block, N)
        x = gen.standard_normal((stop - start, d)) * sqrt_lam
        noise = gen.standard_normal(stop - start)
        sx = x @ S.entries.T
        z[start:stop] = sx @ model.basis
        y[start:stop] = x @ w_star + noise_std * noise
    return run_from_innovations(model, z, y, schedule, average=average,
                                path="direct", seed=seed)
