import math

import numpy as np
import pytest

import sketchlaw as sl
from sketchlaw.theory import NonMatchingRegimeError


class TestPredictedRates:
    def test_power_law_exponents(self):
        pred = sl.predicted_rates("power_law", "last_iterate", 1.5, M=64, N=1024)
        assert pred.exponents == (0.5, 1.0 - 1.0 / 1.5)
        pred2 = sl.predicted_rates("power_law", "last_iterate", 2.0, M=64, N=1024)
        assert pred2.exponents == (1.0, 0.5)

    def test_exponent_identities_exact(self):
        for a in (1.2, 1.5, 2.0, 3.7):
            pred = sl.predicted_rates("power_law", "last_iterate", a, M=8, N=64)
            assert pred.exponents[1] == 1.0 - 1.0 / a
        for b in (1.5, 2.0, 2.9):
            pred = sl.predicted_rates("source", "last_iterate", 2.0, b=b,
                                      M=8, N=64)
            assert pred.exponents[0] == b - 1.0

    def test_rate_values(self):
        pred = sl.predicted_rates("power_law", "last_iterate", 2.0, M=100,
                                  N=1024, gamma0=0.1)
        n_eff = 1024 / 10.0
        assert pred.approx_rate == pytest.approx(0.01)  # M^(1-a) = 1/100
        assert pred.bias_rate == pytest.approx((n_eff * 0.1) ** -0.5)
        assert pred.variance_rate == pytest.approx(
            min(100.0, (n_eff * 0.1) ** 0.5) / n_eff
        )

    def test_source_b_equal_a_reduces_to_power_law(self):
        iso = sl.predicted_rates("power_law", "last_iterate", 2.0, M=32, N=512,
                                 gamma0=0.5)
        src = sl.predicted_rates("source", "last_iterate", 2.0, b=2.0, M=32,
                                 N=512, gamma0=0.5)
        assert iso.approx_rate == src.approx_rate
        assert iso.bias_rate == src.bias_rate
        assert iso.variance_rate == src.variance_rate
        assert iso.exponents == src.exponents

    def test_source_non_matching_flag(self):
        pred = sl.predicted_rates("source", "last_iterate", 1.5, b=2.6, M=8,
                                  N=64)
        assert not pred.matching
        assert sl.predicted_rates("source", "last_iterate", 1.5, b=2.4, M=8,
                                  N=64).matching

    def test_averaged_substitutes_n_for_n_eff(self):
        last = sl.predicted_rates("power_law", "last_iterate", 2.0, M=16,
                                  N=4096, gamma0=0.1)
        avg = sl.predicted_rates("power_law", "averaged", 2.0, M=16, N=4096,
                                 gamma0=0.1)
        assert avg.n_eff == 4096.0
        n = 4096.0
        n_eff = n / math.log2(n)
        # identical formulas once n_eff is replaced by n
        assert avg.bias_rate == pytest.approx((n * 0.1) ** -0.5)
        assert last.bias_rate == pytest.approx((n_eff * 0.1) ** -0.5)
        assert avg.exponents == last.exponents

    def test_log_regime_rates(self):
        pred = sl.predicted_rates("log_power_law", "last_iterate", 2.0, M=256,
                                  N=2**14, gamma0=1.0)
        n_eff = 2**14 / 14.0
        assert pred.approx_rate == pytest.approx(math.log2(256) ** -1.0)
        assert pred.bias_rate == pytest.approx(math.log2(n_eff) ** -1.0)
        assert pred.variance_rate == pytest.approx(
            min(256.0, n_eff / math.log2(n_eff) ** 2.0) / n_eff
        )

    def test_log_regime_needs_horizon(self):
        with pytest.raises(ValueError):
            sl.predicted_rates("log_power_law", "last_iterate", 2.0, M=4, N=4,
                               gamma0=1e-3)


class TestOptimalStepsize:
    def test_power_law_unit(self):
        rule = sl.optimal_stepsize("power_law", 2.0, M=64, N=4096)
        assert rule.kind == "value" and rule.value == 1.0

    def test_source_large_m(self):
        N = 2**16
        n_eff = N / math.log2(N)
        rule = sl.optimal_stepsize("source", 2.0, b=2.5, M=1024, N=N)
        assert rule.kind == "value"
        assert rule.value == pytest.approx(n_eff ** (2.0 / 2.5 - 1.0))

    def test_source_small_m_interval(self):
        N = 2**16
        n_eff = N / math.log2(N)
        M = int(round(n_eff**0.2))
        rule = sl.optimal_stepsize("source", 2.0, b=2.5, M=M, N=N)
        assert rule.kind == "interval"
        assert rule.lower == pytest.approx(M**2 / n_eff)
        assert rule.upper == 1.0

    def test_non_matching_regime(self):
        with pytest.raises(NonMatchingRegimeError):
            sl.optimal_stepsize("source", 1.5, b=2.5, M=8, N=64)


class TestAllocation:
    def test_exact_powers_a2(self):
        assert sl.compute_optimal_allocation(1e6, 2.0) == (100, 10000, 1.0)

    def test_exact_powers_a15(self):
        assert sl.compute_optimal_allocation(1e5, 1.5) == (100, 1000, 1.0)

    def test_budget_respected(self):
        for C in (1e4, 12345.0, 9.9e6):
            M, N, _ = sl.compute_optimal_allocation(C, 1.7)
            assert M * N <= C

    def test_rejects_invalid_exponent(self):
        with pytest.raises(ValueError):
            sl.compute_optimal_allocation(1e6, 1.0)

    @pytest.mark.parametrize("a,C", [(2.0, 1e6), (1.5, 1e5)])
    def test_allocation_optimal_on_surrogate(self, a, C):
        # Over a power-of-2 grid around the allocation, the surrogate risk
        # M^(1-a) + (N_eff)^((1-a)/a) with N = C/M is minimized within one
        # grid step of the returned M.
        M_star, _, gamma = sl.compute_optimal_allocation(C, a)

        def surrogate(M):
            N = C / M
            n_eff = N / math.log2(N)
            return M ** (1.0 - a) + (n_eff * gamma) ** ((1.0 - a) / a)

        grid = [M_star * 2.0**k for k in range(-3, 4)]
        values = [surrogate(M) for M in grid]
        best = int(np.argmin(values))
        center = grid.index(float(M_star))
        assert abs(best - center) <= 1
