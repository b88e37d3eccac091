import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import sketchlaw as sl
from sketchlaw.spectrum import prior_variances


class TestMakePowerLaw:
    def test_rejects_a_at_most_one(self):
        with pytest.raises(ValueError):
            sl.make_power_law(4, 1.0, normalize=True)
        with pytest.raises(ValueError):
            sl.make_power_law(4, 0.5)

    def test_rejects_empty(self):
        with pytest.raises(ValueError):
            sl.make_power_law(0, 2.0)

    def test_raw_values_exact(self):
        spec = sl.make_power_law(4, 2.0, normalize=False)
        assert spec.eigenvalues.tolist() == [1.0, 0.25, 1.0 / 9.0, 0.0625]

    def test_normalized_two_point(self):
        spec = sl.make_power_law(2, 2.0, normalize=True)
        np.testing.assert_allclose(spec.eigenvalues, [0.8, 0.2], rtol=1e-15)

    def test_figure_scale_spectrum(self):
        spec = sl.make_power_law(20000, 1.5, normalize=True)
        assert spec.d == 20000
        assert abs(spec.trace - 1.0) <= 1e-12
        # independent scalar recomputation of one interior eigenvalue
        z = sum(i ** -1.5 for i in range(1, 20001))
        assert math.isclose(spec.eigenvalues[99], 100 ** -1.5 / z, rel_tol=1e-12)


class TestMakeLogPowerLaw:
    def test_single_point(self):
        spec = sl.make_log_power_law(1, 2.0, normalize=False)
        assert spec.eigenvalues.tolist() == [1.0]  # log2(2) = 1

    def test_three_point_raw(self):
        spec = sl.make_log_power_law(3, 1.5, normalize=False)
        expected = [1.0, 0.5 * math.log2(3) ** -1.5, (1.0 / 3.0) * 2.0**-1.5]
        np.testing.assert_allclose(spec.eigenvalues, expected, rtol=1e-15)

    def test_normalized_ratio_oracle(self):
        spec = sl.make_log_power_law(2000, 2.0, normalize=True)
        assert abs(spec.trace - 1.0) <= 1e-12
        # normalization cancels in the ratio: lam1/lam2 = 2 * log2(3)^2
        ratio = spec.eigenvalues[0] / spec.eigenvalues[1]
        assert math.isclose(ratio, 2.0 * math.log2(3) ** 2, rel_tol=1e-12)

    def test_rejects_bad_degree(self):
        with pytest.raises(ValueError):
            sl.make_log_power_law(10, 1.0)


class TestSpectrumValidation:
    def test_rejects_increasing(self):
        with pytest.raises(ValueError):
            sl.explicit_spectrum([0.1, 0.5])

    def test_rejects_nonpositive(self):
        with pytest.raises(ValueError):
            sl.explicit_spectrum([1.0, 0.0])

    def test_eigenvalues_read_only(self):
        spec = sl.make_power_law(4, 2.0)
        with pytest.raises(ValueError):
            spec.eigenvalues[0] = 5.0


@settings(max_examples=50, deadline=None)
@given(d=st.integers(1, 400), a=st.floats(1.01, 6.0),
       log_kind=st.booleans(), normalize=st.booleans())
def test_family_invariants(d, a, log_kind, normalize):
    maker = sl.make_log_power_law if log_kind else sl.make_power_law
    spec = maker(d, a, normalize=normalize)
    assert np.all(spec.eigenvalues > 0)
    assert np.all(np.diff(spec.eigenvalues) <= 0)
    if normalize:
        assert abs(spec.trace - 1.0) <= 1e-12


class TestPrior:
    def test_isotropic_second_moment(self):
        spec = sl.make_power_law(100000, 2.0, normalize=True)
        w = sl.sample_prior(spec, sl.PriorSpec("isotropic"), 123)
        assert abs(np.mean(w**2) - 1.0) <= 0.02

    def test_source_b_equal_a_matches_isotropic(self):
        # i^(a-a) = 1, so the source prior with b = a is the isotropic one;
        # with a shared seed the draws are bit-identical.
        spec = sl.make_power_law(50, 2.0)
        w_iso = sl.sample_prior(spec, sl.PriorSpec("isotropic"), 7)
        w_src = sl.sample_prior(spec, sl.PriorSpec("source", b=2.0), 7)
        assert np.array_equal(w_iso, w_src)

    def test_source_variance_value(self):
        spec = sl.make_power_law(10, 2.0)
        var = prior_variances(spec, sl.PriorSpec("source", b=3.0))
        assert math.isclose(var[3], 0.25, rel_tol=1e-15)  # 4^(2-3)

    def test_source_monte_carlo_second_moments(self):
        spec = sl.make_power_law(8, 2.0)
        prior = sl.PriorSpec("source", b=3.0)
        rng = np.random.default_rng(99)
        draws = np.stack([sl.sample_prior(spec, prior, rng) for _ in range(100000)])
        target = prior_variances(spec, prior)
        second = np.mean(draws**2, axis=0)
        # Gaussian fourth moments: sd of the mean square is sqrt(2/n) * var
        tol = 3.0 * np.sqrt(2.0 / draws.shape[0]) * target
        assert np.all(np.abs(second - target) <= tol)

    def test_source_requires_power_law(self):
        spec = sl.make_log_power_law(10, 2.0)
        with pytest.raises(ValueError):
            sl.sample_prior(spec, sl.PriorSpec("source", b=2.0), 0)

    def test_reproducible(self):
        spec = sl.make_power_law(100, 1.5)
        a = sl.sample_prior(spec, sl.PriorSpec("isotropic"), 42)
        b = sl.sample_prior(spec, sl.PriorSpec("isotropic"), 42)
        assert np.array_equal(a, b)


class TestSerialization:
    def test_json_fields(self):
        spec = sl.make_power_law(10, 1.5, normalize=True)
        record = json.loads(spec.to_json(b=2.5))
        assert record == {
            "kind": "power_law",
            "d": 10,
            "a": 1.5,
            "b": 2.5,
            "normalized": True,
            "trace": spec.trace,
        }

    def test_explicit_csv_roundtrip(self, tmp_path):
        path = tmp_path / "eigs.csv"
        path.write_text("0.5\n0.25\n0.125\n")
        spec = sl.load_explicit_csv(path)
        assert spec.kind == "explicit"
        assert spec.eigenvalues.tolist() == [0.5, 0.25, 0.125]

    def test_explicit_csv_rejects_two_columns(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("0.5,1\n")
        with pytest.raises(ValueError):
            sl.load_explicit_csv(path)
