import numpy as np
import pytest

import sketchlaw as sl


def make_toy_model(eigenvalues, v_star, approx_error=0.0, sq_eigenvalues=None,
                   spectrum=None):
    """Hand-assembled model in its own eigenbasis, for closed-form unit tests."""
    eigenvalues = np.asarray(eigenvalues, dtype=np.float64)
    v_star = np.asarray(v_star, dtype=np.float64)
    M = eigenvalues.size
    if sq_eigenvalues is None:
        sq_eigenvalues = eigenvalues**2
    if spectrum is None:
        spectrum = sl.explicit_spectrum(np.sort(eigenvalues)[::-1])
    sketch = sl.SketchMatrix(entries=np.eye(M, spectrum.d))
    w_star = np.zeros(spectrum.d)
    return sl.SketchedModel(
        eigenvalues=eigenvalues,
        basis=np.eye(M),
        v_star=v_star,
        approx_error=float(approx_error),
        sq_eigenvalues=np.asarray(sq_eigenvalues, dtype=np.float64),
        spectrum=spectrum,
        sketch=sketch,
        w_star=w_star,
    )


@pytest.fixture
def small_model():
    """A well-conditioned sketched model at M=8, d=64, a=2."""
    rng = np.random.default_rng(2024)
    spec = sl.make_power_law(64, 2.0, normalize=True)
    w_star = sl.sample_prior(spec, sl.PriorSpec("isotropic"), rng)
    sketch = sl.sample_sketch(8, 64, rng)
    return sl.build_model(sketch, spec, w_star)
