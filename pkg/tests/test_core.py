import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from drpp.core import (
    GaussianPdf,
    as_vector,
    confidence_scale,
    gaussian_log_density,
    mahalanobis_sq,
    require_spd,
    spectral_decompose,
    symmetrize,
)
from drpp.errors import DimensionMismatch, InvalidProbability, NotPsd, NotSymmetric, SingularMatrix

from conftest import REF_COV, random_spd

seeds = st.integers(0, 2**32 - 1)
dims = st.integers(1, 5)


def test_as_vector_checks_length():
    assert as_vector([[1.0], [2.0]]).shape == (2,)
    with pytest.raises(DimensionMismatch):
        as_vector([1.0, 2.0], 3)


def test_symmetrize_rejects_asymmetric_and_nonsquare():
    with pytest.raises(NotSymmetric):
        symmetrize([[1.0, 0.2], [0.0, 1.0]])
    with pytest.raises(DimensionMismatch):
        symmetrize(np.ones((2, 3)))
    S = np.array([[2.0, 1.0 + 1e-14], [1.0, 3.0]])
    out = symmetrize(S)
    assert np.array_equal(out, out.T)


def test_require_spd_rejects_singular():
    with pytest.raises(SingularMatrix):
        require_spd([[1.0, 1.0], [1.0, 1.0]])


def test_spectral_decompose_reference_covariance():
    spec = spectral_decompose(REF_COV)
    disc = np.sqrt(1.25**2 - 1.25)  # roots of l^2 - 2.5 l + 1.25
    expected = np.array([1.25 + disc, 1.25 - disc])
    np.testing.assert_allclose(spec.eigenvalues, expected, rtol=1e-14)
    np.testing.assert_allclose(spec.reconstruct(), REF_COV, atol=1e-14)
    for i in range(2):
        v = spec.vector(i)
        assert v[np.flatnonzero(np.abs(v) > 1e-14)[0]] > 0


def test_spectral_decompose_rejects_indefinite():
    with pytest.raises(NotPsd):
        spectral_decompose([[1.0, 0.0], [0.0, -1.0]])


def test_spectral_decompose_clips_roundoff():
    spec = spectral_decompose(np.diag([1.0, -1e-13]))
    assert spec.eigenvalues.min() == 0.0


@settings(max_examples=50, deadline=None)
@given(seeds, dims)
def test_spectral_decompose_properties(seed, d):
    S = random_spd(np.random.default_rng(seed), d)
    spec = spectral_decompose(S)
    assert np.all(np.diff(spec.eigenvalues) <= 0)
    np.testing.assert_allclose(spec.eigenvectors.T @ spec.eigenvectors, np.eye(d), atol=1e-10)
    np.testing.assert_allclose(spec.reconstruct(), S, atol=1e-9 * np.abs(S).max())


@settings(max_examples=50, deadline=None)
@given(seeds, dims)
def test_log_density_matches_scipy(seed, d):
    rng = np.random.default_rng(seed)
    S = random_spd(rng, d)
    m, x = rng.normal(size=d), rng.normal(size=d)
    got = gaussian_log_density(GaussianPdf(m, S), x)
    assert got == pytest.approx(stats.multivariate_normal(m, S).logpdf(x), rel=1e-10, abs=1e-10)
    assert mahalanobis_sq(x, m, S) == pytest.approx((x - m) @ np.linalg.solve(S, x - m), rel=1e-10)


def test_log_density_standard_normal_at_mean():
    assert gaussian_log_density(GaussianPdf(np.zeros(2), np.eye(2)), np.zeros(2)) == pytest.approx(-np.log(2 * np.pi))


def test_gaussian_pdf_validation():
    with pytest.raises(SingularMatrix):
        GaussianPdf(np.zeros(2), np.diag([1.0, 0.0]))
    with pytest.raises(DimensionMismatch):
        GaussianPdf(np.zeros(3), np.eye(2))
    with pytest.raises(DimensionMismatch):
        gaussian_log_density(GaussianPdf(np.zeros(2), np.eye(2)), np.zeros(3))


def test_confidence_scale_closed_form():
    assert confidence_scale(0.9, 2) == pytest.approx(4.605170, abs=1e-6)


@pytest.mark.parametrize("d", [1, 3, 4, 7])
@pytest.mark.parametrize("beta", [0.05, 0.5, 0.9, 0.99])
def test_confidence_scale_matches_chi2(d, beta):
    assert confidence_scale(beta, d) == pytest.approx(stats.chi2.ppf(beta, d), rel=1e-8)


@pytest.mark.parametrize("beta", [0.0, 1.0, -0.1, 1.5])
def test_confidence_scale_rejects_bad_beta(beta):
    with pytest.raises(InvalidProbability):
        confidence_scale(beta, 2)
