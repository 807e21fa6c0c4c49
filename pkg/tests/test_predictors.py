import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import optimize

from drpp.ambiguity import Gamma0, SdsStepRealization
from drpp.errors import NonPositiveEigenvalue
from drpp.predictors import (
    PredictorKind,
    eig_drpp_predict,
    eig_drpp_value,
    nominal_predict,
    noise_drpp_predict,
    noise_drpp_value,
    oracle_predict,
    p3_kkt_residuals,
    p3_objective,
    p3_solve,
    p3_weights,
    predict,
    qclp_mean_shift,
)

from conftest import REF_COV, make_reference_set, random_spd

Z0 = np.array([2.0, 1.0, 0.0, 0.0])


def max_form(lam, lh, c, gamma2):
    """P3 objective written without the attacked index: the adversary takes the max."""
    lh = np.asarray(lh)
    return np.sum(np.log(lh) + gamma2 * lam / lh, axis=-1) + np.max(c / lh, axis=-1)


def test_nominal_prediction_first_step(ref_set):
    p = nominal_predict(ref_set, Z0)
    np.testing.assert_allclose(p.mean, [2.1, 1.0])
    np.testing.assert_array_equal(p.covariance, REF_COV)


def test_noise_drpp_value_closed_form():
    # det(3 Sigma) = 9 * 1.25
    expected = -0.5 * (2 * math.log(2 * math.pi) + 2 + math.log(11.25))
    assert noise_drpp_value(make_reference_set()) == pytest.approx(expected, abs=1e-12)
    assert expected == pytest.approx(-4.048061, abs=1e-6)


def test_noise_drpp_prediction_scales_cov(ref_set):
    p = noise_drpp_predict(ref_set, Z0)
    np.testing.assert_allclose(p.covariance, 3.0 * REF_COV)
    np.testing.assert_allclose(p.mean, [2.1, 1.0])


def test_p3_zero_gamma0_closed_form():
    lam = np.array([3.0, 1.0, 0.5])
    sol = p3_solve(lam, 0.0, 0.7, 2.0)
    np.testing.assert_allclose(sol.lambdas_hat, 2.0 * lam, rtol=0, atol=1e-10)
    assert sol.j_star == 0


@pytest.mark.parametrize("lam, g0, g1, g2", [(2.0, 1.0, 0.0, 3.0), (0.7, 4.0, 0.5, 1.5), (5.0, 0.1, 2.0, 3.0)])
def test_p3_one_dimensional(lam, g0, g1, g2):
    # d = 1: minimize log l + (g2 lam + c) / l, solved by l = g2 lam + c
    c = 2 * math.sqrt(g0 * g1 * lam) + g0
    sol = p3_solve([lam], g0, g1, g2)
    assert sol.lambdas_hat[0] == pytest.approx(g2 * lam + c, rel=1e-12)
    golden = optimize.minimize_scalar(lambda l: math.log(l) + (g2 * lam + c) / l,
                                      bracket=(0.5, 2.0), method="golden", tol=1e-12)
    assert sol.lambdas_hat[0] == pytest.approx(golden.x, rel=1e-6)


def test_p3_scalar_example():
    assert p3_solve([2.0], 1.0, 0.0, 3.0).lambdas_hat[0] == pytest.approx(7.0)


def test_p3_rejects_bad_input():
    with pytest.raises(NonPositiveEigenvalue):
        p3_solve([1.0, 0.0], 1.0, 0.5, 3.0)
    with pytest.raises(ValueError):
        p3_solve([1.0], -1.0, 0.5, 3.0)


def test_p3_reference_spectrum_against_grid(ref_set):
    lam = ref_set.spectrum.eigenvalues
    for g0 in (0.45, 9.0, 25.0):
        sol = p3_solve(lam, g0, 0.5, 3.0)
        c = p3_weights(lam, g0, 0.5)
        axes = [np.geomspace(0.3 * l, 10 * l + 5 * g0, 600) for l in 3 * lam]
        grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, 2)
        assert sol.objective <= max_form(lam, grid, c, 3.0).min() + 1e-9
        assert sol.objective == pytest.approx(max_form(lam, sol.lambdas_hat, c, 3.0), abs=1e-12)


def test_p3_regression_values(ref_set):
    sol = p3_solve(ref_set.spectrum.eigenvalues, 9.0, 0.5, 3.0)
    np.testing.assert_allclose(sol.lambdas_hat, [11.2835, 9.6112], atol=1e-4)
    assert eig_drpp_value(ref_set, 9.0) == pytest.approx(-5.181, abs=1e-3)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 5))
def test_p3_matches_generic_optimizer(seed, d):
    rng = np.random.default_rng(seed)
    lam = np.sort(rng.uniform(0.1, 5.0, d))[::-1]
    g0, g1, g2 = rng.uniform(0.01, 10), rng.uniform(0, 2), rng.uniform(0.5, 4)
    sol = p3_solve(lam, g0, g1, g2)
    c = p3_weights(lam, g0, g1)
    res = p3_kkt_residuals(lam, g0, g1, g2, sol)
    assert max(res.values()) <= 1e-8
    # Nelder-Mead on log-eigenvalues from several starts never beats the solver
    f = lambda s: max_form(lam, np.exp(s), c, g2)
    for start in (np.log(g2 * lam), np.log(g2 * lam + c), np.log(g2 * lam + c.max())):
        r = optimize.minimize(f, start, method="Nelder-Mead", options=dict(xatol=1e-10, fatol=1e-12, maxiter=20000))
        assert sol.objective <= r.fun + 1e-8


def test_p3_tie_goes_to_smallest_index():
    sol = p3_solve([1.0, 1.0, 1.0], 2.0, 0.5, 3.0)
    assert sol.j_star == 0


def test_p3_objective_uses_attacked_index():
    lam, lh, c = np.array([2.0, 1.0]), np.array([6.0, 3.0]), np.array([1.0, 2.0])
    expected = math.log(6) + 1 + math.log(3) + 1 + 2.0 / 3.0
    assert p3_objective(lam, lh, c, 1, 3.0) == pytest.approx(expected)


def test_eig_drpp_coincides_with_noise_at_zero_gamma0():
    aset = make_reference_set(Gamma0.constant(0.0))
    p, sol = eig_drpp_predict(aset, Z0)
    q = noise_drpp_predict(aset, Z0)
    assert np.linalg.norm(p.covariance - q.covariance) <= 1e-9
    assert eig_drpp_value(aset, 0.0) == pytest.approx(noise_drpp_value(aset), abs=1e-9)


def test_eig_drpp_shares_nominal_eigenvectors(ref_set):
    z = np.array([5.0, -3.0, 1.0, 1.0])
    p, sol = eig_drpp_predict(ref_set, z)
    Q = ref_set.spectrum.eigenvectors
    np.testing.assert_allclose(Q.T @ p.covariance @ Q, np.diag(sol.lambdas_hat), atol=1e-12)


def test_eig_drpp_value_decreases_with_gamma0(ref_set):
    vals = [eig_drpp_value(ref_set, g) for g in (0.0, 0.5, 1.0, 4.0, 9.0, 25.0)]
    assert all(a > b for a, b in zip(vals, vals[1:]))
    assert vals[0] == pytest.approx(noise_drpp_value(ref_set))


def qclp_objective(a, b, sigma_hat):
    Si = np.linalg.inv(sigma_hat)
    return (a + b) @ Si @ (a + b) - a @ Si @ a


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 4))
def test_qclp_beats_random_feasible_points(seed, d):
    rng = np.random.default_rng(seed)
    sb, sh = random_spd(rng, d), random_spd(rng, d)
    b, g1 = rng.normal(size=d), rng.uniform(0.05, 3)
    a = qclp_mean_shift(b, sb, sh, g1)
    assert a @ np.linalg.solve(sb, a) == pytest.approx(g1, rel=1e-10)
    u = rng.normal(size=(2000, d))
    u *= (rng.uniform(size=(2000, 1)) ** (1 / d)) / np.linalg.norm(u, axis=1, keepdims=True)
    pts = math.sqrt(g1) * u @ np.linalg.cholesky(sb).T
    best = max(qclp_objective(p, b, sh) for p in pts)
    assert qclp_objective(a, b, sh) >= best - 1e-9


def test_qclp_degenerate_cases():
    S = np.eye(2)
    np.testing.assert_array_equal(qclp_mean_shift(np.zeros(2), S, S, 1.0), np.zeros(2))
    np.testing.assert_array_equal(qclp_mean_shift(np.ones(2), S, S, 0.0), np.zeros(2))
    np.testing.assert_allclose(qclp_mean_shift([3.0, 4.0], S, S, 4.0), [1.2, 1.6])


def test_predict_dispatch(ref_set):
    truth = SdsStepRealization(np.array([1.0, 2.0]), np.zeros(2), REF_COV)
    assert np.allclose(predict("oracle", ref_set, Z0, truth).mean, [1.0, 2.0])
    np.testing.assert_allclose(oracle_predict(truth).covariance, REF_COV)
    with pytest.raises(ValueError):
        predict(PredictorKind.ORACLE, ref_set, Z0)
    for kind in ("nominal", "noise_drpp", "eig_drpp"):
        assert predict(kind, ref_set, Z0).dim == 2


def test_maximin_one_dimensional_grid():
    # gamma0 = 0, d = 1: a coarse maximin over Gaussian predictors and in-set laws
    g1, g2 = 0.5, 3.0
    m = np.linspace(-1, 1, 41)[:, None, None, None]
    v = np.linspace(1, 5, 81)[None, :, None, None]
    mu = np.linspace(-math.sqrt(g1), math.sqrt(g1), 41)[None, None, :, None]
    frac = np.linspace(0, 1, 41)[None, None, None, :]
    s2 = frac * (g2 - mu**2)
    score = -0.5 * (math.log(2 * math.pi) + np.log(v) + (s2 + (mu - m) ** 2) / v)
    inner = score.min(axis=(2, 3))
    i, j = np.unravel_index(inner.argmax(), inner.shape)
    assert m[i, 0, 0, 0] == pytest.approx(0.0)
    assert v[0, j, 0, 0] == pytest.approx(3.0)
    assert inner.max() == pytest.approx(-0.5 * (math.log(2 * math.pi) + 1 + math.log(3)), abs=1e-6)
