"""Probabilistic predictors: nominal, Noise-DRPP, Eig-DRPP and the ground-truth oracle.

Every predictor maps a state-control pair ``z = (x, u)`` to a Gaussian predictive
pdf for the next state.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .ambiguity import AmbiguitySet, SdsStepRealization
from .core import LOG_2PI, GaussianPdf, as_vector
from .errors import DimensionMismatch, NonPositiveEigenvalue, SingularMatrix

TIE_TOL = 1e-12


class PredictorKind(str, enum.Enum):
    NOMINAL = "nominal"
    NOISE_DRPP = "noise_drpp"
    EIG_DRPP = "eig_drpp"
    ORACLE = "oracle"


def nominal_predict(aset: AmbiguitySet, z) -> GaussianPdf:
    return GaussianPdf(aset.nominal_evolution(z) + aset.nominal_mean, aset.nominal_cov)


def noise_drpp_predict(aset: AmbiguitySet, z) -> GaussianPdf:
    return GaussianPdf(aset.nominal_evolution(z) + aset.nominal_mean, aset.gamma2 * aset.nominal_cov)


def noise_drpp_value(aset: AmbiguitySet) -> float:
    """Worst-case expected log score of Noise-DRPP over one step."""
    d = aset.state_dim
    sign, logdet = np.linalg.slogdet(aset.gamma2 * aset.nominal_cov)
    if sign <= 0:
        raise SingularMatrix("gamma2 * nominal_cov is not positive definite")
    return -0.5 * (d * LOG_2PI + d + logdet)


def qclp_mean_shift(b, sigma_bar, sigma_hat, gamma1: float) -> np.ndarray:
    """Maximize ``||a+b||^2 - ||a||^2`` (in the ``sigma_hat^-1`` norm) over the
    ellipsoid ``a^T sigma_bar^-1 a <= gamma1``.

    The objective is linear in ``a``; for ``b = 0`` it is constant and the zero
    shift is returned.
    """
    b = as_vector(b)
    sigma_bar = np.asarray(sigma_bar, dtype=float)
    sigma_hat = np.asarray(sigma_hat, dtype=float)
    if sigma_bar.shape != (b.size, b.size) or sigma_hat.shape != (b.size, b.size):
        raise DimensionMismatch("matrix shapes do not match the shift dimension")
    if gamma1 < 0:
        raise ValueError("gamma1 must be nonnegative")
    g = np.linalg.solve(sigma_hat, b)
    direction = sigma_bar @ g
    norm_sq = float(g @ direction)  # ||sigma_bar g||^2 in the sigma_bar^-1 norm
    if gamma1 == 0.0 or norm_sq <= 0.0:
        return np.zeros_like(b)
    return math.sqrt(gamma1) * direction / math.sqrt(norm_sq)


@dataclass(frozen=True, eq=False)
class P3Solution:
    """Eigenvalues of the Eig-DRPP covariance, the attacked eigen-index and the P3 value.

    ``j_star`` is zero-based and indexes the descending spectrum of the nominal
    covariance.
    """

    lambdas_hat: np.ndarray
    j_star: int
    objective: float
    weights: np.ndarray  # c_i = 2 sqrt(g0 g1 lambda_i) + g0


def p3_weights(lambdas, gamma0_val: float, gamma1: float) -> np.ndarray:
    lam = np.asarray(lambdas, dtype=float)
    return 2.0 * np.sqrt(gamma0_val * gamma1 * lam) + gamma0_val


def p3_objective(lambdas, lambdas_hat, weights, j: int, gamma2: float) -> float:
    lam = np.asarray(lambdas, dtype=float)
    lh = np.asarray(lambdas_hat, dtype=float)
    return float(np.sum(np.log(lh) + gamma2 * lam / lh) + weights[j] / lh[j])


def _solve_fixed_j(lam: np.ndarray, c: np.ndarray, gamma2: float, j: int) -> np.ndarray:
    # In y = 1/lambda_hat the subproblem is convex with linear constraints
    # c_i y_i <= c_j y_j.  With t = c_j y_j each other coordinate is
    # y_i = min(1/(gamma2 lam_i), t/c_i), leaving a 1-D convex problem in t whose
    # derivative changes form only at the breakpoints c_i/(gamma2 lam_i).
    d = lam.size
    others = np.array([i for i in range(d) if i != j], dtype=int)
    free_y = 1.0 / (gamma2 * lam)
    breaks = c[others] * free_y[others]
    order = np.argsort(-breaks, kind="stable")
    sorted_breaks = breaks[order]
    base = (gamma2 * lam[j] + c[j]) / c[j]

    best_lh, best_val = None, math.inf
    for m in range(d):
        binding = others[order[:m]]
        t = (1.0 + m) / (base + np.sum(gamma2 * lam[binding] / c[binding]))
        upper = math.inf if m == 0 else sorted_breaks[m - 1]
        lower = sorted_breaks[m] if m < d - 1 else 0.0
        t = min(max(t, lower), upper)
        if t <= 0.0:
            continue
        y = np.minimum(free_y, t / np.where(c > 0, c, np.inf))
        y[j] = t / c[j]
        lh = 1.0 / y
        val = p3_objective(lam, lh, c, j, gamma2)
        if val < best_val:
            best_lh, best_val = lh, val
    return best_lh


def p3_solve(lambdas, gamma0_val: float, gamma1: float, gamma2: float) -> P3Solution:
    """Minimize the eigenvalue-restricted worst-case objective over (lambda_hat, j)."""
    lam = np.asarray(lambdas, dtype=float).reshape(-1)
    if lam.size == 0 or np.any(lam <= 0.0):
        raise NonPositiveEigenvalue("all nominal eigenvalues must be positive")
    if gamma0_val < 0 or gamma1 < 0 or gamma2 <= 0:
        raise ValueError("need gamma0 >= 0, gamma1 >= 0, gamma2 > 0")
    c = p3_weights(lam, gamma0_val, gamma1)

    if gamma0_val == 0.0:
        lh = gamma2 * lam
        return P3Solution(lh, 0, p3_objective(lam, lh, c, 0, gamma2), c)

    candidates = []
    for j in range(lam.size):
        lh = _solve_fixed_j(lam, c, gamma2, j)
        candidates.append((p3_objective(lam, lh, c, j, gamma2), j, lh))
    best = min(v for v, _, _ in candidates)
    for val, j, lh in candidates:
        if val <= best + TIE_TOL * max(1.0, abs(best)):
            return P3Solution(lh, j, val, c)
    raise AssertionError("unreachable")


def p3_kkt_residuals(lambdas, gamma0_val: float, gamma1: float, gamma2: float, sol: P3Solution) -> dict:
    """KKT certificate of the fixed-``j_star`` subproblem, in ``y = 1/lambda_hat``.

    Multipliers are recovered from stationarity of the non-attacked coordinates;
    the returned residuals are what remains on the attacked coordinate,
    complementary slackness, primal infeasibility and dual infeasibility.
    """
    lam = np.asarray(lambdas, dtype=float)
    c = p3_weights(lam, gamma0_val, gamma1)
    j = sol.j_star
    y = 1.0 / sol.lambdas_hat
    if gamma0_val == 0.0:
        grad = -1.0 / y + gamma2 * lam
        return {"stationarity": float(np.max(np.abs(grad))), "complementarity": 0.0,
                "primal": 0.0, "dual": 0.0}
    others = [i for i in range(lam.size) if i != j]
    eta = np.zeros(lam.size)
    for i in others:
        eta[i] = (1.0 / y[i] - gamma2 * lam[i]) / c[i]
    slack = c * y - c[j] * y[j]
    stat = abs(-1.0 / y[j] + gamma2 * lam[j] + c[j] - c[j] * np.sum(eta[others]))
    comp = max((abs(eta[i] * slack[i]) for i in others), default=0.0)
    return {
        "stationarity": float(stat),
        "complementarity": float(comp),
        "primal": float(max(0.0, np.max(slack[others]) if others else 0.0)),
        "dual": float(max(0.0, -np.min(eta[others]) if others else 0.0)),
    }


def eig_drpp_predict(aset: AmbiguitySet, z) -> tuple[GaussianPdf, P3Solution]:
    spec = aset.spectrum
    sol = p3_solve(spec.eigenvalues, aset.gamma0(z), aset.gamma1, aset.gamma2)
    Q = spec.eigenvectors
    cov = (Q * sol.lambdas_hat) @ Q.T
    return GaussianPdf(aset.nominal_evolution(z) + aset.nominal_mean, cov), sol


def eig_drpp_value(aset: AmbiguitySet, gamma0_val: float) -> float:
    """Worst-case expected log score of Eig-DRPP when the evolution radius is ``gamma0_val``."""
    sol = p3_solve(aset.spectrum.eigenvalues, gamma0_val, aset.gamma1, aset.gamma2)
    return -0.5 * (aset.state_dim * LOG_2PI + sol.objective)


def oracle_predict(truth: SdsStepRealization, z=None) -> GaussianPdf:
    return GaussianPdf(truth.next_state_mean, truth.noise_cov)


def predict(kind: PredictorKind, aset: AmbiguitySet, z, truth: SdsStepRealization | None = None) -> GaussianPdf:
    kind = PredictorKind(kind)
    if kind is PredictorKind.NOMINAL:
        return nominal_predict(aset, z)
    if kind is PredictorKind.NOISE_DRPP:
        return noise_drpp_predict(aset, z)
    if kind is PredictorKind.EIG_DRPP:
        return eig_drpp_predict(aset, z)[0]
    if truth is None:
        raise ValueError("the oracle predictor needs the ground-truth step")
    return oracle_predict(truth, z)
