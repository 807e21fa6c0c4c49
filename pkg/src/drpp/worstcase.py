"""Adversarial in-set steps, offline value-function bounds and ambiguity diagnostics."""

from __future__ import annotations

import enum
import math
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from .ambiguity import AmbiguitySet, SdsStepRealization
from .core import as_vector, mahalanobis_sq, symmetrize
from .errors import EmptyInput, InfeasibleMean, NotPsdResult, DimensionMismatch
from .predictors import noise_drpp_value, p3_solve, p3_weights

ARGMAX_TOL = 1e-9


def worst_sigma(aset: AmbiguitySet, mu) -> np.ndarray:
    """Noise covariance that saturates the upper second-moment bound for mean ``mu``."""
    mu = as_vector(mu, aset.state_dim)
    if mahalanobis_sq(mu, aset.nominal_mean, aset.nominal_cov) > aset.gamma1 * (1 + 1e-9) + 1e-12:
        raise InfeasibleMean("noise mean lies outside the gamma1 ellipsoid")
    a = mu - aset.nominal_mean
    sigma = aset.gamma2 * aset.nominal_cov - np.outer(a, a)
    if np.linalg.eigvalsh(sigma).min() < -1e-10:
        raise NotPsdResult("gamma2 * nominal_cov - a a^T is indefinite")
    return symmetrize(sigma)


def noise_worst_step(aset: AmbiguitySet, z, rng: np.random.Generator | None = None,
                     mean_mode: str = "center") -> SdsStepRealization:
    """A worst case for Noise-DRPP: nominal evolution, second moment equal to gamma2 * nominal_cov.

    ``mean_mode="boundary"`` draws the noise mean uniformly on the boundary of the
    feasible mean ellipsoid instead of using the nominal mean.
    """
    if mean_mode == "center":
        mu = aset.nominal_mean.copy()
    elif mean_mode == "boundary":
        if rng is None:
            raise ValueError("boundary mean sampling needs an rng")
        u = rng.standard_normal(aset.state_dim)
        u /= np.linalg.norm(u)
        L = np.linalg.cholesky(aset.nominal_cov)
        mu = aset.nominal_mean + math.sqrt(aset.gamma1) * (L @ u)
    else:
        raise ValueError(f"unknown mean_mode {mean_mode!r}")
    return SdsStepRealization(aset.nominal_evolution(z), mu, worst_sigma(aset, mu))


def adversary_index(aset: AmbiguitySet, z, predictive_cov) -> int:
    """Eigen-direction of the nominal covariance the adversary attacks.

    The predictive covariance is projected onto the nominal eigenbasis; ties are
    broken toward the smallest index.
    """
    spec = aset.spectrum
    cov = np.asarray(predictive_cov, dtype=float)
    if cov.shape != (aset.state_dim, aset.state_dim):
        raise DimensionMismatch("predictive covariance shape differs from state dimension")
    Q = spec.eigenvectors
    projected = np.einsum("ij,ik,kj->j", Q, cov, Q)
    if np.any(projected <= 0):
        raise NotPsdResult("predictive covariance is not positive definite")
    ratios = p3_weights(spec.eigenvalues, aset.gamma0(z), aset.gamma1) / projected
    top = ratios.max()
    return int(np.flatnonzero(ratios >= top - ARGMAX_TOL * max(1.0, abs(top)))[0])


def eig_worst_step(aset: AmbiguitySet, z, predictive_cov) -> SdsStepRealization:
    if aset.gamma1 >= aset.gamma2:
        raise NotPsdResult("gamma1 >= gamma2 leaves the attacked direction without noise")
    j = adversary_index(aset, z, predictive_cov)
    spec = aset.spectrum
    v, lam = spec.vector(j), spec.eigenvalues[j]
    nu = aset.nominal_evolution(z) + math.sqrt(aset.gamma0(z)) * v
    mu = aset.nominal_mean + math.sqrt(aset.gamma1 * lam) * v
    sigma = aset.gamma2 * aset.nominal_cov - aset.gamma1 * lam * np.outer(v, v)
    return SdsStepRealization(nu, mu, sigma)


@dataclass(frozen=True)
class BoundsReport:
    upper: float
    lower: float
    gap: float
    per_step_upper: tuple[float, ...]
    per_step_lower: tuple[float, ...]
    horizon: int
    gamma0_caps: tuple[float, ...]

    def to_dict(self) -> dict:
        return asdict(self)


def upper_bound(sets: Sequence[AmbiguitySet]) -> tuple[list[float], float]:
    per_step = [noise_drpp_value(s) for s in sets]
    return per_step, math.fsum(per_step)


def _lower_term(aset: AmbiguitySet, cap: float) -> float:
    sol = p3_solve(aset.spectrum.eigenvalues, cap, aset.gamma1, aset.gamma2)
    return -0.5 * (aset.state_dim * math.log(2 * math.pi) + sol.objective)


def lower_bound(sets: Sequence[AmbiguitySet], gamma0_caps: Sequence[float]) -> tuple[list[float], float]:
    if len(sets) != len(gamma0_caps):
        raise DimensionMismatch("one gamma0 cap is needed per step")
    per_step = [_lower_term(s, float(cap)) for s, cap in zip(sets, gamma0_caps)]
    return per_step, math.fsum(per_step)


def gap_bound(sets: Sequence[AmbiguitySet], gamma0_caps: Sequence[float]) -> float:
    """Upper bound on the Eig-DRPP optimality gap, summed term by term."""
    if len(sets) != len(gamma0_caps):
        raise DimensionMismatch("one gamma0 cap is needed per step")
    terms = []
    for s, cap in zip(sets, gamma0_caps):
        lam = s.spectrum.eigenvalues
        sol = p3_solve(lam, float(cap), s.gamma1, s.gamma2)
        _, logdet = np.linalg.slogdet(s.gamma2 * s.nominal_cov)
        from_upper = s.state_dim + logdet
        from_lower = -np.sum(np.log(sol.lambdas_hat) + s.gamma2 * lam / sol.lambdas_hat)
        from_lower -= sol.weights[sol.j_star] / sol.lambdas_hat[sol.j_star]
        terms.append(-0.5 * (from_upper + from_lower))
    return math.fsum(terms)


def compute_bounds(sets: Sequence[AmbiguitySet], gamma0_caps: Sequence[float] | None = None) -> BoundsReport:
    """Offline bounds for a horizon of ambiguity sets.

    Caps default to each set's supremum of gamma0.
    """
    if not sets:
        raise EmptyInput("need at least one ambiguity set")
    if gamma0_caps is None:
        gamma0_caps = [s.gamma0.supremum() for s in sets]
    if any(not math.isfinite(c) for c in gamma0_caps):
        raise ValueError("gamma0 is unbounded; pass explicit finite caps")
    up, up_total = upper_bound(sets)
    lo, lo_total = lower_bound(sets, gamma0_caps)
    return BoundsReport(
        upper=up_total,
        lower=lo_total,
        gap=gap_bound(sets, gamma0_caps),
        per_step_upper=tuple(up),
        per_step_lower=tuple(lo),
        horizon=len(sets),
        gamma0_caps=tuple(float(c) for c in gamma0_caps),
    )


class Verdict(str, enum.Enum):
    TOO_LARGE = "too_large"
    TOO_SMALL = "too_small"
    CONSISTENT = "consistent"


@dataclass(frozen=True)
class AmbiguityVerdict:
    verdict: Verdict
    steps_above_upper: int
    steps_below_lower: int
    horizon: int

    def to_dict(self) -> dict:
        return {"verdict": self.verdict.value, "steps_above_upper": self.steps_above_upper,
                "steps_below_lower": self.steps_below_lower, "horizon": self.horizon}


def diagnose_ambiguity(step_mean_scores, per_step_upper, per_step_lower, fraction: float = 1.0) -> AmbiguityVerdict:
    """Compare running mean cumulative scores with the cumulative bounds.

    ``too_large`` when the score sits above the upper bound on at least ``fraction``
    of the steps, ``too_small`` when it sits below the lower bound that often.
    """
    scores = np.asarray(step_mean_scores, dtype=float)
    up = np.asarray(per_step_upper, dtype=float)
    lo = np.asarray(per_step_lower, dtype=float)
    if scores.size == 0:
        raise EmptyInput("no scores to diagnose")
    if not scores.shape == up.shape == lo.shape:
        raise DimensionMismatch("scores and bounds must have the same length")
    if not 0.0 < fraction <= 1.0:
        raise ValueError("fraction must lie in (0, 1]")
    cum = np.cumsum(scores)
    above = int(np.sum(cum > np.cumsum(up)))
    below = int(np.sum(cum < np.cumsum(lo)))
    need = math.ceil(fraction * scores.size)
    if above >= need:
        verdict = Verdict.TOO_LARGE
    elif below >= need:
        verdict = Verdict.TOO_SMALL
    else:
        verdict = Verdict.CONSISTENT
    return AmbiguityVerdict(verdict, above, below, int(scores.size))
