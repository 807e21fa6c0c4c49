"""Conic moment-based ambiguity sets for one step of a stochastic dynamical system."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .core import (
    SpectralDecomposition,
    as_vector,
    mahalanobis_sq,
    require_spd,
    spectral_decompose,
    symmetrize,
)
from .errors import DimensionMismatch, NotPsd, ValidationError

PSD_SLACK = 1e-9


@dataclass(frozen=True)
class Gamma0:
    """Evolution-uncertainty radius as a function of the state-control pair.

    ``clipped_norm`` gives ``min(coefficient * ||z||_2, cap) ** 2``; ``constant``
    gives ``value`` everywhere.
    """

    kind: str = "clipped_norm"
    coefficient: float = 0.0
    cap: float = math.inf
    value: float = 0.0

    def __post_init__(self):
        if self.kind not in ("clipped_norm", "constant"):
            raise ValidationError(f"unknown gamma0 family {self.kind!r}", "gamma0.kind")
        if self.kind == "clipped_norm":
            if self.coefficient < 0 or self.cap < 0:
                raise ValidationError("coefficient and cap must be nonnegative", "gamma0")
        elif self.value < 0:
            raise ValidationError("constant gamma0 must be nonnegative", "gamma0.value")

    @classmethod
    def constant(cls, value: float) -> "Gamma0":
        return cls(kind="constant", value=float(value))

    def __call__(self, z) -> float:
        if self.kind == "constant":
            return float(self.value)
        r = min(self.coefficient * float(np.linalg.norm(as_vector(z))), self.cap)
        return r * r

    def supremum(self) -> float:
        """Smallest Γ with gamma0(z) <= Γ for every z."""
        if self.kind == "constant":
            return float(self.value)
        if self.coefficient == 0.0:
            return 0.0
        return self.cap * self.cap


@dataclass(frozen=True, eq=False)
class AmbiguitySet:
    """Nominal affine model plus uncertainty radii for one prediction step.

    The nominal evolution is ``A @ x + B @ u``; the noise support is the whole space.
    """

    A: np.ndarray
    B: np.ndarray
    nominal_mean: np.ndarray
    nominal_cov: np.ndarray
    gamma0: Gamma0 = field(default_factory=Gamma0)
    gamma1: float = 0.0
    gamma2: float = 1.0
    gamma3: float = 0.0

    def __post_init__(self):
        A = np.atleast_2d(np.array(self.A, dtype=float))
        B = np.atleast_2d(np.array(self.B, dtype=float))
        d = A.shape[0]
        if A.shape != (d, d):
            raise ValidationError(f"A must be square, got shape {A.shape}", "ambiguity.A")
        if B.shape[0] != d:
            raise ValidationError(f"B must have {d} rows, got shape {B.shape}", "ambiguity.B")
        mu = as_vector(self.nominal_mean).copy()
        if mu.shape[0] != d:
            raise ValidationError("nominal_mean length differs from state dimension", "ambiguity.nominal_mean")
        try:
            cov = require_spd(self.nominal_cov, "nominal_cov")
        except Exception as exc:
            raise ValidationError(str(exc), "ambiguity.nominal_cov") from exc
        if cov.shape[0] != d:
            raise ValidationError("nominal_cov shape differs from state dimension", "ambiguity.nominal_cov")
        if self.gamma1 < 0:
            raise ValidationError("gamma1 must be nonnegative", "ambiguity.gamma1")
        if self.gamma2 <= 0:
            raise ValidationError("gamma2 must be positive", "ambiguity.gamma2")
        if not 0 <= self.gamma3 <= self.gamma2:
            raise ValidationError("need 0 <= gamma3 <= gamma2", "ambiguity.gamma3")
        for name, val in (("A", A), ("B", B), ("nominal_mean", mu), ("nominal_cov", cov)):
            val.setflags(write=False)
            object.__setattr__(self, name, val)
        for name in ("gamma1", "gamma2", "gamma3"):
            object.__setattr__(self, name, float(getattr(self, name)))

    @property
    def state_dim(self) -> int:
        return self.A.shape[0]

    @property
    def control_dim(self) -> int:
        return self.B.shape[1]

    @cached_property
    def spectrum(self) -> SpectralDecomposition:
        return spectral_decompose(self.nominal_cov)

    @cached_property
    def nominal_cov_inv(self) -> np.ndarray:
        return np.linalg.inv(self.nominal_cov)

    def split(self, z) -> tuple[np.ndarray, np.ndarray]:
        z = as_vector(z, self.state_dim + self.control_dim)
        return z[: self.state_dim], z[self.state_dim :]

    def pair(self, x, u) -> np.ndarray:
        return np.concatenate([as_vector(x, self.state_dim), as_vector(u, self.control_dim)])

    def nominal_evolution(self, z) -> np.ndarray:
        x, u = self.split(z)
        return self.A @ x + self.B @ u

    def with_gamma0(self, gamma0: Gamma0) -> "AmbiguitySet":
        return AmbiguitySet(
            self.A, self.B, self.nominal_mean, self.nominal_cov,
            gamma0, self.gamma1, self.gamma2, self.gamma3,
        )


def gamma0_eval(aset: AmbiguitySet, z) -> float:
    return aset.gamma0(as_vector(z, aset.state_dim + aset.control_dim))


@dataclass(frozen=True, eq=False)
class SdsStepRealization:
    """One in-set system step: evolution value, noise mean and noise covariance."""

    evolution: np.ndarray
    noise_mean: np.ndarray
    noise_cov: np.ndarray

    def __post_init__(self):
        nu = as_vector(self.evolution)
        mu = as_vector(self.noise_mean, nu.shape[0])
        cov = symmetrize(self.noise_cov)
        if cov.shape[0] != nu.shape[0]:
            raise DimensionMismatch("noise_cov shape differs from state dimension")
        if np.linalg.eigvalsh(cov).min() < -PSD_SLACK * max(1.0, np.abs(cov).max()):
            raise NotPsd("noise covariance is not PSD")
        object.__setattr__(self, "evolution", nu)
        object.__setattr__(self, "noise_mean", mu)
        object.__setattr__(self, "noise_cov", cov)

    @property
    def next_state_mean(self) -> np.ndarray:
        return self.evolution + self.noise_mean


@dataclass(frozen=True)
class Violation:
    constraint: str
    margin: float  # amount by which the constraint is exceeded


@dataclass(frozen=True)
class MembershipReport:
    ok: bool
    violations: tuple[Violation, ...] = ()

    def __bool__(self) -> bool:
        return self.ok

    def names(self) -> set[str]:
        return {v.constraint for v in self.violations}


def contains(aset: AmbiguitySet, z, r: SdsStepRealization) -> MembershipReport:
    """Check the four moment constraints of ``aset`` for realization ``r`` at ``z``."""
    d = aset.state_dim
    z = as_vector(z, d + aset.control_dim)
    if r.evolution.shape[0] != d:
        raise DimensionMismatch("realization dimension differs from the ambiguity set")
    violations = []

    g0 = aset.gamma0(z)
    shift = r.evolution - aset.nominal_evolution(z)
    excess = float(shift @ shift) - g0
    if excess > PSD_SLACK * (1.0 + g0):
        violations.append(Violation("evolution", excess))

    a = r.noise_mean - aset.nominal_mean
    excess = mahalanobis_sq(r.noise_mean, aset.nominal_mean, aset.nominal_cov) - aset.gamma1
    if excess > PSD_SLACK * (1.0 + aset.gamma1):
        violations.append(Violation("mean", excess))

    second = r.noise_cov + np.outer(a, a)
    low = np.linalg.eigvalsh(second - aset.gamma3 * aset.nominal_cov).min()
    if low < -PSD_SLACK:
        violations.append(Violation("second_moment_lower", -float(low)))
    high = np.linalg.eigvalsh(aset.gamma2 * aset.nominal_cov - second).min()
    if high < -PSD_SLACK:
        violations.append(Violation("second_moment_upper", -float(high)))

    return MembershipReport(ok=not violations, violations=tuple(violations))
