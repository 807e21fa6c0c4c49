"""Ground-truth mechanisms, controllers and the Monte-Carlo prediction loop."""

from __future__ import annotations

import enum
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .ambiguity import AmbiguitySet, SdsStepRealization, contains
from .core import GaussianPdf, as_vector, confidence_scale, gaussian_log_density
from .errors import EmptyInput, MechanismOrderViolation, NoConvergence, ValidationError
from .predictors import PredictorKind, oracle_predict, predict
from .worstcase import eig_worst_step

PREDICTOR_ORDER = (
    PredictorKind.NOMINAL,
    PredictorKind.NOISE_DRPP,
    PredictorKind.EIG_DRPP,
    PredictorKind.ORACLE,
)


class MechanismKind(str, enum.Enum):
    LTI = "lti"
    LTV = "ltv"
    ADVERSARIAL = "adversarial"


class ControllerKind(str, enum.Enum):
    ZERO = "zero"
    LQR = "lqr"


@dataclass(frozen=True)
class MechanismParams:
    """Perturbation scales of the randomized linear mechanisms.

    A draw perturbs entry (0, 1) of A by ``a1_scale * alpha1`` and of B by
    ``a2_scale * alpha2``; the noise is Gaussian with mean
    ``nominal_mean + noise_mean_scale * alpha3`` and second moment about the
    nominal mean equal to ``gamma2 * nominal_cov``.
    """

    kind: MechanismKind = MechanismKind.LTI
    a1_scale: float = 0.3
    a2_scale: float = 0.3
    noise_mean_scale: float = 0.5


@dataclass(frozen=True)
class Alphas:
    a1: float
    a2: float
    a3: np.ndarray


def draw_alphas(rng: np.random.Generator) -> Alphas:
    a = rng.uniform(-1.0, 1.0, size=4)
    return Alphas(float(a[0]), float(a[1]), a[2:4].copy())


def perturbed_step(aset: AmbiguitySet, params: MechanismParams, alphas: Alphas, z) -> SdsStepRealization:
    if aset.state_dim < 2 or aset.control_dim < 2:
        raise ValidationError("the randomized linear mechanisms need two states and two inputs")
    x, u = aset.split(z)
    A = aset.A.copy()
    B = aset.B.copy()
    A[0, 1] += params.a1_scale * alphas.a1
    B[0, 1] += params.a2_scale * alphas.a2
    shift = np.zeros(aset.state_dim)
    shift[:2] = params.noise_mean_scale * alphas.a3
    cov = aset.gamma2 * aset.nominal_cov - np.outer(shift, shift)
    return SdsStepRealization(A @ x + B @ u, aset.nominal_mean + shift, cov)


def lti_mechanism_sample(aset: AmbiguitySet, rng: np.random.Generator,
                         params: MechanismParams = MechanismParams()) -> Callable[[np.ndarray], SdsStepRealization]:
    """Draw one time-invariant system; the returned function realizes it at any ``z``."""
    alphas = draw_alphas(rng)
    return lambda z: perturbed_step(aset, params, alphas, z)


def ltv_mechanism_sample(aset: AmbiguitySet, z, rng: np.random.Generator,
                         params: MechanismParams = MechanismParams()) -> SdsStepRealization:
    return perturbed_step(aset, params, draw_alphas(rng), z)


def adversarial_mechanism_step(aset: AmbiguitySet, z, predictions: Mapping[PredictorKind, GaussianPdf],
                               target: PredictorKind = PredictorKind.EIG_DRPP) -> SdsStepRealization:
    if target not in predictions:
        raise MechanismOrderViolation(f"{PredictorKind(target).value} has not predicted this step yet")
    return eig_worst_step(aset, z, predictions[target].covariance)


def sample_next_state(truth: SdsStepRealization, rng: np.random.Generator) -> np.ndarray:
    xi = rng.standard_normal(truth.evolution.shape[0])
    try:
        root = np.linalg.cholesky(truth.noise_cov)
    except np.linalg.LinAlgError:
        w, V = np.linalg.eigh(truth.noise_cov)
        root = V * np.sqrt(np.clip(w, 0.0, None))
    return truth.next_state_mean + root @ xi


def lqr_gain(A, B, Qw, Rw, tol: float = 1e-12, max_iter: int = 100_000) -> np.ndarray:
    """Infinite-horizon discrete LQR gain K (control law u = -K x) by Riccati iteration."""
    A, B = np.atleast_2d(A).astype(float), np.atleast_2d(B).astype(float)
    Qw, Rw = np.atleast_2d(Qw).astype(float), np.atleast_2d(Rw).astype(float)
    P = Qw.copy()
    for _ in range(max_iter):
        BtP = B.T @ P
        gain = np.linalg.solve(Rw + BtP @ B, BtP @ A)
        P_next = A.T @ P @ A - A.T @ P @ B @ gain + Qw
        P_next = 0.5 * (P_next + P_next.T)
        if np.max(np.abs(P_next - P)) <= tol * (1.0 + np.max(np.abs(P_next))):
            P = P_next
            BtP = B.T @ P
            return np.linalg.solve(Rw + BtP @ B, BtP @ A)
        P = P_next
    raise NoConvergence(f"Riccati iteration did not converge in {max_iter} iterations")


def riccati_residual(A, B, Qw, Rw, K) -> float:
    """Residual of the discrete algebraic Riccati equation at the value matrix implied by K."""
    A, B = np.atleast_2d(A).astype(float), np.atleast_2d(B).astype(float)
    Acl = A - B @ K
    # closed-loop Lyapunov equation gives P for this gain
    n = A.shape[0]
    rhs = (np.atleast_2d(Qw) + K.T @ np.atleast_2d(Rw) @ K).reshape(-1)
    P = np.linalg.solve(np.eye(n * n) - np.kron(Acl.T, Acl.T), rhs).reshape(n, n)
    BtP = B.T @ P
    ric = A.T @ P @ A - A.T @ P @ B @ np.linalg.solve(Rw + BtP @ B, BtP @ A) + Qw
    return float(np.linalg.norm(P - ric))


@dataclass(frozen=True)
class Controller:
    kind: ControllerKind = ControllerKind.ZERO
    state_weight: np.ndarray | None = None
    input_weight: np.ndarray | None = None

    def gain(self, aset: AmbiguitySet) -> np.ndarray:
        if self.kind is ControllerKind.ZERO:
            return np.zeros((aset.control_dim, aset.state_dim))
        Qw = np.eye(aset.state_dim) if self.state_weight is None else np.asarray(self.state_weight, float)
        Rw = np.eye(aset.control_dim) if self.input_weight is None else np.asarray(self.input_weight, float)
        return lqr_gain(aset.A, aset.B, Qw, Rw)


@dataclass(frozen=True, eq=False)
class Experiment:
    """Runtime description of one simulation cell."""

    aset: AmbiguitySet
    horizon: int
    initial_state: np.ndarray
    mechanism: MechanismParams = MechanismParams()
    controller: Controller = Controller()
    predictors: tuple[PredictorKind, ...] = PREDICTOR_ORDER
    adversary_target: PredictorKind = PredictorKind.EIG_DRPP
    beta: float = 0.9
    gain: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        kinds = tuple(k for k in PREDICTOR_ORDER if k in {PredictorKind(p) for p in self.predictors})
        object.__setattr__(self, "predictors", kinds)
        object.__setattr__(self, "initial_state", as_vector(self.initial_state, self.aset.state_dim))
        object.__setattr__(self, "gain", self.controller.gain(self.aset))
        if self.horizon < 1:
            raise ValidationError("horizon must be positive", "horizon")
        if self.mechanism.kind is MechanismKind.ADVERSARIAL:
            if PredictorKind.ORACLE in kinds:
                raise ValidationError("the adversarial mechanism has no oracle predictor", "predictors")
            if self.adversary_target not in kinds:
                raise ValidationError("the adversary target must be one of the predictors", "adversary_target")


@dataclass(eq=False)
class TrajectoryRecord:
    """Everything logged along one trajectory.

    ``cumulative[kind][k]`` is the score after k steps, so it has T+1 entries and
    starts at zero.
    """

    traj_id: int
    states: np.ndarray
    controls: np.ndarray
    gamma0: np.ndarray
    truths: list[SdsStepRealization]
    means: dict[PredictorKind, np.ndarray]
    covs: dict[PredictorKind, np.ndarray]
    step_scores: dict[PredictorKind, np.ndarray]
    cumulative: dict[PredictorKind, np.ndarray]

    @property
    def horizon(self) -> int:
        return self.controls.shape[0]

    def pair(self, k: int) -> np.ndarray:
        return np.concatenate([self.states[k], self.controls[k]])

    def prediction(self, kind: PredictorKind, k: int) -> GaussianPdf:
        return GaussianPdf(self.means[kind][k], self.covs[kind][k])


def trajectory_rng(seed: int, traj_id: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(traj_id,)))


def run_trajectory(exp: Experiment, rng: np.random.Generator, traj_id: int = 0) -> TrajectoryRecord:
    aset, T = exp.aset, exp.horizon
    d, du = aset.state_dim, aset.control_dim
    kinds = exp.predictors
    mech = exp.mechanism.kind

    states = np.empty((T + 1, d))
    controls = np.empty((T, du))
    gamma0 = np.empty(T)
    means = {k: np.empty((T, d)) for k in kinds}
    covs = {k: np.empty((T, d, d)) for k in kinds}
    scores = {k: np.empty(T) for k in kinds}
    truths = []

    lti = lti_mechanism_sample(aset, rng, exp.mechanism) if mech is MechanismKind.LTI else None
    x = exp.initial_state.copy()
    states[0] = x
    for k in range(T):
        u = -exp.gain @ x
        z = np.concatenate([x, u])
        controls[k] = u
        gamma0[k] = aset.gamma0(z)
        preds = {kind: predict(kind, aset, z) for kind in kinds if kind is not PredictorKind.ORACLE}
        if mech is MechanismKind.LTI:
            truth = lti(z)
        elif mech is MechanismKind.LTV:
            truth = ltv_mechanism_sample(aset, z, rng, exp.mechanism)
        else:
            truth = adversarial_mechanism_step(aset, z, preds, exp.adversary_target)
        if PredictorKind.ORACLE in kinds:
            preds[PredictorKind.ORACLE] = oracle_predict(truth, z)
        x = sample_next_state(truth, rng)
        truths.append(truth)
        states[k + 1] = x
        for kind in kinds:
            p = preds[kind]
            means[kind][k] = p.mean
            covs[kind][k] = p.covariance
            scores[kind][k] = gaussian_log_density(p, x)

    cumulative = {k: np.concatenate([[0.0], np.cumsum(scores[k])]) for k in kinds}
    return TrajectoryRecord(traj_id, states, controls, gamma0, truths, means, covs, scores, cumulative)


def _run_one(args) -> TrajectoryRecord:
    exp, seed, traj_id = args
    return run_trajectory(exp, trajectory_rng(seed, traj_id), traj_id)


def simulate(exp: Experiment, n_trajectories: int, seed: int, workers: int = 1) -> list[TrajectoryRecord]:
    """Run ``n_trajectories`` independent trajectories; output does not depend on ``workers``."""
    jobs = [(exp, seed, i) for i in range(n_trajectories)]
    if workers <= 1:
        return [_run_one(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_one, jobs, chunksize=max(1, n_trajectories // (4 * workers))))


def membership_violations(aset: AmbiguitySet, records: Sequence[TrajectoryRecord]) -> list[tuple[int, int, tuple]]:
    """(traj_id, k, violations) for every realized step that leaves the ambiguity set."""
    out = []
    for rec in records:
        for k, truth in enumerate(rec.truths):
            report = contains(aset, rec.pair(k), truth)
            if not report:
                out.append((rec.traj_id, k, report.violations))
    return out


@dataclass(frozen=True, eq=False)
class ScoreSummary:
    """Per-step statistics of the temporal average score s_{k+1}/(k+1) across trajectories."""

    predictors: tuple[PredictorKind, ...]
    mean: dict[PredictorKind, np.ndarray]
    p5: dict[PredictorKind, np.ndarray]
    p95: dict[PredictorKind, np.ndarray]
    n_trajectories: int

    @property
    def horizon(self) -> int:
        return next(iter(self.mean.values())).shape[0]


def aggregate_scores(records: Sequence[TrajectoryRecord]) -> ScoreSummary:
    if not records:
        raise EmptyInput("no trajectories to aggregate")
    T = records[0].horizon
    if any(r.horizon != T for r in records):
        raise ValidationError("trajectories have different horizons")
    kinds = tuple(records[0].cumulative)
    steps = np.arange(1, T + 1)
    mean, p5, p95 = {}, {}, {}
    for kind in kinds:
        avg = np.stack([r.cumulative[kind][1:] / steps for r in records])
        mean[kind] = avg.mean(axis=0)
        p5[kind] = np.percentile(avg, 5, axis=0, method="inverted_cdf")
        p95[kind] = np.percentile(avg, 95, axis=0, method="inverted_cdf")
    return ScoreSummary(kinds, mean, p5, p95, len(records))


@dataclass(frozen=True, eq=False)
class ConfidenceEllipse:
    center: np.ndarray
    shape: np.ndarray
    scale: float
    beta: float

    def contains(self, x) -> bool:
        r = as_vector(x, self.center.shape[0]) - self.center
        return float(r @ np.linalg.solve(self.shape, r)) <= self.scale

    def to_dict(self) -> dict:
        return {"center": self.center.tolist(), "shape": self.shape.tolist(),
                "scale": self.scale, "beta": self.beta}


def confidence_ellipse(p: GaussianPdf, beta: float) -> ConfidenceEllipse:
    return ConfidenceEllipse(p.mean.copy(), p.covariance.copy(), confidence_scale(beta, p.dim), beta)


def coverage(records: Sequence[TrajectoryRecord], kind: PredictorKind, beta: float) -> float:
    """Fraction of realized next states inside the predictor's beta-ellipse."""
    if not records:
        raise EmptyInput("no trajectories")
    q = confidence_scale(beta, records[0].states.shape[1])
    hits = total = 0
    for rec in records:
        r = rec.states[1:] - rec.means[kind]
        m = np.einsum("ti,ti->t", r, np.linalg.solve(rec.covs[kind], r[..., None])[..., 0])
        hits += int(np.sum(m <= q))
        total += m.size
    return hits / total


def default_ellipse_steps(horizon: int) -> list[int]:
    steps = {0, horizon // 4, horizon // 2, (3 * horizon) // 4, horizon - 1}
    return sorted(s for s in steps if 0 <= s < horizon)


def mean_step_scores(records: Sequence[TrajectoryRecord], kind: PredictorKind) -> np.ndarray:
    return np.mean([r.step_scores[kind] for r in records], axis=0)
