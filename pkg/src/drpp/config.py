"""JSON experiment configuration: strict schema, invariant checks and the reference preset."""

from __future__ import annotations

import json
import math
from typing import Literal, Optional

import numpy as np
import pydantic
from pydantic import BaseModel, ConfigDict, Field, model_validator

from .ambiguity import AmbiguitySet, Gamma0
from .errors import SchemaError, ValidationError
from .predictors import PredictorKind
from .sim import Controller, ControllerKind, Experiment, MechanismKind, MechanismParams

PredictorName = Literal["nominal", "noise_drpp", "eig_drpp", "oracle"]
Matrix = list[list[float]]


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class Gamma0Config(_Strict):
    kind: Literal["clipped_norm", "constant"] = "clipped_norm"
    coefficient: float = 0.0
    cap: Optional[float] = None  # null means no cap
    value: float = 0.0

    def build(self) -> Gamma0:
        cap = math.inf if self.cap is None else self.cap
        return Gamma0(self.kind, self.coefficient, cap, self.value)


class AmbiguityConfig(_Strict):
    A: Matrix
    B: Matrix
    nominal_mean: list[float]
    nominal_cov: Matrix
    gamma0: Gamma0Config = Gamma0Config()
    gamma1: float
    gamma2: float
    gamma3: float = 0.0

    def build(self) -> AmbiguitySet:
        try:
            A, B, cov = np.array(self.A, float), np.array(self.B, float), np.array(self.nominal_cov, float)
        except ValueError as exc:
            raise ValidationError(f"ragged matrix: {exc}", "ambiguity") from exc
        for name, M in (("A", A), ("B", B), ("nominal_cov", cov)):
            if M.ndim != 2:
                raise ValidationError("expected a rectangular matrix", f"ambiguity.{name}")
        return AmbiguitySet(A, B, self.nominal_mean, cov, self.gamma0.build(),
                            self.gamma1, self.gamma2, self.gamma3)

    @classmethod
    def from_set(cls, aset: AmbiguitySet) -> "AmbiguityConfig":
        g = aset.gamma0
        return cls(
            A=aset.A.tolist(), B=aset.B.tolist(),
            nominal_mean=aset.nominal_mean.tolist(), nominal_cov=aset.nominal_cov.tolist(),
            gamma0=Gamma0Config(kind=g.kind, coefficient=g.coefficient,
                                cap=None if math.isinf(g.cap) else g.cap, value=g.value),
            gamma1=aset.gamma1, gamma2=aset.gamma2, gamma3=aset.gamma3,
        )


class MechanismConfig(_Strict):
    kind: Literal["lti", "ltv", "adversarial"] = "lti"
    a1_scale: float = 0.3
    a2_scale: float = 0.3
    noise_mean_scale: float = 0.5

    def build(self) -> MechanismParams:
        return MechanismParams(MechanismKind(self.kind), self.a1_scale, self.a2_scale, self.noise_mean_scale)


class ControllerConfig(_Strict):
    kind: Literal["zero", "lqr"] = "zero"
    state_weight: Optional[Matrix] = None
    input_weight: Optional[Matrix] = None

    def build(self) -> Controller:
        Qw = None if self.state_weight is None else np.array(self.state_weight, float)
        Rw = None if self.input_weight is None else np.array(self.input_weight, float)
        if Qw is not None and np.linalg.eigvalsh(0.5 * (Qw + Qw.T)).min() < 0:
            raise ValidationError("state weight must be PSD", "controller.state_weight")
        if Rw is not None and np.linalg.eigvalsh(0.5 * (Rw + Rw.T)).min() <= 0:
            raise ValidationError("input weight must be positive definite", "controller.input_weight")
        return Controller(ControllerKind(self.kind), Qw, Rw)


class ExperimentConfig(_Strict):
    horizon: int = Field(gt=0)
    n_trajectories: int = Field(gt=0)
    initial_state: list[float]
    mechanism: MechanismConfig = MechanismConfig()
    controller: ControllerConfig = ControllerConfig()
    ambiguity: AmbiguityConfig
    predictors: Optional[list[PredictorName]] = None
    adversary_target: PredictorName = "eig_drpp"
    beta: float = Field(default=0.9, gt=0.0, lt=1.0)
    seed: int = Field(default=0, ge=0, lt=2**64)
    output_dir: str = "drpp_output"
    ellipse_steps: Optional[list[int]] = None
    verdict_fraction: float = Field(default=1.0, gt=0.0, le=1.0)

    @model_validator(mode="before")
    @classmethod
    def _default_predictors(cls, data):
        if isinstance(data, dict) and data.get("predictors") is None:
            data = dict(data)
            mech = data.get("mechanism") or {}
            kind = mech.get("kind", "lti") if isinstance(mech, dict) else getattr(mech, "kind", "lti")
            names = [k.value for k in PredictorKind]
            if kind == "adversarial":
                names.remove("oracle")
            data["predictors"] = names
        return data

    def build_ambiguity(self) -> AmbiguitySet:
        return self.ambiguity.build()

    def to_experiment(self) -> Experiment:
        aset = self.build_ambiguity()
        if len(self.initial_state) != aset.state_dim:
            raise ValidationError("initial_state length differs from the state dimension", "initial_state")
        if len(set(self.predictors)) != len(self.predictors):
            raise ValidationError("duplicate predictor", "predictors")
        for k in self.ellipse_steps or []:
            if not 0 <= k < self.horizon:
                raise ValidationError(f"ellipse step {k} outside [0, horizon)", "ellipse_steps")
        return Experiment(
            aset=aset,
            horizon=self.horizon,
            initial_state=np.array(self.initial_state, float),
            mechanism=self.mechanism.build(),
            controller=self.controller.build(),
            predictors=tuple(PredictorKind(p) for p in self.predictors),
            adversary_target=PredictorKind(self.adversary_target),
            beta=self.beta,
        )


def _loc(err: dict) -> str:
    return ".".join(str(p) for p in err.get("loc", ()))


def load_config_data(data) -> ExperimentConfig:
    try:
        cfg = ExperimentConfig.model_validate(data)
    except pydantic.ValidationError as exc:
        first = exc.errors()[0]
        raise SchemaError(_loc(first), first["msg"]) from exc
    cfg.to_experiment()  # re-validate domain invariants
    return cfg


def parse_config(text: str) -> ExperimentConfig:
    """Parse and validate a JSON experiment configuration."""
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError("", f"malformed JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise SchemaError("", "top-level JSON value must be an object")
    return load_config_data(data)


def serialize_config(cfg: ExperimentConfig) -> str:
    return cfg.model_dump_json(indent=2)


def reference_preset(**overrides) -> ExperimentConfig:
    """The two-dimensional experiment setting used for the published figures."""
    data = {
        "horizon": 32,
        "n_trajectories": 1000,
        "initial_state": [2.0, 1.0],
        "mechanism": {"kind": "lti"},
        "controller": {"kind": "zero"},
        "ambiguity": {
            "A": [[1.0, 0.1], [0.0, 1.0]],
            "B": [[1.0, 0.0], [0.0, 1.0]],
            "nominal_mean": [0.0, 0.0],
            "nominal_cov": [[1.0, 0.5], [0.5, 1.5]],
            "gamma0": {"kind": "clipped_norm", "coefficient": 0.3, "cap": 5.0},
            "gamma1": 0.5,
            "gamma2": 3.0,
            "gamma3": 0.0,
        },
        "adversary_target": "eig_drpp",
        "beta": 0.9,
        "seed": 7,
    }
    data.update(overrides)
    return load_config_data(data)

