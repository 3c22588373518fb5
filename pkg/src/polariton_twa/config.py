"""Scenario configuration: schema, defaults and validation.

Configs are YAML (JSON also parses). Unknown keys are rejected. A model can
be given either by target quantities (``f``, ``zeta``, ``rho_m``) or by the
raw saturation-law constants plus ``chi0``; mixing the two is an error.

Example::

    scenario: steady-state
    model: {law: linear, f: 2, zeta: 0.6, rho_m: 200}
    integrator: {dt: 0.001, n_traj: 10000, seed: 42, burn_in: 10}
    observe_at: [0, 5]
    output: {dir: out/steady, format: json}
"""

from __future__ import annotations

import copy
from typing import Literal, Optional, Union

import numpy as np
import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .errors import ConfigError
from .model import LinearSaturation, ModelParams, NonlinearSaturation, Protocol
from .sde import IntegratorConfig, NoiseDensityMode

Scenario = Literal["vacuum-check", "steady-state", "phase-diagram", "quench"]

_DEFAULT_OBSERVE = {
    "vacuum-check": [float(t) for t in np.linspace(0.0, 20.0, 21)],
    "steady-state": [0.0],
    "quench": [float(t) for t in np.round(np.linspace(0.0, 3.0, 31), 10)],
    "phase-diagram": [],
}


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class ModelSection(_Strict):
    law: Literal["linear", "nonlinear"] = "linear"
    Gamma: float = Field(1.0, gt=0)
    eta: float = Field(1.0, ge=1)
    f: Optional[float] = Field(None, gt=0)
    zeta: Optional[float] = None
    rho_m: Optional[float] = Field(None, gt=0)
    P0: Optional[float] = Field(None, ge=0)
    alpha: Optional[float] = Field(None, ge=0)
    P: Optional[float] = Field(None, ge=0)
    R: Optional[float] = Field(None, gt=0)
    gamma_R: Optional[float] = Field(None, gt=0)
    chi0: Optional[float] = Field(None, ge=0)

    @field_validator("zeta")
    @classmethod
    def _zeta_range(cls, v):
        if v is not None and not 0.0 <= v <= 1.0:
            raise ValueError(f"zeta = {v} outside the stable region [0, 1]")
        return v

    @model_validator(mode="after")
    def _one_parametrization(self):
        targets = [self.f, self.zeta, self.rho_m]
        raw = {"linear": ("P0", "alpha"), "nonlinear": ("P", "R", "gamma_R")}[self.law]
        other = {"linear": ("P", "R", "gamma_R"), "nonlinear": ("P0", "alpha")}[self.law]
        given_raw = [getattr(self, k) for k in raw] + [self.chi0]
        if any(getattr(self, k) is not None for k in other):
            raise ValueError(f"keys {other} do not belong to the {self.law} law")
        if any(v is not None for v in targets):
            if any(v is not None for v in given_raw):
                raise ValueError("give either targets (f, zeta, rho_m) or law constants, not both")
            if any(v is None for v in targets):
                raise ValueError("target parametrization needs all of f, zeta, rho_m")
            if self.law == "nonlinear" and self.zeta >= 1.0:
                raise ValueError("zeta must be < 1 for the nonlinear law")
        else:
            if any(getattr(self, k) is None for k in raw):
                raise ValueError(f"{self.law} law needs {raw} (or targets f, zeta, rho_m)")
            chi0 = self.chi0 or 0.0
            if not 0.0 <= 2.0 * chi0 / self.Gamma <= 1.0:
                raise ValueError(f"zeta = 2 chi0 / Gamma = {2 * chi0 / self.Gamma:g} outside [0, 1]")
        return self

    def build(self, protocol: Protocol = Protocol.CONSTANT_CHI) -> ModelParams:
        if self.f is not None:
            if self.law == "linear":
                return ModelParams.linear_from_targets(self.f, self.zeta, self.rho_m, Gamma=self.Gamma,
                                                       eta=self.eta, protocol=protocol)
            return ModelParams.nonlinear_from_targets(self.f, self.zeta, self.rho_m, Gamma=self.Gamma,
                                                      eta=self.eta, protocol=protocol)
        if self.law == "linear":
            law = LinearSaturation(P0=self.P0, alpha=self.alpha)
        else:
            law = NonlinearSaturation(P=self.P, R=self.R, gamma_R=self.gamma_R)
        return ModelParams(law, Gamma=self.Gamma, eta=self.eta, chi0=self.chi0 or 0.0, protocol=protocol)


class IntegratorSection(_Strict):
    dt: float = Field(1e-3, gt=0)
    n_traj: int = Field(10_000, ge=100)
    seed: int = Field(42, ge=0, lt=2**64)
    burn_in: float = Field(20.0, ge=0)
    noise_density_mode: NoiseDensityMode = NoiseDensityMode.SELF_CONSISTENT_MEAN
    n_workers: int = Field(1, ge=1)

    def build(self) -> IntegratorConfig:
        return IntegratorConfig(dt=self.dt, n_traj=self.n_traj, seed=self.seed, burn_in=self.burn_in,
                                noise_density_mode=self.noise_density_mode, n_workers=self.n_workers)


class BootstrapSection(_Strict):
    n_boot: int = Field(200, ge=10)
    n_se: float = Field(4.0, gt=0)


class Grid(_Strict):
    start: float
    stop: float
    num: int = Field(ge=2)

    def values(self) -> list[float]:
        return [float(v) for v in np.linspace(self.start, self.stop, self.num)]


class PhaseDiagramSection(_Strict):
    laws: list[Literal["linear", "nonlinear"]] = ["linear", "nonlinear"]
    f: list[float] = [0.5, 1.0, 2.0, 5.0]
    eta: list[float] = [1.0, 2.0, 4.0]
    zeta: Union[list[float], Grid] = Grid(start=0.0, stop=1.0, num=101)
    kappa: Union[list[float], Grid] = Grid(start=0.0, stop=10.0, num=101)
    rho_ref: float = Field(100.0, gt=0)

    @field_validator("f")
    @classmethod
    def _f_positive(cls, v):
        if not v or any(x <= 0 for x in v):
            raise ValueError("f values must be > 0 and the list non-empty")
        return v

    @field_validator("eta")
    @classmethod
    def _eta_ge1(cls, v):
        if not v or any(x < 1 for x in v):
            raise ValueError("eta values must be >= 1 and the list non-empty")
        return v

    @field_validator("zeta")
    @classmethod
    def _zeta_grid(cls, v):
        vals = v.values() if isinstance(v, Grid) else v
        if not vals or any(not 0.0 <= z <= 1.0 for z in vals):
            raise ValueError("zeta grid must be non-empty and inside [0, 1]")
        return v

    @field_validator("kappa")
    @classmethod
    def _kappa_grid(cls, v):
        vals = v.values() if isinstance(v, Grid) else v
        if not vals or any(k < 0 for k in vals):
            raise ValueError("kappa grid must be non-empty and >= 0")
        return v

    def zeta_values(self) -> list[float]:
        return self.zeta.values() if isinstance(self.zeta, Grid) else list(self.zeta)

    def kappa_values(self) -> list[float]:
        return self.kappa.values() if isinstance(self.kappa, Grid) else list(self.kappa)


class OutputSection(_Strict):
    dir: str = "out"
    format: Literal["csv", "json"] = "csv"
    snapshots: Literal["none", "csv", "binary"] = "none"


class ScenarioConfig(_Strict):
    scenario: Scenario
    model: Optional[ModelSection] = None
    integrator: IntegratorSection = IntegratorSection()
    observe_at: Optional[list[float]] = None
    bootstrap: BootstrapSection = BootstrapSection()
    phase_diagram: Optional[PhaseDiagramSection] = None
    output: OutputSection = OutputSection()

    @field_validator("observe_at")
    @classmethod
    def _sorted_times(cls, v):
        if v is not None:
            if not v or any(t < 0 for t in v) or any(b < a for a, b in zip(v, v[1:])):
                raise ValueError("observe_at must be a non-empty, sorted list of times >= 0")
        return v

    @model_validator(mode="before")
    @classmethod
    def _vacuum_defaults(cls, data):
        # the vacuum model may be given as just {Gamma: ...}
        if isinstance(data, dict) and data.get("scenario") == "vacuum-check" and isinstance(data.get("model"), dict):
            m = data["model"]
            if m.get("law", "linear") == "linear" and not {"f", "zeta", "rho_m"} & set(m):
                data = {**data, "model": {"P0": 0.0, "alpha": 0.0, **m}}
        return data

    @model_validator(mode="after")
    def _per_scenario(self):
        sc = self.scenario
        if sc in ("steady-state", "quench") and self.model is None:
            raise ValueError(f"scenario {sc} needs a model section")
        if sc == "quench":
            m = self.model
            if m.law != "linear":
                raise ValueError("quench closed forms exist only for the linear law")
            if m.eta != 1.0:
                raise ValueError("quench closed forms assume eta = 1")
            zeta = m.zeta if m.zeta is not None else 2.0 * (m.chi0 or 0.0) / m.Gamma
            if zeta <= 0:
                raise ValueError("quench needs zeta0 > 0")
        if sc == "vacuum-check" and self.model is not None:
            if self.model.f is not None or (self.model.P0 or 0) or (self.model.P or 0) or (self.model.chi0 or 0):
                raise ValueError("vacuum-check runs with P = chi = 0; only Gamma may be set in model")
        if sc == "phase-diagram" and self.phase_diagram is None:
            self.phase_diagram = PhaseDiagramSection()
        if self.observe_at is None:
            self.observe_at = list(_DEFAULT_OBSERVE[sc])
        if sc == "vacuum-check" and self.model is None:
            self.model = ModelSection(law="linear", P0=0.0, alpha=0.0, chi0=0.0)
        return self

    def model_params(self) -> ModelParams:
        protocol = Protocol.STEP_OFF if self.scenario == "quench" else Protocol.CONSTANT_CHI
        return self.model.build(protocol)

    def resolved(self) -> dict:
        return self.model_dump(mode="json")


def _loc(err) -> str:
    return ".".join(str(p) for p in err["loc"]) or "<root>"


def validate_config(raw: Union[str, dict], overrides: Optional[dict] = None) -> ScenarioConfig:
    """Parse and validate a config; raises ConfigError with key paths.

    ``overrides`` maps dotted keys (``integrator.seed``) to values applied
    before validation.
    """
    if isinstance(raw, str):
        try:
            data = yaml.safe_load(raw)
        except yaml.YAMLError as exc:
            raise ConfigError(f"config is not valid YAML: {exc}", errors=[{"path": "<root>", "msg": str(exc)}])
    else:
        data = raw
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError("config must be a mapping", errors=[{"path": "<root>", "msg": "not a mapping"}])
    data = copy.deepcopy(data)
    for key, value in (overrides or {}).items():
        node = data
        *head, last = key.split(".")
        for h in head:
            if not isinstance(node.get(h), dict):
                node[h] = {}
            node = node[h]
        node[last] = value
    if not data.get("scenario"):
        raise ConfigError("missing required field 'scenario'",
                          errors=[{"path": "scenario", "msg": "field required"}])
    try:
        cfg = ScenarioConfig.model_validate(data)
    except ValidationError as exc:
        errs = [{"path": _loc(e), "msg": e["msg"]} for e in exc.errors()]
        raise ConfigError("; ".join(f"{e['path']}: {e['msg']}" for e in errs), errors=errs) from None
    if cfg.model is None:
        return cfg
    try:
        params = cfg.model_params()
        cfg.integrator.build().check_stability(params)
    except ValueError as exc:
        raise ConfigError(str(exc), errors=[{"path": "integrator.dt" if "dt" in str(exc) else "model",
                                             "msg": str(exc)}]) from None
    return cfg
