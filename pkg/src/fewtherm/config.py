"""Run configuration: pydantic sections, parsing, presets and object builders.

A RunConfig is a nested document::

    model:       N, d, masses, potential (harmonic | quartic | free), labels
    force:       none | linear_friction | canonical_dissipative
    beta:        constraint family (constant | linear | breit_wigner | fermi_bose)
    density:     family compared against the flow (defaults to ``beta``) and energy window
    integrator:  method, dt, n_steps, projection schedule, stride
    ensemble:    n_traj, sampler (gaussian | density | isokinetic), seed, initial_state
    verify:      check toggles and tolerances
    thermo:      sweep path, temperature, Maxwell diagnostic
    output:      directory
    numerics:    tolerances of the numerical kernels
"""

from __future__ import annotations

import copy
from importlib import resources
from pathlib import Path
from typing import Annotated
from typing import Any
from typing import Literal
from typing import Union

import numpy as np
import yaml
from pydantic import BaseModel
from pydantic import ConfigDict
from pydantic import Field
from pydantic import ValidationError
from pydantic import model_validator

from . import beta_families
from . import forces
from . import phase_model
from .context import NumericsConfig
from .distribution import DensityModel
from .distribution import build_density
from .dynamics import IntegratorSpec
from .errors import ConfigError
from .errors import ContractError
from .sampling import DensitySampler
from .sampling import GaussianSampler
from .sampling import IsokineticSampler


class Section(BaseModel):
    """Base for all configuration sections: unknown keys are errors."""

    model_config = ConfigDict(extra="forbid")


# Model -------------------------------------------------------------------------


class HarmonicSpec(Section):
    kind: Literal["harmonic"] = "harmonic"
    omega: float = Field(1.0, gt=0, description="Angular frequency")


class QuarticSpec(Section):
    kind: Literal["quartic"] = "quartic"
    a: float = Field(1.0, gt=0, description="Quadratic coefficient")
    b: float = Field(0.25, ge=0, description="Quartic coefficient")


class FreeSpec(Section):
    kind: Literal["free"] = "free"
    box: float = Field(10.0, gt=0, description="Edge of the cubic box bounding each coordinate")


PotentialSpec = Annotated[Union[HarmonicSpec, QuarticSpec, FreeSpec], Field(discriminator="kind")]


class ModelSection(Section):
    n_particles: int = Field(1, ge=1, description="Number of particles N")
    dim: int = Field(1, ge=1, description="Spatial dimension d")
    masses: Union[float, list[float]] = Field(1.0, description="One mass per particle, or a scalar for all")
    potential: PotentialSpec = Field(default_factory=HarmonicSpec)
    labels: dict[str, float] = Field(default_factory=dict, description="External parameters absent from H")

    @model_validator(mode="after")
    def _masses(self):
        masses = self.masses if isinstance(self.masses, list) else [self.masses]
        if isinstance(self.masses, list) and len(masses) != self.n_particles:
            msg = f"masses has {len(masses)} entries, expected n_particles = {self.n_particles}"
            raise ValueError(msg)
        if any(not m > 0 for m in masses):
            msg = "masses must be positive"
            raise ValueError(msg)
        return self


# Forces ------------------------------------------------------------------------


class NoForceSpec(Section):
    kind: Literal["none"] = "none"


class LinearFrictionSpec(Section):
    kind: Literal["linear_friction"] = "linear_friction"
    gamma: float = Field(1.0, description="Friction coefficient")


class CanonicalDissipativeSpec(Section):
    kind: Literal["canonical_dissipative"] = "canonical_dissipative"
    coefficients: list[float] = Field(
        default_factory=lambda: [0.0, -1.0, 0.5], min_length=1, description="G(H) = sum_k c_k H^k"
    )


ForceSpec = Annotated[Union[NoForceSpec, LinearFrictionSpec, CanonicalDissipativeSpec], Field(discriminator="kind")]


# β families --------------------------------------------------------------------


class ConstantSpec(Section):
    kind: Literal["constant"] = "constant"
    beta0: float = Field(1.0, description="Inverse temperature")


class LinearSpec(Section):
    kind: Literal["linear"] = "linear"
    beta1: float = 1.0
    beta2: float = 0.0


class BreitWignerSpec(Section):
    kind: Literal["breit_wigner"] = "breit_wigner"
    resonance: float = Field(0.0, description="Resonance energy E")
    width: float = Field(1.0, gt=0, description="Width Gamma")


class FermiBoseSpec(Section):
    kind: Literal["fermi_bose"] = "fermi_bose"
    beta0: float = Field(1.0, gt=0)
    mu: float = Field(0.0, description="Chemical potential")
    a: float = Field(1.0, description="+1 Fermi, -1 Bose, 0 canonical")


FamilySpec = Annotated[Union[ConstantSpec, LinearSpec, BreitWignerSpec, FermiBoseSpec], Field(discriminator="kind")]


class DensitySection(Section):
    family: FamilySpec | None = Field(None, description="Density family; null uses the constraint family")
    energy_window: tuple[float, float] | None = Field(None, description="[H_min, H_max]")


# Dynamics ----------------------------------------------------------------------


class IntegratorSection(Section):
    method: Literal["rk4", "semi_implicit_euler"] = "rk4"
    dt: float = Field(1e-3, gt=0)
    n_steps: int = Field(1000, ge=0)
    projection_interval: int = Field(1, ge=0, description="Steps between projections; 0 projects only on drift")
    drift_tolerance: float = Field(1e-8, gt=0, description="|f| above which a projection is forced")
    stride: int = Field(10, ge=1, description="Record every stride steps")


class GaussianSamplerSpec(Section):
    kind: Literal["gaussian"] = "gaussian"
    q_scale: float = Field(1.0, gt=0)
    p_scale: float = Field(1.0, gt=0)
    max_tries: int = Field(20, ge=1)


class DensitySamplerSpec(Section):
    kind: Literal["density"] = "density"


class IsokineticSamplerSpec(Section):
    kind: Literal["isokinetic"] = "isokinetic"
    kT: float | None = Field(None, gt=0, description="Temperature of the positions; default 1/beta0 of the density")
    surface: float | None = Field(None, gt=0, description="sum p^2/m on the surface; default N*d/beta0 of the constraint")


SamplerSpec = Annotated[
    Union[GaussianSamplerSpec, DensitySamplerSpec, IsokineticSamplerSpec], Field(discriminator="kind")
]


class InitialState(Section):
    q: list[float]
    p: list[float]


class EnsembleSection(Section):
    n_traj: int = Field(1, ge=1)
    sampler: SamplerSpec = Field(default_factory=GaussianSamplerSpec)
    seed: int | None = Field(None, ge=0, description="Required unless initial_state is given")
    initial_state: InitialState | None = None
    workers: int | None = Field(None, ge=1, description="Thread pool size")


# Checks and outputs ------------------------------------------------------------


class VerifySection(Section):
    closure: bool = False
    antiderivative: bool = False
    stationarity: bool = False
    pushforward: bool = False
    histogram: bool = False
    n_states: int = Field(100, ge=1, description="Random on-surface states per pointwise check")
    closure_tol: float = Field(1e-10, gt=0)
    antiderivative_tol: float = Field(1e-8, gt=0)
    stationarity_tol: float = Field(1e-6, gt=0)
    pushforward_samples: int = Field(1000, ge=1000)
    pushforward_steps: int = Field(100, ge=0)
    histogram_bins: int = Field(20, ge=2)

    @property
    def any(self) -> bool:
        """True when some check is enabled."""
        return self.closure or self.antiderivative or self.stationarity or self.pushforward or self.histogram


class SweepSpec(Section):
    param: str
    start: float
    stop: float
    n_points: int = Field(5, ge=1)


class ThermoSection(Section):
    points: list[dict[str, float]] = Field(default_factory=list, description="Explicit sweep path")
    sweep: SweepSpec | None = Field(None, description="Uniform sweep of one parameter")
    fixed: dict[str, float] = Field(default_factory=dict, description="Values merged into every sweep point")
    temperature: float | None = Field(None, gt=0, description="T(x) for non-canonical entropy")
    maxwell: bool = Field(False, description="Report the Maxwell cross-derivative asymmetry at the first point")

    def path(self) -> list[dict[str, float]]:
        """The sweep points, explicit or generated."""
        pts = [dict(p) for p in self.points]
        if self.sweep is not None:
            values = np.linspace(self.sweep.start, self.sweep.stop, self.sweep.n_points)
            pts += [{self.sweep.param: float(v)} for v in values]
        return [{**self.fixed, **p} for p in pts] or ([dict(self.fixed)] if self.fixed else [])


class OutputSection(Section):
    directory: Path = Field(Path("fewtherm-out"), description="Directory receiving all artifacts")


class RunConfig(Section):
    model: ModelSection = Field(default_factory=ModelSection)
    force: ForceSpec = Field(default_factory=LinearFrictionSpec)
    beta: FamilySpec = Field(default_factory=ConstantSpec)
    density: DensitySection = Field(default_factory=DensitySection)
    integrator: IntegratorSection = Field(default_factory=IntegratorSection)
    ensemble: EnsembleSection = Field(default_factory=EnsembleSection)
    verify: VerifySection = Field(default_factory=VerifySection)
    thermo: ThermoSection = Field(default_factory=ThermoSection)
    output: OutputSection = Field(default_factory=OutputSection)
    numerics: NumericsConfig = Field(default_factory=NumericsConfig)

    @property
    def density_family(self):
        """Family of the density compared against the flow."""
        return self.density.family or self.beta

    @model_validator(mode="after")
    def _cross_fields(self):
        if self.density_family.kind == "breit_wigner" and self.density.energy_window is None:
            msg = "density.energy_window is required for the Breit-Wigner family"
            raise ValueError(msg)
        deterministic = self.ensemble.initial_state is not None and self.ensemble.n_traj == 1
        if self.ensemble.seed is None and not (deterministic and not self.verify.any):
            msg = "ensemble.seed is required for runs that sample states"
            raise ValueError(msg)
        init = self.ensemble.initial_state
        n = self.model.n_particles * self.model.dim
        if init is not None and (len(init.q) != n or len(init.p) != n):
            msg = f"ensemble.initial_state needs {n} positions and momenta"
            raise ValueError(msg)
        if self.ensemble.sampler.kind == "isokinetic" and n < 2:
            msg = f"the isokinetic sampler needs at least two degrees of freedom, model has N·d = {n}"
            raise ValueError(msg)
        return self


# Parsing -----------------------------------------------------------------------


def _field_of(loc) -> str:
    return ".".join(str(p) for p in loc)


def validate_config(data: dict[str, Any]) -> RunConfig:
    """Validate a nested dict; errors name the offending field path."""
    try:
        return RunConfig.model_validate(data or {})
    except ValidationError as e:
        first = e.errors()[0]
        where = _field_of(first["loc"]) or "<root>"
        msg = f"Invalid configuration at '{where}': {first['msg']}"
        raise ConfigError(msg, field=where) from None


def load_yaml_text(text: str) -> dict[str, Any]:
    """Parse YAML (or JSON) text into a dict, reporting the line of syntax errors."""
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as e:
        mark = getattr(e, "problem_mark", None)
        line = mark.line + 1 if mark is not None else None
        msg = f"Could not parse configuration{f' (line {line})' if line else ''}: {getattr(e, 'problem', e)}"
        raise ConfigError(msg, line=line) from None
    if data is None:
        return {}
    if not isinstance(data, dict):
        msg = "Configuration document must be a mapping"
        raise ConfigError(msg, line=1)
    return data


def parse_config(text: str) -> RunConfig:
    """Parse a YAML or JSON document into a validated RunConfig."""
    return validate_config(load_yaml_text(text))


def serialize_config(cfg: RunConfig) -> str:
    """YAML text such that ``parse_config(serialize_config(cfg)) == cfg``."""
    return yaml.safe_dump(cfg.model_dump(mode="json"), sort_keys=False)


def default_config_dict() -> dict[str, Any]:
    """Defaults of every section, without cross-field validation."""
    return RunConfig.model_construct().model_dump(mode="json")


# Presets -----------------------------------------------------------------------


def preset_names() -> list[str]:
    """Names of the shipped presets."""
    root = resources.files("fewtherm") / "presets"
    return sorted(p.name[: -len(".yaml")] for p in root.iterdir() if p.name.endswith(".yaml"))


def load_preset(name: str) -> dict[str, Any]:
    """Raw document of a shipped preset."""
    path = resources.files("fewtherm") / "presets" / f"{name}.yaml"
    if not path.is_file():
        msg = f"Unknown preset '{name}'; available: {', '.join(preset_names())}"
        raise ConfigError(msg, field="preset")
    return load_yaml_text(path.read_text())


def isokinetic_config(n_particles: int = 2, dim: int = 3, kT: float = 1.0, omega: float = 1.0, **sections) -> RunConfig:
    """Harmonic oscillators under the Gaussian isokinetic constraint, canonical at kT.

    The constraint coefficient is β₀ = N·d/c with surface Σp²/m = c = (N·d - 1)·kT.
    """
    n = n_particles * dim
    try:
        beta0 = forces.isokinetic_beta0(n, kT)
    except ContractError as e:
        raise ConfigError(str(e), field="model.dim" if n < 2 else "kT") from None
    doc = {
        "model": {"n_particles": n_particles, "dim": dim, "masses": 1.0, "potential": {"kind": "harmonic", "omega": omega}},
        "force": {"kind": "linear_friction", "gamma": 1.0},
        "beta": {"kind": "constant", "beta0": beta0},
        "density": {"family": {"kind": "constant", "beta0": 1.0 / kT}},
        "ensemble": {"sampler": {"kind": "isokinetic", "kT": kT}, "seed": 0},
    }
    for k, v in sections.items():
        doc[k] = {**doc.get(k, {}), **v}
    return validate_config(doc)


# Builders ----------------------------------------------------------------------


def build_model(cfg: RunConfig) -> phase_model.SystemModel:
    """SystemModel of the configuration."""
    m = cfg.model
    pot = m.potential.model_dump(exclude={"kind"})
    potential = {
        "harmonic": phase_model.Harmonic,
        "quartic": phase_model.Quartic,
        "free": phase_model.Free,
    }[m.potential.kind](**pot)
    masses = tuple(m.masses) if isinstance(m.masses, list) else (m.masses,) * m.n_particles
    return phase_model.SystemModel(
        n_particles=m.n_particles, dim=m.dim, masses=masses, potential=potential, labels=dict(m.labels)
    )


def build_force(cfg: RunConfig) -> forces.BaseForce:
    """Base non-potential force."""
    spec = cfg.force
    if spec.kind == "linear_friction":
        return forces.LinearFriction(gamma=spec.gamma)
    if spec.kind == "canonical_dissipative":
        return forces.CanonicalDissipative(coefficients=tuple(spec.coefficients))
    return forces.ZeroForce()


def build_family(spec) -> beta_families.BetaFamily:
    """β family from its section."""
    return beta_families.FAMILIES[spec.kind](**spec.model_dump(exclude={"kind"}))


def build_density_model(cfg: RunConfig, model=None) -> DensityModel:
    """Density compared against the flow, with Z computed."""
    model = model or build_model(cfg)
    return build_density(model, build_family(cfg.density_family), cfg.density.energy_window)


def build_spec(cfg: RunConfig) -> IntegratorSpec:
    """Integrator settings."""
    return IntegratorSpec(**cfg.integrator.model_dump())


def build_flow(cfg: RunConfig, model=None) -> forces.BaseFlow:
    """Flow of (model, force, constraint family)."""
    return forces.make_flow(model or build_model(cfg), build_force(cfg), build_family(cfg.beta))


def build_sampler(cfg: RunConfig, model=None, density: DensityModel | None = None):
    """Initial-condition sampler of the ensemble section."""
    spec = cfg.ensemble.sampler
    if spec.kind == "gaussian":
        return GaussianSampler(q_scale=spec.q_scale, p_scale=spec.p_scale, max_tries=spec.max_tries)
    if spec.kind == "density":
        return DensitySampler(density or build_density_model(cfg, model))
    model = model or build_model(cfg)
    kT, surface = spec.kT, spec.surface
    if kT is None:
        fam = cfg.density_family
        if fam.kind != "constant" or fam.beta0 <= 0:
            msg = "ensemble.sampler.kT is required unless the density family is constant with beta0 > 0"
            raise ConfigError(msg, field="ensemble.sampler.kT")
        kT = 1.0 / fam.beta0
    if surface is None:
        if cfg.force.kind != "linear_friction" or cfg.beta.kind != "constant" or cfg.beta.beta0 <= 0:
            msg = "ensemble.sampler.surface is required unless the constraint is linear friction with constant beta0 > 0"
            raise ConfigError(msg, field="ensemble.sampler.surface")
        surface = model.n_dof / cfg.beta.beta0
    return IsokineticSampler(kT=kT, surface=surface)


def apply_point(cfg: RunConfig, x: dict[str, float]) -> RunConfig:
    """Copy of cfg with sweep parameters substituted.

    Keys name potential parameters, model labels or family parameters.  ``kT``
    sets the density temperature; with an isokinetic sampler it also moves the
    constraint β₀ and the sampler to the matching surface.
    """
    doc = copy.deepcopy(cfg.model_dump(mode="json"))
    pot, labels, beta = doc["model"]["potential"], doc["model"]["labels"], doc["beta"]
    dens = doc["density"]["family"]
    n = cfg.model.n_particles * cfg.model.dim
    for k, v in x.items():
        if k == "kT":
            if k in labels:
                labels[k] = v
            target = dens if dens is not None else beta
            inv = "beta1" if target["kind"] == "linear" else "beta0"
            if inv in target:
                target[inv] = 1.0 / v
            sampler = doc["ensemble"]["sampler"]
            if sampler["kind"] == "isokinetic":
                sampler["kT"] = v
                sampler["surface"] = None
                if beta["kind"] == "constant":
                    try:
                        beta["beta0"] = forces.isokinetic_beta0(n, v)
                    except ContractError as e:
                        raise ConfigError(str(e), field="kT") from None
        elif k in pot and k != "kind":
            pot[k] = v
        elif k in labels:
            labels[k] = v
        elif k in beta and k != "kind":
            beta[k] = v
        elif dens is not None and k in dens and k != "kind":
            dens[k] = v
        else:
            msg = f"Unknown sweep parameter '{k}'"
            raise ConfigError(msg, field=f"thermo.{k}")
    return validate_config(doc)
