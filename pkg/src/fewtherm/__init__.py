"""Fewtherm API."""

from .beta_families import FAMILIES as FAMILIES
from .beta_families import BetaFamily as BetaFamily
from .beta_families import BreitWigner as BreitWigner
from .beta_families import Constant as Constant
from .beta_families import FermiBose as FermiBose
from .beta_families import Linear as Linear
from .config import RunConfig as RunConfig
from .config import load_preset as load_preset
from .config import parse_config as parse_config
from .config import serialize_config as serialize_config
from .context import NumericsConfig as NumericsConfig
from .context import use_numerics as use_numerics
from .distribution import DensityModel as DensityModel
from .distribution import build_density as build_density
from .dynamics import IntegratorSpec as IntegratorSpec
from .dynamics import run_ensemble as run_ensemble
from .dynamics import run_trajectory as run_trajectory
from .forces import FORCES as FORCES
from .forces import CanonicalDissipative as CanonicalDissipative
from .forces import LinearFriction as LinearFriction
from .forces import ZeroForce as ZeroForce
from .forces import make_flow as make_flow
from .phase_model import Free as Free
from .phase_model import Harmonic as Harmonic
from .phase_model import PhaseState as PhaseState
from .phase_model import Quartic as Quartic
from .phase_model import SystemModel as SystemModel
from .thermo import thermo_point as thermo_point
from .thermo import thermo_sweep as thermo_sweep
