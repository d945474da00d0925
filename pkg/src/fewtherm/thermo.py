"""Statistical thermodynamics of a stationary density: U, X_k, S, heat and law residuals.

Conventions (k_B = 1):

- ``U = <H>``, ``X_k = <-∂H/∂x_k>`` so that ``dU = δQ - Σ X_k dx_k``.
- Canonical families use the Gibbs entropy ``S = -<ln ρ>``.
- Other families use ``S = <S_N(ρ)>`` with ``∂(ρ S_N)/∂ρ = H(ρ)/T + ln Z - 1``,
  which reduces to the Gibbs form when β is constant.  This needs ρ monotone
  in H over the energy range.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Callable
from collections.abc import Mapping
from collections.abc import Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from dataclasses import field

import numpy as np

from .beta_families import BetaFamily
from .beta_families import Constant
from .beta_families import FermiBose
from .beta_families import Linear
from .context import submit
from .distribution import DensityModel
from .distribution import build_density
from .errors import ContractError
from .errors import EntropyBranchError
from .errors import FewthermError
from .errors import ParameterLookupError
from .phase_model import SystemModel

logger = logging.getLogger(__name__)

TEMPERATURE = "kT"
"""Sweep key holding the temperature T(x)."""


@dataclass(frozen=True)
class ThermoPoint:
    """Thermodynamic state at one parameter point."""

    x: dict[str, float]
    U: float
    X: dict[str, float]
    S: float
    Z: float
    log_Z: float  # noqa: N815
    T: float
    error: dict | None = None
    """Error envelope when the point could not be evaluated; numbers are NaN then."""

    @property
    def ok(self) -> bool:  # noqa: D102
        return self.error is None


@dataclass(frozen=True)
class LawResiduals:
    """First-law residual per sweep segment and an optional Maxwell asymmetry matrix."""

    first_law: list[float]
    relative: list[float]
    """Residual divided by max(|ΔU|, tiny)."""
    maxwell_asymmetry: np.ndarray | None = None
    maxwell_params: tuple[str, ...] = ()


@dataclass
class ThermoReport:
    """Sweep table plus law residuals."""

    points: list[ThermoPoint]
    residuals: LawResiduals | None = None
    params: tuple[str, ...] = field(default_factory=tuple)
    forces: tuple[str, ...] = field(default_factory=tuple)

    def rows(self) -> list[dict[str, float]]:
        """One flat row per point, with the residual of the segment ending there."""
        out = []
        for i, p in enumerate(self.points):
            row = {k: p.x.get(k, math.nan) for k in self.params}
            row.update({"U": p.U, "S": p.S, "Z": p.Z, "log_Z": p.log_Z, "T": p.T})
            row.update({f"X_{k}": p.X.get(k, math.nan) for k in self.forces})
            res = math.nan
            if self.residuals is not None and i > 0:
                res = self.residuals.first_law[i - 1]
            row["first_law_residual"] = res
            out.append(row)
        return out


# Operations --------------------------------------------------------------------


def internal_energy(dm: DensityModel) -> float:
    """Return U = ∫ E g(E) exp(-B(E)) dE / Z."""
    return dm.average(lambda E: E)


def thermodynamic_force(dm: DensityModel, k: str) -> float:
    """Return X_k = <-∂H/∂x_k> = (1/Z)∫ ∂V/∂x_k exp(-B) dE; zero for parameters absent from H."""
    model = dm.model
    if k in model.labels:
        return 0.0
    if k not in model.potential.params:
        msg = f"Unknown parameter '{k}'; model defines {sorted(model.params)}"
        raise ParameterLookupError(msg)
    dos = dm.dos
    return dm.average(lambda E: float(dos.dV_dparam(E, k)) / float(dos.g(E)))


def default_temperature(family: BetaFamily) -> float:
    """T = 1/β₀ (or 1/β₁ for the Linear family)."""
    if isinstance(family, (Constant, FermiBose)):
        b = family.beta0
    elif isinstance(family, Linear):
        b = family.beta1
    else:
        msg = f"{family.kind} family has no natural temperature; set thermo.temperature"
        raise ContractError(msg)
    if b == 0:
        msg = "Inverse temperature is zero; set thermo.temperature"
        raise ContractError(msg)
    return 1.0 / b


def _branch(dm: DensityModel) -> int:
    lo, hi = dm.range.lo, dm.range.hi
    grid = np.linspace(lo, hi, 2049)[1:]
    b = np.asarray(dm.family.beta(grid), dtype=float)
    if np.all(b >= 0):
        return 1
    if np.all(b <= 0):
        return -1
    msg = (
        f"{dm.family.kind} density is not monotone in H on [{lo:g}, {hi:g}]; "
        "restrict the energy window to one side of the turning point"
    )
    raise EntropyBranchError(msg)


def entropy(dm: DensityModel, T: float | None = None) -> float:
    """Return S: Gibbs form for canonical families, <S_N(ρ)> otherwise."""
    family = dm.family
    if family.is_canonical:
        return dm.average(lambda E: float(family.B(E))) + dm.log_Z
    T = default_temperature(family) if T is None else T
    if not T > 0:
        msg = f"Temperature must be positive, got {T}"
        raise ContractError(msg)
    sign = _branch(dm)
    dos = dm.dos
    lo, hi = dm.range.lo, dm.range.hi
    v_lo, v_hi = float(dos.V(lo)), float(dos.V(hi))
    if sign > 0:
        edge, v_of = hi, (lambda E: float(dos.V(E)) - v_lo)
    else:
        edge, v_of = lo, (lambda E: v_hi - float(dos.V(E)))
    bulk = dm.average(lambda E: sign * E * float(family.beta(E)) * v_of(E) / float(dos.g(E)))
    rho_edge = float(np.exp(dm.log_density(edge)))
    return (bulk + edge * rho_edge * (v_hi - v_lo)) / T + dm.log_Z - 1.0


def _same_structure(dm: DensityModel, other: DensityModel) -> None:
    a, b = dm.model, other.model
    if (a.n_particles, a.dim, a.masses, type(a.potential)) != (b.n_particles, b.dim, b.masses, type(b.potential)):
        msg = "Heat increment needs two states of the same system"
        raise ContractError(msg)
    if type(dm.family) is not type(other.family):
        msg = "Heat increment needs densities of the same family"
        raise ContractError(msg)
    if dm.energy_window != other.energy_window:
        msg = f"Energy windows differ: {dm.energy_window} vs {other.energy_window}"
        raise ContractError(msg)


def _mean_shift(frm: DensityModel, to: DensityModel) -> float:
    """<H_to - H_from> under ρ_from, exact for potentials linear in their coefficients."""
    c_from = frm.model.potential.coefficients()
    c_to = to.model.potential.coefficients()
    total = 0.0
    for k, x_from in frm.model.potential.params.items():
        x_to = to.model.potential.params[k]
        if x_to == x_from:
            continue
        if k in c_from:
            c0, dc = c_from[k]
            # <∂U/∂c> = <∂H/∂x>/(dc/dx) = -X/(dc/dx)
            moment = -thermodynamic_force(frm, k) / dc
            total += (c_to[k][0] - c0) * moment
        else:
            total += -thermodynamic_force(frm, k) * (x_to - x_from)
    return total


def heat_increment(dm: DensityModel, dm_next: DensityModel) -> float:
    """Return δQ = ∫ H_mid (ρ' - ρ) with H_mid = (H + H')/2.

    Equivalent to ΔU - ½(<H' - H>_ρ + <H' - H>_ρ').
    """
    _same_structure(dm, dm_next)
    dU = internal_energy(dm_next) - internal_energy(dm)
    return dU - 0.5 * (_mean_shift(dm, dm_next) - _mean_shift(dm_next, dm))


def first_law_residual(sweep: Sequence[ThermoPoint], maxwell: np.ndarray | None = None, maxwell_params=()) -> LawResiduals:
    """Per segment |ΔU - (T_mid ΔS - Σ X_mid Δx)|; failed points give NaN segments."""
    if len(sweep) < 3:
        msg = f"First-law residuals need at least 3 sweep points, got {len(sweep)}"
        raise ContractError(msg)
    res, rel = [], []
    for a, b in zip(sweep[:-1], sweep[1:]):
        if not (a.ok and b.ok):
            res.append(math.nan)
            rel.append(math.nan)
            continue
        dU = b.U - a.U
        heat = 0.5 * (a.T + b.T) * (b.S - a.S)
        work = sum(0.5 * (a.X.get(k, 0.0) + b.X.get(k, 0.0)) * (b.x[k] - a.x[k]) for k in a.X if k in b.x and k in a.x)
        r = abs(dU - (heat - work))
        res.append(r)
        rel.append(r / max(abs(dU), 1e-300))
    return LawResiduals(first_law=res, relative=rel, maxwell_asymmetry=maxwell, maxwell_params=tuple(maxwell_params))


def maxwell_asymmetry(
    point: Callable[[Mapping[str, float]], ThermoPoint],
    x: Mapping[str, float],
    names: Sequence[str],
    rel_step: float = 1e-4,
) -> np.ndarray:
    """|∂X_k/∂x_l - ∂X_l/∂x_k| by central differences of ``point`` around x."""
    names = list(names)
    grads = {}
    for l_name in names:
        h = rel_step * (1.0 + abs(x[l_name]))
        up = point({**x, l_name: x[l_name] + h})
        dn = point({**x, l_name: x[l_name] - h})
        grads[l_name] = {k: (up.X.get(k, 0.0) - dn.X.get(k, 0.0)) / (2.0 * h) for k in names}
    m = np.zeros((len(names), len(names)))
    for i, k in enumerate(names):
        for j, l_name in enumerate(names):
            m[i, j] = abs(grads[l_name][k] - grads[k][l_name])
    return m


# Sweeps ------------------------------------------------------------------------


def apply_params(model: SystemModel, family: BetaFamily, x: Mapping[str, float]) -> tuple[SystemModel, BetaFamily, float | None]:
    """Set model and family parameters from x.

    The key ``kT`` sets T(x) and, unless given explicitly, the family's inverse
    temperature (β₀, or β₁ for the Linear family).
    """
    x = dict(x)
    T = x.pop(TEMPERATURE, None)
    if T is not None and not T > 0:
        msg = f"kT must be positive, got {T}"
        raise ContractError(msg)
    m_par = {k: v for k, v in x.items() if k in model.params}
    f_par = {k: v for k, v in x.items() if k in family.params and k not in m_par}
    unknown = set(x) - set(m_par) - set(f_par)
    if unknown:
        msg = f"Unknown sweep parameter(s): {sorted(unknown)}"
        raise ParameterLookupError(msg)
    if T is not None:
        if TEMPERATURE in model.labels:
            m_par[TEMPERATURE] = T
        inv = "beta1" if isinstance(family, Linear) else "beta0"
        if inv in family.params and inv not in f_par:
            f_par[inv] = 1.0 / T
    model = model.with_params(**m_par) if m_par else model
    family = family.with_params(**f_par) if f_par else family
    return model, family, T


def thermo_point(
    model: SystemModel,
    family: BetaFamily,
    x: Mapping[str, float] | None = None,
    window=None,
    T: float | None = None,
) -> ThermoPoint:
    """Evaluate U, X, S and Z at parameter point x."""
    x = dict(x or {})
    model, family, T_x = apply_params(model, family, x)
    T = T_x if T_x is not None else T
    dm = build_density(model, family, window)
    if T is None:
        T = default_temperature(family)
    X = {k: thermodynamic_force(dm, k) for k in model.params}
    return ThermoPoint(
        x=x,
        U=internal_energy(dm),
        X=X,
        S=entropy(dm, T),
        Z=dm.Z,
        log_Z=dm.log_Z,
        T=T,
    )


def _failed(x: Mapping[str, float], e: FewthermError) -> ThermoPoint:
    return ThermoPoint(x=dict(x), U=math.nan, X={}, S=math.nan, Z=math.nan, log_Z=math.nan, T=math.nan, error=e.to_json())


def thermo_sweep(
    model: SystemModel,
    family: BetaFamily,
    path: Sequence[Mapping[str, float]],
    window=None,
    T: float | None = None,
    maxwell_at: Mapping[str, float] | None = None,
    workers: int | None = None,
) -> ThermoReport:
    """Evaluate every point of ``path`` in parallel; per-point errors are kept in the table."""
    if not path:
        msg = "Sweep path is empty"
        raise ContractError(msg)

    def one(x):
        try:
            return thermo_point(model, family, x, window, T)
        except FewthermError as e:
            logger.warning("Sweep point %s failed: %s", dict(x), e)
            return _failed(x, e)

    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = [submit(pool, one, x) for x in path]
        points = [fut.result() for fut in futures]
    params = tuple(dict.fromkeys(k for x in path for k in x))
    forces = tuple(model.params)
    residuals = None
    if len(points) >= 3:
        maxwell, names = None, ()
        if maxwell_at is not None:
            names = tuple(k for k in maxwell_at if k in model.potential.params)
            maxwell = maxwell_asymmetry(lambda x: thermo_point(model, family, x, window, T), maxwell_at, names)
        residuals = first_law_residual(points, maxwell, names)
    return ThermoReport(points=points, residuals=residuals, params=params, forces=forces)
