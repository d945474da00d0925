"""Coefficient functions β(H, x) of the non-holonomic constraint.

Each family supplies β, its H-derivative and the antiderivative B with
dB/dH = β, so that the stationary density is exp(-B(H))/Z.  All methods are
vectorised over arrays of energies.
"""

from __future__ import annotations

import dataclasses
from abc import ABC
from abc import abstractmethod
from collections.abc import Mapping
from dataclasses import dataclass
from typing import ClassVar

import numpy as np
from scipy.special import expit

from .context import numerics
from .errors import ContractError
from .errors import DomainError
from .errors import ParameterLookupError


def _scalar(v):
    v = np.asarray(v, dtype=float)
    return float(v) if v.ndim == 0 else v


class BetaFamily(ABC):
    """A β(H) family; subclasses are frozen dataclasses whose fields are the parameters."""

    kind: ClassVar[str]

    @property
    def params(self) -> dict[str, float]:
        """Family parameters by name."""
        return {f.name: getattr(self, f.name) for f in dataclasses.fields(self)}

    def with_params(self, **values: float) -> BetaFamily:
        """Return a copy with some parameters changed."""
        unknown = set(values) - set(self.params)
        if unknown:
            msg = f"Unknown {self.kind} parameter(s): {sorted(unknown)}"
            raise ParameterLookupError(msg)
        return dataclasses.replace(self, **values)

    @property
    def lower_bound(self) -> float:
        """Infimum of the energy domain (open), -inf when unrestricted."""
        return -np.inf

    def check_domain(self, H) -> None:
        """Raise DomainError if any energy lies outside the family domain."""

    @abstractmethod
    def beta(self, H):
        """β(H)."""

    @abstractmethod
    def dbeta_dH(self, H):
        """∂β/∂H."""

    @abstractmethod
    def B(self, H):  # noqa: N802
        """Antiderivative of β; the density is exp(-B)/Z."""

    @property
    def is_canonical(self) -> bool:
        """True when β does not depend on H."""
        return False


@dataclass(frozen=True)
class Constant(BetaFamily):
    """β = β₀, the canonical Gibbs family."""

    beta0: float = 1.0
    kind: ClassVar[str] = "constant"

    def beta(self, H):  # noqa: D102
        return np.full(np.shape(H), float(self.beta0))

    def dbeta_dH(self, H):  # noqa: D102
        return np.zeros(np.shape(H))

    def B(self, H):  # noqa: D102
        return self.beta0 * np.asarray(H, dtype=float)

    @property
    def is_canonical(self) -> bool:  # noqa: D102
        return True


@dataclass(frozen=True)
class Linear(BetaFamily):
    """β = β₁ + β₂H, giving the quadratic-exponent density exp(-β₁H - β₂H²/2)."""

    beta1: float = 1.0
    beta2: float = 0.0
    kind: ClassVar[str] = "linear"

    def beta(self, H):  # noqa: D102
        return self.beta1 + self.beta2 * np.asarray(H, dtype=float)

    def dbeta_dH(self, H):  # noqa: D102
        return np.full(np.shape(H), float(self.beta2))

    def B(self, H):  # noqa: D102
        H = np.asarray(H, dtype=float)
        return self.beta1 * H + 0.5 * self.beta2 * H * H

    @property
    def is_canonical(self) -> bool:  # noqa: D102
        return self.beta2 == 0


@dataclass(frozen=True)
class BreitWigner(BetaFamily):
    """Resonance family: exp(-B) = 1/((H-E)² + (Γ/2)²)."""

    resonance: float = 0.0
    width: float = 1.0
    kind: ClassVar[str] = "breit_wigner"

    def __post_init__(self):
        if not self.width > 0:
            msg = f"Breit-Wigner width must be positive, got {self.width}"
            raise ContractError(msg)

    def _den(self, H):
        d = np.asarray(H, dtype=float) - self.resonance
        return d, d * d + 0.25 * self.width**2

    def beta(self, H):  # noqa: D102
        d, den = self._den(H)
        return 2.0 * d / den

    def dbeta_dH(self, H):  # noqa: D102
        d, den = self._den(H)
        return 2.0 * (0.25 * self.width**2 - d * d) / (den * den)

    def B(self, H):  # noqa: D102
        return np.log(self._den(H)[1])


@dataclass(frozen=True)
class FermiBose(BetaFamily):
    """exp(-B) = 1/(exp(β₀(H-μ)) + a); a = +1 Fermi, a = -1 Bose, a = 0 canonical.

    β = β₀/(1 + a·exp(-β₀(H-μ))) is the form whose antiderivative is
    ln(exp(β₀(H-μ)) + a).
    """

    beta0: float = 1.0
    mu: float = 0.0
    a: float = 1.0
    kind: ClassVar[str] = "fermi_bose"

    def __post_init__(self):
        if not self.beta0 > 0:
            msg = f"Fermi-Bose beta0 must be positive, got {self.beta0}"
            raise ContractError(msg)

    @property
    def lower_bound(self) -> float:  # noqa: D102
        if self.a >= 0:
            return -np.inf
        return self.mu + np.log(-self.a) / self.beta0

    def check_domain(self, H) -> None:  # noqa: D102
        if self.a >= 0:
            return
        H = np.asarray(H, dtype=float)
        bad = H <= self.lower_bound
        if np.any(bad):
            first = float(H[bad].flat[0]) if H.ndim else float(H)
            msg = (
                f"Fermi-Bose density undefined at H={first:g}: exp(beta0*(H-mu)) + a <= 0 "
                f"for H <= {self.lower_bound:g} (a={self.a:g}, mu={self.mu:g})"
            )
            raise DomainError(msg)

    def _x(self, H):
        self.check_domain(H)
        return self.beta0 * (np.asarray(H, dtype=float) - self.mu)

    def beta(self, H):  # noqa: D102
        x = self._x(H)
        if self.a > 0:
            return self.beta0 * expit(x - np.log(self.a))
        return self.beta0 / (1.0 + self.a * np.exp(-x))

    def dbeta_dH(self, H):  # noqa: D102
        x = self._x(H)
        if self.a > 0:
            s = expit(x - np.log(self.a))
            return self.beta0**2 * s * (1.0 - s)
        u = self.a * np.exp(-x)
        return self.beta0**2 * u / (1.0 + u) ** 2

    def B(self, H):  # noqa: D102
        x = self._x(H)
        if self.a > 0:
            return np.logaddexp(x, np.log(self.a))
        return x + np.log1p(self.a * np.exp(-x))

    @property
    def is_canonical(self) -> bool:  # noqa: D102
        return self.a == 0


FAMILIES: dict[str, type[BetaFamily]] = {
    cls.kind: cls for cls in (Constant, Linear, BreitWigner, FermiBose)
}


def _resolve(family: BetaFamily, x: Mapping[str, float] | None) -> BetaFamily:
    if not x:
        return family
    own = {k: v for k, v in x.items() if k in family.params}
    return family.with_params(**own) if own else family


def beta(family: BetaFamily, H, x: Mapping[str, float] | None = None):
    """Return β(H, x); ``x`` may override family parameters by name."""
    return _scalar(_resolve(family, x).beta(H))


def dbeta_dH(family: BetaFamily, H, x: Mapping[str, float] | None = None):
    """Return ∂β/∂H."""
    return _scalar(_resolve(family, x).dbeta_dH(H))


def antiderivative_B(family: BetaFamily, H, x: Mapping[str, float] | None = None):
    """Return B(H, x) with dB/dH = β; integration constants fixed by the closed forms."""
    return _scalar(_resolve(family, x).B(H))


def unnormalized_density(family: BetaFamily, H, x: Mapping[str, float] | None = None):
    """Return exp(-B(H, x)); energies where B exceeds the underflow cutoff give exactly 0."""
    b = np.asarray(_resolve(family, x).B(H), dtype=float)
    cutoff = numerics().underflow_cutoff
    with np.errstate(over="ignore"):
        out = np.where(b > cutoff, 0.0, np.exp(-np.minimum(b, cutoff)))
    return _scalar(out)


def c_of_rho(family: BetaFamily, rho, x: Mapping[str, float] | None = None):
    """Nonlinear Liouville coefficient C(ρ) = -β₀(ρ - aρ²) of the Fermi-Bose family.

    ``rho`` is the unnormalised density exp(-B); then C(ρ(H)) = -β(H)ρ(H).
    """
    family = _resolve(family, x)
    if not isinstance(family, FermiBose):
        msg = f"c_of_rho is defined for the Fermi-Bose family, got {family.kind}"
        raise ContractError(msg)
    rho = np.asarray(rho, dtype=float)
    if np.any(rho < 0):
        msg = "c_of_rho needs a non-negative density"
        raise ContractError(msg)
    return _scalar(-family.beta0 * (rho - family.a * rho * rho))


def composite_c(family: BetaFamily, rho, x: Mapping[str, float] | None = None):
    """C(ρ) = -β(H(ρ))·ρ for families where H ↦ exp(-B) is invertible.

    The Linear family uses the branch with β > 0.  Breit-Wigner is not
    monotone in H and is rejected.
    """
    family = _resolve(family, x)
    rho = np.asarray(rho, dtype=float)
    if np.any(rho <= 0):
        msg = "composite_c needs a positive density"
        raise ContractError(msg)
    if isinstance(family, FermiBose):
        return c_of_rho(family, rho)
    if isinstance(family, Constant):
        return _scalar(-family.beta0 * rho)
    if isinstance(family, Linear):
        disc = family.beta1**2 - 2.0 * family.beta2 * np.log(rho)
        if np.any(disc < 0):
            msg = "density value not attained by the Linear family"
            raise DomainError(msg)
        return _scalar(-np.sqrt(disc) * rho)
    msg = f"{family.kind} density is not monotone in H; C(rho) is multivalued"
    raise ContractError(msg)
