"""Density of states g(E) and phase volume V(E) of the built-in separable models.

Every phase-space average of a function of H reduces to a one-dimensional
energy integral against g(E) = dV/dE.  The thermodynamic force of an external
parameter uses the identity <-∂H/∂x> = (1/Z)∫ ∂V/∂x(E) exp(-B(E)) dE.

Harmonic and free models have closed forms.  The quartic model is built from
the single-coordinate phase area, evaluated by Gauss-Legendre quadrature in an
angle variable, and convolved up to four coordinates.
"""

from __future__ import annotations

import functools
from abc import ABC
from abc import abstractmethod
from typing import TYPE_CHECKING

import numpy as np
from scipy.special import gammaln

from .context import numerics
from .errors import ContractError
from .errors import ParameterLookupError
from .phase_model import Free
from .phase_model import Harmonic
from .phase_model import Quartic

if TYPE_CHECKING:
    from .phase_model import SystemModel

MAX_QUARTIC_DOF = 4
_NODES = 48


@functools.lru_cache(maxsize=None)
def _legendre(n: int = _NODES) -> tuple[np.ndarray, np.ndarray]:
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


class DensityOfStates(ABC):
    """g(E) and V(E) for a model; both vanish for E <= 0."""

    def __init__(self, model: SystemModel):  # noqa: D107
        self.model = model
        self.n = model.n_dof

    @abstractmethod
    def g(self, E) -> np.ndarray:
        """Density of states dV/dE."""

    @abstractmethod
    def V(self, E) -> np.ndarray:  # noqa: N802
        """Phase volume {H <= E}."""

    def log_g(self, E) -> np.ndarray:
        """log g(E); -inf where g vanishes."""
        with np.errstate(divide="ignore"):
            return np.log(self.g(E))

    def _dV_dparam(self, E, name: str) -> np.ndarray:  # noqa: N802
        h = numerics().fd_step * (1.0 + abs(self.model.params[name]))
        x = self.model.params[name]
        up = density_of_states(self.model.with_params(**{name: x + h})).V(E)
        dn = density_of_states(self.model.with_params(**{name: x - h})).V(E)
        return (up - dn) / (2.0 * h)

    def dV_dparam(self, E, name: str) -> np.ndarray:  # noqa: N802
        """∂V/∂x at fixed E; parameters absent from H give 0."""
        if name in self.model.labels:
            return np.zeros(np.shape(E))
        if name not in self.model.potential.params:
            msg = f"Unknown parameter '{name}'; model defines {sorted(self.model.params)}"
            raise ParameterLookupError(msg)
        return self._dV_dparam(E, name)


def _positive(E):
    E = np.asarray(E, dtype=float)
    pos = E > 0
    return E, pos, np.where(pos, E, 1.0)


class HarmonicDOS(DensityOfStates):
    """g = (2π/ω)^n E^(n-1)/Γ(n), independent of the masses."""

    def _log_c(self) -> float:
        return self.n * np.log(2.0 * np.pi / self.model.potential.omega)

    def g(self, E):  # noqa: D102
        E, pos, Es = _positive(E)
        return np.where(pos, np.exp(self._log_c() + (self.n - 1) * np.log(Es) - gammaln(self.n)), 0.0)

    def V(self, E):  # noqa: D102
        E, pos, Es = _positive(E)
        return np.where(pos, np.exp(self._log_c() + self.n * np.log(Es) - gammaln(self.n + 1)), 0.0)

    def _dV_dparam(self, E, name):
        return -(self.n / self.model.potential.omega) * self.V(E)

    def log_g(self, E):  # noqa: D102
        E, pos, Es = _positive(E)
        return np.where(pos, self._log_c() + (self.n - 1) * np.log(Es) - gammaln(self.n), -np.inf)


class FreeDOS(DensityOfStates):
    """Free particles in a cubic box of edge L: V ∝ L^n E^(n/2)."""

    def _log_c(self) -> float:
        m = self.model.mass_vector
        return (
            self.n * np.log(self.model.potential.box)
            + 0.5 * np.sum(np.log(2.0 * m))
            + 0.5 * self.n * np.log(np.pi)
            - gammaln(0.5 * self.n + 1.0)
        )

    def V(self, E):  # noqa: D102
        E, pos, Es = _positive(E)
        return np.where(pos, np.exp(self._log_c() + 0.5 * self.n * np.log(Es)), 0.0)

    def g(self, E):  # noqa: D102
        E, pos, Es = _positive(E)
        return np.where(pos, 0.5 * self.n * np.exp(self._log_c() + (0.5 * self.n - 1.0) * np.log(Es)), 0.0)

    def _dV_dparam(self, E, name):
        return (self.n / self.model.potential.box) * self.V(E)

    def log_g(self, E):  # noqa: D102
        E, pos, Es = _positive(E)
        return np.where(pos, np.log(0.5 * self.n) + self._log_c() + (0.5 * self.n - 1.0) * np.log(Es), -np.inf)


class QuarticDOS(DensityOfStates):
    """U = Σ(a q² + b q⁴) for up to four coordinates.

    Single coordinate of mass m, with q*² the turning point:
    g₁(e) = 2√(2m) ∫₀^{π/2} dθ / √(a + b q*²(1 + sin²θ)) and
    V₁(e) = 4√(2m) q*² ∫₀^{π/2} cos²θ √(a + b q*²(1 + sin²θ)) dθ.
    More coordinates follow from g_{k+l} = g_k * g_l and V_{k+l} = V_k * g_l.
    """

    def __init__(self, model: SystemModel):  # noqa: D107
        super().__init__(model)
        pot = model.potential
        if not pot.a > 0 or pot.b < 0:
            msg = f"Quartic density of states needs a > 0 and b >= 0, got a={pot.a}, b={pot.b}"
            raise ContractError(msg)
        if self.n > MAX_QUARTIC_DOF:
            msg = f"Quartic density of states is available for N*d <= {MAX_QUARTIC_DOF}, got {self.n}"
            raise ContractError(msg)
        self.a = pot.a
        self.b = pot.b
        self.masses = tuple(float(m) for m in model.mass_vector)

    def _turning(self, e):
        if self.b == 0:
            return e / self.a
        return 2.0 * e / (self.a + np.sqrt(self.a * self.a + 4.0 * self.b * e))

    def _single(self, e, m: float, volume: bool):
        e = np.asarray(e, dtype=float)
        pos = e > 0
        es = np.where(pos, e, 0.0)
        x, w = _legendre()
        theta = 0.5 * np.pi * x
        s2 = np.sin(theta) ** 2
        qs2 = self._turning(es)[..., None]
        root = np.sqrt(self.a + self.b * qs2 * (1.0 + s2))
        if volume:
            val = 4.0 * np.sqrt(2.0 * m) * qs2[..., 0] * (0.5 * np.pi) * np.sum(w * np.cos(theta) ** 2 * root, axis=-1)
        else:
            val = 2.0 * np.sqrt(2.0 * m) * (0.5 * np.pi) * np.sum(w / root, axis=-1)
        return np.where(pos, val, 0.0)

    def _eval(self, E, masses: tuple[float, ...], volume: bool):
        if len(masses) == 1:
            return self._single(E, masses[0], volume)
        k = (len(masses) + 1) // 2
        left, right = masses[:k], masses[k:]
        E = np.asarray(E, dtype=float)
        pos = E > 0
        Es = np.where(pos, E, 0.0)
        x, w = _legendre()
        e = Es[..., None] * x
        inner = self._eval(e, left, volume) * self._eval(Es[..., None] - e, right, False)
        return np.where(pos, Es * np.sum(w * inner, axis=-1), 0.0)

    def g(self, E):  # noqa: D102
        return self._eval(E, self.masses, False)

    def V(self, E):  # noqa: D102
        return self._eval(E, self.masses, True)


def density_of_states(model: SystemModel) -> DensityOfStates:
    """Return the density-of-states backbone for ``model``."""
    pot = model.potential
    if isinstance(pot, Harmonic):
        return HarmonicDOS(model)
    if isinstance(pot, Free):
        return FreeDOS(model)
    if isinstance(pot, Quartic):
        return QuarticDOS(model)
    msg = f"No density of states for potential {type(pot).__name__}"
    raise ContractError(msg)
