"""Phase-space states, separable Hamiltonians and the built-in potential families.

All array kernels accept positions/momenta of shape ``(..., n)`` with
``n = N*d`` so that batches of states are evaluated in a single call.
The public operations take a :class:`PhaseState` and return plain floats or
1-D arrays.
"""

from __future__ import annotations

import dataclasses
from abc import ABC
from abc import abstractmethod
from collections.abc import Mapping
from dataclasses import dataclass
from dataclasses import field
from typing import ClassVar

import numpy as np

from .errors import ContractError
from .errors import ParameterLookupError


@dataclass(frozen=True)
class PhaseState:
    """A point (q, p) of the 2*N*d dimensional phase space at time t."""

    q: np.ndarray
    """Positions, length N*d."""

    p: np.ndarray
    """Momenta, length N*d."""

    t: float = 0.0
    """Time."""

    def __post_init__(self):
        q = np.array(self.q, dtype=float).reshape(-1)
        p = np.array(self.p, dtype=float).reshape(-1)
        if q.size == 0 or q.shape != p.shape:
            msg = f"q and p must have the same non-zero length, got {q.size} and {p.size}"
            raise ContractError(msg)
        if not (np.all(np.isfinite(q)) and np.all(np.isfinite(p)) and np.isfinite(self.t)):
            msg = "Phase state has non-finite components"
            raise ContractError(msg)
        q.flags.writeable = False
        p.flags.writeable = False
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "t", float(self.t))

    @property
    def size(self) -> int:
        """Number of coordinates N*d."""
        return self.q.size

    def replace(self, q=None, p=None, t: float | None = None) -> PhaseState:
        """Return a copy with some fields changed."""
        return PhaseState(
            q=self.q if q is None else q,
            p=self.p if p is None else p,
            t=self.t if t is None else t,
        )


class Potential(ABC):
    """A potential-energy family U(q, x) with analytic derivatives."""

    kind: ClassVar[str]

    @property
    @abstractmethod
    def params(self) -> dict[str, float]:
        """External parameters entering U."""

    @abstractmethod
    def energy(self, q: np.ndarray, m: np.ndarray) -> np.ndarray:
        """U summed over the last axis; ``m`` is the per-component mass vector."""

    @abstractmethod
    def gradient(self, q: np.ndarray, m: np.ndarray) -> np.ndarray:
        """dU/dq, same shape as q."""

    @abstractmethod
    def param_derivative(self, q: np.ndarray, m: np.ndarray, name: str) -> np.ndarray:
        """dU/dx_name summed over the last axis."""

    @abstractmethod
    def coefficients(self) -> dict[str, tuple[float, float]]:
        """Map parameter -> (c, dc/dx) where U is linear in the coefficient c(x)."""

    def with_params(self, **values: float) -> Potential:
        """Return a copy with some parameters changed."""
        unknown = set(values) - set(self.params)
        if unknown:
            msg = f"Unknown {self.kind} potential parameter(s): {sorted(unknown)}"
            raise ParameterLookupError(msg)
        return dataclasses.replace(self, **values)

    def _unknown(self, name: str) -> ParameterLookupError:
        return ParameterLookupError(f"{self.kind} potential has no parameter '{name}'")


@dataclass(frozen=True)
class Harmonic(Potential):
    """U = sum_i m_i omega^2 q_i^2 / 2."""

    omega: float = 1.0
    kind: ClassVar[str] = "harmonic"

    @property
    def params(self) -> dict[str, float]:  # noqa: D102
        return {"omega": self.omega}

    def energy(self, q, m):  # noqa: D102
        return 0.5 * self.omega**2 * np.sum(m * q * q, axis=-1)

    def gradient(self, q, m):  # noqa: D102
        return self.omega**2 * m * q

    def param_derivative(self, q, m, name):  # noqa: D102
        if name != "omega":
            raise self._unknown(name)
        return self.omega * np.sum(m * q * q, axis=-1)

    def coefficients(self):  # noqa: D102
        return {"omega": (self.omega**2, 2.0 * self.omega)}


@dataclass(frozen=True)
class Quartic(Potential):
    """U = sum_i (a q_i^2 + b q_i^4)."""

    a: float = 1.0
    b: float = 0.25
    kind: ClassVar[str] = "quartic"

    @property
    def params(self) -> dict[str, float]:  # noqa: D102
        return {"a": self.a, "b": self.b}

    def energy(self, q, m):  # noqa: D102
        q2 = q * q
        return np.sum(self.a * q2 + self.b * q2 * q2, axis=-1)

    def gradient(self, q, m):  # noqa: D102
        return 2.0 * self.a * q + 4.0 * self.b * q**3

    def param_derivative(self, q, m, name):  # noqa: D102
        if name == "a":
            return np.sum(q * q, axis=-1)
        if name == "b":
            return np.sum(q**4, axis=-1)
        raise self._unknown(name)

    def coefficients(self):  # noqa: D102
        return {"a": (self.a, 1.0), "b": (self.b, 1.0)}


@dataclass(frozen=True)
class Free(Potential):
    """No potential; ``box`` is the edge of the cubic box bounding each coordinate in integrals."""

    box: float = 10.0
    kind: ClassVar[str] = "free"

    @property
    def params(self) -> dict[str, float]:  # noqa: D102
        return {"box": self.box}

    def energy(self, q, m):  # noqa: D102
        return np.zeros(np.shape(q)[:-1])

    def gradient(self, q, m):  # noqa: D102
        return np.zeros_like(q)

    def param_derivative(self, q, m, name):  # noqa: D102
        if name != "box":
            raise self._unknown(name)
        return np.zeros(np.shape(q)[:-1])

    def coefficients(self):  # noqa: D102
        return {}


@dataclass(frozen=True)
class SystemModel:
    """Separable Hamiltonian H = sum p^2/2m + U(q, x) for N particles in d dimensions."""

    n_particles: int
    dim: int
    masses: tuple[float, ...]
    potential: Potential
    labels: Mapping[str, float] = field(default_factory=dict)
    """External parameters that do not enter H (for example a temperature label)."""

    def __post_init__(self):
        if self.n_particles < 1 or self.dim < 1:
            msg = f"Need N >= 1 and d >= 1, got N={self.n_particles}, d={self.dim}"
            raise ContractError(msg)
        masses = tuple(float(m) for m in np.broadcast_to(np.asarray(self.masses, dtype=float), (self.n_particles,)))
        if any(not m > 0 for m in masses):
            msg = f"Masses must be positive, got {masses}"
            raise ContractError(msg)
        clash = set(self.labels) & set(self.potential.params)
        if clash:
            msg = f"Label(s) {sorted(clash)} shadow potential parameters"
            raise ContractError(msg)
        object.__setattr__(self, "masses", masses)
        object.__setattr__(self, "labels", dict(self.labels))
        m = np.repeat(np.asarray(masses), self.dim)
        m.flags.writeable = False
        object.__setattr__(self, "_m", m)

    @property
    def n_dof(self) -> int:
        """Number of coordinates N*d."""
        return self.n_particles * self.dim

    @property
    def mass_vector(self) -> np.ndarray:
        """Mass of every coordinate, length N*d."""
        return self._m

    @property
    def equal_masses(self) -> bool:
        """True when all particles share one mass."""
        return len(set(self.masses)) == 1

    @property
    def params(self) -> dict[str, float]:
        """All external parameters x (potential parameters and labels)."""
        return {**self.potential.params, **self.labels}

    def with_params(self, **values: float) -> SystemModel:
        """Return a copy with external parameters changed."""
        pot = {k: v for k, v in values.items() if k in self.potential.params}
        lab = {k: v for k, v in values.items() if k not in pot}
        unknown = set(lab) - set(self.labels)
        if unknown:
            msg = f"Unknown model parameter(s): {sorted(unknown)}"
            raise ParameterLookupError(msg)
        potential = self.potential.with_params(**pot) if pot else self.potential
        return dataclasses.replace(self, potential=potential, labels={**self.labels, **lab})

    def check(self, s: PhaseState) -> None:
        """Raise ContractError if ``s`` does not have N*d coordinates."""
        if s.size != self.n_dof:
            msg = f"State has {s.size} coordinates, model expects N*d = {self.n_dof}"
            raise ContractError(msg)


# Array kernels -----------------------------------------------------------------


def kinetic_energy(model: SystemModel, p: np.ndarray) -> np.ndarray:
    """sum p^2 / 2m over the last axis."""
    return 0.5 * np.sum(p * p / model.mass_vector, axis=-1)


def energy(model: SystemModel, q: np.ndarray, p: np.ndarray) -> np.ndarray:
    """H(q, p) for arrays of shape (..., n)."""
    return kinetic_energy(model, p) + model.potential.energy(q, model.mass_vector)


def velocity(model: SystemModel, p: np.ndarray) -> np.ndarray:
    """K = dH/dp = p/m."""
    return p / model.mass_vector


def potential_gradient(model: SystemModel, q: np.ndarray) -> np.ndarray:
    """dH/dq = dU/dq."""
    return model.potential.gradient(q, model.mass_vector)


# Operations --------------------------------------------------------------------


def hamiltonian(model: SystemModel, s: PhaseState) -> float:
    """Return H(s) = sum p_i^2/2m_i + U(q, x)."""
    model.check(s)
    return float(energy(model, s.q, s.p))


def grad_q(model: SystemModel, s: PhaseState) -> np.ndarray:
    """Return dH/dq at s."""
    model.check(s)
    return potential_gradient(model, s.q)


def grad_p(model: SystemModel, s: PhaseState) -> np.ndarray:
    """Return dH/dp = p/m at s."""
    model.check(s)
    return velocity(model, s.p)


def param_derivative(model: SystemModel, s: PhaseState, k: str) -> float:
    """Return dH/dx_k at s; parameters that do not enter H give 0."""
    model.check(s)
    if k in model.potential.params:
        return float(model.potential.param_derivative(s.q, model.mass_vector, k))
    if k in model.labels:
        return 0.0
    msg = f"Unknown parameter '{k}'; model defines {sorted(model.params)}"
    raise ParameterLookupError(msg)
