"""Non-potential forces, the constraint f = β(H)·𝒫 - Ω and its projection.

A base force F^(n) supplies its value, divergence, Jacobian contractions and
the gradient of its divergence analytically.  From these the constraint
gradients P = ∂f/∂p and Q = ∂f/∂q are assembled for separable Hamiltonians,
and the Lagrange multiplier λ = -(P·F + Q·K)/(P·P) makes the projected
momentum rate F + λP tangent to the hypersurface f = const.

Array kernels take ``(..., n)`` batches; the public operations take a
single :class:`~fewtherm.phase_model.PhaseState`.
"""

from __future__ import annotations

import logging
from abc import ABC
from abc import abstractmethod
from dataclasses import dataclass
from typing import TYPE_CHECKING
from typing import ClassVar

import numpy as np

from .context import numerics
from .errors import ContractError
from .errors import SingularityError
from .phase_model import PhaseState
from .phase_model import energy
from .phase_model import potential_gradient
from .phase_model import velocity

if TYPE_CHECKING:
    from .beta_families import BetaFamily
    from .phase_model import SystemModel

logger = logging.getLogger(__name__)


class BaseForce(ABC):
    """A velocity-dependent force F^(n)(q, p) with analytic derivative data.

    Jacobian convention: ``J[i, j] = ∂F_j/∂p_i`` (and likewise for q).
    """

    kind: ClassVar[str]

    @abstractmethod
    def force(self, model: SystemModel, q, p) -> np.ndarray:
        """F^(n), same shape as p."""

    @abstractmethod
    def divergence(self, model: SystemModel, q, p) -> np.ndarray:
        """Ω = Σ_j ∂F_j/∂p_j."""

    @abstractmethod
    def contract_p(self, model: SystemModel, q, p, v) -> np.ndarray:
        """Σ_j (∂F_j/∂p_i) v_j."""

    @abstractmethod
    def contract_q(self, model: SystemModel, q, p, v) -> np.ndarray:
        """Σ_j (∂F_j/∂q_i) v_j."""

    @abstractmethod
    def divergence_grad_p(self, model: SystemModel, q, p) -> np.ndarray:
        """∂Ω/∂p_i = Σ_j ∂²F_j/∂p_i∂p_j."""

    @abstractmethod
    def divergence_grad_q(self, model: SystemModel, q, p) -> np.ndarray:
        """∂Ω/∂q_i = Σ_j ∂²F_j/∂q_i∂p_j."""

    @property
    @abstractmethod
    def is_conservative(self) -> bool:
        """True when F^(n) vanishes identically."""

    def jacobian_p(self, model: SystemModel, s: PhaseState) -> np.ndarray:
        """Full matrix ∂F_j/∂p_i at one state."""
        n = s.size
        eye = np.eye(n)
        return self.contract_p(model, np.broadcast_to(s.q, (n, n)), np.broadcast_to(s.p, (n, n)), eye).T

    def jacobian_q(self, model: SystemModel, s: PhaseState) -> np.ndarray:
        """Full matrix ∂F_j/∂q_i at one state."""
        n = s.size
        eye = np.eye(n)
        return self.contract_q(model, np.broadcast_to(s.q, (n, n)), np.broadcast_to(s.p, (n, n)), eye).T


@dataclass(frozen=True)
class ZeroForce(BaseForce):
    """No non-potential force; the dynamics is Hamiltonian."""

    kind: ClassVar[str] = "none"

    def force(self, model, q, p):  # noqa: D102
        return np.zeros_like(p, dtype=float)

    def divergence(self, model, q, p):  # noqa: D102
        return np.zeros(np.shape(p)[:-1])

    def contract_p(self, model, q, p, v):  # noqa: D102
        return np.zeros(np.broadcast_shapes(np.shape(p), np.shape(v)))

    contract_q = contract_p

    def divergence_grad_p(self, model, q, p):  # noqa: D102
        return np.zeros_like(p, dtype=float)

    divergence_grad_q = divergence_grad_p

    @property
    def is_conservative(self) -> bool:  # noqa: D102
        return True


@dataclass(frozen=True)
class LinearFriction(BaseForce):
    """F^(n) = -γp."""

    gamma: float = 1.0
    kind: ClassVar[str] = "linear_friction"

    def force(self, model, q, p):  # noqa: D102
        return -self.gamma * np.asarray(p, dtype=float)

    def divergence(self, model, q, p):  # noqa: D102
        return np.full(np.shape(p)[:-1], -self.gamma * np.shape(p)[-1])

    def contract_p(self, model, q, p, v):  # noqa: D102
        return -self.gamma * np.broadcast_to(v, np.broadcast_shapes(np.shape(p), np.shape(v))).astype(float)

    def contract_q(self, model, q, p, v):  # noqa: D102
        return np.zeros(np.broadcast_shapes(np.shape(p), np.shape(v)))

    def divergence_grad_p(self, model, q, p):  # noqa: D102
        return np.zeros_like(p, dtype=float)

    divergence_grad_q = divergence_grad_p

    @property
    def is_conservative(self) -> bool:  # noqa: D102
        return self.gamma == 0


@dataclass(frozen=True)
class CanonicalDissipative(BaseForce):
    """F^(n) = -∂G(H)/∂p = -G'(H)·p/m with G(H) = Σ_k coefficients[k]·H^k."""

    coefficients: tuple[float, ...] = (0.0, -1.0, 0.5)
    kind: ClassVar[str] = "canonical_dissipative"

    def __post_init__(self):
        object.__setattr__(self, "coefficients", tuple(float(c) for c in self.coefficients))
        if not self.coefficients:
            msg = "Canonical-dissipative G needs at least one coefficient"
            raise ContractError(msg)

    def _g(self, H, order: int):
        poly = np.polynomial.Polynomial(self.coefficients)
        return poly.deriv(order)(H) if order else poly(H)

    def G(self, H):  # noqa: N802
        """G(H)."""
        return self._g(H, 0)

    def _parts(self, model, q, p):
        H = energy(model, q, p)
        K = velocity(model, p)
        return H, K, np.asarray(self._g(H, 1))[..., None], np.asarray(self._g(H, 2))[..., None]

    def force(self, model, q, p):  # noqa: D102
        H, K, g1, _ = self._parts(model, q, p)
        return -g1 * K

    def divergence(self, model, q, p):  # noqa: D102
        H, K, g1, g2 = self._parts(model, q, p)
        S = np.sum(K * K, axis=-1)
        M = np.sum(1.0 / model.mass_vector)
        return -g2[..., 0] * S - g1[..., 0] * M

    def contract_p(self, model, q, p, v):  # noqa: D102
        H, K, g1, g2 = self._parts(model, q, p)
        return -g2 * K * np.sum(K * v, axis=-1, keepdims=True) - g1 * v / model.mass_vector

    def contract_q(self, model, q, p, v):  # noqa: D102
        H, K, g1, g2 = self._parts(model, q, p)
        a = potential_gradient(model, q)
        return -g2 * a * np.sum(K * v, axis=-1, keepdims=True)

    def divergence_grad_p(self, model, q, p):  # noqa: D102
        H, K, g1, g2 = self._parts(model, q, p)
        g3 = np.asarray(self._g(H, 3))[..., None]
        S = np.sum(K * K, axis=-1, keepdims=True)
        M = np.sum(1.0 / model.mass_vector)
        return -g3 * K * S - 2.0 * g2 * K / model.mass_vector - g2 * M * K

    def divergence_grad_q(self, model, q, p):  # noqa: D102
        H, K, g1, g2 = self._parts(model, q, p)
        g3 = np.asarray(self._g(H, 3))[..., None]
        a = potential_gradient(model, q)
        S = np.sum(K * K, axis=-1, keepdims=True)
        M = np.sum(1.0 / model.mass_vector)
        return -g3 * a * S - g2 * M * a

    @property
    def is_conservative(self) -> bool:  # noqa: D102
        return all(c == 0 for c in self.coefficients[1:])


FORCES: dict[str, type[BaseForce]] = {cls.kind: cls for cls in (ZeroForce, LinearFriction, CanonicalDissipative)}


@dataclass(frozen=True)
class ConstraintTerms:
    """Everything the projection needs at a batch of states."""

    H: np.ndarray
    beta: np.ndarray
    K: np.ndarray
    """∂H/∂p."""
    a: np.ndarray
    """∂H/∂q."""
    Fn: np.ndarray
    """Base non-potential force."""
    power: np.ndarray
    omega: np.ndarray
    P: np.ndarray
    Q: np.ndarray

    @property
    def f(self) -> np.ndarray:
        """Constraint value β𝒫 - Ω."""
        return self.beta * self.power - self.omega

    @property
    def F(self) -> np.ndarray:
        """Unprojected momentum rate -∂H/∂q + F^(n)."""
        return -self.a + self.Fn


def constraint_terms(model: SystemModel, force: BaseForce, family: BetaFamily, q, p) -> ConstraintTerms:
    """Evaluate f and its gradients P, Q for a batch of states."""
    q = np.asarray(q, dtype=float)
    p = np.asarray(p, dtype=float)
    H = energy(model, q, p)
    b = np.asarray(family.beta(H), dtype=float)
    db = np.asarray(family.dbeta_dH(H), dtype=float)
    K = velocity(model, p)
    a = potential_gradient(model, q)
    Fn = force.force(model, q, p)
    pw = np.sum(Fn * K, axis=-1)
    om = force.divergence(model, q, p)
    bb, dbb, pwb = b[..., None], db[..., None], pw[..., None]
    P = dbb * K * pwb + bb * force.contract_p(model, q, p, K) + bb * Fn / model.mass_vector
    P = P - force.divergence_grad_p(model, q, p)
    Q = dbb * a * pwb + bb * force.contract_q(model, q, p, K) - force.divergence_grad_q(model, q, p)
    return ConstraintTerms(H=H, beta=b, K=K, a=a, Fn=Fn, power=pw, omega=om, P=P, Q=Q)


def multiplier(terms: ConstraintTerms, state: PhaseState | None = None) -> np.ndarray:
    """λ = -(P·F + Q·K)/(P·P); raise SingularityError where P·P ≤ ε_P."""
    F = terms.F
    pp = np.sum(terms.P * terms.P, axis=-1)
    eps = numerics().degeneracy_factor * (1.0 + np.sum(F * F, axis=-1))
    bad = pp <= eps
    if np.any(bad):
        idx = np.flatnonzero(np.atleast_1d(bad))[0]
        val = float(np.atleast_1d(pp)[idx])
        msg = f"Degenerate constraint gradient: P.P = {val:.3e} at or below threshold"
        raise SingularityError(msg, state=state)
    num = np.sum(terms.P * F, axis=-1) + np.sum(terms.Q * terms.K, axis=-1)
    return -num / pp


@dataclass(frozen=True)
class ConstraintGradients:
    """P = ∂f/∂p and Q = ∂f/∂q at one state."""

    P: np.ndarray
    Q: np.ndarray


# Operations --------------------------------------------------------------------


def power(model: SystemModel, force: BaseForce, s: PhaseState) -> float:
    """Return 𝒫 = Σ F^(n)_i ∂H/∂p_i."""
    model.check(s)
    return float(np.dot(force.force(model, s.q, s.p), velocity(model, s.p)))


def omega(model: SystemModel, force: BaseForce, s: PhaseState) -> float:
    """Return Ω = Σ ∂F^(n)_i/∂p_i."""
    model.check(s)
    return float(force.divergence(model, s.q, s.p))


def constraint_value(model: SystemModel, force: BaseForce, family: BetaFamily, s: PhaseState) -> float:
    """Return f = β(H)·𝒫 - Ω; zero on the constraint hypersurface."""
    model.check(s)
    H = energy(model, s.q, s.p)
    return float(family.beta(H) * power(model, force, s) - omega(model, force, s))


def constraint_gradients(model: SystemModel, force: BaseForce, family: BetaFamily, s: PhaseState) -> ConstraintGradients:
    """Return (P, Q) assembled from analytic derivatives of H, β and F^(n)."""
    model.check(s)
    t = constraint_terms(model, force, family, s.q, s.p)
    return ConstraintGradients(P=t.P, Q=t.Q)


def lagrange_multiplier(model: SystemModel, force: BaseForce, family: BetaFamily, s: PhaseState) -> float:
    """Return λ making F + λP tangent to f = const."""
    model.check(s)
    return float(multiplier(constraint_terms(model, force, family, s.q, s.p), state=s))


def project_force(model: SystemModel, force: BaseForce, family: BetaFamily, s: PhaseState) -> np.ndarray:
    """Return the projected momentum rate F^new = -∂H/∂q + F^(n) + λP."""
    model.check(s)
    t = constraint_terms(model, force, family, s.q, s.p)
    lam = multiplier(t, state=s)
    return t.F + lam * t.P


def minimal_constraint_force(model: SystemModel, family: BetaFamily, s: PhaseState) -> np.ndarray:
    """Closed-form F^new for linear friction with equal masses and any β(H).

    F^new = -∂U/∂q + (β/A)·p(p·∂U/∂q)/p² with A = β + β'p²/(2m).  The friction
    coefficient drops out; it only has to be non-zero for the constraint to exist.
    """
    model.check(s)
    if not model.equal_masses:
        msg = "The minimal-constraint closed form needs equal masses"
        raise ContractError(msg)
    m = model.masses[0]
    H = energy(model, s.q, s.p)
    a = potential_gradient(model, s.q)
    p2 = float(np.dot(s.p, s.p))
    b = float(family.beta(H))
    A = b + float(family.dbeta_dH(H)) * p2 / (2.0 * m)
    if p2 == 0 or A == 0:
        msg = "Minimal-constraint force is singular (p = 0 or beta + beta'*p^2/2m = 0)"
        raise SingularityError(msg, state=s)
    return -a + (b / A) * s.p * np.dot(s.p, a) / p2


# Flows -------------------------------------------------------------------------


class BaseFlow:
    """Unprojected flow dq/dt = K, dp/dt = -∂H/∂q + F^(n).

    Used when the base force is conservative, so the constraint holds trivially.
    """

    projected: ClassVar[bool] = False

    def __init__(self, model: SystemModel, force: BaseForce, family: BetaFamily):  # noqa: D107
        self.model = model
        self.force = force
        self.family = family

    def nonpotential(self, q, p) -> np.ndarray:
        """The non-potential force actually applied."""
        return self.force.force(self.model, q, p)

    def rate(self, q, p) -> tuple[np.ndarray, np.ndarray]:
        """(dq/dt, dp/dt) at a batch of states."""
        return velocity(self.model, p), -potential_gradient(self.model, q) + self.nonpotential(q, p)

    def constraint(self, q, p) -> np.ndarray:
        """f at a batch of states."""
        return np.zeros(np.shape(p)[:-1])

    def applied_power(self, q, p) -> np.ndarray:
        """𝒫 of the applied non-potential force."""
        return np.sum(self.nonpotential(q, p) * velocity(self.model, p), axis=-1)

    def applied_omega(self, q, p) -> np.ndarray:
        """Ω of the applied non-potential force."""
        return self.force.divergence(self.model, q, p)

    def __repr__(self) -> str:
        return f"{type(self).__name__}(force={self.force!r}, family={self.family!r})"


class ProjectedFlow(BaseFlow):
    """Flow with dp/dt = -∂H/∂q + F^(n) + λP, preserving f along trajectories."""

    projected: ClassVar[bool] = True

    def terms(self, q, p) -> ConstraintTerms:
        """Constraint terms at a batch of states."""
        return constraint_terms(self.model, self.force, self.family, q, p)

    def nonpotential(self, q, p) -> np.ndarray:  # noqa: D102
        t = self.terms(q, p)
        return t.Fn + multiplier(t)[..., None] * t.P

    def constraint(self, q, p) -> np.ndarray:  # noqa: D102
        return self.terms(q, p).f

    def applied_omega(self, q, p) -> np.ndarray:
        """Ω of F^(n) + λP by central differences in p (no closed form for div λP)."""
        return field_divergence(self.nonpotential, q, p)


def make_flow(model: SystemModel, force: BaseForce, family: BetaFamily) -> BaseFlow:
    """Select the unprojected flow for conservative forces, the projected one otherwise."""
    if force.is_conservative:
        logger.debug("Force %r is conservative; using the unprojected flow", force)
        return BaseFlow(model, force, family)
    return ProjectedFlow(model, force, family)


def field_divergence(field, q, p) -> np.ndarray:
    """Σ_i ∂field_i/∂p_i by central differences; ``field`` maps batches (q, p) -> (..., n)."""
    q = np.asarray(q, dtype=float)
    p = np.asarray(p, dtype=float)
    n = p.shape[-1]
    h = numerics().fd_step * (1.0 + np.abs(p))
    eye = np.eye(n)
    # all 2n shifted copies evaluated as one batch
    shifts = (eye * h[..., None, :])
    pp = np.concatenate([p[..., None, :] + shifts, p[..., None, :] - shifts], axis=-2)
    qq = np.broadcast_to(q[..., None, :], pp.shape)
    vals = field(qq, pp)
    plus = np.diagonal(vals[..., :n, :], axis1=-2, axis2=-1)
    minus = np.diagonal(vals[..., n:, :], axis1=-2, axis2=-1)
    return np.sum((plus - minus) / (2.0 * h), axis=-1)


def surface_beta(model: SystemModel, flow: BaseFlow, s: PhaseState) -> float:
    """Ω/𝒫 of the non-potential force the flow applies at s.

    For the isokinetic flow with equal masses this equals (n - 1)/(Σp²/m).
    """
    model.check(s)
    pw = float(flow.applied_power(s.q, s.p))
    om = float(flow.applied_omega(s.q, s.p))
    if pw == 0:
        msg = "Applied power vanishes; surface beta undefined"
        raise SingularityError(msg, state=s)
    return om / pw


def isokinetic_beta0(n_dof: int, kT: float) -> float:
    """β₀ of the linear-friction constraint whose surface is canonical at kT.

    The invariant density on Σp²/m = n/β₀ is canonical at (Σp²/m)/(n - 1).
    """
    if n_dof < 2:
        msg = "Isokinetic thermostat needs at least two degrees of freedom"
        raise ContractError(msg)
    if not kT > 0:
        msg = f"kT must be positive, got {kT}"
        raise ContractError(msg)
    return n_dof / ((n_dof - 1) * kT)


def tangency(model: SystemModel, flow: BaseFlow, s: PhaseState) -> float:
    """Return df/dt = P·(dp/dt) + Q·(dq/dt) along the flow; zero for projected flows."""
    model.check(s)
    t = constraint_terms(model, flow.force, flow.family, s.q, s.p)
    dq, dp = flow.rate(s.q, s.p)
    return float(np.dot(t.P, dp) + np.dot(t.Q, dq))
