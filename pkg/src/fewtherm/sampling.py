"""Initial-condition samplers.

A sampler draws ``n`` phase-space points for a flow and returns ``(q, p)``
arrays of shape ``(n, N*d)``.  Every sampler takes an explicit
``numpy.random.Generator`` so ensembles can hand each trajectory its own
stream.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import TYPE_CHECKING
from typing import Protocol

import numpy as np

from .dynamics import project_batch
from .errors import DomainError
from .errors import ProjectionError
from .errors import SamplingError
from .errors import SingularityError
from .phase_model import Free
from .phase_model import Harmonic
from .phase_model import Quartic

if TYPE_CHECKING:
    from .distribution import DensityModel
    from .forces import BaseFlow
    from .phase_model import SystemModel

logger = logging.getLogger(__name__)

ACCEPTANCE_FLOOR = 1e-3


class InitialSampler(Protocol):
    """Anything that draws initial states for a flow."""

    def draw(self, flow: BaseFlow, n: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]: ...


def _unit_sphere(rng: np.random.Generator, n: int, dim: int) -> np.ndarray:
    z = rng.standard_normal((n, dim))
    return z / np.linalg.norm(z, axis=-1, keepdims=True)


def _rejection(rng: np.random.Generator, n: int, propose, accept_prob, what: str) -> np.ndarray:
    """Collect ``n`` accepted proposals; give up below the acceptance floor."""
    out: list[np.ndarray] = []
    have = tried = 0
    while have < n:
        batch = max(64, 2 * (n - have))
        x = propose(batch)
        keep = rng.random(batch) < accept_prob(x)
        out.append(x[keep])
        have += int(keep.sum())
        tried += batch
        if tried > 100 and have / tried < ACCEPTANCE_FLOOR:
            msg = f"{what} rejection sampler acceptance {have / tried:.1e} below floor {ACCEPTANCE_FLOOR:g}"
            raise SamplingError(msg)
    return np.concatenate(out)[:n]


def _shell_weight(frac: np.ndarray, dof: int) -> np.ndarray:
    inside = frac > 0
    return np.where(inside, np.where(inside, frac, 1.0) ** (0.5 * dof - 1.0), 0.0)


def canonical_positions(model: SystemModel, kT: float, n: int, rng: np.random.Generator) -> np.ndarray:
    """Positions drawn from exp(-U(q)/kT) (uniform in [0, L] for the free box)."""
    pot = model.potential
    m = model.mass_vector
    dof = model.n_dof
    if isinstance(pot, Harmonic):
        return rng.standard_normal((n, dof)) * np.sqrt(kT / (m * pot.omega**2))
    if isinstance(pot, Free):
        return rng.random((n, dof)) * pot.box
    if isinstance(pot, Quartic):
        sigma = np.sqrt(kT / (2.0 * pot.a))
        flat = _rejection(
            rng,
            n * dof,
            lambda k: rng.standard_normal(k) * sigma,
            lambda x: np.exp(-pot.b * x**4 / kT),
            "quartic position",
        )
        return flat.reshape(n, dof)
    msg = f"No canonical position sampler for {type(pot).__name__}"
    raise DomainError(msg)


@dataclass(frozen=True)
class GaussianSampler:
    """Off-surface Gaussian draw followed by Newton projection, retried on failure."""

    q_scale: float = 1.0
    p_scale: float = 1.0
    max_tries: int = 20

    def draw(self, flow, n, rng):  # noqa: D102
        model = flow.model
        dof = model.n_dof
        qs, ps = np.empty((n, dof)), np.empty((n, dof))
        for i in range(n):
            for attempt in range(self.max_tries):
                q = rng.standard_normal(dof) * self.q_scale
                p = rng.standard_normal(dof) * self.p_scale * np.sqrt(model.mass_vector)
                try:
                    p = project_batch(flow, q, p)
                except (ProjectionError, SingularityError, DomainError) as e:
                    logger.debug("Initial draw %d rejected on attempt %d: %s", i, attempt, e)
                    continue
                break
            else:
                msg = f"No on-surface initial state after {self.max_tries} Gaussian draws"
                raise SamplingError(msg)
            qs[i], ps[i] = q, p
        return qs, ps


@dataclass(frozen=True)
class DensitySampler:
    """Exact draws from ρ = exp(-B(H))/Z: energy from the tabulated CDF, then uniform on the shell H = E.

    Harmonic and free shells are spheres in scaled coordinates.  Quartic shells
    are sampled by rejection in position space.  Draws are not projected.
    """

    density: DensityModel

    def draw(self, flow, n, rng):  # noqa: D102
        model = self.density.model
        E = self.density.sample_energies(rng, n)
        pot = model.potential
        m = model.mass_vector
        dof = model.n_dof
        if isinstance(pot, Harmonic):
            z = _unit_sphere(rng, n, 2 * dof) * np.sqrt(E)[:, None]
            p = z[:, :dof] * np.sqrt(2.0 * m)
            q = z[:, dof:] / (pot.omega * np.sqrt(0.5 * m))
            return q, p
        if isinstance(pot, Free):
            q = rng.random((n, dof)) * pot.box
            p = _unit_sphere(rng, n, dof) * np.sqrt(E)[:, None] * np.sqrt(2.0 * m)
            return q, p
        if isinstance(pot, Quartic):
            return self._quartic(model, E, rng)
        msg = f"No shell sampler for {type(pot).__name__}"
        raise DomainError(msg)

    @staticmethod
    def _quartic(model, E, rng):
        pot = model.potential
        m = model.mass_vector
        dof = model.n_dof
        n = E.size
        if pot.b == 0:
            qmax = np.sqrt(E / pot.a)
        else:
            qmax = np.sqrt(2.0 * E / (pot.a + np.sqrt(pot.a**2 + 4.0 * pot.b * E)))
        if dof == 1:
            # q = q* sin θ with density ∝ 1/√(a + b q*²(1 + sin²θ)) in θ
            qs2 = qmax**2
            theta = np.empty(n)
            for i in range(n):
                theta[i] = _rejection(
                    rng,
                    1,
                    lambda k: rng.uniform(-0.5 * np.pi, 0.5 * np.pi, k),
                    lambda t, i=i: np.sqrt(pot.a / (pot.a + pot.b * qs2[i] * (1.0 + np.sin(t) ** 2))),
                    "quartic shell",
                )[0]
            q = (qmax * np.sin(theta))[:, None]
        else:
            # microcanonical position density ∝ (E - U)^(n/2 - 1) on U < E
            q = np.empty((n, dof))
            for i in range(n):
                q[i] = _rejection(
                    rng,
                    1,
                    lambda k, i=i: rng.uniform(-qmax[i], qmax[i], (k, dof)),
                    lambda x, i=i: _shell_weight(1.0 - pot.energy(x, m) / E[i], dof),
                    "quartic shell",
                )[0]
        kinetic = np.clip(E - pot.energy(q, m), 0.0, None)
        p = _unit_sphere(rng, n, dof) * np.sqrt(kinetic)[:, None] * np.sqrt(2.0 * m)
        return q, p


@dataclass(frozen=True)
class IsokineticSampler:
    """Positions canonical at ``kT``, momenta uniform on Σ p²/m = ``surface``.

    This is the invariant density of the Gaussian isokinetic flow restricted to
    its hypersurface when kT = surface/(N*d - 1).
    """

    kT: float
    surface: float

    def draw(self, flow, n, rng):  # noqa: D102
        model = flow.model
        q = canonical_positions(model, self.kT, n, rng)
        w = _unit_sphere(rng, n, model.n_dof) * np.sqrt(self.surface)
        p = w * np.sqrt(model.mass_vector)
        if flow.projected:
            p = project_batch(flow, q, p)
        return q, p
