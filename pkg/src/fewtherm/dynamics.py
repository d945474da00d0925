"""Time integration of (projected) flows, hypersurface projection and ensembles."""

from __future__ import annotations

import logging
from collections.abc import Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from dataclasses import field
from typing import TYPE_CHECKING
from typing import Literal

import numpy as np

from .context import numerics
from .context import submit
from .errors import ContractError
from .errors import FewthermError
from .errors import ProjectionError
from .errors import SingularityError
from .errors import TrajectoryError
from .forces import BaseFlow
from .forces import make_flow
from .phase_model import PhaseState
from .phase_model import energy
from .phase_model import potential_gradient
from .phase_model import velocity

if TYPE_CHECKING:
    from .beta_families import BetaFamily
    from .forces import BaseForce
    from .phase_model import SystemModel
    from .sampling import InitialSampler

logger = logging.getLogger(__name__)

Method = Literal["rk4", "semi_implicit_euler"]


@dataclass(frozen=True)
class IntegratorSpec:
    """How to advance a flow in time."""

    method: Method = "rk4"
    dt: float = 1e-3
    n_steps: int = 1000
    projection_interval: int = 1
    """Steps between projections onto the constraint hypersurface; 0 disables scheduled projections."""
    drift_tolerance: float = 1e-8
    """Largest |f| tolerated before a projection is forced."""
    stride: int = 10
    """Record every ``stride`` steps."""

    def __post_init__(self):
        if self.method not in ("rk4", "semi_implicit_euler"):
            msg = f"Unknown integrator method {self.method!r}"
            raise ContractError(msg)
        if not self.dt > 0 or not self.drift_tolerance > 0:
            msg = f"dt and drift_tolerance must be positive, got dt={self.dt}, drift_tolerance={self.drift_tolerance}"
            raise ContractError(msg)
        if self.n_steps < 0 or self.projection_interval < 0 or self.stride < 1:
            msg = "n_steps and projection_interval must be >= 0 and stride >= 1"
            raise ContractError(msg)


@dataclass(frozen=True)
class TrajectorySample:
    """One recorded point of a trajectory."""

    state: PhaseState
    H: float
    f: float
    omega: float
    power: float

    @property
    def t(self) -> float:  # noqa: D102
        return self.state.t


@dataclass
class Trajectory(Sequence):
    """Samples recorded at a fixed stride; timestamps increase by stride·dt."""

    samples: list[TrajectorySample] = field(default_factory=list)

    def __getitem__(self, i):
        return self.samples[i]

    def __len__(self) -> int:
        return len(self.samples)

    def append(self, sample: TrajectorySample) -> None:  # noqa: D102
        self.samples.append(sample)

    @property
    def t(self) -> np.ndarray:  # noqa: D102
        return np.array([s.t for s in self.samples])

    @property
    def H(self) -> np.ndarray:  # noqa: D102, N802
        return np.array([s.H for s in self.samples])

    @property
    def f(self) -> np.ndarray:  # noqa: D102
        return np.array([s.f for s in self.samples])

    @property
    def omega(self) -> np.ndarray:  # noqa: D102
        return np.array([s.omega for s in self.samples])

    @property
    def power(self) -> np.ndarray:  # noqa: D102
        return np.array([s.power for s in self.samples])

    @property
    def q(self) -> np.ndarray:  # noqa: D102
        return np.array([s.state.q for s in self.samples])

    @property
    def p(self) -> np.ndarray:  # noqa: D102
        return np.array([s.state.p for s in self.samples])

    @property
    def final(self) -> PhaseState:
        """Last recorded state."""
        return self.samples[-1].state


# Stepping ----------------------------------------------------------------------


def advance(flow: BaseFlow, q, p, dt: float, method: Method = "rk4"):
    """One step of size dt for a batch of states; returns new (q, p)."""
    if method == "semi_implicit_euler":
        _, dp = flow.rate(q, p)
        p1 = p + dt * dp
        return q + dt * velocity(flow.model, p1), p1
    k1q, k1p = flow.rate(q, p)
    k2q, k2p = flow.rate(q + 0.5 * dt * k1q, p + 0.5 * dt * k1p)
    k3q, k3p = flow.rate(q + 0.5 * dt * k2q, p + 0.5 * dt * k2p)
    k4q, k4p = flow.rate(q + dt * k3q, p + dt * k3p)
    return (
        q + dt / 6.0 * (k1q + 2.0 * k2q + 2.0 * k3q + k4q),
        p + dt / 6.0 * (k1p + 2.0 * k2p + 2.0 * k3p + k4p),
    )


def project_batch(flow: BaseFlow, q, p):
    """Newton iteration along P in momentum space until |f| meets the relative tolerance."""
    if not flow.projected:
        return np.asarray(p, dtype=float)
    cfg = numerics()
    p = np.array(p, dtype=float)
    for it in range(cfg.projection_max_iter + 1):
        t = flow.terms(q, p)
        f = t.f
        tol = cfg.projection_tol * np.maximum(1.0, np.abs(t.beta * t.power) + np.abs(t.omega))
        if np.all(np.abs(f) < tol):
            logger.debug("Projection converged after %d iterations, max |f| = %.3e", it, float(np.max(np.abs(f))))
            return p
        if it == cfg.projection_max_iter:
            break
        pp = np.sum(t.P * t.P, axis=-1)
        eps = cfg.degeneracy_factor * (1.0 + np.sum(t.F * t.F, axis=-1))
        if np.any(pp <= eps):
            msg = "Degenerate constraint gradient during projection (P.P at or below threshold)"
            raise SingularityError(msg)
        p = p - (f / pp)[..., None] * t.P
    msg = f"Projection did not converge in {cfg.projection_max_iter} iterations (max |f| = {float(np.max(np.abs(f))):.3e})"
    raise ProjectionError(msg)


def evolve_batch(flow: BaseFlow, q, p, spec: IntegratorSpec, n_steps: int):
    """Advance a batch of states ``n_steps`` times, projecting on the integrator's schedule."""
    q = np.array(q, dtype=float)
    p = np.array(p, dtype=float)
    for i in range(1, n_steps + 1):
        q, p = advance(flow, q, p, spec.dt, spec.method)
        if flow.projected and spec.projection_interval and i % spec.projection_interval == 0:
            p = project_batch(flow, q, p)
    return q, p


def _sample(flow: BaseFlow, q, p, t: float) -> TrajectorySample:
    return TrajectorySample(
        state=PhaseState(q=q, p=p, t=t),
        H=float(energy(flow.model, q, p)),
        f=float(flow.constraint(q, p)),
        omega=float(flow.applied_omega(q, p)),
        power=float(flow.applied_power(q, p)),
    )


# Operations --------------------------------------------------------------------


@dataclass(frozen=True)
class StepResult:
    """State after one step with its step number and post-step |f|."""

    state: PhaseState
    abs_f: float
    index: int


def step(
    model: SystemModel,
    force: BaseForce,
    family: BetaFamily,
    s: PhaseState,
    spec: IntegratorSpec,
    index: int | None = None,
) -> StepResult:
    """Advance s by one dt with F^new evaluated at every stage.

    ``index`` numbers the step in results and errors; by default it is the step ending at s.t + dt.
    """
    model.check(s)
    flow = make_flow(model, force, family)
    if index is None:
        index = round(s.t / spec.dt) + 1
    f0 = abs(float(flow.constraint(s.q, s.p)))
    if f0 > spec.drift_tolerance:
        msg = f"State is off the constraint hypersurface (|f| = {f0:.3e}); project it first"
        raise ContractError(msg)
    try:
        q, p = advance(flow, s.q, s.p, spec.dt, spec.method)
    except SingularityError as e:
        if e.step is None:
            e.step, e.state = index, s
        raise
    if not (np.all(np.isfinite(q)) and np.all(np.isfinite(p))):
        msg = f"Non-finite state at step {index}"
        raise SingularityError(msg, state=s, step=index)
    abs_f = abs(float(flow.constraint(q, p)))
    logger.debug("Step %d: |f| = %.3e", index, abs_f)
    return StepResult(state=PhaseState(q=q, p=p, t=s.t + spec.dt), abs_f=abs_f, index=index)


def project_to_surface(model: SystemModel, force: BaseForce, family: BetaFamily, s: PhaseState) -> PhaseState:
    """Return s with momenta moved along P onto f = 0; positions are unchanged."""
    model.check(s)
    flow = make_flow(model, force, family)
    try:
        p = project_batch(flow, s.q, s.p)
    except SingularityError as e:
        raise SingularityError(str(e), state=s) from None
    return s.replace(p=p)


def run_flow(flow: BaseFlow, s0: PhaseState, spec: IntegratorSpec) -> Trajectory:
    """Integrate ``flow`` from s0, recording every ``spec.stride`` steps."""
    model = flow.model
    model.check(s0)
    q, p = np.array(s0.q), np.array(s0.p)
    f0 = float(flow.constraint(q, p))
    if abs(f0) > spec.drift_tolerance:
        msg = f"Initial state is off the constraint hypersurface (|f| = {abs(f0):.3e}); project it first"
        raise ContractError(msg)
    traj = Trajectory()
    traj.append(_sample(flow, q, p, s0.t))
    i = 0
    try:
        for i in range(1, spec.n_steps + 1):
            q, p = advance(flow, q, p, spec.dt, spec.method)
            if flow.projected:
                scheduled = spec.projection_interval and i % spec.projection_interval == 0
                if scheduled:
                    p = project_batch(flow, q, p)
                elif abs(float(flow.constraint(q, p))) > spec.drift_tolerance:
                    logger.info("Constraint drift above %.1e at step %d; projecting", spec.drift_tolerance, i)
                    p = project_batch(flow, q, p)
            if not (np.all(np.isfinite(q)) and np.all(np.isfinite(p))):
                msg = f"Non-finite state at step {i}"
                raise SingularityError(msg, step=i)
            if i % spec.stride == 0:
                traj.append(_sample(flow, q, p, s0.t + i * spec.dt))
    except FewthermError as e:
        if isinstance(e, SingularityError) and e.step is None:
            e.step = i
            if np.all(np.isfinite(q)) and np.all(np.isfinite(p)):
                e.state = PhaseState(q=q, p=p, t=s0.t + i * spec.dt)
        msg = f"Trajectory stopped at step {i}: {e}"
        raise TrajectoryError(msg, partial=traj, cause=e, step=i) from e
    return traj


def run_trajectory(
    model: SystemModel,
    force: BaseForce,
    family: BetaFamily,
    s0: PhaseState,
    spec: IntegratorSpec,
    seed: int | None = None,
) -> Trajectory:
    """Integrate from an on-surface state; |f| stays within drift_tolerance at every sample.

    The dynamics is deterministic; ``seed`` is accepted for interface symmetry with the ensemble runner.
    """
    return run_flow(make_flow(model, force, family), s0, spec)


def isokinetic_rate(model: SystemModel, q, p):
    """(dq/dt, dp/dt) with dp/dt = p(p·∂U/∂q)/p² - ∂U/∂q.

    On Σp²/m = kT this is the closed form p(p·∂U/∂q)/(m·kT) - ∂U/∂q; off it, p² is still conserved.
    """
    a = potential_gradient(model, q)
    return velocity(model, p), p * np.sum(p * a, axis=-1, keepdims=True) / np.sum(p * p, axis=-1, keepdims=True) - a


def isokinetic_step(model: SystemModel, s: PhaseState, kT: float, dt: float) -> PhaseState:
    """One RK4 step of the closed-form isokinetic flow on Σp²/m = kT (equal masses)."""
    model.check(s)
    if not model.equal_masses:
        msg = "The isokinetic fast path needs equal masses"
        raise ContractError(msg)
    if not np.any(s.p):
        msg = "Isokinetic flow is singular at p = 0"
        raise SingularityError(msg, state=s)
    kinetic = float(np.sum(s.p * s.p)) / model.masses[0]
    if abs(kinetic - kT) > 1e-8 * kT:
        msg = f"State is off the isokinetic surface: Σp²/m = {kinetic:.6g}, kT = {kT:.6g}"
        raise ContractError(msg)

    def rate(q, p):
        return isokinetic_rate(model, q, p)

    q, p = s.q, s.p
    k1q, k1p = rate(q, p)
    k2q, k2p = rate(q + 0.5 * dt * k1q, p + 0.5 * dt * k1p)
    k3q, k3p = rate(q + 0.5 * dt * k2q, p + 0.5 * dt * k2p)
    k4q, k4p = rate(q + dt * k3q, p + dt * k3p)
    return PhaseState(
        q=q + dt / 6.0 * (k1q + 2.0 * k2q + 2.0 * k3q + k4q),
        p=p + dt / 6.0 * (k1p + 2.0 * k2p + 2.0 * k3p + k4p),
        t=s.t + dt,
    )


# Ensembles ---------------------------------------------------------------------


@dataclass(frozen=True)
class TrajectorySummary:
    """Per-trajectory statistics."""

    index: int
    mean_H: float  # noqa: N815
    max_abs_f: float
    n_samples: int


@dataclass
class EnsembleResult:
    """Summaries, the pooled energies and the trajectories of an ensemble."""

    summaries: list[TrajectorySummary]
    trajectories: list[Trajectory]

    @property
    def pooled_H(self) -> np.ndarray:  # noqa: N802
        """Recorded energies of all trajectories."""
        if not self.trajectories:
            return np.empty(0)
        return np.concatenate([t.H for t in self.trajectories])

    @property
    def pooled_q(self) -> np.ndarray:
        """Recorded positions of all trajectories, shape (samples, N*d)."""
        if not self.trajectories:
            return np.empty((0, 0))
        return np.concatenate([t.q for t in self.trajectories])

    def histogram(self, bins=20, range=None):  # noqa: A002
        """np.histogram of the pooled energies."""
        return np.histogram(self.pooled_H, bins=bins, range=range)


def _summary(index: int, traj: Trajectory) -> TrajectorySummary:
    return TrajectorySummary(
        index=index,
        mean_H=float(np.mean(traj.H)),
        max_abs_f=float(np.max(np.abs(traj.f))),
        n_samples=len(traj),
    )


def run_ensemble(
    model: SystemModel,
    force: BaseForce,
    family: BetaFamily,
    sampler: InitialSampler,
    spec: IntegratorSpec,
    n_traj: int,
    seed: int,
    workers: int | None = None,
) -> EnsembleResult:
    """Run ``n_traj`` trajectories from sampled on-surface states, one RNG stream per trajectory.

    Results are ordered by trajectory index, so they do not depend on ``workers``.
    """
    if n_traj < 1:
        msg = f"n_traj must be >= 1, got {n_traj}"
        raise ContractError(msg)
    flow = make_flow(model, force, family)
    streams = np.random.SeedSequence(seed).spawn(n_traj)

    def one(i: int) -> Trajectory:
        q, p = sampler.draw(flow, 1, np.random.default_rng(streams[i]))
        return run_flow(flow, PhaseState(q=q[0], p=p[0]), spec)

    results: list[Trajectory | None] = [None] * n_traj
    failures: list[tuple[int, FewthermError]] = []
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = [submit(pool, one, i) for i in range(n_traj)]
        for i, fut in enumerate(futures):
            try:
                results[i] = fut.result()
            except FewthermError as e:
                failures.append((i, e))
    done = [(i, t) for i, t in enumerate(results) if t is not None]
    ensemble = EnsembleResult(summaries=[_summary(i, t) for i, t in done], trajectories=[t for _, t in done])
    if failures:
        i, e = failures[0]
        partial = e.partial if isinstance(e, TrajectoryError) else Trajectory()
        cause = e.cause if isinstance(e, TrajectoryError) else e
        msg = f"{len(failures)} of {n_traj} trajectories failed; first failure in trajectory {i}: {e}"
        step_ = e.step if isinstance(e, TrajectoryError) else None
        raise TrajectoryError(msg, partial=partial, cause=cause, completed=ensemble, index=i, step=step_) from e
    return ensemble
