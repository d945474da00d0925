"""Stationary densities exp(-B(H))/Z, their normalisation and empirical checks.

All phase-space integrals go through the density of states, so
``∫ φ(H) ρ dq dp = ∫ φ(E) g(E) exp(-B(E)) dE / Z``.  Integrands are shifted by
their peak log-weight before quadrature, so Z may be far outside the float
range while ln Z stays accurate.
"""

from __future__ import annotations

import functools
import logging
import threading
from dataclasses import dataclass
from dataclasses import field
from typing import TYPE_CHECKING

import numpy as np
from scipy import integrate
from scipy import stats

from .beta_families import BetaFamily
from .beta_families import BreitWigner
from .beta_families import FermiBose
from .context import numerics
from .density_of_states import DensityOfStates
from .density_of_states import density_of_states
from .dynamics import evolve_batch
from .errors import ContractError
from .errors import DivergenceError
from .errors import DomainError
from .phase_model import energy
from .phase_model import potential_gradient
from .phase_model import velocity

if TYPE_CHECKING:
    from collections.abc import Callable

    from .dynamics import IntegratorSpec
    from .forces import BaseFlow
    from .phase_model import PhaseState
    from .phase_model import SystemModel
    from .sampling import InitialSampler

logger = logging.getLogger(__name__)

_TAIL_DROP = 60.0
_TAIL_GRID = 2.0 ** np.arange(-30, 121)
_CDF_POINTS = 1024
_PANEL_NODES = 8
MIN_HISTOGRAM_SAMPLES = 1000


def _check_window(window) -> tuple[float, float] | None:
    if window is None:
        return None
    lo, hi = (float(w) for w in window)
    if not (np.isfinite(lo) and np.isfinite(hi)) or hi <= lo or hi <= 0:
        msg = f"Energy window must satisfy lo < hi and hi > 0, got {window}"
        raise ContractError(msg)
    return lo, hi


@dataclass(frozen=True)
class EnergyRange:
    """Integration range [lo, hi] in energy with quadrature breakpoints."""

    lo: float
    hi: float
    points: tuple[float, ...]
    shift: float
    """Peak of log g(E) - B(E) on the range; weights are divided by exp(shift)."""


def energy_range(family: BetaFamily, dos: DensityOfStates, window=None) -> EnergyRange:
    """Locate where g(E)·exp(-B(E)) carries its mass; raise DivergenceError if it does not decay."""
    window = _check_window(window)
    lo = 0.0 if window is None else max(0.0, window[0])
    if family.lower_bound >= lo:
        msg = (
            f"{family.kind} density has a pole at H = {family.lower_bound:g}, inside the energy range "
            f"starting at {lo:g}; lower mu or supply an energy window above the pole"
        )
        raise DomainError(msg)
    if window is None:
        if isinstance(family, BreitWigner):
            msg = "Breit-Wigner density is not normalisable without an energy window; set density.energy_window"
            raise DivergenceError(msg)
        grid = _TAIL_GRID[_TAIL_GRID > lo]
        with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
            phi = np.log(grid) + dos.log_g(grid) - family.B(grid)
        peak = np.maximum.accumulate(np.where(np.isnan(phi), -np.inf, phi))
        low = phi < peak[-1] - _TAIL_DROP
        # the tail must stay negligible from some grid point to the end
        tail = np.flatnonzero(~low)
        if not np.isfinite(peak[-1]) or tail.size == 0 or tail[-1] == grid.size - 1:
            msg = (
                f"Partition function of the {family.kind} family diverges "
                f"(g(E)·exp(-B(E)) does not decay); supply density.energy_window"
            )
            raise DivergenceError(msg)
        hi = float(grid[tail[-1] + 1])
        inner = grid[grid < hi]
    else:
        hi = window[1]
        inner = np.linspace(lo, hi, 257)[1:-1]
    extra = []
    if isinstance(family, BreitWigner):
        extra.append(family.resonance)
    if isinstance(family, FermiBose):
        extra.append(family.mu)
    points = np.unique(np.concatenate([inner, extra]))
    points = points[(points > lo) & (points < hi)]
    probe = np.concatenate([points, [hi]])
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        logw = dos.log_g(probe) - family.B(probe)
    shift = float(np.max(logw[np.isfinite(logw)])) if np.any(np.isfinite(logw)) else 0.0
    return EnergyRange(lo=lo, hi=hi, points=tuple(float(p) for p in points), shift=shift)


@dataclass
class DensityModel:
    """ρ = exp(-B(H))/Z for a family, a model and an optional energy window."""

    family: BetaFamily
    model: SystemModel
    energy_window: tuple[float, float] | None = None
    dos: DensityOfStates = field(init=False, repr=False)
    range: EnergyRange = field(init=False, repr=False)
    log_Z: float = field(init=False)  # noqa: N815
    out_of_window: int = field(init=False, default=0)
    """Number of density evaluations that fell outside the window."""

    def __post_init__(self):
        self.energy_window = _check_window(self.energy_window)
        self.dos = density_of_states(self.model)
        self.range = energy_range(self.family, self.dos, self.energy_window)
        total = self.integrate()
        if not (total > 0 and np.isfinite(total)):
            msg = f"Partition function is not positive and finite (scaled integral {total!r})"
            raise DivergenceError(msg)
        self.log_Z = float(np.log(total) + self.range.shift)
        self._lock = threading.Lock()

    @property
    def Z(self) -> float:  # noqa: N802
        """Partition function; may overflow to inf for very large systems, use log_Z then."""
        with np.errstate(over="ignore"):
            return float(np.exp(self.log_Z))

    def weight(self, E) -> np.ndarray:
        """g(E)·exp(-B(E)) / exp(shift), zero outside the range."""
        E = np.asarray(E, dtype=float)
        inside = (E > self.range.lo) & (E <= self.range.hi)
        Es = np.where(inside, E, 0.5 * (self.range.lo + self.range.hi))
        with np.errstate(divide="ignore", over="ignore", under="ignore"):
            logw = self.dos.log_g(Es) - self.family.B(Es) - self.range.shift
            return np.where(inside, np.exp(logw), 0.0)

    def integrate(self, fn: Callable | None = None) -> float:
        """∫ fn(E) g(E) exp(-B(E)) dE / exp(shift) over the range."""
        cfg = numerics()

        def integrand(E):
            w = float(self.weight(E))
            return w if fn is None else w * float(fn(E))

        val, _ = integrate.quad(
            integrand,
            self.range.lo,
            self.range.hi,
            points=self.range.points or None,
            epsabs=0.0,
            epsrel=cfg.quad_epsrel,
            limit=max(cfg.quad_limit, 2 * len(self.range.points) + 50),
        )
        return val

    def average(self, fn: Callable) -> float:
        """<fn(H)> under ρ."""
        return self.integrate(fn) / self.integrate()

    def log_density(self, H) -> np.ndarray:
        """ln ρ(H) = -B(H) - ln Z, ignoring the window."""
        return -np.asarray(self.family.B(H), dtype=float) - self.log_Z

    @functools.cached_property
    def cdf_table(self) -> tuple[np.ndarray, np.ndarray]:
        """(E grid, cumulative probability) tabulated with panel Gauss-Legendre."""
        lo, hi = self.range.lo, self.range.hi
        grid = np.linspace(lo, hi, _CDF_POINTS)
        if lo == 0:
            grid = np.concatenate([grid, np.geomspace(hi * 1e-12, hi, _CDF_POINTS)])
        grid = np.unique(np.concatenate([grid, self.range.points, [lo, hi]]))
        x, w = np.polynomial.legendre.leggauss(_PANEL_NODES)
        left, width = grid[:-1, None], np.diff(grid)[:, None]
        nodes = left + 0.5 * (x + 1.0) * width
        panel = np.sum(0.5 * width * w * self.weight(nodes), axis=-1)
        cdf = np.concatenate([[0.0], np.cumsum(panel)])
        return grid, cdf / cdf[-1]

    def cdf(self, E) -> np.ndarray:
        """P(H <= E) under ρ."""
        grid, table = self.cdf_table
        return np.interp(E, grid, table, left=0.0, right=1.0)

    def sample_energies(self, rng: np.random.Generator, n: int) -> np.ndarray:
        """Draw energies from g(E)exp(-B(E))/Z by inverse-CDF interpolation."""
        grid, table = self.cdf_table
        return np.interp(rng.random(n), table, grid)

    def count_out_of_window(self, n: int) -> None:
        """Record density evaluations outside the window."""
        with self._lock:
            self.out_of_window += n


def build_density(model: SystemModel, family: BetaFamily, window=None) -> DensityModel:
    """Construct a DensityModel, computing Z."""
    return DensityModel(family=family, model=model, energy_window=window)


# Operations --------------------------------------------------------------------


def partition_function(family: BetaFamily, model: SystemModel, window=None) -> float:
    """Return Z = ∫ exp(-B(H)) dq dp through the density of states."""
    return build_density(model, family, window).Z


def density_at(dm: DensityModel, s: PhaseState) -> float:
    """Return ρ(s) = exp(-B(H(s)))/Z; zero (and counted) outside the energy window."""
    dm.model.check(s)
    H = float(energy(dm.model, s.q, s.p))
    w = dm.energy_window
    if w is not None and not (w[0] <= H <= w[1]):
        dm.count_out_of_window(1)
        logger.warning("Density evaluated at H=%g outside window [%g, %g]; returning 0", H, w[0], w[1])
        return 0.0
    return float(np.exp(dm.log_density(H)))


def liouville_rate(dm: DensityModel, flow: BaseFlow, q, p) -> tuple[np.ndarray, np.ndarray]:
    """(R/ρ, scale) for a batch of states.

    R/ρ = div_p(dp/dt) - β_ρ(H)·(∂H/∂q·K + K·dp/dt) = Ω - β_ρ·𝒫 of the applied
    non-potential force, and scale = |β_ρ|·|K|·(|∂H/∂q| + |dp/dt|).
    """
    model = dm.model
    q = np.asarray(q, dtype=float)
    p = np.asarray(p, dtype=float)
    H = energy(model, q, p)
    beta_rho = np.asarray(dm.family.beta(H), dtype=float)
    K = velocity(model, p)
    a = potential_gradient(model, q)
    _, dp = flow.rate(q, p)
    rate = flow.applied_omega(q, p) - beta_rho * np.sum(K * (a + dp), axis=-1)
    scale = np.abs(beta_rho) * np.linalg.norm(K, axis=-1) * (np.linalg.norm(a, axis=-1) + np.linalg.norm(dp, axis=-1))
    return rate, scale


def stationarity_residual(dm: DensityModel, flow: BaseFlow, s: PhaseState) -> float:
    """Return R = Σ∂(K_i ρ)/∂q_i + Σ∂(ṗ_i ρ)/∂p_i at s; zero for a stationary pair."""
    dm.model.check(s)
    rate, _ = liouville_rate(dm, flow, s.q, s.p)
    return float(rate) * float(np.exp(dm.log_density(energy(dm.model, s.q, s.p))))


def normalized_stationarity_residual(dm: DensityModel, flow: BaseFlow, s: PhaseState) -> float:
    """|R|/ρ divided by max(1, |β_ρ|·|K|·(|∂H/∂q| + |ṗ|)), independent of the size of ρ."""
    dm.model.check(s)
    rate, scale = liouville_rate(dm, flow, s.q, s.p)
    return float(abs(rate) / max(1.0, float(scale)))


@dataclass(frozen=True)
class HistogramComparison:
    """Empirical energy histogram against the analytic density."""

    edges: np.ndarray
    counts: np.ndarray
    probabilities: np.ndarray
    ks_statistic: float
    ks_pvalue: float
    chi2: float
    dof: int
    chi2_pvalue: float

    def passed(self, alpha: float = 0.01) -> bool:
        """Both tests accept at level alpha."""
        return self.ks_pvalue > alpha and self.chi2_pvalue > alpha

    def to_dict(self) -> dict:
        """JSON-ready view."""
        return {
            "edges": self.edges.tolist(),
            "counts": self.counts.tolist(),
            "probabilities": self.probabilities.tolist(),
            "ks_statistic": self.ks_statistic,
            "ks_pvalue": self.ks_pvalue,
            "chi2": self.chi2,
            "dof": self.dof,
            "chi2_pvalue": self.chi2_pvalue,
        }


def _merge_bins(counts: np.ndarray, expected: np.ndarray, floor: float = 5.0):
    obs, exp, acc_o, acc_e = [], [], 0.0, 0.0
    for o, e in zip(counts, expected):
        acc_o += o
        acc_e += e
        if acc_e >= floor:
            obs.append(acc_o)
            exp.append(acc_e)
            acc_o = acc_e = 0.0
    if acc_e > 0 or acc_o > 0:
        if exp:
            obs[-1] += acc_o
            exp[-1] += acc_e
        else:
            obs.append(acc_o)
            exp.append(acc_e)
    return np.asarray(obs), np.asarray(exp)


def compare_histogram(dm: DensityModel, samples, n_bins: int = 20) -> HistogramComparison:
    """Bin pooled energies on equal-probability edges and test against ρ (KS and chi-square)."""
    samples = np.asarray(samples, dtype=float).reshape(-1)
    if samples.size < MIN_HISTOGRAM_SAMPLES:
        msg = f"Histogram comparison needs at least {MIN_HISTOGRAM_SAMPLES} samples, got {samples.size}"
        raise ContractError(msg)
    if n_bins < 2:
        msg = f"n_bins must be at least 2, got {n_bins}"
        raise ContractError(msg)
    grid, table = dm.cdf_table
    inner = np.interp(np.arange(1, n_bins) / n_bins, table, grid)
    lo = min(dm.range.lo, float(samples.min()))
    hi = max(dm.range.hi, float(samples.max()))
    edges = np.concatenate([[lo], inner, [hi]])
    counts, _ = np.histogram(samples, bins=edges)
    probabilities = np.diff(dm.cdf(edges))
    obs, exp = _merge_bins(counts.astype(float), probabilities * samples.size)
    if obs.size < counts.size:
        logger.debug("Merged %d histogram bins into %d for expected count >= 5", counts.size, obs.size)
    chi2 = float(np.sum((obs - exp) ** 2 / exp))
    dof = max(obs.size - 1, 1)
    ks = stats.kstest(samples, dm.cdf)
    return HistogramComparison(
        edges=edges,
        counts=counts,
        probabilities=probabilities,
        ks_statistic=float(ks.statistic),
        ks_pvalue=float(ks.pvalue),
        chi2=chi2,
        dof=dof,
        chi2_pvalue=float(stats.chi2.sf(chi2, dof)),
    )


@dataclass(frozen=True)
class PushforwardComparison:
    """Energy histograms before and after evolving samples under a flow."""

    before: HistogramComparison
    after: HistogramComparison
    ks_two_sample: float
    p_value: float
    critical_value: float
    """99% critical value of the two-sample KS statistic."""

    @property
    def passed(self) -> bool:
        """The evolved energies are indistinguishable from the initial ones."""
        return self.ks_two_sample < self.critical_value

    def to_dict(self) -> dict:
        """JSON-ready view."""
        return {
            "ks_two_sample": self.ks_two_sample,
            "p_value": self.p_value,
            "critical_value": self.critical_value,
            "before": self.before.to_dict(),
            "after": self.after.to_dict(),
        }


def two_sample_critical_value(n: int, m: int, level: float = 0.99) -> float:
    """Asymptotically exact critical value of the two-sample KS statistic."""
    n_eff = max(1, round(n * m / (n + m)))
    return float(stats.kstwo.ppf(level, n_eff))


def pushforward_invariance(
    dm: DensityModel,
    flow: BaseFlow,
    sampler: InitialSampler,
    spec: IntegratorSpec,
    n_samples: int,
    horizon: float,
    seed: int,
) -> PushforwardComparison:
    """Evolve ``n_samples`` draws of ``sampler`` for ``horizon`` and compare H before and after."""
    if n_samples < MIN_HISTOGRAM_SAMPLES:
        msg = f"Pushforward test needs at least {MIN_HISTOGRAM_SAMPLES} samples, got {n_samples}"
        raise ContractError(msg)
    if horizon < 0:
        msg = f"horizon must be non-negative, got {horizon}"
        raise ContractError(msg)
    rng = np.random.default_rng(seed)
    q, p = sampler.draw(flow, n_samples, rng)
    before = energy(dm.model, q, p)
    n_steps = round(horizon / spec.dt)
    q1, p1 = evolve_batch(flow, q, p, spec, n_steps)
    after = energy(dm.model, q1, p1)
    ks = stats.ks_2samp(before, after)
    return PushforwardComparison(
        before=compare_histogram(dm, before),
        after=compare_histogram(dm, after),
        ks_two_sample=float(ks.statistic),
        p_value=float(ks.pvalue),
        critical_value=two_sample_critical_value(before.size, after.size),
    )
