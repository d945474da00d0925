import numpy as np
import pytest
from scipy import stats

from fewtherm import distribution
from fewtherm.beta_families import BreitWigner
from fewtherm.beta_families import Constant
from fewtherm.beta_families import FermiBose
from fewtherm.beta_families import Linear
from fewtherm.distribution import build_density
from fewtherm.dynamics import IntegratorSpec
from fewtherm.errors import ContractError
from fewtherm.errors import DivergenceError
from fewtherm.errors import DomainError
from fewtherm.forces import LinearFriction
from fewtherm.forces import isokinetic_beta0
from fewtherm.forces import make_flow
from fewtherm.phase_model import Free
from fewtherm.phase_model import Harmonic
from fewtherm.phase_model import PhaseState
from fewtherm.phase_model import SystemModel
from fewtherm.sampling import IsokineticSampler


def _harmonic(n_particles=1, dim=2, omega=1.0, masses=(1.0,)):
    return SystemModel(n_particles=n_particles, dim=dim, masses=masses, potential=Harmonic(omega=omega))


@pytest.mark.parametrize(("n_particles", "dim", "kT", "omega"), [(1, 1, 1.0, 1.0), (2, 3, 0.5, 1.7), (5, 2, 3.0, 0.4)])
def test_canonical_harmonic_partition_function(n_particles, dim, kT, omega):
    model = _harmonic(n_particles, dim, omega, masses=(2.0,))
    n = model.n_dof
    Z = distribution.partition_function(Constant(beta0=1.0 / kT), model)
    assert Z == pytest.approx((2 * np.pi * kT / omega) ** n, rel=1e-8)


def test_canonical_free_partition_function():
    model = SystemModel(n_particles=2, dim=1, masses=(1.0, 3.0), potential=Free(box=4.0))
    kT = 0.7
    expected = 4.0**2 * np.sqrt(2 * np.pi * 1.0 * kT) * np.sqrt(2 * np.pi * 3.0 * kT)
    assert distribution.partition_function(Constant(beta0=1.0 / kT), model) == pytest.approx(expected, rel=1e-8)


def test_windowed_partition_function():
    model = _harmonic(dim=1, omega=2.0)
    lo, hi = 0.5, 3.0
    expected = (2 * np.pi / 2.0) * (np.exp(-lo) - np.exp(-hi))
    assert distribution.partition_function(Constant(beta0=1.0), model, (lo, hi)) == pytest.approx(expected, rel=1e-9)


def test_large_systems_keep_log_Z():
    dm = build_density(_harmonic(n_particles=200, dim=3, omega=0.01), Constant(beta0=0.01))
    n = 600
    assert dm.log_Z == pytest.approx(n * np.log(2 * np.pi / (0.01 * 0.01)), rel=1e-9)


def test_breit_wigner_needs_an_energy_window():
    with pytest.raises(DivergenceError):
        build_density(_harmonic(), BreitWigner(resonance=1.0, width=0.5))
    dm = build_density(_harmonic(), BreitWigner(resonance=1.0, width=0.5), (0.2, 4.0))
    assert np.isfinite(dm.log_Z)


def test_growing_density_diverges():
    with pytest.raises(DivergenceError):
        build_density(_harmonic(), Linear(beta1=1.0, beta2=-0.1))


def test_bose_pole_inside_the_range_is_a_domain_error():
    fam = FermiBose(beta0=1.0, mu=1.0, a=-1.0)
    with pytest.raises(DomainError):
        build_density(_harmonic(), fam)
    assert np.isfinite(build_density(_harmonic(), fam, (1.5, 10.0)).log_Z)


def test_invalid_window():
    with pytest.raises(ContractError):
        build_density(_harmonic(), Constant(), (2.0, 1.0))


def test_average_energy_is_canonical():
    model = _harmonic(n_particles=2, dim=2)
    dm = build_density(model, Constant(beta0=2.0))
    assert dm.average(lambda E: E) == pytest.approx(model.n_dof / 2.0, rel=1e-9)


def test_density_at_and_outside_window(caplog):
    model = _harmonic(dim=1)
    dm = build_density(model, Constant(beta0=1.0), (0.5, 2.0))
    inside = PhaseState(q=[1.0], p=[0.0])
    assert distribution.density_at(dm, inside) == pytest.approx(np.exp(-0.5) / dm.Z)
    outside = PhaseState(q=[0.0], p=[0.1])
    assert distribution.density_at(dm, outside) == 0.0
    assert dm.out_of_window == 1
    assert "outside window" in caplog.text


def test_cdf_matches_gamma_distribution():
    model = _harmonic(n_particles=1, dim=3)
    dm = build_density(model, Constant(beta0=1.0))
    E = np.array([0.5, 2.0, 5.0])
    np.testing.assert_allclose(dm.cdf(E), stats.gamma(a=3).cdf(E), atol=2e-3)


def _isokinetic(kT=1.0):
    model = _harmonic(n_particles=2, dim=3)
    flow = make_flow(model, LinearFriction(gamma=1.0), Constant(beta0=isokinetic_beta0(model.n_dof, kT)))
    return model, flow


def test_isokinetic_flow_is_stationary_for_canonical_density(rng):
    model, flow = _isokinetic(kT=1.0)
    dm = build_density(model, Constant(beta0=1.0))
    for _ in range(20):
        p = rng.normal(size=6)
        p *= np.sqrt(5.0) / np.linalg.norm(p)
        s = PhaseState(q=rng.normal(size=6), p=p)
        assert distribution.normalized_stationarity_residual(dm, flow, s) < 1e-6


def test_mismatched_density_is_detected():
    model, flow = _isokinetic(kT=1.0)
    dm = build_density(model, Constant(beta0=0.5))
    e0 = np.eye(6)[0]
    s = PhaseState(q=e0, p=np.sqrt(5.0) * e0)
    # Ω - β𝒫 = √5 - √5/2, scale = √5/2
    assert distribution.normalized_stationarity_residual(dm, flow, s) == pytest.approx(1.0, rel=1e-6)
    assert distribution.stationarity_residual(dm, flow, s) != 0.0


def test_histogram_accepts_exact_samples(rng):
    model = _harmonic(n_particles=1, dim=2)
    dm = build_density(model, Constant(beta0=1.0))
    samples = rng.gamma(shape=2.0, size=5000)
    result = distribution.compare_histogram(dm, samples, n_bins=20)
    assert result.counts.sum() == 5000
    assert result.probabilities.sum() == pytest.approx(1.0, abs=1e-9)
    assert result.passed()


def test_histogram_rejects_wrong_samples(rng):
    dm = build_density(_harmonic(n_particles=1, dim=2), Constant(beta0=1.0))
    result = distribution.compare_histogram(dm, rng.gamma(shape=2.0, scale=1.5, size=5000))
    assert not result.passed()


def test_histogram_needs_enough_samples(rng):
    dm = build_density(_harmonic(), Constant())
    with pytest.raises(ContractError):
        distribution.compare_histogram(dm, rng.random(distribution.MIN_HISTOGRAM_SAMPLES - 1))


def test_two_sample_critical_value_shrinks_with_samples():
    assert distribution.two_sample_critical_value(4000, 4000) < distribution.two_sample_critical_value(1000, 1000)


def test_isokinetic_flow_pushes_its_invariant_draws_forward_unchanged():
    model, flow = _isokinetic(kT=1.0)
    dm = build_density(model, Constant(beta0=1.0))
    sampler = IsokineticSampler(kT=1.0, surface=5.0)
    spec = IntegratorSpec(dt=1e-2)
    result = distribution.pushforward_invariance(dm, flow, sampler, spec, 10_000, horizon=1.0, seed=3)
    assert result.before.counts.sum() == 10_000
    assert result.ks_two_sample < result.critical_value
    assert result.passed


def test_pushforward_needs_samples_and_a_horizon():
    model, flow = _isokinetic()
    dm = build_density(model, Constant(beta0=1.0))
    sampler = IsokineticSampler(kT=1.0, surface=5.0)
    with pytest.raises(ContractError):
        distribution.pushforward_invariance(dm, flow, sampler, IntegratorSpec(), 10, 1.0, seed=1)
    with pytest.raises(ContractError):
        distribution.pushforward_invariance(dm, flow, sampler, IntegratorSpec(), 2000, -1.0, seed=1)
