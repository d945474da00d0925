import numpy as np
import pytest
from scipy import stats

from fewtherm.beta_families import Constant
from fewtherm.beta_families import FermiBose
from fewtherm.distribution import build_density
from fewtherm.distribution import compare_histogram
from fewtherm.errors import SamplingError
from fewtherm.forces import LinearFriction
from fewtherm.forces import ZeroForce
from fewtherm.forces import isokinetic_beta0
from fewtherm.forces import make_flow
from fewtherm.phase_model import Free
from fewtherm.phase_model import Harmonic
from fewtherm.phase_model import Quartic
from fewtherm.phase_model import SystemModel
from fewtherm.phase_model import energy
from fewtherm.sampling import DensitySampler
from fewtherm.sampling import GaussianSampler
from fewtherm.sampling import IsokineticSampler
from fewtherm.sampling import canonical_positions


def _model(potential, n_particles=1, dim=2, masses=(1.0,)):
    return SystemModel(n_particles=n_particles, dim=dim, masses=masses, potential=potential)


@pytest.mark.parametrize("potential", [Harmonic(omega=1.5), Free(box=3.0), Quartic(a=1.0, b=0.5)])
def test_density_sampler_energies_follow_the_density(potential, rng):
    model = _model(potential, masses=(2.0,))
    dm = build_density(model, FermiBose(beta0=1.0, mu=0.5, a=1.0))
    flow = make_flow(model, ZeroForce(), dm.family)
    q, p = DensitySampler(dm).draw(flow, 2000, rng)
    assert q.shape == p.shape == (2000, model.n_dof)
    assert compare_histogram(dm, energy(model, q, p)).ks_pvalue > 1e-3


def test_density_sampler_harmonic_positions_are_canonical(rng):
    model = _model(Harmonic(omega=1.5), n_particles=2, dim=1, masses=(2.0,))
    dm = build_density(model, Constant(beta0=1.0))
    q, p = DensitySampler(dm).draw(make_flow(model, ZeroForce(), dm.family), 4000, rng)
    np.testing.assert_allclose(q.var(axis=0), 1.0 / (2.0 * 1.5**2), rtol=0.1)
    np.testing.assert_allclose(p.var(axis=0), 2.0, rtol=0.1)


@pytest.mark.parametrize("dim", [1, 2])
def test_density_sampler_quartic_positions_are_canonical(dim, rng):
    model = _model(Quartic(a=0.5, b=1.0), dim=dim)
    dm = build_density(model, Constant(beta0=1.0))
    q, _ = DensitySampler(dm).draw(make_flow(model, ZeroForce(), dm.family), 2000, rng)
    reference = canonical_positions(model, 1.0, 2000, rng)
    assert stats.ks_2samp(q[:, 0], reference[:, 0]).pvalue > 1e-3


def test_free_positions_fill_the_box(rng):
    model = _model(Free(box=2.5))
    q = canonical_positions(model, 1.0, 500, rng)
    assert q.min() >= 0.0
    assert q.max() <= 2.5


def test_isokinetic_sampler_draws_on_the_kinetic_shell(rng):
    kT = 1.5
    model = _model(Harmonic(omega=0.5), n_particles=3, dim=2, masses=(2.0,))
    n = model.n_dof
    flow = make_flow(model, LinearFriction(), Constant(beta0=isokinetic_beta0(n, kT)))
    q, p = IsokineticSampler(kT=kT, surface=(n - 1) * kT).draw(flow, 3000, rng)
    np.testing.assert_allclose(np.sum(p**2 / 2.0, axis=-1), (n - 1) * kT, rtol=1e-10)
    np.testing.assert_allclose(q.var(), kT / (2.0 * 0.25), rtol=0.1)
    np.testing.assert_allclose(flow.constraint(q, p), 0.0, atol=1e-9)


def test_gaussian_sampler_projects_onto_the_hypersurface(rng):
    model = _model(Quartic(), n_particles=2, dim=1)
    flow = make_flow(model, LinearFriction(gamma=0.5), FermiBose(beta0=1.0, mu=-1.0, a=-1.0))
    q, p = GaussianSampler(q_scale=0.5).draw(flow, 20, rng)
    assert np.max(np.abs(flow.constraint(q, p))) < 1e-9


def test_gaussian_sampler_gives_up_after_max_tries(rng):
    model = _model(Harmonic())
    flow = make_flow(model, LinearFriction(), Constant())
    with pytest.raises(SamplingError):
        GaussianSampler(p_scale=0.0, max_tries=3).draw(flow, 1, rng)


def test_rejection_below_the_acceptance_floor(rng):
    model = _model(Quartic(a=1e-3, b=1e12))
    with pytest.raises(SamplingError):
        canonical_positions(model, 1.0, 10, rng)
