import numpy as np
import pytest

from fewtherm import forces
from fewtherm.beta_families import BreitWigner
from fewtherm.beta_families import Constant
from fewtherm.beta_families import FermiBose
from fewtherm.beta_families import Linear
from fewtherm.errors import ContractError
from fewtherm.errors import SingularityError
from fewtherm.forces import CanonicalDissipative
from fewtherm.forces import LinearFriction
from fewtherm.forces import ZeroForce
from fewtherm.phase_model import Harmonic
from fewtherm.phase_model import PhaseState
from fewtherm.phase_model import Quartic
from fewtherm.phase_model import SystemModel
from fewtherm.phase_model import velocity

H_MODEL = SystemModel(n_particles=2, dim=2, masses=(1.0, 1.5), potential=Harmonic(omega=1.2))
Q_MODEL = SystemModel(n_particles=1, dim=3, masses=(0.8,), potential=Quartic(a=1.0, b=0.3))

CASES = [
    (H_MODEL, LinearFriction(gamma=0.7), Constant(beta0=1.3)),
    (H_MODEL, LinearFriction(gamma=1.0), Linear(beta1=0.5, beta2=0.25)),
    (Q_MODEL, LinearFriction(gamma=0.4), FermiBose(beta0=1.0, mu=0.5, a=1.0)),
    (Q_MODEL, CanonicalDissipative(coefficients=(0.0, -1.0, 0.5)), Constant(beta0=0.9)),
    (H_MODEL, CanonicalDissipative(coefficients=(0.0, 0.3, -0.2, 0.05)), BreitWigner(resonance=0.5, width=1.0)),
]
IDS = ["friction-constant", "friction-linear", "friction-fermi", "cds-constant", "cds-breit-wigner"]


def _state(model, rng, scale=0.8):
    return PhaseState(q=rng.normal(size=model.n_dof) * scale, p=rng.normal(size=model.n_dof) * scale)


def _fd(fun, x, h=1e-6):
    out = []
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        out.append((fun(x + e) - fun(x - e)) / (2 * h))
    return np.array(out)


@pytest.mark.parametrize(("model", "force", "family"), CASES, ids=IDS)
def test_constraint_gradients_match_finite_differences(model, force, family, rng):
    for _ in range(20):
        s = _state(model, rng)
        grads = forces.constraint_gradients(model, force, family, s)

        def f_of_p(p):
            return forces.constraint_value(model, force, family, s.replace(p=p))

        def f_of_q(q):
            return forces.constraint_value(model, force, family, s.replace(q=q))

        scale = 1.0 + np.abs(grads.P).max() + np.abs(grads.Q).max()
        np.testing.assert_allclose(grads.P, _fd(f_of_p, s.p), atol=1e-5 * scale)
        np.testing.assert_allclose(grads.Q, _fd(f_of_q, s.q), atol=1e-5 * scale)


@pytest.mark.parametrize(("model", "force", "family"), CASES, ids=IDS)
def test_constraint_gradients_over_a_thousand_states(model, force, family, rng):
    n, h = model.n_dof, 1e-6
    q = rng.normal(size=(1000, n)) * 0.8
    p = rng.normal(size=(1000, n)) * 0.8
    t = forces.constraint_terms(model, force, family, q, p)
    scale = 1.0 + np.abs(t.P).max(axis=-1) + np.abs(t.Q).max(axis=-1)

    def f(q, p):
        return forces.constraint_terms(model, force, family, q, p).f

    for i in range(n):
        e = np.zeros(n)
        e[i] = h
        dp = (f(q, p + e) - f(q, p - e)) / (2 * h)
        dq = (f(q + e, p) - f(q - e, p)) / (2 * h)
        assert np.all(np.abs(t.P[:, i] - dp) <= 1e-5 * scale)
        assert np.all(np.abs(t.Q[:, i] - dq) <= 1e-5 * scale)


@pytest.mark.parametrize("force", [LinearFriction(gamma=0.6), CanonicalDissipative(coefficients=(0.0, 0.4, -0.3, 0.1))])
def test_force_derivatives_match_finite_differences(force, rng):
    model = Q_MODEL
    s = _state(model, rng)
    jp = _fd(lambda p: force.force(model, s.q, p), s.p)
    jq = _fd(lambda q: force.force(model, q, s.p), s.q)
    np.testing.assert_allclose(force.jacobian_p(model, s), jp, atol=1e-7)
    np.testing.assert_allclose(force.jacobian_q(model, s), jq, atol=1e-7)
    assert float(force.divergence(model, s.q, s.p)) == pytest.approx(np.trace(jp), abs=1e-7)
    dgp = _fd(lambda p: force.divergence(model, s.q, p), s.p)
    dgq = _fd(lambda q: force.divergence(model, q, s.p), s.q)
    np.testing.assert_allclose(force.divergence_grad_p(model, s.q, s.p), dgp, atol=1e-7)
    np.testing.assert_allclose(force.divergence_grad_q(model, s.q, s.p), dgq, atol=1e-7)


@pytest.mark.parametrize(("model", "force", "family"), CASES, ids=IDS)
def test_projected_force_is_tangent_to_the_hypersurface(model, force, family, rng):
    for _ in range(20):
        s = _state(model, rng)
        grads = forces.constraint_gradients(model, force, family, s)
        F_new = forces.project_force(model, force, family, s)
        K = velocity(model, s.p)
        df = np.dot(grads.P, F_new) + np.dot(grads.Q, K)
        scale = 1.0 + np.linalg.norm(grads.P) * np.linalg.norm(F_new) + np.linalg.norm(grads.Q) * np.linalg.norm(K)
        assert abs(df) / scale < 1e-10


def test_power_and_omega_of_linear_friction():
    model = H_MODEL
    s = PhaseState(q=np.zeros(4), p=[1.0, 2.0, 0.0, 3.0])
    K = velocity(model, s.p)
    assert forces.power(model, LinearFriction(gamma=0.5), s) == pytest.approx(-0.5 * np.dot(s.p, K))
    assert forces.omega(model, LinearFriction(gamma=0.5), s) == pytest.approx(-2.0)
    f = forces.constraint_value(model, LinearFriction(gamma=0.5), Constant(beta0=2.0), s)
    assert f == pytest.approx(2.0 * -0.5 * np.dot(s.p, K) + 2.0)


def test_isokinetic_worked_example(rng):
    # F_i = -m ω² q_i + (ω²/kT) p_i (p·q) on Σp²/m = kT, m = 1
    omega, kT = 1.3, 2.0
    model = SystemModel(n_particles=2, dim=3, masses=(1.0,), potential=Harmonic(omega=omega))
    family = Constant(beta0=forces.isokinetic_beta0(model.n_dof, kT))
    for _ in range(100):
        p = rng.normal(size=6)
        p *= np.sqrt(kT) / np.linalg.norm(p)
        s = PhaseState(q=rng.normal(size=6), p=p)
        expected = -(omega**2) * s.q + (omega**2 / kT) * s.p * np.dot(s.p, s.q)
        got = forces.project_force(model, LinearFriction(gamma=1.0), family, s)
        np.testing.assert_allclose(got, expected, rtol=1e-10, atol=1e-12 * np.abs(expected).max())


@pytest.mark.parametrize("family", [Constant(beta0=1.5), Linear(beta1=0.8, beta2=0.3), FermiBose(beta0=1.0, a=-1.0, mu=-1.0)])
def test_minimal_constraint_closed_form_matches_projection(family, rng):
    model = SystemModel(n_particles=1, dim=3, masses=(1.3,), potential=Quartic())
    for _ in range(20):
        s = _state(model, rng)
        closed = forces.minimal_constraint_force(model, family, s)
        projected = forces.project_force(model, LinearFriction(gamma=0.9), family, s)
        np.testing.assert_allclose(projected, closed, rtol=1e-9, atol=1e-12)


def test_minimal_constraint_needs_equal_masses():
    s = PhaseState(q=np.ones(4), p=np.ones(4))
    with pytest.raises(ContractError):
        forces.minimal_constraint_force(H_MODEL, Constant(), s)


def test_degenerate_gradient_is_a_singularity():
    s = PhaseState(q=np.ones(4), p=np.zeros(4))
    with pytest.raises(SingularityError) as exc:
        forces.lagrange_multiplier(H_MODEL, LinearFriction(gamma=1.0), Constant(), s)
    assert exc.value.state is s
    assert exc.value.to_json()["state"]["p"] == [0.0, 0.0, 0.0, 0.0]


def test_isokinetic_surface_beta(rng):
    kT = 0.8
    model = SystemModel(n_particles=2, dim=2, masses=(1.0,), potential=Harmonic())
    n = model.n_dof
    flow = forces.make_flow(model, LinearFriction(gamma=1.0), Constant(beta0=forces.isokinetic_beta0(n, kT)))
    for _ in range(10):
        p = rng.normal(size=n)
        p *= np.sqrt((n - 1) * kT) / np.linalg.norm(p)
        s = PhaseState(q=rng.normal(size=n), p=p)
        assert forces.surface_beta(model, flow, s) == pytest.approx(1.0 / kT, rel=1e-5)


def test_isokinetic_beta0_needs_two_degrees_of_freedom():
    assert forces.isokinetic_beta0(6, 1.0) == pytest.approx(1.2)
    with pytest.raises(ContractError):
        forces.isokinetic_beta0(1, 1.0)
    with pytest.raises(ContractError):
        forces.isokinetic_beta0(3, 0.0)


def test_conservative_forces_use_the_hamiltonian_flow(rng):
    for force in (ZeroForce(), LinearFriction(gamma=0.0), CanonicalDissipative(coefficients=(2.0,))):
        flow = forces.make_flow(H_MODEL, force, Constant())
        assert not flow.projected
        s = _state(H_MODEL, rng)
        assert forces.tangency(H_MODEL, flow, s) == 0.0
    assert forces.make_flow(H_MODEL, LinearFriction(), Constant()).projected


def test_projected_flow_conserves_f_to_first_order(rng):
    model, force, family = CASES[1]
    flow = forces.make_flow(model, force, family)
    s = _state(model, rng)
    assert abs(forces.tangency(model, flow, s)) < 1e-10
