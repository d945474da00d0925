import numpy as np
import pytest
from scipy import integrate
from scipy.special import gamma

from fewtherm.density_of_states import density_of_states
from fewtherm.errors import ContractError
from fewtherm.errors import ParameterLookupError
from fewtherm.phase_model import Free
from fewtherm.phase_model import Harmonic
from fewtherm.phase_model import Quartic
from fewtherm.phase_model import SystemModel


def _model(potential, n_particles=1, dim=2, masses=(1.0,), **labels):
    return SystemModel(n_particles=n_particles, dim=dim, masses=masses, potential=potential, labels=labels)


def test_harmonic_volume_closed_form():
    dos = density_of_states(_model(Harmonic(omega=0.5), n_particles=2, dim=2, masses=(1.0, 3.0)))
    E = np.array([0.1, 1.0, 4.0])
    n = 4
    np.testing.assert_allclose(dos.V(E), (2 * np.pi / 0.5) ** n * E**n / gamma(n + 1), rtol=1e-12)
    np.testing.assert_allclose(dos.g(E), (2 * np.pi / 0.5) ** n * E ** (n - 1) / gamma(n), rtol=1e-12)


def test_free_volume_closed_form():
    m = np.array([1.0, 1.0, 2.0, 2.0])
    dos = density_of_states(_model(Free(box=3.0), n_particles=2, dim=2, masses=(1.0, 2.0)))
    E = np.array([0.5, 2.0])
    expected = 3.0**4 * np.prod(np.sqrt(2 * m)) * np.pi**2 / gamma(3) * E**2
    np.testing.assert_allclose(dos.V(E), expected, rtol=1e-12)


def test_density_vanishes_below_zero_energy():
    for pot in (Harmonic(), Free(), Quartic()):
        dos = density_of_states(_model(pot))
        assert dos.g(-1.0) == 0.0
        assert dos.V(0.0) == 0.0
        assert dos.log_g(-1.0) == -np.inf


@pytest.mark.parametrize("pot", [Harmonic(omega=1.3), Free(box=2.0), Quartic(a=0.7, b=0.4)])
def test_g_is_the_derivative_of_V(pot):
    dos = density_of_states(_model(pot, n_particles=1, dim=3, masses=(1.4,)))
    E = np.array([0.3, 1.0, 2.5])
    h = 1e-6
    fd = (dos.V(E + h) - dos.V(E - h)) / (2 * h)
    np.testing.assert_allclose(dos.g(E), fd, rtol=1e-6)


@pytest.mark.parametrize("n_dof", [1, 2, 3, 4])
def test_quartic_reduces_to_harmonic_without_quartic_term(n_dof):
    a, m = 0.8, 1.7
    quartic = density_of_states(_model(Quartic(a=a, b=0.0), n_particles=n_dof, dim=1, masses=(m,)))
    harmonic = density_of_states(_model(Harmonic(omega=np.sqrt(2 * a / m)), n_particles=n_dof, dim=1, masses=(m,)))
    E = np.array([0.2, 1.0, 3.0])
    np.testing.assert_allclose(quartic.g(E), harmonic.g(E), rtol=1e-10)
    np.testing.assert_allclose(quartic.V(E), harmonic.V(E), rtol=1e-10)


def test_quartic_single_coordinate_area_by_quadrature():
    a, b, m, E = 1.0, 0.5, 1.2, 2.0
    dos = density_of_states(_model(Quartic(a=a, b=b), dim=1, masses=(m,)))
    q_max = np.sqrt((-a + np.sqrt(a * a + 4 * b * E)) / (2 * b))
    area, _ = integrate.quad(lambda q: 2 * np.sqrt(2 * m * (E - a * q * q - b * q**4)), -q_max, q_max)
    assert float(dos.V(E)) == pytest.approx(area, rel=1e-8)


def test_quartic_parameter_checks():
    with pytest.raises(ContractError):
        density_of_states(_model(Quartic(a=1.0, b=-0.1)))
    with pytest.raises(ContractError):
        density_of_states(_model(Quartic(), n_particles=5, dim=1))


def test_parameter_derivative_of_volume():
    model = _model(Harmonic(omega=1.5), kT=1.0)
    dos = density_of_states(model)
    E = np.array([0.5, 2.0])
    n = model.n_dof
    np.testing.assert_allclose(dos.dV_dparam(E, "omega"), -(n / 1.5) * dos.V(E), rtol=1e-12)
    np.testing.assert_array_equal(dos.dV_dparam(E, "kT"), 0.0)
    with pytest.raises(ParameterLookupError):
        dos.dV_dparam(E, "box")


def test_box_derivative_of_free_volume():
    dos = density_of_states(_model(Free(box=2.0), dim=3))
    E = 1.5
    up = density_of_states(_model(Free(box=2.0 + 1e-6), dim=3)).V(E)
    dn = density_of_states(_model(Free(box=2.0 - 1e-6), dim=3)).V(E)
    assert float(dos.dV_dparam(E, "box")) == pytest.approx((up - dn) / 2e-6, rel=1e-6)


def test_quartic_parameter_derivative_by_finite_differences():
    dos = density_of_states(_model(Quartic(a=1.0, b=0.2), dim=1))
    assert float(dos.dV_dparam(1.0, "b")) < 0
    assert float(dos.dV_dparam(1.0, "a")) < 0
