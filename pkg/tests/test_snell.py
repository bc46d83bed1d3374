import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from refractor_forge.snell import TotalInternalReflection, can_refract_into, check_kappa, phi, refract, refract_batch

kappas = st.one_of(st.floats(0.3, 0.95), st.floats(1.05, 3.0))
angles = st.floats(0.0, 1.5)


def incidence(theta, psi):
    nu = np.array([0.0, 0.0, 1.0])
    x = np.array([np.sin(theta) * np.cos(psi), np.sin(theta) * np.sin(psi), np.cos(theta)])
    return x, nu


@given(kappas, angles, st.floats(0, 6.28))
def test_tangential_components_match(kappa, theta, psi):
    # n1 sin(theta1) = n2 sin(theta2), written for the components along the interface
    x, nu = incidence(theta, psi)
    assume(kappa >= 1 or np.sin(theta) < kappa * (1 - 1e-9))
    m = refract(x, nu, kappa)
    assert np.linalg.norm(m) == pytest.approx(1.0, abs=1e-12)
    xt = x - (x @ nu) * nu
    mt = m - (m @ nu) * nu
    assert np.allclose(xt, kappa * mt, atol=1e-12)
    assert m @ nu > 0


@given(kappas, angles, st.floats(0, 6.28))
def test_physical_constraint(kappa, theta, psi):
    x, nu = incidence(theta, psi)
    assume(kappa >= 1 or np.sin(theta) < kappa * (1 - 1e-9))
    m = refract(x, nu, kappa)
    bound = kappa if kappa < 1 else 1 / kappa
    assert x @ m >= bound - 1e-12
    assert can_refract_into(x, m, kappa) or x @ m == pytest.approx(bound)


def test_normal_incidence_passes_straight():
    nu = np.array([0.0, 0.0, 1.0])
    for k in (0.5, 2.0):
        assert np.allclose(refract(nu, nu, k), nu)


def test_total_internal_reflection():
    k = 2 / 3
    x, nu = incidence(np.arcsin(k) + 0.05, 0.3)
    with pytest.raises(TotalInternalReflection):
        refract(x, nu, k)
    batch = refract_batch(np.vstack([x, nu]), nu, k)
    assert np.isnan(batch[0]).all() and np.allclose(batch[1], nu)


def test_no_tir_entering_denser_medium():
    x, nu = incidence(1.5, 0.0)
    assert np.all(np.isfinite(refract(x, nu, 1.5)))


def test_wrong_side_rejected():
    nu = np.array([0.0, 0.0, 1.0])
    with pytest.raises(ValueError):
        refract_batch(-nu, nu, 0.5)


def test_kappa_validation():
    for bad in (1.0, 0.0, -2.0, np.inf):
        with pytest.raises(ValueError):
            check_kappa(bad)


def test_phi_values():
    # phi(1) = 1 - kappa at normal incidence
    assert phi(1.0, 0.5) == pytest.approx(0.5)
    assert np.isnan(phi(0.0, 0.5))
    assert phi(0.0, 2.0) == pytest.approx(-2.0 * np.sqrt(0.75))


def test_refraction_angle_against_snell_oracle():
    # water to air, 30 degrees: sin(theta2) = 1.333 sin(30 deg)
    n1, n2 = 1.333, 1.0
    x, nu = incidence(np.deg2rad(30), 0.0)
    m = refract(x, nu, n2 / n1)
    theta2 = np.arcsin(np.linalg.norm(np.cross(m, nu)))
    assert theta2 == pytest.approx(np.arcsin(n1 / n2 * 0.5), abs=1e-12)


def test_planar_oracle_one_third():
    # sin(theta2) = sin(theta1) / kappa = (1/3) / (2/3) = 1/2
    x = np.array([1 / 3, np.sqrt(8) / 3])
    m = refract(x, np.array([0.0, 1.0]), 2 / 3)
    assert np.allclose(m, [0.5, np.sqrt(3) / 2], atol=1e-14)


def test_grazing_half_cosine_is_tir():
    x = np.array([np.sqrt(0.75), 0.5])
    with pytest.raises(TotalInternalReflection):
        refract(x, np.array([0.0, 1.0]), 2 / 3)
