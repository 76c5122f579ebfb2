import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tdho.classical import free_model, solve_classical
from tdho.estimates import OMEGA0_PLUS, OMEGAL_PLUS
from tdho.grid import GridSpec, WaveField
from tdho.magnetic import (
    MagneticModel,
    PlanarRotation,
    angular_momentum,
    build_magnetic,
    evolve_landau,
    landau,
    magnetic_dispersive_scan,
    propagate_landau,
    rotate,
    sigma_from_field,
)
from tdho.propagator import (
    BoundaryOverflow,
    GaussianState,
    evolve,
    free_evolve,
    free_gaussian,
    l2_distance,
    resample,
)

B_QUARTER = np.sqrt(3) / 2  # q b0 / m giving lambda = 1/4 for beta = 1/2
G2 = GridSpec.natural(128, dim=2)
OFF = GaussianState.normalized([0.6, -0.4], [0.3, 0.2], [1j, 0.6j])


@pytest.fixture(scope="module")
def mag():
    return landau(B_QUARTER, 0.5, 1.0, 1.0, 2)


@pytest.fixture(scope="module")
def mag_basis(mag):
    return solve_classical(sigma_from_field(mag), 1e3)


def test_zero_field_gives_zero_sigma():
    m = landau(0.0, 0.5, 1.0, 1.0)
    t = np.linspace(-10, 10, 21)
    assert np.all(m.sigma(t) == 0.0)
    assert m.lam == 0.0


@pytest.mark.parametrize("beta", [0.5, 1.0, 2.0])
def test_sigma_formula(beta):
    q, b0, m = 1.3, 0.7, 0.9
    mag = landau(b0, beta, q, m)
    t = np.linspace(-20, 20, 41)
    np.testing.assert_allclose(mag.sigma(t), q**2 * b0**2 * (1 + t**2) ** (-2 * beta) / (4 * m), rtol=1e-14)


def test_lambda_from_field(mag):
    assert mag.lam == pytest.approx(0.25, abs=1e-15)
    assert landau(2.0, 0.5, 1.0, 1.0).lam is None  # kappa >= 1/4: oscillatory, no power law


def test_omega_quadrature_matches_closed_form(mag):
    t = np.array([-30.0, -1.0, 0.0, 0.4, 7.0, 500.0])
    np.testing.assert_allclose(mag.Omega(t), mag.Omega_analytic(t), atol=1e-10)


def test_invalid_models():
    with pytest.raises(ValueError):
        MagneticModel(B=lambda t: 1.0, q=0.0, m=1.0)
    with pytest.raises(ValueError):
        MagneticModel(B=lambda t: 1.0, q=1.0, m=1.0, j=4)
    with pytest.raises(KeyError):
        build_magnetic("landau", {"b0": 1.0})


# rotation ----------------------------------------------------------------
def test_rotate_zero_identity():
    f = OFF.sample(G2)
    assert rotate(f, 0.0) is f


def test_rotate_quarter_turn_symmetric():
    g0 = GaussianState.normalized([0.0, 0.0], [0.0, 0.0], [1j, 1j])
    f = g0.sample(G2)
    assert l2_distance(rotate(f, np.pi / 2), f) <= 1e-8


@pytest.mark.parametrize("theta", [0.3, -0.7, np.pi / 2, 2.0, -3.0, 5.5])
def test_rotate_matches_exact(theta):
    f = OFF.sample(G2)
    R = PlanarRotation(theta).matrix()
    x1, x2 = G2.mesh()
    exact = OFF(R[0, 0] * x1 + R[0, 1] * x2, R[1, 0] * x1 + R[1, 1] * x2)
    g = rotate(f, theta)
    assert l2_distance(g, exact) <= 1e-8
    assert g.norm() == pytest.approx(f.norm(), abs=1e-12)


@settings(max_examples=20, deadline=None)
@given(st.floats(-4.0, 4.0), st.floats(-4.0, 4.0))
def test_rotation_composes(a, b):
    f = OFF.sample(G2)
    assert l2_distance(rotate(rotate(f, a), b), rotate(f, a + b)) <= 1e-8


def test_rotation_generator():
    f = OFF.sample(G2)
    h = 1e-4
    fd = (rotate(f, h).samples - rotate(f, -h).samples) / (2 * h)
    iLf = 1j * angular_momentum(f)
    err = np.sqrt(np.sum(np.abs(fd - iLf) ** 2) * G2.cell)
    assert err <= 1e-4 * np.sqrt(np.sum(np.abs(iLf) ** 2) * G2.cell)


def test_rotation_overflow_detected():
    wide = GaussianState.normalized([9.0, 9.0], [0.0, 0.0], [4j, 4j])
    with pytest.raises(BoundaryOverflow):
        rotate(wide.sample(GridSpec.centered(64, 20.0, dim=2)), 0.4)


def test_rotation_commutes_with_planar_flow(mag_basis):
    f = OFF.sample(G2)
    for t, th in [(1.3, 0.8), (4.0, -2.1)]:
        a = rotate(evolve(mag_basis, f, t), th)
        b = evolve(mag_basis, rotate(f, th), t)
        assert l2_distance(resample(a, G2), resample(b, G2)) <= 1e-6


# Landau propagator -----------------------------------------------------
def test_landau_unitary_and_identity(mag, mag_basis):
    f = OFF.sample(G2)
    assert l2_distance(resample(evolve_landau(mag, mag_basis, f, 0.0), G2), f) <= 1e-12
    for t in (0.5, 3.0, -7.0, 60.0):
        assert evolve_landau(mag, mag_basis, f, t).norm() == pytest.approx(f.norm(), abs=1e-8)


def test_zero_field_is_free_2d():
    mag0 = landau(0.0, 0.5, 1.0, 1.0)
    b = solve_classical(sigma_from_field(mag0), 100.0)
    f = OFF.sample(G2)
    for t in (0.7, 2.0):
        u = evolve_landau(mag0, b, f, t)
        exact = free_gaussian(OFF, t)
        assert l2_distance(u, exact(*u.grid.mesh())) <= 1e-6


def test_landau_two_time_composition(mag, mag_basis):
    f = OFF.sample(G2)
    two = propagate_landau(mag, mag_basis, evolve_landau(mag, mag_basis, f, 1.2), 3.5, 1.2)
    one = evolve_landau(mag, mag_basis, f, 3.5)
    assert l2_distance(resample(two, G2), resample(one, G2)) <= 1e-8


def test_three_dimensional_tensor_split():
    mag3 = landau(B_QUARTER, 0.5, 1.0, 1.0, 3)
    b = solve_classical(sigma_from_field(mag3), 1e3)
    G3 = GridSpec.natural(64, dim=3)
    planar = GaussianState.normalized([0.6, -0.4], [0.3, 0.2], [1j, 0.6j])
    axial = GaussianState.normalized([0.2], [-0.3], [0.8j])
    x1, x2, x3 = G3.mesh()
    f = WaveField(G3, planar(x1, x2) * axial(x3))
    t = 2.2
    u = resample(evolve_landau(mag3, b, f, t), G3)
    P = resample(evolve_landau(mag3, b, planar.sample(GridSpec.natural(64, dim=2)), t, j=2),
                 GridSpec.natural(64, dim=2))
    A = resample(free_evolve(axial.sample(GridSpec.natural(64)), t), GridSpec.natural(64))
    prod = P.samples[:, :, None] * A.samples[None, None, :]
    assert u.norm() == pytest.approx(1.0, abs=1e-8)
    assert l2_distance(u, prod) <= 1e-8


# slope scans -------------------------------------------------------------
@pytest.fixture(scope="module")
def long_mag_basis(mag):
    return solve_classical(sigma_from_field(mag), 5e4)


@pytest.mark.parametrize("region,expected", [(OMEGA0_PLUS, -1.0), (OMEGAL_PLUS, -0.75)])
def test_magnetic_slopes(mag, long_mag_basis, region, expected):
    rep = magnetic_dispersive_scan(mag, long_mag_basis, 2, region, samples=64, seed=0, workers=4)
    assert rep.passed, rep.summary()
    assert rep.fitted_slope == pytest.approx(expected, abs=0.07)


def test_unit_free_model_unchanged():
    # the planar coefficient model of a zero field is the free model
    b0 = solve_classical(sigma_from_field(landau(0.0, 0.5, 1.0, 1.0)), 50.0)
    bf = solve_classical(free_model(1.0), 50.0)
    t = np.linspace(-50, 50, 11)
    np.testing.assert_allclose(b0.A(t), bf.A(t), atol=1e-12)
