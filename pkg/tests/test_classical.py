import numpy as np
import pytest

from tdho.classical import (
    AssumptionViolation,
    build_model,
    constant_model,
    factors_at,
    free_model,
    model_from_profile,
    solve_classical,
    verify_asymptotics,
)

LAMBDAS = [0.0, 0.1, 0.25, 0.4]


@pytest.fixture(scope="module")
def free_basis():
    return solve_classical(free_model(1.0), 1e3)


@pytest.fixture(scope="module", params=LAMBDAS)
def profile_basis(request):
    return solve_classical(model_from_profile(request.param, 1.0), 1e3)


def test_initial_factors(profile_basis):
    f = factors_at(profile_basis, 0.0)
    assert abs(f.a1 - 1.0 / profile_basis.m) <= 1e-10
    assert abs(f.a2) <= 1e-10
    assert f.A == 0.0


def test_free_closed_forms(free_basis):
    a1, a2, A = free_basis.factors(1.0)
    assert a1 == pytest.approx(0.5, abs=1e-10)
    assert a2 == pytest.approx(-0.5, abs=1e-10)
    assert A == pytest.approx(np.pi / 4, abs=1e-10)
    t = np.linspace(-50, 50, 101)
    np.testing.assert_allclose(free_basis.A(t), np.arctan(t), atol=1e-9)


def test_free_wronskian_short_span():
    b = solve_classical(free_model(1.0), 100.0)
    t = np.linspace(-100, 100, 1001)
    assert np.max(np.abs(b.wronskian(t) - b.W)) / b.W <= 1e-10


def test_wronskian_and_positivity(profile_basis):
    rng = np.random.default_rng(1)
    t = rng.uniform(-1e3, 1e3, 1000)
    W = profile_basis.W
    assert np.max(np.abs(profile_basis.wronskian(t) - W)) / abs(W) <= 1e-8
    assert np.all(profile_basis.a1(t) > 0)


def test_phase_monotone_and_bounded(profile_basis):
    t = np.linspace(-1e3, 1e3, 4001)
    A = profile_basis.A(t)
    assert np.all(np.diff(A) > 0)
    assert A[-1] <= profile_basis.A_inf_plus


def test_phase_derivative_matches_a1(profile_basis):
    t = np.array([-7.0, -0.3, 0.4, 3.0, 55.0])
    h = 1e-4
    fd = (profile_basis.A(t + h) - profile_basis.A(t - h)) / (2 * h)
    np.testing.assert_allclose(fd, profile_basis.a1(t), rtol=1e-6)


def test_profile_matches_analytic(profile_basis):
    m = profile_basis.model
    t = np.linspace(-300, 300, 61)
    y1, _, y2, _ = profile_basis.y(t)
    np.testing.assert_allclose(y1, m.analytic_y1(t), atol=1e-7 * np.max(np.abs(y1)))
    np.testing.assert_allclose(y2, m.analytic_y2(t), atol=1e-7 * np.max(np.abs(y1)))
    np.testing.assert_allclose(profile_basis.A(t), m.analytic_A(t), atol=1e-8)


@pytest.mark.parametrize("lam", LAMBDAS)
def test_a1_slope(lam):
    rep = verify_asymptotics(solve_classical(model_from_profile(lam), 1e3))
    assert rep.a1_slope == pytest.approx(2 * lam - 2, abs=0.02)
    assert rep.a1_r2 >= 0.999


def test_growth_exponent_of_y1():
    m = model_from_profile(0.25)
    t = np.geomspace(1e2, 1e3, 50)
    rho = np.hypot(m.analytic_y1(t), m.analytic_y2(t))
    slope = np.polyfit(np.log(t), np.log(rho), 1)[0]
    assert slope == pytest.approx(0.75, abs=0.01)


def test_profile_ode_finite_difference():
    # y1'' + (sigma/m) y1 = 0 with the closed-form amplitude/phase pair
    m = model_from_profile(0.25, 1.3)
    t = np.linspace(-5, 5, 41)
    h = 1e-3
    y = m.analytic_y1
    ypp = (y(t + h) - 2 * y(t) + y(t - h)) / h**2
    np.testing.assert_allclose(ypp + m.sigma(t) / m.m * y(t), 0.0, atol=5e-6)


def test_sigma_finite_at_origin():
    for lam in LAMBDAS:
        assert np.isfinite(model_from_profile(lam).sigma(0.0))


def test_constant_fixture_flagged():
    m = constant_model(1.0)
    assert not m.satisfies_assumption
    b = solve_classical(m, 1e3)
    t = np.linspace(-50, 50, 201)
    np.testing.assert_allclose(b.A(t), t, atol=1e-8)
    with pytest.raises(AssumptionViolation):
        verify_asymptotics(b)


def test_invalid_parameters():
    with pytest.raises(ValueError):
        model_from_profile(0.6)
    with pytest.raises(ValueError):
        free_model(0.0)
    with pytest.raises(KeyError, match="m"):
        build_model("free", {})
    with pytest.raises(KeyError):
        build_model("nope", {"m": 1})


def test_phase_limit_stable_under_doubling():
    for lam in LAMBDAS:
        a = solve_classical(model_from_profile(lam), 1e3).A_inf_plus
        b = solve_classical(model_from_profile(lam), 2e3).A_inf_plus
        assert abs(a - b) / abs(b) < 0.01
