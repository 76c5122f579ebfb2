import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tdho.classical import constant_model, free_model, model_from_profile, solve_classical
from tdho.grid import GridSpec, WaveField
from tdho.propagator import (
    GaussianState,
    dilate,
    evolve,
    evolve_adjoint,
    fourier,
    free_evolve,
    free_gaussian,
    gaussian_oracle,
    harmonic_flow,
    l2_distance,
    mehler_quadrature,
    modulate,
    parity,
    propagate,
    resample,
    split_step_reference,
)

G1 = GridSpec.natural(512)
PROBE = GaussianState.normalized(0.5, 0.3, 1j)
_PROF = solve_classical(model_from_profile(0.25, 1.0), 1e3)


@pytest.fixture(scope="module")
def free_basis():
    return solve_classical(free_model(1.0), 1e3)


@pytest.fixture(scope="module")
def prof_basis():
    return solve_classical(model_from_profile(0.25, 1.0), 1e3)


def _vs_exact(u: WaveField, g: GaussianState, fit_phase=False) -> float:
    return l2_distance(u, g(*u.grid.mesh()), fit_phase=fit_phase)


# grid ----------------------------------------------------------------------
def test_grid_validation():
    with pytest.raises(ValueError):
        GridSpec((100,), (0.1,), (0.0,))
    with pytest.raises(ValueError):
        GridSpec((64,), (-0.1,), (0.0,))
    g = GridSpec.centered(64, 10.0)
    assert g.is_symmetric()
    assert g.axis(0)[0] == pytest.approx(-g.axis(0)[-1])


def test_wavefield_roundtrip(tmp_path):
    f = modulate(PROBE.sample(G1), 3.0)
    f.save(tmp_path / "f.bin")
    g = WaveField.load(tmp_path / "f.bin")
    assert g.grid == f.grid
    np.testing.assert_array_equal(g.samples, f.samples)
    assert (tmp_path / "f.bin").read_bytes() == f.to_bytes()


# factors ---------------------------------------------------------------------
def test_modulate_identity_at_infinity():
    f = PROBE.sample(G1)
    np.testing.assert_array_equal(modulate(f, np.inf).samples, f.samples)


@pytest.mark.parametrize("tau", [0.5, 2.0, -3.0, 1e-3])
def test_modulate_and_dilate_unitary(tau):
    f = PROBE.sample(G1)
    assert modulate(f, tau).norm() == pytest.approx(f.norm(), abs=1e-12)
    assert dilate(f, tau).norm() == pytest.approx(f.norm(), abs=1e-12)


def test_dilate_unit():
    f = PROBE.sample(G1)
    g = dilate(f, 1.0)
    assert g.grid == f.grid
    np.testing.assert_allclose(g.samples, f.samples * 1j ** -0.5, atol=1e-15)


def test_parity_involution():
    f = PROBE.sample(GridSpec((64,), (0.2,), (-3.0,)))
    g = parity(parity(f))
    assert g.grid == f.grid
    np.testing.assert_array_equal(g.samples, f.samples)


def test_fourier_gaussian_eigenfunction():
    g0 = GaussianState.normalized(0.0, 0.0, 1j)
    f = g0.sample(GridSpec.centered(256, 30.0))
    F = fourier(f)
    np.testing.assert_allclose(F.samples, g0(*F.grid.mesh()), atol=1e-10)


def test_fourier_parseval_and_inverse():
    f = PROBE.sample(GridSpec((128,), (0.17,), (-9.0,)))
    F = fourier(f)
    assert F.norm() == pytest.approx(f.norm(), abs=1e-12)
    back = fourier(F, inverse=True)
    assert l2_distance(resample(back, f.grid), f) <= 1e-10


def test_fourier_shifted_gaussian_closed_form():
    # F[exp(-(x-q)^2/2 + i p x)](k) = exp(-(k-p)^2/2 - i (k-p) q)
    q, p = 1.3, -0.7
    G = GridSpec((256,), (0.12,), (-14.0,))
    x = G.axis(0)
    f = WaveField(G, np.pi**-0.25 * np.exp(-0.5 * (x - q) ** 2 + 1j * p * x))
    F = fourier(f)
    k = F.grid.axis(0)
    exact = np.pi**-0.25 * np.exp(-0.5 * (k - p) ** 2 - 1j * (k - p) * q)
    np.testing.assert_allclose(F.samples, exact, atol=1e-10)


# harmonic flow ----------------------------------------------------------
def test_flow_quarter_turn_is_fourier_in_modulus():
    f = PROBE.sample(GridSpec.centered(128, 20.0))
    g = harmonic_flow(f, np.pi / 2)
    F = resample(fourier(f), g.grid)
    np.testing.assert_allclose(np.abs(g.samples), np.abs(F.samples), atol=1e-8)


def test_flow_small_angle_identity():
    f = PROBE.sample(G1)
    g = harmonic_flow(f, 1e-6)
    assert l2_distance(resample(g, f.grid), f) <= 1e-4


@pytest.mark.parametrize("alpha", [0.3, 0.7, 1.2, np.pi / 2])
def test_flow_matches_mehler_quadrature(alpha):
    G = GridSpec.centered(64, 10.0)
    f = GaussianState.normalized(0.3, 0.4, 2j).sample(G)
    g = harmonic_flow(f, alpha)
    ref = mehler_quadrature(f, alpha, g.grid.axis(0))
    assert l2_distance(g, ref) <= 1e-6


def test_flow_gaussian_eigenstate():
    # ground state picks up exp(-i alpha/2)
    g0 = GaussianState.normalized(0.0, 0.0, 1j)
    f = g0.sample(G1)
    for alpha in (0.4, 2.0, 3 * np.pi, -1.1):
        g = harmonic_flow(f, alpha)
        assert _vs_exact(g, g0) == pytest.approx(abs(np.exp(-0.5j * alpha) - 1) * 1.0, abs=1e-9)
        assert _vs_exact(g, g0, fit_phase=True) <= 1e-9


@settings(max_examples=25, deadline=None)
@given(st.floats(-7.0, 7.0), st.floats(-7.0, 7.0))
def test_flow_group_property(a1, a2):
    f = PROBE.sample(G1)
    lhs = harmonic_flow(harmonic_flow(f, a2), a1)
    rhs = harmonic_flow(f, a1 + a2)
    assert l2_distance(resample(lhs, G1), resample(rhs, G1).samples, fit_phase=True) <= 1e-6


@settings(max_examples=30, deadline=None)
@given(st.floats(-20.0, 20.0), st.floats(-1.5, 1.5), st.floats(-1.0, 1.0), st.floats(0.6, 2.0))
def test_evolve_unitary(t, q, p, w):
    b = _PROF
    f = GaussianState.normalized(q, p, 1j / w**2).sample(G1)
    assert evolve(b, f, t).norm() == pytest.approx(f.norm(), abs=1e-8)


# evolve ------------------------------------------------------------------
def test_evolve_identity_at_zero(prof_basis):
    f = PROBE.sample(G1)
    u = evolve(prof_basis, f, 0.0)
    assert l2_distance(resample(u, G1), f) <= 1e-12


def test_free_gaussian_at_t1(free_basis):
    u = evolve(free_basis, PROBE.sample(G1), 1.0)
    assert _vs_exact(u, free_gaussian(PROBE, 1.0)) <= 1e-6
    v = free_evolve(PROBE.sample(G1), 1.0)
    assert _vs_exact(v, free_gaussian(PROBE, 1.0)) <= 1e-6


def test_free_gaussian_width_law():
    g = free_gaussian(GaussianState.normalized(0.0, 0.0, 1j), 2.0)
    # G(t) = G0 / (1 + G0 t / m)
    assert g.width[0] == pytest.approx(1j / (1 + 2j))


@pytest.mark.parametrize("t", [0.5, 3.0, -4.0, 40.0, 900.0])
def test_evolve_matches_oracle(prof_basis, t):
    u = evolve(prof_basis, PROBE.sample(G1), t)
    assert _vs_exact(u, gaussian_oracle(prof_basis, PROBE, t)) <= 1e-6


@pytest.mark.parametrize("t", [1e-5, 4.0, np.pi, 2 * np.pi + 1e-4, 10.0])
def test_constant_model_resonant_times(t):
    b = solve_classical(constant_model(1.0), 20.0)
    u = evolve(b, PROBE.sample(G1), t)
    assert _vs_exact(u, gaussian_oracle(b, PROBE, t)) <= 1e-6


def test_round_trip(prof_basis):
    f = PROBE.sample(G1)
    back = evolve_adjoint(prof_basis, evolve(prof_basis, f, 0.7), 0.7)
    assert l2_distance(resample(back, G1), f) <= 1e-8


def test_propagate_composition(prof_basis):
    f = PROBE.sample(G1)
    two = propagate(prof_basis, evolve(prof_basis, f, 1.5), 4.0, 1.5)
    one = evolve(prof_basis, f, 4.0)
    assert l2_distance(resample(two, G1), resample(one, G1)) <= 1e-8
    ident = propagate(prof_basis, f, 2.0, 2.0)
    assert l2_distance(resample(ident, G1), f) <= 1e-10


def test_split_step_free_closed_form():
    m = free_model(1.0)
    G = GridSpec.centered(1024, 60.0)
    u = split_step_reference(m, PROBE.sample(G), 1.0, 1e-4)
    assert _vs_exact(u, free_gaussian(PROBE, 1.0)) <= 1e-8


def test_split_step_agrees_with_evolve(prof_basis):
    G = GridSpec.centered(2048, 60.0)
    f = PROBE.sample(G)
    ref = split_step_reference(prof_basis.model, f, 2.0, 1e-4)
    u = resample(evolve(prof_basis, f, 2.0), G)
    assert l2_distance(u, ref) <= 1e-5


def test_two_dimensional_evolution(prof_basis):
    g0 = GaussianState.normalized([0.4, -0.2], [0.1, 0.5], [1j, 0.7j])
    G = GridSpec.natural(128, dim=2)
    u = evolve(prof_basis, g0.sample(G), 2.5)
    assert u.norm() == pytest.approx(1.0, abs=1e-8)
    assert _vs_exact(u, gaussian_oracle(prof_basis, g0, 2.5)) <= 1e-6
