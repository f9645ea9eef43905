import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from quadrature import rho_weighted_midpoint, rho_weighted_quadrature
from thermounravel.density import (
    DensityMatrix,
    PhysicalConstants,
    check_arho_identity,
    expectation,
    gibbs_state,
    log_mean_weights,
    purity,
    regularized_inverse,
    rho_weighted,
    trace_distance,
)
from thermounravel.errors import DimensionMismatch, InvalidDensityMatrix, NonPositiveEigenvalue
from thermounravel.models import SIGMA_X, SIGMA_Z, harmonic_oscillator
from thermounravel.random_instances import random_density, random_hermitian, random_matrix


def test_maximally_mixed_reduces_to_scaled_A(rng):
    A = random_matrix(rng, 3)
    np.testing.assert_allclose(rho_weighted(A, np.eye(3) / 3), A / 3, atol=1e-15)


def test_commuting_diagonal_case():
    # rho = diag(0.7, 0.3), A = diag(2, 5)  ->  diag(1.4, 1.5)
    out = rho_weighted(np.diag([2.0, 5.0]), np.diag([0.7, 0.3]))
    np.testing.assert_allclose(out, np.diag([1.4, 1.5]), atol=1e-15)


def test_offdiagonal_logarithmic_mean():
    out = rho_weighted(SIGMA_X, np.diag([0.7, 0.3]))
    L = 0.4 / np.log(0.7 / 0.3)
    np.testing.assert_allclose(out, L * SIGMA_X, atol=1e-14)
    np.testing.assert_allclose(L, 0.472089, atol=1e-6)


def test_log_mean_near_degenerate_is_continuous():
    p = 0.4
    W_exact = log_mean_weights(np.array([p, p]))
    W_close = log_mean_weights(np.array([p, p * (1 + 1e-9)]))
    assert abs(W_close[0, 1] - W_exact[0, 1]) <= 1e-9
    assert W_exact[0, 1] == p


def test_log_mean_rejects_nonpositive():
    with pytest.raises(NonPositiveEigenvalue):
        log_mean_weights(np.array([0.5, 0.0]))


@pytest.mark.parametrize("n", [2, 3, 5])
def test_closed_form_matches_midpoint_quadrature(rng, n):
    rho = random_density(rng, n, min_eig=0.05)
    A = random_matrix(rng, n)
    # midpoint rule error is O(h^2), a few 1e-8 here
    np.testing.assert_allclose(rho_weighted(A, rho), rho_weighted_midpoint(A, rho), atol=1e-6)


def test_closed_form_matches_gauss_legendre(rng):
    for _ in range(20):
        n = int(rng.integers(2, 7))
        rho = random_density(rng, n)
        A = random_matrix(rng, n)
        assert np.max(np.abs(rho_weighted(A, rho) - rho_weighted_quadrature(A, rho))) <= 1e-10


def test_linearity(rng):
    rho = random_density(rng, 4)
    A, B = random_matrix(rng, 4), random_matrix(rng, 4)
    a, b = 1.5 - 0.5j, -2.0 + 1j
    lhs = rho_weighted(a * A + b * B, rho)
    rhs = a * rho_weighted(A, rho) + b * rho_weighted(B, rho)
    np.testing.assert_allclose(lhs, rhs, atol=1e-13)


def test_hermiticity_transfer(rng):
    rho = random_density(rng, 5)
    A = random_hermitian(rng, 5)
    Ar = rho_weighted(A, rho)
    np.testing.assert_allclose(Ar, Ar.conj().T, atol=1e-14)
    # anti-self-adjoint input stays anti-self-adjoint
    C = 1j * A
    Cr = rho_weighted(C, rho)
    np.testing.assert_allclose(Cr, -Cr.conj().T, atol=1e-14)


def test_commuting_reduction(rng):
    rho = random_density(rng, 4)
    f = rho @ rho - 0.3 * rho  # a function of rho commutes with it
    np.testing.assert_allclose(rho_weighted(f, rho), rho @ f, atol=1e-13)


def test_trace_property(rng):
    rho = random_density(rng, 4)
    A = random_matrix(rng, 4)
    assert abs(np.trace(rho_weighted(A, rho)) - np.trace(rho @ A)) <= 1e-13


@settings(max_examples=40, deadline=None)
@given(n=st.integers(2, 6), seed=st.integers(0, 2**32 - 1))
def test_commutator_log_identity(n, seed):
    r = np.random.default_rng(seed)
    rho = random_density(r, n)
    A = random_matrix(r, n)
    assert check_arho_identity(A, rho) <= 1e-10


def test_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        rho_weighted(np.eye(3), np.eye(2) / 2)


def test_regularized_inverse(rng):
    rho = random_density(rng, 4, min_eig=1e-2)
    np.testing.assert_allclose(regularized_inverse(rho) @ rho, np.eye(4), atol=1e-10)
    # singular rho: inverse is finite and bounded by the floor
    inv = regularized_inverse(np.diag([1.0, 0.0]), eps=1e-3)
    np.testing.assert_allclose(inv, np.diag([1.0, 1e3]), atol=1e-9)
    with pytest.raises(ValueError):
        regularized_inverse(rho, eps=0.0)


def test_pure_state_floor_keeps_result_finite():
    out = rho_weighted(SIGMA_X, np.diag([1.0, 0.0]))
    assert np.all(np.isfinite(out))


@pytest.mark.parametrize("T", [0.1, 1.0, 10.0])
def test_gibbs_two_level(T):
    H = 0.5 * SIGMA_Z
    g = gibbs_state(H, T)
    w = np.exp(-np.array([0.5, -0.5]) / T)
    np.testing.assert_allclose(np.diag(g.op).real, w / w.sum(), atol=1e-15)
    assert abs(np.trace(g.op) - 1) <= 1e-12


def test_gibbs_oscillator_ordering():
    m = harmonic_oscillator(8)
    g = gibbs_state(m.H, 1.0)
    pops = np.diag(g.op).real
    assert np.all(np.diff(pops) < 0)
    np.testing.assert_allclose(pops[1] / pops[0], np.exp(-1.0), rtol=1e-12)


def test_gibbs_large_energies_do_not_overflow():
    g = gibbs_state(np.diag([1000.0, 1001.0]), 1.0)
    np.testing.assert_allclose(np.diag(g.op).real, [1 / (1 + np.e**-1), np.e**-1 / (1 + np.e**-1)], atol=1e-14)


def test_gibbs_respects_boltzmann_constant():
    g1 = gibbs_state(np.diag([0.0, 2.0]), 2.0, PhysicalConstants(k_B=0.5))
    g2 = gibbs_state(np.diag([0.0, 2.0]), 1.0)
    np.testing.assert_allclose(g1.op, g2.op, atol=1e-15)


def test_density_matrix_validation():
    with pytest.raises(InvalidDensityMatrix):
        DensityMatrix(np.diag([0.6, 0.6]))
    with pytest.raises(InvalidDensityMatrix):
        DensityMatrix(np.diag([1.2, -0.2]))
    with pytest.raises(InvalidDensityMatrix):
        DensityMatrix(np.array([[0.5, 0.1], [0.3, 0.5]]))
    assert DensityMatrix.pure([1, 1j]).dim == 2


def test_observables():
    rho = DensityMatrix.pure([0.6, 0.8j])
    assert abs(purity(rho) - 1) < 1e-14
    assert abs(expectation(SIGMA_Z, rho) - (0.36 - 0.64)) < 1e-14
    assert abs(trace_distance(np.diag([1.0, 0.0]), np.diag([0.0, 1.0])) - 1) < 1e-14
    assert trace_distance(rho, rho) == 0
