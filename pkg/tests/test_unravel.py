import math

import numpy as np
import pytest

from thermounravel.density import DensityMatrix, gibbs_state, trace_distance
from thermounravel.errors import DegenerateCoupling, DimensionMismatch, EnsembleCollapse, StepTooLarge, ZeroBracket
from thermounravel.models import SIGMA_X, SIGMA_Y, SIGMA_Z, harmonic_oscillator, two_level
from thermounravel.oracle import EnvironmentSpec, ModelSpec, integrate_oracle
from thermounravel.random_instances import random_density, random_hermitian
from thermounravel.unravel import (
    AlphaPolicy,
    Ensemble,
    JumpParameters,
    UnravelConfig,
    apply_operator,
    coupling_terms,
    deterministic_step,
    ensemble_density,
    friction_operator,
    jump_operator,
    jump_step,
    member_uniforms,
    resolve_parameters,
    rk4_propagator,
    run_unraveling,
    second_moment,
    second_moment_identity_residual,
    solve_alpha,
)

WORKED = ModelSpec(0.5 * SIGMA_Z, SIGMA_X)


def expm_hermitian_generator(G):
    """exp(G) through an eigendecomposition; adequate for the small diagonalizable G used here."""
    w, V = np.linalg.eig(G)
    return (V * np.exp(w)) @ np.linalg.inv(V)


# --- parameters and operators ------------------------------------------------


def test_worked_two_level_alpha():
    a = solve_alpha(np.eye(2) / 2, 0.5, WORKED, "exact")
    assert abs(a**2 - 0.8) <= 1e-12


def test_worked_two_level_alpha_without_entropy_term():
    assert abs(solve_alpha(np.eye(2) / 2, 0.0, WORKED, "exact") - 1.0) <= 1e-14


def test_worked_two_level_operators():
    p = JumpParameters.from_values(math.sqrt(0.8), 0.5, 1.0)
    Qt = jump_operator(np.eye(2) / 2, p, WORKED)
    # K = [Q,H] = -i sigma_y at rho = I/2
    np.testing.assert_allclose(Qt, math.sqrt(0.8) * (SIGMA_X - 0.5j * SIGMA_Y), atol=1e-14)
    Lam = friction_operator(np.eye(2) / 2, p, WORKED)
    # (1/2)(1 - 0.8 + 0.8/4 * (-1)) = 0
    np.testing.assert_allclose(Lam, np.zeros((2, 2)), atol=1e-14)


def test_beta_zero_reduces_to_plain_coupling(rng):
    m = ModelSpec(random_hermitian(rng, 3), random_hermitian(rng, 3))
    rho = random_density(rng, 3)
    p = JumpParameters.from_values(0.7, 0.0, 2.0)
    np.testing.assert_allclose(jump_operator(rho, p, m), 0.7 * m.Q, atol=1e-15)
    np.testing.assert_allclose(friction_operator(rho, p, m), np.eye(3) - 0.49 * m.Q @ m.Q, atol=1e-14)


def test_exact_normalization_pair(rng):
    for _ in range(50):
        n = int(rng.integers(2, 6))
        m = ModelSpec(random_hermitian(rng, n), random_hermitian(rng, n))
        rho = random_density(rng, n, 0.02)
        env = EnvironmentSpec(1.0, rng.uniform(-0.8, 0.8))
        try:
            p = resolve_parameters(rho, m, env, "exact")
        except DegenerateCoupling:
            continue
        Qt = jump_operator(rho, p, m)
        Lam = friction_operator(rho, p, m)
        assert abs(np.trace(Qt @ rho @ Qt.conj().T) - 1) <= 1e-10
        assert abs(np.trace(Lam @ rho)) <= 1e-10
        assert p.gamma * p.alpha**2 == pytest.approx(2.0)


def test_approximate_policy(rng):
    m = ModelSpec(random_hermitian(rng, 3), random_hermitian(rng, 3))
    rho = random_density(rng, 3)
    a = solve_alpha(rho, 0.4, m, "approximate-trQrhoQ")
    assert abs(a**2 * np.trace(m.Q @ rho @ m.Q).real - 1) <= 1e-12
    assert solve_alpha(rho, 0.4, m, {"fixed": 2.5}) == 2.5


def test_alpha_policy_parsing():
    assert AlphaPolicy.parse("exact").kind == "exact"
    assert AlphaPolicy.parse(1.5) == AlphaPolicy("fixed", 1.5)
    assert AlphaPolicy.parse({"fixed": 2}).to_json() == {"fixed": 2.0}
    assert AlphaPolicy.parse("approximate").to_json() == "approximate-trQrhoQ"
    for bad in ("sometimes", {"fixed": -1}, True):
        with pytest.raises(ValueError):
            AlphaPolicy.parse(bad)


def test_zero_coupling_operator_is_degenerate():
    m = ModelSpec(0.5 * SIGMA_Z, np.zeros((2, 2)))
    with pytest.raises(DegenerateCoupling):
        resolve_parameters(np.eye(2) / 2, m, EnvironmentSpec(0.25, 0.25), "exact")


def test_zero_bracket_handling():
    rho = np.eye(2) / 2
    with pytest.raises(ZeroBracket):
        resolve_parameters(rho, WORKED, EnvironmentSpec(0.0, 0.1))
    p = resolve_parameters(rho, WORKED, EnvironmentSpec(0.0, 0.0))
    assert p.beta == 0.0 and p.gamma == 0.0


def test_second_moment_identity_random(rng):
    for _ in range(100):
        n = int(rng.integers(2, 7))
        m = ModelSpec(random_hermitian(rng, n), random_hermitian(rng, n))
        p = JumpParameters.from_values(rng.uniform(0.1, 10), rng.uniform(-2, 2), rng.uniform(0.1, 10))
        assert second_moment_identity_residual(random_density(rng, n), p, m) <= 1e-10


def test_second_moment_identity_detects_wrong_friction(rng):
    # sanity check that the residual is sensitive: drop the K^2 term by hand
    m = ModelSpec(random_hermitian(rng, 3), random_hermitian(rng, 3))
    rho = random_density(rng, 3)
    p = JumpParameters.from_values(1.0, 0.8, 1.0)
    t = coupling_terms(rho, m)
    Qt = jump_operator(rho, p, m, terms=t)
    bad = 0.5 * (np.eye(3) - m.Q @ m.Q)
    lhs = bad @ t.rho + t.rho @ bad.conj().T + Qt @ t.rho @ Qt.conj().T - t.rho
    good = friction_operator(rho, p, m, terms=t)
    lhs_good = good @ t.rho + t.rho @ good.conj().T + Qt @ t.rho @ Qt.conj().T - t.rho
    assert np.max(np.abs(lhs - lhs_good)) > 1e-3
    assert second_moment_identity_residual(rho, p, m) <= 1e-12


@pytest.mark.parametrize("model", [two_level(), harmonic_oscillator(10)], ids=["two-level", "oscillator10"])
def test_equilibrium_specialization(model):
    T = 1.0
    env = EnvironmentSpec.at_equilibrium(0.25, T)
    g = gibbs_state(model.H, T)
    p = resolve_parameters(g, model, env, "exact")
    assert p.beta == pytest.approx(0.5)
    Qt = jump_operator(g, p, model)
    rho = g.op
    closed_form = 0.5 * p.alpha * (model.Q + rho @ model.Q @ np.linalg.inv(rho))
    assert np.max(np.abs(Qt - closed_form)) <= 1e-10
    E = np.diag(model.H).real
    expected = 0.5 * p.alpha * (1 + np.exp((E[None, :] - E[:, None]) / T)) * model.Q
    assert np.max(np.abs(Qt - expected)) <= 1e-10


def test_detailed_balance_ratio_is_e():
    m = two_level()
    env = EnvironmentSpec.at_equilibrium(0.25, 1.0)
    g = gibbs_state(m.H, 1.0)
    Qt = jump_operator(g, resolve_parameters(g, m, env), m)
    # energy basis: index 0 is the excited state (sigma_z = +1)
    down, up = Qt[1, 0], Qt[0, 1]
    assert abs(down / up - math.e) <= 1e-10


def test_coupling_rescaling_leaves_operators_unchanged(rng):
    m = ModelSpec(random_hermitian(rng, 4), random_hermitian(rng, 4))
    m3 = m.scaled_coupling(3.0)
    env = EnvironmentSpec.at_equilibrium(0.3, 1.0)
    rho = random_density(rng, 4)
    p, p3 = resolve_parameters(rho, m, env), resolve_parameters(rho, m3, env.scaled(1 / 9))
    assert p3.alpha == pytest.approx(p.alpha / 3, rel=1e-12)
    assert p3.gamma == pytest.approx(p.gamma, rel=1e-12)
    np.testing.assert_allclose(jump_operator(rho, p3, m3), jump_operator(rho, p, m), atol=1e-12)
    np.testing.assert_allclose(friction_operator(rho, p3, m3), friction_operator(rho, p, m), atol=1e-12)


# --- single steps --------------------------------------------------------------


def test_jump_step_example():
    out = jump_step(np.array([1.0, 0.0]), SIGMA_X)
    np.testing.assert_array_equal(out, [0.0, 1.0])
    np.testing.assert_allclose(jump_step(np.array([0.6, 0.8j]), 2 * SIGMA_Z), [1.2, -1.6j])


def test_deterministic_step_with_zero_generator_is_identity():
    psi = np.array([0.6, 0.8j])
    np.testing.assert_array_equal(deterministic_step(psi, np.zeros((2, 2)), np.zeros((2, 2)), 0.1), psi)


def test_deterministic_step_is_degree_four_taylor():
    psi = np.array([1.0, 0.0])
    H = 0.5 * SIGMA_Z
    z = -0.5j * 0.1
    out = deterministic_step(psi, H, np.zeros((2, 2)), 0.1)
    assert out[0] == pytest.approx(sum(z**k / math.factorial(k) for k in range(5)), abs=1e-16)


def test_deterministic_step_local_error_order(rng):
    H = random_hermitian(rng, 3)
    Lam = 0.3 * random_hermitian(rng, 3)
    psi = np.array([1.0, 0.5j, -0.2])
    errs = []
    for h in (0.2, 0.1):
        exact = expm_hermitian_generator(h * (-1j * H + Lam)) @ psi
        errs.append(np.max(np.abs(deterministic_step(psi, H, Lam, h) - exact)))
    assert 26 < errs[0] / errs[1] < 38


def test_propagator_guard():
    with pytest.raises(StepTooLarge):
        rk4_propagator(10 * SIGMA_Z, np.zeros((2, 2)), 0.5)


def test_apply_operator_batch_matches_matmul(rng):
    M = random_hermitian(rng, 4) + 1j * random_hermitian(rng, 4)
    psi = rng.normal(size=(7, 4)) + 1j * rng.normal(size=(7, 4))
    np.testing.assert_allclose(apply_operator(M, psi), psi @ M.T, atol=1e-14)
    # splitting the batch does not change any row bitwise
    split = np.vstack([apply_operator(M, psi[:3]), apply_operator(M, psi[3:])])
    assert split.tobytes() == apply_operator(M, psi).tobytes()
    with pytest.raises(DimensionMismatch):
        apply_operator(M, np.ones(3))


# --- randomness and ensembles ----------------------------------------------------


def test_member_uniforms_are_prefix_stable():
    a = member_uniforms(7, 3, 1000)
    np.testing.assert_array_equal(a[:10], member_uniforms(7, 3, 10))
    assert not np.array_equal(a[:10], member_uniforms(7, 4, 10))
    assert not np.array_equal(a[:10], member_uniforms(8, 3, 10))
    assert np.all((a >= 0) & (a < 1))


def test_ensemble_from_density_reproduces_rho(rng):
    rho = random_density(rng, 3, 0.05)
    ens = Ensemble.from_density(rho, 10_000, seed=11)
    assert trace_distance(ensemble_density(ens), rho) < 0.02
    again = Ensemble.from_density(rho, 10_000, seed=11)
    assert ens.psi.tobytes() == again.psi.tobytes()


def test_second_moment_and_normalization():
    psi = np.array([[1.0, 0.0], [0.0, 2.0]])
    np.testing.assert_allclose(second_moment(psi), np.diag([0.5, 2.0]))
    ens = Ensemble(psi)
    assert ens.mean_squared_norm() == pytest.approx(2.5)
    np.testing.assert_allclose(ensemble_density(ens).op, np.diag([0.2, 0.8]))


def test_ensemble_validation():
    with pytest.raises(ValueError):
        Ensemble(np.ones(3))
    with pytest.raises(ValueError):
        Ensemble(np.array([[np.nan, 1.0]]))
    with pytest.raises(ValueError):
        UnravelConfig(dt=0.0, t_end=1.0)


# --- full runs -------------------------------------------------------------------


def test_closed_system_run_matches_oracle():
    m = two_level()
    env = EnvironmentSpec(0.0, 0.0)
    psi0 = np.array([0.6, 0.8j])
    res = run_unraveling(Ensemble.from_pure(psi0, 50, seed=1), m, env, UnravelConfig(0.01, 3.0, record_every=50))
    oracle = integrate_oracle(DensityMatrix.pure(psi0), m, env, 0.01, 3.0, record_every=50)
    assert len(res.records) == len(oracle)
    for rec, (t, r) in zip(res.records, oracle):
        assert rec.time == pytest.approx(t)
        assert trace_distance(rec.rho, r) <= 1e-8
    assert res.records[-1].jumps_total == 0


def test_unraveling_tracks_oracle_for_mixed_start():
    m = two_level()
    env = EnvironmentSpec.at_equilibrium(0.25, 1.0)
    rho0 = np.array([[0.7, 0.2], [0.2, 0.3]], dtype=complex)
    cfg = UnravelConfig(0.002, 1.0, record_every=100)
    res = run_unraveling(Ensemble.from_density(rho0, 4000, seed=5), m, env, cfg)
    oracle = integrate_oracle(rho0, m, env, 0.002, 1.0, record_every=100)
    assert max(trace_distance(rec.rho, r) for rec, (_, r) in zip(res.records, oracle)) < 0.06
    assert res.records[-1].jumps_total > 0


def test_worker_count_does_not_change_results():
    m = two_level()
    env = EnvironmentSpec.at_equilibrium(0.25, 1.0)
    ens = Ensemble.from_density(np.diag([0.6, 0.4]), 300, seed=9)
    out = []
    for w in (1, 2, 5):
        res = run_unraveling(ens, m, env, UnravelConfig(0.005, 0.5, record_every=20, workers=w))
        out.append(res.final.psi.tobytes())
    assert out[0] == out[1] == out[2]


def test_pure_start_with_default_floor_is_too_stiff():
    m = two_level()
    env = EnvironmentSpec.at_equilibrium(0.25, 1.0)
    with pytest.raises(StepTooLarge):
        run_unraveling(Ensemble.from_pure([1, 0], 100), m, env, UnravelConfig(1e-3, 0.01))


def test_pure_start_with_coarse_floor_runs():
    m = two_level()
    env = EnvironmentSpec.at_equilibrium(0.25, 1.0)
    res = run_unraveling(Ensemble.from_pure([1, 0], 200), m, env, UnravelConfig(1e-3, 0.05, eps_floor=1e-2))
    assert len(res.diagnostics) == 50
    assert all(d.gamma * 1e-3 <= 0.1 for d in res.diagnostics)


def test_collapse_is_detected():
    m = two_level()
    env = EnvironmentSpec.at_equilibrium(0.25, 1.0)
    with pytest.raises(EnsembleCollapse):
        run_unraveling(Ensemble(10 * np.tile([0.6, 0.8], (10, 1))), m, env, UnravelConfig(1e-3, 0.01))


def test_dimension_mismatch_in_run():
    with pytest.raises(DimensionMismatch):
        run_unraveling(Ensemble(np.ones((4, 3))), two_level(), EnvironmentSpec(0, 0), UnravelConfig(0.1, 0.1))
