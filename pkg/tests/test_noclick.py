import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from monitored_ising.errors import ContractError, ExtinctionError
from monitored_ising.hilbert import (
    all_plus_state,
    build_ising_hamiltonian,
    build_propagator,
    parity_expectation,
    zeno_state,
)
from monitored_ising.noclick import (
    build_h_eff,
    effective_propagator,
    evolve_noclick_effective,
    evolve_noclick_exact,
    exact_noclick_step,
)
from monitored_ising.spectral import diagonalize, find_subradiant, zeno_sector
from monitored_ising.trajectory import ProtocolParams

SX = np.array([[0, 1], [1, 0]])
PPLUS = np.diag([0.0, 1.0])


def kron_site(L, i, op):
    mats = [np.eye(2)] * L
    mats[i] = op
    out = np.array([[1.0]])
    for m in reversed(mats):
        out = np.kron(out, m)
    return out


def test_single_site_matrix():
    h = build_h_eff(1, 1.0, 3.0)
    np.testing.assert_allclose(h.matrix, np.diag([0.0, -1.5j]))


def test_zero_rate_is_hermitian_ising():
    np.testing.assert_array_equal(build_h_eff(4, 1.3, 0.0).matrix, build_ising_hamiltonian(4, 1.3))


def test_kronecker_oracle():
    L, g = 4, 2.0
    ref = sum(kron_site(L, i, SX) @ kron_site(L, i + 1, SX) for i in range(L - 1))
    ref = ref - 0.5j * g * sum(kron_site(L, i, PPLUS) for i in range(L))
    np.testing.assert_allclose(build_h_eff(L, 1.0, g).matrix, ref, atol=1e-12)


def test_decomposition_parts():
    h = build_h_eff(4, 1.0, 2.0, "periodic")
    np.testing.assert_allclose(h.hermitian_part, build_ising_hamiltonian(4, 1.0, "periodic"), atol=1e-14)
    assert np.linalg.eigvalsh(h.decay_part).min() >= -1e-12
    ref = 1.0 * sum(kron_site(4, i, PPLUS) for i in range(4))
    np.testing.assert_allclose(h.decay_part, ref, atol=1e-12)


def test_negative_rate_rejected():
    with pytest.raises(ContractError):
        build_h_eff(2, 1.0, -1.0)


def test_hermitian_limit_is_unitary_evolution():
    L, dt = 6, 0.05
    series = evolve_noclick_effective(zeno_state(L), build_h_eff(L), dt, 40)
    U = build_propagator(build_ising_hamiltonian(L), dt)
    psi = zeno_state(L)
    for _ in range(40):
        psi = U @ psi
    np.testing.assert_allclose(series.states[-1], psi, atol=1e-10)
    np.testing.assert_allclose(series.weights, 1.0, atol=1e-12)


def test_effective_propagator_matches_expm():
    from scipy.linalg import expm

    h = build_h_eff(5, 1.0, 1.7)
    np.testing.assert_allclose(effective_propagator(h, 0.1), expm(-0.1j * h.matrix), atol=1e-12)


def test_long_time_limit_reaches_subradiant_vector():
    L, g = 6, 4.0
    h = build_h_eff(L, 1.0, g)
    sub = find_subradiant(diagonalize(h, sector=zeno_sector(L), left=False))
    series = evolve_noclick_effective(zeno_state(L), h, 0.05, 2000)
    assert abs(np.vdot(sub.vector, series.states[-1])) > 1 - 1e-6


def test_long_time_limit_below_transition_reaches_pair_subspace():
    """Below the transition the slowest level is a +-omega pair with equal decay rate."""
    L, g = 6, 2.0
    h = build_h_eff(L, 1.0, g)
    spec = diagonalize(h, sector=zeno_sector(L), left=False)
    order = np.argsort(spec.gamma)
    assert spec.gamma[order[1]] - spec.gamma[order[0]] < 1e-10
    assert abs(spec.omega[order[0]] + spec.omega[order[1]]) < 1e-10
    basis, _ = np.linalg.qr(spec.right[:, order[:2]])
    series = evolve_noclick_effective(zeno_state(L), h, 0.05, 2000)
    psi = series.states[-1]
    assert np.linalg.norm(basis.conj().T @ psi) > 1 - 1e-6


def test_exact_step_fixed_point_without_coupling():
    params = ProtocolParams(L=4, Jx=0.0, p_meas=0.3)
    psi, w = exact_noclick_step(zeno_state(4), params)
    np.testing.assert_allclose(psi, zeno_state(4))
    assert w == pytest.approx(1.0)


def test_exact_route_converges_to_effective_route():
    gamma, dt, L = 1.0, 1e-3, 4
    params = ProtocolParams(L=L, dt=dt, p_meas=gamma * dt, steps=1000)
    exact = evolve_noclick_exact(zeno_state(L), params).states[-1]
    eff = evolve_noclick_effective(zeno_state(L), build_h_eff(L, 1.0, gamma), dt, 1000).states[-1]
    assert abs(np.vdot(exact, eff)) ** 2 > 1 - 1e-4


def test_step_error_is_second_order():
    L, gamma = 4, 1.5
    rng = np.random.default_rng(2)
    psi = rng.normal(size=16) + 1j * rng.normal(size=16)
    psi /= np.linalg.norm(psi)
    h = build_h_eff(L, 1.0, gamma)
    errs = []
    for dt in (0.02, 0.01, 0.005):
        params = ProtocolParams(L=L, dt=dt, p_meas=gamma * dt)
        U = build_propagator(build_ising_hamiltonian(L), dt)
        d = (1 - params.p_total) ** (0.5 * np.array([bin(b).count("1") for b in range(16)]))
        errs.append(np.linalg.norm(effective_propagator(h, dt) @ psi - d * (U @ psi)))
    ratios = np.array(errs[:-1]) / np.array(errs[1:])
    np.testing.assert_allclose(ratios, 4.0, rtol=0.1)


def test_extinction_detected():
    params = ProtocolParams(L=2, Jx=0.0, p_meas=1.0)
    with pytest.raises(ExtinctionError):
        exact_noclick_step(all_plus_state(2), params)


def test_log_survival_matches_weights():
    params = ProtocolParams.from_g(2.0, L=4, steps=100)
    series = evolve_noclick_exact(zeno_state(4), params)
    assert series.weights.max() <= 1 + 1e-12
    np.testing.assert_allclose(series.log_survival()[-1], 2 * np.sum(np.log(series.weights)))


@settings(max_examples=20, deadline=None)
@given(p=st.floats(0.01, 0.9), seed=st.integers(0, 2**32 - 1))
def test_norm_monotone_without_coupling(p, seed):
    rng = np.random.default_rng(seed)
    psi = rng.normal(size=8) + 1j * rng.normal(size=8)
    psi /= np.linalg.norm(psi)
    params = ProtocolParams(L=3, Jx=0.0, p_meas=p, steps=30)
    unnorm = [1.0]
    phi = psi
    for _ in range(30):
        phi = (1 - p) ** (0.5 * np.array([bin(b).count("1") for b in range(8)])) * phi
        unnorm.append(np.linalg.norm(phi))
    assert np.all(np.diff(unnorm) <= 1e-15)
    series = evolve_noclick_exact(psi, params)
    assert series.weights.max() <= 1 + 1e-12


@settings(max_examples=10, deadline=None)
@given(g=st.floats(0.0, 10.0), L=st.sampled_from([2, 4, 6]))
def test_parity_conserved_from_zeno_state(g, L):
    params = ProtocolParams.from_g(g, L=L, steps=200)
    series = evolve_noclick_exact(zeno_state(L), params)
    for psi in series.states[::20]:
        assert parity_expectation(psi) == pytest.approx(1.0, abs=1e-10)
    eff = evolve_noclick_effective(zeno_state(L), build_h_eff(L, 1.0, params.gamma), params.dt, 200)
    assert parity_expectation(eff.states[-1]) == pytest.approx(1.0, abs=1e-10)
