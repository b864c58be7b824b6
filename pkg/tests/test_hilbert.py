import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from monitored_ising.errors import CapacityError, ContractError, PreconditionError
from monitored_ising.hilbert import (
    BoundaryCondition,
    all_plus_state,
    bonds,
    build_ising_hamiltonian,
    build_propagator,
    check_capacity,
    entanglement_entropy,
    local_magnetization,
    magnetization_profile,
    overlap,
    parity_diagonal,
    parity_expectation,
    pauli,
    product_state,
    zeno_state,
)


def kron_site(L, i, op):
    """Independent Kronecker-product embedding; site 0 is the least significant bit."""
    mats = [np.eye(2)] * L
    mats[i] = op
    out = np.array([[1.0]])
    for m in reversed(mats):
        out = np.kron(out, m)
    return out


SX = np.array([[0, 1], [1, 0]])
SZ = np.diag([-1.0, 1.0])


def random_state(rng, L):
    psi = rng.normal(size=2**L) + 1j * rng.normal(size=2**L)
    return psi / np.linalg.norm(psi)


def test_zeno_state_is_basis_zero_and_all_minus():
    psi = zeno_state(4)
    assert psi[0] == 1 and np.count_nonzero(psi) == 1
    np.testing.assert_allclose(magnetization_profile(psi), -1.0)
    np.testing.assert_allclose(magnetization_profile(all_plus_state(4)), 1.0)


def test_product_state_bit_order():
    np.testing.assert_allclose(magnetization_profile(product_state([1, 0, 0])), [1, -1, -1])
    assert local_magnetization(product_state([0, 1]), 1) == 1.0


@pytest.mark.parametrize("L", [2, 3, 5])
@pytest.mark.parametrize("bc", ["open", "periodic"])
def test_hamiltonian_matches_kronecker_oracle(L, bc):
    H = build_ising_hamiltonian(L, 0.7, bc)
    ref = sum(0.7 * kron_site(L, i, SX) @ kron_site(L, j, SX) for i, j in bonds(L, bc))
    np.testing.assert_allclose(H, ref, atol=1e-14)


def test_pauli_matches_kronecker():
    for i in range(3):
        np.testing.assert_allclose(pauli(3, i, "z"), kron_site(3, i, SZ))
        np.testing.assert_allclose(pauli(3, i, "x"), kron_site(3, i, SX))


def test_pauli_y_algebra():
    x, y, z = (pauli(1, 0, a) for a in "xyz")
    np.testing.assert_allclose(x @ y, 1j * z, atol=1e-14)


def test_periodic_adds_wraparound_bond():
    assert bonds(4, BoundaryCondition.PERIODIC)[-1] == (3, 0)
    assert len(bonds(4, "open")) == 3


def test_two_site_energies():
    w = np.linalg.eigvalsh(build_ising_hamiltonian(2, 1.0))
    np.testing.assert_allclose(w, [-1, -1, 1, 1], atol=1e-14)


def test_propagator_unitary_and_group_law():
    H = build_ising_hamiltonian(4)
    U = build_propagator(H, 0.1)
    np.testing.assert_allclose(U.conj().T @ U, np.eye(16), atol=1e-12)
    np.testing.assert_allclose(build_propagator(H, 0.2), U @ U, atol=1e-12)
    np.testing.assert_allclose(build_propagator(H, 0.0), np.eye(16), atol=1e-14)


def test_propagator_contract_errors():
    with pytest.raises(ContractError):
        build_propagator(build_ising_hamiltonian(2), -0.1)
    with pytest.raises(ContractError):
        build_propagator(np.array([[0, 1], [0, 0]], dtype=complex), 0.1)


def test_capacity_cap():
    with pytest.raises(CapacityError):
        check_capacity(15)
    assert check_capacity(26, matrix=False) == 2**26
    with pytest.raises(CapacityError):
        build_ising_hamiltonian(16)


def test_entropy_product_and_bell():
    assert entanglement_entropy(zeno_state(6)) == pytest.approx(0.0, abs=1e-12)
    bell = np.zeros(4, dtype=complex)
    bell[0] = bell[3] = 2**-0.5
    assert entanglement_entropy(bell, 1) == pytest.approx(1.0, abs=1e-12)


def test_entropy_matches_reduced_density_matrix():
    rng = np.random.default_rng(3)
    psi = random_state(rng, 5)
    # sites 0..1 are the low bits: reshape (high, low)
    A = psi.reshape(2**3, 2**2)
    rho = A.T @ A.conj()
    w = np.linalg.eigvalsh(rho)
    w = w[w > 1e-14]
    assert entanglement_entropy(psi, 2) == pytest.approx(-np.sum(w * np.log2(w)), abs=1e-12)


def test_entropy_contract_errors():
    with pytest.raises(ContractError):
        entanglement_entropy(zeno_state(4), 0)
    with pytest.raises(PreconditionError):
        entanglement_entropy(2 * zeno_state(4))


def test_overlap_errors_and_value():
    with pytest.raises(ContractError):
        overlap(zeno_state(2), zeno_state(3))
    assert overlap(zeno_state(3), zeno_state(3)) == 1.0


def test_parity_operator():
    np.testing.assert_allclose(parity_diagonal(3), np.diag(pauli(3, 0, "z") @ pauli(3, 1, "z") @ pauli(3, 2, "z")).real)
    assert parity_expectation(zeno_state(3)) == -1.0


@settings(max_examples=40, deadline=None)
@given(L=st.integers(2, 7), seed=st.integers(0, 2**32 - 1))
def test_entropy_bounds_and_symmetry(L, seed):
    psi = random_state(np.random.default_rng(seed), L)
    for cut in range(1, L):
        s = entanglement_entropy(psi, cut)
        assert -1e-12 <= s <= min(cut, L - cut) + 1e-9
        # complementary cut of the bit-reversed state gives the same value
        rev = psi.reshape([2] * L).transpose().ravel()
        assert entanglement_entropy(rev, L - cut) == pytest.approx(s, abs=1e-9)


@settings(max_examples=30, deadline=None)
@given(L=st.integers(2, 6), seed=st.integers(0, 2**32 - 1))
def test_hamiltonian_conserves_parity(L, seed):
    H = build_ising_hamiltonian(L, 1.0, "periodic")
    P = np.diag(parity_diagonal(L))
    np.testing.assert_allclose(H @ P, P @ H, atol=1e-14)
    psi = random_state(np.random.default_rng(seed), L)
    U = build_propagator(H, 0.3)
    assert parity_expectation(U @ psi) == pytest.approx(parity_expectation(psi), abs=1e-12)
