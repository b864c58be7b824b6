"""Dense Hilbert-space primitives for a spin-1/2 chain.

Basis convention
----------------
Sites are 0-based.  Site ``i`` is bit ``i`` of the integer basis index, with
bit value 0 for the ``sigma^z = -1`` state ``|->`` and 1 for ``|+>``.  The
Zeno state ``|T> = |-...->`` is therefore basis state 0 and the all-up state
is basis state ``2**L - 1``.  Every module in the package relies on this.

States are plain complex ``numpy`` arrays of length ``2**L``; operators are
dense ``(2**L, 2**L)`` arrays.
"""

from __future__ import annotations

from enum import Enum
from functools import lru_cache

import numpy as np
from scipy import linalg as sla

from .errors import CapacityError, ContractError, PreconditionError

#: Upper bound on the bytes a single dense complex matrix may occupy.
MEMORY_CAP_BYTES = 2**31

NORM_TOL = 1e-8
HERMITIAN_TOL = 1e-12
_SCHMIDT_FLOOR = 1e-14


class BoundaryCondition(str, Enum):
    OPEN = "open"
    PERIODIC = "periodic"


def check_capacity(L: int, matrix: bool = True) -> int:
    """Return ``2**L`` or raise :class:`CapacityError`.

    ``matrix`` selects whether a dense ``N x N`` complex matrix (True) or a
    single state vector (False) has to fit under :data:`MEMORY_CAP_BYTES`.
    """
    if not isinstance(L, (int, np.integer)) or L < 1:
        raise CapacityError(f"site count must be a positive integer, got {L!r}")
    dim = 2 ** int(L)
    nbytes = 16 * dim * (dim if matrix else 1)
    if nbytes > MEMORY_CAP_BYTES:
        raise CapacityError(
            f"L={L} needs {nbytes / 2**30:.1f} GiB, above the cap of "
            f"{MEMORY_CAP_BYTES / 2**30:.1f} GiB"
        )
    return dim


def bonds(L: int, bc: BoundaryCondition | str = BoundaryCondition.OPEN) -> list[tuple[int, int]]:
    """Nearest-neighbour bonds ``(i, i+1)``; periodic chains add ``(L-1, 0)``."""
    bc = BoundaryCondition(bc)
    out = [(i, i + 1) for i in range(L - 1)]
    if bc is BoundaryCondition.PERIODIC and L > 2:
        out.append((L - 1, 0))
    return out


@lru_cache(maxsize=None)
def _bits(L: int) -> np.ndarray:
    idx = np.arange(2**L)
    b = ((idx[:, None] >> np.arange(L)[None, :]) & 1).astype(np.int8)
    b.flags.writeable = False
    return b


def basis_bits(L: int) -> np.ndarray:
    """Read-only ``(2**L, L)`` array of bit values (1 means ``|+>``)."""
    return _bits(L)


def plus_count(L: int) -> np.ndarray:
    """Number of ``|+>`` sites in every basis state."""
    return basis_bits(L).sum(axis=1)


def plus_mask(L: int, i: int) -> np.ndarray:
    """Boolean mask of basis states whose site ``i`` is ``|+>``."""
    return basis_bits(L)[:, i].astype(bool)


def parity_diagonal(L: int) -> np.ndarray:
    """Diagonal of ``prod_i sigma^z_i``, equal to ``(-1)**(number of |-> sites)``."""
    return np.where((L - plus_count(L)) % 2 == 0, 1.0, -1.0)


def zeno_state(L: int) -> np.ndarray:
    """The product state ``|T>`` with every spin in ``|->``."""
    psi = np.zeros(check_capacity(L, matrix=False), dtype=complex)
    psi[0] = 1.0
    return psi


def all_plus_state(L: int) -> np.ndarray:
    psi = np.zeros(check_capacity(L, matrix=False), dtype=complex)
    psi[-1] = 1.0
    return psi


def product_state(bits) -> np.ndarray:
    """Basis state for a sequence of site values (0 for ``|->``, 1 for ``|+>``)."""
    bits = [int(b) for b in bits]
    psi = np.zeros(check_capacity(len(bits), matrix=False), dtype=complex)
    psi[sum(b << i for i, b in enumerate(bits))] = 1.0
    return psi


def n_sites(state: np.ndarray) -> int:
    dim = np.shape(state)[-1]
    L = int(dim).bit_length() - 1
    if dim < 2 or 2**L != dim:
        raise ContractError(f"state length {dim} is not a power of two >= 2")
    return L


def normalize(state: np.ndarray) -> np.ndarray:
    psi = np.asarray(state, dtype=complex)
    nrm = np.linalg.norm(psi)
    if not np.isfinite(nrm) or nrm == 0.0:
        raise PreconditionError("cannot normalize a zero or non-finite state")
    return psi / nrm


def check_normalized(state: np.ndarray, tol: float = NORM_TOL) -> None:
    nrm = np.linalg.norm(state)
    if not np.isfinite(nrm) or abs(nrm - 1.0) > tol:
        raise PreconditionError(f"state is not normalized (norm = {nrm!r})")


_PAULI = {
    "x": np.array([[0, 1], [1, 0]], dtype=complex),
    "y": np.array([[0, 1j], [-1j, 0]], dtype=complex),
    "z": np.array([[-1, 0], [0, 1]], dtype=complex),  # bit 0 is |->
    "+": np.array([[0, 0], [1, 0]], dtype=complex),  # |+><-|
    "-": np.array([[0, 1], [0, 0]], dtype=complex),
}


def single_site_matrix(axis: str) -> np.ndarray:
    """2x2 matrix in the (|->, |+>) local basis; ``axis`` in x, y, z, +, -."""
    return _PAULI[axis].copy()


def site_operator(L: int, i: int, local: np.ndarray) -> np.ndarray:
    """Embed a 2x2 operator acting on site ``i`` into the full chain."""
    if not 0 <= i < L:
        raise ContractError(f"site {i} out of range for L={L}")
    dim = check_capacity(L)
    bits = basis_bits(L)[:, i]
    flipped = np.arange(dim) ^ (1 << i)
    op = np.zeros((dim, dim), dtype=complex)
    # <a|O|b> is nonzero only when a and b agree away from site i
    op[np.arange(dim), np.arange(dim)] = local[bits, bits]
    op[flipped, np.arange(dim)] = local[1 - bits, bits]
    return op


def pauli(L: int, i: int, axis: str) -> np.ndarray:
    return site_operator(L, i, _PAULI[axis])


def projector(L: int, i: int, sign: int) -> np.ndarray:
    """``(1 + sign * sigma^z_i) / 2`` as a dense matrix."""
    if sign not in (1, -1):
        raise ContractError("sign must be +1 or -1")
    diag = plus_mask(L, i) if sign == 1 else ~plus_mask(L, i)
    return np.diag(diag.astype(complex))


def build_ising_hamiltonian(
    L: int, Jx: float = 1.0, bc: BoundaryCondition | str = BoundaryCondition.OPEN
) -> np.ndarray:
    """Dense ``Jx * sum_bonds sigma^x_i sigma^x_j`` (real-valued, complex dtype)."""
    dim = check_capacity(L)
    H = np.zeros((dim, dim), dtype=complex)
    idx = np.arange(dim)
    for i, j in bonds(L, bc):
        H[idx ^ ((1 << i) | (1 << j)), idx] += Jx
    return H


def is_hermitian(M: np.ndarray, tol: float = HERMITIAN_TOL) -> bool:
    return bool(np.max(np.abs(M - M.conj().T), initial=0.0) < tol)


def build_propagator(H: np.ndarray, dt: float, check: bool = True) -> np.ndarray:
    """Exact ``exp(-i H dt)`` from the Hermitian eigendecomposition of ``H``."""
    if dt < 0:
        raise ContractError(f"dt must be non-negative, got {dt}")
    if check and not is_hermitian(H):
        raise ContractError("propagator requires a Hermitian matrix")
    w, v = sla.eigh(H)
    return (v * np.exp(-1j * w * dt)) @ v.conj().T


def _schmidt_entropy(sv2: np.ndarray) -> np.ndarray:
    p = np.where(sv2 > _SCHMIDT_FLOOR, sv2, 1.0)
    return -np.sum(np.where(sv2 > _SCHMIDT_FLOOR, sv2 * np.log2(p), 0.0), axis=-1)


def entanglement_entropy(state: np.ndarray, cut: int | None = None) -> float:
    """Von Neumann entropy in bits of sites ``0 .. cut-1``.

    Computed from the singular values of the amplitude array reshaped to
    ``(2**(L-cut), 2**cut)``.  ``cut`` defaults to ``L // 2``.
    """
    L = n_sites(state)
    cut = L // 2 if cut is None else cut
    if not 1 <= cut <= L - 1:
        raise ContractError(f"cut must lie in [1, {L - 1}], got {cut}")
    check_normalized(state)
    s = np.linalg.svd(np.reshape(state, (2 ** (L - cut), 2**cut)), compute_uv=False)
    return float(_schmidt_entropy(s**2))


def entanglement_entropies(states: np.ndarray, cut: int | None = None) -> np.ndarray:
    """Vectorized :func:`entanglement_entropy` over a stack ``(M, 2**L)``."""
    states = np.asarray(states)
    L = n_sites(states)
    cut = L // 2 if cut is None else cut
    s = np.linalg.svd(states.reshape(-1, 2 ** (L - cut), 2**cut), compute_uv=False)
    return _schmidt_entropy(s**2)


def overlap(a: np.ndarray, b: np.ndarray) -> float:
    """``|<a|b>|`` for two normalized states."""
    if np.shape(a) != np.shape(b):
        raise ContractError(f"dimension mismatch {np.shape(a)} vs {np.shape(b)}")
    check_normalized(a)
    check_normalized(b)
    return float(min(abs(np.vdot(a, b)), 1.0))


def magnetization_profile(state: np.ndarray) -> np.ndarray:
    """``<sigma^z_i>`` for every site."""
    L = n_sites(state)
    prob = np.abs(state) ** 2
    return prob @ (2.0 * basis_bits(L) - 1.0)


def local_magnetization(state: np.ndarray, i: int) -> float:
    L = n_sites(state)
    if not 0 <= i < L:
        raise ContractError(f"site {i} out of range for L={L}")
    check_normalized(state)
    return float(magnetization_profile(state)[i])


def parity_expectation(state: np.ndarray) -> float:
    """Expectation of ``prod_i sigma^z_i`` on a normalized state."""
    L = n_sites(state)
    return float(np.sum(np.abs(state) ** 2 * parity_diagonal(L)))
