"""Post-selected no-click dynamics.

Two routes are provided and compared against each other:

* the exact no-click branch of the protocol, ``U`` followed by the product of
  ``M0 = Pi_- + sqrt(1 - p) Pi_+`` on every site;
* the continuum limit ``p = gamma * dt -> 0``, generated by the non-Hermitian
  Ising Hamiltonian

      H_eff = Jx sum sigma^x_i sigma^x_{i+1} - i (gamma / 2) sum Pi^z_{i+}.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .errors import ContractError, ExtinctionError
from .hilbert import (
    BoundaryCondition,
    build_ising_hamiltonian,
    build_propagator,
    check_normalized,
    entanglement_entropies,
    n_sites,
    plus_count,
)
from .trajectory import ProtocolParams

_EXTINCT = 1e-300


@dataclass(frozen=True)
class NonHermitianHamiltonian:
    matrix: np.ndarray
    gamma: float
    Jx: float
    bc: BoundaryCondition
    L: int

    @property
    def hermitian_part(self) -> np.ndarray:
        return 0.5 * (self.matrix + self.matrix.conj().T)

    @property
    def decay_part(self) -> np.ndarray:
        """The Hermitian ``Gamma`` in ``H_eff = H - i Gamma``."""
        return 0.5j * (self.matrix - self.matrix.conj().T)

    @property
    def g(self) -> float:
        return self.gamma / self.Jx


def build_h_eff(
    L: int, Jx: float = 1.0, gamma: float = 0.0, bc: BoundaryCondition | str = BoundaryCondition.OPEN
) -> NonHermitianHamiltonian:
    if gamma < 0:
        raise ContractError(f"gamma must be non-negative, got {gamma}")
    bc = BoundaryCondition(bc)
    M = build_ising_hamiltonian(L, Jx, bc)
    M[np.diag_indices_from(M)] -= 0.5j * gamma * plus_count(L)
    return NonHermitianHamiltonian(matrix=M, gamma=float(gamma), Jx=float(Jx), bc=bc, L=L)


def effective_propagator(h: NonHermitianHamiltonian, dt: float) -> np.ndarray:
    """``exp(-i H_eff dt)`` from the biorthogonal eigendecomposition.

    Falls back to scaling-and-squaring when the eigenvector matrix is too
    ill-conditioned to reconstruct ``H_eff`` (near an exceptional point).
    """
    M = h.matrix
    w, R = np.linalg.eig(M)
    try:
        Linv = np.linalg.inv(R)
    except np.linalg.LinAlgError:
        return sla.expm(-1j * dt * M)
    resid = np.max(np.abs((R * w) @ Linv - M))
    if resid > 1e-8 * max(1.0, np.max(np.abs(M))):
        return sla.expm(-1j * dt * M)
    return (R * np.exp(-1j * w * dt)) @ Linv


@dataclass
class NoClickSeries:
    """Normalized post-selected states plus the per-step survival weights.

    ``weights[t]`` is the norm of the state just before renormalization at
    step ``t`` (``weights[0] = 1``); the post-selection probability up to step
    ``t`` is ``prod(weights[:t+1]**2)``.
    """

    states: np.ndarray
    weights: np.ndarray

    def entropies(self, cut: int | None = None) -> np.ndarray:
        return entanglement_entropies(self.states, cut)

    def overlaps(self) -> np.ndarray:
        return np.abs(self.states[:, 0])

    def log_survival(self) -> np.ndarray:
        return 2.0 * np.cumsum(np.log(self.weights))


def _iterate(state: np.ndarray, step_matrix_apply, steps: int) -> NoClickSeries:
    check_normalized(state)
    states = np.empty((steps + 1, np.size(state)), dtype=complex)
    weights = np.ones(steps + 1)
    psi = np.asarray(state, dtype=complex)
    states[0] = psi
    for t in range(1, steps + 1):
        psi = step_matrix_apply(psi)
        w = np.linalg.norm(psi)
        if not w > _EXTINCT:
            raise ExtinctionError(f"survival weight underflow at step {t}")
        psi = psi / w
        states[t] = psi
        weights[t] = w
    return NoClickSeries(states=states, weights=weights)


def evolve_noclick_effective(
    state: np.ndarray, h: NonHermitianHamiltonian, dt: float, steps: int
) -> NoClickSeries:
    """Repeatedly apply ``exp(-i H_eff dt)`` and renormalize."""
    if not dt > 0:
        raise ContractError(f"dt must be positive, got {dt}")
    if n_sites(state) != h.L:
        raise ContractError("state and Hamiltonian sizes differ")
    P = effective_propagator(h, dt)
    return _iterate(state, lambda psi: P @ psi, steps)


def noclick_kraus_diagonal(L: int, p: float) -> np.ndarray:
    """Diagonal of the product of no-click Kraus operators for click probability ``p``."""
    return (1.0 - p) ** (0.5 * plus_count(L))


def exact_noclick_step(
    state: np.ndarray, params: ProtocolParams, U: np.ndarray | None = None
) -> tuple[np.ndarray, float]:
    """One protocol step on the all-``r = 0`` branch.

    Returns the renormalized state and its survival weight (norm before
    renormalization).
    """
    check_normalized(state)
    if U is None:
        U = build_propagator(build_ising_hamiltonian(params.L, params.Jx, params.bc), params.dt)
    psi = noclick_kraus_diagonal(params.L, params.p_total) * (U @ state)
    w = float(np.linalg.norm(psi))
    if not w > _EXTINCT:
        raise ExtinctionError("survival weight underflow")
    return psi / w, w


def evolve_noclick_exact(state: np.ndarray, params: ProtocolParams, steps: int | None = None) -> NoClickSeries:
    steps = params.steps if steps is None else steps
    U = build_propagator(build_ising_hamiltonian(params.L, params.Jx, params.bc), params.dt)
    d = noclick_kraus_diagonal(params.L, params.p_total)
    return _iterate(state, lambda psi: d * (U @ psi), steps)
