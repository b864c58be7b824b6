"""Unconditional (ensemble-averaged) dynamics of the monitored chain.

The continuum master equation is

    d rho / dt = -i (H_eff rho - rho H_eff^dag) + gamma sum_i Pi^+_i rho Pi^+_i,

which is the GKLS equation with Hamiltonian ``H`` and jump operators
``sqrt(gamma) Pi^+_i``.  In the ``sigma^z`` basis the jump term is the
Hadamard product of ``rho`` with ``C[a, b] = popcount(a & b)``.

:func:`kraus_channel_step` is the exact discrete-time average of one protocol
step; per site it multiplies ``rho[a, b]`` by ``sqrt(1 - p)`` whenever the two
basis states differ on that site.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import ContractError, PreconditionError, StepSizeError
from .hilbert import (
    BoundaryCondition,
    basis_bits,
    build_ising_hamiltonian,
    build_propagator,
    check_capacity,
    n_sites,
)
from .noclick import build_h_eff

DM_TOL = 1e-10
POSITIVITY_TOL = 1e-8
TRACE_DRIFT_TOL = 1e-6
POSITIVITY_WARN = 1e-6


def validate_density_matrix(rho: np.ndarray, tol: float = DM_TOL, positivity_tol: float = POSITIVITY_TOL) -> int:
    """Check Hermiticity, unit trace and positivity; return ``L``."""
    rho = np.asarray(rho)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise PreconditionError(f"density matrix must be square, got shape {rho.shape}")
    L = n_sites(rho)
    if np.max(np.abs(rho - rho.conj().T)) > tol:
        raise PreconditionError("density matrix is not Hermitian")
    if abs(np.trace(rho) - 1.0) > tol:
        raise PreconditionError(f"density matrix trace is {np.trace(rho).real:.3g}, not 1")
    if np.linalg.eigvalsh(rho).min() < -positivity_tol:
        raise PreconditionError("density matrix has a negative eigenvalue")
    return L


def maximally_mixed(L: int) -> np.ndarray:
    dim = check_capacity(L)
    return np.eye(dim, dtype=complex) / dim


def pure_density_matrix(psi: np.ndarray) -> np.ndarray:
    psi = np.asarray(psi, dtype=complex)
    return np.outer(psi, psi.conj())


def jump_weights(L: int) -> np.ndarray:
    """``C[a, b]``: number of sites that are ``|+>`` in both ``a`` and ``b``."""
    idx = np.arange(2**L)
    return np.bitwise_count(idx[:, None] & idx[None, :]).astype(float)


def hamming_weights(L: int) -> np.ndarray:
    idx = np.arange(2**L)
    return np.bitwise_count(idx[:, None] ^ idx[None, :]).astype(float)


def _make_rhs(L: int, Jx: float, gamma: float, bc):
    Heff = build_h_eff(L, Jx, gamma, bc).matrix
    Hdag = Heff.conj().T
    C = gamma * jump_weights(L)

    def rhs(rho):
        return -1j * (Heff @ rho - rho @ Hdag) + C * rho

    return rhs


def lindblad_rhs(
    rho: np.ndarray,
    L: int | None = None,
    Jx: float = 1.0,
    gamma: float = 0.0,
    bc: BoundaryCondition | str = BoundaryCondition.OPEN,
    check: bool = True,
) -> np.ndarray:
    """Time derivative of ``rho`` under the master equation."""
    if check:
        L_rho = validate_density_matrix(rho)
    else:
        L_rho = n_sites(rho)
    if L is not None and L != L_rho:
        raise ContractError(f"rho acts on {L_rho} sites, not {L}")
    return _make_rhs(L_rho, Jx, gamma, bc)(np.asarray(rho, dtype=complex))


@dataclass
class Observables:
    trace: float
    purity: float
    mz: float

    @classmethod
    def of(cls, rho: np.ndarray) -> "Observables":
        L = n_sites(rho)
        zsum = (2.0 * basis_bits(L) - 1.0).sum(axis=1)
        diag = np.real(np.diag(rho))
        return cls(
            trace=float(diag.sum()),
            purity=float(np.real(np.vdot(rho, rho))),
            mz=float(diag @ zsum / L),
        )


@dataclass
class DensitySeries:
    times: np.ndarray
    states: np.ndarray
    min_eigenvalue: float = 0.0

    def observables(self) -> list[Observables]:
        return [Observables.of(r) for r in self.states]

    def rows(self) -> list[dict]:
        return [dict(t=float(t), **vars(o)) for t, o in zip(self.times, self.observables())]


def _step_indices(times, h: float, n: int) -> list[int]:
    out = []
    for t in times:
        k = int(round(t / h))
        if abs(k * h - t) > 1e-9 * max(1.0, abs(t)) or not 0 <= k <= n:
            raise ContractError(f"output time {t} is not on the integration grid")
        out.append(k)
    return out


def evolve_lindblad(
    rho0: np.ndarray,
    t_final: float,
    dt: float,
    Jx: float = 1.0,
    gamma: float = 0.0,
    bc: BoundaryCondition | str = BoundaryCondition.OPEN,
    times=None,
) -> DensitySeries:
    """Fixed-step classic RK4 integration from ``rho0`` to ``t_final``.

    ``times`` (default ``[0, t_final]``) must lie on the step grid.  Raises
    :class:`StepSizeError` if the trace drifts by more than 1e-6 and warns if an
    eigenvalue of a stored state drops below -1e-6.
    """
    L = validate_density_matrix(rho0)
    if not dt > 0 or not t_final >= 0:
        raise ContractError("dt must be positive and t_final non-negative")
    if gamma > 0 and dt > 0.01 / gamma * (1 + 1e-12):
        raise ContractError(f"dt={dt} exceeds the stability bound 0.01/gamma={0.01 / gamma}")
    n = max(1, math.ceil(t_final / dt - 1e-9))
    h = t_final / n if t_final > 0 else 0.0
    times = [0.0, t_final] if times is None else list(times)
    wanted = _step_indices(times, h, n) if h > 0 else [0] * len(times)
    rhs = _make_rhs(L, Jx, gamma, bc)

    rho = np.array(rho0, dtype=complex)
    saved = {0: rho.copy()}
    last = max(wanted)
    for k in range(1, last + 1):
        k1 = rhs(rho)
        k2 = rhs(rho + 0.5 * h * k1)
        k3 = rhs(rho + 0.5 * h * k2)
        k4 = rhs(rho + h * k3)
        rho = rho + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        drift = abs(np.trace(rho) - 1.0)
        if drift > TRACE_DRIFT_TOL:
            raise StepSizeError(f"trace drifted by {drift:.2e} at t={k * h:.4g}; reduce dt")
        if k in wanted:
            saved[k] = rho.copy()
    states = np.array([saved[k] for k in wanted])
    min_eig = float(min(np.linalg.eigvalsh(0.5 * (s + s.conj().T)).min() for s in states))
    if min_eig < -POSITIVITY_WARN:
        warnings.warn(f"density matrix lost positivity (min eigenvalue {min_eig:.2e})", RuntimeWarning)
    return DensitySeries(times=np.array([k * h for k in wanted]), states=states, min_eigenvalue=min_eig)


def kraus_channel_step(rho: np.ndarray, U: np.ndarray, p: float) -> np.ndarray:
    """Exact outcome-averaged protocol step: unitary, then every site's POVM."""
    L = n_sites(rho)
    damp = (1.0 - p) ** (0.5 * hamming_weights(L))
    return damp * (U @ rho @ U.conj().T)


def evolve_kraus_channel(rho0: np.ndarray, params, step_list) -> dict[int, np.ndarray]:
    """Average state after each step count in ``step_list`` (a :class:`ProtocolParams` run)."""
    validate_density_matrix(rho0)
    U = build_propagator(build_ising_hamiltonian(params.L, params.Jx, params.bc), params.dt)
    damp = (1.0 - params.p_total) ** (0.5 * hamming_weights(params.L))
    Ud = U.conj().T
    rho = np.array(rho0, dtype=complex)
    out = {0: rho.copy()} if 0 in step_list else {}
    for k in range(1, max(step_list) + 1):
        rho = damp * (U @ rho @ Ud)
        if k in step_list:
            out[k] = rho.copy()
    return out
