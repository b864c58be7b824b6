"""Free-fermion solution of the non-Hermitian Ising chain.

After a Jordan-Wigner transformation the even-parity sector of ``H_eff`` with
periodic spin boundaries becomes a quadratic fermion problem on the
anti-periodic momentum grid ``k = +-(2m - 1) pi / L``.  Each momentum pair is
diagonalized by a 2x2 Bogoliubov matrix with eigenvalues ``+-Lambda_k``,

    Lambda_k**2 = 4 Jx**2 [1 - (g/g_c)**2 + 2i (g/g_c) cos k],   g_c = 4,

and the many-body levels are ``E_vac + sum_k n_k Lambda_k`` with an even number
of occupied modes.  Everything here is closed-form or one-dimensional
quadrature; dense vectors are handled in :mod:`spectral`.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .errors import CapacityError, ContractError, FitWindowError, NumericalError
from .hilbert import basis_bits
from .stats import FitResult, fit_power_law

G_C = 4.0
SIGMA_NONPOSITIVE = "sigma_nonpositive"
PRINCIPAL = "principal"
SIGMA_NONNEGATIVE = "sigma_nonnegative"
MAX_FERMION_L = 12

_SNAP = 1e-14
_QUAD_TOL = 1e-10


@dataclass(frozen=True)
class QuasiparticleMode:
    k: float
    lam: complex
    convention: str = SIGMA_NONPOSITIVE

    @property
    def delta(self) -> float:
        return self.lam.real

    @property
    def sigma(self) -> float:
        return self.lam.imag


@dataclass(frozen=True)
class BogoliubovMatrix:
    k: float
    eps: complex
    eta: float

    @classmethod
    def at(cls, k: float, g: float, Jx: float = 1.0) -> "BogoliubovMatrix":
        gamma = g * Jx
        return cls(k=k, eps=0.5j * gamma + 2.0 * Jx * np.cos(k), eta=-2.0 * Jx * np.sin(k))

    @property
    def matrix(self) -> np.ndarray:
        return np.array([[self.eps, -1j * self.eta], [1j * self.eta, -self.eps]])

    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvals(self.matrix)


@dataclass(frozen=True)
class ManyBodyLevel:
    occupations: tuple[int, ...]
    energy: complex

    @property
    def parity(self) -> int:
        return sum(self.occupations) % 2


def _check_g(g: float) -> None:
    if not g >= 0:
        raise ContractError(f"g must be non-negative, got {g}")


def radicand(k, g: float) -> np.ndarray:
    """``1 - (g/g_c)**2 + 2i (g/g_c) cos k`` with round-off zeros snapped to 0."""
    r = g / G_C
    c = np.cos(k)
    c = np.where(np.abs(c) < _SNAP, 0.0, c)
    z = (1.0 - r * r) + 2j * r * c
    return np.where(np.abs(z) < _SNAP, 0.0, z)


def lambda_k(k, g: float, Jx: float = 1.0, convention: str = SIGMA_NONPOSITIVE) -> np.ndarray:
    """Quasiparticle energy on the requested square-root branch.

    ``principal`` keeps numpy's principal root.  ``sigma_nonpositive`` and
    ``sigma_nonnegative`` flip the sign where needed so that the imaginary
    part has a fixed sign.
    """
    _check_g(g)
    lam = 2.0 * Jx * np.sqrt(radicand(k, g).astype(complex))
    if convention == PRINCIPAL:
        return lam
    if convention == SIGMA_NONPOSITIVE:
        return np.where(lam.imag > 0, -lam, lam)
    if convention == SIGMA_NONNEGATIVE:
        return np.where(lam.imag < 0, -lam, lam)
    raise ContractError(f"unknown branch convention {convention!r}")


def abc_momenta(L: int) -> np.ndarray:
    """Anti-periodic grid ``+-(2m - 1) pi / L``, sorted ascending."""
    if L < 2 or L % 2:
        raise ContractError(f"the fermion grid needs an even L >= 2, got {L}")
    m = np.arange(1, L // 2 + 1)
    pos = (2 * m - 1) * np.pi / L
    return np.concatenate([-pos[::-1], pos])


def quasiparticle_spectrum(
    g: float, Jx: float = 1.0, L: int | None = None, ks=None, convention: str = SIGMA_NONPOSITIVE
) -> list[QuasiparticleMode]:
    """Modes on the finite-``L`` grid, on explicit ``ks``, or on a dense continuum grid."""
    if ks is None:
        ks = abc_momenta(L) if L is not None else np.linspace(-np.pi, np.pi, 401)
    ks = np.asarray(ks, dtype=float)
    lam = lambda_k(ks, g, Jx, convention)
    return [QuasiparticleMode(float(k), complex(v), convention) for k, v in zip(ks, lam)]


def spectrum_table(g: float, Jx: float = 1.0, n_k: int = 401) -> list[dict]:
    """Rows ``(k, re_lambda, im_lambda, g)`` over ``[-pi, pi]``."""
    return [
        dict(k=m.k, re_lambda=m.delta, im_lambda=m.sigma, g=float(g))
        for m in quasiparticle_spectrum(g, Jx, ks=np.linspace(-np.pi, np.pi, n_k))
    ]


def critical_scaling_exponent(
    g: float = G_C, Jx: float = 1.0, window: tuple[float, float] = (1e-4, 1e-2), n: int = 41
) -> FitResult:
    """Log-log slope of ``|Lambda_k - Lambda_{pi/2}|`` against ``|k - pi/2|``.

    At ``g = g_c`` the reference value vanishes and the slope is the
    exponent of the gap closing.  The window must span at least a decade.
    """
    lo, hi = window
    if not (0 < lo < hi) or hi / lo < 10.0 - 1e-12:
        raise FitWindowError(f"window {window} spans less than a decade")
    dk = np.geomspace(lo, hi, n)
    ref = lambda_k(np.pi / 2, g, Jx)
    dev = np.abs(lambda_k(np.pi / 2 + dk, g, Jx) - ref)
    return fit_power_law(dk, dev)


def decay_offset(g: float, Jx: float, L: int) -> complex:
    """Constant ``-i gamma L / 4`` of the fermionic Hamiltonian, ``gamma = g Jx``.

    Equals ``-i (g / g_c) L Jx`` because ``g_c = 4``.
    """
    return -0.25j * g * Jx * L


def _quad_complex(f, a: float, b: float, breakpoints=()) -> complex:
    """Adaptive quadrature of a complex integrand; one refined retry on failure."""
    out = []
    for part in (lambda x: f(x).real, lambda x: f(x).imag):
        with warnings.catch_warnings():
            warnings.simplefilter("error", integrate.IntegrationWarning)
            try:
                val, _ = integrate.quad(part, a, b, epsabs=_QUAD_TOL, epsrel=0.0, points=breakpoints or None)
            except integrate.IntegrationWarning:
                try:
                    val, _ = integrate.quad(
                        part, a, b, epsabs=_QUAD_TOL, epsrel=0.0, limit=1000, points=breakpoints or None
                    )
                except integrate.IntegrationWarning as exc:
                    raise NumericalError(f"quadrature did not converge: {exc}") from exc
        out.append(val)
    return complex(out[0], out[1])


def subradiant_branch(g: float) -> str:
    """Branch that continues the ``|T>`` level: principal up to ``g_c``, then
    ``Sigma >= 0``, which is the branch whose decay rate vanishes as ``g`` grows."""
    return PRINCIPAL if g <= G_C else SIGMA_NONNEGATIVE


def subradiant_energy(g: float, Jx: float = 1.0, convention: str | None = None) -> complex:
    """Intensive energy ``(1/2pi) int_{-pi}^{0} Lambda_k dk - i (g/g_c) Jx`` of the ``|T>`` level."""
    _check_g(g)
    conv = subradiant_branch(g) if convention is None else convention
    val = _quad_complex(lambda k: lambda_k(k, g, Jx, conv), -np.pi, 0.0, (-np.pi / 2,))
    return val / (2 * np.pi) + decay_offset(g, Jx, 1)


def vacuum_energy(g: float, Jx: float = 1.0) -> complex:
    """Intensive quasiparticle-vacuum energy with the principal root."""
    _check_g(g)
    val = _quad_complex(lambda k: np.sqrt(radicand(k, g).astype(complex)), 0.0, np.pi, (np.pi / 2,))
    return 2.0 * Jx * (-val / (2 * np.pi)) + decay_offset(g, Jx, 1)


def subradiant_energy_discrete(g: float, Jx: float, L: int, convention: str | None = None) -> complex:
    """Finite-``L`` Riemann sum of :func:`subradiant_energy` on the ABC grid."""
    conv = subradiant_branch(g) if convention is None else convention
    ks = abc_momenta(L)
    return complex(np.sum(lambda_k(ks[ks < 0], g, Jx, conv)) / L) + decay_offset(g, Jx, 1)


def many_body_energies(g: float, Jx: float, L: int, convention: str = SIGMA_NONPOSITIVE):
    """``(occupations, energies)`` arrays for every even-parity occupation pattern."""
    if L > MAX_FERMION_L:
        raise CapacityError(f"L={L} exceeds the enumeration limit {MAX_FERMION_L}")
    ks = abc_momenta(L)
    lam = lambda_k(ks, g, Jx, convention)
    occ = np.asarray(basis_bits(L))
    occ = occ[occ.sum(axis=1) % 2 == 0]
    e_vac = -np.sum(lam[ks > 0]) + decay_offset(g, Jx, L)
    return occ, e_vac + occ @ lam


def many_body_spectrum(g: float, Jx: float = 1.0, L: int = 4) -> list[ManyBodyLevel]:
    occ, E = many_body_energies(g, Jx, L)
    return [ManyBodyLevel(tuple(int(b) for b in row), complex(e)) for row, e in zip(occ, E)]
