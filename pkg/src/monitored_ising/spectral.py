"""Complex spectral analysis of the non-Hermitian Ising Hamiltonian.

Eigenvalues are written ``E = omega - i Gamma``.  The subradiant state is the
right eigenvector with the smallest decay rate ``Gamma``.

Symmetry used for fast scans
----------------------------
Let ``u = prod_{i even} sigma^z_i``.  Every bond ``sigma^x_i sigma^x_{i+1}``
anticommutes with ``u`` (open chains, and periodic chains of even length), so
``u H_eff u = -conj(H_eff)``.  Consequently ``i H_eff`` is similar, through a
diagonal phase matrix, to a *real* matrix ``B``.  Real eigenvalues of ``B``
are exactly the ``omega = 0`` levels, which makes merging of the subradiant
level with its partner detectable without a floating-point threshold on
``omega``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

from .errors import NotBracketedError, NumericalError
from .hilbert import BoundaryCondition, basis_bits, parity_diagonal
from .noclick import NonHermitianHamiltonian, build_h_eff

DEGENERACY_TOL = 1e-10
RECONSTRUCTION_TOL = 1e-8


def sector_indices(L: int, parity: int | None) -> np.ndarray:
    """Basis indices with ``prod sigma^z = parity`` (all indices for ``None``)."""
    if parity is None:
        return np.arange(2**L)
    return np.flatnonzero(parity_diagonal(L) == parity)


def zeno_sector(L: int) -> int:
    """Parity eigenvalue of ``|T>``, conserved by ``H_eff``."""
    return 1 if L % 2 == 0 else -1


@dataclass
class ComplexSpectrum:
    """Eigenpairs of ``H_eff`` restricted to a set of basis states.

    ``right[:, a]`` has unit norm; ``left[:, a]`` is scaled so that
    ``left[:, a].conj() @ right[:, b] == delta_ab``.  Vectors live in the full
    ``2**L`` basis even when a parity sector was diagonalized.
    """

    eigenvalues: np.ndarray
    right: np.ndarray
    left: np.ndarray | None
    L: int
    sector: int | None = None
    degenerate: bool = False
    residual: float = 0.0

    @property
    def omega(self) -> np.ndarray:
        return self.eigenvalues.real

    @property
    def gamma(self) -> np.ndarray:
        return -self.eigenvalues.imag

    @property
    def dimension(self) -> int:
        return len(self.eigenvalues)

    @property
    def defective(self) -> bool:
        """True when the eigenvectors fail to reconstruct the matrix."""
        return self.residual > RECONSTRUCTION_TOL


@dataclass
class SubradiantResult:
    index: int
    gamma_sub: float
    omega_sub: float
    vector: np.ndarray
    overlap_T: float
    f: float
    mz_sub: float


def _clusters(values: np.ndarray, tol: float) -> np.ndarray:
    pts = np.column_stack([values.real, values.imag])
    pairs = cKDTree(pts).query_pairs(tol, output_type="ndarray")
    n = len(values)
    graph = coo_matrix((np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])), shape=(n, n))
    return connected_components(graph, directed=False)[1]


def _embed(vectors: np.ndarray, idx: np.ndarray, L: int) -> np.ndarray:
    if len(idx) == 2**L:
        return vectors
    full = np.zeros((2**L, vectors.shape[1]), dtype=complex)
    full[idx] = vectors
    return full


def _pair_left(w, R, M):
    """Left eigenvectors from the adjoint problem, matched to ``w``.

    Returns ``(left, degenerate)``.  Falls back to the rows of ``R^{-1}`` if
    the two eigenvalue sets cannot be matched cluster by cluster.
    """
    mu, Lv = np.linalg.eig(M.conj().T)
    mu = mu.conj()
    labels = _clusters(w, DEGENERACY_TOL * max(1.0, np.max(np.abs(w))))
    n_clusters = labels.max() + 1
    centers = np.array([w[labels == c].mean() for c in range(n_clusters)])
    _, nearest = cKDTree(np.column_stack([centers.real, centers.imag])).query(
        np.column_stack([mu.real, mu.imag])
    )
    degenerate = n_clusters < len(w)
    if np.any(np.bincount(nearest, minlength=n_clusters) != np.bincount(labels, minlength=n_clusters)):
        return np.linalg.inv(R).conj().T, True
    left = np.empty_like(R)
    for c in range(n_clusters):
        rc = np.flatnonzero(labels == c)
        Lc = Lv[:, nearest == c]
        gram = Lc.conj().T @ R[:, rc]
        # biorthogonalize inside the cluster: Lc' = Lc inv(gram)^H
        left[:, rc] = Lc @ np.linalg.inv(gram).conj().T
    return left, degenerate


def diagonalize(h: NonHermitianHamiltonian, sector: int | None = None, left: bool = True) -> ComplexSpectrum:
    """Full eigendecomposition of ``H_eff`` (optionally within a parity sector)."""
    idx = sector_indices(h.L, sector)
    M = h.matrix[np.ix_(idx, idx)]
    if not np.all(np.isfinite(M)):
        raise NumericalError("non-finite matrix entries")
    try:
        w, R = np.linalg.eig(M)
        R = R / np.linalg.norm(R, axis=0)
        if left:
            Lv, degenerate = _pair_left(w, R, M)
        else:
            Lv, degenerate = np.linalg.inv(R).conj().T, False
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"eigensolver failed: {exc}") from exc
    residual = float(np.max(np.abs((R * w) @ Lv.conj().T - M)))
    return ComplexSpectrum(
        eigenvalues=w,
        right=_embed(R, idx, h.L),
        left=_embed(Lv, idx, h.L) if left else None,
        L=h.L,
        sector=sector,
        degenerate=degenerate,
        residual=residual,
    )


def _select(E: np.ndarray, overlaps: np.ndarray | None = None, tol: float = DEGENERACY_TOL) -> int:
    """Index of the subradiant level: min Gamma, then min |omega|, then max overlap."""
    gam = -E.imag
    scale = max(1.0, float(np.max(np.abs(E))))
    cand = np.flatnonzero(gam <= gam.min() + tol * scale)
    absw = np.abs(E.real[cand])
    cand = cand[absw <= absw.min() + tol * scale]
    if overlaps is not None and len(cand) > 1:
        o = overlaps[cand]
        cand = cand[o >= o.max() - tol]
    return int(cand[np.argmax(E.real[cand])])


def subradiant_magnetization(spectrum: ComplexSpectrum, index: int, biorthogonal: bool = False) -> float:
    """``<sub| sum_i sigma^z_i |sub> / L``.

    By default the bra is the conjugate of the unit-normalized right vector.
    With ``biorthogonal=True`` the paired left vector is used instead.
    """
    L = spectrum.L
    zsum = (2.0 * basis_bits(L) - 1.0).sum(axis=1)
    r = spectrum.right[:, index]
    if biorthogonal:
        if spectrum.left is None:
            raise NumericalError("spectrum was computed without left vectors")
        bra = spectrum.left[:, index]
        return float((np.vdot(bra, zsum * r) / np.vdot(bra, r)).real / L)
    return float(np.vdot(r, zsum * r).real / L)


def find_subradiant(spectrum: ComplexSpectrum, biorthogonal: bool = False) -> SubradiantResult:
    overlaps = np.abs(spectrum.right[0])
    a = _select(spectrum.eigenvalues, overlaps)
    O = float(min(overlaps[a], 1.0))
    return SubradiantResult(
        index=a,
        gamma_sub=float(spectrum.gamma[a]),
        omega_sub=float(spectrum.omega[a]),
        vector=spectrum.right[:, a].copy(),
        overlap_T=O,
        f=O / (1.0 - O) if O < 1.0 else np.inf,
        mz_sub=subradiant_magnetization(spectrum, a, biorthogonal),
    )


def subradiant(
    L: int, g: float, Jx: float = 1.0, bc: BoundaryCondition | str = BoundaryCondition.OPEN
) -> SubradiantResult:
    """Subradiant state of ``H_eff`` at ``gamma = g * Jx`` in the sector of ``|T>``."""
    h = build_h_eff(L, Jx, g * Jx, bc)
    return find_subradiant(diagonalize(h, sector=zeno_sector(L), left=False))


def supports_real_form(L: int, bc: BoundaryCondition | str) -> bool:
    return BoundaryCondition(bc) is BoundaryCondition.OPEN or L % 2 == 0


def real_form(h: NonHermitianHamiltonian, sector: int | None = None) -> np.ndarray:
    """Real matrix similar to ``i H_eff`` (see module docstring)."""
    if not supports_real_form(h.L, h.bc):
        raise NumericalError("real form needs an open chain or an even periodic chain")
    idx = sector_indices(h.L, sector)
    even_sites = basis_bits(h.L)[idx][:, ::2]
    u = np.where(even_sites.sum(axis=1) % 2 == 0, 1.0, -1.0)  # sign of prod sigma^z over even sites
    s = np.where(u > 0, 1.0, 1j)
    B = s[:, None] * (1j * h.matrix[np.ix_(idx, idx)]) * s.conj()[None, :]
    if np.max(np.abs(B.imag)) > 1e-12 * max(1.0, np.max(np.abs(B))):
        raise NumericalError("real-form transform left an imaginary remainder")
    return np.ascontiguousarray(B.real)


def sector_eigenvalues(h: NonHermitianHamiltonian, sector: int | None = None) -> np.ndarray:
    """Eigenvalues of ``H_eff``; ``omega`` is exactly 0 for real-form real roots."""
    if supports_real_form(h.L, h.bc):
        lam = np.linalg.eigvals(real_form(h, sector))
        return lam.imag - 1j * lam.real
    idx = sector_indices(h.L, sector)
    return np.linalg.eigvals(h.matrix[np.ix_(idx, idx)])


def eigenvalues_extended(matrix: np.ndarray, dps: int = 40) -> np.ndarray:
    """Eigenvalues in extended precision (for defective or near-defective matrices)."""
    import mpmath

    with mpmath.workdps(dps):
        M = mpmath.matrix([[mpmath.mpc(z.real, z.imag) for z in row] for row in np.asarray(matrix, complex)])
        E = mpmath.eig(M, left=False, right=False)
        return np.array([complex(e) for e in E])


def accurate_eigenvalues(matrix: np.ndarray, cond_limit: float = 1e6, dps: int = 40) -> np.ndarray:
    """Double-precision eigenvalues, redone in extended precision when the
    eigenvector matrix is ill-conditioned (close to an exceptional point)."""
    w, R = np.linalg.eig(matrix)
    if np.linalg.cond(R) < cond_limit:
        return w
    return eigenvalues_extended(matrix, dps)


@dataclass
class ScanPoint:
    g: float
    L: int
    omega_sub: float
    gamma_sub: float
    omega_partner: float
    gamma_partner: float


def _scan_point(L: int, g: float, Jx: float, bc) -> ScanPoint:
    E = sector_eigenvalues(build_h_eff(L, Jx, g * Jx, bc), zeno_sector(L))
    a = _select(E)
    rest = np.delete(E, a)
    # partner: nearest decay rate above (or equal to) the subradiant one
    b = int(np.argmin(np.abs(-rest.imag - (-E[a].imag)) + np.where(-rest.imag < -E[a].imag, np.inf, 0.0)))
    return ScanPoint(g, L, float(E[a].real), float(-E[a].imag), float(rest[b].real), float(-rest[b].imag))


@dataclass
class TransitionResult:
    L: int
    g_c: float
    coarse: list[ScanPoint]
    below: ScanPoint
    above: ScanPoint
    evaluations: int = 0
    bracket: tuple[float, float] = field(default=(0.0, 0.0))


def transition_scan(
    L: int,
    Jx: float = 1.0,
    g_grid=None,
    refine_tol: float = 1e-8,
    g_tol: float = 1e-6,
    bc: BoundaryCondition | str = BoundaryCondition.OPEN,
) -> TransitionResult:
    """Locate the smallest ``g`` at which ``|omega_sub|`` drops below ``refine_tol``.

    A coarse pass over the ascending ``g_grid`` finds the bracketing cell;
    bisection then narrows it to ``g_tol``.
    """
    g_grid = np.linspace(1.0, 6.0, 21) if g_grid is None else np.asarray(g_grid, float)
    if np.any(np.diff(g_grid) <= 0):
        raise NotBracketedError("g_grid must be strictly ascending")
    coarse = []
    hit = None
    for k, g in enumerate(g_grid):
        pt = _scan_point(L, g, Jx, bc)
        coarse.append(pt)
        if abs(pt.omega_sub) < refine_tol:
            hit = k
            break
    if hit is None or hit == 0:
        raise NotBracketedError(f"no omega_sub -> 0 crossing inside [{g_grid[0]}, {g_grid[-1]}] for L={L}")
    lo, hi = coarse[hit - 1], coarse[hit]
    n_eval = len(coarse)
    while hi.g - lo.g > g_tol:
        mid = _scan_point(L, 0.5 * (lo.g + hi.g), Jx, bc)
        n_eval += 1
        if abs(mid.omega_sub) < refine_tol:
            hi = mid
        else:
            lo = mid
    return TransitionResult(
        L=L,
        g_c=0.5 * (lo.g + hi.g),
        coarse=coarse,
        below=lo,
        above=hi,
        evaluations=n_eval,
        bracket=(lo.g, hi.g),
    )


def subradiant_scan(
    L: int, g_grid, Jx: float = 1.0, bc: BoundaryCondition | str = BoundaryCondition.OPEN
) -> list[dict]:
    """Rows ``(g, L, omega_sub, gamma_sub, O_sub_T, f)`` over a grid of ``g``."""
    rows = []
    for g in g_grid:
        s = subradiant(L, float(g), Jx, bc)
        rows.append(
            dict(g=float(g), L=L, omega_sub=s.omega_sub, gamma_sub=s.gamma_sub, O_sub_T=s.overlap_T, f=s.f)
        )
    return rows


def spin_correlations(vector: np.ndarray, L: int) -> np.ndarray:
    """Matrix ``C[i, j] = <v| sigma^+_i sigma^-_j |v>`` (plain bra-ket)."""
    idx = np.arange(2**L)
    bits = basis_bits(L)
    C = np.empty((L, L), dtype=complex)
    for j in range(L):
        has_j = bits[:, j] == 1
        for i in range(L):
            if i == j:
                C[i, i] = np.sum(np.abs(vector[has_j]) ** 2)
                continue
            src = idx[has_j & (bits[:, i] == 0)]
            dst = src ^ (1 << j) ^ (1 << i)
            C[i, j] = np.vdot(vector[dst], vector[src])
    return C


def kmode_momenta(L: int) -> np.ndarray:
    return np.arange(1, L + 1) * np.pi / (L + 1)


def kmode_occupancy(vector: np.ndarray, L: int) -> np.ndarray:
    """Open-chain sine-mode populations ``<n_k>`` for ``k = n pi / (L + 1)``."""
    C = spin_correlations(vector, L)
    k = kmode_momenta(L)
    S = np.sin(np.outer(k, np.arange(1, L + 1)))
    return (2.0 / (L + 1)) * np.einsum("ki,ij,kj->k", S, C, S).real
