"""Stochastic measurement protocol: unitary Ising steps interleaved with
site-resolved two-outcome POVMs on ``sigma^z``.

One step maps ``|psi> -> M U |psi>`` (then renormalizes) where
``U = exp(-i H dt)`` and ``M`` is a product of local Kraus operators

    M0 = Pi_-  + sqrt(1 - p) Pi_+      (no click, r = 0)
    M1 = sqrt(p) Pi_+                  (click, r = 1)

with ``p = p_meas * p_site``.  Outcomes are drawn site by site in ascending
order on the partially updated state, which samples the joint Born
distribution of the product POVM exactly.

Randomness is counter-based: trajectory ``j`` of an ensemble with master
``seed`` draws from a Philox stream keyed by ``(seed, j)`` and consumes
exactly ``L`` uniforms per step, so every ``(step, site)`` pair has a fixed
position in that stream regardless of how trajectories are scheduled.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np

from .errors import ContractError, ImpossibleOutcomeError
from .hilbert import (
    BoundaryCondition,
    basis_bits,
    build_ising_hamiltonian,
    build_propagator,
    check_capacity,
    check_normalized,
    entanglement_entropies,
    zeno_state,
)

_CHUNK = 256
_NORM_FLOOR = 1e-300


@dataclass(frozen=True)
class ProtocolParams:
    """Parameters of the monitored chain.

    ``g = p_meas / (Jx * dt)`` is derived on access, never stored.
    """

    L: int = 8
    Jx: float = 1.0
    dt: float = 1e-2
    p_meas: float = 0.0
    p_site: float = 1.0
    steps: int = 2000
    seed: int = 0
    n_real: int = 100
    bc: BoundaryCondition = BoundaryCondition.OPEN

    def __post_init__(self):
        object.__setattr__(self, "bc", BoundaryCondition(self.bc))
        if int(self.L) != self.L or self.L < 1:
            raise ContractError(f"L must be a positive integer, got {self.L}")
        if not self.dt > 0:
            raise ContractError(f"dt must be positive, got {self.dt}")
        if not 0.0 <= self.p_meas <= 1.0:
            raise ContractError(f"p_meas must lie in [0, 1], got {self.p_meas}")
        if not 0.0 < self.p_site <= 1.0:
            raise ContractError(f"p_site must lie in (0, 1], got {self.p_site}")
        if int(self.steps) != self.steps or self.steps < 1:
            raise ContractError(f"steps must be a positive integer, got {self.steps}")
        if int(self.n_real) != self.n_real or self.n_real < 1:
            raise ContractError(f"n_real must be a positive integer, got {self.n_real}")
        if not 0 <= self.seed < 2**64:
            raise ContractError(f"seed must be a 64-bit unsigned integer, got {self.seed}")

    @classmethod
    def from_g(cls, g: float, **kwargs) -> "ProtocolParams":
        """Build parameters from the control parameter ``g`` instead of ``p_meas``."""
        probe = cls(**kwargs)
        return replace(probe, p_meas=g * probe.Jx * probe.dt)

    @property
    def g(self) -> float:
        return self.p_meas / (self.Jx * self.dt) if self.Jx else math.inf

    @property
    def p_total(self) -> float:
        return self.p_meas * self.p_site

    @property
    def gamma(self) -> float:
        """Measurement rate ``p_meas / dt`` used by the no-click limit."""
        return self.p_meas / self.dt


@dataclass
class TrajectoryRecord:
    """Observables of one realization, sampled after every full step.

    All series have ``steps + 1`` entries; entry 0 is the initial state.
    """

    entropy: np.ndarray
    magnetization: np.ndarray  # (steps + 1, L)
    overlap: np.ndarray
    clicks: np.ndarray
    final_state: np.ndarray
    seed: int
    index: int
    snapshots: dict[int, np.ndarray] = field(default_factory=dict)


@dataclass
class EnsembleResult:
    records: list[TrajectoryRecord]
    params: ProtocolParams
    wall_time: float
    workers: int
    failures: dict[int, str] = field(default_factory=dict)

    def entropy_samples(self, burn_in: float = 0.0) -> np.ndarray:
        """Pooled ``S_E`` values from every step after a leading ``burn_in`` fraction."""
        start = int(round(burn_in * self.params.steps))
        return np.concatenate([r.entropy[start:] for r in self.records])

    def _window(self, frac: float) -> int:
        return max(1, int(round(frac * self.params.steps)))

    def overlap_samples(self, window: float = 0.25) -> np.ndarray:
        """Pooled ``|<psi|T>|`` over the final ``window`` fraction of steps.

        ``window=0`` keeps only the final state of each trajectory.
        """
        n = self._window(window)
        return np.concatenate([r.overlap[-n:] for r in self.records])

    def magnetization_samples(self, window: float = 0.25) -> np.ndarray:
        """Pooled single-site ``<sigma^z_i>`` over all sites and the final window."""
        n = self._window(window)
        return np.concatenate([r.magnetization[-n:].ravel() for r in self.records])

    def mean_density_matrix(self, step: int) -> tuple[np.ndarray, np.ndarray]:
        """Ensemble mean of ``|psi><psi|`` at a snapshot step, with entrywise
        standard errors (real and imaginary parts combined in quadrature)."""
        if not self.records or step not in self.records[0].snapshots:
            raise ContractError(f"step {step} was not snapshotted")
        psis = np.array([r.snapshots[step] for r in self.records])
        rhos = psis[:, :, None] * psis[:, None, :].conj()
        n = len(psis)
        mean = rhos.mean(axis=0)
        if n < 2:
            return mean, np.zeros(mean.shape)
        se = np.sqrt(rhos.real.var(axis=0, ddof=1) + rhos.imag.var(axis=0, ddof=1)) / np.sqrt(n)
        return mean, se


def trajectory_rng(seed: int, index: int) -> np.random.Generator:
    """Counter-based stream for trajectory ``index`` of master ``seed``."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(index,))))


@lru_cache(maxsize=8)
def _propagator(L: int, Jx: float, dt: float, bc: BoundaryCondition) -> np.ndarray:
    U = build_propagator(build_ising_hamiltonian(L, Jx, bc), dt)
    U.flags.writeable = False
    return U


@lru_cache(maxsize=None)
def _prefix_counts(L: int) -> np.ndarray:
    """``out[b, i]`` = number of ``|+>`` sites among ``0 .. i-1`` in basis state ``b``."""
    bits = basis_bits(L).astype(float)
    out = np.zeros((2**L, L + 1))
    np.cumsum(bits, axis=1, out=out[:, 1:])
    out.flags.writeable = False
    return out


@lru_cache(maxsize=4096)
def _keep_table(L: int, p: float, start: int) -> np.ndarray:
    """Weights ``(1 - p) ** (plus count on sites start .. i-1)`` for
    ``i = start .. L-1``, stacked with the same weights masked to ``|+>`` at ``i``."""
    prefix = _prefix_counts(L)
    counts = prefix[:, start:L] - prefix[:, start : start + 1]
    keep = (1.0 - p) ** counts if p < 1.0 else (counts == 0).astype(float)
    # columns: denominators, then click numerators
    out = np.concatenate([keep, keep * basis_bits(L)[:, start:L]], axis=1)
    out.flags.writeable = False
    return out


@lru_cache(maxsize=4096)
def _span_factor(L: int, p: float, start: int, stop: int) -> np.ndarray:
    """Amplitude factor of no-click outcomes on sites ``start .. stop-1``, times
    the click projector at ``stop`` when ``stop < L``."""
    prefix = _prefix_counts(L)
    span = prefix[:, stop] - prefix[:, start]
    out = np.sqrt(1.0 - p) ** span if p < 1.0 else (span == 0).astype(float)
    if stop < L:
        out = out * basis_bits(L)[:, stop]
    out.flags.writeable = False
    return out


def _measure_inplace(psi: np.ndarray, L: int, p: float, uniforms: np.ndarray) -> np.ndarray:
    """Apply the sampled product POVM to a normalized ``psi`` in place.

    Equivalent to visiting the sites in order and clicking at site ``i`` when
    ``uniforms[i] < p * <Pi^+_i>`` on the partially updated state.  Because all
    Kraus operators are diagonal, the click probabilities of the remaining
    sites conditioned on no clicks in between are computed in one pass and the
    walk jumps straight to the next click.
    """
    outcomes = np.zeros(L, dtype=np.int8)
    if p == 0.0:
        return outcomes
    start = 0
    while start < L:
        w = psi.real**2 + psi.imag**2
        sums = w @ _keep_table(L, p, start)
        den, num = sums[: L - start], sums[L - start :]
        # a zero denominator is only reachable through a certain click earlier on
        with np.errstate(invalid="ignore", divide="ignore"):
            p_click = p * num / den
        hits = np.flatnonzero(uniforms[start:L] < p_click)
        stop = L if len(hits) == 0 else start + int(hits[0])
        if np.any(den[: stop - start + 1 if stop < L else L - start] < _NORM_FLOOR):
            raise ImpossibleOutcomeError(f"no-click branch before site {stop} has zero weight")
        psi *= _span_factor(L, p, start, stop)
        if stop == L:
            break
        outcomes[stop] = 1
        start = stop + 1
    psi /= np.linalg.norm(psi)
    return outcomes


def measurement_step(
    state: np.ndarray, params: ProtocolParams, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    """Sample one round of site measurements.

    Returns the normalized post-measurement state and the outcome bits
    ``r_i`` (1 for a click).  The input state is not modified.
    """
    check_normalized(state)
    psi = np.array(state, dtype=complex)
    outcomes = _measure_inplace(psi, params.L, params.p_total, rng.random(params.L))
    return psi, outcomes


def run_trajectory(
    params: ProtocolParams, index: int = 0, snapshot_steps: tuple[int, ...] = ()
) -> TrajectoryRecord:
    """Evolve ``|T>`` for ``params.steps`` steps of ``U`` followed by ``M``."""
    L, steps = params.L, params.steps
    rng = trajectory_rng(params.seed, index)
    U = _propagator(L, params.Jx, params.dt, params.bc)
    zsign = 2.0 * basis_bits(L) - 1.0
    p = params.p_total
    wanted = set(snapshot_steps)

    entropy = np.zeros(steps + 1)
    mag = np.empty((steps + 1, L))
    ovl = np.empty(steps + 1)
    clicks = np.zeros(steps + 1, dtype=np.int16)
    snapshots = {}

    psi = zeno_state(L)
    buf = np.empty((min(_CHUNK, steps + 1), psi.size), dtype=complex)
    filled, base = 0, 0

    def flush():
        block = buf[:filled]
        prob = block.real**2 + block.imag**2
        if L > 1:
            entropy[base : base + filled] = entanglement_entropies(block)
        mag[base : base + filled] = prob @ zsign
        ovl[base : base + filled] = np.sqrt(prob[:, 0])

    for t in range(steps + 1):
        if t > 0:
            psi = U @ psi
            out = _measure_inplace(psi, L, p, rng.random(L))
            clicks[t] = out.sum()
        if t in wanted:
            snapshots[t] = psi.copy()
        buf[filled] = psi
        filled += 1
        if filled == len(buf):
            flush()
            base += filled
            filled = 0
    if filled:
        flush()

    return TrajectoryRecord(
        entropy=entropy,
        magnetization=mag,
        overlap=ovl,
        clicks=clicks,
        final_state=psi,
        seed=params.seed,
        index=index,
        snapshots=snapshots,
    )


def _run_block(params: ProtocolParams, indices, snapshot_steps):
    out = []
    for j in indices:
        try:
            out.append((j, run_trajectory(params, j, snapshot_steps), None))
        except Exception as exc:  # reported per trajectory
            out.append((j, None, f"{type(exc).__name__}: {exc}"))
    return out


def run_ensemble(
    params: ProtocolParams, workers: int = 1, snapshot_steps: tuple[int, ...] = ()
) -> EnsembleResult:
    """Run ``params.n_real`` trajectories, optionally across worker processes.

    Records come back ordered by trajectory index and are bitwise identical
    for any worker count.
    """
    t0 = time.perf_counter()
    # the dense propagator is shared by every trajectory, so fail once up front
    check_capacity(params.L)
    indices = list(range(params.n_real))
    workers = max(1, int(workers))
    if workers == 1:
        results = _run_block(params, indices, snapshot_steps)
    else:
        n_blocks = min(len(indices), 4 * workers)
        blocks = [indices[k::n_blocks] for k in range(n_blocks)]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_run_block, params, b, snapshot_steps) for b in blocks]
            results = [item for f in futures for item in f.result()]
    results.sort(key=lambda item: item[0])
    records = [rec for _, rec, err in results if err is None]
    failures = {j: err for j, _, err in results if err is not None}
    return EnsembleResult(
        records=records,
        params=params,
        wall_time=time.perf_counter() - t0,
        workers=workers,
        failures=failures,
    )
