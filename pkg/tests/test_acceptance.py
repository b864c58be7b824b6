"""End-to-end reproduction checks, one test per acceptance criterion.

Each test records a ``PASS``/``FAIL`` line that is printed in the terminal
summary.  Stochastic criteria use the default protocol (L=8, Jx=1, dt=1e-2,
p_site=1, 100 realizations, 2000 steps) with fixed seeds; ensembles are cached
so that criteria sharing a run do not repeat it.
"""

import subprocess
import sys
import time
from functools import lru_cache
from pathlib import Path

import numpy as np
import pytest
from conftest import ACCEPTANCE_LINES
from scipy.optimize import linear_sum_assignment

from monitored_ising.freefermion import (
    G_C,
    critical_scaling_exponent,
    lambda_k,
    many_body_energies,
    subradiant_energy,
)
from monitored_ising.hilbert import zeno_state
from monitored_ising.lindblad import evolve_lindblad, pure_density_matrix
from monitored_ising.noclick import build_h_eff, evolve_noclick_effective, evolve_noclick_exact
from monitored_ising.spectral import accurate_eigenvalues, sector_indices, subradiant, transition_scan
from monitored_ising.stats import (
    Histogram,
    collapse_check,
    estimate_theta_E,
    fit_linear_in_inverse,
    fit_power_law,
    track_bimodal_peaks,
)
from monitored_ising.trajectory import ProtocolParams, run_ensemble, run_trajectory

pytestmark = pytest.mark.slow

THETA_GRID = (0.25, 0.5, 1.0, 2.0, 4.0, 8.0)
P_SITES = (0.25, 0.5, 1.0)
SEED = 2024
TESTS = Path(__file__).parent


def report(n: int, ok: bool, detail: str) -> None:
    line = f"{'PASS' if ok else 'FAIL'} criterion {n:2d}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


@lru_cache(maxsize=None)
def ensemble(g: float, p_site: float = 1.0):
    # one master seed per p_site curve
    seed = SEED + P_SITES.index(p_site) if p_site in P_SITES else SEED
    return run_ensemble(ProtocolParams.from_g(g, p_site=p_site, seed=seed))


@lru_cache(maxsize=None)
def theta(g: float, p_site: float = 1.0) -> float:
    return estimate_theta_E(ensemble(g, p_site).entropy_samples())


def test_criterion_01_unitary_baseline():
    t0 = time.perf_counter()
    S = run_trajectory(ProtocolParams(p_meas=0.0)).entropy
    elapsed = time.perf_counter() - t0
    peak = int(np.argmax(S))
    ok = S.min() >= 0 and S.max() <= 1 + 1e-9 and S.max() > 0.5 and S[peak:].min() < 0.1 and elapsed < 10
    report(1, ok, f"S_E in [{S.min():.3g}, {S.max():.6f}], returns to {S[peak:].min():.3g}, {elapsed:.1f} s")


def test_criterion_02_theta_non_monotonic():
    t0 = time.perf_counter()
    values = [theta(g) for g in THETA_GRID]
    elapsed = time.perf_counter() - t0
    arg = THETA_GRID[int(np.argmax(values))]
    ok = arg in (0.5, 1.0, 2.0) and theta(8.0) < theta(1.0) and elapsed < 1800
    table = ", ".join(f"{g:g}:{v:.3f}" for g, v in zip(THETA_GRID, values))
    report(2, ok, f"Theta_E {{{table}}}, argmax g={arg:g}, {elapsed:.0f} s")


def test_criterion_03_collapse():
    curves = {p: (np.array(THETA_GRID), np.array([theta(g, p) for g in THETA_GRID])) for p in P_SITES}
    res = collapse_check(curves)
    ok = res.relative < 0.2 and res.residual_unscaled > res.residual
    report(
        3,
        ok,
        f"residual {res.residual:.3f} = {100 * res.relative:.1f}% of peak {res.peak:.3f} "
        f"on x in [{res.x_range[0]:g}, {res.x_range[1]:g}]; against g {res.residual_unscaled:.3f}",
    )


def test_criterion_04_overlap_bimodality():
    details, ok = [], True
    for g in (5.0, 6.0, 8.0, 12.0):
        h = Histogram.from_samples(ensemble(g).overlap_samples(), bins=50, range=(0.0, 1.0))
        _, second = track_bimodal_peaks(h)
        o_sub = subradiant(8, g).overlap_T
        if second is None:
            ok = False
            details.append(f"g={g:g}: no secondary (O_sub_T {o_sub:.3f})")
            continue
        ok &= abs(second.position - o_sub) <= 0.1
        if g == 8.0:
            ok &= second.position > 0.5
        details.append(f"g={g:g}: peak {second.position:.3f} vs O_sub_T {o_sub:.3f}")
    report(4, ok, "; ".join(details))


def test_criterion_05_transition_extrapolation():
    t0 = time.perf_counter()
    sizes = (6, 8, 10, 12)
    g_c = [transition_scan(L, g_grid=np.linspace(1.0, 8.0, 29)).g_c for L in sizes]
    fit = fit_linear_in_inverse(sizes, g_c)
    A, B = fit.coefficients["A"], fit.coefficients["B"]
    elapsed = time.perf_counter() - t0
    ok = 3.3 <= A <= 3.9 and 3.5 <= B <= 5.5 and elapsed < 1800
    gc_text = ", ".join(f"{L}:{v:.4f}" for L, v in zip(sizes, g_c))
    report(5, ok, f"g_c {{{gc_text}}} -> A={A:.3f}, B={B:.3f}, {elapsed:.0f} s")


def test_criterion_06_f_quadratic():
    g = np.geomspace(40, 400, 9)
    f = [subradiant(6, x).f for x in g]
    slope = fit_power_law(g, f).coefficients["exponent"]
    report(6, abs(slope - 2.0) <= 0.1, f"log-log slope of f {slope:.4f}")


def test_criterion_07_overlap_size_scaling():
    sizes = np.array([6, 8, 10, 12])
    o = [subradiant(int(L), 2.0).overlap_T for L in sizes]
    beta = -fit_power_law(sizes, o).coefficients["exponent"]
    report(7, abs(beta - 0.049) <= 0.02, f"g=2 O_sub_T {np.round(o, 4).tolist()} -> beta={beta:.4f}")


def test_criterion_08_quasiparticle_spectrum():
    below = max(
        abs(complex(lambda_k(np.pi / 2, g)) - 2 * np.sqrt(1 - (g / G_C) ** 2)) for g in np.linspace(0.1, 3.9, 20)
    )
    above = max(
        abs(complex(lambda_k(np.pi / 2, g)) - (-2j * np.sqrt((g / G_C) ** 2 - 1))) for g in np.linspace(4.1, 40, 20)
    )
    expo = critical_scaling_exponent().coefficients["exponent"]
    ok = below <= 1e-12 and above <= 1e-12 and abs(expo - 0.5) <= 0.02
    report(8, ok, f"gap-law error {below:.1e}, decay-law error {above:.1e}, exponent {expo:.5f}")


def test_criterion_09_free_fermion_oracle():
    t0 = time.perf_counter()
    worst = 0.0
    for L in (4, 6, 8):
        idx = sector_indices(L, 1)
        for g in (0.5, 1.0, 4.0, 8.0):
            M = build_h_eff(L, 1.0, g, "periodic").matrix[np.ix_(idx, idx)]
            E = accurate_eigenvalues(M)
            _, F = many_body_energies(g, 1.0, L)
            c = np.abs(E[:, None] - F[None, :])
            r, k = linear_sum_assignment(c)
            worst = max(worst, float(c[r, k].max()))
    elapsed = time.perf_counter() - t0
    report(9, worst <= 1e-8 and elapsed < 300, f"max level mismatch {worst:.2e}, {elapsed:.1f} s")


def test_criterion_10_subradiant_asymptotics():
    small_g, large_g = 0.05 * G_C, 20 * G_C
    small, large = subradiant_energy(small_g), subradiant_energy(large_g)
    t_small, t_large = 1 - 1j * small_g / G_C, -2j * G_C / large_g
    e_small = abs(small - t_small) / abs(t_small)
    e_large = abs(large - t_large) / abs(t_large)
    report(
        10,
        e_small <= 0.02 and e_large <= 0.02,
        f"g/g_c=0.05: {small:.5f} vs {t_small:.5f} ({100 * e_small:.2f}%); "
        f"g/g_c=20: {large:.5f} vs {t_large:.5f} ({100 * e_large:.1f}%)",
    )


def test_criterion_11_lindblad():
    rho0 = pure_density_matrix(zeno_state(2))
    final = evolve_lindblad(rho0, 50.0, 0.01, Jx=1.0, gamma=1.0).states[-1]
    dev = float(np.max(np.abs(final - np.eye(4) / 4)))
    gamma, dt, steps = 1.0, 0.01, (100, 500, 1000)
    params = ProtocolParams(L=2, dt=dt, p_meas=gamma * dt, steps=1000, n_real=2000, seed=SEED)
    ens = run_ensemble(params, snapshot_steps=steps)
    series = evolve_lindblad(rho0, 10.0, dt, gamma=gamma, times=[1.0, 5.0, 10.0])
    z = []
    for k, rho in zip(steps, series.states):
        mean, se = ens.mean_density_matrix(k)
        z.append(float(np.max(np.abs(mean - rho) / np.maximum(se, 1e-15))))
    ok = dev < 1e-4 and max(z) <= 3
    report(11, ok, f"max |rho(50) - I/4| = {dev:.3g}; unraveling max deviation {max(z):.2f} standard errors")


def test_criterion_12_effective_hamiltonian_validity():
    worst = {}
    for g in (0.1, 0.25, 0.5, 1.0):
        params = ProtocolParams.from_g(g, steps=1000)
        exact = evolve_noclick_exact(zeno_state(8), params).entropies()
        eff = evolve_noclick_effective(zeno_state(8), build_h_eff(8, 1.0, params.gamma), params.dt, 1000).entropies()
        worst[g] = float(np.max(np.abs(exact - eff)))
    report(12, max(worst.values()) <= 0.02, "max |dS_E| " + ", ".join(f"g={g:g}: {v:.2e}" for g, v in worst.items()))


PROPERTY_SUITES = [
    "test_trajectory.py::test_branch_probabilities_sum_to_one",
    "test_trajectory.py::test_outcome_frequencies_match_branch_enumeration",
    "test_hilbert.py::test_hamiltonian_conserves_parity",
    "test_noclick.py::test_parity_conserved_from_zeno_state",
    "test_spectral.py::test_biorthogonality_and_reconstruction",
    "test_spectral.py::test_spectrum_properties",
    "test_stats.py::test_histogram_normalization",
    "test_trajectory.py::test_worker_count_does_not_change_records",
]


def test_criterion_13_property_suites_standalone():
    codes = []
    for _ in range(2):
        proc = subprocess.run(
            [sys.executable, "-m", "pytest", "-q", "-p", "no:cacheprovider", *PROPERTY_SUITES],
            cwd=TESTS,
            capture_output=True,
            text=True,
        )
        codes.append(proc.returncode)
    last = proc.stdout.strip().splitlines()[-1] if proc.stdout.strip() else proc.stderr[-200:]
    report(13, codes == [0, 0], f"{len(PROPERTY_SUITES)} suites, two standalone runs: {last}")
