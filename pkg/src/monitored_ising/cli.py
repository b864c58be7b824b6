"""Command-line runner: ``monitored-ising <subcommand> [--config FILE] [flags]``.

Every run writes CSV tables, a JSON summary and ``manifest.json`` (config
echo, package version, SHA-256 of every other file, wall time, workers) into
a fresh output directory.

Exit codes: 0 success, 1 configuration, 2 numerical, 3 capacity, 4 I/O.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .config import SCHEMA, SUBCOMMANDS, ExperimentConfig, parse_config
from .errors import CapacityError, ConfigError, ContractError, NumericalError

OUTPUT_ROOT_ENV = "MONITORED_ISING_OUTPUT_ROOT"

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_CAPACITY, EXIT_IO = 0, 1, 2, 3, 4


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (complex, np.complexfloating)):
        return repr(complex(v))
    return str(v)


def csv_text(rows: list[dict], columns: list[str]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(r[c]) for c in columns])
    return buf.getvalue()


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (complex, np.complexfloating)):
        return {"re": float(obj.real), "im": float(obj.imag)}
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        return f if np.isfinite(f) else str(f)
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    return obj


def json_text(obj) -> str:
    return json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n"


# ---------------------------------------------------------------- runners
# Each runner returns ``{filename: text}`` for the files it produces.


def _protocol(cfg: ExperimentConfig, **over):
    from .trajectory import ProtocolParams

    p = cfg.params
    kw = dict(L=p["L"], Jx=p["Jx"], dt=p["dt"], steps=p["steps"], seed=cfg.seed, bc=p["bc"])
    kw.update(p_meas=p.get("p_meas", 0.0), p_site=p.get("p_site", 1.0), n_real=p.get("n_real", 1))
    kw.update(over)
    return ProtocolParams(**kw)


def run_trajectories(cfg: ExperimentConfig) -> dict[str, str]:
    from .stats import (
        Histogram,
        estimate_theta_E,
        natural_range,
        track_bimodal_peaks,
        track_mz_left_peak,
    )
    from .trajectory import run_ensemble

    params = _protocol(cfg)
    p = cfg.params
    ens = run_ensemble(params, workers=cfg.workers)
    if not ens.records:
        raise NumericalError(f"every trajectory failed: {next(iter(ens.failures.values()))}")
    ent = np.array([r.entropy for r in ens.records])
    ovl = np.array([r.overlap for r in ens.records])
    mz = np.array([r.magnetization.mean(axis=1) for r in ens.records])
    clicks = np.array([r.clicks for r in ens.records])
    n = len(ens.records)
    rows = [
        dict(
            step=t,
            t=t * params.dt,
            entropy_mean=ent[:, t].mean(),
            entropy_se=ent[:, t].std(ddof=1) / np.sqrt(n) if n > 1 else 0.0,
            overlap_mean=ovl[:, t].mean(),
            mz_mean=mz[:, t].mean(),
            clicks_mean=clicks[:, t].mean(),
        )
        for t in range(params.steps + 1)
    ]
    meta = dict(seed=cfg.seed, params=cfg.to_dict()["params"])
    samples = {
        "entropy": ens.entropy_samples(p["burn_in"]),
        "overlap": ens.overlap_samples(p["window"]),
        "magnetization": ens.magnetization_samples(p["window"]),
    }
    hists = {
        name: Histogram.from_samples(s, p["bins"], natural_range(name, params.L), **meta) for name, s in samples.items()
    }
    primary, secondary = track_bimodal_peaks(hists["overlap"])
    hist_cols = ["left", "right", "count", "density"]
    files = {
        "timeseries.csv": csv_text(
            rows, ["step", "t", "entropy_mean", "entropy_se", "overlap_mean", "mz_mean", "clicks_mean"]
        ),
    }
    for name, h in hists.items():
        files[f"hist_{name}.csv"] = csv_text(h.rows(), hist_cols)
    files["summary.json"] = json_text(
        dict(
            **meta,
            g=params.g,
            theta_E=estimate_theta_E(samples["entropy"]),
            overlap_primary=vars(primary),
            overlap_secondary=vars(secondary) if secondary else None,
            mz_left_peak=track_mz_left_peak(hists["magnetization"]),
            n_records=n,
            failures=ens.failures,
        )
    )
    return files


def run_noclick(cfg: ExperimentConfig) -> dict[str, str]:
    from .hilbert import zeno_state
    from .noclick import build_h_eff, evolve_noclick_effective, evolve_noclick_exact

    params = _protocol(cfg)
    psi0 = zeno_state(params.L)
    eff = evolve_noclick_effective(psi0, build_h_eff(params.L, params.Jx, params.gamma, params.bc), params.dt, params.steps)
    exact = evolve_noclick_exact(psi0, params)
    s_eff, s_exact = eff.entropies(), exact.entropies()
    o_eff, o_exact = eff.overlaps(), exact.overlaps()
    logw = exact.log_survival()
    rows = [
        dict(
            step=t,
            t=t * params.dt,
            entropy_effective=s_eff[t],
            entropy_exact=s_exact[t],
            overlap_effective=o_eff[t],
            overlap_exact=o_exact[t],
            log_survival_exact=logw[t],
        )
        for t in range(params.steps + 1)
    ]
    cols = list(rows[0])
    summary = dict(
        seed=cfg.seed,
        params=cfg.to_dict()["params"],
        g=params.g,
        max_entropy_difference=float(np.max(np.abs(s_eff - s_exact))),
    )
    return {"noclick.csv": csv_text(rows, cols), "summary.json": json_text(summary)}


def run_spectrum(cfg: ExperimentConfig) -> dict[str, str]:
    from .spectral import subradiant_scan

    p = cfg.params
    grid = np.linspace(p["g_min"], p["g_max"], p["n_g"])
    rows = subradiant_scan(p["L"], grid, p["Jx"], p["bc"])
    summary = dict(seed=cfg.seed, params=cfg.to_dict()["params"], n_rows=len(rows))
    return {
        "spectrum.csv": csv_text(rows, ["g", "omega_sub", "gamma_sub", "O_sub_T", "f"]),
        "summary.json": json_text(summary),
    }


def run_fermion(cfg: ExperimentConfig) -> dict[str, str]:
    from .freefermion import lambda_k, spectrum_table, subradiant_energy, vacuum_energy

    p = cfg.params
    rows = [row for g in p["g"] for row in spectrum_table(g, p["Jx"], p["n_k"])]
    per_g = []
    for g in p["g"]:
        lam = complex(lambda_k(np.pi / 2, g, p["Jx"]))
        per_g.append(
            dict(
                g=g,
                delta_half_pi=lam.real,
                sigma_half_pi=lam.imag,
                gapped=abs(lam.real) > 1e-12,
                eps_sub=subradiant_energy(g, p["Jx"]),
                eps_vac=vacuum_energy(g, p["Jx"]),
            )
        )
    summary = dict(seed=cfg.seed, params=cfg.to_dict()["params"], points=per_g)
    return {
        "lambda.csv": csv_text(rows, ["k", "re_lambda", "im_lambda", "g"]),
        "summary.json": json_text(summary),
    }


def run_lindblad(cfg: ExperimentConfig) -> dict[str, str]:
    from .hilbert import zeno_state
    from .lindblad import evolve_lindblad, maximally_mixed, pure_density_matrix

    p = cfg.params
    n_steps = max(1, int(np.ceil(p["t_final"] / p["dt"] - 1e-9)))
    h = p["t_final"] / n_steps
    idx = np.unique(np.round(np.linspace(0, n_steps, p["n_out"])).astype(int))
    series = evolve_lindblad(
        pure_density_matrix(zeno_state(p["L"])),
        p["t_final"],
        p["dt"],
        p["Jx"],
        p["gamma"],
        p["bc"],
        times=idx * h,
    )
    dev = float(np.max(np.abs(series.states[-1] - maximally_mixed(p["L"]))))
    summary = dict(
        seed=cfg.seed,
        params=cfg.to_dict()["params"],
        final_deviation_from_mixed=dev,
        min_eigenvalue=series.min_eigenvalue,
    )
    return {"lindblad.csv": csv_text(series.rows(), ["t", "trace", "purity", "mz"]), "summary.json": json_text(summary)}


def _transition(args):
    from .spectral import transition_scan

    L, Jx, grid, g_tol, bc = args
    return transition_scan(L, Jx, grid, g_tol=g_tol, bc=bc)


def run_scan(cfg: ExperimentConfig) -> dict[str, str]:
    from .stats import fit_linear_in_inverse

    p = cfg.params
    grid = np.linspace(p["g_min"], p["g_max"], p["n_g"])
    jobs = [(L, p["Jx"], grid, p["g_tol"], p["bc"]) for L in p["sizes"]]
    if cfg.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(_transition, jobs))
    else:
        results = [_transition(j) for j in jobs]
    rows = [
        dict(
            L=r.L,
            g_c=r.g_c,
            g_lo=r.bracket[0],
            g_hi=r.bracket[1],
            gamma_sub=r.above.gamma_sub,
            gamma_partner=r.above.gamma_partner,
        )
        for r in results
    ]
    summary = dict(seed=cfg.seed, params=cfg.to_dict()["params"])
    if len(results) >= 3:
        summary["fit"] = fit_linear_in_inverse([r.L for r in results], [r.g_c for r in results]).to_dict()
    return {
        "transitions.csv": csv_text(rows, ["L", "g_c", "g_lo", "g_hi", "gamma_sub", "gamma_partner"]),
        "summary.json": json_text(summary),
    }


def theta_curves(cfg: ExperimentConfig) -> dict[float, tuple[np.ndarray, np.ndarray]]:
    """``Theta_E(g)`` for each ``p_site``; curve ``n`` uses master seed ``seed + n``."""
    from .stats import estimate_theta_E
    from .trajectory import ProtocolParams, run_ensemble

    p = cfg.params
    curves = {}
    for n, ps in enumerate(p["p_sites"]):
        thetas = []
        for g in p["g"]:
            params = ProtocolParams.from_g(
                g,
                L=p["L"],
                Jx=p["Jx"],
                dt=p["dt"],
                p_site=ps,
                steps=p["steps"],
                n_real=p["n_real"],
                seed=cfg.seed + n,
                bc=p["bc"],
            )
            thetas.append(estimate_theta_E(run_ensemble(params, workers=cfg.workers).entropy_samples()))
        curves[ps] = (np.array(p["g"]), np.array(thetas))
    return curves


def run_collapse(cfg: ExperimentConfig) -> dict[str, str]:
    from .stats import collapse_check

    curves = theta_curves(cfg)
    rows = [
        dict(p_site=ps, g=g, x=g * ps, theta_E=th) for ps, (gs, ths) in curves.items() for g, th in zip(gs, ths)
    ]
    res = collapse_check(curves)
    summary = dict(
        seed=cfg.seed,
        params=cfg.to_dict()["params"],
        residual=res.residual,
        residual_unscaled=res.residual_unscaled,
        peak=res.peak,
        relative=res.relative,
        x_range=res.x_range,
    )
    return {"theta.csv": csv_text(rows, ["p_site", "g", "x", "theta_E"]), "summary.json": json_text(summary)}


RUNNERS = {
    "trajectories": run_trajectories,
    "noclick": run_noclick,
    "spectrum": run_spectrum,
    "fermion": run_fermion,
    "lindblad": run_lindblad,
    "scan": run_scan,
    "collapse": run_collapse,
}


# ---------------------------------------------------------------- plumbing


def resolve_output_dir(cfg: ExperimentConfig) -> Path:
    """``out`` if set, else ``<root>/<subcommand>-seed<seed>``; relative paths sit under the root."""
    root = Path(os.environ.get(OUTPUT_ROOT_ENV, "runs"))
    out = Path(cfg.out) if cfg.out else Path(f"{cfg.subcommand}-seed{cfg.seed}")
    return out if out.is_absolute() else root / out


def write_outputs(out_dir: Path, files: dict[str, str], cfg: ExperimentConfig, wall_time: float) -> dict:
    if out_dir.exists() and (not out_dir.is_dir() or any(out_dir.iterdir())):
        raise FileExistsError(f"output directory {out_dir} exists and is not empty")
    out_dir.mkdir(parents=True, exist_ok=True)
    checksums = {}
    for name, text in files.items():
        data = text.encode("utf-8")
        (out_dir / name).write_bytes(data)
        checksums[name] = hashlib.sha256(data).hexdigest()
    manifest = dict(
        config=cfg.to_dict(),
        config_text=cfg.to_text(),
        version=__version__,
        files=checksums,
        wall_time=wall_time,
        workers=cfg.workers,
    )
    (out_dir / "manifest.json").write_text(json_text(manifest), encoding="utf-8")
    return manifest


def run(cfg: ExperimentConfig) -> tuple[Path, dict]:
    t0 = time.perf_counter()
    files = RUNNERS[cfg.subcommand](cfg)
    out_dir = resolve_output_dir(cfg)
    return out_dir, write_outputs(out_dir, files, cfg, time.perf_counter() - t0)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="monitored-ising", description="Monitored Ising chain experiments.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="subcommand", metavar="SUBCOMMAND")
    for name in SUBCOMMANDS:
        sp = sub.add_parser(name, help=f"run the {name} experiment")
        sp.add_argument("--config", help="key = value config file")
        for key in SCHEMA["run"]:
            sp.add_argument(f"--{key}", dest=f"opt_{key}", metavar="VALUE")
        for key in SCHEMA[name]:
            flags = {f"--{key}", f"--{key.replace('_', '-')}"}
            sp.add_argument(*sorted(flags), dest=f"opt_{key}", metavar="VALUE")
    return parser


def config_from_args(argv: list[str] | None) -> ExperimentConfig:
    args = build_parser().parse_args(argv)
    if args.subcommand is None:
        raise ConfigError(f"a subcommand is required (one of {', '.join(SUBCOMMANDS)})")
    text, source = "", "<config>"
    if args.config:
        try:
            text = Path(args.config).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config file {args.config}: {exc}") from exc
        source = args.config
    overrides = {k[4:]: v for k, v in vars(args).items() if k.startswith("opt_") and v is not None}
    return parse_config(args.subcommand, text, source, overrides)


def main(argv: list[str] | None = None) -> int:
    try:
        cfg = config_from_args(argv)
        out_dir, manifest = run(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except CapacityError as exc:
        print(f"capacity error: {exc}", file=sys.stderr)
        return EXIT_CAPACITY
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ContractError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    print(f"wrote {len(manifest['files']) + 1} files to {out_dir}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
