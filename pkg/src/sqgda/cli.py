"""``sqgda`` command-line entry point.

Exit status: 0 success, 1 invalid configuration, 2 numerical divergence,
3 I/O failure.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import io
from .assimilation import (
    SERIES_COLUMNS,
    SWEEP_COLUMNS,
    TwinExperimentConfig,
    default_seed,
    gamma_sweep,
    run_twin,
)
from .dynamics import ForcingSpec, PhysicalParams, SQGModel, StepperConfig, run
from .errors import CFLError, ConfigurationError, DivergenceError, InvalidInputError, ResolutionError
from .observation import make_operator
from .properties import PropertySuiteConfig, operator_family, verify_properties
from .spectral import GridSpec, hdot_norm, l2_norm, lp_norm, random_field
from .streamfunction import StreamExtensionSpec, export_slices, gradient_error_exact, quadrature_report

EXIT_OK, EXIT_CONFIG, EXIT_DIVERGED, EXIT_IO = 0, 1, 2, 3

DEFAULT_PROP_RESOLUTIONS = {
    "volume": (9, 16, 36, 64),
    "shifted_volume": (9, 16, 36, 64),
    "rough_modal": (4, 8, 16, 32),
    "smooth_modal": (2, 3, 4, 5),
}


class RunFailed(Exception):
    def __init__(self, message, code):
        super().__init__(message)
        self.code = code


def build_grid(cfg: dict) -> GridSpec:
    return GridSpec(cfg["grid.nx"], cfg["grid.ny"])


def build_params(cfg: dict, gamma: float | None = None, mu: float | None = None) -> PhysicalParams:
    forcing = ForcingSpec.shell(cfg["forcing.amplitude"], (cfg["forcing.kx"], cfg["forcing.ky"]))
    return PhysicalParams(
        kappa=cfg["params.kappa"],
        gamma=cfg["params.gamma"] if gamma is None else gamma,
        mu=cfg["params.mu"] if mu is None else mu,
        forcing=forcing,
    )


def build_experiment(cfg: dict, seed: int) -> TwinExperimentConfig:
    grid = build_grid(cfg)
    params = build_params(cfg)
    params.forcing.to_field(grid)  # band check up front
    return TwinExperimentConfig(
        grid=grid,
        params=params,
        observation=make_operator(cfg["obs.kind"], cfg["obs.n"], grid),
        spin_up_time=cfg["twin.t_spin"],
        assimilation_time=cfg["twin.t_assim"],
        dt=cfg["twin.dt"],
        eta0=cfg["twin.eta0"],
        record_cadence=cfg["output.cadence"],
        sigma=cfg["twin.sigma"],
        seed=seed,
        tail_fraction=cfg["twin.tail_fraction"],
        linear_only=cfg["twin.linear_only"],
    )


# ------------------------------------------------------------ commands


def cmd_grid_info(cfg, args, manifest):
    g = build_grid(cfg)
    for k, v in g.describe().items():
        print(f"{k:>16}: {v}")
    return EXIT_OK


def cmd_simulate(cfg, args, manifest):
    grid = build_grid(cfg)
    params = build_params(cfg, mu=0.0)
    dt = cfg["twin.dt"]
    model = SQGModel(grid, params, StepperConfig(dt, linear_only=cfg["twin.linear_only"]))
    state = model.initial_state(theta=default_seed(grid, args.seed))
    every = max(1, round(cfg["output.cadence"] / dt))
    snap_every = round(cfg["output.snapshot_every"] / dt) if cfg["output.snapshot_every"] > 0 else 0
    out = manifest.out_dir

    def snapshot(s, i):
        if snap_every and i % snap_every == 0:
            path = out / f"snapshot_{i // snap_every:05d}.sqgf"
            io.write_snapshot(path, s.theta.physical(), s.time, params.kappa, params.gamma)
            manifest.add(path)

    mons = {
        "theta_l2": lambda s: l2_norm(s.theta),
        "theta_h1": lambda s: hdot_norm(s.theta, 1.0),
        "theta_linf": lambda s: lp_norm(s.theta, math.inf),
    }
    cols = list(mons)
    try:
        traj = run(model, state, cfg["simulate.t_end"], monitors=mons, every=every, callbacks=(snapshot,))
    except (CFLError, DivergenceError) as err:
        p = err.partial
        manifest.add(io.write_series_csv(out / "series.csv", p.times, p.series, cols))
        raise RunFailed(f"{err} (last good time {p.state.time:.6g})", EXIT_DIVERGED) from None
    manifest.add(io.write_series_csv(out / "series.csv", traj.times, traj.series, cols))
    print(f"simulated to t = {traj.state.time:g} in {traj.steps} steps; final ||theta||_L2 = {traj.series['theta_l2'][-1]:.6g}")
    return EXIT_OK


def cmd_twin(cfg, args, manifest):
    exp = build_experiment(cfg, args.seed)
    d = run_twin(exp)
    out = manifest.out_dir
    cols = [c for c in SERIES_COLUMNS if c in d.series]
    manifest.add(io.write_series_csv(out / "twin_series.csv", d.times, d.series, cols))
    fit = d.fits.get("err_l2")
    summary = {
        "final_relative_error": d.final_relative_error,
        "synchronized": d.synchronized,
        "fitted_rate": math.nan if fit is None else fit.rate,
        "r_squared": math.nan if fit is None else fit.r_squared,
        "theta_l2_sup": d.bounds.theta_l2,
        "spinup_drift": d.spin.drift,
        "spinup_stationary": d.spin.stationary,
        "rho": d.bounds.rho,
        "r1": d.bounds.r1,
        "r2": d.bounds.r2(),
    }
    manifest.add(io.write_csv(out / "twin_summary.csv", list(summary), [summary]))
    print(f"final relative L2 error {d.final_relative_error:.3e}; synchronized = {d.synchronized}")
    if fit is not None:
        print(f"fitted L2 rate {fit.rate:.6g} (R^2 = {fit.r_squared:.5f}) over t in [{fit.t_start:g}, {fit.t_end:g}]")
    for e in d.conditions.entries:
        print(f"  condition {e.name}: {e.value:.4g} satisfied={e.satisfied}")
    print(f"  ({d.conditions.caveat})")
    if d.failed:
        raise RunFailed(f"{d.failure} (last good time {d.times[-1]:.6g})", EXIT_DIVERGED)
    return EXIT_OK


def cmd_sweep(cfg, args, manifest):
    exp = build_experiment(cfg, args.seed)
    threads = args.threads or os.cpu_count() or 1
    results = gamma_sweep(
        exp, cfg["sweep.gammas"], cfg["sweep.mus"], cfg["sweep.resolutions"], cfg["obs.kind"], threads
    )
    out = manifest.out_dir
    summary = []
    for gamma, res in results.items():
        manifest.add(io.write_csv(out / f"sweep_gamma{gamma:g}.csv", SWEEP_COLUMNS, [r.as_dict() for r in res.rows]))
        n_star = res.minimal_resolution()
        summary.append(
            {
                "gamma": gamma,
                "mu": max(r.mu for r in res.rows),
                "n_star": -1 if n_star is None else n_star,
                "theta_inf": res.theta_inf,
                "scaling_reference": res.scaling_reference,
            }
        )
        print(f"gamma = {gamma:g}: N* = {n_star}  (Theta_inf/kappa)^(1/(gamma-1)) = {res.scaling_reference:.4g}")
    manifest.add(io.write_csv(out / "sweep_summary.csv", list(summary[0]), summary))
    return EXIT_OK


def cmd_props(cfg, args, manifest):
    grid = build_grid(cfg)
    kind = cfg["obs.kind"]
    if kind not in DEFAULT_PROP_RESOLUTIONS:
        raise ConfigurationError(f"unknown observation kind {kind!r}")
    res = cfg["props.resolutions"] or DEFAULT_PROP_RESOLUTIONS[kind]
    rng = np.random.default_rng(args.seed)
    fields = [random_field(grid, rng, kmax=cfg["props.kmax"], slope=1.5) for _ in range(cfg["props.n_fields"])]
    report = verify_properties(operator_family(kind, res, grid), fields, PropertySuiteConfig(tol=cfg["props.tol"]))
    cols = ["property_id", "h", "lhs", "rhs", "ratio", "fitted_slope", "fitted_constant", "pass"]
    rows = [{**r, "pass": r["passed"]} for r in report.rows()]
    manifest.add(io.write_csv(manifest.out_dir / "properties.csv", cols, rows))
    print(report.summary())
    return EXIT_OK


def cmd_stream_diag(cfg, args, manifest):
    grid = build_grid(cfg)
    spec = StreamExtensionSpec.uniform(cfg["stream.z_max"], cfg["stream.levels"])
    rng = np.random.default_rng(args.seed)
    rows = []
    for i in range(cfg["stream.n_fields"]):
        z = random_field(grid, rng, kmax=cfg["stream.kmax"])
        exact = gradient_error_exact(z)
        q = quadrature_report(z, spec)
        if i == 0 and cfg["stream.export_z"]:
            for path in export_slices(z, cfg["stream.export_z"], manifest.out_dir, cfg["params.kappa"], cfg["params.gamma"]):
                manifest.add(path)
        rows.append(
            {
                "index": i,
                "exact": exact,
                "quadrature": q.value,
                "rel_diff": abs(q.value - exact) / exact,
                "error_estimate": q.relative_error_estimate,
            }
        )
    manifest.add(io.write_csv(manifest.out_dir / "stream_diag.csv", list(rows[0]), rows))
    worst = max(r["rel_diff"] for r in rows)
    print(f"{len(rows)} fields: max relative difference quadrature vs pairing = {worst:.3e}")
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "twin": cmd_twin,
    "sweep": cmd_sweep,
    "props": cmd_props,
    "stream-diag": cmd_stream_diag,
    "grid-info": cmd_grid_info,
}


def _failure_manifest(args, failure: str):
    out = Path(args.out or "out")
    try:
        out.mkdir(parents=True, exist_ok=True)
        io.RunManifest(args.command, {}, "", args.seed, out).finish(failure)
    except OSError:
        pass


def make_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="sqgda", description="SQG simulation and nudging data assimilation")
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("--config", required=True, help="flat key = value config file")
    ap.add_argument("--out", default=None, help="output directory (default: output.dir, else ./out)")
    ap.add_argument("--seed", type=int, default=0, help="seed for randomized initial data (default 0)")
    ap.add_argument("--threads", type=int, default=0, help="sweep worker processes (default: all cores)")
    return ap


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    if args.seed < 0:
        print("error: --seed must be a non-negative integer", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg, digest = io.load_config(args.config)
    except ConfigurationError as err:
        print(f"config error: {err}", file=sys.stderr)
        if args.command != "grid-info":
            _failure_manifest(args, f"configuration error: {err}")
        return EXIT_CONFIG
    except OSError as err:
        print(f"cannot read config: {err}", file=sys.stderr)
        return EXIT_IO

    manifest = None
    if args.command != "grid-info":
        out = Path(args.out or cfg["output.dir"])
        try:
            out.mkdir(parents=True, exist_ok=True)
        except OSError as err:
            print(f"cannot create output directory: {err}", file=sys.stderr)
            return EXIT_IO
        manifest = io.RunManifest(args.command, cfg, digest, args.seed, out)

    code, failure = EXIT_OK, None
    try:
        code = COMMANDS[args.command](cfg, args, manifest)
    except (ConfigurationError, InvalidInputError, ResolutionError) as err:
        code, failure = EXIT_CONFIG, f"configuration error: {err}"
    except (CFLError, DivergenceError) as err:
        last = getattr(err, "last_good_time", getattr(err, "time", math.nan))
        code, failure = EXIT_DIVERGED, f"numerical divergence: {err} (last good time {last:.6g})"
    except RunFailed as err:
        code, failure = err.code, f"numerical divergence: {err}"
    except OSError as err:
        code, failure = EXIT_IO, f"I/O error: {err}"
    if failure:
        print(failure, file=sys.stderr)
    if manifest is not None:
        try:
            manifest.finish(failure)
        except OSError as err:
            print(f"cannot write manifest: {err}", file=sys.stderr)
            return EXIT_IO
    return code


if __name__ == "__main__":
    sys.exit(main())
