"""Command-line entry point ``nskper``.

Exit codes: 0 success, 2 validation error, 3 numerical divergence (including
vacuum), 4 I/O error.  Data files are deterministic for a fixed config; only
``manifest.json`` carries timestamps.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
import warnings
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, ExperimentConfig, load_config
from .diagnostics import EnergyCouplings, decay_fit, inequality_monitor, perturbation_monitor
from .integrator import IntegrationError, IntegratorConfig, perturbation_evolution, symmetrize
from .io import RunManifest, SnapshotError, read_state, write_state
from .model import ModelError, State, VacuumError
from .periodic import (
    PeriodicTrajectory,
    TripleNormSpec,
    contraction_window,
    fixed_point_solve,
    psi_map,
    trajectory_residual,
    triple_norm,
)
from .semigroup import FloorTimeError, decay_experiment, floor_time, gaussian_bump

__all__ = ["main", "run_semigroup_decay", "run_periodic_solve", "run_stability", "run_energy_check"]

EXIT_OK, EXIT_VALIDATION, EXIT_DIVERGENCE, EXIT_IO = 0, 2, 3, 4

log = logging.getLogger("nskper")


class DivergedRun(RuntimeError):
    pass


def _dump(path: Path, obj) -> Path:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")
    return path


def _write_csv(path: Path, header, rows) -> Path:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(x)) for x in row])
    return path


# -- experiments ---------------------------------------------------------------


def run_semigroup_decay(cfg: ExperimentConfig, out: Path) -> list[Path]:
    grid, rp = cfg.make_grid(), cfg.reform_params()
    d = cfg.decay
    t_star = floor_time(grid, rp)
    if d.t_max_fraction > 1 or d.window[1] > 1:
        raise FloorTimeError(t_star, t_star * max(d.t_max_fraction, d.window[1]))
    times = np.geomspace(d.t_min_fraction * t_star, d.t_max_fraction * t_star, d.n_times)
    res = decay_experiment(gaussian_bump(grid, d.width), times, rp)
    window = (d.window[0] * t_star, d.window[1] * t_star)
    fits = {}
    for name, series in res.norms.items():
        p, r = decay_fit(res.times, series, window)
        fits[name] = {"exponent": p, "residual": r, "theory": res.theory[name]}
    summary = {
        "n": grid.n,
        "points_per_dim": grid.points_per_dim,
        "length": grid.length,
        "t_star": t_star,
        "window": list(window),
        "fits": fits,
        "gradient_gain": fits["grad_sigma"]["exponent"] - fits["sigma"]["exponent"],
        "gradient_gain_v": fits["grad_v"]["exponent"] - fits["v"]["exponent"],
    }
    cols = ("sigma", "grad_sigma", "grad2_sigma", "v", "grad_v")
    rows = zip(res.times, *(res.norms[c] for c in cols))
    return [
        _write_csv(out / "decay.csv", ("t",) + cols, rows),
        _dump(out / "decay_summary.json", summary),
    ]


def _solve(cfg: ExperimentConfig, samples: int | None = None):
    grid, rp, fp = cfg.make_grid(), cfg.reform_params(), cfg.fluid_params()
    if samples is not None:
        cfg = replace(cfg, forcing=replace(cfg.forcing, samples=samples))
    forcing = cfg.make_forcing(grid)
    spec = TripleNormSpec(cfg.solver.N)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        traj, trace = fixed_point_solve(
            forcing, rp, fp, spec, cfg.solver.tol, cfg.solver.max_iter, literal_nu=cfg.model.literal_nu
        )
    return traj, trace, forcing, spec


def _save_trajectory(traj: PeriodicTrajectory, out: Path) -> list[Path]:
    files = []
    for j in range(traj.n_samples):
        files.append(write_state(out / f"traj_{j:04d}.nskf", traj.state(j)))
    meta = {"period": traj.period, "samples": traj.n_samples, "files": [f.name for f in files]}
    files.append(_dump(out / "trajectory.json", meta))
    return files


def load_trajectory(directory) -> PeriodicTrajectory:
    directory = Path(directory)
    try:
        meta = json.loads((directory / "trajectory.json").read_text())
    except (OSError, ValueError) as exc:
        raise SnapshotError(f"cannot read periodic trajectory in {directory}: {exc}") from exc
    states = [read_state(directory / name) for name in meta["files"]]
    grid = states[0].grid
    return PeriodicTrajectory(
        grid, float(meta["period"]), np.stack([s.sigma for s in states]), np.stack([s.v for s in states])
    )


def run_periodic_solve(cfg: ExperimentConfig, out: Path) -> list[Path]:
    rp, fp = cfg.reform_params(), cfg.fluid_params()
    try:
        traj, trace, forcing, spec = _solve(cfg)
    except VacuumError as exc:
        trace = getattr(exc, "trace", None)
        if trace is not None:
            _dump(out / "convergence.json", trace.to_dict())
        raise
    report = trace.to_dict()
    report["window"] = contraction_window(trace)
    files = [_dump(out / "convergence.json", report)]
    if not trace.converged:
        raise DivergedRun(f"fixed-point iteration did not converge (last ratio {trace.last_ratio:.3g})")
    r1, r2 = trajectory_residual(traj, forcing, rp, fp, cfg.model.literal_nu)
    report["fixed_point_residual"] = triple_norm(traj - psi_map(traj, forcing, rp, fp, cfg.model.literal_nu), spec)
    report["triple_norm"] = triple_norm(traj, spec)
    report["pde_residual_max"] = float(max(r1.max(), r2.max()))
    _dump(out / "convergence.json", report)
    files.append(_write_csv(out / "residual.csv", ("t", "r_sigma", "r_v"), zip(traj.times, r1, r2)))
    files += _save_trajectory(traj, out)
    return files


def random_perturbation(grid, amplitude: float, seed: int, max_mode: int = 2) -> State:
    """Smooth reflection-symmetric perturbation with grid sup norm ``amplitude``."""
    if amplitude == 0:
        return State.zeros(grid)
    rng = np.random.default_rng(seed)
    keep = np.all(np.abs(grid.mode_index) <= max_mode, axis=0)
    s = grid.inverse(np.where(keep, grid.forward(rng.standard_normal(grid.shape)), 0))
    v = grid.inverse(np.where(keep, grid.forward(rng.standard_normal((grid.n,) + grid.shape)), 0))
    s, v = symmetrize(grid, s, v)
    scale = max(np.max(np.abs(s)), np.max(np.abs(v)))
    return State.from_physical(grid, amplitude * s / scale, amplitude * v / scale)


def stability_run(base: PeriodicTrajectory, cfg: ExperimentConfig, amplitude: float, periods: int, dt: float):
    rp, fp = cfg.reform_params(), cfg.fluid_params()
    grid = base.grid
    W0 = random_perturbation(grid, amplitude, cfg.integrator.seed)
    icfg = IntegratorConfig(dt=dt, t_end=periods * base.period, scheme=cfg.integrator.scheme,
                            stride=cfg.integrator.stride)
    traj = perturbation_evolution(W0, base, icfg, rp, fp)
    ec = EnergyCouplings(cfg.solver.d0, cfg.solver.d1)
    rep = perturbation_monitor(traj, ec, max(cfg.solver.N, 2))
    linf = np.array([max(np.max(np.abs(grid.inverse(traj.sigma[i]))), np.max(np.abs(grid.inverse(traj.v[i]))))
                     for i in range(len(traj))])
    return traj, rep, linf


def run_stability(cfg: ExperimentConfig, out: Path, periodic_dir, amplitude=None, periods=None, dt=None,
                  report=None) -> list[Path]:
    base = load_trajectory(periodic_dir)
    amplitude = cfg.integrator.perturbation_amplitude if amplitude is None else amplitude
    periods = cfg.integrator.periods if periods is None else periods
    dt = cfg.integrator.dt if dt is None else dt
    traj, rep, linf = stability_run(base, cfg, amplitude, periods, dt)
    d = rep.to_dict()
    ratio = linf / linf[0] if linf[0] > 0 else np.zeros_like(linf)
    below = np.nonzero(ratio < 1e-3)[0]
    d["linf"] = {"series": linf.tolist(), "final_ratio": float(ratio[-1]),
                 "time_below_1e-3": float(traj.times[below[0]]) if below.size else None}
    d["amplitude"], d["periods"], d["dt"] = amplitude, periods, dt
    stem = Path(report) if report else out / "stability"
    files = [
        _dump(stem.with_suffix(".json"), d),
        _write_csv(stem.with_suffix(".csv"), ("t", "lyapunov", "dissipation", "dissipation_integral", "linf"),
                   zip(traj.times, rep.E, rep.D, rep.dissipation_integral, linf)),
        write_state(out / "perturbation_final.nskf", traj.final),
    ]
    return files


def run_energy_check(cfg: ExperimentConfig, out: Path, trajectory_dir=None, refine: bool = False) -> list[Path]:
    ec = EnergyCouplings(cfg.solver.d0, cfg.solver.d1)
    N = cfg.solver.N
    if trajectory_dir is not None:
        traj = load_trajectory(trajectory_dir)
        forcing = cfg.make_forcing(traj.grid)
        if forcing.n_samples != traj.n_samples:
            raise ConfigError("trajectory and configured forcing have different sample counts")
    else:
        traj, trace, forcing, _ = _solve(cfg)
        if not trace.converged:
            raise DivergedRun("periodic solve for the energy check did not converge")
    rep = inequality_monitor(traj, forcing, ec, N)
    d = rep.to_dict()
    if refine:
        t2, trace2, f2, _ = _solve(cfg, samples=2 * traj.n_samples)
        if not trace2.converged:
            raise DivergedRun("refined periodic solve did not converge")
        c2 = inequality_monitor(t2, f2, ec, N).C_hat
        d["refinement"] = {"M": traj.n_samples, "C_hat_M": rep.C_hat, "C_hat_2M": c2,
                           "relative_change": abs(c2 - rep.C_hat) / abs(rep.C_hat) if rep.C_hat else None}
    return [_dump(out / "energy.json", d)]


# -- argument handling -----------------------------------------------------------


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="nskper", description="Time-periodic compressible Navier-Stokes-Korteweg experiments")
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, help_):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("config", help="TOML experiment config")
        return sp

    add("validate-config", "check a config file and exit")
    for name, help_ in (("semigroup-decay", "linear decay experiment"), ("periodic-solve", "fixed-point periodic solve")):
        add(name, help_).add_argument("--out", required=True, help="output directory")
    sp = add("stability", "perturbation experiment around a periodic solution")
    sp.add_argument("--out", required=True)
    sp.add_argument("--periodic", required=True, help="output directory of periodic-solve")
    sp.add_argument("--perturbation-amplitude", type=float)
    sp.add_argument("--periods", type=int)
    sp.add_argument("--dt", type=float)
    sp.add_argument("--report", help="path stem for the JSON/CSV report")
    sp = add("energy-check", "energy inequality monitor on a periodic solution")
    sp.add_argument("--out", required=True)
    sp.add_argument("--trajectory", help="output directory of periodic-solve (solved afresh if omitted)")
    sp.add_argument("--refine", action="store_true", help="also solve with 2M samples and compare C_hat")
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    out = Path(args.out) if getattr(args, "out", None) else None
    manifest = None
    code = EXIT_OK
    try:
        cfg = load_config(args.config)
        if args.command == "validate-config":
            print(f"{args.config}: ok (sha256 {cfg.sha256()[:12]})")
            return EXIT_OK
        out.mkdir(parents=True, exist_ok=True)
        manifest = RunManifest(args.command, cfg.sha256(), __version__)
        if args.command == "semigroup-decay":
            files = run_semigroup_decay(cfg, out)
        elif args.command == "periodic-solve":
            files = run_periodic_solve(cfg, out)
        elif args.command == "stability":
            files = run_stability(cfg, out, args.periodic, args.perturbation_amplitude, args.periods, args.dt,
                                  args.report)
        else:
            files = run_energy_check(cfg, out, args.trajectory, args.refine)
        for f in files:
            manifest.add(f, root=out if Path(f).is_relative_to(out) else None)
    except (ConfigError, ModelError, FloorTimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        code = EXIT_VALIDATION
    except (DivergedRun, VacuumError, IntegrationError) as exc:
        print(f"diverged: {exc}", file=sys.stderr)
        code = EXIT_DIVERGENCE
    except (OSError, SnapshotError) as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        code = EXIT_IO
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        code = EXIT_VALIDATION
    if manifest is not None and out is not None:
        manifest.finished = time.time()
        manifest.exit_code = code
        try:
            manifest.write(out / "manifest.json")
        except OSError as exc:
            print(f"i/o error: {exc}", file=sys.stderr)
            code = code or EXIT_IO
    if code == EXIT_OK and out is not None:
        log.info("outputs written to %s", out)
    return code


if __name__ == "__main__":
    sys.exit(main())
