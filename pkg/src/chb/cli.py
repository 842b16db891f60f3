"""Command-line entry point ``chb``.

``chb simulate|optimize|gradcheck|energycheck --config FILE --out DIR
[--seed N] [--every K]``.  Every command first writes ``manifest.json``
(resolved config, input hashes, seed, version; no timestamps) and then
its outputs.  Exit codes: 0 success, 2 invalid configuration or failed
hypothesis check, 3 solver failure.  Messages go to standard error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .adjoint import fd_gradient_check, reduced_gradient, write_gradcheck_csv
from .config import RunSpec, parse_config
from .domain import VelocityField
from .errors import (AssumptionViolation, BlowUp, ConfigError, FormatError,
                     LineSearchStalled, SolverDiverged)
from .forward import simulate, write_diagnostics_csv
from .io import emit_pgm, sha256_file, write_snapshot, write_velocity_snapshot
from .optimize import projected_gradient, write_log_csv

COMMANDS = ("simulate", "optimize", "gradcheck", "energycheck")
EXIT_OK, EXIT_CONFIG, EXIT_SOLVER = 0, 2, 3

LAYOUT = {
    "simulate": ["diagnostics.csv", "phi_NNNNNN.chbf", "u_NNNNNN.chbf", "phi_NNNNNN.pgm"],
    "optimize": ["optimize_log.csv", "control_NNNNNN.chbf", "diagnostics.csv",
                 "phi_NNNNNN.chbf", "phi_NNNNNN.pgm"],
    "gradcheck": ["gradcheck.csv"],
    "energycheck": ["diagnostics.csv", "energycheck.json"],
}


def _parser():
    p = argparse.ArgumentParser(prog="chb", description=__doc__.splitlines()[0])
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", required=True, help="INI run configuration")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=None, help="seed for random presets/directions")
    p.add_argument("--every", type=int, default=None, help="snapshot interval in steps")
    return p


def _write_manifest(out: Path, args, spec: RunSpec):
    manifest = {
        "tool": "chb",
        "version": __version__,
        "command": args.command,
        "config_path": str(args.config),
        "config_sha256": sha256_file(args.config),
        "inputs": {p: sha256_file(p) for p in spec.inputs},
        "seed": spec.seed,
        "every": spec.every,
        "resolved_config": spec.resolved,
        "layout": LAYOUT[args.command],
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _snapshots(out: Path, traj, spec: RunSpec, velocity=True):
    N = traj.n_steps
    steps = sorted(set(range(0, N + 1, spec.every)) | {N})
    for n in steps:
        t = n * traj.dt
        write_snapshot(traj.phi[n], out / f"phi_{n:06d}.chbf", t)
        if spec.pgm:
            emit_pgm(traj.phi[n], out / f"phi_{n:06d}.pgm", (-1.0, 1.0))
        if velocity and n < N:
            write_velocity_snapshot(traj.u[n], out / f"u_{n:06d}.chbf", t)


def run_simulate(spec: RunSpec, out: Path):
    traj, rows = simulate(spec.model, spec.phi0, spec.control)
    write_diagnostics_csv(rows, out / "diagnostics.csv")
    _snapshots(out, traj, spec)
    _log(f"simulate: {traj.n_steps} steps, final energy {spec.model.energy(traj.phi[-1]):.10g}")


def run_energycheck(spec: RunSpec, out: Path):
    model = spec.model
    traj, rows = simulate(model, spec.phi0, model.zero_control())
    write_diagnostics_csv(rows, out / "diagnostics.csv")
    E = [r.energy for r in rows] + [model.energy(traj.phi[-1])]
    summary = {
        "dt": model.dt,
        "n_steps": traj.n_steps,
        "max_abs_residual": max(abs(r.residual) for r in rows),
        "max_energy_increase": float(max(np.diff(E))),
        "mass_drift": float(abs(rows[-1].mass - rows[0].mass)),
    }
    (out / "energycheck.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    _log(f"energycheck: max|R| = {summary['max_abs_residual']:.6e}, "
         f"max dE = {summary['max_energy_increase']:.3e}")


def run_optimize(spec: RunSpec, out: Path):
    model = spec.model
    rep = projected_gradient(model, spec.phi0, spec.control, spec.data,
                             model.config.weights, spec.bounds, spec.optimize)
    write_log_csv(rep, out / "optimize_log.csv")
    for n in range(model.n_steps):
        write_velocity_snapshot(rep.control[n], out / f"control_{n:06d}.chbf", n * model.dt)
    traj, rows = simulate(model, spec.phi0, rep.control)
    write_diagnostics_csv(rows, out / "diagnostics.csv")
    _snapshots(out, traj, spec, velocity=False)
    _log(f"optimize: {rep.accepted} accepted steps, cost {rep.costs[0]:.10g} -> "
         f"{rep.costs[-1]:.10g}, kkt {rep.kkt[0]:.3e} -> {rep.kkt[-1]:.3e}"
         + ("" if rep.converged else " (max_iters reached)"))


def random_directions(grid, n_steps, count, seed):
    rng = np.random.default_rng(seed)
    return [VelocityField(rng.standard_normal((n_steps,) + grid.xface_shape),
                          rng.standard_normal((n_steps,) + grid.yface_shape))
            for _ in range(count)]


def run_gradcheck(spec: RunSpec, out: Path):
    model = spec.model
    w = model.config.weights
    grad = reduced_gradient(model, spec.phi0, spec.control, spec.data, w)
    rows = []
    best = []
    for D in random_directions(model.grid, model.n_steps, spec.gradcheck_directions, spec.seed):
        r = fd_gradient_check(model, spec.phi0, spec.control, D, spec.data, w,
                              eps=spec.gradcheck_eps, grad=grad)
        rows.extend(r)
        best.append(min(x.rel_error for x in r))
    write_gradcheck_csv(rows, out / "gradcheck.csv")
    _log("gradcheck: min rel_error per direction " + ", ".join(f"{b:.2e}" for b in best))


RUNNERS = {"simulate": run_simulate, "optimize": run_optimize,
           "gradcheck": run_gradcheck, "energycheck": run_energycheck}


def _log(msg):
    print(msg, file=sys.stderr)


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        spec = parse_config(args.config, seed=args.seed)
        if args.every is not None:
            if args.every < 1:
                raise ConfigError("--every", "must be positive")
            spec.every = args.every
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        _write_manifest(out, args, spec)
        RUNNERS[args.command](spec, out)
    except (ConfigError, AssumptionViolation, FormatError) as exc:
        _log(f"chb: invalid configuration: {exc}")
        return EXIT_CONFIG
    except (SolverDiverged, BlowUp, LineSearchStalled) as exc:
        _log(f"chb: solver failure: {type(exc).__name__}: {exc}")
        return EXIT_SOLVER
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
