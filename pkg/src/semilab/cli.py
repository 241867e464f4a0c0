"""``lab`` command line: experiments, simulation, QV, integrals and decompositions.

Exit codes: 0 when everything ran and passed, 2 when an experiment ran but a
metric failed, 1 on any error (bad input, bad config, I/O).
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from ._accel import configure_threads
from .decompose import IncreasingStep, fv_decompose, lebesgue_decompose
from .experiments import EXPERIMENTS, ExperimentConfig, export_plotdata, run_experiment
from .grid_path import TimeGrid, read_path_csv, write_path_csv
from .integrate import TruncationLadder, improper_integral
from .pathwise import pathwise_integral, pathwise_qv
from .simulate import (
    Seed,
    dyadic_ensemble,
    gen_brownian,
    gen_dyadic,
    gen_jump_semimartingale,
    gen_pairflip,
    normal_jumps,
)

EXIT_OK, EXIT_ERROR, EXIT_FAIL = 0, 1, 2


class CliError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """Usage errors exit with 1; exit code 2 is reserved for failed experiments."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_ERROR, f"{self.prog}: error: {message}\n")


def _pow2_level(steps: int) -> int:
    level = int(round(math.log2(steps))) if steps > 0 else -1
    if steps <= 0 or 2**level != steps:
        raise CliError(f"--steps must be a power of two, got {steps}")
    return level


# --------------------------------------------------------------------------
# run
# --------------------------------------------------------------------------

_RUN_KEYS = ("experiment", "seed", "scenarios", "level", "ladder_min", "alpha", "epsilons", "chunk",
             "max_cells", "out")


def _run_config(args) -> ExperimentConfig:
    cfg = {}
    if args.config:
        try:
            cfg = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise CliError(f"cannot read config {args.config}: {exc}") from exc
        if not isinstance(cfg, dict):
            raise CliError("config file must hold a JSON object")
        if "steps" in cfg:
            cfg["level"] = _pow2_level(int(cfg.pop("steps")))
    for key in _RUN_KEYS:
        val = getattr(args, key, None)
        if val is not None:
            cfg[key] = val
    if args.steps is not None:
        cfg["level"] = _pow2_level(args.steps)
    if "epsilons" in cfg:
        cfg["epsilons"] = tuple(cfg["epsilons"])
    return ExperimentConfig.from_dict(cfg)


def cmd_run(args) -> int:
    cfg = _run_config(args)
    report = run_experiment(cfg)
    if cfg.out:
        report.write(cfg.out)
        export_plotdata(report, cfg.out)
    block = {"experiment": report.experiment, "verdict": report.verdict,
             "metrics": {m.name: ("PASS" if m.passed else "FAIL") for m in report.metrics},
             "determinism_hash": report.determinism_hash()}
    print(json.dumps(block, sort_keys=True))
    return EXIT_OK if report.passed else EXIT_FAIL


# --------------------------------------------------------------------------
# simulate / qv / integrate-pathwise
# --------------------------------------------------------------------------

def cmd_simulate(args) -> int:
    seed = Seed(args.seed, args.stream)
    if args.model == "brownian":
        path = gen_brownian(TimeGrid.uniform(args.steps or 2 ** (args.level or 10), args.horizon), seed)
    elif args.model == "jumpsm":
        grid = TimeGrid.uniform(args.steps or 2 ** (args.level or 10), args.horizon)
        path = gen_jump_semimartingale(grid, seed, intensity=args.intensity, jump_law=normal_jumps(args.jump_scale))
    elif args.model == "dyadic":
        path = gen_dyadic(args.level or (_pow2_level(args.steps) if args.steps else 10), seed).path
    else:  # pairflip
        path = gen_pairflip(args.steps or 10 ** (args.level or 3), seed).path
    write_path_csv(path, args.out)
    return EXIT_OK


def _read(path) -> object:
    try:
        return read_path_csv(path)
    except OSError as exc:
        raise CliError(f"cannot read {path}: {exc}") from exc


def cmd_qv(args) -> int:
    x = _read(args.path)
    qv = pathwise_qv(x, args.level)
    if args.out:
        write_path_csv(qv, args.out)
    print(json.dumps({"level": args.level, "qv_at_horizon": float(qv.values[-1])}))
    return EXIT_OK


def cmd_integrate_pathwise(args) -> int:
    u, x = _read(args.integrand), _read(args.integrator)
    res = pathwise_integral(u, x, args.level)
    if args.out:
        write_path_csv(res.path, args.out)
    print(json.dumps({"level": args.level, "partition_points": int(res.partition.indices.size),
                      "value_at_horizon": float(res.path.values[-1])}))
    return EXIT_OK


# --------------------------------------------------------------------------
# integrate (truncation ladder on the dyadic example)
# --------------------------------------------------------------------------

def _write_ensemble_csv(ens, dest):
    """One row per scenario: stream id then the path values; header carries the times."""
    with open(dest, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["stream"] + [repr(float(t)) for t in ens.grid.times])
        for s, row in zip(ens.streams.tolist(), ens.values):
            w.writerow([s] + [repr(float(v)) for v in row])


def cmd_integrate(args) -> int:
    ens, f, _ = dyadic_ensemble(args.level, args.seed, args.scenarios)
    g = np.zeros_like(f)
    g[:-1] = f[1:]
    ladder = TruncationLadder.powers_of_two(args.level, start=args.ladder_start)
    top, report = improper_integral(g, ens, ladder, epsilons=tuple(args.epsilons), route=args.route)
    text = json.dumps(report.to_dict(), sort_keys=True, indent=2)
    if args.out:
        Path(args.out).write_text(text + "\n")
    else:
        print(text)
    if args.ensemble_out:
        _write_ensemble_csv(top, args.ensemble_out)
    return EXIT_OK


# --------------------------------------------------------------------------
# decompose
# --------------------------------------------------------------------------

def _read_two_columns(path):
    try:
        with open(path, newline="") as fh:
            rows = [r for r in csv.reader(fh) if r and not r[0].lstrip().startswith("#")]
    except OSError as exc:
        raise CliError(f"cannot read {path}: {exc}") from exc
    if rows and not _is_number(rows[0][0]):
        rows = rows[1:]
    if not rows or any(len(r) < 2 for r in rows):
        raise CliError(f"{path}: need two columns of increments (dU or dA, dR)")
    a = np.array([float(r[0]) for r in rows])
    b = np.array([float(r[1]) for r in rows])
    return a, b


def _is_number(text: str) -> bool:
    try:
        float(text)
    except ValueError:
        return False
    return True


def cmd_decompose(args) -> int:
    da, dr = _read_two_columns(args.input)
    u = np.concatenate(([0.0], np.cumsum(da)))
    r = IncreasingStep.from_increments(dr)
    rows = []
    if args.mode == "lebesgue":
        res = lebesgue_decompose(IncreasingStep.from_increments(da), r)
        mask = res.singular_mask
        header = ["cell", "phi", "gamma", "singular"]
        for k in range(da.size):
            rows.append([k + 1, repr(float(res.density[k])), int(mask[k]), repr(float(res.singular_part.values[k + 1]))])
    else:
        res = fv_decompose(u, r)
        header = ["cell", "rho", "xi", "gamma", "V"]
        for k in range(da.size):
            rows.append([k + 1, repr(float(res.density[k])), int(res.sign[k]), int(res.sign[k] != 0),
                         repr(float(res.singular[k + 1]))])
    fh = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)
    finally:
        if args.out:
            fh.close()
    return EXIT_OK


# --------------------------------------------------------------------------
# parser
# --------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="lab", description="Semimartingale integration laboratory.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run a catalog experiment and write report.json plus metric CSVs")
    r.add_argument("--experiment", choices=EXPERIMENTS)
    r.add_argument("--seed", type=int)
    r.add_argument("--scenarios", type=int)
    r.add_argument("--level", type=int, help="grid exponent (dyadic level for E2, log10 N for E4)")
    r.add_argument("--steps", type=int, help="grid steps; must be a power of two")
    r.add_argument("--ladder-min", dest="ladder_min", type=int)
    r.add_argument("--alpha", type=float)
    r.add_argument("--epsilons", type=float, nargs="+")
    r.add_argument("--chunk", type=int)
    r.add_argument("--max-cells", dest="max_cells", type=int)
    r.add_argument("--out")
    r.add_argument("--config", help="JSON file whose keys mirror these flags; flags win")
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("simulate", help="simulate one scenario path to CSV")
    s.add_argument("--model", choices=("brownian", "dyadic", "pairflip", "jumpsm"), required=True)
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--stream", type=int, default=0)
    g = s.add_mutually_exclusive_group()
    g.add_argument("--steps", type=int, help="grid steps (N for pairflip)")
    g.add_argument("--level", type=int, help="2**level steps (dyadic level M; N = 10**level for pairflip)")
    s.add_argument("--horizon", type=float, default=1.0)
    s.add_argument("--intensity", type=float, default=5.0, help="jump intensity for jumpsm")
    s.add_argument("--jump-scale", dest="jump_scale", type=float, default=0.5)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_simulate)

    q = sub.add_parser("qv", help="pathwise quadratic variation of a path CSV")
    q.add_argument("path")
    q.add_argument("--level", type=int, default=8)
    q.add_argument("--out")
    q.set_defaults(func=cmd_qv)

    ip = sub.add_parser("integrate-pathwise", help="pathwise integral of one path CSV against another")
    ip.add_argument("integrand")
    ip.add_argument("integrator")
    ip.add_argument("--level", type=int, default=8)
    ip.add_argument("--out")
    ip.set_defaults(func=cmd_integrate_pathwise)

    it = sub.add_parser("integrate", help="truncation-ladder ucp report for the dyadic example")
    it.add_argument("--seed", type=int, required=True)
    it.add_argument("--scenarios", type=int, default=1000)
    it.add_argument("--level", type=int, default=10)
    it.add_argument("--ladder-start", dest="ladder_start", type=int, default=1)
    it.add_argument("--route", choices=("martingale", "stieltjes"), default="martingale")
    it.add_argument("--epsilons", type=float, nargs="+", default=[0.1, 0.01])
    it.add_argument("--out", help="UcpReport JSON (default: stdout)")
    it.add_argument("--ensemble-out", dest="ensemble_out", help="CSV of the top-rung integral paths")
    it.set_defaults(func=cmd_integrate)

    d = sub.add_parser("decompose", help="cellwise decomposition of a two-column increment CSV")
    d.add_argument("input", help="columns: dU (or dA for --mode lebesgue), dR")
    d.add_argument("--mode", choices=("fv", "lebesgue"), default="fv")
    d.add_argument("--out")
    d.set_defaults(func=cmd_decompose)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        configure_threads()
        return args.func(args)
    except (CliError, ValueError, KeyError, OSError) as exc:
        print(f"lab: error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
