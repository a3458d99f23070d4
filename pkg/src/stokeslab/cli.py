"""Command-line entry point: ``stokeslab {solve,verify,tune,bench}``.

Exit codes: 0 converged, 2 not converged, 1 configuration error.
Heavy imports are deferred until after ``--threads`` has been applied to the
BLAS/OpenMP environment.
"""

from __future__ import annotations

import argparse
import csv
import itertools
import json
import os
import sys
from pathlib import Path

SCHEMA_VERSION = 1
EXIT_OK, EXIT_CONFIG, EXIT_NOT_CONVERGED = 0, 1, 2


class UsageError(Exception):
    pass


# -- configuration -----------------------------------------------------------

def read_config_file(path: str) -> dict[str, str]:
    """``key = value`` lines; ``#`` starts a comment."""
    out = {}
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise UsageError(f"cannot read config file: {exc}") from None
    for no, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{no}: expected key=value")
        k, v = (s.strip() for s in line.split("=", 1))
        out[k] = v
    return out


def parse_set(items: list[str]) -> dict[str, str]:
    out = {}
    for item in items or []:
        if "=" not in item:
            raise UsageError(f"--set expects key=value, got {item!r}")
        k, v = item.split("=", 1)
        out[k.strip()] = v.strip()
    return out


_FLAG_KEYS = {
    "tol": "solver.tol",
    "max_iters": "solver.max_iters",
    "coarsest_n": "mg.coarsest_n",
    "nu1": "mg.nu1",
    "nu2": "mg.nu2",
}


def build_config(args) -> dict:
    """Defaults < config file < ``--set`` < dedicated flags."""
    from .solvers import resolve

    raw: dict = {}
    if args.config:
        raw.update(read_config_file(args.config))
    raw.update(parse_set(args.set))
    for flag, key in _FLAG_KEYS.items():
        v = getattr(args, flag, None)
        if v is not None:
            raw[key] = v
    return resolve(raw)


def output_dir(args) -> Path:
    d = args.out or os.environ.get("STOKESLAB_OUT") or "stokeslab_out"
    p = Path(d)
    p.mkdir(parents=True, exist_ok=True)
    return p


def check_n(n: int, coarsest: int) -> None:
    from .mesh import hierarchy_sizes

    if n < 1:
        raise UsageError("--n must be positive")
    if n > coarsest:
        try:
            hierarchy_sizes(n, coarsest)
        except ValueError as exc:
            raise UsageError(str(exc)) from None


def write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


# -- commands ----------------------------------------------------------------

def _solve_one(n: int, pc: str, cfg: dict):
    from .solvers import solve_instance

    check_n(n, cfg["mg.coarsest_n"])
    return solve_instance(n, pc, cfg)


def _report_dict(res, errs) -> dict:
    rep = res.report
    return {
        "iterations": rep.iterations,
        "converged": bool(rep.converged),
        "final_rel_residual": rep.final_rel_residual,
        "history": rep.history,
        "modeled_cost": res.modeled_cost,
        "l2_error_velocity": errs[0],
        "l2_error_pressure": errs[1],
    }


def cmd_solve(args) -> int:
    from .perfmodel import MachineModel, cost_report, write_kernels_csv

    cfg = build_config(args)
    res, errs = _solve_one(args.n, args.pc, cfg)
    out = output_dir(args)
    machine = MachineModel(cfg["machine.peak_flops"], cfg["machine.bandwidth"])
    rows = cost_report(res.counter, machine)
    bundle = {
        "schema_version": SCHEMA_VERSION,
        "command": "solve",
        "n_elem": args.n,
        "preconditioner": args.pc,
        "seed": args.seed,
        "threads": args.threads,
        "config": cfg,
        "solve": _report_dict(res, errs),
        "cost": [vars(r) for r in rows],
    }
    write_json(out / "bundle.json", bundle)
    write_json(out / "timings.json", dict(res.report.timings, setup=res.setup_seconds))
    with open(out / "history.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(("iteration", "rel_residual", "modeled_cost"))
        for i, (r, c) in enumerate(zip(res.report.history, res.modeled_cost)):
            w.writerow((i, repr(float(r)), repr(float(c))))
    write_kernels_csv(rows, out / "kernels.csv")
    rep = res.report
    print(f"{args.pc} N={args.n}: {'converged' if rep.converged else 'NOT converged'} in "
          f"{rep.iterations} iterations, rel. residual {rep.final_rel_residual:.3e}")
    print(f"L2 error velocity {errs[0]:.4e}, pressure {errs[1]:.4e}")
    return EXIT_OK if rep.converged else EXIT_NOT_CONVERGED


def observed_orders(ns: list[int], errors: list[float]) -> list[float]:
    import math

    return [math.log(errors[i] / errors[i + 1]) / math.log(ns[i + 1] / ns[i])
            for i in range(len(ns) - 1)]


def cmd_verify(args) -> int:
    cfg = build_config(args)
    ns = sorted(int(s) for s in args.grids.split(","))
    if len(ns) < 3:
        raise UsageError("verify needs at least three grids")
    results = []
    ok = True
    for n in ns:
        res, errs = _solve_one(n, args.pc, cfg)
        ok &= bool(res.report.converged)
        results.append((n, res.report.iterations, res.report.converged, *errs))
    ou = observed_orders(ns, [r[3] for r in results])
    op = observed_orders(ns, [r[4] for r in results])
    out = output_dir(args)
    with open(out / "convergence.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(("n_elem", "iterations", "converged", "l2_velocity", "l2_pressure",
                    "order_velocity", "order_pressure"))
        for i, r in enumerate(results):
            w.writerow((*r[:3], repr(float(r[3])), repr(float(r[4])),
                        "" if i == 0 else f"{ou[i - 1]:.6f}", "" if i == 0 else f"{op[i - 1]:.6f}"))
    write_json(out / "verify.json", {
        "schema_version": SCHEMA_VERSION, "command": "verify", "preconditioner": args.pc,
        "config": cfg, "grids": ns,
        "l2_velocity": [r[3] for r in results], "l2_pressure": [r[4] for r in results],
        "order_velocity": ou, "order_pressure": op,
    })
    print(f"{'N':>6} {'iters':>6} {'L2(u)':>12} {'L2(p)':>12} {'rate u':>7} {'rate p':>7}")
    for i, r in enumerate(results):
        ru = f"{ou[i - 1]:7.3f}" if i else " " * 7
        rp = f"{op[i - 1]:7.3f}" if i else " " * 7
        print(f"{r[0]:6d} {r[1]:6d} {r[3]:12.4e} {r[4]:12.4e} {ru} {rp}")
    return EXIT_OK if ok else EXIT_NOT_CONVERGED


DEFAULT_TUNE_GRIDS = {
    "mg-bs": {"bs.t": [1.0, 1.25], "bs.omega": [0.8, 1.0], "bs.jacobi_omega": [0.6, 0.8, 1.0]},
    "mg-uzawa": {"uzawa.jacobi_omega": [round(0.2 + 0.1 * k, 1) for k in range(9)]},
    "mg-vanka": {"vanka.omega": [0.3, 0.4, 0.5], "vanka.omega_p": [0.7, 0.8, 0.9]},
    "mg-vanka-simple": {"vanka.omega": [0.3, 0.4, 0.5], "vanka.omega_p": [0.7, 0.8, 0.9]},
    "block-tri": {"bt.omega_p": [0.4, 0.6, 0.8], "bt.omega_u": [0.8, 1.0]},
}


def parse_grid(items: list[str]) -> dict[str, list[str]]:
    out = {}
    for item in items or []:
        if "=" not in item:
            raise UsageError(f"--grid expects key=v1,v2,..., got {item!r}")
        k, v = item.split("=", 1)
        out[k.strip()] = [s.strip() for s in v.split(",") if s.strip()]
    return out


def tune(n: int, pc: str, base: dict, grid: dict[str, list]) -> list[dict]:
    """Solve for every grid point; rows sorted best first."""
    from .krylov import DivergenceError
    from .solvers import ConfigError, resolve

    keys = sorted(grid)
    rows = []
    for values in itertools.product(*(grid[k] for k in keys)):
        cfg = resolve(dict(base, **dict(zip(keys, values))))
        row = {k: cfg[k] for k in keys}
        try:
            res, _ = _solve_one(n, pc, cfg)
            row.update(iterations=res.report.iterations, converged=bool(res.report.converged),
                       modeled_cost=res.total_modeled_cost)
        except (DivergenceError, ConfigError, ZeroDivisionError, FloatingPointError):
            row.update(iterations=-1, converged=False, modeled_cost=float("inf"))
        rows.append(row)
    rows.sort(key=lambda r: (not r["converged"], r["iterations"], r["modeled_cost"]))
    return rows


def cmd_tune(args) -> int:
    cfg = build_config(args)
    grid = parse_grid(args.grid) or DEFAULT_TUNE_GRIDS.get(args.pc)
    if not grid:
        raise UsageError(f"no parameter grid for preconditioner {args.pc!r}")
    rows = tune(args.n, args.pc, cfg, grid)
    out = output_dir(args)
    with open(out / "tune.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]))
        w.writeheader()
        for r in rows:
            w.writerow({k: (repr(float(v)) if isinstance(v, float) else v) for k, v in r.items()})
    best = rows[0]
    print("best:", ", ".join(f"{k}={v}" for k, v in best.items()))
    return EXIT_OK if best["converged"] else EXIT_NOT_CONVERGED


def bench_sweeps(n: int, cfg: dict, seed: int):
    """One instrumented sweep per relaxation on a random residual."""
    import numpy as np

    from . import counters as K
    from .assembly import build_problem
    from .solvers import relaxation_factory

    problem = build_problem(n, min(n, cfg["mg.coarsest_n"]), cfg["problem.nu"])
    ops = problem.finest
    rng = np.random.default_rng(seed)
    b = rng.standard_normal(problem.rhs.data.size)
    x = rng.standard_normal(b.size)
    out = {}
    for kind in ("bs", "vanka", "uzawa"):
        relax = relaxation_factory(kind, cfg)(ops)
        with K.counting() as c:
            relax.sweep(b, x)
        out[kind] = c
    return out


def cmd_bench(args) -> int:
    from . import counters as K
    from .perfmodel import (MachineModel, cost_report, sig_equal, table2, write_kernels_csv,
                            write_roofline_csv, write_table2_csv)

    cfg = build_config(args)
    check_n(args.n, cfg["mg.coarsest_n"])
    machine = MachineModel(cfg["machine.peak_flops"], cfg["machine.bandwidth"])
    out = output_dir(args)
    combined = K.OpCounter()
    for kind, counter in bench_sweeps(args.n, cfg, args.seed).items():
        rows = cost_report(counter, machine)
        write_kernels_csv(rows, out / f"kernels_{kind}.csv")
        combined.merge(counter)
        top = ", ".join(f"{r.kernel} {r.pct:.1f}%" for r in rows[:3])
        print(f"{kind} sweep N={args.n}: {top}")
    rows = cost_report(combined, machine)
    write_kernels_csv(rows, out / "kernels.csv")
    write_roofline_csv(rows, out / "roofline.csv", machine)
    t2 = table2(512, machine)
    write_table2_csv(t2, out / "table2.csv")
    print(f"\n{'kernel':34s} {'AI':>8s} {'printed':>8s} {'GFLOP/s':>9s} {'printed':>8s}")
    for r in t2:
        flag = "" if sig_equal(r.ai, r.printed_ai) and sig_equal(r.gflops, r.printed_gflops) else "  *"
        print(f"{r.kernel:34s} {r.ai:8.4f} {r.printed_ai:8.4f} {r.gflops:9.3f} {r.printed_gflops:8.3f}{flag}")
    print("(* modeled value differs from the printed table at 3 significant figures)")
    return EXIT_OK


# -- argument parsing --------------------------------------------------------

def make_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--n", type=int, default=16, help="elements per direction on the finest grid")
    common.add_argument("--pc", default="mg-bs",
                        choices=("mg-bs", "mg-vanka", "mg-vanka-simple", "mg-uzawa", "block-tri", "none"))
    common.add_argument("--tol", type=float, help="relative residual tolerance (solver.tol)")
    common.add_argument("--max-iters", type=int, help="FGMRES iteration cap (solver.max_iters)")
    common.add_argument("--coarsest-n", type=int, help="coarsest grid size (mg.coarsest_n)")
    common.add_argument("--nu1", type=int, help="pre-smoothing sweeps")
    common.add_argument("--nu2", type=int, help="post-smoothing sweeps")
    common.add_argument("--threads", type=int, default=1, help="BLAS/OpenMP threads (1 = reference mode)")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--out", help="output directory (default $STOKESLAB_OUT or ./stokeslab_out)")
    common.add_argument("--set", action="append", metavar="KEY=VALUE", help="dotted configuration key")
    common.add_argument("--config", help="key=value configuration file")

    p = argparse.ArgumentParser(prog="stokeslab", description="Structured-grid Q2-Q1 Stokes solver lab")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("solve", parents=[common], help="solve the manufactured problem")
    v = sub.add_parser("verify", parents=[common], help="manufactured-solution convergence study")
    v.add_argument("--grids", default="8,16,32", help="comma-separated element counts")
    t = sub.add_parser("tune", parents=[common], help="grid search over relaxation parameters")
    t.add_argument("--grid", action="append", metavar="KEY=V1,V2", help="parameter values to try")
    sub.add_parser("bench", parents=[common], help="kernel cost, roofline and reference performance-table reports")
    return p


COMMANDS = {"solve": cmd_solve, "verify": cmd_verify, "tune": cmd_tune, "bench": cmd_bench}


def main(argv: list[str] | None = None) -> int:
    parser = make_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse errors are configuration errors
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    if args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ[var] = str(args.threads)
    from .solvers import ConfigError

    try:
        return COMMANDS[args.command](args)
    except (UsageError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
