"""Preconditioner factory and the instrumented FGMRES driver."""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np

from . import counters as K
from .assembly import ProblemInstance, build_problem, l2_errors, remove_pressure_mean
from .block_triangular import BlockTriangular, BlockTriConfig
from .braess_sarazin import BraessSarazin, BSConfig, SchurUzawa, UzawaConfig
from .krylov import FgmresConfig, SolveReport, fgmres_solve
from .multigrid import MGHierarchy
from .stencil import BlockVector
from .perfmodel import MachineModel, total_modeled_time
from .vanka import WEIGHTINGS, Vanka

PRECONDITIONERS = ("mg-bs", "mg-vanka", "mg-vanka-simple", "mg-uzawa", "block-tri", "none")

# every recognised dotted key with its default
DEFAULTS: dict[str, Any] = {
    "bs.t": 1.0,
    "bs.omega": 1.0,
    "bs.jacobi_omega": 0.8,
    "bs.jacobi_sweeps": 2,
    "uzawa.t": 1.0,
    "uzawa.jacobi_omega": 0.4,
    "uzawa.jacobi_sweeps": 2,
    "vanka.mode": "tuned",
    "vanka.omega": 0.4,
    "vanka.omega_p": 0.8,
    "vanka.weighting": "sqrt-overlap",
    "mg.nu1": 1,
    "mg.nu2": 1,
    "mg.coarsest_n": 4,
    "mg.coarse_solver": "lu",
    "mg.coarse_sweeps": 3,
    "mg.relaxation": "bs",
    "bt.cycles": 3,
    "bt.omega_p": 0.6,
    "bt.omega_u": 1.0,
    "solver.tol": 1e-10,
    "solver.max_iters": 200,
    "solver.restart": 0,
    "machine.peak_flops": 9472.34e9,
    "machine.bandwidth": 1264.42e9,
    "problem.nu": 1.0,
}

_CHOICES = {
    "vanka.mode": ("tuned", "simple"),
    "vanka.weighting": WEIGHTINGS,
    "mg.coarse_solver": ("lu", "sweeps"),
    "mg.relaxation": ("bs", "vanka", "uzawa"),
}


class ConfigError(ValueError):
    pass


def coerce(key: str, value: Any) -> Any:
    """Convert a (possibly string) value to the type of the key's default."""
    if key not in DEFAULTS:
        raise ConfigError(f"unknown configuration key {key!r}")
    default = DEFAULTS[key]
    try:
        if isinstance(default, str):
            out = str(value)
        elif isinstance(default, int) and not isinstance(default, bool):
            out = int(value)
            if float(value) != out:
                raise ValueError
        else:
            out = float(value)
    except (TypeError, ValueError):
        raise ConfigError(f"bad value {value!r} for {key}") from None
    if key in _CHOICES and out not in _CHOICES[key]:
        raise ConfigError(f"{key} must be one of {', '.join(_CHOICES[key])}")
    return out


def resolve(overrides: dict[str, Any] | None = None) -> dict[str, Any]:
    cfg = dict(DEFAULTS)
    for k, v in (overrides or {}).items():
        cfg[k] = coerce(k, v)
    return cfg


def bs_config(cfg) -> BSConfig:
    return BSConfig(cfg["bs.t"], cfg["bs.omega"], cfg["bs.jacobi_omega"], cfg["bs.jacobi_sweeps"])


def uzawa_config(cfg) -> UzawaConfig:
    return UzawaConfig(cfg["uzawa.t"], cfg["uzawa.jacobi_omega"], cfg["uzawa.jacobi_sweeps"])


def relaxation_factory(kind: str, cfg) -> Callable:
    if kind == "bs":
        c = bs_config(cfg)
        return lambda ops: BraessSarazin(ops, c)
    if kind == "uzawa":
        c = uzawa_config(cfg)
        return lambda ops: SchurUzawa(ops, c)
    if kind == "vanka":
        return lambda ops: Vanka(ops, cfg["vanka.omega"], cfg["vanka.mode"], cfg["vanka.weighting"],
                                 cfg["vanka.omega_p"])
    raise ConfigError(f"unknown relaxation {kind!r}")


def build_preconditioner(pc: str, problem: ProblemInstance, cfg: dict[str, Any]):
    """Callable ``v -> z`` approximating ``A^-1 v``, or ``None`` for no preconditioning."""
    if pc not in PRECONDITIONERS:
        raise ConfigError(f"unknown preconditioner {pc!r}")
    if pc == "none":
        return None
    try:
        if pc == "block-tri":
            return BlockTriangular(problem, BlockTriConfig(cfg["bt.cycles"], cfg["bt.omega_p"],
                                                           cfg["bt.omega_u"]))
        relax = {"mg-bs": "bs", "mg-uzawa": "uzawa", "mg-vanka": "vanka",
                 "mg-vanka-simple": "vanka"}[pc]
        if pc == "mg-vanka-simple":
            cfg = dict(cfg, **{"vanka.mode": "simple"})
        return MGHierarchy(problem, relaxation_factory(relax, cfg), cfg["mg.nu1"], cfg["mg.nu2"],
                           cfg["mg.coarse_solver"], cfg["mg.coarse_sweeps"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


@dataclass
class SolveResult:
    x: np.ndarray
    report: SolveReport
    counter: K.OpCounter
    modeled_cost: list[float] = field(default_factory=list)  # cumulative, per history entry
    setup_seconds: float = 0.0

    @property
    def total_modeled_cost(self) -> float:
        return self.modeled_cost[-1] if self.modeled_cost else 0.0


def solve(problem: ProblemInstance, pc: str, cfg: dict[str, Any] | None = None,
          x0: np.ndarray | None = None) -> SolveResult:
    """FGMRES with the named preconditioner, recording modeled cost per iteration."""
    cfg = resolve(cfg)
    machine = MachineModel(cfg["machine.peak_flops"], cfg["machine.bandwidth"])
    t0 = time.perf_counter()
    precond = build_preconditioner(pc, problem, cfg)
    setup = time.perf_counter() - t0
    try:
        fcfg = FgmresConfig(cfg["solver.max_iters"], cfg["solver.restart"], cfg["solver.tol"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    ops = problem.finest
    cost: list[float] = []
    with K.counting() as counter:
        def record(it, rel):
            cost.append(total_modeled_time(counter, machine))

        x, report = fgmres_solve(ops.apply, problem.rhs.data, x0, fcfg, precond, record)
    return SolveResult(x, report, counter, cost, setup)


def solve_instance(n_elem: int, pc: str, cfg: dict[str, Any] | None = None):
    """Build the manufactured problem, solve it and return ``(result, (err_u, err_p))``."""
    cfg = resolve(cfg)
    problem = build_problem(n_elem, cfg["mg.coarsest_n"], cfg["problem.nu"])
    res = solve(problem, pc, cfg)
    x = remove_pressure_mean(BlockVector(problem.grid, res.x.copy()), problem.finest)
    return res, l2_errors(problem.grid, x)
