"""Upper block-triangular preconditioner with inner scalar multigrid.

The Schur complement ``-B L^-1 B^T`` is replaced by ``-M / nu``.  Each
application first solves the pressure mass-matrix system and then the two
decoupled velocity Laplacian systems, both by a fixed number of scalar
V(3,3) cycles with weighted Jacobi smoothing.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import stencil as st
from .assembly import ProblemInstance, StokesOperators
from .multigrid import ScalarMGHierarchy


@dataclass(frozen=True)
class BlockTriConfig:
    n_cycles: int = 3
    omega_p: float = 0.6
    omega_u: float = 1.0
    nu1: int = 3
    nu2: int = 3

    def __post_init__(self):
        if self.n_cycles < 1:
            raise ValueError("need at least one inner V-cycle")
        for w in (self.omega_p, self.omega_u):
            if not 0 < w < 2:
                raise ValueError("Jacobi weights must lie in (0, 2)")
        if self.nu1 < 0 or self.nu2 < 0:
            raise ValueError("smoothing counts must be non-negative")


class BlockTriangular:
    """``[L B^T; 0 -M/nu]^-1`` approximated by inner V-cycles."""

    def __init__(self, problem: ProblemInstance, cfg: BlockTriConfig = BlockTriConfig(),
                 mass_solve=None, laplace_solve=None):
        """``mass_solve`` / ``laplace_solve`` replace the inner V-cycles when given
        (e.g. exact factorizations); each maps a right-hand side to a solution."""
        self.cfg = cfg
        self.ops: StokesOperators = problem.finest
        self.nu = problem.nu
        self.mass_mg = ScalarMGHierarchy([o.M for o in problem.levels],
                                         [P.q1 for P in problem.transfers],
                                         cfg.omega_p, cfg.nu1, cfg.nu2)
        self.lap_mg = ScalarMGHierarchy([o.L for o in problem.levels],
                                        [P.q2 for P in problem.transfers],
                                        cfg.omega_u, cfg.nu1, cfg.nu2)
        self.n = problem.grid.n_fine ** 2
        c = cfg.n_cycles
        self.mass_solve = mass_solve or (lambda b: self.mass_mg.solve(b, c))
        self.laplace_solve = laplace_solve or (lambda b: self.lap_mg.solve(b, c))

    def apply(self, r_u: np.ndarray, r_p: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        dp = self.mass_solve(st.scale(-self.nu, r_p))
        rhs = st.sub(r_u, self.ops.B.rmatvec(dp))
        n = self.n
        du = np.concatenate([self.laplace_solve(rhs[:n]), self.laplace_solve(rhs[n:])])
        return du, dp

    def precondition(self, v: np.ndarray) -> np.ndarray:
        du, dp = self.apply(v[: 2 * self.n], v[2 * self.n :])
        return np.concatenate([du, dp - dp.mean()])

    __call__ = precondition


def block_tri_apply(problem: ProblemInstance, r_u: np.ndarray, r_p: np.ndarray,
                    cfg: BlockTriConfig = BlockTriConfig()):
    return BlockTriangular(problem, cfg).apply(r_u, r_p)
