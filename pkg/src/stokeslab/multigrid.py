"""Monolithic Stokes V-cycle and a scalar V-cycle for single stencil operators.

Level 0 is the coarsest grid.  Restriction is the exact transpose of the
finite-element interpolation, with no rescaling.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Protocol

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from . import counters as K
from . import stencil as st
from .assembly import Interpolation, ProblemInstance, StokesOperators


class Relaxation(Protocol):
    def sweep(self, b: np.ndarray, x: np.ndarray) -> np.ndarray: ...


def _dense_counts(n: int) -> tuple[int, int, int]:
    return n * n + n, n, 2 * n * n


class CoarseSolver:
    """Coarsest-level solve: dense LU (cached factors) or ``k`` relaxation sweeps.

    The LU path borders the Stokes matrix with the constant-pressure vector
    so the factorization is nonsingular; the returned pressure then has zero
    coefficient sum.
    """

    def __init__(self, ops: StokesOperators, mode: str = "lu", relax: Relaxation | None = None,
                 sweeps: int = 3):
        if mode not in ("lu", "sweeps"):
            raise ValueError(f"unknown coarse solver {mode!r}")
        self.ops = ops
        self.mode = mode
        self.relax = relax
        self.sweeps = sweeps
        self.sweeps_done = 0
        if mode == "lu":
            A = ops.to_sparse().toarray()
            n = A.shape[0]
            m = ops.grid.n_nodes ** 2
            e = np.zeros(n)
            e[n - m :] = 1.0
            bordered = np.block([[A, e[:, None]], [e[None, :], np.zeros((1, 1))]])
            self.lu = sla.lu_factor(bordered, check_finite=True)
            if np.min(np.abs(np.diag(self.lu[0]))) < 1e-14 * np.max(np.abs(np.diag(self.lu[0]))):
                raise np.linalg.LinAlgError("coarse Stokes matrix is singular after null-space bordering")
        elif relax is None:
            raise ValueError("sweep mode needs a relaxation")

    def solve(self, b: np.ndarray) -> np.ndarray:
        if self.mode == "lu":
            x = sla.lu_solve(self.lu, np.append(b, 0.0))[:-1]
            K.tally(K.COARSE, *_dense_counts(b.size + 1))
            return x
        x = np.zeros_like(b)
        self.sweeps_done = 0
        for _ in range(self.sweeps):
            x = self.relax.sweep(b, x)
            self.sweeps_done += 1
        return x


def coarse_solve(ops: StokesOperators, b: np.ndarray) -> np.ndarray:
    return CoarseSolver(ops).solve(b)


@dataclass
class MGLevel:
    ops: StokesOperators
    relax: Relaxation


class MGHierarchy:
    """Monolithic multigrid for the Stokes block system."""

    def __init__(self, problem: ProblemInstance, make_relax: Callable[[StokesOperators], Relaxation],
                 nu1: int = 1, nu2: int = 1, coarse_solver: str = "lu", coarse_sweeps: int = 3):
        if nu1 < 0 or nu2 < 0:
            raise ValueError("smoothing counts must be non-negative")
        self.levels = []
        for l, ops in enumerate(problem.levels):
            # the coarsest level only needs a relaxation when it is solved by sweeps
            need = l > 0 or coarse_solver == "sweeps"
            self.levels.append(MGLevel(ops, make_relax(ops) if need else None))
        self.transfers: list[Interpolation] = problem.transfers
        self.nu1, self.nu2 = nu1, nu2
        self.coarse = CoarseSolver(problem.levels[0], coarse_solver, self.levels[0].relax, coarse_sweeps)

    @property
    def finest(self) -> int:
        return len(self.levels) - 1

    def vcycle(self, b: np.ndarray, x0: np.ndarray | None = None, level: int | None = None) -> np.ndarray:
        l = self.finest if level is None else level
        if not 0 <= l <= self.finest:
            raise IndexError(f"level {l} out of range 0..{self.finest}")
        if l == 0:
            return self.coarse.solve(b)
        lev = self.levels[l]
        x = np.zeros_like(b) if x0 is None else x0.copy()
        for _ in range(self.nu1):
            x = lev.relax.sweep(b, x)
        r = lev.ops.residual(b, x)
        P = self.transfers[l - 1]
        rc = P.restrict(r)
        ec = self.vcycle(rc, None, l - 1)
        x = st.add(x, P.prolong(ec))
        for _ in range(self.nu2):
            x = lev.relax.sweep(b, x)
        return x

    def precondition(self, v: np.ndarray) -> np.ndarray:
        """One V-cycle from a zero guess, pressure mean removed."""
        z = self.vcycle(v)
        m = self.levels[-1].ops.grid.n_nodes ** 2
        z[-m:] -= z[-m:].mean()
        return z

    __call__ = precondition


def vcycle(h: MGHierarchy, b, x0=None, level=None):
    return h.vcycle(b, x0, level)


# -- scalar multigrid --------------------------------------------------------

class WeightedJacobi:
    """``x += omega D^-1 (b - A x)`` for a scalar stencil operator."""

    def __init__(self, op, omega: float):
        if not 0 < omega < 2:
            raise ValueError("Jacobi weight must lie in (0, 2)")
        d = op.diagonal()
        if np.any(d == 0):
            raise ZeroDivisionError("operator has a zero diagonal entry")
        self.op = op
        self.scaled = omega / d

    def sweep(self, b: np.ndarray, x: np.ndarray) -> np.ndarray:
        r = st.sub(b, self.op.matvec(x))
        K.tally(K.JACOBI, 2 * r.size, r.size, 2 * r.size)
        return x + self.scaled * r


class ScalarMGHierarchy:
    """V-cycle for one scalar operator per level (``L`` component or ``M``).

    ``ops[l]`` is a stencil with ``matvec``, ``diagonal`` and ``to_sparse``;
    ``prolongations[l]`` maps level ``l`` to ``l + 1``.
    """

    def __init__(self, ops: list, prolongations: list[sp.csr_matrix], omega: float,
                 nu1: int = 3, nu2: int = 3):
        self.ops = ops
        self.P = prolongations
        self.PT = [p.T.tocsr() for p in prolongations]
        self.relax = [WeightedJacobi(op, omega) for op in ops]
        self.nu1, self.nu2 = nu1, nu2
        self.lu = sla.lu_factor(ops[0].to_sparse().toarray())

    @property
    def finest(self) -> int:
        return len(self.ops) - 1

    def _transfer(self, M: sp.csr_matrix, x: np.ndarray) -> np.ndarray:
        y = M @ x
        K.tally("grid transfer", M.nnz + x.size, y.size, 2 * M.nnz)
        return y

    def vcycle(self, b: np.ndarray, x0: np.ndarray | None = None, level: int | None = None) -> np.ndarray:
        l = self.finest if level is None else level
        if not 0 <= l <= self.finest:
            raise IndexError(f"level {l} out of range 0..{self.finest}")
        if l == 0:
            K.tally(K.COARSE, *_dense_counts(b.size))
            return sla.lu_solve(self.lu, b)
        x = np.zeros_like(b) if x0 is None else x0.copy()
        for _ in range(self.nu1):
            x = self.relax[l].sweep(b, x)
        r = st.sub(b, self.ops[l].matvec(x))
        ec = self.vcycle(self._transfer(self.PT[l - 1], r), None, l - 1)
        x = st.add(x, self._transfer(self.P[l - 1], ec))
        for _ in range(self.nu2):
            x = self.relax[l].sweep(b, x)
        return x

    def solve(self, b: np.ndarray, cycles: int, x0: np.ndarray | None = None) -> np.ndarray:
        x = np.zeros_like(b) if x0 is None else x0
        for _ in range(cycles):
            x = self.vcycle(b, x)
        return x


def scalar_vcycle(h: ScalarMGHierarchy, b, x0=None, level=None):
    return h.vcycle(b, x0, level)
