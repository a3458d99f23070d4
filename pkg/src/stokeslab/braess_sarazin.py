"""Braess-Sarazin and Schur-Uzawa relaxation.

Both replace ``L`` by ``t D`` (``D = diag(L)``) and approximate the
resulting Schur complement ``S = -(1/t) B D^-1 B^T`` with a few weighted
Jacobi sweeps on the pressure space.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import counters as K
from . import stencil as st
from .assembly import StokesOperators
from .stencil import NODE_OFFSETS


class SingularDiagonalError(ZeroDivisionError):
    pass


@dataclass(frozen=True)
class BSConfig:
    t: float = 1.0
    omega: float = 1.0
    jacobi_omega: float = 0.8
    jacobi_sweeps: int = 2

    def __post_init__(self):
        if self.t <= 0:
            raise ValueError("t must be positive")
        if not 0 < self.omega <= 1:
            raise ValueError("omega must lie in (0, 1]")
        if not 0 < self.jacobi_omega < 2:
            raise ValueError("jacobi_omega must lie in (0, 2)")
        if self.jacobi_sweeps < 1:
            raise ValueError("need at least one Jacobi sweep")


@dataclass(frozen=True)
class UzawaConfig:
    t: float = 1.0
    jacobi_omega: float = 0.4
    jacobi_sweeps: int = 2

    def __post_init__(self):
        if self.t <= 0:
            raise ValueError("t must be positive")
        if not 0 < self.jacobi_omega < 2:
            raise ValueError("jacobi_omega must lie in (0, 2)")
        if self.jacobi_sweeps < 1:
            raise ValueError("need at least one Jacobi sweep")


class SchurOperator:
    """``S = -(1/t) B D^-1 B^T`` applied matrix-free, with its exact diagonal."""

    def __init__(self, ops: StokesOperators, t: float = 1.0):
        self.ops = ops
        self.t = t
        d = ops.L.diagonal()
        if np.any(d == 0):
            raise SingularDiagonalError("L has a zero diagonal entry")
        self.dinv = np.tile(1.0 / d, 2)
        self.diag = self._diagonal()

    def _diagonal(self) -> np.ndarray:
        grid = self.ops.grid
        nf, n1 = grid.n_fine, grid.n_nodes
        dinv = self.dinv[: nf * nf].reshape(nf, nf)
        dp = np.pad(dinv, 2)
        out = np.zeros((n1, n1))
        coef = self.ops.B.coef
        for k, (di, dj) in enumerate(NODE_OFFSETS):
            w = dp[2 + dj : 2 + dj + 2 * n1 - 1 : 2, 2 + di : 2 + di + 2 * n1 - 1 : 2]
            out += (coef[:, :, 0, k] ** 2 + coef[:, :, 1, k] ** 2) * w
        return -out.ravel() / self.t

    def apply(self, p: np.ndarray) -> np.ndarray:
        w = st.hadamard(self.dinv, self.ops.B.rmatvec(p))
        return st.scale(-1.0 / self.t, self.ops.B.matvec(w))

    def dense(self) -> np.ndarray:
        """Explicit matrix, for tests on small grids."""
        Bs = self.ops.B.to_sparse()
        return -(Bs @ (self.dinv[:, None] * Bs.T.toarray())) / self.t


def weighted_jacobi_pressure(S: SchurOperator, rhs: np.ndarray, dp: np.ndarray | None,
                             omega: float, sweeps: int) -> np.ndarray:
    """``sweeps`` rounds of ``dp += omega diag(S)^-1 (rhs - S dp)``."""
    diag = S.diag
    if np.any(diag == 0):
        raise SingularDiagonalError("Schur complement has a zero diagonal entry")
    scaled = omega / diag
    m = rhs.size
    if dp is None:
        dp = np.zeros(m)
        res = rhs
        first = True
    else:
        dp = dp.copy()
        first = False
    for s in range(sweeps):
        if s > 0 or not first:
            res = st.sub(rhs, S.apply(dp))
        dp = dp + scaled * res
        K.tally(K.JACOBI, 2 * m, m, 2 * m)
    return dp


class BraessSarazin:
    """Inexact Braess-Sarazin relaxation on one level."""

    def __init__(self, ops: StokesOperators, cfg: BSConfig = BSConfig()):
        self.ops = ops
        self.cfg = cfg
        self.S = SchurOperator(ops, cfg.t)
        self.n_u = 2 * ops.grid.n_fine ** 2

    def correction(self, r: np.ndarray) -> np.ndarray:
        cfg, B, t = self.cfg, self.ops.B, self.cfg.t
        r_u, r_p = r[: self.n_u], r[self.n_u :]
        w = st.scale(1.0 / t, st.hadamard(self.S.dinv, r_u))
        rhs = st.sub(r_p, B.matvec(w))
        dp = weighted_jacobi_pressure(self.S, rhs, None, cfg.jacobi_omega, cfg.jacobi_sweeps)
        du = st.scale(1.0 / t, st.hadamard(self.S.dinv, st.sub(r_u, B.rmatvec(dp))))
        return st.scale(cfg.omega, np.concatenate([du, dp]))

    def sweep(self, b: np.ndarray, x: np.ndarray) -> np.ndarray:
        return st.add(x, self.correction(self.ops.residual(b, x)))


class SchurUzawa:
    """Block lower-triangular (Uzawa-type) relaxation, applied undamped."""

    def __init__(self, ops: StokesOperators, cfg: UzawaConfig = UzawaConfig()):
        self.ops = ops
        self.cfg = cfg
        self.S = SchurOperator(ops, cfg.t)
        self.n_u = 2 * ops.grid.n_fine ** 2

    def correction(self, r: np.ndarray) -> np.ndarray:
        cfg = self.cfg
        r_u, r_p = r[: self.n_u], r[self.n_u :]
        du = st.scale(1.0 / cfg.t, st.hadamard(self.S.dinv, r_u))
        # second block row of [tD 0; B S][du; dp] = [r_u; r_p]
        rhs = st.sub(r_p, self.ops.B.matvec(du))
        dp = weighted_jacobi_pressure(self.S, rhs, None, cfg.jacobi_omega, cfg.jacobi_sweeps)
        return np.concatenate([du, dp])

    def sweep(self, b: np.ndarray, x: np.ndarray) -> np.ndarray:
        return st.add(x, self.correction(self.ops.residual(b, x)))


def braess_sarazin_sweep(ops, r_u, r_p, cfg: BSConfig = BSConfig()):
    """Damped ``(du, dp)`` for the given residuals."""
    d = BraessSarazin(ops, cfg).correction(np.concatenate([r_u, r_p]))
    n = r_u.size
    return d[:n], d[n:]


def schur_uzawa_sweep(ops, r_u, r_p, cfg: UzawaConfig = UzawaConfig()):
    d = SchurUzawa(ops, cfg).correction(np.concatenate([r_u, r_p]))
    n = r_u.size
    return d[:n], d[n:]
