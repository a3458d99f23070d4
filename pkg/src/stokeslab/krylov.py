"""Flexible GMRES with right preconditioning."""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import stencil as st


class DivergenceError(FloatingPointError):
    """Raised when the iteration produces non-finite values."""


@dataclass
class FgmresConfig:
    max_iters: int = 200
    restart: int = 0  # 0: never restart
    rel_tol: float = 1e-10

    def __post_init__(self):
        if self.rel_tol <= 0:
            raise ValueError("rel_tol must be positive")
        if self.restart < 0:
            raise ValueError("restart must be >= 0")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")


@dataclass
class SolveReport:
    iterations: int = 0
    history: list[float] = field(default_factory=list)
    converged: bool = False
    final_rel_residual: float = float("nan")
    timings: dict[str, float] = field(default_factory=dict)


def fgmres_solve(
    A: Callable[[np.ndarray], np.ndarray],
    b: np.ndarray,
    x0: np.ndarray | None = None,
    cfg: FgmresConfig = FgmresConfig(),
    precond: Callable[[np.ndarray], np.ndarray] | None = None,
    callback: Callable[[int, float], None] | None = None,
) -> tuple[np.ndarray, SolveReport]:
    """Solve ``A x = b`` by FGMRES(m) with modified Gram-Schmidt.

    ``precond`` may change from one call to the next; the preconditioned
    directions are kept and the update is formed from them.  ``history``
    holds the relative residual ``||b - A x|| / ||b||`` before the first and
    after every iteration (the Givens estimate, which for right
    preconditioning is the true unpreconditioned residual norm).
    """
    t_start = time.perf_counter()
    t_pc = 0.0
    b = np.asarray(b, dtype=float)
    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=float)
    if precond is None:
        precond = lambda v: v  # noqa: E731
    report = SolveReport()
    bnorm = st.norm2(b)
    if bnorm == 0.0:
        report.history = [0.0]
        report.converged = True
        report.final_rel_residual = 0.0
        return np.zeros_like(b), report

    r = st.sub(b, A(x))
    beta = st.norm2(r)
    if not np.isfinite(beta):
        raise DivergenceError("non-finite initial residual")
    report.history.append(beta / bnorm)
    if callback:
        callback(0, beta / bnorm)
    m_max = cfg.restart or cfg.max_iters
    it = 0
    while it < cfg.max_iters and beta / bnorm > cfg.rel_tol:
        m = min(m_max, cfg.max_iters - it)
        V = [r / beta]
        Z = []
        H = np.zeros((m + 1, m))
        cs = np.zeros(m)
        sn = np.zeros(m)
        g = np.zeros(m + 1)
        g[0] = beta
        k_done = 0
        for k in range(m):
            t0 = time.perf_counter()
            Z.append(precond(V[k]))
            t_pc += time.perf_counter() - t0
            w = A(Z[k])
            for i in range(k + 1):
                H[i, k] = st.dot(w, V[i])
                w = st.axpy(-H[i, k], V[i], w)
            H[k + 1, k] = st.norm2(w)
            if not np.all(np.isfinite(H[: k + 2, k])):
                raise DivergenceError(f"non-finite Arnoldi coefficients at iteration {it + 1}")
            V.append(w / H[k + 1, k] if H[k + 1, k] > 0 else np.zeros_like(w))
            for i in range(k):
                hi = cs[i] * H[i, k] + sn[i] * H[i + 1, k]
                H[i + 1, k] = -sn[i] * H[i, k] + cs[i] * H[i + 1, k]
                H[i, k] = hi
            denom = np.hypot(H[k, k], H[k + 1, k])
            if denom == 0:
                raise DivergenceError("Arnoldi breakdown with singular Hessenberg column")
            cs[k], sn[k] = H[k, k] / denom, H[k + 1, k] / denom
            H[k, k] = denom
            H[k + 1, k] = 0.0
            g[k + 1] = -sn[k] * g[k]
            g[k] = cs[k] * g[k]
            it += 1
            k_done = k + 1
            rel = abs(g[k + 1]) / bnorm
            report.history.append(rel)
            if callback:
                callback(it, rel)
            if rel <= cfg.rel_tol or not np.any(V[k + 1]):  # converged or happy breakdown
                break
        y = np.linalg.solve(np.triu(H[:k_done, :k_done]), g[:k_done])
        for yk, zk in zip(y, Z):
            x = st.axpy(yk, zk, x)
        if not np.all(np.isfinite(x)):
            raise DivergenceError("non-finite iterate")
        r = st.sub(b, A(x))
        beta = st.norm2(r)
    report.iterations = it
    report.final_rel_residual = beta / bnorm
    report.converged = report.final_rel_residual <= cfg.rel_tol
    report.timings = {"total": time.perf_counter() - t_start, "preconditioner": t_pc}
    return x, report

