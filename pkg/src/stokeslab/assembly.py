"""Q2-Q1 Taylor-Hood assembly on the structured grid.

Element matrices are computed once on the reference square and scattered
into stencil windows with strided slices: for a fixed pair of local DOFs the
target positions of all elements are disjoint, so each scatter is a single
vectorized add.

Sign convention: ``B[k, j] = -(phi_k, div psi_j)`` so that
``L u + B^T p = f`` discretizes ``-nu Lap u + grad p = f``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import counters as K
from .mesh import StructuredGrid, boundary_mask, hierarchy_sizes, q1_coordinates, q2_coordinates
from .stencil import BlockVector, DivergenceStencil, Q1Stencil, Q2Stencil, block_sizes

GAUSS3_POINTS, GAUSS3_WEIGHTS = np.polynomial.legendre.leggauss(3)

# local (a, b) lattice positions; Q2 local index = 3*b + a, Q1 local index = 2*b + a
Q2_LOCAL = [(a, b) for b in range(3) for a in range(3)]
Q1_LOCAL = [(a, b) for b in range(2) for a in range(2)]


def _lagrange2(k: int, s):
    """1D quadratic Lagrange basis on nodes (-1, 0, 1): value and derivative."""
    s = np.asarray(s, dtype=float)
    if k == 0:
        return 0.5 * s * (s - 1.0), s - 0.5
    if k == 1:
        return 1.0 - s * s, -2.0 * s
    if k == 2:
        return 0.5 * s * (s + 1.0), s + 0.5
    raise ValueError(k)


def _lagrange1(k: int, s):
    s = np.asarray(s, dtype=float)
    if k == 0:
        return 0.5 * (1.0 - s), np.full_like(s, -0.5)
    if k == 1:
        return 0.5 * (1.0 + s), np.full_like(s, 0.5)
    raise ValueError(k)


def reference_basis(kind: str, idx: int, xi, eta):
    """Tensor-product Lagrange basis on ``[-1, 1]^2``.

    Returns ``(value, d/dxi, d/deta)``.  Q2 indices run 0..8 and Q1 indices
    0..3, x-position fastest.
    """
    if kind == "Q2":
        if not 0 <= idx < 9:
            raise ValueError(f"Q2 basis index must be in 0..8, got {idx}")
        a, b = idx % 3, idx // 3
        fx, dfx = _lagrange2(a, xi)
        fy, dfy = _lagrange2(b, eta)
    elif kind == "Q1":
        if not 0 <= idx < 4:
            raise ValueError(f"Q1 basis index must be in 0..3, got {idx}")
        a, b = idx % 2, idx // 2
        fx, dfx = _lagrange1(a, xi)
        fy, dfy = _lagrange1(b, eta)
    else:
        raise ValueError(f"unknown element kind {kind!r}")
    return fx * fy, dfx * fy, fx * dfy


def _tabulate(kind: str, xi: np.ndarray, eta: np.ndarray):
    count = 9 if kind == "Q2" else 4
    vals = np.array([reference_basis(kind, i, xi, eta) for i in range(count)])
    return vals[:, 0], vals[:, 1], vals[:, 2]


def _quad2d(points, weights):
    xi, eta = np.meshgrid(points, points)
    w = np.outer(weights, weights)
    return xi.ravel(), eta.ravel(), w.ravel()


@dataclass(frozen=True)
class ElementMatrices:
    L: np.ndarray  # (9, 9) per-component stiffness
    B: np.ndarray  # (4, 2, 9) divergence, pressure x component x velocity
    M: np.ndarray  # (4, 4) pressure mass


def element_matrices(h: float, nu: float = 1.0) -> ElementMatrices:
    xi, eta, w = _quad2d(GAUSS3_POINTS, GAUSS3_WEIGHTS)
    psi, dpx, dpy = _tabulate("Q2", xi, eta)
    phi, _, _ = _tabulate("Q1", xi, eta)
    # x = x0 + (xi + 1) h / 2
    jac = 2.0 / h
    det = 0.25 * h * h
    L = nu * det * jac**2 * (np.einsum("q,aq,bq->ab", w, dpx, dpx) + np.einsum("q,aq,bq->ab", w, dpy, dpy))
    B = np.stack(
        [
            -det * jac * np.einsum("q,kq,aq->ka", w, phi, dpx),
            -det * jac * np.einsum("q,kq,aq->ka", w, phi, dpy),
        ],
        axis=1,
    )
    M = det * np.einsum("q,kq,lq->kl", w, phi, phi)
    return ElementMatrices(L, B, M)


# -- manufactured solution -------------------------------------------------

def manufactured_solution(x, y):
    """Exact ``(u_x, u_y, p)``; pressure has zero mean on the unit square."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    ux = x * (1 - x) * (2 * x - 1) * (6 * y**2 - 6 * y + 1)
    uy = y * (y - 1) * (2 * y - 1) * (6 * x**2 - 6 * x + 1)
    p = x**2 - 3 * y**2 + (8.0 / 3.0) * x * y
    return ux, uy, p


def forcing(x, y, nu: float = 1.0):
    """``f = -nu Lap u + grad p`` from closed-form derivatives."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    X = -2 * x**3 + 3 * x**2 - x
    Xpp = -12 * x + 6
    Y = 6 * y**2 - 6 * y + 1
    Z = 2 * y**3 - 3 * y**2 + y
    Zpp = 12 * y - 6
    W = 6 * x**2 - 6 * x + 1
    lap_ux = Xpp * Y + X * 12.0
    lap_uy = 12.0 * Z + W * Zpp
    px = 2 * x + (8.0 / 3.0) * y
    py = -6 * y + (8.0 / 3.0) * x
    return -nu * lap_ux + px, -nu * lap_uy + py


# -- assembly ----------------------------------------------------------------

def _element_origins(grid: StructuredGrid):
    e = np.arange(grid.n_elem) * grid.h
    x0, y0 = np.meshgrid(e, e)  # (ej, ei)
    return x0, y0


def _raw_windows(grid: StructuredGrid, nu: float):
    N, nf, n1 = grid.n_elem, grid.n_fine, grid.n_nodes
    em = element_matrices(grid.h, nu)
    Lwin = np.zeros((nf, nf, 5, 5))
    for al, (xa, ya) in enumerate(Q2_LOCAL):
        for be, (xb, yb) in enumerate(Q2_LOCAL):
            Lwin[ya : ya + 2 * N : 2, xa : xa + 2 * N : 2, yb - ya + 2, xb - xa + 2] += em.L[al, be]
    Bwin = np.zeros((n1, n1, 2, 5, 5))
    for k, (ka, kb) in enumerate(Q1_LOCAL):
        for al, (xa, ya) in enumerate(Q2_LOCAL):
            for c in range(2):
                Bwin[kb : kb + N, ka : ka + N, c, ya - 2 * kb + 2, xa - 2 * ka + 2] += em.B[k, c, al]
    Mwin = np.zeros((n1, n1, 3, 3))
    for k, (ka, kb) in enumerate(Q1_LOCAL):
        for l, (la, lb) in enumerate(Q1_LOCAL):
            Mwin[kb : kb + N, ka : ka + N, lb - kb + 1, la - ka + 1] += em.M[k, l]
    return Lwin, Bwin, Mwin


def _window_column_mask(grid: StructuredGrid, rows_J, rows_I) -> np.ndarray:
    """Mask ``[..., dJ+2, dI+2]``: neighbor is a Dirichlet DOF or off-grid."""
    bd = np.pad(boundary_mask(grid), 2, constant_values=True)
    d = np.arange(-2, 3)
    J = rows_J[:, :, None, None] + d[None, None, :, None] + 2
    I = rows_I[:, :, None, None] + d[None, None, None, :] + 2
    return bd[J, I]


@dataclass
class StokesOperators:
    """Assembled operators on one grid, before and after Dirichlet elimination."""

    grid: StructuredGrid
    nu: float
    L: Q2Stencil
    B: DivergenceStencil
    M: Q1Stencil
    L_raw: Q2Stencil
    B_raw: DivergenceStencil

    @property
    def Bt(self):
        return _Transposed(self.B)

    def apply(self, x: np.ndarray) -> np.ndarray:
        """Monolithic product ``[L B^T; B 0] x`` on a flat block vector."""
        n = self.grid.n_fine ** 2
        u, p = x[: 2 * n], x[2 * n :]
        yu = np.concatenate([self.L.matvec(u[:n]), self.L.matvec(u[n:])])
        yu += self.B.rmatvec(p)
        K.tally(K.ADD_SUB, 2 * yu.size, yu.size, yu.size)
        return np.concatenate([yu, self.B.matvec(u)])

    def residual(self, b: np.ndarray, x: np.ndarray) -> np.ndarray:
        r = b - self.apply(x)
        K.tally(K.ADD_SUB, 2 * r.size, r.size, r.size)
        return r

    def to_sparse(self) -> sp.csr_matrix:
        Ls = self.L.to_sparse()
        Bs = self.B.to_sparse()
        return sp.bmat([[sp.block_diag([Ls, Ls]), Bs.T], [Bs, None]]).tocsr()


class _Transposed:
    """Read-only transpose view of a divergence stencil."""

    def __init__(self, B):
        self.B = B

    def matvec(self, p):
        return self.B.rmatvec(p)

    def rmatvec(self, u):
        return self.B.matvec(u)

    def to_sparse(self):
        return self.B.to_sparse().T.tocsr()


def assemble_operators(grid: StructuredGrid, nu: float = 1.0) -> StokesOperators:
    """Assemble ``L``, ``B`` and ``M``, with Dirichlet rows/columns eliminated.

    Dirichlet velocity rows of ``L`` become identity rows, and every
    coefficient that couples to a Dirichlet velocity column (in ``L`` and in
    ``B``) is zeroed, keeping the block operator symmetric.
    """
    nf, n1 = grid.n_fine, grid.n_nodes
    Lwin, Bwin, Mwin = _raw_windows(grid, nu)
    L_raw = Q2Stencil.from_window(grid, Lwin)
    B_raw = DivergenceStencil(grid, Bwin.reshape(n1, n1, 2, 25).copy())

    J, I = np.meshgrid(np.arange(nf), np.arange(nf), indexing="ij")
    colmask = _window_column_mask(grid, J, I)
    rowmask = boundary_mask(grid)
    Lwin = Lwin.copy()
    Lwin[colmask] = 0.0
    Lwin[rowmask] = 0.0
    Lwin[rowmask, 2, 2] = 1.0

    j, i = np.meshgrid(np.arange(n1), np.arange(n1), indexing="ij")
    pmask = _window_column_mask(grid, 2 * j, 2 * i)
    Bwin = Bwin.copy()
    Bwin[np.broadcast_to(pmask[:, :, None], Bwin.shape)] = 0.0

    return StokesOperators(
        grid=grid,
        nu=nu,
        L=Q2Stencil.from_window(grid, Lwin),
        B=DivergenceStencil(grid, Bwin.reshape(n1, n1, 2, 25)),
        M=Q1Stencil(grid, Mwin.reshape(n1, n1, 9)),
        L_raw=L_raw,
        B_raw=B_raw,
    )


def _scatter_q2(grid: StructuredGrid, elem_vals: np.ndarray) -> np.ndarray:
    """Sum per-element local vectors ``(N, N, 9)`` into the fine lattice."""
    N, nf = grid.n_elem, grid.n_fine
    out = np.zeros((nf, nf))
    for al, (xa, ya) in enumerate(Q2_LOCAL):
        out[ya : ya + 2 * N : 2, xa : xa + 2 * N : 2] += elem_vals[:, :, al]
    return out


def load_vector(grid: StructuredGrid, nu: float = 1.0) -> tuple[np.ndarray, np.ndarray]:
    """``(f, psi_i)`` for both components on the fine lattice, 3x3 Gauss."""
    xi, eta, w = _quad2d(GAUSS3_POINTS, GAUSS3_WEIGHTS)
    psi, _, _ = _tabulate("Q2", xi, eta)
    h = grid.h
    x0, y0 = _element_origins(grid)
    xq = x0[:, :, None] + 0.5 * h * (xi + 1)
    yq = y0[:, :, None] + 0.5 * h * (eta + 1)
    fx, fy = forcing(xq, yq, nu)
    det = 0.25 * h * h
    loads = []
    for f in (fx, fy):
        elem = det * np.einsum("ejq,q,aq->eja", f, w, psi)
        loads.append(_scatter_q2(grid, elem))
    return loads[0], loads[1]


def dirichlet_values(grid: StructuredGrid) -> tuple[np.ndarray, np.ndarray]:
    """Manufactured velocity on Dirichlet DOFs, zero elsewhere (fine lattice)."""
    x, y = q2_coordinates(grid)
    ux, uy, _ = manufactured_solution(x, y)
    mask = boundary_mask(grid)
    return np.where(mask, ux, 0.0), np.where(mask, uy, 0.0)


def assemble_rhs(grid: StructuredGrid, ops: StokesOperators, nu: float = 1.0) -> BlockVector:
    """Right-hand side with Dirichlet lifting moved out of ``L`` and ``B``."""
    fx, fy = load_vector(grid, nu)
    gx, gy = dirichlet_values(grid)
    mask = boundary_mask(grid)
    g = np.concatenate([gx.ravel(), gy.ravel()])
    with K.suspended():  # setup work, kept out of any enclosing tally
        rx = fx.ravel() - ops.L_raw.matvec(gx.ravel())
        ry = fy.ravel() - ops.L_raw.matvec(gy.ravel())
        rp = -ops.B_raw.matvec(g)
    rx[mask.ravel()] = gx[mask]
    ry[mask.ravel()] = gy[mask]
    return BlockVector.from_parts(grid, np.concatenate([rx, ry]), rp)


def raw_rhs(grid: StructuredGrid, nu: float = 1.0) -> BlockVector:
    """Load vector before any boundary treatment (pressure block zero)."""
    fx, fy = load_vector(grid, nu)
    n, _, m = block_sizes(grid)
    return BlockVector.from_parts(grid, np.concatenate([fx.ravel(), fy.ravel()]), np.zeros(m))


def exact_interpolant(grid: StructuredGrid) -> BlockVector:
    """Manufactured solution sampled at the DOF coordinates."""
    x, y = q2_coordinates(grid)
    ux, uy, _ = manufactured_solution(x, y)
    xp, yp = q1_coordinates(grid)
    _, _, p = manufactured_solution(xp, yp)
    return BlockVector.from_parts(grid, np.concatenate([ux.ravel(), uy.ravel()]), p)


# -- grid transfer -----------------------------------------------------------

def _prolong_1d_q2(nc: int) -> sp.csr_matrix:
    """Coarse Q2 lattice (2nc+1 points) to fine Q2 lattice (4nc+1 points)."""
    nfine, ncoarse = 4 * nc + 1, 2 * nc + 1
    rows, cols, vals = [], [], []
    for F in range(nfine):
        if F % 2 == 0:
            rows.append(F), cols.append(F // 2), vals.append(1.0)
            continue
        e = min(F // 4, nc - 1)
        s = (F - 4 * e) / 2.0  # position in coarse-lattice units inside element e
        w = [(s - 1) * (s - 2) / 2, s * (2 - s), s * (s - 1) / 2]
        for k in range(3):
            rows.append(F), cols.append(2 * e + k), vals.append(w[k])
    return sp.csr_matrix((vals, (rows, cols)), shape=(nfine, ncoarse))


def _prolong_1d_q1(nc: int) -> sp.csr_matrix:
    nfine, ncoarse = 2 * nc + 1, nc + 1
    rows, cols, vals = [], [], []
    for f in range(nfine):
        if f % 2 == 0:
            rows.append(f), cols.append(f // 2), vals.append(1.0)
        else:
            for k in (f // 2, f // 2 + 1):
                rows.append(f), cols.append(k), vals.append(0.5)
    return sp.csr_matrix((vals, (rows, cols)), shape=(nfine, ncoarse))


@dataclass
class Interpolation:
    """Finite-element prolongation from ``coarse`` to the grid twice as fine.

    Restriction is the plain transpose.
    """

    coarse: StructuredGrid
    fine: StructuredGrid
    q2: sp.csr_matrix
    q1: sp.csr_matrix
    q2t: sp.csr_matrix = field(init=False, repr=False)
    q1t: sp.csr_matrix = field(init=False, repr=False)

    def __post_init__(self):
        self.q2t = self.q2.T.tocsr()
        self.q1t = self.q1.T.tocsr()

    def _transfer(self, x: np.ndarray, mq2, mq1, n_in: int) -> np.ndarray:
        ux, uy, p = x[:n_in], x[n_in : 2 * n_in], x[2 * n_in :]
        out = np.concatenate([mq2 @ ux, mq2 @ uy, mq1 @ p])
        nnz = 2 * mq2.nnz + mq1.nnz
        K.tally("grid transfer", nnz + x.size, out.size, 2 * nnz)
        return out

    def prolong(self, x: np.ndarray) -> np.ndarray:
        return self._transfer(x, self.q2, self.q1, self.coarse.n_fine**2)

    def restrict(self, x: np.ndarray) -> np.ndarray:
        return self._transfer(x, self.q2t, self.q1t, self.fine.n_fine**2)

    def block(self) -> sp.csr_matrix:
        return sp.block_diag([self.q2, self.q2, self.q1]).tocsr()


def build_interpolation(coarse: StructuredGrid, fine: StructuredGrid | None = None) -> Interpolation:
    if fine is None:
        fine = StructuredGrid(2 * coarse.n_elem, coarse.level + 1)
    if fine.n_elem != 2 * coarse.n_elem:
        raise ValueError(f"grids are not nested: N={coarse.n_elem} -> N={fine.n_elem}")
    nc = coarse.n_elem
    p2 = _prolong_1d_q2(nc)
    p1 = _prolong_1d_q1(nc)
    return Interpolation(coarse, fine, sp.kron(p2, p2).tocsr(), sp.kron(p1, p1).tocsr())


# -- problem instance --------------------------------------------------------

@dataclass
class ProblemInstance:
    """Grid hierarchy with operators per level and the finest right-hand side.

    ``levels[0]`` is the coarsest grid; ``transfers[l]`` maps level ``l`` to
    level ``l + 1``.
    """

    levels: list[StokesOperators]
    transfers: list[Interpolation]
    rhs: BlockVector
    nu: float

    @property
    def finest(self) -> StokesOperators:
        return self.levels[-1]

    @property
    def grid(self) -> StructuredGrid:
        return self.finest.grid


def build_problem(n_elem: int, coarsest_n: int = 4, nu: float = 1.0) -> ProblemInstance:
    sizes = hierarchy_sizes(n_elem, coarsest_n) if n_elem > coarsest_n else [n_elem]
    grids = [StructuredGrid(n, level) for level, n in enumerate(sizes)]
    levels = [assemble_operators(g, nu) for g in grids]
    transfers = [build_interpolation(grids[l], grids[l + 1]) for l in range(len(grids) - 1)]
    rhs = assemble_rhs(grids[-1], levels[-1], nu)
    return ProblemInstance(levels, transfers, rhs, nu)


# -- error norms -------------------------------------------------------------

def remove_pressure_mean(x: BlockVector, ops: StokesOperators | None = None) -> BlockVector:
    """Shift the pressure so it has zero mean.

    With ``ops`` the L2 mean (``1^T M p / |Omega|``) is removed; otherwise
    the plain coefficient mean, which is the orthogonal projection off the
    constant-pressure null space.
    """
    p = x.p
    if ops is None:
        p -= p.mean()
    else:
        p -= ops.M.coef.sum(axis=2).ravel() @ p
    return x


def l2_errors(grid: StructuredGrid, x: BlockVector, n_quad: int = 5) -> tuple[float, float]:
    """L2 errors of velocity (both components) and mean-free pressure."""
    pts, wts = np.polynomial.legendre.leggauss(n_quad)
    xi, eta, w = _quad2d(pts, wts)
    psi, _, _ = _tabulate("Q2", xi, eta)
    phi, _, _ = _tabulate("Q1", xi, eta)
    N, h = grid.n_elem, grid.h
    x0, y0 = _element_origins(grid)
    xq = x0[:, :, None] + 0.5 * h * (xi + 1)
    yq = y0[:, :, None] + 0.5 * h * (eta + 1)
    ux_e, uy_e, p_e = manufactured_solution(xq, yq)
    det = 0.25 * h * h
    nf, n1 = grid.n_fine, grid.n_nodes

    def q2_eval(vec):
        lat = vec.reshape(nf, nf)
        loc = np.stack([lat[ya : ya + 2 * N : 2, xa : xa + 2 * N : 2] for xa, ya in Q2_LOCAL], axis=-1)
        return loc @ psi

    pl = x.p.reshape(n1, n1)
    ploc = np.stack([pl[kb : kb + N, ka : ka + N] for ka, kb in Q1_LOCAL], axis=-1)
    ph = ploc @ phi
    ex = q2_eval(x.u_x) - ux_e
    ey = q2_eval(x.u_y) - uy_e
    ep = ph - p_e
    ep -= det * np.sum(ep * w) / (N * N * det * w.sum())  # drop the constant mode
    err_u = np.sqrt(det * np.sum((ex**2 + ey**2) * w))
    err_p = np.sqrt(det * np.sum(ep**2 * w))
    return float(err_u), float(err_p)
