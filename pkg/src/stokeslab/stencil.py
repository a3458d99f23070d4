"""Structured "array of arrays" matrices and the instrumented kernels.

Every row stores a fixed-width coefficient array whose k-th entry multiplies
the k-th neighbor in the canonical local order (see
:func:`stokeslab.mesh.class_offsets`).  No column indices are stored; the
neighbor is implied by the row position and the slot.  Missing neighbors
outside the domain hold exact zeros.

Matvecs are written as a loop over stencil slots, each slot being one
strided slice of a zero-padded lattice.
"""

from __future__ import annotations

import numpy as np
import scipy.io
import scipy.sparse as sp

from . import counters as K
from .mesh import CLASS_PARITY, NODE, Q2_CLASSES, StructuredGrid, class_offsets

NODE_OFFSETS = class_offsets(NODE)  # 25 fine-lattice offsets of a 2x2 element patch
Q1_OFFSETS = [(di, dj) for dj in (-1, 0, 1) for di in (-1, 0, 1)]


def _pad(a: np.ndarray, w: int) -> np.ndarray:
    out = np.zeros((a.shape[0] + 2 * w, a.shape[1] + 2 * w))
    out[w:-w, w:-w] = a
    return out


def _check_grid(a, b) -> None:
    if a.n_elem != b.n_elem:
        raise ValueError(f"grid mismatch: N={a.n_elem} vs N={b.n_elem}")


class Q2Stencil:
    """Q2 -> Q2 operator for one velocity component.

    ``planes[cls]`` has shape ``(nj, ni, width)`` with width 25 for node
    rows, 15 for edge rows and 9 for center rows.
    """

    def __init__(self, grid: StructuredGrid, planes: dict[str, np.ndarray]):
        self.grid = grid
        self.planes = planes
        for cls in Q2_CLASSES:
            ni, nj = grid.class_shape(cls)
            want = (nj, ni, len(class_offsets(cls)))
            if planes[cls].shape != want:
                raise ValueError(f"{cls} plane has shape {planes[cls].shape}, expected {want}")

    @classmethod
    def from_window(cls, grid: StructuredGrid, win: np.ndarray) -> "Q2Stencil":
        """Build from a full ``(nf, nf, 5, 5)`` window array ``[J, I, dJ+2, dI+2]``."""
        planes = {}
        for c in Q2_CLASSES:
            px, py = CLASS_PARITY[c]
            rows = win[py::2, px::2]
            planes[c] = np.stack([rows[:, :, dj + 2, di + 2] for di, dj in class_offsets(c)], axis=-1)
        return cls(grid, planes)

    @classmethod
    def identity(cls, grid: StructuredGrid) -> "Q2Stencil":
        nf = grid.n_fine
        win = np.zeros((nf, nf, 5, 5))
        win[:, :, 2, 2] = 1.0
        return cls.from_window(grid, win)

    def to_window(self) -> np.ndarray:
        nf = self.grid.n_fine
        win = np.zeros((nf, nf, 5, 5))
        for c in Q2_CLASSES:
            px, py = CLASS_PARITY[c]
            for k, (di, dj) in enumerate(class_offsets(c)):
                win[py::2, px::2, dj + 2, di + 2] = self.planes[c][:, :, k]
        return win

    @property
    def nnz(self) -> int:
        """Stored coefficients, structural zeros included."""
        return sum(p.size for p in self.planes.values())

    @property
    def shape(self) -> tuple[int, int]:
        n = self.grid.n_fine ** 2
        return n, n

    def diagonal(self) -> np.ndarray:
        nf = self.grid.n_fine
        d = np.empty((nf, nf))
        for c in Q2_CLASSES:
            px, py = CLASS_PARITY[c]
            d[py::2, px::2] = self.planes[c][:, :, len(class_offsets(c)) // 2]
        return d.ravel()

    def matvec(self, x: np.ndarray) -> np.ndarray:
        nf = self.grid.n_fine
        if x.size != nf * nf:
            raise ValueError(f"vector of length {x.size} does not match N={self.grid.n_elem}")
        xp = _pad(x.reshape(nf, nf), 2)
        y = np.empty((nf, nf))
        for c in Q2_CLASSES:
            px, py = CLASS_PARITY[c]
            plane = self.planes[c]
            nj, ni, _ = plane.shape
            acc = np.zeros((nj, ni))
            for k, (di, dj) in enumerate(class_offsets(c)):
                r0, c0 = 2 + py + dj, 2 + px + di
                acc += plane[:, :, k] * xp[r0 : r0 + 2 * nj - 1 : 2, c0 : c0 + 2 * ni - 1 : 2]
            y[py::2, px::2] = acc
            K.tally(K.Q2Q2_SUB[c], plane.size + x.size, acc.size, plane.size)
        return y.ravel()

    def to_sparse(self) -> sp.csr_matrix:
        nf = self.grid.n_fine
        rows, cols, vals = [], [], []
        for c in Q2_CLASSES:
            px, py = CLASS_PARITY[c]
            nj, ni, _ = self.planes[c].shape
            J, I = np.meshgrid(2 * np.arange(nj) + py, 2 * np.arange(ni) + px, indexing="ij")
            for k, (di, dj) in enumerate(class_offsets(c)):
                I2, J2 = I + di, J + dj
                ok = (I2 >= 0) & (I2 < nf) & (J2 >= 0) & (J2 < nf)
                rows.append((J * nf + I)[ok])
                cols.append((J2 * nf + I2)[ok])
                vals.append(self.planes[c][:, :, k][ok])
        n = nf * nf
        return sp.csr_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)
        )


class DivergenceStencil:
    """Q2 -> Q1 operator ``B`` with its transpose applied from the same data.

    ``coef`` has shape ``(N+1, N+1, 2, 25)``: per pressure node, per
    velocity component, the 25 Q2 neighbors of the surrounding 2x2 element
    patch in canonical order.  ``B^T`` is never stored separately.
    """

    def __init__(self, grid: StructuredGrid, coef: np.ndarray):
        n1 = grid.n_nodes
        if coef.shape != (n1, n1, 2, 25):
            raise ValueError(f"B coefficients have shape {coef.shape}")
        self.grid = grid
        self.coef = coef

    @property
    def nnz(self) -> int:
        return self.coef.size

    @property
    def shape(self) -> tuple[int, int]:
        return self.grid.n_nodes ** 2, 2 * self.grid.n_fine ** 2

    def matvec(self, u: np.ndarray) -> np.ndarray:
        """``B u`` for ``u = [u_x, u_y]`` (length ``2 (2N+1)^2``)."""
        nf, n1 = self.grid.n_fine, self.grid.n_nodes
        if u.size != 2 * nf * nf:
            raise ValueError(f"vector of length {u.size} does not match N={self.grid.n_elem}")
        y = np.zeros((n1, n1))
        for comp in range(2):
            up = _pad(u[comp * nf * nf : (comp + 1) * nf * nf].reshape(nf, nf), 2)
            for k, (di, dj) in enumerate(NODE_OFFSETS):
                y += self.coef[:, :, comp, k] * up[2 + dj : 2 + dj + 2 * n1 - 1 : 2, 2 + di : 2 + di + 2 * n1 - 1 : 2]
        K.tally(K.Q2Q1_Q2, self.nnz + u.size, y.size, self.nnz)
        return y.ravel()

    def rmatvec(self, p: np.ndarray) -> np.ndarray:
        """``B^T p``, scattered slot by slot from the ``B`` coefficients."""
        nf, n1 = self.grid.n_fine, self.grid.n_nodes
        if p.size != n1 * n1:
            raise ValueError(f"vector of length {p.size} does not match N={self.grid.n_elem}")
        pl = p.reshape(n1, n1)
        out = np.empty(2 * nf * nf)
        for comp in range(2):
            acc = np.zeros((nf + 4, nf + 4))
            for k, (di, dj) in enumerate(NODE_OFFSETS):
                acc[2 + dj : 2 + dj + 2 * n1 - 1 : 2, 2 + di : 2 + di + 2 * n1 - 1 : 2] += self.coef[:, :, comp, k] * pl
            out[comp * nf * nf : (comp + 1) * nf * nf] = acc[2:-2, 2:-2].ravel()
        K.tally(K.Q2Q1_Q1, self.nnz + p.size, out.size, self.nnz)
        return out

    def to_sparse(self) -> sp.csr_matrix:
        nf, n1 = self.grid.n_fine, self.grid.n_nodes
        j, i = np.meshgrid(np.arange(n1), np.arange(n1), indexing="ij")
        rows, cols, vals = [], [], []
        for comp in range(2):
            for k, (di, dj) in enumerate(NODE_OFFSETS):
                I2, J2 = 2 * i + di, 2 * j + dj
                ok = (I2 >= 0) & (I2 < nf) & (J2 >= 0) & (J2 < nf)
                rows.append((j * n1 + i)[ok])
                cols.append((comp * nf * nf + J2 * nf + I2)[ok])
                vals.append(self.coef[:, :, comp, k][ok])
        return sp.csr_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=self.shape
        )


class Q1Stencil:
    """Q1 -> Q1 operator (pressure mass matrix), 9 neighbors per node."""

    def __init__(self, grid: StructuredGrid, coef: np.ndarray):
        n1 = grid.n_nodes
        if coef.shape != (n1, n1, 9):
            raise ValueError(f"Q1 coefficients have shape {coef.shape}")
        self.grid = grid
        self.coef = coef

    @property
    def nnz(self) -> int:
        return self.coef.size

    @property
    def shape(self) -> tuple[int, int]:
        n = self.grid.n_nodes ** 2
        return n, n

    def diagonal(self) -> np.ndarray:
        return self.coef[:, :, 4].ravel().copy()

    def matvec(self, x: np.ndarray) -> np.ndarray:
        n1 = self.grid.n_nodes
        if x.size != n1 * n1:
            raise ValueError(f"vector of length {x.size} does not match N={self.grid.n_elem}")
        xp = _pad(x.reshape(n1, n1), 1)
        y = np.zeros((n1, n1))
        for k, (di, dj) in enumerate(Q1_OFFSETS):
            y += self.coef[:, :, k] * xp[1 + dj : 1 + dj + n1, 1 + di : 1 + di + n1]
        K.tally(K.Q1Q1, self.nnz + x.size, y.size, self.nnz)
        return y.ravel()

    def to_sparse(self) -> sp.csr_matrix:
        n1 = self.grid.n_nodes
        j, i = np.meshgrid(np.arange(n1), np.arange(n1), indexing="ij")
        rows, cols, vals = [], [], []
        for k, (di, dj) in enumerate(Q1_OFFSETS):
            i2, j2 = i + di, j + dj
            ok = (i2 >= 0) & (i2 < n1) & (j2 >= 0) & (j2 < n1)
            rows.append((j * n1 + i)[ok])
            cols.append((j2 * n1 + i2)[ok])
            vals.append(self.coef[:, :, k][ok])
        n = n1 * n1
        return sp.csr_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)
        )


def matvec_q2q2(A: Q2Stencil, x: np.ndarray) -> np.ndarray:
    return A.matvec(x)


def matvec_q2_to_q1(B: DivergenceStencil, u: np.ndarray) -> np.ndarray:
    return B.matvec(u)


def matvec_q1_to_q2(B: DivergenceStencil, p: np.ndarray) -> np.ndarray:
    return B.rmatvec(p)


class BlockVector:
    """Concatenated ``(u_x, u_y, p)`` coefficients over one flat array.

    ``u_x``, ``u_y`` and ``p`` are views, so writing through them updates
    ``data``.
    """

    __slots__ = ("grid", "data")

    def __init__(self, grid: StructuredGrid, data: np.ndarray | None = None):
        self.grid = grid
        n, _, m = block_sizes(grid)
        if data is None:
            data = np.zeros(2 * n + m)
        data = np.asarray(data, dtype=float)
        if data.shape != (2 * n + m,):
            raise ValueError(f"expected length {2 * n + m}, got {data.shape}")
        self.data = data

    @property
    def n(self) -> int:
        return self.grid.n_fine ** 2

    @property
    def u(self) -> np.ndarray:
        return self.data[: 2 * self.n]

    @property
    def u_x(self) -> np.ndarray:
        return self.data[: self.n]

    @property
    def u_y(self) -> np.ndarray:
        return self.data[self.n : 2 * self.n]

    @property
    def p(self) -> np.ndarray:
        return self.data[2 * self.n :]

    @classmethod
    def from_parts(cls, grid, u, p) -> "BlockVector":
        return cls(grid, np.concatenate([np.ravel(u), np.ravel(p)]))

    def copy(self) -> "BlockVector":
        return BlockVector(self.grid, self.data.copy())

    def __len__(self) -> int:
        return self.data.size

    def __repr__(self) -> str:
        return f"BlockVector(N={self.grid.n_elem}, len={self.data.size})"


def block_sizes(grid: StructuredGrid) -> tuple[int, int, int]:
    """``(n, 2n, m)``: per-component velocity, total velocity and pressure sizes."""
    n = grid.n_fine ** 2
    return n, 2 * n, grid.n_nodes ** 2


# -- array operations -------------------------------------------------------

def _raw(x):
    return x.data if isinstance(x, BlockVector) else np.asarray(x)


def _wrap(like, arr):
    return BlockVector(like.grid, arr) if isinstance(like, BlockVector) else arr


def _same_len(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise ValueError(f"length mismatch: {a.shape} vs {b.shape}")


def add(x, y):
    a, b = _raw(x), _raw(y)
    _same_len(a, b)
    K.tally(K.ADD_SUB, 2 * a.size, a.size, a.size)
    return _wrap(x, a + b)


def sub(x, y):
    a, b = _raw(x), _raw(y)
    _same_len(a, b)
    K.tally(K.ADD_SUB, 2 * a.size, a.size, a.size)
    return _wrap(x, a - b)


def scale(alpha: float, x):
    a = _raw(x)
    K.tally(K.SCALE, a.size, a.size, a.size)
    return _wrap(x, alpha * a)


def axpy(alpha: float, x, y):
    """``alpha * x + y``."""
    a, b = _raw(x), _raw(y)
    _same_len(a, b)
    K.tally(K.AXPY, 2 * a.size, a.size, 2 * a.size)
    return _wrap(y, alpha * a + b)


def hadamard(d, x):
    """Elementwise product, e.g. applying a stored inverse diagonal."""
    a, b = _raw(d), _raw(x)
    _same_len(a, b)
    K.tally(K.HADAMARD, 2 * a.size, a.size, a.size)
    return _wrap(x, a * b)


def dot(x, y) -> float:
    a, b = _raw(x), _raw(y)
    _same_len(a, b)
    K.tally(K.DOT, 2 * a.size, 0, 2 * a.size)
    return float(a @ b)


def norm2(x) -> float:
    a = _raw(x)
    K.tally(K.DOT, a.size, 0, 2 * a.size)
    return float(np.sqrt(a @ a))


def write_matrix_market(path, stencil, comment: str = "") -> None:
    """Dump any stencil operator as Matrix Market coordinate text."""
    scipy.io.mmwrite(str(path), stencil.to_sparse().tocoo(), comment=comment, precision=17)
