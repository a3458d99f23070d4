"""Uniform quadrilateral grid on the unit square with Q2/Q1 DOF numbering.

All Q2 degrees of freedom of one velocity component live on a single
``(2N+1) x (2N+1)`` "fine lattice" whose point ``(I, J)`` sits at
``(I*h/2, J*h/2)``.  The four Q2 classes are told apart by coordinate
parity:

========  ======  ======
class     I       J
========  ======  ======
node      even    even
x-edge    odd     even
y-edge    even    odd
center    odd     odd
========  ======  ======

Pressure (Q1) DOFs live on the ``(N+1) x (N+1)`` node lattice.  Flat offsets
are lexicographic with x fastest, so arrays shaped ``(ny, nx)`` in C order
ravel to the global numbering.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

NODE = "node"
XEDGE = "x-edge"
YEDGE = "y-edge"
CENTER = "center"
PRESSURE = "pressure"

Q2_CLASSES = (NODE, XEDGE, YEDGE, CENTER)
DOF_CLASSES = Q2_CLASSES + (PRESSURE,)

# fine-lattice parity (I % 2, J % 2) of each Q2 class
CLASS_PARITY = {NODE: (0, 0), XEDGE: (1, 0), YEDGE: (0, 1), CENTER: (1, 1)}

# half-width of the stencil window in fine-lattice units, per class (x, y)
CLASS_REACH = {NODE: (2, 2), XEDGE: (1, 2), YEDGE: (2, 1), CENTER: (1, 1)}


def class_offsets(cls: str) -> list[tuple[int, int]]:
    """Fine-lattice offsets ``(dI, dJ)`` of a Q2 row's neighbors.

    The order is the canonical local numbering used by every stencil row and
    every Vanka patch: y offset major, x offset minor (lexicographic).
    """
    rx, ry = CLASS_REACH[cls]
    return [(di, dj) for dj in range(-ry, ry + 1) for di in range(-rx, rx + 1)]


class DofIndex(NamedTuple):
    cls: str
    i: int
    j: int


@dataclass(frozen=True)
class StructuredGrid:
    """``n_elem x n_elem`` uniform elements on ``[0, 1]^2``."""

    n_elem: int
    level: int = 0
    h: float = field(init=False)

    def __post_init__(self):
        if self.n_elem < 1:
            raise ValueError(f"need at least one element, got {self.n_elem}")
        object.__setattr__(self, "h", 1.0 / self.n_elem)

    @property
    def n_fine(self) -> int:
        """Fine-lattice points per dimension (2N+1)."""
        return 2 * self.n_elem + 1

    @property
    def n_nodes(self) -> int:
        return self.n_elem + 1

    def class_shape(self, cls: str) -> tuple[int, int]:
        """Index ranges ``(ni, nj)`` of a DOF class."""
        n = self.n_elem
        return {
            NODE: (n + 1, n + 1),
            XEDGE: (n, n + 1),
            YEDGE: (n + 1, n),
            CENTER: (n, n),
            PRESSURE: (n + 1, n + 1),
        }[cls]

    def coarsened(self) -> "StructuredGrid":
        if self.n_elem % 2:
            raise ValueError(f"cannot coarsen odd grid N={self.n_elem}")
        return StructuredGrid(self.n_elem // 2, self.level - 1)


def hierarchy_sizes(n_elem: int, coarsest_n: int) -> list[int]:
    """Element counts from coarsest to finest; ``n_elem = coarsest_n * 2**k``."""
    if coarsest_n < 2:
        raise ValueError("coarsest grid needs N >= 2")
    sizes = [n_elem]
    while sizes[-1] > coarsest_n:
        if sizes[-1] % 2:
            raise ValueError(f"N={n_elem} is not coarsest_n={coarsest_n} times a power of two")
        sizes.append(sizes[-1] // 2)
    if sizes[-1] != coarsest_n:
        raise ValueError(f"N={n_elem} is not coarsest_n={coarsest_n} times a power of two")
    return sizes[::-1]


def _check(grid: StructuredGrid, d: DofIndex) -> None:
    if d.cls not in DOF_CLASSES:
        raise ValueError(f"unknown DOF class {d.cls!r}")
    ni, nj = grid.class_shape(d.cls)
    if not (0 <= d.i < ni and 0 <= d.j < nj):
        raise IndexError(f"{d} out of range for N={grid.n_elem}")


def fine_position(grid: StructuredGrid, d: DofIndex) -> tuple[int, int]:
    """Fine-lattice coordinates ``(I, J)`` of a Q2 DOF."""
    _check(grid, d)
    if d.cls == PRESSURE:
        raise ValueError("pressure DOFs are not on the Q2 lattice")
    pi, pj = CLASS_PARITY[d.cls]
    return 2 * d.i + pi, 2 * d.j + pj


def from_fine_position(grid: StructuredGrid, I: int, J: int) -> DofIndex:
    nf = grid.n_fine
    if not (0 <= I < nf and 0 <= J < nf):
        raise IndexError(f"fine point ({I}, {J}) out of range for N={grid.n_elem}")
    cls = {v: k for k, v in CLASS_PARITY.items()}[(I % 2, J % 2)]
    return DofIndex(cls, I // 2, J // 2)


def flat_offset(grid: StructuredGrid, d: DofIndex) -> int:
    """Lexicographic offset of ``d`` within its own class."""
    _check(grid, d)
    ni, _ = grid.class_shape(d.cls)
    return d.j * ni + d.i


def from_flat_offset(grid: StructuredGrid, cls: str, k: int) -> DofIndex:
    ni, nj = grid.class_shape(cls)
    if not 0 <= k < ni * nj:
        raise IndexError(f"offset {k} out of range for class {cls}")
    return DofIndex(cls, k % ni, k // ni)


def lattice_offset(grid: StructuredGrid, d: DofIndex) -> int:
    """Offset of a Q2 DOF in the per-component velocity vector."""
    I, J = fine_position(grid, d)
    return J * grid.n_fine + I


def dof_coordinates(grid: StructuredGrid, d: DofIndex) -> tuple[float, float]:
    _check(grid, d)
    h = grid.h
    if d.cls in (NODE, PRESSURE):
        return d.i * h, d.j * h
    if d.cls == XEDGE:
        return (d.i + 0.5) * h, d.j * h
    if d.cls == YEDGE:
        return d.i * h, (d.j + 0.5) * h
    return (d.i + 0.5) * h, (d.j + 0.5) * h


def dof_counts(grid: StructuredGrid) -> tuple[int, int, int]:
    """``(per-component velocity, total velocity, pressure)`` DOF counts."""
    n = grid.n_elem
    per = (2 * n + 1) ** 2
    return per, 2 * per, (n + 1) ** 2


def q2_coordinates(grid: StructuredGrid) -> tuple[np.ndarray, np.ndarray]:
    """Coordinates of every fine-lattice point, each shaped ``(ny, nx)``."""
    s = np.arange(grid.n_fine) * (0.5 * grid.h)
    x, y = np.meshgrid(s, s)
    return x, y


def q1_coordinates(grid: StructuredGrid) -> tuple[np.ndarray, np.ndarray]:
    s = np.arange(grid.n_nodes) * grid.h
    x, y = np.meshgrid(s, s)
    return x, y


def local_patch_numbering(grid: StructuredGrid, d: DofIndex) -> list[DofIndex]:
    """Q2 DOFs sharing an element with ``d``, in canonical local order.

    For a node this is the 2x2 element patch around it (25 DOFs in the
    interior, 15 on an edge, 9 at a corner); edge DOFs see their two
    elements and center DOFs their single element.
    """
    I0, J0 = fine_position(grid, d)
    nf = grid.n_fine
    out = []
    for di, dj in class_offsets(d.cls):
        I, J = I0 + di, J0 + dj
        if 0 <= I < nf and 0 <= J < nf:
            out.append(from_fine_position(grid, I, J))
    return out


def boundary_mask(grid: StructuredGrid) -> np.ndarray:
    """Boolean ``(ny, nx)`` fine-lattice mask of Dirichlet velocity DOFs.

    Applies to both velocity components.  Pressure DOFs never carry a
    Dirichlet condition.
    """
    nf = grid.n_fine
    mask = np.zeros((nf, nf), dtype=bool)
    mask[0, :] = mask[-1, :] = True
    mask[:, 0] = mask[:, -1] = True
    return mask
