"""Additive Vanka relaxation with shared patch inverses.

One patch per mesh node: the pressure DOF at the node plus every velocity
DOF of the (up to) 2x2 adjacent elements.  On a uniform grid with a
constant-coefficient operator the patch matrix depends only on where the
node sits relative to the boundary.  Per dimension the position falls in
one of five categories (on the boundary, one node in, generic interior, one
node from the far side, on the far boundary), giving 25 groups whose
members share a single dense inverse.

``tuned`` mode stores one inverse per group; ``simple`` mode stores one per
patch.  Both give the same update.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import counters as K
from . import stencil as st
from .assembly import StokesOperators

GENERIC = 2  # category of nodes at least two away from either boundary
_CHUNK = 2048


class PatchBuildError(RuntimeError):
    pass


def node_category(i: int, n_elem: int) -> int:
    if i == 0:
        return 0
    if i == n_elem:
        return 4
    if i == 1:
        return 1
    if i == n_elem - 1:
        return 3
    return GENERIC


def _window(cat: int) -> np.ndarray:
    """Fine-lattice offsets covered by a patch of the given category."""
    if cat == 0:
        return np.arange(0, 3)
    if cat == 4:
        return np.arange(-2, 1)
    return np.arange(-2, 3)


@dataclass
class PatchGroup:
    gid: int
    cat: tuple[int, int]  # (x category, y category)
    members: np.ndarray  # patch ids (j * (N+1) + i), ascending
    dofs: np.ndarray  # (n_members, size) global DOF indices in canonical local order
    inverse: np.ndarray  # (size, size) tuned, or (n_members, size, size) simple
    local_offsets: tuple[np.ndarray, np.ndarray] = field(repr=False)

    @property
    def size(self) -> int:
        return self.dofs.shape[1]

    @property
    def interior(self) -> bool:
        return self.cat == (GENERIC, GENERIC)


class VankaPatchSet:
    """Patch index maps, the group partition and the stored inverses."""

    def __init__(self, ops: StokesOperators, groups: list[PatchGroup], mode: str):
        self.ops = ops
        self.grid = ops.grid
        self.groups = groups
        self.mode = mode
        self.n_patches = self.grid.n_nodes ** 2
        n_total = sum(g.dofs.size for g in groups)
        # scatter in ascending patch order regardless of group layout
        patch_of_entry = np.concatenate([np.repeat(g.members, g.size) for g in groups])
        self._perm = np.argsort(patch_of_entry, kind="stable")
        self._scatter_idx = np.concatenate([g.dofs.ravel() for g in groups])[self._perm]
        self.n_dofs = 2 * self.grid.n_fine ** 2 + self.grid.n_nodes ** 2
        self.multiplicity = np.bincount(self._scatter_idx, minlength=self.n_dofs)
        self.total_patch_dofs = n_total

    @property
    def n_groups(self) -> int:
        return len(self.groups)

    def stored_inverses(self) -> int:
        return sum(1 if g.inverse.ndim == 2 else g.inverse.shape[0] for g in self.groups)

    def inverse_bytes(self) -> int:
        return sum(g.inverse.nbytes for g in self.groups)

    def patch_dofs(self, patch_id: int) -> np.ndarray:
        for g in self.groups:
            k = np.searchsorted(g.members, patch_id)
            if k < g.members.size and g.members[k] == patch_id:
                return g.dofs[k]
        raise IndexError(patch_id)

    def patch_inverse(self, patch_id: int) -> np.ndarray:
        for g in self.groups:
            k = np.searchsorted(g.members, patch_id)
            if k < g.members.size and g.members[k] == patch_id:
                return g.inverse if g.inverse.ndim == 2 else g.inverse[k]
        raise IndexError(patch_id)


def _group_layout(grid, ci: int, cj: int, members_i: np.ndarray, members_j: np.ndarray):
    n, n1 = grid.n_fine ** 2, grid.n_nodes
    wx, wy = _window(ci), _window(cj)
    dI = np.tile(wx, wy.size)  # x fastest: canonical order
    dJ = np.repeat(wy, wx.size)
    I = 2 * members_i[:, None] + dI[None, :]
    J = 2 * members_j[:, None] + dJ[None, :]
    vel = J * grid.n_fine + I
    pres = 2 * n + members_j * n1 + members_i
    dofs = np.concatenate([vel, vel + n, pres[:, None]], axis=1)
    return dofs, (dI, dJ)


def _local_blocks(ops: StokesOperators, Lwin, mi, mj, dI, dJ):
    """Velocity block ``(k, v, v)`` and divergence rows ``(k, 2, v)`` of each patch."""
    v = dI.size
    a_dI, b_dI = np.meshgrid(dI, dI, indexing="ij")
    a_dJ, b_dJ = np.meshgrid(dJ, dJ, indexing="ij")
    oi, oj = b_dI - a_dI, b_dJ - a_dJ
    valid = (np.abs(oi) <= 2) & (np.abs(oj) <= 2)
    ra, rb = np.nonzero(valid)
    I = 2 * mi[:, None] + a_dI[ra, rb][None, :]
    J = 2 * mj[:, None] + a_dJ[ra, rb][None, :]
    Lloc = np.zeros((mi.size, v, v))
    Lloc[:, ra, rb] = Lwin[J, I, oj[ra, rb] + 2, oi[ra, rb] + 2]
    k = (dJ + 2) * 5 + (dI + 2)
    Bloc = ops.B.coef[mj[:, None], mi[:, None], :, k[None, :]]  # (members, v, 2)
    return Lloc, np.swapaxes(Bloc, 1, 2)


def _assemble_patch(Lloc: np.ndarray, Bloc: np.ndarray) -> np.ndarray:
    k, v, _ = Lloc.shape
    s = 2 * v + 1
    A = np.zeros((k, s, s))
    A[:, :v, :v] = Lloc
    A[:, v : 2 * v, v : 2 * v] = Lloc
    A[:, -1, :v] = Bloc[:, 0]
    A[:, -1, v : 2 * v] = Bloc[:, 1]
    A[:, :v, -1] = Bloc[:, 0]
    A[:, v : 2 * v, -1] = Bloc[:, 1]
    return A


def _invert(A: np.ndarray) -> np.ndarray:
    try:
        inv = np.linalg.inv(A)
    except np.linalg.LinAlgError as exc:
        raise PatchBuildError("singular Vanka patch matrix") from exc
    if not np.all(np.isfinite(inv)):
        raise PatchBuildError("singular Vanka patch matrix")
    return inv


def build_patches(ops: StokesOperators, mode: str = "tuned", verify: bool = True,
                  tol: float = 1e-12) -> VankaPatchSet:
    """Extract, group and invert the patch matrices ``A_i = V_i A V_i^T``.

    With ``verify`` every member of a group is compared entrywise against
    the group representative before its inverse is shared.
    """
    if mode not in ("tuned", "simple"):
        raise ValueError(f"unknown Vanka mode {mode!r}")
    grid = ops.grid
    N, n1 = grid.n_elem, grid.n_nodes
    cats = np.array([node_category(i, N) for i in range(n1)])
    Lwin = ops.L.to_window()
    jj, ii = np.meshgrid(np.arange(n1), np.arange(n1), indexing="ij")
    groups = []
    for cj in range(5):
        for ci in range(5):
            sel = (cats[jj] == cj) & (cats[ii] == ci)
            if not sel.any():
                continue
            mi, mj = ii[sel], jj[sel]  # row-major order: patch ids ascending
            dofs, (dI, dJ) = _group_layout(grid, ci, cj, mi, mj)
            Lrep, Brep = _local_blocks(ops, Lwin, mi[:1], mj[:1], dI, dJ)
            rep = _assemble_patch(Lrep, Brep)[0]
            inverses = []
            for c0 in range(0, mi.size, _CHUNK):
                if not (verify or mode == "simple"):
                    break
                Lc, Bc = _local_blocks(ops, Lwin, mi[c0 : c0 + _CHUNK], mj[c0 : c0 + _CHUNK], dI, dJ)
                if verify:
                    dev = max(np.max(np.abs(Lc - Lrep)), np.max(np.abs(Bc - Brep)))
                    if dev > tol:
                        raise PatchBuildError(
                            f"group {(ci, cj)} members differ from representative by {dev:.3e}"
                        )
                if mode == "simple":
                    inverses.append(_invert(_assemble_patch(Lc, Bc)))
            inverse = _invert(rep) if mode == "tuned" else np.concatenate(inverses)
            groups.append(PatchGroup(len(groups), (ci, cj), mj * n1 + mi, dofs, inverse, (dI, dJ)))
    return VankaPatchSet(ops, groups, mode)


def patch_matrix(patches: VankaPatchSet, group: PatchGroup, member: int = 0) -> np.ndarray:
    """Dense ``A_i`` of one group member, extracted from the stencils."""
    dI, dJ = group.local_offsets
    n1 = patches.grid.n_nodes
    pid = group.members[member]
    Lc, Bc = _local_blocks(patches.ops, patches.ops.L.to_window(), np.array([pid % n1]),
                           np.array([pid // n1]), dI, dJ)
    return _assemble_patch(Lc, Bc)[0]


def form_patch_rhs(patches: VankaPatchSet, r: np.ndarray) -> list[np.ndarray]:
    """Gather ``V_i r`` for every patch into per-group contiguous storage."""
    packed = [r[g.dofs] for g in patches.groups]
    total = patches.total_patch_dofs
    K.tally(K.VANKA_FORM, total, total, 0)
    return packed


def apply_patch_inverses(patches: VankaPatchSet, packed: list[np.ndarray]) -> list[np.ndarray]:
    out = []
    for g, rhs in zip(patches.groups, packed):
        k, s = rhs.shape
        if g.inverse.ndim == 2:
            out.append(rhs @ g.inverse.T)
        else:
            out.append(np.einsum("pij,pj->pi", g.inverse, rhs))
        K.tally(K.VANKA_INT if g.interior else K.VANKA_EXT, k * (s * s + s), k * s, 2 * k * s * s)
    return out


WEIGHTINGS = ("scalar", "overlap", "sqrt-overlap")


def patch_weights(patches: VankaPatchSet, omega: float, weighting: str = "scalar",
                  omega_p: float | None = None) -> np.ndarray:
    """Per-entry weights in scatter order (the diagonals of the ``W_i``).

    Velocity entries get ``omega``, ``omega / c`` or ``omega / sqrt(c)`` where
    ``c`` is the number of patches sharing the DOF.  Pressure entries (each in
    exactly one patch) get ``omega_p``, defaulting to the velocity formula.
    """
    if weighting not in WEIGHTINGS:
        raise ValueError(f"unknown Vanka weighting {weighting!r}")
    mult = patches.multiplicity[patches._scatter_idx].astype(float)
    if weighting == "scalar":
        w = np.full(mult.size, omega)
    elif weighting == "overlap":
        w = omega / mult
    else:
        w = omega / np.sqrt(mult)
    if omega_p is not None:
        n_u = 2 * patches.grid.n_fine ** 2
        w[patches._scatter_idx >= n_u] = omega_p
    return w


def scatter_update(patches: VankaPatchSet, packed: list[np.ndarray], weights: np.ndarray,
                   x: np.ndarray) -> np.ndarray:
    """``x + sum_i V_i^T W_i delta_i``, accumulated in ascending patch order."""
    vals = np.concatenate([d.ravel() for d in packed])[patches._perm] * weights
    total = patches.total_patch_dofs
    K.tally(K.VANKA_UPDATE, total, total, total)
    return x + np.bincount(patches._scatter_idx, weights=vals, minlength=x.size)


class Vanka:
    """Additive Vanka relaxation on one level."""

    def __init__(self, ops: StokesOperators, omega: float = 0.4, mode: str = "tuned",
                 weighting: str = "sqrt-overlap", omega_p: float | None = 0.8, verify: bool = True):
        if omega <= 0 or (omega_p is not None and omega_p <= 0):
            raise ValueError("Vanka weights must be positive")
        self.ops = ops
        self.omega = omega
        self.omega_p = omega_p
        self.patches = build_patches(ops, mode, verify)
        self.weights = patch_weights(self.patches, omega, weighting, omega_p)

    def correction(self, r: np.ndarray) -> np.ndarray:
        packed = form_patch_rhs(self.patches, r)
        deltas = apply_patch_inverses(self.patches, packed)
        return scatter_update(self.patches, deltas, self.weights, np.zeros_like(r))

    def sweep(self, b: np.ndarray, x: np.ndarray) -> np.ndarray:
        r = self.ops.residual(b, x)
        deltas = apply_patch_inverses(self.patches, form_patch_rhs(self.patches, r))
        return scatter_update(self.patches, deltas, self.weights, x)


def vanka_sweep(ops: StokesOperators, r_u: np.ndarray, r_p: np.ndarray, mode: str = "tuned",
                omega: float = 0.4, weighting: str = "sqrt-overlap", omega_p: float | None = 0.8):
    d = Vanka(ops, omega, mode, weighting, omega_p).correction(np.concatenate([r_u, r_p]))
    n = r_u.size
    return d[:n], d[n:]
