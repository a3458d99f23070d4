"""Analytic cost model: theoretical kernel counts, arithmetic intensity, roofline.

All counts are in doubles; the byte model is ``8 * (reads + writes)``.
Modeled time of a kernel is ``max(bytes / bandwidth, flops / peak)``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

from . import counters as K

BYTES_PER_DOUBLE = 8


@dataclass(frozen=True)
class MachineModel:
    peak_flops: float = 9472.34e9  # flop/s
    bandwidth: float = 1264.42e9  # byte/s

    def __post_init__(self):
        if self.peak_flops <= 0 or self.bandwidth <= 0:
            raise ValueError("machine rates must be positive")

    @property
    def ridge(self) -> float:
        """AI at which the roofline turns from memory- to compute-bound."""
        return self.peak_flops / self.bandwidth


# -- theoretical counts ------------------------------------------------------

TABLE1_KERNELS = (
    K.ADD_SUB,
    K.SCALE,
    K.Q2Q2,
    K.Q2Q1_Q2,
    K.Q2Q1_Q1,
    K.JACOBI,
    K.VANKA_FORM,
    "Vanka: apply matrix inverse",
    K.VANKA_UPDATE,
)
VANKA_APPLY = TABLE1_KERNELS[7]


def sizes(n_elem: int) -> tuple[int, int, int]:
    """``(n, m, l)``: velocity DOFs per component, pressure DOFs, ``N - 1``."""
    if n_elem < 1:
        raise ValueError("n_elem must be positive")
    return (2 * n_elem + 1) ** 2, (n_elem + 1) ** 2, n_elem - 1


def patch_dof_total(l: int) -> int:
    """Velocity and pressure entries gathered over all Vanka patches."""
    return 76 + 124 * l + 51 * l * l


def theoretical_counts(kernel: str, n_elem: int, literal: bool = False) -> tuple[int, int, int]:
    """``(reads, writes, flops)`` of one kernel call on an ``N x N`` grid.

    Matrix-vector rows use the dense convention (every matrix entry read and
    multiplied).  ``literal`` evaluates the update-solution row exactly as
    printed, with a linear last term, instead of the patch-DOF total.
    """
    n, m, l = sizes(n_elem)
    t = patch_dof_total(l)
    if kernel == K.ADD_SUB:
        return 2 * (2 * n + m), 2 * n + m, 2 * n + m
    if kernel == K.SCALE:
        return 2 * n + m, 2 * n + m, 2 * n + m
    if kernel == K.Q2Q2:
        return n * n + n, n, n * n
    if kernel == K.Q2Q1_Q2:
        return n * m + n, m, n * m
    if kernel == K.Q2Q1_Q1:
        return n * m + m, n, n * m
    if kernel == K.JACOBI:
        return 2 * m, m, 2 * m
    if kernel == K.VANKA_FORM:
        return t, t, 0
    if kernel == VANKA_APPLY:
        return 1520 + 3968 * l + 2652 * l * l, t, 2888 + 7688 * l + 5202 * l * l
    if kernel == K.VANKA_UPDATE:
        if literal:
            t = 76 + 124 * l + 51 * l
        return t, t, t
    raise KeyError(f"no theoretical count for kernel {kernel!r}")


def interior_vanka_apply() -> tuple[int, int, int]:
    """Counts of one interior patch (size 51) inverse application."""
    s = 51
    return s * s + s, s, 2 * s * s


# -- intensity and performance -----------------------------------------------

def bytes_moved(reads: int, writes: int) -> int:
    return BYTES_PER_DOUBLE * (reads + writes)


def arithmetic_intensity(counts: tuple[int, int, int]) -> float:
    r, w, f = counts
    if min(r, w, f) < 0:
        raise ValueError("counts must be non-negative")
    b = bytes_moved(r, w)
    if f == 0 or b == 0:
        return 0.0
    return f / b


def modeled_time(counts: tuple[int, int, int], machine: MachineModel = MachineModel()) -> float:
    r, w, f = counts
    return max(bytes_moved(r, w) / machine.bandwidth, f / machine.peak_flops)


def modeled_performance(counts: tuple[int, int, int], machine: MachineModel = MachineModel()) -> float:
    """flop/s; zero for kernels without flops."""
    t = modeled_time(counts, machine)
    return counts[2] / t if t > 0 else 0.0


def roofline_bound(ai: float, machine: MachineModel = MachineModel()) -> float:
    return min(machine.peak_flops, ai * machine.bandwidth)


# -- reference intensity/performance table ------------------------------------

# printed AI [flop/byte] and performance [GFLOP/s] at N = 512
TABLE2 = {
    K.ADD_SUB: (0.0417, 9.821),
    K.SCALE: (0.0625, 14.731),
    K.Q2Q2: (0.125, 29.462),
    K.Q2Q1_Q2: (0.125, 29.462),
    K.Q2Q1_Q1: (0.125, 29.462),
    K.JACOBI: (0.0833, 16.367),
    K.VANKA_FORM: (0.0, 0.0),
    VANKA_APPLY: (0.241, 56.697),
    K.VANKA_UPDATE: (0.0625, 14.731),
}


@dataclass
class Table2Row:
    kernel: str
    reads: int
    writes: int
    flops: int
    ai: float
    gflops: float
    printed_ai: float
    printed_gflops: float


def table2(n_elem: int = 512, machine: MachineModel = MachineModel()) -> list[Table2Row]:
    rows = []
    for k in TABLE1_KERNELS:
        c = theoretical_counts(k, n_elem)
        rows.append(Table2Row(k, *c, arithmetic_intensity(c), modeled_performance(c, machine) / 1e9,
                              *TABLE2[k]))
    return rows


def sig_equal(a: float, b: float, digits: int = 3) -> bool:
    """Agreement to ``digits`` significant figures."""
    if a == b:
        return True
    if a == 0 or b == 0:
        return False
    return float(f"{a:.{digits - 1}e}") == float(f"{b:.{digits - 1}e}")


# -- reports from measured counters -----------------------------------------

def kernel_family(label: str) -> str:
    """Collapse sub-kernel labels onto the kernel they belong to."""
    if label.startswith(K.Q2Q2):
        return K.Q2Q2
    if label in (K.VANKA_INT, K.VANKA_EXT):
        return VANKA_APPLY
    return label


@dataclass
class KernelCost:
    kernel: str
    reads: int
    writes: int
    flops: int
    ai: float
    modeled_perf: float
    modeled_time: float
    pct: float = 0.0


def cost_report(counter: K.OpCounter, machine: MachineModel = MachineModel(),
                by_family: bool = False) -> list[KernelCost]:
    """Per-kernel modeled cost, largest share first."""
    grouped: dict[str, list[int]] = {}
    for label, t in counter.kernels.items():
        key = kernel_family(label) if by_family else label
        acc = grouped.setdefault(key, [0, 0, 0])
        acc[0] += t.reads
        acc[1] += t.writes
        acc[2] += t.flops
    rows = []
    for label, c in grouped.items():
        c = tuple(c)
        rows.append(KernelCost(label, *c, arithmetic_intensity(c), modeled_performance(c, machine),
                               modeled_time(c, machine)))
    total = sum(r.modeled_time for r in rows)
    for r in rows:
        r.pct = 100.0 * r.modeled_time / total if total > 0 else 0.0
    rows.sort(key=lambda r: (-r.modeled_time, r.kernel))
    return rows


def total_modeled_time(counter: K.OpCounter, machine: MachineModel = MachineModel()) -> float:
    return sum(modeled_time((t.reads, t.writes, t.flops), machine) for t in counter.kernels.values())


def share(rows: list[KernelCost], kernels) -> float:
    """Summed percentage of the named kernels."""
    kernels = set(kernels)
    return sum(r.pct for r in rows if r.kernel in kernels)


KERNEL_FIELDS = ("kernel", "reads", "writes", "flops", "ai", "modeled_perf", "modeled_time", "pct")
ROOFLINE_FIELDS = ("kernel", "ai", "perf", "bound")


def write_kernels_csv(rows: list[KernelCost], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(KERNEL_FIELDS)
        for r in rows:
            w.writerow([r.kernel, r.reads, r.writes, r.flops, f"{r.ai:.6g}", f"{r.modeled_perf:.6g}",
                        f"{r.modeled_time:.6g}", f"{r.pct:.4f}"])


def write_roofline_csv(rows: list[KernelCost], path: str | Path,
                       machine: MachineModel = MachineModel()) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(ROOFLINE_FIELDS)
        for r in rows:
            bound = "compute" if r.ai >= machine.ridge else "memory"
            w.writerow([r.kernel, f"{r.ai:.6g}", f"{r.modeled_perf:.6g}", bound])


def write_table2_csv(rows: list[Table2Row], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(("kernel", "reads", "writes", "flops", "ai", "gflops", "printed_ai", "printed_gflops"))
        for r in rows:
            w.writerow([r.kernel, r.reads, r.writes, r.flops, f"{r.ai:.6g}", f"{r.gflops:.6g}",
                        r.printed_ai, r.printed_gflops])
