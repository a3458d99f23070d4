"""Per-kernel read/write/flop tallies.

Kernels call :func:`tally`; the tallies land in every counter opened with
:func:`counting` in the current context.  Nothing is recorded when no
counter is active, so instrumented kernels cost nothing extra in normal use.
"""

from __future__ import annotations

from contextlib import contextmanager
from contextvars import ContextVar
from dataclasses import dataclass


@dataclass
class KernelTally:
    reads: int = 0
    writes: int = 0
    flops: int = 0
    calls: int = 0


class OpCounter:
    """Additive reads/writes/flops per kernel label (doubles, not bytes)."""

    def __init__(self):
        self.kernels: dict[str, KernelTally] = {}

    def add(self, label: str, reads: int, writes: int, flops: int) -> None:
        if reads < 0 or writes < 0 or flops < 0:
            raise ValueError("counter increments must be non-negative")
        t = self.kernels.setdefault(label, KernelTally())
        t.reads += int(reads)
        t.writes += int(writes)
        t.flops += int(flops)
        t.calls += 1

    def __getitem__(self, label: str) -> KernelTally:
        return self.kernels[label]

    def __contains__(self, label: str) -> bool:
        return label in self.kernels

    def get(self, label: str) -> KernelTally:
        return self.kernels.get(label, KernelTally())

    def totals(self) -> KernelTally:
        out = KernelTally()
        for t in self.kernels.values():
            out.reads += t.reads
            out.writes += t.writes
            out.flops += t.flops
            out.calls += t.calls
        return out

    def snapshot(self) -> dict[str, tuple[int, int, int]]:
        return {k: (t.reads, t.writes, t.flops) for k, t in self.kernels.items()}

    def merge(self, other: "OpCounter") -> None:
        for k, t in other.kernels.items():
            mine = self.kernels.setdefault(k, KernelTally())
            mine.reads += t.reads
            mine.writes += t.writes
            mine.flops += t.flops
            mine.calls += t.calls


_active: ContextVar[tuple[OpCounter, ...]] = ContextVar("stokeslab_counters", default=())


@contextmanager
def counting(counter: OpCounter | None = None):
    """Record every instrumented kernel call made inside the block."""
    counter = OpCounter() if counter is None else counter
    token = _active.set(_active.get() + (counter,))
    try:
        yield counter
    finally:
        _active.reset(token)


@contextmanager
def suspended():
    """Hide every active counter for the duration of the block."""
    token = _active.set(())
    try:
        yield
    finally:
        _active.reset(token)


def tally(label: str, reads: int, writes: int, flops: int) -> None:
    for c in _active.get():
        c.add(label, reads, writes, flops)


def active() -> bool:
    return bool(_active.get())


# kernel labels shared by the instrumented kernels and the cost model
ADD_SUB = "array plus/minus array"
SCALE = "array times scalar"
AXPY = "array axpy"
HADAMARD = "array times array"
DOT = "dot product"
Q2Q2 = "Q2 matrix * Q2 vector"
Q2Q2_SUB = {"node": f"{Q2Q2} (n)", "x-edge": f"{Q2Q2} (x)", "y-edge": f"{Q2Q2} (y)", "center": f"{Q2Q2} (c)"}
Q2Q1_Q2 = "Q2Q1 matrix * Q2 vector"
Q2Q1_Q1 = "Q2Q1 matrix * Q1 vector"
Q1Q1 = "Q1 matrix * Q1 vector"
JACOBI = "weighted Jacobi"
VANKA_FORM = "Vanka: form patch RHS"
VANKA_INT = "Vanka: apply matrix inverse (int)"
VANKA_EXT = "Vanka: apply matrix inverse (ext)"
VANKA_UPDATE = "Vanka: update global solution"
COARSE = "coarse dense solve"
