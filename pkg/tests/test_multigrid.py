import numpy as np
import pytest
import scipy.sparse.linalg as spla

from stokeslab.braess_sarazin import BraessSarazin, SchurUzawa
from stokeslab.multigrid import CoarseSolver, MGHierarchy, ScalarMGHierarchy, WeightedJacobi
from stokeslab.vanka import Vanka

RELAXATIONS = {"bs": BraessSarazin, "vanka": Vanka, "uzawa": SchurUzawa}


def exact_solution(problem):
    """Consistent ``(b, x)`` pair: ``b = A x`` for a random ``x``."""
    rng = np.random.default_rng(3)
    x = rng.standard_normal(problem.rhs.data.size)
    return problem.finest.apply(x), x


@pytest.mark.parametrize("relax", sorted(RELAXATIONS))
def test_vcycle_fixed_point(problems, relax):
    pb = problems(16)
    h = MGHierarchy(pb, RELAXATIONS[relax])
    b, x = exact_solution(pb)
    out = h.vcycle(b, x)
    assert np.max(np.abs(out - x)) <= 1e-11 * np.max(np.abs(x))


@pytest.mark.parametrize("relax", sorted(RELAXATIONS))
def test_vcycle_zero_maps_to_zero(problems, relax):
    pb = problems(8)
    h = MGHierarchy(pb, RELAXATIONS[relax])
    assert not h.vcycle(np.zeros(pb.rhs.data.size)).any()


def test_stationary_vcycle_reduces_error(problems):
    pb = problems(16)
    h = MGHierarchy(pb, BraessSarazin)
    b = pb.rhs.data
    x = np.zeros_like(b)
    norms = [np.linalg.norm(b)]
    for _ in range(8):
        x = h.vcycle(b, x)
        norms.append(np.linalg.norm(pb.finest.residual(b, x)))
    assert np.all(np.diff(norms) < 0)
    assert norms[-1] < 2e-2 * norms[0]


def test_coarse_lu_solves_consistent_system(problems):
    pb = problems(4)
    ops = pb.levels[0]
    b, x = exact_solution(pb)
    y = CoarseSolver(ops).solve(b)
    np.testing.assert_allclose(ops.apply(y), b, atol=1e-10)
    m = ops.grid.n_nodes ** 2
    assert abs(y[-m:].sum()) < 1e-10


def test_coarse_sweeps_mode_counts_sweeps(problems):
    ops = problems(4).levels[0]
    cs = CoarseSolver(ops, "sweeps", BraessSarazin(ops), sweeps=3)
    cs.solve(np.ones(2 * 81 + 25))
    assert cs.sweeps_done == 3
    with pytest.raises(ValueError):
        CoarseSolver(ops, "sweeps")
    with pytest.raises(ValueError):
        CoarseSolver(ops, "qr")


def test_hierarchy_with_sweep_coarse_solver_still_preconditions(problems):
    from stokeslab.krylov import FgmresConfig, fgmres_solve

    pb = problems(16)
    h = MGHierarchy(pb, BraessSarazin, coarse_solver="sweeps")
    _, rep = fgmres_solve(pb.finest.apply, pb.rhs.data, None, FgmresConfig(rel_tol=1e-8), h)
    assert rep.converged


def test_invalid_levels_and_counts(problems):
    pb = problems(8)
    h = MGHierarchy(pb, BraessSarazin)
    with pytest.raises(IndexError):
        h.vcycle(pb.rhs.data, level=5)
    with pytest.raises(ValueError):
        MGHierarchy(pb, BraessSarazin, nu1=-1)


def test_preconditioner_output_has_zero_mean_pressure(problems, rng):
    pb = problems(8)
    h = MGHierarchy(pb, BraessSarazin)
    z = h(rng.standard_normal(pb.rhs.data.size))
    assert abs(z[-81:].mean()) < 1e-14 * np.abs(z).max()


@pytest.mark.parametrize("which,omega,reduction", [("M", 0.6, 1e-2), ("L", 1.0, 1e-6)])
def test_scalar_multigrid_converges(problems, rng, which, omega, reduction):
    pb = problems(32)
    ops = [getattr(o, which) for o in pb.levels]
    P = [t.q1 if which == "M" else t.q2 for t in pb.transfers]
    h = ScalarMGHierarchy(ops, P, omega)
    A = ops[-1].to_sparse().tocsc()
    b = rng.standard_normal(A.shape[0])
    x = h.solve(b, 6)
    ref = spla.spsolve(A, b)
    assert np.linalg.norm(x - ref) < reduction * np.linalg.norm(ref)
    assert not h.vcycle(np.zeros_like(b)).any()


def test_weighted_jacobi_validation(problems):
    M = problems(4).levels[0].M
    with pytest.raises(ValueError):
        WeightedJacobi(M, 2.5)
