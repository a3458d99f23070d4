import numpy as np
import pytest

from stokeslab.braess_sarazin import BraessSarazin
from stokeslab.krylov import DivergenceError, FgmresConfig, fgmres_solve
from stokeslab.multigrid import MGHierarchy
from stokeslab.vanka import Vanka


def random_system(rng, n=40):
    A = np.eye(n) * 4 + rng.standard_normal((n, n)) * 0.3
    return A, rng.standard_normal(n)


def test_solves_nonsymmetric_dense_system(rng):
    A, b = random_system(rng)
    x, rep = fgmres_solve(lambda v: A @ v, b, cfg=FgmresConfig(rel_tol=1e-12))
    np.testing.assert_allclose(x, np.linalg.solve(A, b), rtol=1e-9, atol=1e-11)
    assert rep.converged and rep.final_rel_residual <= 1e-12
    assert len(rep.history) == rep.iterations + 1


def test_exact_preconditioner_converges_in_one_step(rng):
    A, b = random_system(rng)
    Ainv = np.linalg.inv(A)
    _, rep = fgmres_solve(lambda v: A @ v, b, precond=lambda v: Ainv @ v)
    assert rep.iterations == 1 and rep.converged


def test_history_is_monotone_and_true_residual(rng):
    A, b = random_system(rng, 60)
    x, rep = fgmres_solve(lambda v: A @ v, b, cfg=FgmresConfig(rel_tol=1e-10))
    assert np.all(np.diff(rep.history) <= 1e-14)
    assert np.linalg.norm(b - A @ x) / np.linalg.norm(b) == pytest.approx(rep.final_rel_residual)


def test_restart_still_converges(rng):
    A, b = random_system(rng, 60)
    x, rep = fgmres_solve(lambda v: A @ v, b, cfg=FgmresConfig(restart=5, max_iters=400, rel_tol=1e-10))
    assert rep.converged
    np.testing.assert_allclose(A @ x, b, atol=1e-8)


def test_iteration_cap_reports_not_converged(rng):
    A, b = random_system(rng, 60)
    _, rep = fgmres_solve(lambda v: A @ v, b, cfg=FgmresConfig(max_iters=3))
    assert rep.iterations == 3 and not rep.converged


def test_zero_rhs_and_initial_guess(rng):
    A, b = random_system(rng)
    x, rep = fgmres_solve(lambda v: A @ v, np.zeros_like(b))
    assert rep.iterations == 0 and rep.converged and not x.any()
    exact = np.linalg.solve(A, b)
    _, rep = fgmres_solve(lambda v: A @ v, b, x0=exact)
    assert rep.iterations == 0


def test_non_finite_operator_raises(rng):
    A, b = random_system(rng)
    with pytest.raises(DivergenceError):
        fgmres_solve(lambda v: A @ v * np.nan, b)


@pytest.mark.parametrize("kwargs", [dict(rel_tol=0), dict(restart=-1), dict(max_iters=0)])
def test_config_validation(kwargs):
    with pytest.raises(ValueError):
        FgmresConfig(**kwargs)


def test_callback_sees_every_iteration(rng):
    A, b = random_system(rng)
    seen = []
    _, rep = fgmres_solve(lambda v: A @ v, b, callback=lambda it, rel: seen.append(it))
    assert seen == list(range(rep.iterations + 1))


def test_flexible_alternating_preconditioner(problems):
    pb = problems(16)
    bs = MGHierarchy(pb, BraessSarazin)
    vk = MGHierarchy(pb, Vanka)
    calls = []

    def alternating(v):
        calls.append(None)
        return (bs if len(calls) % 2 else vk)(v)

    _, rep = fgmres_solve(pb.finest.apply, pb.rhs.data, None, FgmresConfig(rel_tol=1e-10), alternating)
    assert rep.converged
    assert np.all(np.diff(rep.history) <= 0)
