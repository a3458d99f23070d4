"""Shared fixtures and an independent triplet-sparse assembly oracle.

The oracle builds the global matrices element by element with its own basis
functions (Lagrange polynomials on [0, 1]), its own quadrature (4-point
Gauss) and its own global numbering.  It shares no code with the stencil
assembly path.
"""

import numpy as np
import pytest
import scipy.sparse as sp

from stokeslab.assembly import build_problem


def _lagrange_1d(order):
    """Values and derivatives of the 1D Lagrange basis on equispaced nodes in [0, 1]."""
    nodes = np.linspace(0.0, 1.0, order + 1)

    def basis(k, s):
        v = np.ones_like(s)
        d = np.zeros_like(s)
        for j, xj in enumerate(nodes):
            if j == k:
                continue
            term = (s - xj) / (nodes[k] - xj)
            d = d * term + v / (nodes[k] - xj)
            v = v * term
        return v, d

    return basis


def oracle_matrices(N, nu=1.0):
    """``(L_raw, B_raw, M, L, B)`` as scipy sparse matrices.

    ``L`` is one velocity component; ``B`` maps ``[u_x; u_y]`` to pressure.
    The last two have Dirichlet rows/columns eliminated symmetrically.
    """
    h = 1.0 / N
    nf, n1 = 2 * N + 1, N + 1
    n, m = nf * nf, n1 * n1
    q2, q1 = _lagrange_1d(2), _lagrange_1d(1)
    g, w = np.polynomial.legendre.leggauss(4)
    s = 0.5 * (g + 1)
    w = 0.5 * w
    S, T = np.meshgrid(s, s, indexing="ij")
    W = np.outer(w, w)

    # tabulate on the reference square [0,1]^2
    vel = []
    for b in range(3):
        for a in range(3):
            va, da = q2(a, S)
            vb, db = q2(b, T)
            vel.append((a, b, va * vb, da * vb / h, va * db / h))
    pre = []
    for b in range(2):
        for a in range(2):
            va, _ = q1(a, S)
            vb, _ = q1(b, T)
            pre.append((a, b, va * vb))
    det = h * h

    Lr, Lc, Lv = [], [], []
    Br, Bc, Bv = [], [], []
    Mr, Mc, Mv = [], [], []
    for ey in range(N):
        for ex in range(N):
            vg = [(2 * ey + b) * nf + (2 * ex + a) for a, b, *_ in vel]
            pg = [(ey + b) * n1 + (ex + a) for a, b, _ in pre]
            for i, (_, _, _, dxi, dyi) in enumerate(vel):
                for j, (_, _, _, dxj, dyj) in enumerate(vel):
                    Lr.append(vg[i]), Lc.append(vg[j])
                    Lv.append(nu * det * np.sum(W * (dxi * dxj + dyi * dyj)))
            for k, (_, _, qk) in enumerate(pre):
                for j, (_, _, _, dxj, dyj) in enumerate(vel):
                    for comp, dj in enumerate((dxj, dyj)):
                        Br.append(pg[k]), Bc.append(vg[j] + comp * n)
                        Bv.append(-det * np.sum(W * qk * dj))
                for l, (_, _, ql) in enumerate(pre):
                    Mr.append(pg[k]), Mc.append(pg[l])
                    Mv.append(det * np.sum(W * qk * ql))
    L_raw = sp.csr_matrix((Lv, (Lr, Lc)), shape=(n, n))
    B_raw = sp.csr_matrix((Bv, (Br, Bc)), shape=(m, 2 * n))
    M = sp.csr_matrix((Mv, (Mr, Mc)), shape=(m, m))

    I, J = np.meshgrid(np.arange(nf), np.arange(nf))
    bd = ((I == 0) | (J == 0) | (I == nf - 1) | (J == nf - 1)).ravel()
    keep = sp.diags((~bd).astype(float))
    L = (keep @ L_raw @ keep + sp.diags(bd.astype(float))).tocsr()
    B = (B_raw @ sp.block_diag([keep, keep])).tocsr()
    return L_raw, B_raw, M, L, B


@pytest.fixture(scope="session")
def problems():
    cache = {}

    def get(n, coarsest=4):
        key = (n, min(n, coarsest))
        if key not in cache:
            cache[key] = build_problem(n, key[1])
        return cache[key]

    return get


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


# filled by test_acceptance.py, echoed after the run so plain ``pytest -v`` shows it
ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])
