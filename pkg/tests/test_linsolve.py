import numpy as np
import pytest
from scipy import sparse

from spectv.linsolve import BACKENDS, HAVE_CHOLMOD, SPDSolver, SolveError, solve_spd
from spectv.operators import mesh_discretization
from spectv.shapes import icosphere


def _system(rng):
    disc = mesh_discretization(icosphere(2))
    A = (sparse.diags(disc.mass) + 0.1 * disc.stiffness()).tocsr()
    B = rng.standard_normal((disc.n, 3))
    return A, B


@pytest.mark.parametrize("backend", [b for b in BACKENDS if b != "cholmod" or HAVE_CHOLMOD])
def test_backends_agree(backend, rng):
    A, B = _system(rng)
    X = solve_spd(A, B, backend, rtol=1e-12)
    assert np.allclose(A @ X, B, atol=1e-9)
    x = solve_spd(A, B[:, 0], backend, rtol=1e-12)
    assert x.shape == (A.shape[0],)


def test_factorization_reused_for_same_pattern(rng):
    A, B = _system(rng)
    s = SPDSolver("direct")
    X1 = s.solve(A, B)
    X2 = s.solve(2 * A, B)
    assert np.allclose(X2, X1 / 2)


def test_unknown_backend():
    with pytest.raises(ValueError):
        SPDSolver("magic")


def test_cg_rejects_indefinite_diagonal():
    with pytest.raises(SolveError):
        solve_spd(sparse.diags([1.0, -1.0]), np.ones(2), "cg")


@pytest.mark.skipif(not HAVE_CHOLMOD, reason="cvxopt not installed")
def test_cholmod_rejects_indefinite():
    A = sparse.csr_matrix(np.array([[1.0, 2.0], [2.0, 1.0]]))
    with pytest.raises(SolveError):
        solve_spd(A, np.ones(2), "cholmod")
