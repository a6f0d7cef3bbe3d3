"""Sparse SPD solves with reusable symbolic analysis.

Backends
--------
cholmod
    Supernodal Cholesky from cvxopt (optional dependency). The symbolic
    analysis is cached per sparsity pattern, which the IRLS loops keep fixed.
superlu
    scipy's SuperLU in symmetric mode; always available.
cg
    Jacobi-preconditioned conjugate gradients.
"""
from __future__ import annotations

import numpy as np
from scipy import sparse
from scipy.sparse import linalg as spla

try:  # optional fast path
    from cvxopt import cholmod as _cholmod
    from cvxopt import matrix as _cvx_matrix
    from cvxopt import spmatrix as _cvx_spmatrix

    _cholmod.options["supernodal"] = 2
    HAVE_CHOLMOD = True
except ImportError:  # pragma: no cover - depends on environment
    HAVE_CHOLMOD = False

BACKENDS = ("direct", "cholmod", "superlu", "cg")


class SolveError(RuntimeError):
    pass


def _superlu(A):
    return spla.splu(A.tocsc(), permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0,
                     options={"SymmetricMode": True})


class SPDSolver:
    """Factor-and-solve helper; one instance per fixed sparsity pattern."""

    def __init__(self, backend: str = "direct", rtol: float = 1e-10):
        if backend not in BACKENDS:
            raise ValueError(f"unknown linear solver {backend!r}; expected one of {BACKENDS}")
        if backend == "direct":
            backend = "cholmod" if HAVE_CHOLMOD else "superlu"
        if backend == "cholmod" and not HAVE_CHOLMOD:
            raise ValueError("cholmod backend requested but cvxopt is not installed")
        self.backend = backend
        self.rtol = rtol
        self._pattern = None
        self._symbolic = None

    def solve(self, A, B):
        """Solve ``A X = B``; ``B`` is (n,) or (n, c)."""
        B = np.asarray(B, dtype=float)
        flat = B.ndim == 1
        B2 = B[:, None] if flat else B
        if self.backend == "cholmod":
            X = self._cholmod(A, B2)
        elif self.backend == "superlu":
            X = _superlu(A).solve(np.ascontiguousarray(B2))
        else:
            X = self._cg(A, B2)
        if not np.all(np.isfinite(X)):
            raise SolveError("linear solve produced non-finite values")
        return X[:, 0] if flat else X

    def _cholmod(self, A, B):
        A = sparse.csc_matrix(A)
        A.sum_duplicates()
        A.sort_indices()
        n = A.shape[0]
        cols = np.repeat(np.arange(n), np.diff(A.indptr))
        Ac = _cvx_spmatrix(_cvx_matrix(A.data), _cvx_matrix(A.indices.astype(np.int64).tolist(), tc="i"),
                           _cvx_matrix(cols.tolist(), tc="i"), (n, n))
        pattern = (A.indptr.tobytes(), A.indices.tobytes())
        if self._symbolic is None or pattern != self._pattern:
            self._symbolic = _cholmod.symbolic(Ac)
            self._pattern = pattern
        try:
            _cholmod.numeric(Ac, self._symbolic)
        except ArithmeticError:
            raise SolveError("matrix is not positive definite") from None
        X = _cvx_matrix(np.asfortranarray(B))
        _cholmod.solve(self._symbolic, X)
        return np.array(X).reshape(B.shape)

    def _cg(self, A, B):
        A = sparse.csr_matrix(A)
        d = A.diagonal()
        if np.any(d <= 0):
            raise SolveError("matrix is not SPD (non-positive diagonal)")
        P = sparse.diags(1.0 / d)
        X = np.empty_like(B)
        for j in range(B.shape[1]):
            x, info = spla.cg(A, B[:, j], rtol=self.rtol, atol=0.0, M=P, maxiter=20 * A.shape[0])
            if info != 0:
                raise SolveError(f"CG did not converge (info={info})")
            X[:, j] = x
        return X


def solve_spd(A, B, backend: str = "direct", rtol: float = 1e-10):
    """One-off SPD solve."""
    return SPDSolver(backend, rtol).solve(A, B)
