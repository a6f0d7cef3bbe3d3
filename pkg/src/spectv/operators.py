"""Discrete gradient, divergence and the zero-homogeneous shape operators.

Everything is built on one structure, :class:`Discretization`: a sparse
gradient ``G`` mapping vertex values to ``d``-vectors on cells, positive
cell areas ``a`` and a lumped vertex mass ``m``. Divergence is defined as the
exact adjoint, ``div = M^-1 G^T A``, so

    <div F, u>_M == <F, G u>_A

holds up to round-off for every ``F`` and ``u``. With this sign the
composition ``div grad`` is the positive semi-definite Laplacian (minus the
analytic Laplace-Beltrami operator). On a triangle mesh the
cells are faces and ``d = 3`` (gradients are tangent vectors in R^3); the
parametric lab uses the same structure with ``d = 2`` metric-orthonormal
frame components.

The ``p_*`` functions return the operator ``p`` of the flow ``u_t = -p(u)``;
with the adjoint sign above they are the divergence expressions themselves
and are positive semi-definite (``<u, p(u)>_M >= 0``).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import sparse

from .mesh import TriMesh, face_geometry, vertex_mass

VERTEX_SCALARS = "vertex-scalars"
FACE_VECTORS = "face-vectors-R3"


class OperatorError(ValueError):
    pass


@dataclass(frozen=True)
class SparseLinearMap:
    """Sparse matrix tagged with the spaces it maps between."""

    matrix: sparse.csr_matrix
    domain: str
    codomain: str

    @property
    def shape(self):
        return self.matrix.shape

    def __call__(self, x):
        return self.matrix @ x

    def __matmul__(self, other):
        if isinstance(other, SparseLinearMap):
            if other.codomain != self.domain:
                raise OperatorError(
                    f"cannot compose {self.domain}->{self.codomain} after "
                    f"{other.domain}->{other.codomain}")
            return SparseLinearMap((self.matrix @ other.matrix).tocsr(), other.domain, self.codomain)
        return self.matrix @ other

    def to_triplets(self) -> str:
        """Debug text: a header line then one ``row col value`` line per nonzero."""
        coo = self.matrix.tocoo()
        lines = [f"# {self.domain} -> {self.codomain} shape {coo.shape[0]} {coo.shape[1]} nnz {coo.nnz}"]
        order = np.lexsort((coo.col, coo.row))
        lines += [f"{r} {c} {float(v)!r}" for r, c, v in zip(coo.row[order], coo.col[order], coo.data[order])]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_triplets(cls, text: str) -> "SparseLinearMap":
        lines = text.strip().splitlines()
        head = lines[0].split()
        domain, codomain = head[1], head[3]
        shape = (int(head[5]), int(head[6]))
        if len(lines) > 1:
            arr = np.array([ln.split() for ln in lines[1:]], dtype=float)
            rows, cols, vals = arr[:, 0].astype(int), arr[:, 1].astype(int), arr[:, 2]
        else:
            rows = cols = np.zeros(0, int)
            vals = np.zeros(0)
        return cls(sparse.csr_matrix((vals, (rows, cols)), shape=shape), domain, codomain)


@dataclass(frozen=True)
class OperatorConfig:
    eps_grad: float | None = None  # None: 1e-6 * bbox diagonal / mean edge length
    P: float = 1.0

    def __post_init__(self):
        if self.eps_grad is not None and not self.eps_grad > 0:
            raise OperatorError("eps_grad must be positive")
        if self.P < 1:
            raise OperatorError("homogeneity exponent P must be >= 1")


@dataclass(eq=False)
class Discretization:
    grad: sparse.csr_matrix  # (k*d, n), rows cell-major
    cell_area: np.ndarray  # (k,)
    mass: np.ndarray  # (n,)
    dim: int
    eps_default: float = 1e-6

    @property
    def n(self) -> int:
        return self.grad.shape[1]

    @property
    def n_cells(self) -> int:
        return len(self.cell_area)

    def eps(self, cfg: OperatorConfig | None) -> float:
        if cfg is None or cfg.eps_grad is None:
            return self.eps_default
        return cfg.eps_grad

    def gradient(self, u):
        """Cell gradients, shape (k, d) or (k, d, c) for channel stacks."""
        u = np.asarray(u, dtype=float)
        g = self.grad @ u
        return g.reshape(self.n_cells, self.dim, *u.shape[1:])

    def divergence(self, F):
        F = np.asarray(F, dtype=float)
        k = self.n_cells
        aF = F * self.cell_area.reshape((k,) + (1,) * (F.ndim - 1))
        out = self.grad.T @ aF.reshape(k * self.dim, *F.shape[2:])
        return out / self.mass.reshape((-1,) + (1,) * (out.ndim - 1))

    def stiffness(self, weights=None) -> sparse.csr_matrix:
        """``G^T diag(a * w) G``; symmetric positive semi-definite for w >= 0."""
        w = self.cell_area if weights is None else self.cell_area * weights
        W = sparse.diags(np.repeat(w, self.dim))
        return (self.grad.T @ W @ self.grad).tocsr()

    def grad_norm(self, u):
        """Per-cell gradient magnitude; for channel stacks, per channel."""
        return np.sqrt((self.gradient(u) ** 2).sum(axis=1))

    def combined_grad_norm(self, U):
        """sqrt(sum_c |grad U_c|^2) per cell."""
        g = self.gradient(U)
        if g.ndim == 2:
            return np.sqrt((g ** 2).sum(axis=1))
        return np.sqrt((g ** 2).sum(axis=(1, 2)))

    def tv(self, u, eps=0.0):
        """Sum_cells a * sqrt(|grad u|^2 + eps^2) (vectorial if u has channels)."""
        n = self.combined_grad_norm(u)
        return float((self.cell_area * np.sqrt(n ** 2 + eps ** 2)).sum())

    def inner(self, u, v):
        return float(np.sum(self.mass.reshape((-1,) + (1,) * (np.ndim(u) - 1)) * u * v))

    def mean(self, u):
        return (self.mass @ np.asarray(u)) / self.mass.sum()


def p1_gradient_matrix(mesh: TriMesh, geom=None) -> sparse.csr_matrix:
    """Per-face gradient of the piecewise-linear interpolant, (3m, n)."""
    if geom is None:
        geom = face_geometry(mesh)
    m = mesh.n_faces
    # grad(phi_k) = n x e_k / (2A), e_k the ccw edge opposite corner k
    gphi = np.cross(geom.normal[:, None, :], geom.edges) / (2.0 * geom.area[:, None, None])
    rows = (3 * np.arange(m)[:, None, None] + np.arange(3)[None, None, :]).repeat(3, axis=1)
    cols = np.broadcast_to(mesh.faces[:, :, None], (m, 3, 3))
    return sparse.csr_matrix((gphi.ravel(), (rows.ravel(), cols.ravel())), shape=(3 * m, mesh.n_vertices))


def default_eps(mesh: TriMesh) -> float:
    return 1e-6 * mesh.bbox_diagonal() / mesh.mean_edge_length()


def mesh_discretization(mesh: TriMesh) -> Discretization:
    geom = face_geometry(mesh)
    return Discretization(
        grad=p1_gradient_matrix(mesh, geom),
        cell_area=geom.area,
        mass=vertex_mass(mesh, geom.area).mass,
        dim=3,
        eps_default=default_eps(mesh),
    )


def as_discretization(obj) -> Discretization:
    if isinstance(obj, Discretization):
        return obj
    if isinstance(obj, TriMesh):
        return mesh_discretization(obj)
    disc = getattr(obj, "discretization", None)
    if disc is not None:
        return disc() if callable(disc) else disc
    raise TypeError(f"expected TriMesh or Discretization, got {type(obj).__name__}")


def build_gradient(mesh: TriMesh) -> SparseLinearMap:
    return SparseLinearMap(p1_gradient_matrix(mesh), VERTEX_SCALARS, FACE_VECTORS)


def build_divergence(mesh: TriMesh) -> SparseLinearMap:
    """``M_v^-1 G^T M_f``, the adjoint of :func:`build_gradient`."""
    geom = face_geometry(mesh)
    G = p1_gradient_matrix(mesh, geom)
    mv = vertex_mass(mesh, geom.area).mass
    D = sparse.diags(1.0 / mv) @ G.T @ sparse.diags(np.repeat(geom.area, 3))
    return SparseLinearMap(D.tocsr(), FACE_VECTORS, VERTEX_SCALARS)


def _cw(disc, n):
    return n.reshape(disc.n_cells, 1, *n.shape[1:])


def p_laplace_beltrami(mesh, u, P=2.0, cfg: OperatorConfig | None = None):
    """``div(|grad u|_eps^(P-2) grad u)``; exactly ``div grad u`` for P == 2."""
    disc = as_discretization(mesh)
    g = disc.gradient(u)
    if P == 2:
        return disc.divergence(g)
    eps = disc.eps(cfg)
    mag = np.sqrt((g ** 2).sum(axis=1) + eps ** 2)
    return disc.divergence(g * _cw(disc, mag ** (P - 2)))


def p_naive(mesh0, c, cfg: OperatorConfig | None = None):
    """Per-channel 1-Laplace on the reference metric: ``div(grad c / |grad c|_eps)``."""
    return p_laplace_beltrami(mesh0, c, 1.0, cfg)


def p_m3(mesh_g, u, cfg: OperatorConfig | None = None):
    """TV subgradient of a scalar offset on a fixed metric (same form as p_naive)."""
    return p_laplace_beltrami(mesh_g, u, 1.0, cfg)


def p_m1(mesh0, S, cfg: OperatorConfig | None = None):
    """Coupled vectorial TV operator; channels share one gradient magnitude."""
    disc = as_discretization(mesh0)
    S = np.asarray(S, dtype=float)
    eps = disc.eps(cfg)
    g = disc.gradient(S)  # (k, d, c)
    mag = np.sqrt((g ** 2).sum(axis=(1, 2)) + eps ** 2)
    return disc.divergence(g / mag[:, None, None])


def conformal_factor(mesh0: TriMesh, vertices_t, face_areas0=None):
    """Per-vertex sqrt(|g0| / |g_t|).

    Per face ``|g0|/|g_t| = (A0/A_t)^2``; averaged to vertices with the
    reference face areas as weights, then square-rooted.
    """
    v = np.asarray(vertices_t, dtype=float)
    f = mesh0.faces
    a0 = face_geometry(mesh0).area if face_areas0 is None else face_areas0
    p0, p1, p2 = v[f[:, 0]], v[f[:, 1]], v[f[:, 2]]
    at = 0.5 * np.linalg.norm(np.cross(p1 - p0, p2 - p0), axis=1)
    bad = np.where(~(at > 0))[0]
    if len(bad):
        raise OperatorError(f"zero current face area at faces {bad[:20].tolist()}")
    ratio = (a0 / at) ** 2
    num = np.zeros(len(v))
    den = np.zeros(len(v))
    for k in range(3):
        np.add.at(num, f[:, k], a0 * ratio)
        np.add.at(den, f[:, k], a0)
    return np.sqrt(num / den)


def p_m2(mesh0: TriMesh, mesh_t, S, cfg: OperatorConfig | None = None, disc=None):
    """Conformalized 3-Laplace with coupled channels:
    ``sqrt(|g0|/|g_t|) div(sqrt(sum |grad c|^2 + eps^2) grad c)``.
    """
    disc = disc or as_discretization(mesh0)
    vt = mesh_t.vertices if isinstance(mesh_t, TriMesh) else np.asarray(mesh_t, dtype=float)
    sigma = conformal_factor(mesh0, vt, disc.cell_area)
    S = np.asarray(S, dtype=float)
    eps = disc.eps(cfg)
    g = disc.gradient(S)
    mag = np.sqrt((g ** 2).sum(axis=(1, 2)) + eps ** 2)
    return sigma[:, None] * disc.divergence(g * mag[:, None, None])
