"""Parametric surfaces sampled on a rectangular grid.

A surface is a map ``S(w1, w2) -> R^3`` on a rectangle, periodic or not per
axis, with metric ``g = J^T J``. Nodes on periodic axes sit at ``a + i h``;
on non-periodic axes they are cell-centred, ``a + (i + 1/2) h``, which keeps
them off coordinate singularities such as the sphere's poles. Non-periodic
edges carry natural (Neumann) boundary conditions.

Each grid quad is split along both diagonals into four triangles of half
weight. Functions are piecewise linear on every triangle; the metric is
sampled at triangle centroids. Gradients are stored in metric-orthonormal
frame components ``L^T grad_w u`` with ``g^-1 = L L^T``, so the generic
:class:`~spectv.operators.Discretization` applies unchanged (``dim = 2``).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

from ..mesh import TriMesh
from ..operators import Discretization

# Quad splits. Each entry: (centroid in cell units, d/dw1 stencil, d/dw2 stencil);
# stencils map corner offsets (di, dj) to coefficients in units of 1/h.
_H = 0.5
SPLITS = {
    # both diagonals, four triangles at half weight
    "cross": (
        ((2 / 3, 1 / 3), {(1, 0): 1, (0, 0): -1}, {(1, 1): 1, (1, 0): -1}),
        ((1 / 3, 2 / 3), {(1, 1): 1, (0, 1): -1}, {(0, 1): 1, (0, 0): -1}),
        ((1 / 3, 1 / 3), {(1, 0): 1, (0, 0): -1}, {(0, 1): 1, (0, 0): -1}),
        ((2 / 3, 2 / 3), {(1, 1): 1, (0, 1): -1}, {(1, 1): 1, (1, 0): -1}),
    ),
    # fan around the quad centre, whose value is the mean of the corners
    "fan": (
        ((0.5, 1 / 6), {(1, 0): 1, (0, 0): -1},
         {(0, 1): _H, (1, 1): _H, (0, 0): -_H, (1, 0): -_H}),
        ((0.5, 5 / 6), {(1, 1): 1, (0, 1): -1},
         {(0, 1): _H, (1, 1): _H, (0, 0): -_H, (1, 0): -_H}),
        ((1 / 6, 0.5), {(1, 0): _H, (1, 1): _H, (0, 0): -_H, (0, 1): -_H},
         {(0, 1): 1, (0, 0): -1}),
        ((5 / 6, 0.5), {(1, 0): _H, (1, 1): _H, (0, 0): -_H, (0, 1): -_H},
         {(1, 1): 1, (1, 0): -1}),
    ),
}


def _fd_jacobian(surface, W1, W2, h):
    d1 = 1e-5 * h[0]
    d2 = 1e-5 * h[1]
    J1 = (surface(W1 + d1, W2) - surface(W1 - d1, W2)) / (2 * d1)
    J2 = (surface(W1, W2 + d2) - surface(W1, W2 - d2)) / (2 * d2)
    return np.stack([J1, J2], axis=-1)


@dataclass(eq=False)
class ParametricGrid:
    """Sampled parametric surface with metric-aware P1 operators.

    Parameters
    ----------
    surface : callable
        ``surface(W1, W2)`` returning an array of shape ``W1.shape + (3,)``.
    domain : ((a1, b1), (a2, b2))
    shape : (n1, n2)
    periodic : (bool, bool)
    jacobian : callable, optional
        Analytic ``J(W1, W2)`` of shape ``W1.shape + (3, 2)``; central
        differences are used when omitted.
    """

    surface: object
    domain: tuple
    shape: tuple
    periodic: tuple = (True, True)
    jacobian: object = None
    name: str = "surface"
    params: dict = field(default_factory=dict)
    split: str = "cross"

    def __post_init__(self):
        (a1, b1), (a2, b2) = self.domain
        n1, n2 = (int(n) for n in self.shape)
        if n1 < 3 or n2 < 3:
            raise ValueError("grid needs at least 3 samples per axis")
        self.shape = (n1, n2)
        self.h = np.array([(b1 - a1) / n1, (b2 - a2) / n2])
        off = [0.0 if p else 0.5 for p in self.periodic]
        self.w1 = a1 + (np.arange(n1) + off[0]) * self.h[0]
        self.w2 = a2 + (np.arange(n2) + off[1]) * self.h[1]
        self.W1, self.W2 = np.meshgrid(self.w1, self.w2, indexing="ij")
        self.points = np.asarray(self.surface(self.W1, self.W2), dtype=float)
        g = self.metric_at(self.W1, self.W2)
        self.g = g
        det = g[..., 0, 0] * g[..., 1, 1] - g[..., 0, 1] ** 2
        if not np.all(det > 0):
            raise ValueError("metric is degenerate at some grid nodes")
        self.sqrt_det = np.sqrt(det)
        self._build()

    # geometry -----------------------------------------------------------
    def jac_at(self, W1, W2):
        W1, W2 = np.asarray(W1, float), np.asarray(W2, float)
        if self.jacobian is not None:
            return np.asarray(self.jacobian(W1, W2), dtype=float)
        return _fd_jacobian(self.surface, W1, W2, self.h)

    def metric_at(self, W1, W2):
        J = self.jac_at(W1, W2)
        return np.einsum("...ki,...kj->...ij", J, J)

    @property
    def n(self) -> int:
        return self.shape[0] * self.shape[1]

    def index(self, i, j):
        return (np.asarray(i) % self.shape[0]) * self.shape[1] + (np.asarray(j) % self.shape[1])

    def _build(self):
        n1, n2 = self.shape
        h1, h2 = self.h
        q1 = np.arange(n1 if self.periodic[0] else n1 - 1)
        q2 = np.arange(n2 if self.periodic[1] else n2 - 1)
        Q1, Q2 = np.meshgrid(q1, q2, indexing="ij")
        Q1, Q2 = Q1.ravel(), Q2.ravel()
        nq = len(Q1)
        self.n_quads = nq
        if self.split not in SPLITS:
            raise ValueError(f"unknown quad split {self.split!r}; expected one of {sorted(SPLITS)}")
        rows, cols, vals = [], [], []
        cw1, cw2 = [], []
        for t, (cen, s1, s2) in enumerate(SPLITS[self.split]):
            cw1.append(self.w1[0] + (Q1 + cen[0]) * h1)
            cw2.append(self.w2[0] + (Q2 + cen[1]) * h2)
            for comp, (st, hh) in enumerate(((s1, h1), (s2, h2))):
                r = 2 * (t * nq + np.arange(nq)) + comp
                for (di, dj), c in st.items():
                    rows.append(r)
                    cols.append(self.index(Q1 + di, Q2 + dj))
                    vals.append(np.full(nq, c / hh))
        k = 4 * nq
        # D maps node values to parameter-space gradients, rows (cell, component)
        self.D = sparse.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                                   shape=(2 * k, self.n))
        self.cell_w1 = np.concatenate(cw1)
        self.cell_w2 = np.concatenate(cw2)
        gc = self.metric_at(self.cell_w1, self.cell_w2)
        det = gc[:, 0, 0] * gc[:, 1, 1] - gc[:, 0, 1] ** 2
        self.cell_metric = gc
        inv = np.stack([np.stack([gc[:, 1, 1], -gc[:, 0, 1]], -1),
                        np.stack([-gc[:, 1, 0], gc[:, 0, 0]], -1)], -2) / det[:, None, None]
        self.cell_metric_inv = inv
        a, b, c = inv[:, 0, 0], inv[:, 0, 1], inv[:, 1, 1]
        la = np.sqrt(a)
        Lt = np.zeros((k, 2, 2))  # L^T with g^-1 = L L^T
        Lt[:, 0, 0] = la
        Lt[:, 0, 1] = b / la
        Lt[:, 1, 1] = np.sqrt(c - b * b / a)
        self._Lt = Lt
        blk = _block_diag2(Lt)
        self.cell_area = np.sqrt(det) * h1 * h2 / 4.0
        self.mass = (self.sqrt_det * h1 * h2).ravel()
        total = self.mass.sum()
        phys_h = np.sqrt(total / self.n)
        self.discretization = Discretization(
            grad=(blk @ self.D).tocsr(), cell_area=self.cell_area, mass=self.mass, dim=2,
            eps_default=1e-6 / phys_h,
        )

    @property
    def total_area(self) -> float:
        return float(self.mass.sum())

    @property
    def closed(self) -> bool:
        return bool(self.periodic[0] and self.periodic[1]) or self.params.get("closed", False)

    def to_mesh(self, values: dict | None = None) -> TriMesh:
        """Triangulated surface (one diagonal per quad) for export."""
        n1, n2 = self.shape
        q1 = np.arange(n1 if self.periodic[0] else n1 - 1)
        q2 = np.arange(n2 if self.periodic[1] else n2 - 1)
        Q1, Q2 = (x.ravel() for x in np.meshgrid(q1, q2, indexing="ij"))
        a, b = self.index(Q1, Q2), self.index(Q1 + 1, Q2)
        c, d = self.index(Q1 + 1, Q2 + 1), self.index(Q1, Q2 + 1)
        f = np.concatenate([np.column_stack([a, b, c]), np.column_stack([a, c, d])])
        attrs = {k: np.asarray(v).ravel() for k, v in (values or {}).items()}
        return TriMesh(self.points.reshape(-1, 3), f, attrs, area_eps=0.0)


def _block_diag2(Lt):
    k = len(Lt)
    r = np.repeat(np.arange(2 * k), 2)
    c = (2 * np.arange(k)[:, None, None] + np.array([[0, 1], [0, 1]])[None]).ravel()
    return sparse.csr_matrix((Lt.ravel(), (r, c)), shape=(2 * k, 2 * k))


def grid_gradient(grid: ParametricGrid, u):
    """Contravariant gradient ``g^-1 grad_w u`` per triangle, shape (k, 2)."""
    gw = (grid.D @ np.asarray(u, dtype=float).ravel()).reshape(-1, 2)
    return np.einsum("kij,kj->ki", grid.cell_metric_inv, gw)


def grid_divergence(grid: ParametricGrid, F):
    """Divergence ``(1/sqrt|g|) div_w(sqrt|g| F)`` of a contravariant cell field.

    Weak form on the P1 space, so ``<div F, u>_M = -<F, grad u>_g`` exactly
    and the mass-weighted sum of ``div F`` vanishes on closed grids.
    """
    F = np.asarray(F, dtype=float).reshape(-1, 2)
    # <F, grad u>_g = F . grad_w u
    flux = (grid.cell_area[:, None] * F).ravel()
    return -(grid.D.T @ flux) / grid.mass


def quad_average(grid: ParametricGrid, cell_values):
    """Average the four triangles of each quad; returns (n_quads, ...)."""
    v = np.asarray(cell_values)
    return v.reshape(4, grid.n_quads, *v.shape[1:]).mean(axis=0)


# built-in surfaces -------------------------------------------------------

def torus(R: float = 2.0, r: float = 1.0, n=(128, 128), split: str = "cross") -> ParametricGrid:
    """``((R + r cos w1) cos w2, (R + r cos w1) sin w2, r sin w1)`` on [-pi, pi)^2."""
    if np.isscalar(n):
        n = (n, n)

    def S(W1, W2):
        rho = R + r * np.cos(W1)
        return np.stack([rho * np.cos(W2), rho * np.sin(W2), r * np.sin(W1)], -1)

    def J(W1, W2):
        rho = R + r * np.cos(W1)
        z = np.zeros_like(W1)
        J1 = np.stack([-r * np.sin(W1) * np.cos(W2), -r * np.sin(W1) * np.sin(W2), r * np.cos(W1)], -1)
        J2 = np.stack([-rho * np.sin(W2), rho * np.cos(W2), z], -1)
        return np.stack([J1, J2], -1)

    return ParametricGrid(S, ((-np.pi, np.pi), (-np.pi, np.pi)), n, (True, True), J, "torus",
                          {"R": R, "r": r}, split)


def sphere(radius: float = 1.0, n=(128, 128), split: str = "cross") -> ParametricGrid:
    """Polar angle ``w1`` in [0, pi] (cell-centred), azimuth ``w2`` periodic."""
    if np.isscalar(n):
        n = (n, n)

    def S(T, P):
        return radius * np.stack([np.sin(T) * np.cos(P), np.sin(T) * np.sin(P), np.cos(T)], -1)

    def J(T, P):
        J1 = radius * np.stack([np.cos(T) * np.cos(P), np.cos(T) * np.sin(P), -np.sin(T)], -1)
        J2 = radius * np.stack([-np.sin(T) * np.sin(P), np.sin(T) * np.cos(P), np.zeros_like(T)], -1)
        return np.stack([J1, J2], -1)

    return ParametricGrid(S, ((0.0, np.pi), (-np.pi, np.pi)), n, (False, True), J, "sphere",
                          {"r": radius, "closed": True}, split)


def sinc_profile(z):
    return 0.5 + np.sinc(z)


def sinc_revolution(n=(128, 128), z_range=(-3.0, 3.0), split: str = "cross") -> ParametricGrid:
    """Surface of revolution of the translated sinc profile ``0.5 + sinc(z)``."""
    if np.isscalar(n):
        n = (n, n)

    def S(Z, P):
        rho = sinc_profile(Z)
        return np.stack([rho * np.cos(P), rho * np.sin(P), Z], -1)

    return ParametricGrid(S, (tuple(z_range), (-np.pi, np.pi)), n, (False, True), None,
                          "sinc-revolution", {}, split)


def plane(size=(2.0, 2.0), n=(64, 64), periodic=(False, False), split: str = "fan") -> ParametricGrid:
    """Flat rectangle ``[-sx/2, sx/2] x [-sy/2, sy/2]``, identity metric.

    The fan split is the default here; its edge directions reduce the
    direction bias of the discrete TV on axis-aligned grids.
    """
    if np.isscalar(n):
        n = (n, n)

    def S(X, Y):
        return np.stack([X, Y, np.zeros_like(X)], -1)

    def J(X, Y):
        o, z = np.ones_like(X), np.zeros_like(X)
        return np.stack([np.stack([o, z, z], -1), np.stack([z, o, z], -1)], -1)

    dom = ((-size[0] / 2, size[0] / 2), (-size[1] / 2, size[1] / 2))
    return ParametricGrid(S, dom, n, tuple(periodic), J, "plane", {}, split)


def heightfield(h, size=(2.0, 2.0), n=(64, 64), split: str = "fan") -> ParametricGrid:
    """Graph surface ``(x, y, h(x, y))``."""
    if np.isscalar(n):
        n = (n, n)

    def S(X, Y):
        return np.stack([X, Y, h(X, Y)], -1)

    dom = ((-size[0] / 2, size[0] / 2), (-size[1] / 2, size[1] / 2))
    return ParametricGrid(S, dom, n, (False, False), None, "heightfield", {}, split)


BUILTINS = {"torus": torus, "sphere": sphere, "sinc-revolution": sinc_revolution, "plane": plane}
