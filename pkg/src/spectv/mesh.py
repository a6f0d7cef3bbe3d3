"""Triangle meshes and their per-face / per-vertex geometry.

Functions live on vertices (piecewise linear), gradients live on faces.
The vertex mass is lumped: each face gives a third of its area to each of
its corners, so ``sum(vertex_mass) == sum(face_area)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import sparse


class MeshError(ValueError):
    """Raised for structurally invalid meshes."""


class DegenerateFaceError(MeshError):
    def __init__(self, faces):
        self.faces = np.asarray(faces, dtype=int)
        shown = ", ".join(str(f) for f in self.faces[:20])
        more = "" if len(self.faces) <= 20 else f" (+{len(self.faces) - 20} more)"
        super().__init__(f"degenerate faces (area below threshold): {shown}{more}")


class NonManifoldError(MeshError):
    def __init__(self, edges):
        self.edges = np.asarray(edges, dtype=int).reshape(-1, 2)
        shown = ", ".join(f"({a},{b})" for a, b in self.edges[:20])
        super().__init__(f"non-manifold edges (more than two incident faces): {shown}")


@dataclass(frozen=True)
class FaceGeometry:
    area: np.ndarray  # (m,)
    normal: np.ndarray  # (m, 3), unit
    edges: np.ndarray  # (m, 3, 3); edges[f, k] is opposite corner k, oriented ccw


@dataclass(frozen=True)
class VertexMass:
    mass: np.ndarray  # (n,)

    @property
    def total(self) -> float:
        return float(self.mass.sum())


def _raw_areas(vertices, faces):
    p0, p1, p2 = (vertices[faces[:, k]] for k in range(3))
    cr = np.cross(p1 - p0, p2 - p0)
    return 0.5 * np.linalg.norm(cr, axis=1)


@dataclass(frozen=True, eq=False)
class TriMesh:
    """Indexed triangle surface in R^3.

    Construction validates indices, rejects degenerate faces and
    non-manifold edges. ``attributes`` holds optional per-vertex arrays.
    """

    vertices: np.ndarray
    faces: np.ndarray
    attributes: dict = field(default_factory=dict)
    area_eps: float | None = None
    check_area: bool = field(default=True, repr=False)

    def __post_init__(self):
        v = np.ascontiguousarray(self.vertices, dtype=float)
        f = np.ascontiguousarray(self.faces, dtype=np.int64)
        if v.ndim != 2 or v.shape[1] != 3:
            raise MeshError(f"vertices must have shape (n, 3), got {v.shape}")
        if f.ndim != 2 or f.shape[1] != 3:
            raise MeshError(f"faces must have shape (m, 3), got {f.shape}")
        if not np.all(np.isfinite(v)):
            raise MeshError("vertices contain non-finite coordinates")
        if f.size and (f.min() < 0 or f.max() >= len(v)):
            bad = np.where((f < 0).any(1) | (f >= len(v)).any(1))[0]
            raise MeshError(f"face indices out of range in faces {bad[:20].tolist()}")
        rep = (f[:, 0] == f[:, 1]) | (f[:, 1] == f[:, 2]) | (f[:, 0] == f[:, 2])
        if rep.any():
            raise DegenerateFaceError(np.where(rep)[0])
        v.setflags(write=False)
        f.setflags(write=False)
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "faces", f)

        eps = self.area_eps
        if eps is None:
            ext = v.max(0) - v.min(0) if len(v) else np.zeros(3)
            scale = float(np.sort(ext)[-2:].prod()) if len(v) else 0.0
            eps = 1e-12 * max(scale, np.finfo(float).tiny)
        if self.check_area:
            areas = _raw_areas(v, f)
            bad = np.where(~(areas > eps))[0]
            if len(bad):
                raise DegenerateFaceError(bad)
        nm = self.nonmanifold_edges()
        if len(nm):
            raise NonManifoldError(nm)
        attrs = {}
        for k, a in dict(self.attributes).items():
            a = np.asarray(a)
            if a.shape[0] != len(v):
                raise MeshError(f"attribute {k!r} has {a.shape[0]} rows, expected {len(v)}")
            attrs[k] = a
        object.__setattr__(self, "attributes", attrs)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_faces(self) -> int:
        return len(self.faces)

    def edge_face_counts(self):
        """Unique undirected edges (sorted pairs) and how many faces use each."""
        e = np.concatenate([self.faces[:, [0, 1]], self.faces[:, [1, 2]], self.faces[:, [2, 0]]])
        e.sort(axis=1)
        uniq, counts = np.unique(e, axis=0, return_counts=True)
        return uniq, counts

    def nonmanifold_edges(self):
        uniq, counts = self.edge_face_counts()
        return uniq[counts > 2]

    def boundary_edges(self):
        uniq, counts = self.edge_face_counts()
        return uniq[counts == 1]

    def is_closed(self) -> bool:
        return len(self.boundary_edges()) == 0

    def boundary_vertices(self):
        return np.unique(self.boundary_edges())

    def euler(self) -> int:
        uniq, _ = self.edge_face_counts()
        return self.n_vertices - len(uniq) + self.n_faces

    def with_vertices(self, vertices, attributes=None, check_area=None) -> "TriMesh":
        """Same connectivity, new coordinates.

        Processed shapes may legitimately flatten faces; pass
        ``check_area=False`` to skip the degenerate-face check.
        """
        return TriMesh(vertices, self.faces, attributes if attributes is not None else {},
                       area_eps=self.area_eps,
                       check_area=self.check_area if check_area is None else check_area)

    def bbox_diagonal(self) -> float:
        return float(np.linalg.norm(self.vertices.max(0) - self.vertices.min(0)))

    def mean_edge_length(self) -> float:
        uniq, _ = self.edge_face_counts()
        d = self.vertices[uniq[:, 0]] - self.vertices[uniq[:, 1]]
        return float(np.linalg.norm(d, axis=1).mean())

    def adjacency(self):
        """Symmetric vertex adjacency as a CSR matrix of ones."""
        uniq, _ = self.edge_face_counts()
        n = self.n_vertices
        i = np.concatenate([uniq[:, 0], uniq[:, 1]])
        j = np.concatenate([uniq[:, 1], uniq[:, 0]])
        return sparse.csr_matrix((np.ones(len(i)), (i, j)), shape=(n, n))


def face_geometry(mesh: TriMesh) -> FaceGeometry:
    v, f = mesh.vertices, mesh.faces
    p = v[f]  # (m, 3, 3)
    # edge opposite corner k runs from corner k+1 to corner k+2
    edges = np.stack([p[:, 2] - p[:, 1], p[:, 0] - p[:, 2], p[:, 1] - p[:, 0]], axis=1)
    cr = np.cross(edges[:, 2], -edges[:, 1])
    nrm = np.linalg.norm(cr, axis=1)
    area = 0.5 * nrm
    # zero-area faces (allowed with check_area=False) get a zero normal
    normal = np.divide(cr, nrm[:, None], out=np.zeros_like(cr), where=nrm[:, None] > 0)
    return FaceGeometry(area=area, normal=normal, edges=edges)


def vertex_mass(mesh: TriMesh, areas=None) -> VertexMass:
    if areas is None:
        areas = face_geometry(mesh).area
    m = np.zeros(mesh.n_vertices)
    np.add.at(m, mesh.faces.ravel(), np.repeat(areas / 3.0, 3))
    return VertexMass(m)


def vertex_normals(mesh: TriMesh, geom: FaceGeometry | None = None) -> np.ndarray:
    """Area-weighted vertex normals."""
    if geom is None:
        geom = face_geometry(mesh)
    acc = np.zeros((mesh.n_vertices, 3))
    w = geom.normal * geom.area[:, None]
    for k in range(3):
        np.add.at(acc, mesh.faces[:, k], w)
    n = np.linalg.norm(acc, axis=1)
    n[n == 0] = 1.0
    return acc / n[:, None]


def total_area(mesh: TriMesh) -> float:
    return float(face_geometry(mesh).area.sum())
