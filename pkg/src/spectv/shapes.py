"""Synthetic test shapes."""
from __future__ import annotations

import numpy as np

from .mesh import TriMesh


def icosphere(subdivisions: int = 3, radius: float = 1.0) -> TriMesh:
    """Subdivided icosahedron; 10 * 4**k + 2 vertices."""
    t = (1.0 + 5 ** 0.5) / 2.0
    v = [(-1, t, 0), (1, t, 0), (-1, -t, 0), (1, -t, 0),
         (0, -1, t), (0, 1, t), (0, -1, -t), (0, 1, -t),
         (t, 0, -1), (t, 0, 1), (-t, 0, -1), (-t, 0, 1)]
    f = [(0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
         (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
         (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
         (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1)]
    verts = [np.array(p, float) / np.linalg.norm(p) for p in v]
    faces = f
    for _ in range(subdivisions):
        cache = {}

        def mid(a, b):
            key = (a, b) if a < b else (b, a)
            if key not in cache:
                p = verts[a] + verts[b]
                verts.append(p / np.linalg.norm(p))
                cache[key] = len(verts) - 1
            return cache[key]

        new = []
        for a, b, c in faces:
            ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
            new += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = new
    return TriMesh(radius * np.array(verts), np.array(faces))


def radial_sphere(radius_fn, subdivisions: int = 4) -> TriMesh:
    """Star-shaped surface ``r(u) * u`` over unit directions ``u`` of an icosphere."""
    base = icosphere(subdivisions)
    u = base.vertices
    return base.with_vertices(radius_fn(u)[:, None] * u)


def bumpy_sphere(subdivisions: int = 4, radius: float = 1.0, height: float = 0.08,
                 frequency: int = 6, seed: int = 0) -> TriMesh:
    """Sphere with small smooth bumps of peak height ``height``."""
    rng = np.random.default_rng(seed)
    centers = rng.normal(size=(frequency * 4, 3))
    centers /= np.linalg.norm(centers, axis=1, keepdims=True)
    width = 0.9 / frequency

    def r(u):
        ang = np.arccos(np.clip(u @ centers.T, -1, 1))
        bumps = np.exp(-(ang / width) ** 2).max(axis=1)
        return radius * (1.0 + height * bumps)

    return radial_sphere(r, subdivisions)


def limb_sphere(subdivisions: int = 4, limb_length: float = 1.5, limb_width: float = 0.3) -> TriMesh:
    """Unit 'torso' sphere with one elongated protrusion along +z."""
    def r(u):
        ang = np.arccos(np.clip(u[:, 2], -1, 1))
        return 1.0 + limb_length * np.exp(-(ang / limb_width) ** 2)

    return radial_sphere(r, subdivisions)


def grid_plane(nx: int = 20, ny: int = 20, size=(1.0, 1.0), z_fn=None) -> TriMesh:
    """Triangulated rectangle [0, sx] x [0, sy] in the xy-plane (optionally lifted by z_fn)."""
    xs = np.linspace(0.0, size[0], nx + 1)
    ys = np.linspace(0.0, size[1], ny + 1)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    Z = np.zeros_like(X) if z_fn is None else z_fn(X, Y)
    v = np.column_stack([X.ravel(), Y.ravel(), Z.ravel()])
    idx = np.arange((nx + 1) * (ny + 1)).reshape(nx + 1, ny + 1)
    a, b = idx[:-1, :-1].ravel(), idx[1:, :-1].ravel()
    c, d = idx[1:, 1:].ravel(), idx[:-1, 1:].ravel()
    f = np.concatenate([np.column_stack([a, b, c]), np.column_stack([a, c, d])])
    return TriMesh(v, f)


def revolution_tube(profile, z_range=(-1.0, 1.0), n_theta: int = 48, n_z: int = 60) -> TriMesh:
    """Open tube of revolution about the z axis with radius ``profile(z)``."""
    th = np.linspace(0, 2 * np.pi, n_theta, endpoint=False)
    zs = np.linspace(z_range[0], z_range[1], n_z + 1)
    R = profile(zs)
    v = np.column_stack([
        (R[:, None] * np.cos(th)[None]).ravel(),
        (R[:, None] * np.sin(th)[None]).ravel(),
        np.repeat(zs, n_theta),
    ])
    idx = np.arange((n_z + 1) * n_theta).reshape(n_z + 1, n_theta)
    nxt = np.roll(idx, -1, axis=1)
    a, b = idx[:-1].ravel(), nxt[:-1].ravel()
    c, d = nxt[1:].ravel(), idx[1:].ravel()
    f = np.concatenate([np.column_stack([a, b, c]), np.column_stack([a, c, d])])
    return TriMesh(v, f)


def dumbbell(n_theta: int = 40, n_z: int = 80, waist: float = 0.35, length: float = 4.0) -> TriMesh:
    """Tube with two bulbs joined by a narrow waist at z = 0."""
    def profile(z):
        return 1.0 - (1.0 - waist) * np.exp(-(z / 0.35) ** 2)

    return revolution_tube(profile, (-length / 2, length / 2), n_theta, n_z)


def straight_bar(n_theta: int = 24, n_z: int = 60, radius: float = 0.5, length: float = 4.0) -> TriMesh:
    return revolution_tube(lambda z: np.full_like(z, radius), (-length / 2, length / 2), n_theta, n_z)


def torus_mesh(R: float = 2.0, r: float = 1.0, n1: int = 32, n2: int = 64) -> TriMesh:
    """Torus ``((R + r cos w1) cos w2, (R + r cos w1) sin w2, r sin w1)``."""
    w1 = np.linspace(-np.pi, np.pi, n1, endpoint=False)
    w2 = np.linspace(-np.pi, np.pi, n2, endpoint=False)
    W1, W2 = np.meshgrid(w1, w2, indexing="ij")
    rho = R + r * np.cos(W1)
    v = np.column_stack([(rho * np.cos(W2)).ravel(), (rho * np.sin(W2)).ravel(), (r * np.sin(W1)).ravel()])
    idx = np.arange(n1 * n2).reshape(n1, n2)
    i1 = np.roll(idx, -1, axis=0)
    i2 = np.roll(idx, -1, axis=1)
    i12 = np.roll(i1, -1, axis=1)
    a, b, c, d = idx.ravel(), i1.ravel(), i12.ravel(), i2.ravel()
    f = np.concatenate([np.column_stack([a, b, c]), np.column_stack([a, c, d])])
    mesh = TriMesh(v, f)
    object.__setattr__(mesh, "attributes", {"w1": W1.ravel(), "w2": W2.ravel()})
    return mesh


def random_mesh(n_side: int = 10, jitter: float = 0.2, seed: int = 0, curved: bool = True) -> TriMesh:
    """Jittered curved grid patch; a generic irregular test mesh."""
    rng = np.random.default_rng(seed)
    m = grid_plane(n_side - 1, n_side - 1)
    v = m.vertices.copy()
    h = 1.0 / (n_side - 1)
    interior = (v[:, 0] > 1e-9) & (v[:, 0] < 1 - 1e-9) & (v[:, 1] > 1e-9) & (v[:, 1] < 1 - 1e-9)
    v[interior, :2] += rng.uniform(-jitter * h, jitter * h, size=(interior.sum(), 2))
    if curved:
        v[:, 2] = 0.3 * np.sin(2.0 * v[:, 0]) * np.cos(1.5 * v[:, 1])
    return m.with_vertices(v)


def rotation_matrix(seed: int = 0) -> np.ndarray:
    rng = np.random.default_rng(seed)
    q, r = np.linalg.qr(rng.normal(size=(3, 3)))
    q = q @ np.diag(np.sign(np.diag(r)))
    if np.linalg.det(q) < 0:
        q[:, 0] *= -1
    return q
