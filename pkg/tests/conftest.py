from __future__ import annotations

import sys

import numpy as np
import pytest

from spectv.mesh import TriMesh
from spectv.shapes import bumpy_sphere, icosphere, limb_sphere, torus_mesh


def jittered_sphere(subdivisions=2, amount=0.15, seed=3) -> TriMesh:
    """Closed sphere with irregular triangles (tangential and radial noise)."""
    base = icosphere(subdivisions)
    rng = np.random.default_rng(seed)
    h = base.mean_edge_length()
    v = base.vertices + amount * h * rng.standard_normal(base.vertices.shape)
    return base.with_vertices(v)


def closed_fixtures() -> dict:
    return {
        "icosphere": icosphere(2),
        "bumpy": bumpy_sphere(2, seed=1),
        "limb": limb_sphere(2),
        "torus": torus_mesh(2.0, 1.0, 12, 24),
        "jittered": jittered_sphere(),
    }


_CLOSED = closed_fixtures()


@pytest.fixture(params=sorted(_CLOSED))
def closed_mesh(request):
    return _CLOSED[request.param]


@pytest.fixture
def sphere2():
    return icosphere(2)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance")
        for k in sorted(results):
            terminalreporter.write_line(results[k])
