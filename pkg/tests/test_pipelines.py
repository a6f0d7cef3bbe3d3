import numpy as np
import pytest

from spectv.flow import SolverConfig
from spectv.pipelines import (DisplacementDecomposition, MethodConfig, decompose_displacement, default_solver,
                              exaggerate, filter_shape, run_method, with_filter)
from spectv.shapes import bumpy_sphere, grid_plane, icosphere, limb_sphere, rotation_matrix
from spectv.spectral import FilterSpec

from conftest import closed_fixtures

FIXTURES = closed_fixtures()


def _quick(mesh, method, **kw):
    kw.setdefault("solver", default_solver(mesh, 20))
    return MethodConfig.create(method, **kw)


@pytest.mark.filterwarnings("ignore:cMCF is intended")
@pytest.mark.parametrize("name", sorted(FIXTURES))
@pytest.mark.parametrize("method", ["naive", "m1", "m2", "m3"])
def test_connectivity_invariance(name, method):
    mesh = FIXTURES[name]
    out = filter_shape(mesh, _quick(mesh, method, filter=FilterSpec.lowpass(0.5, relative=True)))
    assert np.array_equal(out.faces, mesh.faces)
    assert out.vertices.shape == mesh.vertices.shape


@pytest.mark.parametrize("method", ["naive", "m1", "m2", "m3"])
def test_allpass_within_reconstruction_tolerance(method):
    mesh = limb_sphere(2)
    res = run_method(mesh, MethodConfig.create(method))
    sp = res.spectrum
    assert sp.reconstruction_error(relative=True) <= sp.reconstruction_tolerance()


@pytest.mark.parametrize("method", ["naive", "m1", "m2", "m3"])
def test_allpass_exact_with_central_last_bin(method):
    mesh = limb_sphere(2)
    res = run_method(mesh, MethodConfig.create(method, last_bin="central"))
    assert res.max_vertex_change <= 1e-10 * mesh.bbox_diagonal()


def test_m1_rigid_equivariance_naive_not():
    mesh = FIXTURES["bumpy"]
    Q, b = rotation_matrix(3), np.array([0.3, -1.0, 2.0])
    moved = mesh.with_vertices(mesh.vertices @ Q.T + b)
    errs = {}
    for method in ("m1", "naive"):
        cfg = MethodConfig(method, filter=FilterSpec.lowpass(0.5, relative=True))
        a = filter_shape(mesh, cfg).vertices
        c = filter_shape(moved, cfg).vertices
        errs[method] = np.abs(c - (a @ Q.T + b)).max() / mesh.bbox_diagonal()
    assert errs["m1"] < 1e-6
    assert errs["naive"] >= 10 * errs["m1"]


def test_bumpy_sphere_lowpass_removes_bumps():
    mesh = bumpy_sphere(3, seed=0)
    r0 = np.linalg.norm(mesh.vertices, axis=1)
    bump = (r0 - 1.0) / 0.08
    peaks, flat = bump > 0.8, bump < 0.02
    out = filter_shape(mesh, MethodConfig("m1", filter=FilterSpec.lowpass(0.5, relative=True)))
    r = np.linalg.norm(out.vertices, axis=1)
    h0 = r0[peaks].mean() - r0[flat].mean()
    h1 = r[peaks].mean() - r[flat].mean()
    assert h1 <= 0.5 * h0
    assert abs(r[flat].mean() - 1.0) < 0.01


def test_decomposition_identity():
    mesh = limb_sphere(2)
    dec = decompose_displacement(mesh, 0.05)
    assert np.abs(dec.reconstruct() - mesh.vertices).max() <= 1e-12 * mesh.bbox_diagonal()
    assert np.allclose(np.linalg.norm(dec.direction, axis=1), 1.0)
    assert set(np.unique(dec.sign)) <= {-1.0, 1.0}


def test_limb_offset_is_outward():
    mesh = limb_sphere(3)
    dec = decompose_displacement(mesh, 0.05)
    u = mesh.vertices / np.linalg.norm(mesh.vertices, axis=1, keepdims=True)
    tip = u[:, 2] > 0.99
    assert np.all(dec.offset[tip] > 0)


def test_heightfield_offset_is_height():
    h = lambda x, y: 0.1 * np.sin(6 * x) * np.cos(4 * y)
    mesh = grid_plane(20, 20, z_fn=h)
    base = mesh.vertices * np.array([1.0, 1.0, 0.0])
    dec = decompose_displacement(mesh, 0.0, base=base)
    z = mesh.vertices[:, 2]
    moved = np.abs(z) > 0
    assert np.allclose(dec.direction[moved], [0, 0, 1])
    assert np.allclose(dec.offset, z)
    assert np.allclose(dec.reconstruct(), mesh.vertices)


def test_decomposition_base_shape_checked():
    mesh = icosphere(1)
    with pytest.raises(ValueError):
        decompose_displacement(mesh, 0.0, base=np.zeros((3, 3)))


def test_method_config_validation():
    with pytest.raises(ValueError):
        MethodConfig("m4")
    with pytest.raises(ValueError):
        MethodConfig("m3")
    with pytest.raises(ValueError):
        MethodConfig("m1", smoothing_time=0.1)
    with pytest.raises(ValueError):
        MethodConfig.create("m3", metric_source="other")
    with pytest.raises(ValueError):
        MethodConfig.create("m3", smoothing_time=-1.0)
    with pytest.raises(ValueError):
        MethodConfig("m1", last_bin="two-sided")


@pytest.mark.parametrize("cfg", [
    MethodConfig(),
    MethodConfig("naive", solver=SolverConfig(dt=0.02, n_steps=7, eps_schedule=(1e-3,)),
                 filter=FilterSpec.band(0.1, 0.3, 2.0, relative=True)),
    MethodConfig.create("m3", metric_source="smoothed", filter=FilterSpec.from_samples([0, 1, 2]),
                        last_bin="central"),
])
def test_method_config_dict_round_trip(cfg):
    assert MethodConfig.from_dict(cfg.to_dict()) == cfg


def test_m3_smoothed_metric_runs():
    mesh = limb_sphere(2)
    res = run_method(mesh, _quick(mesh, "m3", metric_source="smoothed", last_bin="central"))
    assert res.max_vertex_change < 1e-10


def test_exaggerate_scales_bands():
    mesh = limb_sphere(2)
    cfg = _quick(mesh, "m3", filter=FilterSpec.band(0.0, 2.0, 2.0, relative=True), last_bin="central")
    out = exaggerate(mesh, cfg)
    res = run_method(mesh, with_filter(cfg, FilterSpec.allpass()))
    dec, sp = res.decomposition, res.spectrum
    f = dec.offset
    expected = dec.reconstruct(2 * f - sp.residual)
    assert np.allclose(out.vertices, expected, atol=1e-12)
    # twice the distance from the residual surface
    resid = dec.reconstruct(sp.residual)
    before = np.linalg.norm(mesh.vertices - resid, axis=1)
    after = np.linalg.norm(out.vertices - resid, axis=1)
    moved = before > 1e-6
    assert np.allclose(after[moved] / before[moved], 2.0)


def test_exaggerate_needs_band_filter():
    mesh = icosphere(1)
    with pytest.raises(ValueError):
        exaggerate(mesh, MethodConfig("m1"))


def test_zero_filter_gives_residual_shape():
    mesh = bumpy_sphere(2)
    res = run_method(mesh, _quick(mesh, "m1", filter=FilterSpec.zero()))
    assert np.allclose(res.mesh.vertices, res.spectrum.residual)


def test_reconstruct_with_explicit_offset():
    d = DisplacementDecomposition(np.zeros((2, 3)), np.array([[0, 0, 1.0], [1.0, 0, 0]]), np.array([1.0, 2.0]),
                                  np.ones(2))
    assert np.allclose(d.reconstruct(), [[0, 0, 1], [2, 0, 0]])
    assert np.allclose(d.reconstruct([0.5, 0.0]), [[0, 0, 0.5], [0, 0, 0]])
