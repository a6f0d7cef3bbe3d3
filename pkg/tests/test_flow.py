import numpy as np
import pytest

from spectv.flow import (CMCFConfig, ConformalTVFlow, FlowError, FlowTrace, HeatFlow, SolverConfig, TVFlow,
                         cmcf_smooth, evolve, export_trace, fit_linear_decay, heat_flow, trace_csv)
from spectv.mesh import total_area
from spectv.mesh_io import read_mesh
from spectv.operators import mesh_discretization
from spectv.shapes import grid_plane, icosphere, limb_sphere

CFG = SolverConfig(dt=0.01, n_steps=20)


@pytest.fixture(scope="module")
def sphere():
    return icosphere(3)


def _bump(mesh):
    return np.exp(-4 * np.sum((mesh.vertices - [0, 0, 1]) ** 2, axis=1))


def test_zero_input_stays_zero(sphere):
    tr = evolve(TVFlow(sphere), np.zeros(sphere.n_vertices), CFG)
    assert np.all(tr.states == 0) and np.all(tr.rates == 0)


def test_constant_is_steady(sphere):
    tr = evolve(TVFlow(sphere), np.full(sphere.n_vertices, 2.5), CFG)
    assert np.allclose(tr.states, 2.5, atol=1e-12)


def test_trace_shapes_and_times(sphere):
    tr = evolve(TVFlow(sphere), _bump(sphere), CFG)
    assert tr.n_samples == 21 and tr.states.shape == (21, sphere.n_vertices)
    assert tr.T == pytest.approx(0.2) and tr.dt == pytest.approx(0.01)
    assert np.allclose(tr.rates[:-1], (tr.states[:-1] - tr.states[1:]) / tr.dt)


def test_mass_conserved_and_energy_monotone(sphere):
    u0 = _bump(sphere)
    tr = evolve(TVFlow(sphere), u0, SolverConfig(dt=0.02, n_steps=40))
    means = tr.masked_means()
    assert np.abs(means - means[0]).max() < 1e-9 * abs(means[0])
    assert np.all(np.diff(tr.energies) <= 1e-9 * tr.energies[0])
    assert tr.energies[-1] < tr.energies[0]


def test_flow_is_zero_homogeneous_in_time(sphere):
    # u(t) for alpha f0 equals alpha u(t / alpha) for alpha > 0, up to the
    # gradient floor and the inner-iteration tolerance
    u0 = _bump(sphere)
    a = evolve(TVFlow(sphere), u0, SolverConfig(dt=0.01, n_steps=10, irls_iters=40, irls_tol=1e-10))
    b = evolve(TVFlow(sphere), 2 * u0, SolverConfig(dt=0.02, n_steps=10, irls_iters=40, irls_tol=1e-10))
    assert np.abs(b.states[-1] - 2 * a.states[-1]).max() < 1e-4 * np.abs(b.states[-1]).max()


def test_coupled_flow_on_vectors(sphere):
    tr = evolve(TVFlow(sphere, coupled=True), sphere.vertices, CFG)
    assert tr.is_vector and tr.states.shape == (21, sphere.n_vertices, 3)
    assert tr.channel(2).states.shape == (21, sphere.n_vertices)
    with pytest.raises(ValueError):
        evolve(TVFlow(sphere), _bump(sphere), CFG).channel(0)


def test_linear_solvers_agree(sphere):
    u0 = _bump(sphere)
    a = evolve(TVFlow(sphere), u0, SolverConfig(dt=0.02, n_steps=5, linear_solver="superlu"))
    b = evolve(TVFlow(sphere), u0, SolverConfig(dt=0.02, n_steps=5, linear_solver="cg", linear_tol=1e-12))
    assert np.abs(a.states - b.states).max() < 1e-7


def test_explicit_mode_close_for_small_steps(sphere):
    u0 = _bump(sphere)
    s = evolve(HeatFlow(sphere), u0, SolverConfig(dt=1e-4, n_steps=20))
    e = evolve(HeatFlow(sphere), u0, SolverConfig(dt=1e-4, n_steps=20, mode="explicit"))
    assert np.abs(s.states[-1] - e.states[-1]).max() < 1e-3


def test_heat_flow_preserves_constant_and_smooths(sphere):
    tr = heat_flow(sphere, np.ones(sphere.n_vertices), CFG)
    assert np.allclose(tr.states, 1.0)
    tr = heat_flow(sphere, _bump(sphere), CFG)
    assert np.all(np.diff(tr.energies) <= 0)


def test_conformal_flow_shrinks_sphere(sphere):
    tr = evolve(ConformalTVFlow(sphere), sphere.vertices, SolverConfig(dt=0.002, n_steps=10))
    r = np.linalg.norm(tr.states[-1], axis=1)
    assert r.max() < 1.0 and r.std() < 1e-3 * r.mean()


def test_solver_config_validation():
    for bad in (dict(dt=0), dict(n_steps=0), dict(irls_iters=0), dict(irls_tol=0), dict(eps_grad=-1),
                dict(eps_schedule=(1e-3, 0)), dict(mode="rk4"), dict(linear_solver="qr")):
        with pytest.raises(ValueError):
            SolverConfig(**bad)


def test_bad_inputs(sphere):
    with pytest.raises(ValueError):
        evolve(TVFlow(sphere), np.zeros(3), CFG)
    u = _bump(sphere)
    u[0] = np.nan
    with pytest.raises(FlowError):
        evolve(TVFlow(sphere), u, CFG)


def test_trace_validation():
    z = np.zeros((3, 4))
    with pytest.raises(ValueError):
        FlowTrace(np.array([0.0, 0.0, 1.0]), z, z, np.zeros(3), np.ones(4))
    with pytest.raises(ValueError):
        FlowTrace(np.arange(3.0), z, z[:2], np.zeros(3), np.ones(4))


def _line_trace(rate=2.0, n=101, T=1.0):
    t = np.linspace(0, T, n)
    a = np.maximum(1 - rate * t, 0)
    states = a[:, None] * np.ones((1, 5))
    return FlowTrace(t, states, np.zeros_like(states), np.zeros(n), np.ones(5))


def test_fit_linear_decay_exact_line():
    fit = fit_linear_decay(_line_trace(2.0))
    assert fit.rate == pytest.approx(2.0, rel=1e-12)
    assert fit.r2 == pytest.approx(1.0, abs=1e-12)
    assert fit.t_ext == pytest.approx(0.5, abs=0.011)


def test_fit_linear_decay_errors():
    tr = _line_trace(2.0)
    with pytest.raises(ValueError):
        fit_linear_decay(tr, mask=np.zeros(5, bool))
    with pytest.raises(ValueError):
        fit_linear_decay(_line_trace(200.0))
    z = FlowTrace(np.arange(5.0), np.zeros((5, 2)), np.zeros((5, 2)), np.zeros(5), np.ones(2))
    with pytest.raises(ValueError):
        fit_linear_decay(z)


def test_disk_indicator_decays_linearly_on_mesh():
    mesh = grid_plane(60, 60, size=(2.0, 2.0))
    x = mesh.vertices[:, :2] - 1.0
    disk = np.hypot(x[:, 0], x[:, 1]) < 0.4
    disc = mesh_discretization(mesh)
    beta = disc.mass[disk].sum() / disc.mass[~disk].sum()
    psi = np.where(disk, 1.0, -beta)
    tr = evolve(TVFlow(mesh), psi, SolverConfig(dt=1 / 300, n_steps=70))
    fit = fit_linear_decay(tr, disk)
    assert fit.r2 > 0.99
    assert fit.rate == pytest.approx(5.0, rel=0.1)


def test_trace_csv_and_export(tmp_path, sphere):
    tr = evolve(TVFlow(sphere), _bump(sphere), SolverConfig(dt=0.01, n_steps=4))
    text = trace_csv(tr, {"top": sphere.vertices[:, 2] > 0})
    lines = text.strip().splitlines()
    assert lines[0] == "t,energy,mean,mean_top" and len(lines) == 6
    paths = export_trace(tr, tmp_path, sphere, every=2)
    assert len(paths) == 4
    m = read_mesh(paths[0])
    assert np.allclose(m.attributes["u"], tr.states[0])


def test_export_geometry_trace(tmp_path, sphere):
    tr = evolve(TVFlow(sphere, coupled=True), sphere.vertices, SolverConfig(dt=0.01, n_steps=2))
    paths = export_trace(tr, tmp_path, sphere, as_geometry=True)
    assert np.allclose(read_mesh(paths[2]).vertices, tr.states[2])


# cMCF ---------------------------------------------------------------------------

def test_cmcf_keeps_sphere_round():
    m = icosphere(3)
    out = cmcf_smooth(m, 0.05)
    r = np.linalg.norm(out.vertices, axis=1)
    assert np.abs(r - 1).max() <= 0.01
    assert total_area(out) == pytest.approx(total_area(m), rel=1e-10)


def test_cmcf_moves_limb_more_than_torso():
    m = limb_sphere(3)
    out = cmcf_smooth(m, 0.05)
    d = np.linalg.norm(out.vertices - m.vertices, axis=1)
    u = m.vertices / np.linalg.norm(m.vertices, axis=1, keepdims=True)
    limb, torso = u[:, 2] > 0.98, u[:, 2] < 0
    assert d[limb].mean() > 3 * d[torso].mean()


def test_cmcf_zero_time_and_validation():
    m = icosphere(1)
    assert np.array_equal(cmcf_smooth(m, 0.0).vertices, m.vertices)
    with pytest.raises(ValueError):
        cmcf_smooth(m, -1.0)
    with pytest.raises(ValueError):
        CMCFConfig(n_steps=0)


def test_cmcf_warns_on_open_mesh():
    with pytest.warns(RuntimeWarning, match="closed"):
        cmcf_smooth(grid_plane(5, 5), 0.01)
