"""Time integration of ``u_t = -p(u)`` and related smoothing flows.

The default integrator is semi-implicit: each step is the proximal problem

    u_{k+1} = argmin_u  TV_eps(u) + 1/(2 dt) ||u - u_k||_M^2

solved by iteratively reweighted least squares. With weights
``w = 1/sqrt(|grad v|^2 + eps^2)`` taken from the current iterate ``v``, each
IRLS pass solves the SPD system ``(M + dt G^T A W G) v' = M u_k``. This is a
majorize-minimize scheme for the smoothed energy, so the proximal objective
never increases and ``TV_eps`` is non-increasing along the flow.
"""
from __future__ import annotations

import csv
import io
import os
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import sparse
from scipy.sparse import linalg as spla

from .linsolve import BACKENDS, SolveError, SPDSolver
from .mesh import TriMesh
from .operators import (Discretization, OperatorConfig, as_discretization, conformal_factor,
                        mesh_discretization)


class FlowError(RuntimeError):
    """Numerical failure during time stepping."""

    def __init__(self, msg, step=None):
        self.step = step
        super().__init__(msg if step is None else f"step {step}: {msg}")


MODES = ("semi-implicit", "explicit")
LINEAR_SOLVERS = BACKENDS


@dataclass(frozen=True)
class SolverConfig:
    """Time stepping parameters.

    ``eps_grad`` of None means the discretization's default floor.
    ``eps_schedule`` optionally lists floors used for the first IRLS passes
    of every step (continuation); the last entry repeats.
    """

    dt: float = 0.01
    n_steps: int = 100
    irls_iters: int = 10
    irls_tol: float = 1e-6
    linear_tol: float = 1e-10
    eps_grad: float | None = None
    eps_schedule: tuple = ()
    mode: str = "semi-implicit"
    linear_solver: str = "direct"

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if int(self.n_steps) < 1:
            raise ValueError("n_steps must be >= 1")
        if int(self.irls_iters) < 1:
            raise ValueError("irls_iters must be >= 1")
        if not (self.irls_tol > 0 and self.linear_tol > 0):
            raise ValueError("tolerances must be positive")
        if self.eps_grad is not None and not self.eps_grad > 0:
            raise ValueError("eps_grad must be positive")
        if any(not e > 0 for e in self.eps_schedule):
            raise ValueError("eps_schedule entries must be positive")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.linear_solver not in LINEAR_SOLVERS:
            raise ValueError(f"linear_solver must be one of {LINEAR_SOLVERS}")

    @property
    def T(self) -> float:
        return self.dt * self.n_steps


@dataclass
class FlowTrace:
    """States ``u(t_k)`` and rates ``p(u(t_k))`` on a uniform time grid.

    ``rates[k] = (u_k - u_{k+1}) / dt``; the last rate comes from one extra
    step beyond ``t_N``, so ``rates`` has the same length as ``states``.
    """

    times: np.ndarray
    states: np.ndarray
    rates: np.ndarray
    energies: np.ndarray
    mass: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        if t.ndim != 1 or len(t) < 1:
            raise ValueError("times must be a nonempty 1-D array")
        if len(t) > 1 and not np.all(np.diff(t) > 0):
            raise ValueError("times must be strictly increasing")
        if self.states.shape[0] != len(t) or self.rates.shape != self.states.shape:
            raise ValueError("states/rates must have one row per time sample")
        self.times = t

    @property
    def dt(self) -> float:
        return float(self.meta.get("dt", self.times[1] - self.times[0]))

    @property
    def T(self) -> float:
        return float(self.times[-1])

    @property
    def n_samples(self) -> int:
        return len(self.times)

    @property
    def is_vector(self) -> bool:
        return self.states.ndim == 3

    def channel(self, c: int) -> "FlowTrace":
        if not self.is_vector:
            raise ValueError("trace is scalar")
        return replace(self, states=self.states[:, :, c], rates=self.rates[:, :, c],
                       meta=dict(self.meta, channel=c))

    def masked_means(self, mask=None, channel=None) -> np.ndarray:
        """Mass-weighted mean of each state over ``mask`` (all vertices if None)."""
        w = self.mass if mask is None else self.mass * np.asarray(mask, dtype=bool)
        if w.sum() <= 0:
            raise ValueError("mask selects no vertices")
        s = self.states if channel is None else self.states[:, :, channel]
        return np.tensordot(s, w, axes=([1], [0])) / w.sum()


def _as2d(u):
    u = np.asarray(u, dtype=float)
    return (u[:, None], True) if u.ndim == 1 else (u, False)


def _solver(op, cfg: SolverConfig) -> SPDSolver:
    s = getattr(op, "_spd", None)
    if s is None or s.requested != (cfg.linear_solver, cfg.linear_tol):
        s = SPDSolver(cfg.linear_solver, cfg.linear_tol)
        s.requested = (cfg.linear_solver, cfg.linear_tol)
        op._spd = s
    return s


def _solve(op, cfg, A, B, step):
    try:
        return _solver(op, cfg).solve(A, B)
    except SolveError as e:
        raise FlowError(str(e), step) from None


class FlowOperator:
    """Base class: a zero-homogeneous (or linear) operator with a time step."""

    name = "operator"
    disc: Discretization

    def apply(self, u):
        raise NotImplementedError

    def energy(self, u) -> float:
        raise NotImplementedError

    def step(self, u, dt, cfg: SolverConfig, step=None, guess=None):
        """One semi-implicit step; returns ``(u_next, n_irls, last_change)``.

        ``guess`` is an optional starting iterate for inner iterations.
        """
        raise NotImplementedError

    def eps(self, cfg: SolverConfig) -> float:
        return cfg.eps_grad if cfg.eps_grad is not None else self.disc.eps_default


def _eps_at(op, cfg, j):
    if cfg.eps_schedule:
        return cfg.eps_schedule[min(j, len(cfg.eps_schedule) - 1)]
    return op.eps(cfg)


class TVFlow(FlowOperator):
    """Total variation flow on a fixed metric.

    ``coupled=False`` treats each channel independently (scalar NETV, Naive,
    M3); ``coupled=True`` shares one gradient magnitude across channels (M1).
    """

    def __init__(self, domain, coupled: bool = False, name: str | None = None):
        self.disc = as_discretization(domain)
        self.coupled = coupled
        self.name = name or ("tv-coupled" if coupled else "tv")

    def _weights(self, V, eps):
        g = self.disc.gradient(V)  # (k, d, c)
        if self.coupled:
            nrm2 = (g ** 2).sum(axis=(1, 2))
            return [1.0 / np.sqrt(nrm2 + eps ** 2)]
        nrm2 = (g ** 2).sum(axis=1)
        return [1.0 / np.sqrt(nrm2[:, c] + eps ** 2) for c in range(V.shape[1])]

    def apply(self, u, eps=None):
        U, flat = _as2d(u)
        eps = self.disc.eps_default if eps is None else eps
        g = self.disc.gradient(U)
        if self.coupled:
            mag = np.sqrt((g ** 2).sum(axis=(1, 2)) + eps ** 2)[:, None, None]
        else:
            mag = np.sqrt((g ** 2).sum(axis=1, keepdims=True) + eps ** 2)
        out = self.disc.divergence(g / mag)
        return out[:, 0] if flat else out

    def energy(self, u, eps=0.0) -> float:
        U, _ = _as2d(u)
        if self.coupled:
            return self.disc.tv(U, eps)
        return sum(self.disc.tv(U[:, c], eps) for c in range(U.shape[1]))

    def _prox_objective(self, V, U, dt, eps):
        return self.energy(V, eps) + self.disc.inner(V - U, V - U) / (2.0 * dt)

    def step(self, u, dt, cfg, step=None, guess=None):
        U, flat = _as2d(u)
        mass = self.disc.mass
        M = sparse.diags(mass)
        rhs = mass[:, None] * U
        V = U.copy()
        if guess is not None:
            G, _ = _as2d(guess)
            eps = _eps_at(self, cfg, 0)
            if self._prox_objective(G, U, dt, eps) < self._prox_objective(U, U, dt, eps):
                V = G.copy()
        change, j = np.inf, 0
        for j in range(cfg.irls_iters):
            ws = self._weights(V, _eps_at(self, cfg, j))
            if self.coupled:
                Vn = _solve(self, cfg, M + dt * self.disc.stiffness(ws[0]), rhs, step)
            else:
                Vn = np.column_stack([
                    _solve(self, cfg, M + dt * self.disc.stiffness(w), rhs[:, c], step)
                    for c, w in enumerate(ws)])
            change = np.linalg.norm(Vn - V) / max(np.linalg.norm(V), 1e-300)
            V = Vn
            if change < cfg.irls_tol:
                break
        return (V[:, 0] if flat else V), j + 1, float(change)


class HeatFlow(FlowOperator):
    """Linear diffusion ``u_t = div grad u`` on a fixed metric."""

    name = "heat"

    def __init__(self, domain):
        self.disc = as_discretization(domain)
        self.K = self.disc.stiffness()
        self._lu = {}

    def apply(self, u, eps=None):
        U, flat = _as2d(u)
        out = (self.K @ U) / self.disc.mass[:, None]
        return out[:, 0] if flat else out

    def energy(self, u, eps=0.0) -> float:
        U, _ = _as2d(u)
        return 0.5 * float(np.sum(U * (self.K @ U)))

    def step(self, u, dt, cfg, step=None, guess=None):
        U, flat = _as2d(u)
        mass = self.disc.mass
        key = (dt, cfg.linear_solver)
        if key not in self._lu and cfg.linear_solver != "cg":
            A = (sparse.diags(mass) + dt * self.K).tocsc()
            self._lu[key] = spla.splu(A, permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0,
                                      options={"SymmetricMode": True})
        if key in self._lu:
            V = self._lu[key].solve(mass[:, None] * U)
        else:
            V = _solve(self, cfg, sparse.diags(mass) + dt * self.K, mass[:, None] * U, step)
        if not np.all(np.isfinite(V)):
            raise FlowError("non-finite state", step)
        return (V[:, 0] if flat else V), 1, 0.0


class ConformalTVFlow(FlowOperator):
    """Conformalized coupled 3-Laplacian flow of vertex coordinates.

    ``p(S) = sigma(S) div(|grad S|_eps grad S)`` with gradients on the
    reference mesh and ``sigma = sqrt(|g0|/|g_t|)`` from the current
    geometry. A step solves ``(M/sigma + dt G^T A W G) S' = (M/sigma) S_k``
    with ``W = |grad S'|_eps`` relinearized by fixed-point passes.
    """

    name = "conformal-tv"

    def __init__(self, mesh0: TriMesh):
        if not isinstance(mesh0, TriMesh):
            raise TypeError("conformal flow needs a reference TriMesh")
        self.mesh0 = mesh0
        self.disc = mesh_discretization(mesh0)

    def _mag(self, S, eps):
        g = self.disc.gradient(S)
        return np.sqrt((g ** 2).sum(axis=(1, 2)) + eps ** 2)

    def apply(self, S, eps=None):
        eps = self.disc.eps_default if eps is None else eps
        sigma = conformal_factor(self.mesh0, S, self.disc.cell_area)
        g = self.disc.gradient(S)
        return sigma[:, None] * self.disc.divergence(g * self._mag(S, eps)[:, None, None])

    def energy(self, S, eps=0.0) -> float:
        return float((self.disc.cell_area * self._mag(S, eps) ** 3).sum() / 3.0)

    def step(self, S, dt, cfg, step=None, guess=None):
        S = np.asarray(S, dtype=float)
        try:
            sigma = conformal_factor(self.mesh0, S, self.disc.cell_area)
        except ValueError as e:
            raise FlowError(str(e), step) from None
        m = self.disc.mass / sigma
        M = sparse.diags(m)
        rhs = m[:, None] * S
        V = S.copy()
        change, j = np.inf, 0
        for j in range(cfg.irls_iters):
            w = self._mag(V, _eps_at(self, cfg, j))
            Vn = _solve(self, cfg, M + dt * self.disc.stiffness(w), rhs, step)
            change = np.linalg.norm(Vn - V) / max(np.linalg.norm(V), 1e-300)
            V = Vn
            if change < cfg.irls_tol:
                break
        return V, j + 1, float(change)


def evolve(operator: FlowOperator, f0, cfg: SolverConfig | None = None) -> FlowTrace:
    """Integrate ``u_t = -p(u)`` from ``u(0) = f0`` for ``cfg.n_steps`` steps."""
    cfg = cfg or SolverConfig()
    u = np.array(f0, dtype=float)
    if u.shape[0] != operator.disc.n:
        raise ValueError(f"f0 has {u.shape[0]} rows, operator expects {operator.disc.n}")
    if not np.all(np.isfinite(u)):
        raise FlowError("f0 contains non-finite values", 0)
    N, dt = int(cfg.n_steps), cfg.dt
    states = np.empty((N + 2,) + u.shape)
    energies = np.empty(N + 1)
    states[0] = u
    irls = np.zeros(N + 1, dtype=int)
    changes = np.zeros(N + 1)
    eps = operator.eps(cfg)
    for k in range(N + 1):
        energies[k] = operator.energy(u, eps)
        if cfg.mode == "explicit":
            un = u - dt * np.asarray(operator.apply(u, eps))
            irls[k] = 0
        else:
            guess = None if k == 0 else u - (states[k - 1] - u)  # linear extrapolation
            un, irls[k], changes[k] = operator.step(u, dt, cfg, step=k, guess=guess)
        if not np.all(np.isfinite(un)):
            raise FlowError("non-finite state", k + 1)
        states[k + 1] = un
        u = un
    rates = (states[:-1] - states[1:]) / dt
    meta = {
        "operator": operator.name, "dt": dt, "n_steps": N, "mode": cfg.mode,
        "eps_grad": eps, "irls_iterations": irls, "irls_last_change": changes,
        "linear_solver": cfg.linear_solver,
    }
    return FlowTrace(times=dt * np.arange(N + 1), states=states[:-1], rates=rates,
                     energies=energies, mass=operator.disc.mass.copy(), meta=meta)


def heat_flow(mesh0, f0, cfg: SolverConfig | None = None) -> FlowTrace:
    """Linear diffusion baseline on the fixed reference metric."""
    return evolve(HeatFlow(mesh0), f0, cfg)


@dataclass(frozen=True)
class CMCFConfig:
    n_steps: int = 10
    collapse_ratio: float = 1e-10  # min face area / total area before declaring collapse

    def __post_init__(self):
        if int(self.n_steps) < 1:
            raise ValueError("n_steps must be >= 1")


def cmcf_smooth(mesh: TriMesh, flow_time: float, cfg: CMCFConfig | None = None) -> TriMesh:
    """Conformalized mean curvature flow.

    Solves ``(M_t + dt K_0) S_{k+1} = M_t S_k`` with the reference stiffness
    ``K_0`` and the current lumped mass ``M_t``. ``flow_time`` is
    dimensionless: the step is scaled by the total surface area. After
    every step the centroid and total area are restored to the input's, so
    the result lives in the input frame.
    """
    cfg = cfg or CMCFConfig()
    if flow_time < 0:
        raise ValueError("flow_time must be non-negative")
    if not mesh.is_closed() or mesh.euler() != 2:
        warnings.warn("cMCF is intended for closed genus-0 meshes", RuntimeWarning, stacklevel=2)
    if flow_time == 0:
        return mesh.with_vertices(mesh.vertices)
    disc = mesh_discretization(mesh)
    K0 = disc.stiffness()
    A0 = disc.cell_area.sum()
    m0 = disc.mass
    c0 = (m0 @ mesh.vertices) / m0.sum()
    dt = flow_time * A0 / cfg.n_steps
    S = mesh.vertices.copy()
    faces = mesh.faces
    solver = SPDSolver("direct")
    for k in range(cfg.n_steps):
        p0, p1, p2 = (S[faces[:, i]] for i in range(3))
        at = 0.5 * np.linalg.norm(np.cross(p1 - p0, p2 - p0), axis=1)
        if not np.all(np.isfinite(at)) or at.min() < cfg.collapse_ratio * at.sum():
            warnings.warn(f"cMCF collapsed at step {k}; returning last valid state",
                          RuntimeWarning, stacklevel=2)
            break
        mt = np.zeros(len(S))
        np.add.at(mt, faces.ravel(), np.repeat(at / 3.0, 3))
        Sn = solver.solve(sparse.diags(mt) + dt * K0, mt[:, None] * S)
        if not np.all(np.isfinite(Sn)):
            warnings.warn(f"cMCF produced non-finite values at step {k}; returning last valid state",
                          RuntimeWarning, stacklevel=2)
            break
        q0, q1, q2 = (Sn[faces[:, i]] for i in range(3))
        an = 0.5 * np.linalg.norm(np.cross(q1 - q0, q2 - q0), axis=1)
        if an.sum() <= 0 or an.min() < cfg.collapse_ratio * an.sum():
            warnings.warn(f"cMCF collapsed at step {k}; returning last valid state",
                          RuntimeWarning, stacklevel=2)
            break
        mn = np.zeros(len(S))
        np.add.at(mn, faces.ravel(), np.repeat(an / 3.0, 3))
        cn = (mn @ Sn) / mn.sum()
        S = (Sn - cn) * np.sqrt(A0 / an.sum()) + c0
    return mesh.with_vertices(S)


@dataclass(frozen=True)
class DecayFit:
    rate: float  # lambda_hat
    r2: float
    t_ext: float  # nan if never extinct within the trace
    slope: float
    intercept: float
    n_fit: int
    times: np.ndarray = field(repr=False, default=None)
    means: np.ndarray = field(repr=False, default=None)


def fit_linear_decay(trace: FlowTrace, mask=None, channel=None, window: float = 0.1,
                     ext_tol: float = 0.01) -> DecayFit:
    """Least-squares line through the masked mean over the pre-extinction window.

    Samples with ``|mean| >= window * |mean_0|`` up to the first one below
    that level are fitted. ``rate = -slope / intercept`` is the decay rate of
    the normalized amplitude; ``t_ext`` is the first time with
    ``|mean| < ext_tol * |mean_0|``.
    """
    if mask is not None and not np.any(mask):
        raise ValueError("mask is empty")
    m = trace.masked_means(mask, channel)
    t = trace.times
    m0 = abs(m[0])
    if m0 == 0:
        raise ValueError("initial masked mean is zero; nothing decays")
    below = np.where(np.abs(m) < window * m0)[0]
    stop = below[0] if len(below) else len(m)
    if stop < 4:
        raise ValueError(f"only {stop} samples before extinction; need at least 4")
    tt, mm = t[:stop], m[:stop]
    slope, intercept = np.polyfit(tt, mm, 1)
    resid = mm - (slope * tt + intercept)
    ss = np.sum((mm - mm.mean()) ** 2)
    r2 = 1.0 - np.sum(resid ** 2) / ss if ss > 0 else 1.0
    ext = np.where(np.abs(m) < ext_tol * m0)[0]
    t_ext = float(t[ext[0]]) if len(ext) else float("nan")
    return DecayFit(rate=float(-slope / intercept), r2=float(r2), t_ext=t_ext, slope=float(slope),
                    intercept=float(intercept), n_fit=int(stop), times=t, means=m)


def trace_csv(trace: FlowTrace, masks: dict | None = None) -> str:
    """CSV text with columns t, energy, mean and one mean column per named mask."""
    masks = masks or {}
    cols = {"mean": trace.masked_means(None, 0 if trace.is_vector else None)}
    for name, mk in masks.items():
        cols[f"mean_{name}"] = trace.masked_means(mk, 0 if trace.is_vector else None)
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["t", "energy", *cols])
    for k, t in enumerate(trace.times):
        w.writerow([repr(float(t)), repr(float(trace.energies[k])), *(repr(float(c[k])) for c in cols.values())])
    return out.getvalue()


def export_trace(trace: FlowTrace, directory, mesh: TriMesh, masks: dict | None = None,
                 every: int = 1, as_geometry: bool = False) -> list:
    """Write one PLY per snapshot plus ``trace.csv``; returns written paths.

    Scalar states become a ``u`` vertex attribute (``u0, u1, ...`` for
    channels). With ``as_geometry`` a 3-channel state replaces the vertices.
    """
    from .mesh_io import write_mesh

    os.makedirs(directory, exist_ok=True)
    paths = []
    for k in range(0, trace.n_samples, max(1, int(every))):
        s = trace.states[k]
        if as_geometry:
            m = mesh.with_vertices(s, check_area=False)
        elif s.ndim == 1:
            m = mesh.with_vertices(mesh.vertices, {"u": s})
        else:
            m = mesh.with_vertices(mesh.vertices, {f"u{c}": s[:, c] for c in range(s.shape[1])})
        p = os.path.join(directory, f"snapshot_{k:05d}.ply")
        write_mesh(p, m, "ply")
        paths.append(p)
    p = os.path.join(directory, "trace.csv")
    with open(p, "w") as fh:
        fh.write(trace_csv(trace, masks))
    paths.append(p)
    return paths


__all__ = [
    "FlowError", "SolverConfig", "FlowTrace", "FlowOperator", "TVFlow", "HeatFlow",
    "ConformalTVFlow", "evolve", "heat_flow", "CMCFConfig", "cmcf_smooth", "DecayFit",
    "fit_linear_decay", "trace_csv", "export_trace", "OperatorConfig",
]
