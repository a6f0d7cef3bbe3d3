"""TV-regularized shape deformation.

The deformed coordinates ``S' = S + d`` minimize

    E(d) = TV_eps(d) + (w / 2) ||C (S + d) - kappa||^2

where ``TV_eps`` is the vectorial (channel-coupled) total variation of the
displacement on the reference mesh and ``C`` selects the handle vertices.
Each outer iteration freezes the weights ``1/sqrt(|grad d|^2 + eps^2)`` and
solves ``(G^T A W G + w C^T C) d = w C^T (kappa - C S)``. The frozen-weight
quadratic majorizes ``E``, so ``E`` never increases.
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

from .flow import FlowTrace, SolverConfig, TVFlow, evolve
from .linsolve import SolveError, SPDSolver
from .mesh import TriMesh
from .operators import mesh_discretization


class DeformationError(RuntimeError):
    pass


class ConstraintError(ValueError):
    pass


@dataclass(frozen=True)
class DeformationProblem:
    """Handles ``b`` with targets ``kappa`` on ``mesh``.

    ``weight`` of None means ``weight_scale`` times the mean diagonal of the
    reference stiffness. ``eps_grad`` of None means ``1e-6`` times the mean
    edge length.
    """

    mesh: TriMesh
    handles: np.ndarray
    targets: np.ndarray
    weight: float | None = None
    weight_scale: float = 1e6
    tol: float = 1e-5
    max_iter: int = 200
    eps_grad: float | None = None
    linear_solver: str = "direct"

    def __post_init__(self):
        b = np.asarray(self.handles, dtype=np.int64).reshape(-1)
        k = np.asarray(self.targets, dtype=float).reshape(-1, 3) if np.size(self.targets) else np.zeros((0, 3))
        n = self.mesh.n_vertices
        if len(b) != len(k):
            raise ConstraintError(f"{len(b)} handles but {len(k)} targets")
        if len(b) and (b.min() < 0 or b.max() >= n):
            bad = b[(b < 0) | (b >= n)]
            raise ConstraintError(f"handle indices out of range [0, {n}): {bad.tolist()[:10]}")
        if len(np.unique(b)) != len(b):
            raise ConstraintError("handle indices must be unique")
        if not np.all(np.isfinite(k)):
            raise ConstraintError("targets must be finite")
        if self.weight is not None and not self.weight > 0:
            raise ConstraintError("weight must be positive")
        if not (self.tol > 0 and int(self.max_iter) >= 1):
            raise ValueError("tol must be positive and max_iter >= 1")
        object.__setattr__(self, "handles", b)
        object.__setattr__(self, "targets", k)

    def resolved_weight(self, K0=None) -> float:
        if self.weight is not None:
            return float(self.weight)
        if K0 is None:
            K0 = mesh_discretization(self.mesh).stiffness()
        return float(self.weight_scale * K0.diagonal().mean())

    def resolved_eps(self) -> float:
        return self.eps_grad if self.eps_grad is not None else 1e-6 * self.mesh.mean_edge_length()

    def selector(self) -> sparse.csr_matrix:
        n, m = self.mesh.n_vertices, len(self.handles)
        return sparse.csr_matrix((np.ones(m), (np.arange(m), self.handles)), shape=(m, n))


@dataclass
class DeformationResult:
    mesh: TriMesh  # deformed
    displacement: np.ndarray  # d' = S' - S
    log: list = field(default_factory=list)  # dicts: iteration, objective, change
    converged: bool = False

    @property
    def vertices(self):
        return self.mesh.vertices

    @property
    def magnitude(self):
        return np.linalg.norm(self.displacement, axis=1)

    @property
    def iterations(self) -> int:
        return len(self.log)

    def constraint_error(self, problem: DeformationProblem) -> float:
        if not len(problem.handles):
            return 0.0
        return float(np.abs(self.mesh.vertices[problem.handles] - problem.targets).max())

    def log_csv(self) -> str:
        out = io.StringIO()
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["iteration", "objective", "tv", "penalty", "change"])
        for r in self.log:
            w.writerow([r["iteration"], repr(r["objective"]), repr(r["tv"]), repr(r["penalty"]), repr(r["change"])])
        return out.getvalue()


def _ridge(K):
    # tiny diagonal term pins components without handles to their rest position
    return 1e-12 * max(float(K.diagonal().mean()), 1e-300)


def initial_solution(problem: DeformationProblem) -> np.ndarray:
    """Soft-constrained linear deformation ``(K^T K + w C^T C) S' = K^T K S + w C^T kappa``."""
    mesh = problem.mesh
    S = mesh.vertices
    if not len(problem.handles):
        return S.copy()
    K = mesh_discretization(mesh).stiffness()
    w = problem.resolved_weight(K)
    C = problem.selector()
    KK = (K.T @ K).tocsr()
    # solve for the displacement so the rest shape is reproduced exactly when kappa = S(b)
    A = KK + w * (C.T @ C) + _ridge(KK) * sparse.identity(mesh.n_vertices)
    rhs = w * (C.T @ (problem.targets - S[problem.handles]))
    try:
        d = SPDSolver(problem.linear_solver).solve(A.tocsc(), rhs)
    except SolveError as e:
        raise DeformationError(f"initial solve failed: {e}") from None
    return S + d


def _objective(disc, d, eps, w, C, S, kappa):
    tv = disc.tv(d, eps)
    r = C @ (S + d) - kappa
    pen = 0.5 * w * float(np.sum(r ** 2))
    return tv + pen, tv, pen


def deform(problem: DeformationProblem, initial=None) -> DeformationResult:
    """Outer IRLS loop; raises DeformationError if the objective rises 3 times in a row."""
    mesh = problem.mesh
    S = mesh.vertices
    disc = mesh_discretization(mesh)
    K0 = disc.stiffness()
    w = problem.resolved_weight(K0)
    eps = problem.resolved_eps()
    C = problem.selector()
    kappa = problem.targets
    CtC = (C.T @ C).tocsr()
    rhs = w * (C.T @ (kappa - S[problem.handles])) if len(problem.handles) else np.zeros_like(S)
    ridge = _ridge(K0) * sparse.identity(mesh.n_vertices)
    Sp = initial_solution(problem) if initial is None else np.asarray(initial, dtype=float)
    d = Sp - S
    solver = SPDSolver(problem.linear_solver)
    obj, tv, pen = _objective(disc, d, eps, w, C, S, kappa)
    log = [{"iteration": 0, "objective": obj, "tv": tv, "penalty": pen, "change": float("nan")}]
    rises, converged = 0, False
    for it in range(1, int(problem.max_iter) + 1):
        g = disc.gradient(d)
        W = 1.0 / np.sqrt((g ** 2).sum(axis=(1, 2)) + eps ** 2)
        A = disc.stiffness(W) + w * CtC + ridge
        try:
            d_new = solver.solve(A, rhs)
        except SolveError as e:
            raise DeformationError(f"iteration {it}: {e}") from None
        change = np.linalg.norm(d_new - d) / max(np.linalg.norm(S + d_new), 1e-300)
        d = d_new
        obj_new, tv, pen = _objective(disc, d, eps, w, C, S, kappa)
        log.append({"iteration": it, "objective": obj_new, "tv": tv, "penalty": pen, "change": float(change)})
        if obj_new > obj * (1 + 1e-10) + 1e-300:
            rises += 1
            if rises >= 3:
                raise DeformationError(
                    f"objective increased for 3 consecutive iterations (last {obj:.6g} -> {obj_new:.6g})")
        else:
            rises = 0
        obj = obj_new
        if change < problem.tol:
            converged = True
            break
    out = mesh.with_vertices(S + d, {"displacement_norm": np.linalg.norm(d, axis=1)}, check_area=False)
    return DeformationResult(mesh=out, displacement=d, log=log, converged=converged)


def objective_monotone(result: DeformationResult, rtol: float = 1e-10) -> bool:
    obj = np.array([r["objective"] for r in result.log])
    return bool(np.all(np.diff(obj) <= rtol * np.abs(obj[:-1]) + 1e-300))


# plateau analysis -----------------------------------------------------------

@dataclass(frozen=True)
class PlateauFit:
    value: float  # initial plateau level of |d'|
    n_vertices: int
    area: float
    rate: float  # |slope| of the plateau mean relative to the global mean
    r2: float
    t_ext: float
    mask: np.ndarray = field(repr=False, default=None)


@dataclass
class DisplacementReport:
    plateaus: list
    tv: float
    trace: FlowTrace | None = None
    flags: list = field(default_factory=list)

    def as_dict(self) -> dict:
        return {
            "tv": self.tv,
            "flags": list(self.flags),
            "plateaus": [{"value": p.value, "n_vertices": p.n_vertices, "area": p.area, "rate": p.rate,
                          "r2": p.r2, "t_ext": p.t_ext} for p in self.plateaus],
        }


def find_plateaus(values, mass, rel_gap: float = 0.05, min_fraction: float = 0.05):
    """Group sorted values at gaps larger than ``rel_gap`` times the range.

    Groups holding less than ``min_fraction`` of the total mass are dropped.
    Returns a list of boolean masks ordered by level.
    """
    v = np.asarray(values, dtype=float)
    span = v.max() - v.min()
    if span <= 0:
        return [np.ones(len(v), dtype=bool)]
    order = np.argsort(v, kind="stable")
    cuts = np.where(np.diff(v[order]) > rel_gap * span)[0]
    groups = np.split(order, cuts + 1)
    total = mass.sum()
    masks = []
    for g in groups:
        if mass[g].sum() >= min_fraction * total:
            m = np.zeros(len(v), dtype=bool)
            m[g] = True
            masks.append(m)
    return masks


def analyze_displacement(result, mesh: TriMesh | None = None, cfg: SolverConfig | None = None,
                         rel_gap: float = 0.05, min_fraction: float = 0.05, window: float = 0.1,
                         ext_tol: float = 0.01) -> DisplacementReport:
    """Scalar TV flow of ``|d'|`` on the reference metric with a linear fit per plateau.

    ``result`` is a DeformationResult (``mesh`` is then its reference) or a
    per-vertex magnitude array (``mesh`` required). The flow is run on
    ``|d'|`` minus its mean; each plateau's mean then decays to zero with
    slope ``-lambda`` for an eigenset configuration.
    """
    if isinstance(result, DeformationResult):
        mag = result.magnitude
        ref = mesh if mesh is not None else result.mesh.with_vertices(
            result.mesh.vertices - result.displacement, check_area=False)
    else:
        if mesh is None:
            raise ValueError("mesh is required when passing magnitudes")
        mag = np.asarray(result, dtype=float)
        ref = mesh
    disc = mesh_discretization(ref)
    tv = disc.tv(mag)
    span = mag.max() - mag.min()
    if span <= 1e-12 * max(abs(mag).max(), 1e-300):
        return DisplacementReport(
            plateaus=[PlateauFit(float(mag.mean()), len(mag), float(disc.mass.sum()), float("nan"),
                                 float("nan"), float("nan"), np.ones(len(mag), dtype=bool))],
            tv=tv, flags=["constant displacement magnitude: no decay, rate undefined"])
    u0 = mag - disc.mean(mag)
    masks = find_plateaus(mag, disc.mass, rel_gap, min_fraction)
    if cfg is None:
        # time to extinction is at most amplitude * area / perimeter scale; cover it generously
        amp = np.abs(u0).max()
        T = 2.0 * amp * disc.mass.sum() / max(tv / max(span, 1e-300), 1e-300)
        cfg = SolverConfig(dt=T / 200, n_steps=200)
    trace = evolve(TVFlow(disc, name="displacement"), u0, cfg)
    fits, flags = [], []
    for m in masks:
        means = trace.masked_means(m)
        a0 = abs(means[0])
        if a0 <= 1e-12 * np.abs(u0).max():
            flags.append(f"plateau at {mag[m].mean():.4g} sits at the mean; skipped")
            continue
        below = np.where(np.abs(means) < window * a0)[0]
        stop = below[0] if len(below) else len(means)
        if stop < 4:
            flags.append(f"plateau at {mag[m].mean():.4g} decays within {stop} samples; refine dt")
            continue
        tt, mm = trace.times[:stop], means[:stop]
        slope, icpt = np.polyfit(tt, mm, 1)
        ss = np.sum((mm - mm.mean()) ** 2)
        r2 = 1.0 - np.sum((mm - slope * tt - icpt) ** 2) / ss if ss > 0 else 1.0
        ext = np.where(np.abs(means) < ext_tol * a0)[0]
        fits.append(PlateauFit(value=float(mag[m].mean()), n_vertices=int(m.sum()),
                               area=float(disc.mass[m].sum()), rate=float(abs(slope)), r2=float(r2),
                               t_ext=float(trace.times[ext[0]]) if len(ext) else float("nan"), mask=m))
    return DisplacementReport(plateaus=fits, tv=tv, trace=trace, flags=flags)


def segment_contrast(magnitude, masks) -> dict:
    """Within-segment std relative to the gap between segment means."""
    means = [float(magnitude[m].mean()) for m in masks]
    stds = [float(magnitude[m].std()) for m in masks]
    gap = float(np.min(np.abs(np.diff(sorted(means))))) if len(masks) > 1 else 0.0
    return {"means": means, "stds": stds, "gap": gap,
            "ratio": max(stds) / gap if gap > 0 else float("inf")}


# constraint files -----------------------------------------------------------

def parse_constraints(text: str, n_vertices: int | None = None):
    """Parse ``{"constraints": [{"vertex": i, "target": [x, y, z]}, ...], "weight": w}``.

    Returns ``(handles, targets, weight)``; weight is None when absent.
    """
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConstraintError(f"malformed constraints JSON at line {e.lineno} column {e.colno}: {e.msg}") from None
    if not isinstance(data, dict) or not isinstance(data.get("constraints"), list):
        raise ConstraintError('constraints file must be an object with a "constraints" list')
    b, k = [], []
    for i, c in enumerate(data["constraints"]):
        try:
            v = c["vertex"]
            t = [float(x) for x in c["target"]]
        except (KeyError, TypeError, ValueError):
            raise ConstraintError(f'constraint {i} needs "vertex" and a 3-component "target"') from None
        if not isinstance(v, int) or isinstance(v, bool) or len(t) != 3:
            raise ConstraintError(f'constraint {i} needs an integer "vertex" and a 3-component "target"')
        if n_vertices is not None and not 0 <= v < n_vertices:
            raise ConstraintError(f"constraint {i}: vertex {v} out of range [0, {n_vertices})")
        b.append(v)
        k.append(t)
    w = data.get("weight")
    if w is not None:
        try:
            w = float(w)
        except (TypeError, ValueError):
            raise ConstraintError("weight must be a number") from None
    return np.array(b, dtype=np.int64), np.array(k, dtype=float).reshape(-1, 3), w


def format_constraints(handles, targets, weight=None) -> str:
    data = {"constraints": [{"vertex": int(v), "target": [float(x) for x in t]}
                            for v, t in zip(handles, np.asarray(targets).reshape(-1, 3))]}
    if weight is not None:
        data["weight"] = float(weight)
    return json.dumps(data, indent=1)


def pull_constraints(mesh: TriMesh, moving, fixed, offset) -> tuple:
    """Handles ``moving`` translated by ``offset`` and ``fixed`` held at rest."""
    moving = np.asarray(moving, dtype=np.int64)
    fixed = np.asarray(fixed, dtype=np.int64)
    b = np.concatenate([moving, fixed])
    k = np.concatenate([mesh.vertices[moving] + np.asarray(offset, float)[None], mesh.vertices[fixed]])
    return b, k
