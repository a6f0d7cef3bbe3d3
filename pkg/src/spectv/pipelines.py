"""Mesh-in/mesh-out spectral shape filtering.

Four methods share the same plumbing (flow, spectrum, filter, recompose):

naive
    Each coordinate evolves under the scalar TV flow on the reference mesh.
m1
    Coordinates evolve jointly; one combined gradient magnitude per face.
m2
    Conformalized coupled flow; the metric factor follows the evolving
    geometry while gradients stay on the reference mesh.
m3
    The shape is split into a smooth base and a signed offset along a fixed
    direction field; only the scalar offset is filtered.

Flow time has units of length squared for every method. When no solver is
given, the time step is scaled by the squared radius of the sphere with
the same area as the input.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .flow import CMCFConfig, ConformalTVFlow, FlowError, FlowTrace, SolverConfig, TVFlow, cmcf_smooth, evolve
from .mesh import TriMesh, face_geometry, total_area, vertex_normals
from .spectral import LAST_BIN, FilterSpec, Spectrum, apply_filter, compute_spectrum

METHODS = ("naive", "m1", "m2", "m3")
METRIC_SOURCES = ("original", "smoothed")


def default_solver(mesh: TriMesh, n_steps: int = 100, horizon: float = 0.1, **kw) -> SolverConfig:
    """Solver whose stopping time is ``horizon * a**2`` with ``a`` the equal-area radius."""
    a2 = total_area(mesh) / (4.0 * np.pi)
    return SolverConfig(dt=horizon * a2 / n_steps, n_steps=n_steps, **kw)


@dataclass(frozen=True)
class MethodConfig:
    """Filtering method and its parameters.

    ``smoothing_time`` and ``metric_source`` belong to m3 and must be set
    exactly when ``method == "m3"`` (use :meth:`create` for defaults).
    ``solver`` of None picks :func:`default_solver` for the input mesh.
    ``last_bin`` selects the last spectral bin (see :func:`compute_spectrum`).
    """

    method: str = "m1"
    solver: SolverConfig | None = None
    filter: FilterSpec = field(default_factory=FilterSpec.allpass)
    smoothing_time: float | None = None
    metric_source: str | None = None
    cmcf: CMCFConfig | None = None
    last_bin: str = "one-sided"

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}; expected one of {METHODS}")
        if self.last_bin not in LAST_BIN:
            raise ValueError(f"last_bin must be one of {LAST_BIN}")
        m3 = self.method == "m3"
        extras = (self.smoothing_time, self.metric_source)
        if m3 and any(x is None for x in extras):
            raise ValueError("m3 requires smoothing_time and metric_source")
        if not m3 and any(x is not None for x in extras + (self.cmcf,)):
            raise ValueError(f"smoothing_time/metric_source/cmcf only apply to m3, not {self.method}")
        if m3:
            if not self.smoothing_time >= 0:
                raise ValueError("smoothing_time must be non-negative")
            if self.metric_source not in METRIC_SOURCES:
                raise ValueError(f"metric_source must be one of {METRIC_SOURCES}")

    @classmethod
    def create(cls, method: str, **kw) -> "MethodConfig":
        """Constructor that fills the m3 defaults (time 0.05, original metric)."""
        if method == "m3":
            kw.setdefault("smoothing_time", 0.05)
            kw.setdefault("metric_source", "original")
        return cls(method=method, **kw)

    def to_dict(self) -> dict:
        d = {"method": self.method, "filter": self.filter.to_dict()}
        if self.last_bin != "one-sided":
            d["last_bin"] = self.last_bin
        if self.solver is not None:
            s = self.solver
            d["solver"] = {k: getattr(s, k) for k in s.__dataclass_fields__}
            d["solver"]["eps_schedule"] = list(s.eps_schedule)
        if self.method == "m3":
            d.update(smoothing_time=self.smoothing_time, metric_source=self.metric_source)
            if self.cmcf is not None:
                d["cmcf"] = {"n_steps": self.cmcf.n_steps, "collapse_ratio": self.cmcf.collapse_ratio}
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "MethodConfig":
        d = dict(d)
        if "filter" in d:
            d["filter"] = FilterSpec.from_dict(d["filter"])
        if d.get("solver") is not None:
            s = dict(d["solver"])
            s["eps_schedule"] = tuple(s.get("eps_schedule", ()))
            d["solver"] = SolverConfig(**s)
        if d.get("cmcf") is not None:
            d["cmcf"] = CMCFConfig(**d["cmcf"])
        return cls(**d)


@dataclass(frozen=True)
class DisplacementDecomposition:
    """``S = base + offset * direction`` with unit directions."""

    base: np.ndarray  # (n, 3)
    direction: np.ndarray  # (n, 3)
    offset: np.ndarray  # (n,) signed
    sign: np.ndarray  # (n,) alpha in {-1, +1}

    def reconstruct(self, offset=None) -> np.ndarray:
        f = self.offset if offset is None else np.asarray(offset, dtype=float)
        return self.base + f[:, None] * self.direction


def decompose_displacement(mesh: TriMesh, smoothing_time: float, cfg: CMCFConfig | None = None,
                           base=None) -> DisplacementDecomposition:
    """Offset of ``mesh`` from its cMCF-smoothed copy (or an explicit ``base``).

    ``alpha = sign(<S - B, n(B)>)`` makes the direction point outward;
    ``direction = alpha (S - B)/|S - B|`` and ``offset = alpha |S - B|``.
    Where ``S == B`` the direction falls back to the base normal.
    """
    S = mesh.vertices
    if base is None:
        B = cmcf_smooth(mesh, smoothing_time, cfg).vertices
    else:
        B = np.asarray(base, dtype=float)
        if B.shape != S.shape:
            raise ValueError(f"base has shape {B.shape}, expected {S.shape}")
    D = S - B
    nb = vertex_normals(mesh.with_vertices(B, check_area=False))
    dist = np.linalg.norm(D, axis=1)
    alpha = np.where(np.einsum("ij,ij->i", D, nb) < 0, -1.0, 1.0)
    moved = dist > 0
    d_hat = nb.copy()
    d_hat[moved] = alpha[moved, None] * D[moved] / dist[moved, None]
    f = np.where(moved, alpha * dist, 0.0)
    return DisplacementDecomposition(base=B, direction=d_hat, offset=f, sign=alpha)


@dataclass
class FilterResult:
    source: TriMesh
    mesh: TriMesh
    trace: FlowTrace
    spectrum: Spectrum
    decomposition: DisplacementDecomposition | None = None

    @property
    def max_vertex_change(self) -> float:
        """Largest coordinate difference between input and output."""
        return float(np.abs(self.mesh.vertices - self.source.vertices).max())

    @property
    def residual_norm(self) -> float:
        return float(np.abs(self.spectrum.residual).max())


def run_method(mesh: TriMesh, cfg: MethodConfig) -> FilterResult:
    """Flow, transform and filter; the returned result keeps the intermediates."""
    solver = cfg.solver or default_solver(mesh)
    dec = None
    if cfg.method == "naive":
        trace = evolve(TVFlow(mesh, coupled=False, name="naive"), mesh.vertices, solver)
    elif cfg.method == "m1":
        trace = evolve(TVFlow(mesh, coupled=True, name="m1"), mesh.vertices, solver)
    elif cfg.method == "m2":
        trace = evolve(ConformalTVFlow(mesh), mesh.vertices, solver)
    else:
        dec = decompose_displacement(mesh, cfg.smoothing_time, cfg.cmcf)
        metric = mesh if cfg.metric_source == "original" else mesh.with_vertices(dec.base, check_area=False)
        if cfg.metric_source == "smoothed" and face_geometry(metric).area.min() <= 0:
            raise FlowError("smoothed metric mesh has degenerate faces")
        trace = evolve(TVFlow(metric, coupled=False, name="m3"), dec.offset, solver)
    spec = compute_spectrum(trace, cfg.last_bin)
    out = apply_filter(spec, cfg.filter)
    if dec is not None:
        out = dec.reconstruct(out)
    if not np.all(np.isfinite(out)):
        raise FlowError("filtered shape contains non-finite values")
    return FilterResult(mesh, mesh.with_vertices(out, check_area=False), trace, spec, dec)


def filter_shape(mesh: TriMesh, cfg: MethodConfig) -> TriMesh:
    """Filtered copy of ``mesh`` with identical connectivity."""
    return run_method(mesh, cfg).mesh


def exaggerate(mesh: TriMesh, cfg: MethodConfig) -> TriMesh:
    """Band amplification or attenuation; ``cfg.filter`` must be a band or sample filter."""
    if cfg.filter.kind not in ("band", "samples"):
        raise ValueError("exaggerate needs a band or per-bin sample filter")
    return filter_shape(mesh, cfg)


def with_filter(cfg: MethodConfig, H: FilterSpec) -> MethodConfig:
    return replace(cfg, filter=H)
