"""Spectral transform of a zero-homogeneous flow and filtered reconstruction.

For a trace ``u_0 .. u_N`` on a uniform grid the transform is

    phi_k = t_k (u_{k+1} - 2 u_k + u_{k-1}) / dt^2        0 < k < N
    phi_N = t_N (u_N - 2 u_{N-1} + u_{N-2}) / dt^2        (one-sided)
    phi_0 = 0

and the residual is ``R = T p(u_N) + u_N`` with the trace's recorded rate.
Summation by parts gives ``sum_k phi_k dt + R = f`` up to the one-sided
last bin, whose defect is ``t_N (p_N - 2 p_{N-1} + p_{N-2})``; it vanishes
wherever the rate is locally linear in time and shrinks with ``dt``, but
reaches ``T |jump of p|`` when a merge event falls in the last two steps.

``last_bin="central"`` instead uses the extra step behind the last rate,
``phi_N = t_N (p_{N-1} - p_N) / dt``, and the identity is then exact.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from .flow import FlowTrace


class SpectrumError(ValueError):
    pass


@dataclass
class Spectrum:
    times: np.ndarray  # (N+1,)
    phi: np.ndarray  # (N+1, n) or (N+1, n, c)
    residual: np.ndarray  # (n,) or (n, c)
    mass: np.ndarray
    dt: float
    f0: np.ndarray = field(repr=False, default=None)

    @property
    def T(self) -> float:
        return float(self.times[-1])

    @property
    def n_bins(self) -> int:
        return len(self.times)

    def reconstruct(self):
        return apply_filter(self, FilterSpec.allpass())

    def reconstruction_error(self, relative: bool = False) -> float:
        """Max-abs difference between the all-pass reconstruction and ``f0``."""
        err = float(np.abs(self.reconstruct() - self.f0).max())
        if relative:
            err /= max(float(np.abs(self.f0).max()), 1e-300)
        return err

    def max_utt(self) -> float:
        """Largest ``|u_tt|`` over the bins with ``t > 0``."""
        phi = self.phi[1:].reshape(self.n_bins - 1, -1)
        return float((np.abs(phi).max(axis=1) / self.times[1:]).max())

    def reconstruction_tolerance(self, solver_tol: float = 1e-6) -> float:
        """Relative all-pass tolerance ``2 (solver_tol + dt max|u_tt|)``."""
        scale = max(float(np.abs(self.f0).max()), 1e-300)
        return 2.0 * (solver_tol + self.dt * self.max_utt() / scale)


LAST_BIN = ("one-sided", "central")


def compute_spectrum(trace: FlowTrace, last_bin: str = "one-sided") -> Spectrum:
    if trace.n_samples < 3:
        raise SpectrumError("trace needs at least 3 time samples")
    if last_bin not in LAST_BIN:
        raise SpectrumError(f"last_bin must be one of {LAST_BIN}")
    u, t, dt = trace.states, trace.times, trace.dt
    phi = np.zeros_like(u)
    sh = (-1,) + (1,) * (u.ndim - 1)
    phi[1:-1] = t[1:-1].reshape(sh) * (u[2:] - 2 * u[1:-1] + u[:-2]) / dt ** 2
    if last_bin == "central":
        phi[-1] = t[-1] * (trace.rates[-2] - trace.rates[-1]) / dt
    else:
        phi[-1] = t[-1] * (u[-1] - 2 * u[-2] + u[-3]) / dt ** 2
    R = trace.T * trace.rates[-1] + u[-1]
    return Spectrum(times=t.copy(), phi=phi, residual=R, mass=trace.mass, dt=dt, f0=u[0].copy())


FILTER_KINDS = ("allpass", "zero", "lowpass", "highpass", "band", "samples")


@dataclass(frozen=True)
class FilterSpec:
    """Transfer function ``H`` on the spectrum's time bins.

    Presets (``t`` is the bin time, thresholds as given or times ``T`` when
    ``relative``):

    ``allpass``   H = 1
    ``zero``      H = 0
    ``lowpass``   H = 1 for ``t >= t_c``, else 0 (large t carries coarse scales)
    ``highpass``  H = 1 for ``t < t_c``, else 0
    ``band``      H = gain for ``t_a <= t < t_b``, else 1
    ``samples``   explicit per-bin values
    """

    kind: str = "allpass"
    t_c: float = 0.0
    t_a: float = 0.0
    t_b: float = 0.0
    gain: float = 1.0
    relative: bool = False
    values: tuple = ()

    def __post_init__(self):
        if self.kind not in FILTER_KINDS:
            raise ValueError(f"unknown filter kind {self.kind!r}; expected one of {FILTER_KINDS}")
        if not np.isfinite([self.t_c, self.t_a, self.t_b, self.gain]).all():
            raise ValueError("filter parameters must be finite")
        if self.kind == "band" and not self.t_a <= self.t_b:
            raise ValueError("band filter needs t_a <= t_b")
        if self.kind == "samples" and not np.all(np.isfinite(self.values)):
            raise ValueError("filter samples must be finite")

    @classmethod
    def allpass(cls):
        return cls("allpass")

    @classmethod
    def zero(cls):
        return cls("zero")

    @classmethod
    def lowpass(cls, t_c, relative=False):
        return cls("lowpass", t_c=t_c, relative=relative)

    @classmethod
    def highpass(cls, t_c, relative=False):
        return cls("highpass", t_c=t_c, relative=relative)

    @classmethod
    def band(cls, t_a, t_b, gain, relative=False):
        return cls("band", t_a=t_a, t_b=t_b, gain=gain, relative=relative)

    @classmethod
    def from_samples(cls, values):
        return cls("samples", values=tuple(float(v) for v in values))

    def response(self, times) -> np.ndarray:
        t = np.asarray(times, dtype=float)
        s = t[-1] if self.relative else 1.0
        if self.kind == "allpass":
            return np.ones_like(t)
        if self.kind == "zero":
            return np.zeros_like(t)
        if self.kind == "lowpass":
            return (t >= self.t_c * s).astype(float)
        if self.kind == "highpass":
            return (t < self.t_c * s).astype(float)
        if self.kind == "band":
            inside = (t >= self.t_a * s) & (t < self.t_b * s)
            return np.where(inside, self.gain, 1.0)
        v = np.asarray(self.values, dtype=float)
        if len(v) != len(t):
            raise SpectrumError(f"filter has {len(v)} samples but the spectrum has {len(t)} bins")
        return v

    def to_dict(self) -> dict:
        d = {"kind": self.kind}
        if self.kind in ("lowpass", "highpass"):
            d["t_c"] = self.t_c
        if self.kind == "band":
            d.update(t_a=self.t_a, t_b=self.t_b, gain=self.gain)
        if self.kind == "samples":
            d["values"] = list(self.values)
        if self.relative:
            d["relative"] = True
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "FilterSpec":
        d = dict(d)
        if "values" in d:
            d["values"] = tuple(d["values"])
        return cls(**d)


def apply_filter(spectrum: Spectrum, H) -> np.ndarray:
    """``sum_k H(t_k) phi_k dt + R``; ``H`` is a FilterSpec or per-bin samples."""
    if isinstance(H, FilterSpec):
        h = H.response(spectrum.times)
    else:
        h = np.asarray(H, dtype=float)
        if h.shape != spectrum.times.shape:
            raise SpectrumError(f"filter has {h.size} samples but the spectrum has {spectrum.n_bins} bins")
    if not np.all(np.isfinite(h)):
        raise SpectrumError("filter values must be finite")
    return np.tensordot(h, spectrum.phi, axes=(0, 0)) * spectrum.dt + spectrum.residual


@dataclass(frozen=True)
class BandEnergies:
    times: np.ndarray
    per_channel: np.ndarray  # (N+1, c)
    combined: np.ndarray  # (N+1,)

    @property
    def total(self) -> float:
        return float(self.combined.sum())

    def concentration(self, t_center: float, width: int = 1) -> float:
        """Fraction of combined energy within ``width`` bins of ``t_center``."""
        k = int(np.argmin(np.abs(self.times - t_center)))
        lo, hi = max(0, k - width), k + width + 1
        tot = self.total
        return float(self.combined[lo:hi].sum() / tot) if tot > 0 else 0.0


def band_energies(spectrum: Spectrum) -> BandEnergies:
    """Mass-weighted L2 norm of each band times ``dt``."""
    phi = spectrum.phi
    P = phi if phi.ndim == 3 else phi[:, :, None]
    sq = np.einsum("kic,i->kc", P ** 2, spectrum.mass)
    per = np.sqrt(sq) * spectrum.dt
    comb = np.sqrt(sq.sum(axis=1)) * spectrum.dt
    return BandEnergies(spectrum.times.copy(), per, comb)


def spectrum_csv(spectrum: Spectrum) -> str:
    e = band_energies(spectrum)
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    nc = e.per_channel.shape[1]
    w.writerow(["t", "energy", *(f"energy_{c}" for c in range(nc))] if nc > 1 else ["t", "energy"])
    for k, t in enumerate(e.times):
        row = [repr(float(t)), repr(float(e.combined[k]))]
        if nc > 1:
            row += [repr(float(x)) for x in e.per_channel[k]]
        w.writerow(row)
    return out.getvalue()


def export_bands(spectrum: Spectrum, mesh, directory, bins) -> list:
    """Write selected bands as PLY vertex attributes (``phi`` or ``phi0..``)."""
    import os

    from .mesh_io import write_mesh

    os.makedirs(directory, exist_ok=True)
    paths = []
    for k in bins:
        p = spectrum.phi[k]
        attrs = {"phi": p} if p.ndim == 1 else {f"phi{c}": p[:, c] for c in range(p.shape[1])}
        path = os.path.join(directory, f"band_{k:05d}.ply")
        write_mesh(path, mesh.with_vertices(mesh.vertices, attrs), "ply")
        paths.append(path)
    return paths
