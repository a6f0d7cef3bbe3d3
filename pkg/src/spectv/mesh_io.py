"""Reading and writing OBJ, OFF and ASCII PLY.

Formats
-------
OBJ
    ``v x y z`` and ``f i j k`` lines, indices 1-based (negative indices are
    relative, per the OBJ convention). ``f`` entries may carry ``/vt/vn``
    suffixes; polygons are fan-triangulated. Other records are ignored.
OFF
    ``OFF`` header, ``nv nf ne`` counts, vertex rows, face rows ``k i j ...``
    (0-based, fan-triangulated).
PLY (ascii 1.0)
    ``vertex`` element with ``x y z`` plus optional scalar properties, which
    are loaded into ``TriMesh.attributes``; ``face`` element with a list
    property of vertex indices.

Coordinates are written with 17 significant digits, so a save/load cycle
reproduces every float exactly.
"""
from __future__ import annotations

import io
import os

import numpy as np

from .mesh import TriMesh

FORMATS = ("obj", "off", "ply")


class MeshParseError(ValueError):
    def __init__(self, msg, line=None):
        self.line = line
        super().__init__(f"line {line}: {msg}" if line is not None else msg)


def _as_text(source) -> str:
    if isinstance(source, bytes):
        return source.decode("utf-8", errors="replace")
    if isinstance(source, str):
        return source
    if hasattr(source, "read"):
        data = source.read()
        return data.decode("utf-8", errors="replace") if isinstance(data, bytes) else data
    raise TypeError(f"cannot read mesh from {type(source).__name__}")


def _fan(poly):
    return [(poly[0], poly[i], poly[i + 1]) for i in range(1, len(poly) - 1)]


def _parse_obj(text):
    verts, faces, where = [], [], []
    for ln, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tok = line.split()
        if tok[0] == "v":
            if len(tok) < 4:
                raise MeshParseError("vertex needs 3 coordinates", ln)
            try:
                verts.append([float(t) for t in tok[1:4]])
            except ValueError as e:
                raise MeshParseError(f"bad coordinate ({e})", ln) from None
        elif tok[0] == "f":
            if len(tok) < 4:
                raise MeshParseError("face needs at least 3 vertices", ln)
            idx = []
            for t in tok[1:]:
                try:
                    k = int(t.split("/")[0])
                except ValueError:
                    raise MeshParseError(f"bad face index {t!r}", ln) from None
                if k == 0:
                    raise MeshParseError("OBJ indices are 1-based; got 0", ln)
                idx.append(k - 1 if k > 0 else len(verts) + k)
            faces.extend(_fan(idx))
            where.extend([ln] * (len(idx) - 2))
    return verts, faces, {}, where


def _lines(text):
    for ln, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if line:
            yield ln, line


def _parse_off(text):
    it = _lines(text)
    try:
        ln, head = next(it)
    except StopIteration:
        raise MeshParseError("empty OFF file") from None
    if not head.startswith("OFF"):
        raise MeshParseError("missing OFF header", ln)
    rest = head[3:].split()
    if not rest:
        try:
            ln, line = next(it)
        except StopIteration:
            raise MeshParseError("missing OFF counts", ln) from None
        rest = line.split()
    try:
        nv, nf = int(rest[0]), int(rest[1])
    except (ValueError, IndexError):
        raise MeshParseError("bad OFF counts", ln) from None
    verts, faces, where = [], [], []
    for _ in range(nv):
        try:
            ln, line = next(it)
        except StopIteration:
            raise MeshParseError(f"expected {nv} vertices, file ended", ln) from None
        try:
            verts.append([float(t) for t in line.split()[:3]])
        except ValueError as e:
            raise MeshParseError(f"bad vertex ({e})", ln) from None
        if len(verts[-1]) != 3:
            raise MeshParseError("vertex needs 3 coordinates", ln)
    for _ in range(nf):
        try:
            ln, line = next(it)
        except StopIteration:
            raise MeshParseError(f"expected {nf} faces, file ended", ln) from None
        try:
            tok = [int(t) for t in line.split()]
        except ValueError:
            raise MeshParseError("bad face row", ln) from None
        k = tok[0]
        if len(tok) < k + 1 or k < 3:
            raise MeshParseError("face row shorter than its vertex count", ln)
        faces.extend(_fan(tok[1:k + 1]))
        where.extend([ln] * (k - 2))
    return verts, faces, {}, where


def _parse_ply(text):
    lines = text.splitlines()
    if not lines or lines[0].strip() != "ply":
        raise MeshParseError("missing ply magic", 1)
    elements = []  # [name, count, [(prop, kind)]]
    ln = 1
    fmt_ok = False
    while True:
        if ln >= len(lines):
            raise MeshParseError("unterminated PLY header", ln)
        tok = lines[ln].split()
        ln += 1
        if not tok or tok[0] in ("comment", "obj_info"):
            continue
        if tok[0] == "format":
            if tok[1] != "ascii":
                raise MeshParseError(f"only ascii PLY supported, got {tok[1]}", ln)
            fmt_ok = True
        elif tok[0] == "element":
            elements.append([tok[1], int(tok[2]), []])
        elif tok[0] == "property":
            if not elements:
                raise MeshParseError("property before element", ln)
            if tok[1] == "list":
                elements[-1][2].append((tok[4], "list"))
            else:
                elements[-1][2].append((tok[2], "scalar"))
        elif tok[0] == "end_header":
            break
        else:
            raise MeshParseError(f"unknown header record {tok[0]!r}", ln)
    if not fmt_ok:
        raise MeshParseError("missing format line", ln)
    verts, faces, attrs, where = [], [], {}, []
    for name, count, props in elements:
        rows = []
        for _ in range(count):
            while ln < len(lines) and not lines[ln].strip():
                ln += 1
            if ln >= len(lines):
                raise MeshParseError(f"element {name}: file ended early", ln)
            rows.append((ln + 1, lines[ln].split()))
            ln += 1
        if name == "vertex":
            names = [p for p, _ in props]
            for want in "xyz":
                if want not in names:
                    raise MeshParseError(f"vertex element lacks {want!r}")
            cols = {p: [] for p in names}
            for lnum, tok in rows:
                if len(tok) != len(names):
                    raise MeshParseError("vertex row length mismatch", lnum)
                try:
                    for p, t in zip(names, tok):
                        cols[p].append(float(t))
                except ValueError as e:
                    raise MeshParseError(f"bad vertex value ({e})", lnum) from None
            verts = np.column_stack([cols["x"], cols["y"], cols["z"]]).tolist() if rows else []
            for p in names:
                if p not in "xyz":
                    attrs[p] = np.asarray(cols[p])
        elif name == "face":
            for lnum, tok in rows:
                try:
                    k = int(tok[0])
                    idx = [int(t) for t in tok[1:k + 1]]
                except (ValueError, IndexError):
                    raise MeshParseError("bad face row", lnum) from None
                if len(idx) != k or k < 3:
                    raise MeshParseError("face row shorter than its vertex count", lnum)
                faces.extend(_fan(idx))
                where.extend([lnum] * (k - 2))
    return verts, faces, attrs, where


_PARSERS = {"obj": _parse_obj, "off": _parse_off, "ply": _parse_ply}


def load_mesh(source, fmt: str, **kwargs) -> TriMesh:
    """Parse ``source`` (bytes, str or file-like) in format ``fmt``."""
    fmt = fmt.lower()
    if fmt not in _PARSERS:
        raise ValueError(f"unknown mesh format {fmt!r}; expected one of {FORMATS}")
    verts, faces, attrs, where = _PARSERS[fmt](_as_text(source))
    v = np.asarray(verts, dtype=float).reshape(-1, 3)
    f = np.asarray(faces, dtype=np.int64).reshape(-1, 3)
    bad = np.nonzero(((f < 0) | (f >= len(v))).any(axis=1))[0]
    if len(bad):
        raise MeshParseError(f"face index out of range (file has {len(v)} vertices)", where[bad[0]])
    return TriMesh(v, f, attrs, **kwargs)


def _num(x) -> str:
    return "%.17g" % x


def save_mesh(mesh: TriMesh, fmt: str) -> str:
    fmt = fmt.lower()
    out = io.StringIO()
    v, f = mesh.vertices, mesh.faces
    if fmt == "obj":
        for p in v:
            out.write(f"v {_num(p[0])} {_num(p[1])} {_num(p[2])}\n")
        for t in f + 1:
            out.write(f"f {t[0]} {t[1]} {t[2]}\n")
    elif fmt == "off":
        out.write(f"OFF\n{len(v)} {len(f)} 0\n")
        for p in v:
            out.write(f"{_num(p[0])} {_num(p[1])} {_num(p[2])}\n")
        for t in f:
            out.write(f"3 {t[0]} {t[1]} {t[2]}\n")
    elif fmt == "ply":
        scal = {k: a for k, a in mesh.attributes.items() if np.ndim(a) == 1}
        out.write("ply\nformat ascii 1.0\n")
        out.write(f"element vertex {len(v)}\n")
        out.write("property double x\nproperty double y\nproperty double z\n")
        for k in scal:
            out.write(f"property double {k}\n")
        out.write(f"element face {len(f)}\nproperty list uchar int vertex_indices\nend_header\n")
        extra = np.column_stack(list(scal.values())) if scal else np.zeros((len(v), 0))
        for p, e in zip(v, extra):
            out.write(" ".join(_num(x) for x in (*p, *e)) + "\n")
        for t in f:
            out.write(f"3 {t[0]} {t[1]} {t[2]}\n")
    else:
        raise ValueError(f"unknown mesh format {fmt!r}; expected one of {FORMATS}")
    return out.getvalue()


def format_from_path(path) -> str:
    ext = os.path.splitext(str(path))[1].lower().lstrip(".")
    if ext not in FORMATS:
        raise ValueError(f"cannot infer mesh format from extension {ext!r}")
    return ext


def read_mesh(path, fmt: str | None = None, **kwargs) -> TriMesh:
    with open(path, "rb") as fh:
        return load_mesh(fh.read(), fmt or format_from_path(path), **kwargs)


def write_mesh(path, mesh: TriMesh, fmt: str | None = None) -> None:
    text = save_mesh(mesh, fmt or format_from_path(path))
    with open(path, "w") as fh:
        fh.write(text)
