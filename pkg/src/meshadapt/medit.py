"""ASCII Medit ``.mesh`` and ``.sol`` files (2D).

Vertex and triangle indices are 1-based on disk.  Floats are written with
17 significant digits so a read-write cycle is byte-stable.
"""
from __future__ import annotations

import warnings

import numpy as np

from .mesh import Mesh
from .metric import is_spd

SOL_SCALAR = 1
SOL_TENSOR = 3
_KNOWN_MESH = {"MeshVersionFormatted", "Dimension", "Vertices", "Edges", "Triangles", "End"}


class MeditError(ValueError):
    """Malformed file; ``line`` is the 1-based line number when known."""

    def __init__(self, message, path=None, line=None):
        where = f"{path}:{line}: " if line is not None else (f"{path}: " if path else "")
        super().__init__(where + message)
        self.path = path
        self.line = line


def _fmt(v: float) -> str:
    return f"{v:.17g}"


class _Tokens:
    """Whitespace tokens with their line numbers; ``#`` starts a comment."""

    def __init__(self, text, path):
        self.path = path
        self.items = []
        for no, raw in enumerate(text.splitlines(), 1):
            body = raw.split("#", 1)[0]
            self.items.extend((tok, no) for tok in body.split())
        self.pos = 0
        self.last_line = len(text.splitlines())

    def done(self):
        return self.pos >= len(self.items)

    def next(self, what):
        if self.done():
            raise MeditError(f"unexpected end of file while reading {what}", self.path, self.last_line)
        tok = self.items[self.pos]
        self.pos += 1
        return tok

    def peek(self):
        return None if self.done() else self.items[self.pos][0]

    def int(self, what):
        tok, no = self.next(what)
        try:
            return int(tok), no
        except ValueError:
            raise MeditError(f"expected integer for {what}, got {tok!r}", self.path, no) from None

    def float(self, what):
        tok, no = self.next(what)
        try:
            return float(tok), no
        except ValueError:
            raise MeditError(f"expected number for {what}, got {tok!r}", self.path, no) from None

    def record(self, k, what, kind):
        conv = self.int if kind is int else self.float
        return [conv(what)[0] for _ in range(k)]


def _read_text(path):
    with open(path, "r", encoding="ascii") as fh:
        return fh.read()


def _header(tok, key_seen):
    """Parse ``MeshVersionFormatted`` and ``Dimension`` entries."""
    word, no = tok.next("keyword")
    if word == "MeshVersionFormatted":
        tok.int("MeshVersionFormatted")
        return True
    if word == "Dimension":
        dim, no = tok.int("Dimension")
        if dim != 2:
            raise MeditError(f"only 2D files are supported, found Dimension {dim}", tok.path, no)
        key_seen.add("Dimension")
        return True
    tok.pos -= 1
    return False


def read_mesh(path) -> Mesh:
    tok = _Tokens(_read_text(path), str(path))
    seen = set()
    pts = tags = tri = ttags = edges = etags = None
    while not tok.done():
        if _header(tok, seen):
            continue
        word, no = tok.next("keyword")
        if word == "End":
            break
        if word not in _KNOWN_MESH and not word[0].isalpha():
            raise MeditError(f"unexpected token {word!r}", tok.path, no)
        if word in ("Vertices", "Triangles", "Edges"):
            if "Dimension" not in seen:
                raise MeditError(f"{word} before Dimension", tok.path, no)
            count, cno = tok.int(f"{word} count")
            if count < 0:
                raise MeditError(f"negative {word} count", tok.path, cno)
            width = {"Vertices": 3, "Triangles": 4, "Edges": 3}[word]
            kind = float if word == "Vertices" else int
            rows = [tok.record(width, word, kind) for _ in range(count)]
            arr = np.array(rows, float).reshape(count, width)
            if word == "Vertices":
                pts, tags = arr[:, :2], arr[:, 2].astype(np.int64)
            elif word == "Triangles":
                tri, ttags = arr[:, :3].astype(np.int64) - 1, arr[:, 3].astype(np.int64)
            else:
                edges, etags = arr[:, :2].astype(np.int64) - 1, arr[:, 2].astype(np.int64)
            continue
        # section widths are unknown, so only bare keywords can be skipped
        warnings.warn(f"{tok.path}:{no}: skipping unknown keyword {word!r}", RuntimeWarning, stacklevel=2)
    if pts is None or tri is None:
        raise MeditError("mesh file needs Vertices and Triangles sections", str(path))
    n = len(pts)
    for name, idx in (("Triangles", tri), ("Edges", edges)):
        if idx is not None and idx.size and (idx.min() < 0 or idx.max() >= n):
            raise MeditError(f"{name} reference a vertex outside 1..{n}", str(path))
    return Mesh(pts, tri, vertex_tags=tags, triangle_tags=ttags, boundary_edges=edges, edge_tags=etags)


def write_mesh(mesh: Mesh, path) -> None:
    out = ["MeshVersionFormatted 2", "", "Dimension 2", "", "Vertices", str(mesh.n_vertices)]
    for (x, y), t in zip(mesh.points, mesh.vertex_tags):
        out.append(f"{_fmt(x)} {_fmt(y)} {int(t)}")
    be = mesh.boundary_edges
    if len(be):
        out += ["", "Edges", str(len(be))]
        out += [f"{a + 1} {b + 1} {int(t)}" for (a, b), t in zip(be, mesh.edge_tags)]
    out += ["", "Triangles", str(mesh.n_triangles)]
    out += [f"{a + 1} {b + 1} {c + 1} {int(t)}" for (a, b, c), t in zip(mesh.triangles, mesh.triangle_tags)]
    out += ["", "End", ""]
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write("\n".join(out))


def read_sol(path, n_vertices=None, metric=True):
    """Read a ``.sol`` file.

    Returns a single array for one field and a list for several.  Tensor
    fields are checked for positive-definiteness when ``metric`` is set.
    """
    tok = _Tokens(_read_text(path), str(path))
    seen = set()
    result = None
    while not tok.done():
        if _header(tok, seen):
            continue
        word, no = tok.next("keyword")
        if word == "End":
            break
        if word != "SolAtVertices":
            warnings.warn(f"{tok.path}:{no}: skipping unknown keyword {word!r}", RuntimeWarning, stacklevel=2)
            continue
        if "Dimension" not in seen:
            raise MeditError("SolAtVertices before Dimension", tok.path, no)
        count, cno = tok.int("SolAtVertices count")
        if n_vertices is not None and count != n_vertices:
            raise MeditError(f"solution has {count} records but the mesh has {n_vertices} vertices",
                             tok.path, cno)
        nfields, fno = tok.int("field count")
        codes = []
        for _ in range(nfields):
            code, tno = tok.int("field type")
            if code not in (SOL_SCALAR, SOL_TENSOR):
                raise MeditError(f"unsupported field type code {code}", tok.path, tno)
            codes.append(code)
        widths = [1 if c == SOL_SCALAR else 3 for c in codes]
        first_line = tok.items[tok.pos][1] if not tok.done() else tok.last_line
        flat = np.array([tok.record(sum(widths), "SolAtVertices", float) for _ in range(count)], float)
        flat = flat.reshape(count, sum(widths))
        result, col = [], 0
        for code, w in zip(codes, widths):
            block = flat[:, col:col + w]
            col += w
            if code == SOL_SCALAR:
                result.append(block[:, 0].copy())
                continue
            if metric:
                bad = np.flatnonzero(~is_spd(block))
                if bad.size:
                    raise MeditError(f"tensor record {bad[0] + 1} is not positive definite",
                                     tok.path, first_line + int(bad[0]))
            result.append(block.copy())
    if result is None:
        raise MeditError("no SolAtVertices section", str(path))
    return result[0] if len(result) == 1 else result


def write_sol(values, path) -> None:
    """Write one field (array) or several (list of arrays)."""
    fields_ = [np.asarray(v, float) for v in (values if isinstance(values, (list, tuple)) else [values])]
    n = len(fields_[0])
    for f in fields_:
        if len(f) != n or f.ndim not in (1, 2) or (f.ndim == 2 and f.shape[1] != 3):
            raise ValueError("fields must be (n,) scalars or (n, 3) tensors of equal length")
    codes = [SOL_SCALAR if f.ndim == 1 else SOL_TENSOR for f in fields_]
    cols = np.column_stack([f.reshape(n, -1) for f in fields_])
    out = ["MeshVersionFormatted 2", "", "Dimension 2", "", "SolAtVertices", str(n),
           f"{len(codes)} " + " ".join(map(str, codes))]
    out += [" ".join(_fmt(v) for v in row) for row in cols]
    out += ["", "End", ""]
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write("\n".join(out))
