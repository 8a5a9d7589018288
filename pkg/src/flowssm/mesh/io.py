"""OBJ and PLY mesh readers/writers.

OBJ is ASCII ``v``/``f`` records with 1-based indices. PLY supports the
``ascii`` and ``binary_little_endian`` variants; vertices are written as
float64 so a save/load round trip is exact.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from ..errors import IoError, ParseError
from .core import TriMesh

_FORMATS = ("obj", "ply")


def _format_from_path(path, fmt: str | None) -> str:
    if fmt is not None:
        fmt = fmt.lower()
        if fmt not in _FORMATS:
            raise ParseError(f"unsupported mesh format {fmt!r}")
        return fmt
    suffix = Path(path).suffix.lower().lstrip(".")
    if suffix in _FORMATS:
        return suffix
    raise ParseError(f"cannot infer mesh format from {path!r}")


def load_mesh(path, fmt: str | None = None) -> TriMesh:
    """Load an OBJ or PLY file into a TriMesh (vertex order preserved)."""
    path = Path(path)
    fmt = _format_from_path(path, fmt)
    if not path.is_file():
        raise IoError(f"mesh file not found: {path}")
    if fmt == "obj":
        return _load_obj(path)
    return _load_ply(path)


def save_mesh(mesh: TriMesh, path, fmt: str | None = None, binary: bool = True) -> None:
    """Write a TriMesh to OBJ or PLY; the mesh is validated before writing."""
    path = Path(path)
    fmt = _format_from_path(path, fmt)
    mesh.check()
    try:
        if fmt == "obj":
            _save_obj(mesh, path)
        else:
            _save_ply(mesh, path, binary=binary)
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def _load_obj(path: Path) -> TriMesh:
    vertices: list[tuple[float, float, float]] = []
    faces: list[tuple[int, int, int]] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            tag = parts[0]
            if tag == "v":
                if len(parts) < 4:
                    raise ParseError(f"{path}:{lineno}: vertex needs 3 coordinates")
                try:
                    vertices.append((float(parts[1]), float(parts[2]), float(parts[3])))
                except ValueError as exc:
                    raise ParseError(f"{path}:{lineno}: bad vertex: {exc}") from exc
            elif tag == "f":
                idx = []
                for token in parts[1:]:
                    head = token.split("/")[0]
                    try:
                        i = int(head)
                    except ValueError as exc:
                        raise ParseError(f"{path}:{lineno}: bad face index {token!r}") from exc
                    if i == 0:
                        raise ParseError(f"{path}:{lineno}: OBJ indices are 1-based")
                    idx.append(i - 1 if i > 0 else len(vertices) + i)
                if len(idx) < 3:
                    raise ParseError(f"{path}:{lineno}: face needs at least 3 vertices")
                # fan-triangulate polygons
                for k in range(1, len(idx) - 1):
                    faces.append((idx[0], idx[k], idx[k + 1]))
            # ignore vn/vt/usemtl and friends
    if not vertices:
        raise ParseError(f"{path}: no vertices found")
    return TriMesh(np.array(vertices, dtype=np.float64), np.array(faces, dtype=np.int64).reshape(-1, 3))


def _save_obj(mesh: TriMesh, path: Path) -> None:
    lines = []
    for x, y, z in mesh.vertices:
        # repr of python floats is the shortest exact round-trip form
        lines.append(f"v {float(x)!r} {float(y)!r} {float(z)!r}")
    for a, b, c in mesh.faces:
        lines.append(f"f {a + 1} {b + 1} {c + 1}")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


_PLY_DTYPES = {
    "float": ("<f4", 4),
    "float32": ("<f4", 4),
    "double": ("<f8", 8),
    "float64": ("<f8", 8),
    "uchar": ("<u1", 1),
    "uint8": ("<u1", 1),
    "int": ("<i4", 4),
    "int32": ("<i4", 4),
    "uint": ("<u4", 4),
    "uint32": ("<u4", 4),
}


def _save_ply(mesh: TriMesh, path: Path, binary: bool = True) -> None:
    n_v, n_f = mesh.n_vertices, mesh.n_faces
    fmt = "binary_little_endian" if binary else "ascii"
    header = (
        "ply\n"
        f"format {fmt} 1.0\n"
        f"element vertex {n_v}\n"
        "property double x\nproperty double y\nproperty double z\n"
        f"element face {n_f}\n"
        "property list uchar int vertex_indices\n"
        "end_header\n"
    )
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        if binary:
            fh.write(mesh.vertices.astype("<f8").tobytes())
            face_rec = np.empty(n_f, dtype=[("n", "<u1"), ("idx", "<i4", (3,))])
            face_rec["n"] = 3
            face_rec["idx"] = mesh.faces.astype("<i4")
            fh.write(face_rec.tobytes())
        else:
            rows = [f"{float(x)!r} {float(y)!r} {float(z)!r}" for x, y, z in mesh.vertices]
            rows += [f"3 {a} {b} {c}" for a, b, c in mesh.faces]
            fh.write(("\n".join(rows) + "\n").encode("ascii"))


def _load_ply(path: Path) -> TriMesh:
    with open(path, "rb") as fh:
        data = fh.read()
    if not data.startswith(b"ply"):
        raise ParseError(f"{path}: missing ply magic")
    header_end = data.find(b"end_header")
    if header_end < 0:
        raise ParseError(f"{path}: missing end_header")
    header = data[:header_end].decode("ascii", errors="replace").splitlines()
    body = data[data.index(b"\n", header_end) + 1 :]

    fmt = None
    elements: list[tuple[str, int, list]] = []  # (name, count, [props])
    for line in header[1:]:
        parts = line.split()
        if not parts:
            continue
        if parts[0] == "format":
            fmt = parts[1]
        elif parts[0] == "element":
            elements.append((parts[1], int(parts[2]), []))
        elif parts[0] == "property":
            if not elements:
                raise ParseError(f"{path}: property before element")
            elements[-1][2].append(parts[1:])
    if fmt not in ("ascii", "binary_little_endian"):
        raise ParseError(f"{path}: unsupported ply format {fmt!r}")

    vertices = None
    faces: list[tuple[int, int, int]] = []
    if fmt == "ascii":
        tokens = body.decode("ascii").split("\n")
        tokens = [t for t in tokens if t.strip()]
        cursor = 0
        for name, count, props in elements:
            if name == "vertex":
                coords = []
                for i in range(count):
                    vals = tokens[cursor + i].split()
                    coords.append([float(v) for v in vals[:3]])
                vertices = np.array(coords, dtype=np.float64)
            elif name == "face":
                for i in range(count):
                    vals = [int(v) for v in tokens[cursor + i].split()]
                    n = vals[0]
                    idx = vals[1 : 1 + n]
                    for k in range(1, n - 1):
                        faces.append((idx[0], idx[k], idx[k + 1]))
            cursor += count
    else:
        offset = 0
        for name, count, props in elements:
            if name == "vertex":
                dtypes = []
                for p in props:
                    if p[0] == "list":
                        raise ParseError(f"{path}: list property on vertex unsupported")
                    if p[0] not in _PLY_DTYPES:
                        raise ParseError(f"{path}: unsupported property type {p[0]!r}")
                    dtypes.append((p[1], _PLY_DTYPES[p[0]][0]))
                rec = np.frombuffer(body, dtype=np.dtype(dtypes), count=count, offset=offset)
                offset += rec.dtype.itemsize * count
                try:
                    vertices = np.stack(
                        [rec["x"], rec["y"], rec["z"]], axis=1
                    ).astype(np.float64)
                except KeyError as exc:
                    raise ParseError(f"{path}: vertex element missing x/y/z") from exc
            elif name == "face":
                if len(props) != 1 or props[0][0] != "list":
                    raise ParseError(f"{path}: face element must be a single list property")
                cnt_t, idx_t = props[0][1], props[0][2]
                cnt_dt, cnt_sz = _PLY_DTYPES[cnt_t]
                idx_dt, idx_sz = _PLY_DTYPES[idx_t]
                for _ in range(count):
                    (n,) = np.frombuffer(body, dtype=cnt_dt, count=1, offset=offset)
                    offset += cnt_sz
                    idx = np.frombuffer(body, dtype=idx_dt, count=int(n), offset=offset)
                    offset += idx_sz * int(n)
                    for k in range(1, int(n) - 1):
                        faces.append((int(idx[0]), int(idx[k]), int(idx[k + 1])))
            else:
                raise ParseError(f"{path}: unsupported element {name!r}")
    if vertices is None:
        raise ParseError(f"{path}: no vertex element")
    return TriMesh(vertices, np.array(faces, dtype=np.int64).reshape(-1, 3))
