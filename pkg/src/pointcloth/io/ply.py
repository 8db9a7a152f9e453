"""PLY reader/writer (ascii and binary little-endian).

Only what the pipeline needs is interpreted: vertex ``x y z``, an optional
integer ``group`` property, and triangle faces.  Other properties are parsed
and dropped.
"""
from __future__ import annotations

import os

import numpy as np

from ..mesh import TriMesh

_TYPES = {
    "char": "i1", "int8": "i1", "uchar": "u1", "uint8": "u1",
    "short": "i2", "int16": "i2", "ushort": "u2", "uint16": "u2",
    "int": "i4", "int32": "i4", "uint": "u4", "uint32": "u4",
    "float": "f4", "float32": "f4", "double": "f8", "float64": "f8",
}


class PlyError(ValueError):
    pass


class _Element:
    def __init__(self, name, count, line):
        self.name = name
        self.count = count
        self.line = line
        self.props: list[tuple] = []   # (name, dtype) or (name, count_dtype, item_dtype)

    @property
    def is_scalar(self):
        return all(len(p) == 2 for p in self.props)

    def scalar_dtype(self):
        return np.dtype([(p[0], "<" + p[1]) for p in self.props])


def _parse_header(fh):
    first = fh.readline()
    if first.rstrip(b"\r\n") != b"ply":
        raise PlyError("line 1: missing 'ply' magic")
    fmt = None
    elements: list[_Element] = []
    lineno = 1
    while True:
        raw = fh.readline()
        lineno += 1
        if not raw:
            raise PlyError(f"line {lineno}: header ended without end_header")
        try:
            line = raw.decode("ascii").strip()
        except UnicodeDecodeError:
            raise PlyError(f"line {lineno}: non-ascii header") from None
        if not line or line.startswith("comment") or line.startswith("obj_info"):
            continue
        tok = line.split()
        if tok[0] == "format":
            if len(tok) != 3:
                raise PlyError(f"line {lineno}: malformed format line")
            if tok[1] not in ("ascii", "binary_little_endian"):
                raise PlyError(f"line {lineno}: unsupported format {tok[1]!r}")
            fmt = tok[1]
        elif tok[0] == "element":
            if len(tok) != 3 or not tok[2].isdigit():
                raise PlyError(f"line {lineno}: malformed element declaration {line!r}")
            elements.append(_Element(tok[1], int(tok[2]), lineno))
        elif tok[0] == "property":
            if not elements:
                raise PlyError(f"line {lineno}: property before any element")
            if tok[1] == "list":
                if len(tok) != 5 or tok[2] not in _TYPES or tok[3] not in _TYPES:
                    raise PlyError(f"line {lineno}: unsupported list property {line!r}")
                elements[-1].props.append((tok[4], _TYPES[tok[2]], _TYPES[tok[3]]))
            else:
                if len(tok) != 3 or tok[1] not in _TYPES:
                    raise PlyError(f"line {lineno}: unsupported property type {line!r}")
                elements[-1].props.append((tok[2], _TYPES[tok[1]]))
        elif tok[0] == "end_header":
            break
        else:
            raise PlyError(f"line {lineno}: unknown header keyword {tok[0]!r}")
    if fmt is None:
        raise PlyError("header has no format line")
    return fmt, elements, lineno


def _read_binary(fh, elements, header_bytes):
    payload = fh.read()
    offset = 0
    out = {}
    for el in elements:
        if el.is_scalar:
            dt = el.scalar_dtype()
            need = dt.itemsize * el.count
            if len(payload) - offset < need:
                raise PlyError(
                    f"element '{el.name}': expected {need} bytes at offset {header_bytes + offset}, "
                    f"got {len(payload) - offset}")
            arr = np.frombuffer(payload, dt, el.count, offset)
            out[el.name] = {name: arr[name] for name in dt.names}
            offset += need
            continue
        # single-list elements of triangles take a fast fixed-stride path
        if len(el.props) == 1:
            name, cdt, idt = el.props[0]
            cdt, idt = np.dtype("<" + cdt), np.dtype("<" + idt)
            rec = np.dtype([("n", cdt), ("v", idt, (3,))])
            need = rec.itemsize * el.count
            if len(payload) - offset >= need:
                arr = np.frombuffer(payload, rec, el.count, offset)
                if np.all(arr["n"] == 3):
                    out[el.name] = {name: arr["v"].astype(np.int64)}
                    offset += need
                    continue
        rows = []
        for i in range(el.count):
            row = []
            for p in el.props:
                if len(p) == 2:
                    dt = np.dtype("<" + p[1])
                    if offset + dt.itemsize > len(payload):
                        raise PlyError(f"element '{el.name}' row {i}: truncated at offset "
                                       f"{header_bytes + offset}")
                    row.append(np.frombuffer(payload, dt, 1, offset)[0])
                    offset += dt.itemsize
                else:
                    cdt, idt = np.dtype("<" + p[1]), np.dtype("<" + p[2])
                    if offset + cdt.itemsize > len(payload):
                        raise PlyError(f"element '{el.name}' row {i}: truncated at offset "
                                       f"{header_bytes + offset}")
                    n = int(np.frombuffer(payload, cdt, 1, offset)[0])
                    offset += cdt.itemsize
                    if offset + n * idt.itemsize > len(payload):
                        raise PlyError(f"element '{el.name}' row {i}: list truncated at offset "
                                       f"{header_bytes + offset}: expected {n * idt.itemsize} bytes")
                    row.append(np.frombuffer(payload, idt, n, offset).copy())
                    offset += n * idt.itemsize
            rows.append(row)
        out[el.name] = _rows_to_columns(el, rows)
    if offset != len(payload):
        raise PlyError(f"{len(payload) - offset} trailing bytes after last element "
                       f"(offset {header_bytes + offset})")
    return out


def _rows_to_columns(el, rows):
    cols = {}
    for k, p in enumerate(el.props):
        vals = [r[k] for r in rows]
        if len(p) == 2:
            cols[p[0]] = np.array(vals, dtype=p[1])
        else:
            cols[p[0]] = vals
    return cols


def _read_ascii(fh, elements, lineno):
    lines = fh.read().decode("ascii", errors="replace").splitlines()
    pos = 0
    out = {}
    for el in elements:
        rows = []
        for i in range(el.count):
            while pos < len(lines) and not lines[pos].strip():
                pos += 1
            if pos >= len(lines):
                raise PlyError(f"element '{el.name}': expected {el.count} rows, file ends after {i}")
            tok = lines[pos].split()
            where = f"line {lineno + pos + 1}"
            pos += 1
            row, t = [], 0
            try:
                for p in el.props:
                    if len(p) == 2:
                        row.append(np.array(tok[t], dtype=np.float64).astype(p[1]) if p[1][0] == "f"
                                   else np.array(int(tok[t])).astype(p[1]))
                        t += 1
                    else:
                        n = int(tok[t])
                        row.append(np.array([int(v) for v in tok[t + 1:t + 1 + n]], dtype=p[2]))
                        if len(row[-1]) != n:
                            raise IndexError
                        t += 1 + n
            except (IndexError, ValueError):
                raise PlyError(f"{where}: cannot parse row {i} of element '{el.name}'") from None
            if t != len(tok):
                raise PlyError(f"{where}: {len(tok) - t} extra values in element '{el.name}'")
            rows.append(row)
        out[el.name] = _rows_to_columns(el, rows) if not el.is_scalar else \
            {p[0]: np.array([r[k] for r in rows], dtype=p[1]) for k, p in enumerate(el.props)}
    if any(line.strip() for line in lines[pos:]):
        raise PlyError(f"line {lineno + pos + 1}: data after last element")
    return out


def load_ply(path) -> TriMesh:
    """Read a PLY file into a :class:`TriMesh` (faces/groups may be None)."""
    with open(path, "rb") as fh:
        fmt, elements, lineno = _parse_header(fh)
        header_bytes = fh.tell()
        data = _read_binary(fh, elements, header_bytes) if fmt != "ascii" else \
            _read_ascii(fh, elements, lineno)
    if "vertex" not in data:
        raise PlyError("no vertex element")
    v = data["vertex"]
    for axis in "xyz":
        if axis not in v:
            raise PlyError(f"vertex element lacks property {axis!r}")
    verts = np.stack([np.asarray(v[a], dtype=np.float64) for a in "xyz"], axis=1)
    groups = np.asarray(v["group"], dtype=np.int64) if "group" in v else None
    faces = None
    if "face" in data:
        f = data["face"]
        key = "vertex_indices" if "vertex_indices" in f else "vertex_index" if "vertex_index" in f else None
        if key is None:
            raise PlyError("face element lacks vertex_indices")
        lists = f[key]
        if isinstance(lists, np.ndarray):
            faces = lists.reshape(-1, 3)
        else:
            if any(len(x) != 3 for x in lists):
                raise PlyError("only triangular faces are supported")
            faces = np.array(lists, dtype=np.int64).reshape(-1, 3)
        if faces.size and (faces.min() < 0 or faces.max() >= len(verts)):
            raise PlyError("face index out of range")
    return TriMesh(verts, faces, groups)


def save_ply(path, data, binary: bool = True) -> None:
    """Write a point cloud (array) or :class:`TriMesh`; output bytes are deterministic."""
    mesh = data if isinstance(data, TriMesh) else TriMesh(np.asarray(data).reshape(-1, 3))
    nv = mesh.n_vertices
    head = ["ply", f"format {'binary_little_endian' if binary else 'ascii'} 1.0",
            f"element vertex {nv}", "property float x", "property float y", "property float z"]
    if mesh.groups is not None:
        head.append("property int group")
    if mesh.faces is not None:
        head += [f"element face {mesh.n_faces}", "property list uchar int vertex_indices"]
    head.append("end_header")
    header = ("\n".join(head) + "\n").encode("ascii")

    vdt = [("x", "<f4"), ("y", "<f4"), ("z", "<f4")]
    if mesh.groups is not None:
        vdt.append(("group", "<i4"))
    verts = np.zeros(nv, dtype=vdt)
    for k, a in enumerate("xyz"):
        verts[a] = mesh.vertices[:, k]
    if mesh.groups is not None:
        verts["group"] = mesh.groups
    try:
        with open(path, "wb") as fh:
            fh.write(header)
            if binary:
                fh.write(verts.tobytes())
                if mesh.faces is not None:
                    fr = np.zeros(mesh.n_faces, dtype=[("n", "u1"), ("v", "<i4", (3,))])
                    fr["n"] = 3
                    fr["v"] = mesh.faces
                    fh.write(fr.tobytes())
            else:
                lines = []
                for row in verts:
                    vals = [repr(float(row[a])) for a in "xyz"]
                    if mesh.groups is not None:
                        vals.append(str(int(row["group"])))
                    lines.append(" ".join(vals))
                if mesh.faces is not None:
                    lines += [f"3 {a} {b} {c}" for a, b, c in mesh.faces]
                fh.write(("\n".join(lines) + ("\n" if lines else "")).encode("ascii"))
    except OSError as e:
        raise OSError(f"cannot write PLY to {os.fspath(path)!r}: {e.strerror}") from e
