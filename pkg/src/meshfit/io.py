"""Wavefront OBJ reading/writing (``v`` and ``f`` records only) and CSV helpers."""
import csv

import numpy as np

from .errors import ParseError, UnsupportedFormatError
from .mesh import Mesh


def _face_index(token, n_vertices, lineno):
    head = token.split("/", 1)[0]
    try:
        idx = int(head)
    except ValueError:
        raise ParseError(f"bad face index {token!r}", lineno) from None
    # negative indices are relative to the vertices read so far
    if idx < 0:
        idx = n_vertices + idx + 1
    if idx < 1:
        raise ParseError(f"face index {token!r} out of range", lineno)
    return idx - 1


def parse_obj(lines):
    vertices, faces = [], []
    for lineno, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tag, *rest = line.split()
        if tag == "v":
            if len(rest) < 3:
                raise ParseError("vertex record needs 3 coordinates", lineno)
            try:
                vertices.append([float(x) for x in rest[:3]])
            except ValueError:
                raise ParseError(f"bad vertex coordinate in {line!r}", lineno) from None
        elif tag == "f":
            if len(rest) != 3:
                raise UnsupportedFormatError(
                    f"line {lineno}: only triangular faces are supported, got {len(rest)} indices")
            faces.append([_face_index(t, len(vertices), lineno) for t in rest])
        # vn, vt, g, o, s, usemtl, mtllib ... are ignored
    faces = np.array(faces, dtype=np.int64).reshape(-1, 3)
    if faces.size and faces.max() >= len(vertices):
        raise ParseError("face references a vertex that was never defined")
    return Mesh(np.array(vertices, dtype=np.float64).reshape(-1, 3), faces)


def load_obj(path):
    with open(path) as fh:
        return parse_obj(fh)


def save_obj(mesh, path):
    with open(path, "w") as fh:
        for x, y, z in mesh.vertices:
            fh.write(f"v {x:.9g} {y:.9g} {z:.9g}\n")
        for a, b, c in mesh.faces + 1:
            fh.write(f"f {a} {b} {c}\n")


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def save_points_xyz(points, path):
    np.savetxt(path, np.asarray(points), fmt="%.9g")
