"""Centroid face splitting, either everywhere or where face curvature exceeds a threshold."""
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DegenerateFaceError
from .io import write_csv
from .mesh import AREA_EPS, Mesh, face_cross, face_curvatures


@dataclass(frozen=True)
class SplitConfig:
    alpha_degrees: float = 70.0

    def __post_init__(self):
        if not 0.0 < self.alpha_degrees < 180.0:
            raise ConfigError(f"alpha_degrees must lie in (0, 180), got {self.alpha_degrees}")


@dataclass
class SplitReport:
    split_face_indices: np.ndarray
    vertices_before: int
    vertices_after: int
    faces_before: int
    faces_after: int
    curvature: np.ndarray = field(repr=False)

    @property
    def n_split(self):
        return len(self.split_face_indices)

    @property
    def split_mask(self):
        mask = np.zeros(self.faces_before, dtype=bool)
        mask[self.split_face_indices] = True
        return mask

    def mean_curvature(self, split=True):
        """Mean decision-time curvature of split (or unsplit) faces, NaN if none."""
        sel = self.split_mask if split else ~self.split_mask
        vals = self.curvature[sel]
        vals = vals[np.isfinite(vals)]
        return float(vals.mean()) if vals.size else float("nan")

    def rows(self):
        mask = self.split_mask
        return [(i, float(c), int(s)) for i, (c, s) in enumerate(zip(self.curvature, mask))]

    def to_csv(self, path):
        write_csv(path, ["face_idx", "curvature", "split"], self.rows())


def split_faces(mesh, face_indices):
    """Replace each listed face by three faces around a new centroid vertex.

    Unlisted faces keep their index; the three children of a split face take
    its slot followed by two slots appended at the end, so earlier face
    indices stay meaningful. New vertices are appended in face-index order.
    """
    idx = np.unique(np.asarray(face_indices, dtype=np.int64))
    v, f = mesh.vertices, mesh.faces
    if idx.size == 0:
        return Mesh(v, f)
    tri = f[idx]
    new_ids = len(v) + np.arange(len(idx))
    new_v = np.vstack([v, v[tri].mean(axis=1)])
    a, b, c = tri.T
    faces = f.copy()
    faces[idx] = np.stack([a, b, new_ids], axis=1)
    faces = np.vstack([
        faces,
        np.stack([b, c, new_ids], axis=1),
        np.stack([c, a, new_ids], axis=1),
    ])
    return Mesh(new_v, faces)


def split_adaptive(mesh, config=SplitConfig()):
    """Split every face whose curvature is above ``config.alpha_degrees``.

    Curvatures are evaluated once on the input mesh, so the result does not
    depend on the order in which faces are visited. Faces without
    edge-neighbors have no defined curvature and are never split.
    """
    cross = face_cross(mesh)
    bad = np.flatnonzero(np.linalg.norm(cross, axis=1) < AREA_EPS)
    if bad.size:
        raise DegenerateFaceError(int(bad[0]))
    curv = face_curvatures(mesh)
    with np.errstate(invalid="ignore"):
        chosen = np.flatnonzero(curv > config.alpha_degrees)
    out = split_faces(mesh, chosen)
    return out, SplitReport(chosen, mesh.n_vertices, out.n_vertices,
                            mesh.n_faces, out.n_faces, curv)


def split_uniform(mesh):
    """Split all faces: V' = V + F, F' = 3F."""
    try:
        curv = face_curvatures(mesh)
    except DegenerateFaceError:
        curv = np.full(mesh.n_faces, np.nan)
    chosen = np.arange(mesh.n_faces)
    out = split_faces(mesh, chosen)
    return out, SplitReport(chosen, mesh.n_vertices, out.n_vertices,
                            mesh.n_faces, out.n_faces, curv)
