"""Exact squared distance from points to triangles.

A triangle is written T(s, t) = B + s*E0 + t*E1 over the region
s >= 0, t >= 0, s + t <= 1, and the squared distance to P is the quadratic

    Q(s, t) = a s^2 + 2 b s t + c t^2 + 2 d s + 2 e t + f

with a = E0.E0, b = E0.E1, c = E1.E1, d = E0.(B - P), e = E1.(B - P),
f = (B - P).(B - P). Q is convex, so its minimum over the region is the
stationary point when that lies inside, otherwise the smallest of the three
edge minima, each a clamped one-variable quadratic.
"""
from dataclasses import dataclass

import numpy as np
from numba import guvectorize, njit
from scipy.spatial import cKDTree

from .errors import DegenerateFaceError, ZeroAreaError

# ac - b^2 at or below this marks a triangle as degenerate
DET_EPS = 1e-14

# below this face count the (points x faces) table is evaluated in full
BRUTE_FORCE_FACES = 64


def _dot(x, y):
    return np.einsum("...i,...i->...", x, y)


@njit(cache=True, inline="always")
def _closest(P, B, E0, E1):
    """(sq, s, t) for one point and one triangle; see :func:`closest_params`."""
    D0, D1, D2 = B[0] - P[0], B[1] - P[1], B[2] - P[2]
    a = E0[0] * E0[0] + E0[1] * E0[1] + E0[2] * E0[2]
    b = E0[0] * E1[0] + E0[1] * E1[1] + E0[2] * E1[2]
    c = E1[0] * E1[0] + E1[1] * E1[1] + E1[2] * E1[2]
    d = E0[0] * D0 + E0[1] * D1 + E0[2] * D2
    e = E1[0] * D0 + E1[1] * D1 + E1[2] * D2
    det = a * c - b * b
    s = -1.0
    t = -1.0
    if det > DET_EPS:
        s = (b * e - c * d) / det
        t = (b * d - a * e) / det
    if not (s >= 0.0 and t >= 0.0 and s + t <= 1.0):
        # edge t = 0
        s = min(max(-d / a, 0.0), 1.0) if a > 0.0 else 0.0
        t = 0.0
        x0, x1, x2 = D0 + s * E0[0], D1 + s * E0[1], D2 + s * E0[2]
        best = x0 * x0 + x1 * x1 + x2 * x2
        # edge s = 0
        t1 = min(max(-e / c, 0.0), 1.0) if c > 0.0 else 0.0
        x0, x1, x2 = D0 + t1 * E1[0], D1 + t1 * E1[1], D2 + t1 * E1[2]
        q = x0 * x0 + x1 * x1 + x2 * x2
        if q < best:
            best, s, t = q, 0.0, t1
        # edge s + t = 1
        den = a - 2.0 * b + c
        s2 = min(max((c + e - b - d) / den, 0.0), 1.0) if den > 0.0 else 0.0
        t2 = 1.0 - s2
        x0 = D0 + s2 * E0[0] + t2 * E1[0]
        x1 = D1 + s2 * E0[1] + t2 * E1[1]
        x2 = D2 + s2 * E0[2] + t2 * E1[2]
        q = x0 * x0 + x1 * x1 + x2 * x2
        if q < best:
            s, t = s2, t2
    x0 = D0 + s * E0[0] + t * E1[0]
    x1 = D1 + s * E0[1] + t * E1[1]
    x2 = D2 + s * E0[2] + t * E1[2]
    return x0 * x0 + x1 * x1 + x2 * x2, s, t


@guvectorize(["void(f8[:], f8[:], f8[:], f8[:], f8[:], f8[:], f8[:])"],
             "(k),(k),(k),(k)->(),(),()", nopython=True, cache=True)
def closest_params(P, B, E0, E1, sq, s_out, t_out):
    """Minimizer of Q over the triangle, broadcasting like a ufunc.

    Inputs broadcast against each other along leading axes; the last axis
    has length 3. Degenerate triangles (ac - b^2 <= DET_EPS) never take the
    interior branch, which leaves the minimum over their three edges, i.e.
    the point-segment distance fallback.

    Returns
    -------
    sq : squared distance
    s, t : minimizing parameters
    """
    sq[0], s_out[0], t_out[0] = _closest(P, B, E0, E1)


@dataclass(frozen=True)
class TriangleParam:
    B: np.ndarray
    E0: np.ndarray
    E1: np.ndarray

    @classmethod
    def from_vertices(cls, v1, v2, v3):
        v1 = np.asarray(v1, dtype=np.float64)
        return cls(v1, np.asarray(v2, dtype=np.float64) - v1, np.asarray(v3, dtype=np.float64) - v1)

    @property
    def a(self):
        return float(self.E0 @ self.E0)

    @property
    def b(self):
        return float(self.E0 @ self.E1)

    @property
    def c(self):
        return float(self.E1 @ self.E1)

    @property
    def det(self):
        return self.a * self.c - self.b ** 2

    def point(self, s, t):
        return self.B + s * self.E0 + t * self.E1


def point_triangle_sq_dist(P, tri):
    """Squared distance from ``P`` to triangle ``tri`` and the minimizing (s, t)."""
    if not tri.det > DET_EPS:
        raise DegenerateFaceError(None, "degenerate triangle (ac - b^2 <= 1e-14)")
    sq, s, t = closest_params(np.asarray(P, dtype=np.float64), tri.B, tri.E0, tri.E1)
    return float(sq), float(s), float(t)


def _triangle_frames(mesh):
    tri = mesh.triangles
    return tri[:, 0], tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0]


def _valid_faces(mesh):
    B, E0, E1 = _triangle_frames(mesh)
    det = _dot(E0, E0) * _dot(E1, E1) - _dot(E0, E1) ** 2
    return det > DET_EPS


def _brute(points, B, E0, E1):
    sq, s, t = closest_params(points[:, None, :], B[None], E0[None], E1[None])
    j = np.argmin(sq, axis=1)
    r = np.arange(len(points))
    return sq[r, j], j, s[r, j], t[r, j]


@njit(cache=True)
def _nearest_scan(points, B, E0, E1, centroid, radius, start):
    n, m = points.shape[0], B.shape[0]
    sq = np.empty(n)
    face = np.empty(n, dtype=np.int64)
    s_out = np.empty(n)
    t_out = np.empty(n)
    for i in range(n):
        p = points[i]
        j0 = start[i]
        best, bs, bt = _closest(p, B[j0], E0[j0], E1[j0])
        arg = j0
        for j in range(m):
            d0 = p[0] - centroid[j, 0]
            d1 = p[1] - centroid[j, 1]
            d2 = p[2] - centroid[j, 2]
            lb = np.sqrt(d0 * d0 + d1 * d1 + d2 * d2) - radius[j] - 1e-7
            if lb > 0.0 and lb * lb > best * (1.0 + 1e-9) + 1e-15:
                continue
            q, u, v = _closest(p, B[j], E0[j], E1[j])
            if q < best or (q == best and j < arg):
                best, bs, bt, arg = q, u, v, j
        sq[i], face[i], s_out[i], t_out[i] = best, arg, bs, bt
    return sq, face, s_out, t_out


def _pruned(points, B, E0, E1):
    """Exact nearest face using bounding-sphere lower bounds to skip faces.

    The face with the nearest centroid gives an upper bound U on each point's
    distance; faces whose bounding sphere lies farther than sqrt(U) cannot
    win and are skipped. Ties resolve to the lowest face index.
    """
    centroid = B + (E0 + E1) / 3.0
    corners = np.stack([B, B + E0, B + E1], axis=1)
    radius = np.linalg.norm(corners - centroid[:, None], axis=2).max(axis=1)
    _, start = cKDTree(centroid).query(points)
    return _nearest_scan(points, np.ascontiguousarray(B), np.ascontiguousarray(E0),
                         np.ascontiguousarray(E1), centroid, radius, start.astype(np.int64))


def points_mesh_sq_dist(points, mesh):
    """Nearest-face squared distance for each row of ``points``.

    Degenerate faces take part through the segment fallback of
    :func:`closest_params`; at least one face must be non-degenerate.

    Returns
    -------
    sq, face_idx, s, t : arrays of length ``len(points)``
    """
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    if mesh.n_faces == 0 or not _valid_faces(mesh).any():
        raise ZeroAreaError("mesh has no non-degenerate face")
    B, E0, E1 = _triangle_frames(mesh)
    if mesh.n_faces <= BRUTE_FORCE_FACES:
        return _brute(points, B, E0, E1)
    return _pruned(points, B, E0, E1)


def point_mesh_sq_dist(P, mesh):
    sq, j, s, t = points_mesh_sq_dist(np.asarray(P, dtype=np.float64)[None], mesh)
    return float(sq[0]), int(j[0]), float(s[0]), float(t[0])


def closest_points(mesh, face_idx, s, t):
    B, E0, E1 = _triangle_frames(mesh)
    return B[face_idx] + s[:, None] * E0[face_idx] + t[:, None] * E1[face_idx]
